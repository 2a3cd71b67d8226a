"""Rules generating the set of added edges together with their weights.

A kernel never materialises the full (possibly infinite) edge set.  It
enumerates the edges of a vertex inside a box, bounds what lies outside the
box, and offers vectorised sums for the quantities the decay checks need.

Shell counting uses ``|S_r| = (2r+1)^d - (2r-1)^d <= M r^(d-1)`` with
``M = 2d 3^(d-1)``, which gives the integral tail bounds below.
"""
from __future__ import annotations

import math
import warnings
from functools import cached_property

import numpy as np
from scipy import integrate, special

from .crystal import TopologicalCrystal
from .graph import Bounded, Vertex

__all__ = ["EdgeKernel", "HubKernel", "CompleteKernel", "TableKernel",
           "shell_constant", "power_tail", "default_star_radius"]


def shell_constant(d: int) -> float:
    return 2.0 * d * 3.0 ** (d - 1)


def default_star_radius(d: int) -> int:
    return {1: 1 << 16, 2: 512, 3: 48}.get(d, 16)


def box_cells(d: int, radius: int) -> np.ndarray:
    axis = np.arange(-radius, radius + 1)
    return np.stack(np.meshgrid(*([axis] * d), indexing="ij"), -1).reshape(-1, d)


def bracket(cells: np.ndarray) -> np.ndarray:
    """``<mu> = (1 + |mu|^2)^(1/2)``."""
    return np.sqrt(1.0 + np.sum(np.asarray(cells, float) ** 2, axis=-1))


def _tail_integral(d: int, R: int, alpha: float, shift: float, power: float) -> float:
    """Continuum approximation of the lattice tail outside the box of radius ``R``."""
    def radial(r):
        return (shift + r) ** alpha * (1 + r * r) ** (power / 2)

    if d == 1:
        # midpoint rule: each lattice point owns a unit interval
        return 2 * integrate.quad(radial, R + 0.5, np.inf, limit=200, epsabs=0.0, epsrel=1e-10)[0]
    # (2R+1)^d cells replaced by a ball of equal volume
    unit_ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    r_eff = ((2 * R + 1) ** d / unit_ball) ** (1.0 / d)
    area = d * unit_ball
    return integrate.quad(lambda r: area * r ** (d - 1) * radial(r), r_eff, np.inf,
                          limit=200, epsabs=0.0, epsrel=1e-10)[0]


def power_tail(d: int, radius: int, alpha: float, shift: float, power: float = 0.0):
    """Bounds and estimate of ``sum_{|mu|_inf > radius} (shift + |mu|)^alpha <mu>^power``.

    Returns ``(lo, hi, estimate)``; all three are ``inf`` when the series
    diverges.
    """
    beta = alpha + power
    if beta + d >= 0:
        return math.inf, math.inf, math.inf
    R = max(int(radius), 1)
    decay = -(beta + d)
    c_up = 2.0 ** (power / 2) if power > 0 else 1.0
    hi = c_up * shell_constant(d) * R ** (beta + d) / decay
    c_lo = (shift + math.sqrt(d)) ** alpha * (1.0 if power >= 0 else (1.0 + d) ** (power / 2))
    lo = c_lo * 2 * d * (R + 1) ** (beta + d) / decay
    with warnings.catch_warnings():
        # tails near 1e-15 trip the roundoff detector; the bounds certify the value
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        est = _tail_integral(d, R, alpha, shift, power)
    if radius < 1:
        # the bounds above start after the shell r = 1; add it exactly
        ring = box_cells(d, 1)
        ring = ring[np.abs(ring).max(axis=1) == 1]
        first = float(np.sum((shift + np.linalg.norm(ring, axis=1)) ** alpha * bracket(ring) ** power))
        lo, hi, est = lo + first, hi + first, est + first
    return lo, hi, min(max(est, lo), hi)


class EdgeKernel:
    """Base class for added-edge rules on a crystal.

    Subclasses define :meth:`weight` and the star enumeration; the default
    vectorised sums loop over stars and are overridden where a closed form
    exists.
    """

    kind = "kernel"

    def __init__(self, crystal: TopologicalCrystal, star_radius: int | None = None):
        self.crystal = crystal
        self.d = crystal.dimension
        self.n = crystal.n
        self.star_radius = default_star_radius(self.d) if star_radius is None else star_radius

    # -- enumeration ---------------------------------------------------
    def weight(self, x: Vertex, y: Vertex) -> float:
        raise NotImplementedError

    def is_infinite_star(self, x: Vertex) -> bool:
        return False

    def star(self, x: Vertex, radius: int | None = None):
        """Termini and weights of added edges at ``x`` inside ``|cell|_inf <= radius``.

        Returns ``(sites, cells, weights)`` arrays.
        """
        raise NotImplementedError

    def star_tail(self, x: Vertex, radius: int, power: float = 0.0) -> Bounded:
        """``sum w(x, y) <cell y>^power`` over termini outside the box."""
        raise NotImplementedError

    def star_sum(self, x: Vertex, radius: int | None = None, power: float = 0.0) -> Bounded:
        radius = self.star_radius if radius is None else radius
        sites, cells, w = self.star(x, radius)
        part = float(np.sum(w * bracket(cells) ** power)) if len(w) else 0.0
        return self.star_tail(x, radius, power) + part

    def edge_key(self, x: Vertex, y: Vertex):
        return ("+",) + tuple(sorted((x, y)))

    # -- vectorised sums -----------------------------------------------
    def raw_degrees(self, site: int, cells: np.ndarray) -> np.ndarray:
        """Estimates of ``sum_y w(x, y)`` for ``x = (site, cell)``."""
        return np.array([self.star_sum(Vertex(site, tuple(int(v) for v in c))).estimate
                         for c in np.atleast_2d(cells)])

    def raw_degree_bounds(self, site: int, cells: np.ndarray) -> np.ndarray:
        return np.array([self.star_sum(Vertex(site, tuple(int(v) for v in c))).upper
                         for c in np.atleast_2d(cells)])

    def shell_sums(self, site: int, cells: np.ndarray, lo: float, hi: float) -> np.ndarray:
        """``sum w(x, y)`` over termini with ``lo <= |cell y| <= hi`` (Euclidean)."""
        out = np.zeros(len(cells))
        r = int(math.ceil(hi))
        for i, c in enumerate(np.atleast_2d(cells)):
            _, tc, w = self.star(Vertex(site, tuple(int(v) for v in c)), r)
            dist = np.linalg.norm(tc, axis=1) if len(w) else np.zeros(0)
            out[i] = np.sum(w[(dist >= lo) & (dist <= hi)])
        return out

    def star_moments(self, site: int, cells: np.ndarray, power: float, radius: int) -> np.ndarray:
        """Partial sums of ``w(x, y) <cell y>^power`` with ``|cell y|_inf <= radius``."""
        out = np.zeros(len(cells))
        for i, c in enumerate(np.atleast_2d(cells)):
            _, tc, w = self.star(Vertex(site, tuple(int(v) for v in c)), radius)
            out[i] = np.sum(w * bracket(tc) ** power) if len(w) else 0.0
        return out

    def candidate_vertices(self) -> list[Vertex]:
        """Vertices that must be inspected in every supremum (hubs, table entries)."""
        return []

    def degree_envelope(self, radius: int) -> float | None:
        """Upper bound of ``sum_y w(x, y)`` for ``|cell x|_inf > radius``."""
        return None

    def box_edges(self, radius: int):
        """Each added edge with both ends in the box, listed once.

        Returns ``(o_site, o_cells, t_site, t_cells, weights)``.
        """
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


class HubKernel(EdgeKernel):
    """One vertex at cell 0 joined to every other vertex.

    ``w(hub, y) = C (shift + |cell y|)^alpha``.  With ``shift = 0`` and
    ``n = 1`` this is the ``Z^d`` hub; ``shift = 1`` covers sites sharing
    the hub's cell.
    """

    kind = "hub"

    def __init__(self, crystal, C: float = 1.0, alpha: float = -4.0, hub_site: int = 0,
                 shift: float = 0.0, star_radius: int | None = None):
        super().__init__(crystal, star_radius)
        if alpha >= 0:
            raise ValueError("alpha must be negative (the hub degree is unbounded otherwise)")
        if alpha >= -self.d:
            raise ValueError(f"alpha must be below -d = {-self.d} for a bounded hub degree")
        if C < 0:
            raise ValueError("C must be nonnegative")
        if shift <= 0 and self.n > 1:
            raise ValueError("shift must be positive when several sites share the hub cell")
        self.C, self.alpha, self.shift = float(C), float(alpha), float(shift)
        self.hub = Vertex(int(hub_site), (0,) * self.d)

    def describe(self):
        return {"kind": self.kind, "C": self.C, "alpha": self.alpha, "shift": self.shift,
                "hub_site": self.hub.site}

    def _w(self, cells: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(np.asarray(cells, float), axis=-1)
        with np.errstate(divide="ignore"):
            return self.C * (self.shift + r) ** self.alpha

    def weight(self, x, y):
        if x == y or self.hub not in (x, y):
            return 0.0
        other = y if x == self.hub else x
        return float(self._w(np.array(other.cell)))

    def is_infinite_star(self, x):
        return x == self.hub

    def star(self, x, radius=None):
        if x == self.hub:
            if radius is None:
                raise ValueError("the hub has infinitely many edges: give a radius")
            cells = box_cells(self.d, radius)
            sites = np.repeat(np.arange(self.n), len(cells))
            cells = np.tile(cells, (self.n, 1))
            keep = ~((sites == self.hub.site) & ~np.any(cells, axis=1))
            sites, cells = sites[keep], cells[keep]
            return sites, cells, self._w(cells)
        if radius is not None and radius < 0:
            return np.zeros(0, int), np.zeros((0, self.d), int), np.zeros(0)
        return (np.array([self.hub.site]), np.zeros((1, self.d), dtype=np.int64),
                np.array([self.weight(x, self.hub)]))

    def star_tail(self, x, radius, power=0.0):
        if x != self.hub:
            return Bounded(0.0)
        lo, hi, est = power_tail(self.d, radius, self.alpha, self.shift, power)
        f = self.n * self.C
        return Bounded(0.0, f * lo, f * hi, f * est)

    @cached_property
    def hub_degree(self) -> Bounded:
        return self.star_sum(self.hub)

    def raw_degrees(self, site, cells):
        cells = np.atleast_2d(cells)
        out = self._w(cells)
        if site == self.hub.site:
            at_hub = ~np.any(cells, axis=1)
            out[at_hub] = self.hub_degree.estimate
        return out

    def raw_degree_bounds(self, site, cells):
        cells = np.atleast_2d(cells)
        out = self._w(cells)
        if site == self.hub.site:
            out[~np.any(cells, axis=1)] = self.hub_degree.upper
        return out

    def shell_sums(self, site, cells, lo, hi):
        cells = np.atleast_2d(cells)
        # only the hub reaches cells away from 0
        out = self._w(cells) if lo <= 0 <= hi else np.zeros(len(cells))
        if site == self.hub.site:
            at_hub = ~np.any(cells, axis=1)
            if at_hub.any():
                _, tc, w = self.star(self.hub, int(math.ceil(hi)))
                dist = np.linalg.norm(tc, axis=1)
                out[at_hub] = np.sum(w[(dist >= lo) & (dist <= hi)])
        return out

    def star_moments(self, site, cells, power, radius):
        cells = np.atleast_2d(cells)
        out = self._w(cells)
        if site == self.hub.site:
            at_hub = ~np.any(cells, axis=1)
            if at_hub.any():
                _, tc, w = self.star(self.hub, radius)
                out[at_hub] = np.sum(w * bracket(tc) ** power)
        return out

    def candidate_vertices(self):
        return [self.hub]

    def degree_envelope(self, radius):
        return self.C * (self.shift + radius + 1) ** self.alpha

    def box_edges(self, radius):
        sites, cells, w = self.star(self.hub, radius)
        k = len(w)
        return (np.full(k, self.hub.site), np.zeros((k, self.d), dtype=np.int64), sites, cells, w)


class CompleteKernel(EdgeKernel):
    """Every pair of distinct vertices joined, ``w(x, y) = C a(x) a(y)``.

    ``a(x) = (1 + |cell x|)^alpha``.
    """

    kind = "complete"

    def __init__(self, crystal, C: float = 1.0, alpha: float = -4.0,
                 star_radius: int | None = None):
        super().__init__(crystal, star_radius)
        if alpha >= 0:
            raise ValueError("alpha must be negative (the degree is unbounded otherwise)")
        if alpha >= -self.d:
            raise ValueError(f"alpha must be below -d = {-self.d} for bounded degrees")
        if C < 0:
            raise ValueError("C must be nonnegative")
        self.C, self.alpha = float(C), float(alpha)

    def describe(self):
        return {"kind": self.kind, "C": self.C, "alpha": self.alpha}

    def _a(self, cells):
        return (1.0 + np.linalg.norm(np.asarray(cells, float), axis=-1)) ** self.alpha

    def weight(self, x, y):
        if x == y:
            return 0.0
        return float(self.C * self._a(np.array(x.cell)) * self._a(np.array(y.cell)))

    def is_infinite_star(self, x):
        return True

    def star(self, x, radius=None):
        if radius is None:
            raise ValueError("every vertex has infinitely many edges: give a radius")
        cells = box_cells(self.d, radius)
        sites = np.repeat(np.arange(self.n), len(cells))
        cells = np.tile(cells, (self.n, 1))
        keep = ~((sites == x.site) & np.all(cells == np.array(x.cell), axis=1))
        sites, cells = sites[keep], cells[keep]
        return sites, cells, self.C * self._a(np.array(x.cell)) * self._a(cells)

    def _tail(self, radius, power):
        lo, hi, est = power_tail(self.d, radius, self.alpha, 1.0, power)
        return self.n * lo, self.n * hi, self.n * est

    def star_tail(self, x, radius, power=0.0):
        lo, hi, est = self._tail(radius, power)
        f = self.C * float(self._a(np.array(x.cell)))
        if max(abs(c) for c in x.cell) > radius:
            lo = max(0.0, lo - float(self._a(np.array(x.cell)) * bracket(np.array(x.cell)) ** power))
        return Bounded(0.0, f * lo, f * hi, f * min(max(est, lo), hi))

    @cached_property
    def total_mass(self) -> Bounded:
        """``sum over all vertices of a(y)``."""
        cells = box_cells(self.d, self.star_radius)
        part = self.n * float(np.sum(self._a(cells)))
        lo, hi, est = self._tail(self.star_radius, 0.0)
        return Bounded(part, lo, hi, est)

    def raw_degrees(self, site, cells):
        a = self._a(np.atleast_2d(cells))
        return self.C * a * (self.total_mass.estimate - a)

    def raw_degree_bounds(self, site, cells):
        a = self._a(np.atleast_2d(cells))
        return self.C * a * (self.total_mass.upper - a)

    def shell_sums(self, site, cells, lo, hi):
        cells = np.atleast_2d(cells)
        grid = box_cells(self.d, int(math.ceil(hi)))
        dist = np.linalg.norm(grid, axis=1)
        shell = self.n * np.sum(self._a(grid[(dist >= lo) & (dist <= hi)]))
        a = self._a(cells)
        dx = np.linalg.norm(cells, axis=1)
        self_term = np.where((dx >= lo) & (dx <= hi), a, 0.0)
        return self.C * a * (shell - self_term)

    def star_moments(self, site, cells, power, radius):
        cells = np.atleast_2d(cells)
        grid = box_cells(self.d, radius)
        total = self.n * np.sum(self._a(grid) * bracket(grid) ** power)
        a = self._a(cells)
        inside = np.abs(cells).max(axis=1) <= radius
        self_term = np.where(inside, a * bracket(cells) ** power, 0.0)
        return self.C * a * (total - self_term)

    def candidate_vertices(self):
        return [Vertex(j, (0,) * self.d) for j in range(self.n)]

    def degree_envelope(self, radius):
        return self.C * (2.0 + radius) ** self.alpha * self.total_mass.upper

    def box_edges(self, radius):
        cells = box_cells(self.d, radius)
        sites = np.repeat(np.arange(self.n), len(cells))
        cells = np.tile(cells, (self.n, 1))
        i, j = np.triu_indices(len(sites), k=1)
        a = self._a(cells)
        return sites[i], cells[i], sites[j], cells[j], self.C * a[i] * a[j]


class TableKernel(EdgeKernel):
    """A finite explicit list of added edges ``(x, y, weight)``."""

    kind = "table"

    def __init__(self, crystal, edges, star_radius: int | None = None):
        super().__init__(crystal, star_radius)
        table: dict[tuple, float] = {}
        for x, y, w in edges:
            x, y = Vertex.of(*x), Vertex.of(*y)
            if x == y:
                raise ValueError(f"added edge at {x} is a loop")
            if w < 0:
                raise ValueError("added edges need nonnegative weights")
            key = tuple(sorted((x, y)))
            if key in table:
                raise ValueError(f"added edge {key} listed twice")
            table[key] = float(w)
        self.table = table
        self._stars: dict[Vertex, list[tuple[Vertex, float]]] = {}
        for (x, y), w in table.items():
            self._stars.setdefault(x, []).append((y, w))
            self._stars.setdefault(y, []).append((x, w))

    def describe(self):
        return {"kind": self.kind, "edges": len(self.table)}

    def weight(self, x, y):
        return self.table.get(tuple(sorted((x, y))), 0.0)

    def star(self, x, radius=None):
        items = [(y, w) for y, w in self._stars.get(x, [])
                 if radius is None or max(abs(c) for c in y.cell) <= radius]
        if not items:
            return np.zeros(0, int), np.zeros((0, self.d), np.int64), np.zeros(0)
        return (np.array([y.site for y, _ in items]),
                np.array([y.cell for y, _ in items], dtype=np.int64).reshape(-1, self.d),
                np.array([w for _, w in items]))

    def star_tail(self, x, radius, power=0.0):
        rest = [w * float(bracket(np.array(y.cell)) ** power) for y, w in self._stars.get(x, [])
                if max(abs(c) for c in y.cell) > radius]
        return Bounded(0.0, sum(rest), sum(rest))

    def raw_degrees(self, site, cells):
        return np.array([sum(w for _, w in self._stars.get(Vertex(site, tuple(int(v) for v in c)), []))
                         for c in np.atleast_2d(cells)])

    raw_degree_bounds = raw_degrees

    def candidate_vertices(self):
        return sorted(self._stars)

    def degree_envelope(self, radius):
        vals = [sum(w for _, w in star) for x, star in self._stars.items()
                if max(abs(c) for c in x.cell) > radius]
        return max(vals, default=0.0)

    def box_edges(self, radius):
        rows = [(x, y, w) for (x, y), w in self.table.items()
                if max(abs(c) for c in x.cell + y.cell) <= radius]
        if not rows:
            z = np.zeros(0, int)
            e = np.zeros((0, self.d), np.int64)
            return z, e, z, e, np.zeros(0)
        return (np.array([x.site for x, _, _ in rows]),
                np.array([x.cell for x, _, _ in rows], np.int64).reshape(-1, self.d),
                np.array([y.site for _, y, _ in rows]),
                np.array([y.cell for _, y, _ in rows], np.int64).reshape(-1, self.d),
                np.array([w for _, _, w in rows]))


def hurwitz_hub_degree(C: float, alpha: float, shift: float = 0.0) -> float:
    """Closed form of the one-dimensional hub degree, ``2 C zeta(-alpha, shift + 1)``."""
    return 2.0 * C * float(special.zeta(-alpha, shift + 1.0))
