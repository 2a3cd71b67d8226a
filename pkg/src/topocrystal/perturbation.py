"""Perturbed graphs: added and removed edges, modified measure and potential.

The perturbed graph keeps the vertex set of its crystal.  Added edges come
from an :class:`~topocrystal.kernels.EdgeKernel`, removed edges are a finite
list of lifted crystal edges, and the measure and potential differ from the
periodic ones through :class:`Profile` objects.

Cell functions ``phi: Z^d -> C^n`` are stored as :class:`GridFunction`
keyed by ``Vertex(j, mu)``, i.e. ``phi_j(mu)``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from .crystal import TopologicalCrystal, lattice_zd, toblerone
from .graph import (Bounded, Graph, GridFunction, Measure, OrientedEdge, Vertex,
                    schrodinger_apply)
from .kernels import CompleteKernel, EdgeKernel, HubKernel

__all__ = [
    "Profile", "EdgePerturbation", "PerturbedGraph", "PerturbedMeasure", "PerturbedPotential",
    "partial_degree", "j_apply", "j_inverse", "l_plus_apply", "l_minus_apply", "z_apply",
    "t_entry", "k_entry", "shift", "verify_decomposition", "random_cell_function",
    "hub_example", "complete_example", "toblerone_example", "unperturbed",
]


def _cell_norm(cells) -> np.ndarray:
    return np.linalg.norm(np.asarray(cells, dtype=float), axis=-1)


@dataclass(frozen=True)
class Profile:
    """Deviation of a field from its periodic value.

    ``value = base + amplitude (1 + |cell|)^exponent`` unless an absolute
    value is listed in ``overrides``, keyed by ``(id, cell)`` where ``id`` is
    a site (vertex fields) or a quotient edge number (edge fields).
    """

    overrides: tuple = ()
    amplitude: float = 0.0
    exponent: float = -2.0

    def __post_init__(self):
        items = self.overrides.items() if isinstance(self.overrides, Mapping) else self.overrides
        norm = tuple(sorted(((int(i), tuple(int(c) for c in cell)), float(v))
                            for (i, cell), v in items))
        object.__setattr__(self, "overrides", norm)
        if self.amplitude != 0 and self.exponent > 0:
            raise ValueError("profile exponent must be nonpositive")

    @cached_property
    def table(self) -> dict:
        return dict(self.overrides)

    @property
    def trivial(self) -> bool:
        return not self.overrides and self.amplitude == 0

    def value(self, base: float, ident: int, cell: tuple[int, ...]) -> float:
        v = self.table.get((ident, tuple(cell)))
        if v is not None:
            return v
        if self.amplitude == 0:
            return base
        return base + self.amplitude * (1.0 + math.sqrt(sum(c * c for c in cell))) ** self.exponent

    def values(self, base: np.ndarray, ident: np.ndarray, cells: np.ndarray) -> np.ndarray:
        out = np.array(base, dtype=float, copy=True)
        if self.amplitude != 0:
            out += self.amplitude * (1.0 + _cell_norm(cells)) ** self.exponent
        for (i, cell), v in self.overrides:
            hit = (ident == i) & np.all(cells == np.array(cell), axis=-1)
            out[hit] = v
        return out

    def decay_envelope(self, radius: int) -> float:
        """Bound on ``|amplitude| (1 + |cell|)^exponent`` for ``|cell|_inf > radius``."""
        return abs(self.amplitude) * (2.0 + radius) ** self.exponent if self.amplitude else 0.0

    def override_cells(self) -> list[tuple[int, ...]]:
        return [cell for (_, cell), _ in self.overrides]


@dataclass(frozen=True)
class EdgePerturbation:
    """``added``: a kernel generating ``F+``; ``removed``: keys ``(q, cell)`` of ``F-``."""

    added: EdgeKernel | None = None
    removed: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "removed", frozenset(
            (int(q), tuple(int(c) for c in cell)) for q, cell in self.removed))

    @staticmethod
    def edge_between(crystal: TopologicalCrystal, x, y) -> tuple[int, tuple[int, ...]]:
        """Key of the crystal edge joining ``x`` and ``y``."""
        x, y = Vertex.of(*x), Vertex.of(*y)
        hits = [e.key for e in crystal.incident_edges(x) if e.terminus == y]
        if not hits:
            raise ValueError(f"no crystal edge joins {x} and {y}")
        return hits[0]

    @classmethod
    def removing(cls, crystal: TopologicalCrystal, pairs: Iterable, added: EdgeKernel | None = None):
        return cls(added, frozenset(cls.edge_between(crystal, x, y) for x, y in pairs))


class PerturbedMeasure(Measure):
    def __init__(self, pg: "PerturbedGraph"):
        self.pg = pg

    def vertex(self, x: Vertex) -> float:
        return self.pg.m_vertex(x)

    def edge(self, e: OrientedEdge) -> float:
        key = e.key
        if key[0] == "+":
            return self.pg.kernel.weight(e.origin, e.terminus)
        q, cell = key
        if key in self.pg.perturbation.removed:
            return 0.0
        return self.pg.m_edge(q, cell)


class PerturbedPotential:
    def __init__(self, pg: "PerturbedGraph"):
        self.pg = pg

    def __call__(self, x: Vertex) -> float:
        return self.pg.r_vertex(x)

    def envelope(self, radius: int) -> float:
        prof = self.pg.potential_profile
        base = max(abs(v) for v in self.pg.crystal.quotient.potential)
        far = [abs(v) for (_, cell), v in prof.overrides if max(map(abs, cell), default=0) > radius]
        return max([base + prof.decay_envelope(radius)] + far)


@dataclass(frozen=True)
class PerturbedGraph(Graph):
    """Crystal with edges added and removed and a modified measure and potential."""

    crystal: TopologicalCrystal
    perturbation: EdgePerturbation = field(default_factory=EdgePerturbation)
    vertex_profile: Profile = field(default_factory=Profile)
    edge_profile: Profile = field(default_factory=Profile)
    potential_profile: Profile = field(default_factory=Profile)

    def __post_init__(self):
        q = self.crystal.quotient
        kernel = self.perturbation.added
        if kernel is not None and kernel.crystal.quotient != q:
            raise ValueError("the edge kernel was built for another crystal")
        for num, cell in self.perturbation.removed:
            if not 0 <= num < len(q.edges) or len(cell) != q.d:
                raise ValueError(f"removed edge {(num, cell)} is not a crystal edge")
        vp = self.vertex_profile
        if min(q.vertex_weights) + min(0.0, vp.amplitude) <= 0:
            raise ValueError("vertex measure profile allows nonpositive values")
        if any(v <= 0 for v in vp.table.values()):
            raise ValueError("vertex measure overrides must be positive")
        ep = self.edge_profile
        if q.edges and min(e.weight for e in q.edges) + min(0.0, ep.amplitude) < 0:
            raise ValueError("edge measure profile allows negative values")
        if any(v < 0 for v in ep.table.values()):
            raise ValueError("edge measure overrides must be nonnegative")

    # -- fields --------------------------------------------------------
    @property
    def dimension(self) -> int:
        return self.crystal.dimension

    @property
    def n(self) -> int:
        return self.crystal.n

    @property
    def kernel(self) -> EdgeKernel | None:
        return self.perturbation.added

    @property
    def measure(self) -> PerturbedMeasure:
        return PerturbedMeasure(self)

    @property
    def potential(self) -> PerturbedPotential:
        return PerturbedPotential(self)

    def m0_vertex(self, x: Vertex) -> float:
        return self.crystal.quotient.vertex_weights[x.site]

    def m_vertex(self, x: Vertex) -> float:
        return self.vertex_profile.value(self.m0_vertex(x), x.site, x.cell)

    def m_edge(self, q: int, cell: tuple[int, ...]) -> float:
        """Measure of the lifted crystal edge ``(q, cell)``, ignoring removal."""
        return self.edge_profile.value(self.crystal.quotient.edges[q].weight, q, cell)

    def r_vertex(self, x: Vertex) -> float:
        return self.potential_profile.value(self.crystal.quotient.potential[x.site], x.site, x.cell)

    def m_vertices(self, site, cells) -> np.ndarray:
        cells = np.atleast_2d(cells)
        site = np.broadcast_to(np.asarray(site), (len(cells),))
        base = np.asarray(self.crystal.quotient.vertex_weights)[site]
        return self.vertex_profile.values(base, site, cells)

    def m_edges(self, number, cells) -> np.ndarray:
        cells = np.atleast_2d(cells)
        base = np.array([e.weight for e in self.crystal.quotient.edges])[number]
        return self.edge_profile.values(base, number, cells)

    def r_vertices(self, site, cells) -> np.ndarray:
        cells = np.atleast_2d(cells)
        site = np.broadcast_to(np.asarray(site), (len(cells),))
        base = np.asarray(self.crystal.quotient.potential)[site]
        return self.potential_profile.values(base, site, cells)

    # -- graph interface -----------------------------------------------
    def has_infinite_star(self, x: Vertex) -> bool:
        return self.kernel is not None and self.kernel.is_infinite_star(x)

    def new_edges(self, x: Vertex, radius: int | None = None) -> list[OrientedEdge]:
        if self.kernel is None:
            return []
        sites, cells, _ = self.kernel.star(x, radius)
        out = []
        for s, c in zip(sites.tolist(), cells.tolist()):
            y = Vertex(s, tuple(c))
            out.append(OrientedEdge(x, y, self.kernel.edge_key(x, y)))
        return out

    def surviving_edges(self, x: Vertex) -> list[OrientedEdge]:
        removed = self.perturbation.removed
        return [e for e in self.crystal.incident_edges(x) if e.key not in removed]

    def incident_edges(self, x: Vertex, radius: int | None = None) -> list[OrientedEdge]:
        return self.surviving_edges(x) + self.new_edges(x, radius)

    def star_tail(self, x: Vertex, measure: Measure, radius: int) -> Bounded:
        return self.kernel.star_tail(x, radius) if self.kernel is not None else Bounded(0.0)

    def default_radius(self, x: Vertex) -> int:
        return self.kernel.star_radius if self.kernel is not None else 0

    def degree_bounds(self, measure: Measure, x: Vertex, radius: int | None = None) -> Bounded:
        if not isinstance(measure, PerturbedMeasure) or measure.pg is not self:
            return super().degree_bounds(measure, x, radius)
        old = math.fsum(measure.edge(e) for e in self.surviving_edges(x))
        new = self.kernel.star_sum(x, radius) if self.kernel is not None else Bounded(0.0)
        return (new + old).scaled(1.0 / self.m_vertex(x))

    def degree_envelope(self, measure: Measure, radius: int) -> float | None:
        if not isinstance(measure, PerturbedMeasure) or measure.pg is not self:
            return None
        q = self.crystal.quotient
        ep, vp = self.edge_profile, self.vertex_profile
        edge_max = {}
        for num, e in enumerate(q.edges):
            vals = [e.weight + max(0.0, ep.amplitude) * (2.0 + radius) ** ep.exponent]
            vals += [v for (i, _), v in ep.overrides if i == num]
            edge_max[num] = max(vals)
        m_min = min(q.vertex_weights) + min(0.0, vp.amplitude) * (2.0 + radius) ** vp.exponent
        m_min = min([m_min] + [v for v in vp.table.values()])
        per_site = [sum(edge_max[e.number] for e in q.edges_at(j)) for j in range(q.n)]
        env = max(per_site)
        if self.kernel is not None:
            k_env = self.kernel.degree_envelope(radius)
            if k_env is None:
                return None
            env += k_env
        return env / m_min

    def vertices_in_box(self, radius: int):
        return self.crystal.vertices_in_box(radius)

    def with_changes(self, **changes) -> "PerturbedGraph":
        return dataclasses.replace(self, **changes)

    def describe(self) -> dict:
        return {
            "kernel": self.kernel.describe() if self.kernel is not None else {"kind": "none"},
            "removed": len(self.perturbation.removed),
            "vertex_overrides": len(self.vertex_profile.overrides),
            "edge_overrides": len(self.edge_profile.overrides),
            "potential_overrides": len(self.potential_profile.overrides),
        }


def unperturbed(crystal: TopologicalCrystal) -> PerturbedGraph:
    return PerturbedGraph(crystal)


def hub_example(d: int = 1, alpha: float = -4.0, C: float = 1.0, **kw) -> PerturbedGraph:
    """``Z^d`` with the origin joined to every other vertex, ``w(0, y) = C |y|^alpha``."""
    crystal = lattice_zd(d)
    return PerturbedGraph(crystal, EdgePerturbation(HubKernel(crystal, C, alpha, 0, 0.0, **kw)))


def complete_example(d: int = 1, alpha: float = -4.0, C: float = 1.0, **kw) -> PerturbedGraph:
    """``Z^d`` with all pairs joined, ``w(x, y) = C (1 + |x|)^alpha (1 + |y|)^alpha``."""
    crystal = lattice_zd(d)
    return PerturbedGraph(crystal, EdgePerturbation(CompleteKernel(crystal, C, alpha, **kw)))


def toblerone_example(alpha: float = -4.0, C: float = 1.0, **kw) -> PerturbedGraph:
    """Prism chain with ``x_0`` joined to every vertex, ``w(x_0, k_mu) = C (1 + |mu|)^alpha``."""
    crystal = toblerone()
    return PerturbedGraph(crystal, EdgePerturbation(HubKernel(crystal, C, alpha, 0, 1.0, **kw)))


# -- operators on cell functions ----------------------------------------

def partial_degree(pg: PerturbedGraph, x: Vertex, radius: int | None = None) -> Bounded:
    """``deg_{F+}(x)``: measure of the added edges at ``x`` over ``m(x)``."""
    x = Vertex.of(*x)
    if pg.kernel is None:
        return Bounded(0.0)
    return pg.kernel.star_sum(x, radius).scaled(1.0 / pg.m_vertex(x))


def j_apply(pg: PerturbedGraph, f: GridFunction) -> GridFunction:
    """``(J f)(x) = (m0(x) / m(x))^(1/2) f(x)``."""
    return f.map_values(lambda x, c: math.sqrt(pg.m0_vertex(x) / pg.m_vertex(x)) * c)


def j_inverse(pg: PerturbedGraph, g: GridFunction) -> GridFunction:
    return g.map_values(lambda x, c: math.sqrt(pg.m_vertex(x) / pg.m0_vertex(x)) * c)


def _in_window(x: Vertex, window: int | None) -> bool:
    return window is None or all(abs(c) <= window for c in x.cell)


def _add(out: dict, x: Vertex, value: complex) -> None:
    out[x] = out.get(x, 0j) + value


def l_plus_apply(pg: PerturbedGraph, phi: GridFunction, window: int | None = None) -> GridFunction:
    """Hopping along added edges minus ``deg_{F+}`` times ``phi``.

    Values are exact on cells with ``|mu|_inf <= window``; a window is
    required once ``phi`` touches an infinite star.
    """
    kernel = pg.kernel
    if kernel is None:
        return GridFunction()
    if window is None and any(kernel.is_infinite_star(x) for x in phi):
        raise ValueError("support touches an infinite star: pass an evaluation window")
    out: dict[Vertex, complex] = {}
    for y, py in phi.items():
        if py == 0:
            continue
        m_y = pg.m_vertex(y)
        sites, cells, w = kernel.star(y, window)
        # edge y -> x read in reverse: x receives m(e) / (m(x) m(y))^(1/2) phi(y)
        for s, c, we in zip(sites.tolist(), cells.tolist(), w.tolist()):
            x = Vertex(s, tuple(c))
            if we != 0.0:
                _add(out, x, we / math.sqrt(pg.m_vertex(x) * m_y) * py)
        if _in_window(y, window):
            _add(out, y, -partial_degree(pg, y).estimate * py)
    return GridFunction(out)


def l_minus_apply(pg: PerturbedGraph, phi: GridFunction) -> GridFunction:
    """Analogue of :func:`l_plus_apply` over the removed edges, with ``m0`` edge weights."""
    q = pg.crystal.quotient
    out: dict[Vertex, complex] = {}
    for num, cell in sorted(pg.perturbation.removed):
        e = q.edges[num]
        a = Vertex(e.origin, cell)
        b = Vertex(e.terminus, tuple(c + h for c, h in zip(cell, e.index)))
        w0 = e.weight
        for x, y in ((a, b), (b, a)):
            m_x = pg.m_vertex(x)
            val = w0 / math.sqrt(m_x * pg.m_vertex(y)) * phi[y] - w0 / m_x * phi[x]
            if val != 0:
                _add(out, x, val)
    return GridFunction(out)


def shift(phi: GridFunction, nu) -> GridFunction:
    """``(S_nu phi)(mu) = phi(mu + nu)``."""
    return GridFunction({Vertex(x.site, tuple(c - v for c, v in zip(x.cell, nu))): val
                         for x, val in phi.items()})


def _m_lift(pg: PerturbedGraph, num: int, key_cell: tuple[int, ...]) -> float:
    # removed edges keep their periodic weight in the K and T terms
    if (num, key_cell) in pg.perturbation.removed:
        return pg.crystal.quotient.edges[num].weight
    return pg.m_edge(num, key_cell)


def _key_cell(e, mu) -> tuple[int, ...]:
    """Cell of the listed origin for the lift of ``e`` starting at cell ``mu``."""
    return tuple(int(a + b) for a, b in zip(mu, e.index)) if e.reversed else tuple(mu)


def t_entry(pg: PerturbedGraph, e, mu) -> float:
    """Diagonal entry of ``T(e)(mu)`` at the origin site of the oriented quotient edge ``e``."""
    q = pg.crystal.quotient
    x = Vertex(e.origin, tuple(mu))
    return (_m_lift(pg, e.number, _key_cell(e, mu)) / pg.m_vertex(x)
            - e.weight / q.vertex_weights[e.origin])


def k_entry(pg: PerturbedGraph, e, mu) -> float:
    """Entry ``(o(e), t(e))`` of ``K(e)(mu)``; the lift starts at cell ``mu - eta(e)``."""
    q = pg.crystal.quotient
    start = tuple(int(a - b) for a, b in zip(mu, e.index))
    m_o = pg.m_vertex(Vertex(e.origin, start))
    m_t = pg.m_vertex(Vertex(e.terminus, tuple(mu)))
    periodic = e.weight / math.sqrt(q.vertex_weights[e.origin] * q.vertex_weights[e.terminus])
    return _m_lift(pg, e.number, _key_cell(e, start)) / math.sqrt(m_o * m_t) - periodic


def z_apply(pg: PerturbedGraph, phi: GridFunction, window: int | None = None) -> GridFunction:
    """``sum_e (T(e) - S_eta(e) K(e)) phi + r_s phi - L+ phi + L- phi``.

    The sum runs over both orientations of every quotient edge.
    """
    out: dict[Vertex, complex] = {}
    for e in pg.crystal.quotient.oriented_edges():
        for y, py in phi.items():
            if py == 0:
                continue
            if y.site == e.origin:
                _add(out, y, t_entry(pg, e, y.cell) * py)
            if y.site == e.terminus:
                # (K phi)_j(mu) at mu = cell of y, then shifted back by eta
                kv = k_entry(pg, e, y.cell) * py
                x = Vertex(e.origin, tuple(int(a - b) for a, b in zip(y.cell, e.index)))
                _add(out, x, -kv)
    for x, px in phi.items():
        dr = pg.r_vertex(x) - pg.crystal.quotient.potential[x.site]
        if dr != 0:
            _add(out, x, dr * px)
    lp = l_plus_apply(pg, phi, window)
    lm = l_minus_apply(pg, phi)
    for x, v in lp.items():
        _add(out, x, -v)
    for x, v in lm.items():
        _add(out, x, v)
    return GridFunction({x: v for x, v in out.items() if _in_window(x, window)})


def random_cell_function(n: int, d: int, radius: int, rng: np.random.Generator) -> GridFunction:
    """Complex Gaussian values on every site of the box ``|mu|_inf <= radius``."""
    axis = np.arange(-radius, radius + 1)
    cells = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), -1).reshape(-1, d)
    vals = rng.standard_normal((len(cells), n)) + 1j * rng.standard_normal((len(cells), n))
    return GridFunction({Vertex(j, tuple(int(c) for c in cell)): vals[i, j]
                         for i, cell in enumerate(cells) for j in range(n)})


def reindexed_difference(pg: PerturbedGraph, phi: GridFunction, window: int) -> GridFunction:
    """``phi -> m0^(1/2) (J* H J - H0) f`` with ``f = m0^(-1/2) phi``, via graph-core."""
    crystal = pg.crystal
    f = phi.map_values(lambda x, c: c / math.sqrt(pg.m0_vertex(x)))
    hjf = schrodinger_apply(pg, pg.measure, pg.potential, j_apply(pg, f), window)
    h0f = schrodinger_apply(crystal, crystal.measure, crystal.potential, f, window)
    diff = j_inverse(pg, hjf) - h0f
    return diff.map_values(lambda x, c: math.sqrt(pg.m0_vertex(x)) * c).restrict(
        lambda x: _in_window(x, window))


def verify_decomposition(pg: PerturbedGraph, trials: int = 20, support_radius: int = 3,
                         window: int | None = None, seed: int = 0) -> float:
    """Largest ``||Z phi - reindex((J* H J - H0) f)||`` over random ``phi``.

    The right side never touches the decomposition operators: it applies
    both Schrodinger operators through the generic graph routines.
    """
    if window is None:
        window = support_radius + 2 * pg.crystal.quotient.max_index() + 4
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        phi = random_cell_function(pg.n, pg.dimension, support_radius, rng)
        lhs = z_apply(pg, phi, window)
        rhs = reindexed_difference(pg, phi, window)
        worst = max(worst, (lhs - rhs).l2())
    return worst
