"""Weighted graphs, measures and the discrete Schrodinger operator.

Vertices of every graph in this package are pairs ``(site, cell)`` where
``cell`` is an integer vector of the covering group ``Z^d``.  Operators act
on finitely supported functions (:class:`GridFunction`) and return the
image evaluated on the vertices it can reach.

Degrees of vertices with infinitely many incident edges are never truncated
silently: they are returned as a :class:`Bounded` value carrying a certified
interval for the neglected tail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Iterator, Mapping, NamedTuple

import numpy as np

__all__ = [
    "Vertex", "OrientedEdge", "Bounded", "GridFunction", "Graph", "Measure",
    "UnboundedTailError", "degree", "laplacian_apply", "schrodinger_apply",
    "inner_product", "norm", "operator_norm_bound",
]


class UnboundedTailError(ValueError):
    """A sum over an infinite star was requested but no tail bound exists."""


class Vertex(NamedTuple):
    site: int
    cell: tuple[int, ...]

    @classmethod
    def of(cls, site: int, cell: Iterable[int] | int) -> "Vertex":
        if isinstance(cell, (int, np.integer)):
            cell = (int(cell),)
        return cls(int(site), tuple(int(c) for c in cell))


@dataclass(frozen=True)
class OrientedEdge:
    origin: Vertex
    terminus: Vertex
    key: Hashable

    def reversal(self) -> "OrientedEdge":
        return OrientedEdge(self.terminus, self.origin, self.key)


@dataclass(frozen=True)
class Bounded:
    """A partial sum together with a certified interval for its tail.

    The exact value lies in ``[lower, upper]``.  ``estimate`` is the value
    used when a single number is needed; it always lies in the interval.
    """

    partial: float
    tail_lo: float = 0.0
    tail_hi: float = 0.0
    tail_estimate: float | None = None

    @property
    def lower(self) -> float:
        return self.partial + self.tail_lo

    @property
    def upper(self) -> float:
        return self.partial + self.tail_hi

    @property
    def width(self) -> float:
        return self.tail_hi - self.tail_lo

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.tail_hi)

    @property
    def estimate(self) -> float:
        if not self.bounded:
            raise UnboundedTailError("sum has no certified tail bound")
        if self.tail_estimate is None:
            return self.partial + 0.5 * (self.tail_lo + self.tail_hi)
        t = min(max(self.tail_estimate, self.tail_lo), self.tail_hi)
        return self.partial + t

    def __add__(self, other: "Bounded | float") -> "Bounded":
        if not isinstance(other, Bounded):
            return Bounded(self.partial + float(other), self.tail_lo, self.tail_hi,
                           self.tail_estimate)
        est = None
        if self.tail_estimate is not None or other.tail_estimate is not None:
            est = (self.estimate - self.partial) + (other.estimate - other.partial)
        return Bounded(self.partial + other.partial, self.tail_lo + other.tail_lo,
                       self.tail_hi + other.tail_hi, est)

    __radd__ = __add__

    def scaled(self, factor: float) -> "Bounded":
        if factor < 0:
            raise ValueError("only nonnegative scaling keeps the interval ordered")
        est = None if self.tail_estimate is None else factor * self.tail_estimate
        hi = 0.0 if factor == 0 else self.tail_hi * factor
        return Bounded(self.partial * factor, self.tail_lo * factor, hi, est)


class GridFunction(Mapping[Vertex, complex]):
    """Finitely supported complex function on the vertices of a graph.

    Values off the stored support are zero.  Instances are immutable; the
    arithmetic operators return new functions.
    """

    __slots__ = ("_values",)

    def __init__(self, values: Mapping[Vertex, complex] | Iterable[tuple[Vertex, complex]] = ()):
        items = values.items() if isinstance(values, Mapping) else values
        self._values = {Vertex(int(v[0]), tuple(v[1])): complex(c) for v, c in items}

    @classmethod
    def delta(cls, x: Vertex, value: complex = 1.0) -> "GridFunction":
        return cls({x: value})

    def __getitem__(self, x: Vertex) -> complex:
        return self._values.get(x, 0j)

    def __iter__(self) -> Iterator[Vertex]:
        return iter(self._values)

    def __len__(self) -> int:
        return len(self._values)

    @property
    def support(self) -> frozenset[Vertex]:
        """Vertices with a nonzero value."""
        return frozenset(x for x, c in self._values.items() if c != 0)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        out = dict(self._values)
        for x, c in other.items():
            out[x] = out.get(x, 0j) + c
        return GridFunction(out)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return self + other * -1.0

    def __mul__(self, scalar: complex) -> "GridFunction":
        return GridFunction({x: c * scalar for x, c in self._values.items()})

    __rmul__ = __mul__

    def __neg__(self) -> "GridFunction":
        return self * -1.0

    def map_values(self, fn) -> "GridFunction":
        """Pointwise ``x, f(x) -> g(x)``."""
        return GridFunction({x: fn(x, c) for x, c in self._values.items()})

    def restrict(self, keep) -> "GridFunction":
        return GridFunction({x: c for x, c in self._values.items() if keep(x)})

    def max_abs(self) -> float:
        return max((abs(c) for c in self._values.values()), default=0.0)

    def l2(self) -> float:
        """Unweighted Euclidean norm of the stored values."""
        return math.sqrt(sum(abs(c) ** 2 for c in self._values.values()))

    def __repr__(self) -> str:
        return f"GridFunction({len(self)} vertices)"


class Measure:
    """Vertex weights ``m(x) > 0`` and edge weights ``m(e) >= 0``."""

    def vertex(self, x: Vertex) -> float:
        raise NotImplementedError

    def edge(self, e: OrientedEdge) -> float:
        raise NotImplementedError


class Graph:
    """Locally summable graph whose vertices are ``(site, cell)`` pairs.

    Subclasses implement :meth:`incident_edges`.  Vertices with infinitely
    many incident edges (infinite stars) also implement :meth:`star_tail`,
    which bounds the measure carried by the edges that a truncated
    enumeration leaves out.
    """

    dimension: int

    def incident_edges(self, x: Vertex, radius: int | None = None) -> list[OrientedEdge]:
        """Oriented edges with origin ``x``.

        For an infinite star only edges whose terminus cell lies within
        ``radius`` (sup norm) are listed; ``radius=None`` is then an error.
        """
        raise NotImplementedError

    def has_infinite_star(self, x: Vertex) -> bool:
        return False

    def star_tail(self, x: Vertex, measure: Measure, radius: int) -> Bounded:
        """Edge measure beyond ``radius`` as ``Bounded(0, lo, hi, estimate)``."""
        if self.has_infinite_star(x):
            return Bounded(0.0, 0.0, math.inf)
        return Bounded(0.0)

    def default_radius(self, x: Vertex) -> int:
        return 4096

    def degree_bounds(self, measure: Measure, x: Vertex, radius: int | None = None) -> Bounded:
        infinite = self.has_infinite_star(x)
        if infinite and radius is None:
            radius = self.default_radius(x)
        total = math.fsum(measure.edge(e) for e in self.incident_edges(x, radius))
        tail = self.star_tail(x, measure, radius) if infinite else Bounded(0.0)
        return (tail + total).scaled(1.0 / measure.vertex(x))

    def degree_envelope(self, measure: Measure, radius: int) -> float | None:
        """Upper bound of ``deg_m`` on vertices with ``|cell|_inf > radius``.

        ``None`` means no bound is known.
        """
        return None

    def vertices_in_box(self, radius: int) -> Iterator[Vertex]:
        raise NotImplementedError


def degree(graph: Graph, measure: Measure, x: Vertex, radius: int | None = None) -> Bounded:
    """``deg_m(x) = sum over edges e leaving x of m(e) / m(x)``.

    Returns a :class:`Bounded`; for an infinite star without a tail rule the
    upper end is ``inf`` and ``.bounded`` is false.
    """
    return graph.degree_bounds(measure, Vertex.of(*x), radius)


def _check_window(graph: Graph, f: GridFunction, window: int | None) -> None:
    if window is None and any(graph.has_infinite_star(x) for x in f):
        raise ValueError("support touches an infinite star: pass an evaluation window")


def _in_window(x: Vertex, window: int | None) -> bool:
    return window is None or all(abs(c) <= window for c in x.cell)


def laplacian_apply(graph: Graph, measure: Measure, f: GridFunction,
                    window: int | None = None) -> GridFunction:
    """Apply ``Delta(X, m)`` to a finitely supported ``f``.

    The result is exact at every returned vertex.  It covers the one-edge
    neighbourhood of ``supp f``; when that neighbourhood is infinite it is
    cut to cells with ``|cell|_inf <= window``.
    """
    _check_window(graph, f, window)
    out: dict[Vertex, complex] = {}
    for x, fx in f.items():
        if fx == 0:
            continue
        radius = window if graph.has_infinite_star(x) else None
        for e in graph.incident_edges(x, radius):
            y = e.terminus
            if not _in_window(y, window):
                continue
            w = measure.edge(e)
            if w == 0.0:
                continue
            # reversed edge y -> x carries the same weight
            out[y] = out.get(y, 0j) + w / measure.vertex(y) * fx
    for x, fx in f.items():
        if _in_window(x, window):
            d = degree(graph, measure, x)
            out[x] = out.get(x, 0j) - d.estimate * fx
    return GridFunction(out)


def schrodinger_apply(graph: Graph, measure: Measure, potential, f: GridFunction,
                      window: int | None = None) -> GridFunction:
    """``H f = -Delta f + R f``; ``potential`` is a callable ``Vertex -> float``."""
    lap = laplacian_apply(graph, measure, f, window)
    out = {x: -c for x, c in lap.items()}
    for x, fx in f.items():
        if _in_window(x, window):
            out[x] = out.get(x, 0j) + potential(x) * fx
    return GridFunction(out)


def inner_product(measure: Measure, f: GridFunction, g: GridFunction) -> complex:
    """``<f, g> = sum m(x) f(x) conj(g(x))``."""
    small, other = (f, g) if len(f) <= len(g) else (g, f)
    terms = []
    for x in small:
        if x in other:
            terms.append(measure.vertex(x) * f[x] * g[x].conjugate())
    return complex(math.fsum(t.real for t in terms), math.fsum(t.imag for t in terms))


def norm(measure: Measure, f: GridFunction) -> float:
    return math.sqrt(math.fsum(measure.vertex(x) * abs(c) ** 2 for x, c in f.items()))


def operator_norm_bound(graph: Graph, measure: Measure, potential, radius: int = 16) -> float:
    """Certified upper bound ``2 sup deg_m + sup |R|`` for ``||H||``.

    The supremum is taken over the box ``|cell|_inf <= radius`` and
    completed outside it by the envelopes the graph and potential declare.
    Raises :class:`UnboundedTailError` if either envelope is unknown.
    """
    deg_sup = 0.0
    pot_sup = 0.0
    for x in graph.vertices_in_box(radius):
        d = degree(graph, measure, x)
        if not d.bounded:
            raise UnboundedTailError(f"degree at {x} has no tail bound")
        deg_sup = max(deg_sup, d.upper)
        pot_sup = max(pot_sup, abs(potential(x)))
    env = graph.degree_envelope(measure, radius)
    pot_env = getattr(potential, "envelope", None)
    pot_env = pot_env(radius) if pot_env is not None else None
    if env is None or pot_env is None:
        raise UnboundedTailError("no envelope known outside the inspected box")
    return 2.0 * max(deg_sup, env) + max(pot_sup, pot_env)
