"""Topological crystals generated from a finite quotient graph.

A crystal is stored intensionally: the quotient lists ``n`` sites and edges
``(j, l, eta, weight)``; the infinite graph has vertices ``(j, mu)`` for
``mu`` in ``Z^d`` and an edge from ``(j, mu)`` to ``(l, mu + eta)`` for every
quotient edge and every cell ``mu``.  Sites are numbered from 0.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .graph import Bounded, Graph, Measure, OrientedEdge, Vertex

__all__ = [
    "QuotientEdge", "QuotientGraph", "TopologicalCrystal", "PeriodicMeasure",
    "PeriodicPotential", "entire_part", "site", "edge_entire_part", "edge_index",
    "translate", "lattice_zd", "toblerone", "quotient_from_spec",
]


@dataclass(frozen=True)
class QuotientEdge:
    origin: int
    terminus: int
    index: tuple[int, ...]
    weight: float = 1.0


@dataclass(frozen=True)
class OrientedQuotientEdge:
    """One orientation of a quotient edge; ``number`` is its position in the list."""

    origin: int
    terminus: int
    index: np.ndarray
    weight: float
    number: int
    reversed: bool


@dataclass(frozen=True)
class QuotientGraph:
    """Finite quotient with integer edge indices, periodic weights and potential."""

    n: int
    d: int
    edges: tuple[QuotientEdge, ...]
    vertex_weights: tuple[float, ...] = ()
    potential: tuple[float, ...] = ()
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("a quotient needs n >= 1 sites and dimension d >= 1")
        if not self.vertex_weights:
            object.__setattr__(self, "vertex_weights", (1.0,) * self.n)
        if not self.potential:
            object.__setattr__(self, "potential", (0.0,) * self.n)
        if not self.names:
            object.__setattr__(self, "names", tuple(str(j) for j in range(self.n)))
        edges = tuple(QuotientEdge(int(e.origin), int(e.terminus),
                                   tuple(int(c) for c in e.index), float(e.weight))
                      for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if len(self.vertex_weights) != self.n or len(self.potential) != self.n:
            raise ValueError("vertex weights and potential need one value per site")
        if any(not w > 0 for w in self.vertex_weights):
            raise ValueError("vertex weights must be positive")
        seen = set()
        for e in edges:
            if not (0 <= e.origin < self.n and 0 <= e.terminus < self.n):
                raise ValueError(f"edge {e} refers to a missing site")
            if len(e.index) != self.d:
                raise ValueError(f"edge {e} has an index of the wrong dimension")
            if e.weight < 0:
                raise ValueError(f"edge {e} has a negative weight")
            if e.origin == e.terminus and not any(e.index):
                raise ValueError(f"edge {e} is a loop with zero index")
            rev = (e.terminus, e.origin, tuple(-c for c in e.index))
            fwd = (e.origin, e.terminus, e.index)
            if fwd in seen or rev in seen:
                raise ValueError(f"edge {e} is listed twice")
            seen.add(fwd)

    def oriented_edges(self) -> list[OrientedQuotientEdge]:
        """Both orientations of every listed edge."""
        out = []
        for q, e in enumerate(self.edges):
            eta = np.array(e.index, dtype=np.int64)
            out.append(OrientedQuotientEdge(e.origin, e.terminus, eta, e.weight, q, False))
            out.append(OrientedQuotientEdge(e.terminus, e.origin, -eta, e.weight, q, True))
        return out

    def edges_at(self, j: int) -> list[OrientedQuotientEdge]:
        return [e for e in self.oriented_edges() if e.origin == j]

    def degrees(self) -> np.ndarray:
        """``deg_{m0}`` of every site."""
        deg = np.zeros(self.n)
        for e in self.oriented_edges():
            deg[e.origin] += e.weight
        return deg / np.asarray(self.vertex_weights)

    def max_index(self) -> int:
        return max((max(abs(c) for c in e.index) for e in self.edges), default=0)


class PeriodicMeasure(Measure):
    def __init__(self, quotient: QuotientGraph):
        self.quotient = quotient

    def vertex(self, x: Vertex) -> float:
        return self.quotient.vertex_weights[x.site]

    def edge(self, e: OrientedEdge) -> float:
        return self.quotient.edges[e.key[0]].weight


class PeriodicPotential:
    def __init__(self, quotient: QuotientGraph):
        self.quotient = quotient

    def __call__(self, x: Vertex) -> float:
        return self.quotient.potential[x.site]

    def envelope(self, radius: int) -> float:
        return max(abs(v) for v in self.quotient.potential)


def entire_part(x: Vertex) -> tuple[int, ...]:
    return x.cell


def site(x: Vertex) -> int:
    return x.site


def edge_entire_part(e: OrientedEdge) -> tuple[int, ...]:
    return e.origin.cell


def edge_index(e: OrientedEdge) -> tuple[int, ...]:
    return tuple(t - o for t, o in zip(e.terminus.cell, e.origin.cell))


def translate(x: Vertex | OrientedEdge, shift: Sequence[int]):
    """Action of ``shift`` in ``Z^d`` on a vertex or an edge of a crystal."""
    if isinstance(x, OrientedEdge):
        q, cell = x.key
        return OrientedEdge(translate(x.origin, shift), translate(x.terminus, shift),
                            (q, tuple(c + s for c, s in zip(cell, shift))))
    return Vertex(x.site, tuple(c + s for c, s in zip(x.cell, shift)))


@dataclass(frozen=True)
class TopologicalCrystal(Graph):
    quotient: QuotientGraph
    _oriented: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_site = [[] for _ in range(self.quotient.n)]
        for e in self.quotient.oriented_edges():
            by_site[e.origin].append(e)
        object.__setattr__(self, "_oriented", tuple(tuple(s) for s in by_site))

    @property
    def dimension(self) -> int:
        return self.quotient.d

    @property
    def n(self) -> int:
        return self.quotient.n

    @property
    def measure(self) -> PeriodicMeasure:
        return PeriodicMeasure(self.quotient)

    @property
    def potential(self) -> PeriodicPotential:
        return PeriodicPotential(self.quotient)

    def incident_edges(self, x: Vertex, radius: int | None = None) -> list[OrientedEdge]:
        out = []
        mu = x.cell
        for e in self._oriented[x.site]:
            t_cell = tuple(int(a + b) for a, b in zip(mu, e.index))
            # key: quotient edge number and the cell of its listed origin
            key_cell = t_cell if e.reversed else mu
            out.append(OrientedEdge(x, Vertex(e.terminus, t_cell), (e.number, key_cell)))
        return out

    def degree_bounds(self, measure: Measure, x: Vertex, radius: int | None = None) -> Bounded:
        total = math.fsum(measure.edge(e) for e in self.incident_edges(x))
        return Bounded(total / measure.vertex(x))

    def degree_envelope(self, measure: Measure, radius: int) -> float | None:
        if isinstance(measure, PeriodicMeasure):
            return float(self.quotient.degrees().max())
        return None

    def vertices_in_box(self, radius: int) -> Iterator[Vertex]:
        rng = range(-radius, radius + 1)
        for cell in itertools.product(rng, repeat=self.dimension):
            for j in range(self.n):
                yield Vertex(j, cell)

    def box_edges(self, radius: int):
        """Unoriented lifted edges with both endpoints in the box.

        Returns arrays ``(o_site, o_cells, t_site, t_cells, number)`` listing
        each edge once, in its quotient orientation, with ``o_cells`` the
        cell of the listed origin.
        """
        d = self.dimension
        axis = np.arange(-radius, radius + 1)
        cells = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), -1).reshape(-1, d)
        o_site, o_cells, t_site, t_cells, number = [], [], [], [], []
        for q, e in enumerate(self.quotient.edges):
            eta = np.array(e.index)
            tc = cells + eta
            keep = np.all(np.abs(tc) <= radius, axis=1)
            o_cells.append(cells[keep])
            t_cells.append(tc[keep])
            k = int(keep.sum())
            o_site.append(np.full(k, e.origin))
            t_site.append(np.full(k, e.terminus))
            number.append(np.full(k, q))
        if not o_site:
            empty = np.zeros((0, d), dtype=np.int64)
            z = np.zeros(0, dtype=np.int64)
            return z, empty, z, empty, z
        return (np.concatenate(o_site), np.concatenate(o_cells), np.concatenate(t_site),
                np.concatenate(t_cells), np.concatenate(number))


def lattice_zd(d: int) -> TopologicalCrystal:
    """``Z^d`` as one site with ``d`` loops indexed by the standard basis."""
    if d < 1:
        raise ValueError("dimension must be at least 1")
    edges = tuple(QuotientEdge(0, 0, tuple(int(i == k) for i in range(d)), 1.0)
                  for k in range(d))
    return TopologicalCrystal(QuotientGraph(1, d, edges, names=("o",)))


def toblerone() -> TopologicalCrystal:
    """Triangular prism chain: a triangle per cell joined by three rails."""
    edges = (
        QuotientEdge(0, 1, (0,)), QuotientEdge(1, 2, (0,)), QuotientEdge(2, 0, (0,)),
        QuotientEdge(0, 0, (1,)), QuotientEdge(1, 1, (1,)), QuotientEdge(2, 2, (1,)),
    )
    return TopologicalCrystal(QuotientGraph(3, 1, edges, names=("x", "y", "z")))


def quotient_from_spec(text: str) -> TopologicalCrystal:
    from .specfile import parse_crystal

    return TopologicalCrystal(parse_crystal(text))
