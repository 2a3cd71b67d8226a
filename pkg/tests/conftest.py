import math

import numpy as np
import pytest

from topocrystal.graph import Graph, GridFunction, Measure, OrientedEdge, Vertex


class PathGraph(Graph):
    """Finite weighted path ``0 - 1 - ... - (k-1)`` with one site per cell."""

    dimension = 1

    def __init__(self, weights):
        self.weights = list(weights)
        self.k = len(self.weights) + 1

    def incident_edges(self, x, radius=None):
        (c,) = x.cell
        out = []
        if c > 0:
            out.append(OrientedEdge(x, Vertex(0, (c - 1,)), c - 1))
        if c < self.k - 1:
            out.append(OrientedEdge(x, Vertex(0, (c + 1,)), c))
        return out

    def degree_envelope(self, measure, radius):
        return 0.0 if radius >= self.k - 1 else None

    def vertices_in_box(self, radius):
        for c in range(min(self.k, radius + 1)):
            yield Vertex(0, (c,))


class PathMeasure(Measure):
    def __init__(self, graph, vertex_weights):
        self.graph, self.vw = graph, list(vertex_weights)

    def vertex(self, x):
        return self.vw[x.cell[0]]

    def edge(self, e):
        return self.graph.weights[e.key]


class TablePotential:
    def __init__(self, values):
        self.values = list(values)

    def __call__(self, x):
        return self.values[x.cell[0]]

    def envelope(self, radius):
        return 0.0


def random_function(rng, vertices, complex_values=True):
    vals = rng.standard_normal(len(vertices))
    if complex_values:
        vals = vals + 1j * rng.standard_normal(len(vertices))
    return GridFunction(dict(zip(vertices, vals)))


@pytest.fixture
def rng():
    return np.random.default_rng(20241015)


@pytest.fixture
def path_setup():
    g = PathGraph([1.0, 2.0, 0.5, 3.0])
    m = PathMeasure(g, [1.0, 2.0, 1.5, 0.5, 4.0])
    return g, m


def dense_operator(graph, measure, potential, vertices):
    """Matrix of ``H`` in the basis of deltas, built column by column from graph-core."""
    from topocrystal.graph import schrodinger_apply

    idx = {v: i for i, v in enumerate(vertices)}
    a = np.zeros((len(vertices), len(vertices)), dtype=complex)
    for v in vertices:
        out = schrodinger_apply(graph, measure, potential, GridFunction.delta(v))
        for y, c in out.items():
            if y in idx:
                a[idx[y], idx[v]] = c
    return a


PI4_45 = math.pi ** 4 / 45
