
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PI4_45
from topocrystal import perturbation as P
from topocrystal.graph import GridFunction, Vertex, degree, inner_product, norm
from topocrystal.perturbation import (EdgePerturbation, PerturbedGraph, Profile, complete_example,
                                      hub_example, j_apply, partial_degree, random_cell_function,
                                      toblerone_example, verify_decomposition)


def mixed(pg, removed_pairs):
    """Add F-, measure and potential changes on top of ``pg``."""
    d = pg.dimension
    ep = EdgePerturbation.removing(pg.crystal, removed_pairs, pg.kernel)
    return pg.with_changes(
        perturbation=ep,
        vertex_profile=Profile({(0, (1,) * d): 3.0}, 0.5, -2.0),
        edge_profile=Profile({(0, (0,) * d): 0.25}, 0.3, -3.0),
        potential_profile=Profile({(pg.n - 1, (-1,) * d): 2.0}, 1.0, -2.5),
    )


CASES = {
    "hub": hub_example(1, -4.0, 1.0),
    "complete": complete_example(1, -4.0, 1.0),
    "toblerone": toblerone_example(-4.0, 1.0),
    "hub-mixed": mixed(hub_example(1, -4.0, 1.0), [((0, 2), (0, 3)), ((0, -1), (0, 0))]),
    "complete-mixed": mixed(complete_example(1, -4.0, 1.0), [((0, 0), (0, 1))]),
    "toblerone-mixed": mixed(toblerone_example(-4.0, 1.0), [((0, 0), (1, 0)), ((2, 1), (2, 2))]),
    "hub-z2": hub_example(2, -5.0, 0.7, star_radius=64),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_decomposition_identity(name):
    assert verify_decomposition(CASES[name], trials=20, seed=1) <= 1e-12


@pytest.mark.parametrize("drop", ["l_minus_apply", "l_plus_apply"])
def test_decomposition_oracle_detects_missing_term(monkeypatch, drop):
    monkeypatch.setattr(P, drop, lambda *a, **k: GridFunction())
    assert verify_decomposition(CASES["hub-mixed"], trials=2) > 1e-3


def test_decomposition_oracle_detects_wrong_t_entry(monkeypatch):
    orig = P.t_entry
    monkeypatch.setattr(P, "t_entry", lambda pg, e, mu: 1.01 * orig(pg, e, mu) + 1e-3)
    assert verify_decomposition(CASES["toblerone-mixed"], trials=2) > 1e-4


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.5, 2.0), st.floats(-4, -0.5), st.floats(0, 1.0), st.floats(-4, -0.5),
       st.floats(-3, 3), st.floats(-4, 0), st.integers(0, 1000))
def test_decomposition_property(va, ve, ea, ee, pa, pe, seed):
    base = hub_example(1, -4.0, 1.0)
    pg = base.with_changes(vertex_profile=Profile((), va, ve), edge_profile=Profile((), ea, ee),
                           potential_profile=Profile((), pa, pe))
    assert verify_decomposition(pg, trials=3, support_radius=2, seed=seed) <= 1e-12


def test_hub_partial_degree_is_pi4_over_45():
    pg = CASES["hub"]
    deg = partial_degree(pg, Vertex.of(0, 0))
    assert deg.lower <= PI4_45 <= deg.upper and deg.width <= 1e-9
    full = degree(pg, pg.measure, Vertex.of(0, 0))
    assert abs(full.estimate - (2 + PI4_45)) <= 1e-12
    # an ordinary vertex gains exactly one added edge
    assert degree(pg, pg.measure, Vertex.of(0, 3)).estimate == pytest.approx(2 + 3.0 ** -4)


def test_toblerone_degree_bound():
    pg = CASES["toblerone"]
    hub = degree(pg, pg.measure, Vertex.of(0, 0))
    assert hub.bounded and hub.upper < 4 + 3.0
    env = pg.degree_envelope(pg.measure, 16)
    assert env is not None and 4 <= env <= 4 + 1e-4


def test_j_is_isometric(rng):
    pg = CASES["hub-mixed"]
    f = random_cell_function(1, 1, 4, rng)
    base = pg.crystal.measure
    assert norm(pg.measure, j_apply(pg, f)) == pytest.approx(norm(base, f), rel=1e-14)


def test_self_adjointness_of_perturbed_operator(rng):
    from topocrystal.graph import schrodinger_apply

    for name in ("hub-mixed", "complete-mixed", "toblerone-mixed"):
        pg = CASES[name]
        f = random_cell_function(pg.n, 1, 3, rng)
        g = random_cell_function(pg.n, 1, 3, rng)
        hf = schrodinger_apply(pg, pg.measure, pg.potential, f, window=8)
        hg = schrodinger_apply(pg, pg.measure, pg.potential, g, window=8)
        diff = inner_product(pg.measure, hf, g) - inner_product(pg.measure, f, hg)
        assert abs(diff) <= 1e-12 * norm(pg.measure, f) * norm(pg.measure, g) * 10


def test_removed_edge_has_zero_measure():
    pg = CASES["hub-mixed"]
    x = Vertex.of(0, 2)
    keys = [e.key for e in pg.incident_edges(x)]
    assert (0, (2,)) not in keys
    assert pg.measure.edge(next(e for e in pg.crystal.incident_edges(x) if e.key == (0, (2,)))) == 0


def test_profile_validation():
    c = hub_example().crystal
    with pytest.raises(ValueError):
        PerturbedGraph(c, vertex_profile=Profile((), -1.0, -2.0))
    with pytest.raises(ValueError):
        PerturbedGraph(c, edge_profile=Profile({(0, (0,)): -0.1}))
    with pytest.raises(ValueError):
        Profile((), 1.0, 0.5)
    with pytest.raises(ValueError, match="no crystal edge"):
        EdgePerturbation.edge_between(c, (0, 0), (0, 2))


def test_profile_vectorised_matches_scalar():
    prof = Profile({(0, (2,)): 7.0}, 0.5, -1.5)
    cells = np.array([[0], [2], [-3]])
    vals = prof.values(np.ones(3), np.zeros(3, int), cells)
    assert np.allclose(vals, [prof.value(1.0, 0, tuple(c)) for c in cells])
    assert vals[1] == 7.0 and vals[0] == pytest.approx(1.5)


def test_unperturbed_z_is_zero(rng):
    pg = P.unperturbed(hub_example().crystal)
    phi = random_cell_function(1, 1, 3, rng)
    assert P.z_apply(pg, phi, 8).l2() <= 1e-15
