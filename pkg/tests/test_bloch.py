import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topocrystal.bloch import (assemble_fiber, eig_fiber, estimate_thresholds, fiber_gradient,
                               lipschitz_constant, merge_intervals, sample_bands, spectrum_h0,
                               verify_fiber_equivalence)
from topocrystal.crystal import QuotientEdge, QuotientGraph, TopologicalCrystal, lattice_zd, toblerone
from topocrystal.perturbation import random_cell_function


def weighted_pair():
    q = QuotientGraph(2, 2, (QuotientEdge(0, 1, (0, 0), 1.5), QuotientEdge(0, 0, (1, 0), 0.7),
                             QuotientEdge(1, 0, (0, 1), 2.0), QuotientEdge(1, 1, (1, -1), 0.3)),
                      vertex_weights=(1.0, 2.5), potential=(0.4, -1.0))
    return TopologicalCrystal(q)


def test_z1_bands_match_cosine():
    b = sample_bands(lattice_zd(1).quotient, 128)
    xi = b.grid()[:, 0]
    assert np.allclose(b.bands[:, 0], 2 - 2 * np.cos(2 * np.pi * xi), atol=1e-14)


def test_z2_bands_match_cosines():
    b = sample_bands(lattice_zd(2).quotient, 16)
    g = b.grid()
    exact = 4 - 2 * np.cos(2 * np.pi * g[:, 0]) - 2 * np.cos(2 * np.pi * g[:, 1])
    assert np.allclose(b.bands.reshape(-1), exact, atol=1e-13)


def test_toblerone_bands_and_thresholds():
    b = sample_bands(toblerone().quotient, 64)
    spec = spectrum_h0(b)
    assert len(spec.intervals) == 1
    assert spec.intervals[0] == pytest.approx((0.0, 7.0), abs=1e-12)
    th = estimate_thresholds(b)
    assert th.values == pytest.approx((0.0, 3.0, 4.0, 7.0), abs=1e-9)


def test_fiber_is_hermitian_and_eig_rejects_non_hermitian():
    c = weighted_pair()
    f = assemble_fiber(c.quotient, (0.13, 0.71))
    assert f.is_hermitian(1e-13)
    vals, vecs = eig_fiber(f)
    assert np.allclose(vecs @ np.diag(vals) @ vecs.conj().T, f.entries, atol=1e-13)
    with pytest.raises(ValueError):
        eig_fiber(np.array([[0, 1], [0, 0]], dtype=complex))


@pytest.mark.parametrize("crystal", [lattice_zd(2), toblerone(), weighted_pair()],
                         ids=["z2", "toblerone", "weighted"])
def test_fiber_equivalence(crystal, rng):
    q = crystal.quotient
    for _ in range(10):
        f = random_cell_function(q.n, q.d, 3, rng)
        xi = rng.uniform(0, 1, q.d)
        assert verify_fiber_equivalence(crystal, f, xi) <= 1e-10


def test_gradient_matches_finite_differences():
    q = weighted_pair().quotient
    xi = np.array([0.31, 0.77])
    grad = fiber_gradient(q, xi)
    h = 1e-6
    for a in range(2):
        e = np.zeros(2)
        e[a] = h
        fd = (assemble_fiber(q, xi + e).entries - assemble_fiber(q, xi - e).entries) / (2 * h)
        assert np.abs(fd - grad[a]).max() <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_lipschitz_bound_holds(pts):
    q = weighted_pair().quotient
    a, b = np.array(pts[:2]), np.array(pts[2:])
    la = np.linalg.eigvalsh(assemble_fiber(q, a).entries)
    lb = np.linalg.eigvalsh(assemble_fiber(q, b).entries)
    assert np.abs(la - lb).max() <= lipschitz_constant(q) * np.linalg.norm(a - b) + 1e-12


def test_spectrum_slack_covers_true_range():
    q = weighted_pair().quotient
    coarse = spectrum_h0(sample_bands(q, 8))
    fine = spectrum_h0(sample_bands(q, 256))
    for a, b in fine:
        assert coarse.contains_interval(a, b, tol=coarse.slack)


def test_merge_intervals():
    assert merge_intervals([(3, 4), (0, 1), (0.5, 2)]) == ((0, 2), (3, 4))
    assert merge_intervals([(0, 1), (1.05, 2)], tol=0.1) == ((0, 2),)
