import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topocrystal.conditions import annulus_cells, check_all, check_cm5, check_condition, fit_exponent
from topocrystal.crystal import lattice_zd
from topocrystal.perturbation import (Profile, complete_example, hub_example, toblerone_example,
                                      unperturbed)


def hub_shell_oracle(alpha, lam):
    """``sqrt(sum_{lam <= |y| <= 2 lam} |y|^alpha)`` for the Z hub, by direct summation."""
    ks = range(int(math.ceil(lam)), int(math.floor(2 * lam)) + 1)
    return math.sqrt(2 * math.fsum(k ** alpha for k in ks))


def open_annulus_min(lam):
    """Smallest integer in ``(lam, 2 lam)``, or None."""
    k = math.floor(lam) + 1
    return k if k < 2 * lam else None


def test_annulus_cells():
    c = annulus_cells(1, 2, 4)
    assert sorted(c[:, 0].tolist()) == [-3, 3]
    c = annulus_cells(1, 2, 4, closed=True)
    assert sorted(c[:, 0].tolist()) == [-4, -3, -2, 2, 3, 4]
    c2 = annulus_cells(2, 1, 2)
    assert len(c2) == 4  # (+-1, +-1)


def test_fit_exponent_exact_power():
    lam = 2.0 ** np.arange(3, 10)
    p, conf = fit_exponent(lam, 3 * lam ** -1.7)
    assert p == pytest.approx(-1.7, abs=1e-12) and conf < 1e-10


@pytest.mark.parametrize("alpha", [-4.0, -2.5])
def test_cm3_samples_match_direct_sum(alpha):
    rep = check_condition(hub_example(1, alpha), "Cm3", K=10)
    for lam, g in rep.samples:
        assert g == pytest.approx(hub_shell_oracle(alpha, lam), rel=1e-12)


def test_cm2_samples_match_direct_sup():
    rep = check_condition(hub_example(1, -3.5), "Cm2", K=10)
    for lam, g in rep.samples:
        k = open_annulus_min(lam)
        assert g == (0.0 if k is None else pytest.approx(k ** -3.5, rel=1e-12))


@pytest.mark.parametrize("alpha,expected", [(-4.0, "finite"), (-3.5, "finite"),
                                            (-2.5, "divergent"), (-2.0, "divergent")])
def test_cm3_verdict_and_exponent(alpha, expected):
    rep = check_condition(hub_example(1, alpha), "Cm3", K=12, fit_levels=(4, 12))
    assert rep.verdict == expected
    assert abs(rep.exponent - (alpha + 1) / 2) <= 0.15


@pytest.mark.parametrize("alpha,expected", [(-4.0, "finite"), (-3.5, "finite"),
                                            (-2.0, "divergent")])
def test_cm5_verdicts(alpha, expected):
    assert check_cm5(hub_example(1, alpha), s=0.75).verdict == expected


def test_trivial_perturbation_all_finite():
    reps = check_all(unperturbed(lattice_zd(1)))
    assert [r.verdict for r in reps] == ["finite"] * 5
    assert all(r.partial_integral == 0 for r in reps)


@pytest.mark.parametrize("pg", [complete_example(1, -4.0), toblerone_example(-4.0)],
                         ids=["complete", "toblerone"])
def test_examples_finite(pg):
    assert {r.condition: r.verdict for r in check_all(pg)} == dict.fromkeys(
        ["Cm1", "Cm2", "Cm3", "Cm4", "Cm5"], "finite")


def test_cm4_potential_decay_verdicts():
    base = unperturbed(lattice_zd(1))
    fast = base.with_changes(potential_profile=Profile((), 1.0, -2.5))
    slow = base.with_changes(potential_profile=Profile((), 1.0, -0.5))
    assert check_condition(fast, "Cm4").verdict == "finite"
    assert check_condition(slow, "Cm4").verdict == "divergent"
    rep = check_condition(fast, "Cm4", K=10)
    for lam, g in rep.samples:
        # sup over lam < |mu| < 2 lam of (1 + |mu|)^-2.5 sits at the smallest |mu|
        k = open_annulus_min(lam)
        assert g == (0.0 if k is None else pytest.approx((1.0 + k) ** -2.5, rel=1e-12))


def test_cm1_measure_decay():
    base = unperturbed(lattice_zd(1))
    pg = base.with_changes(edge_profile=Profile((), 0.5, -3.0))
    rep = check_condition(pg, "Cm1")
    assert rep.verdict == "finite" and rep.exponent == pytest.approx(-3.0, abs=0.15)


def test_invalid_condition_name():
    with pytest.raises(ValueError):
        check_condition(hub_example(), "Cm9")
    with pytest.raises(ValueError):
        check_cm5(hub_example(), s=0.5)


@settings(max_examples=10, deadline=None)
@given(st.floats(-6, -3.3))
def test_cm3_monotone_in_alpha(alpha):
    """Faster decay never produces a larger integrand."""
    a = check_condition(hub_example(1, alpha), "Cm3", K=8)
    b = check_condition(hub_example(1, alpha - 0.5), "Cm3", K=8)
    assert all(gb <= ga * (1 + 1e-12) for (_, ga), (_, gb) in zip(a.samples, b.samples))
