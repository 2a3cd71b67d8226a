"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import expm

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import PI4_45  # noqa: E402
from test_dynamics import antiperiodic_ring, weighted_chain  # noqa: E402
from test_perturbation import CASES  # noqa: E402
from topocrystal.bloch import (assemble_fiber, fiber_gradient, sample_bands,  # noqa: E402
                               spectrum_h0, verify_fiber_equivalence)
from topocrystal.conditions import check_cm5, check_condition  # noqa: E402
from topocrystal.crystal import lattice_zd, toblerone  # noqa: E402
from topocrystal.dynamics import FiberedH0, evolve_section, wave_probe  # noqa: E402
from topocrystal.graph import degree, inner_product, norm, schrodinger_apply  # noqa: E402
from topocrystal.perturbation import (PerturbedGraph, Profile, hub_example,  # noqa: E402
                                      partial_degree, random_cell_function, toblerone_example,
                                      verify_decomposition)
from topocrystal.spectral import count_eigenvalues_in, finite_section  # noqa: E402


def report(number, name, ok, elapsed, limit, detail):
    within = elapsed < limit
    status = "PASS" if ok and within else "FAIL"
    line = (f"[{status}] criterion {number}: {name} ({elapsed:.2f}s of {limit:.0f}s) {detail}")
    print(line, file=sys.__stdout__, flush=True)
    return ok and within


def timed(fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    return ok, detail, time.perf_counter() - t0


# -- criterion bodies: each returns (ok, detail) -------------------------------

def band_union():
    u1 = spectrum_h0(sample_bands(lattice_zd(1).quotient, 512))
    u2 = spectrum_h0(sample_bands(lattice_zd(2).quotient, 64))
    err1 = max(abs(u1.intervals[0][0] - 0), abs(u1.intervals[0][1] - 4))
    err2 = max(abs(u2.intervals[0][0] - 0), abs(u2.intervals[0][1] - 8))
    ok = len(u1.intervals) == 1 and len(u2.intervals) == 1 and max(err1, err2) <= 1e-4
    return ok, f"Z1 {u1.intervals} Z2 {u2.intervals} max error {max(err1, err2):.2e}"


def fiber_equivalence():
    rng = np.random.default_rng(2)
    worst = 0.0
    for crystal in (lattice_zd(2), hub_example().crystal, toblerone()):
        q = crystal.quotient
        for _ in range(50):
            f = random_cell_function(q.n, q.d, 3, rng)
            worst = max(worst, verify_fiber_equivalence(crystal, f, rng.uniform(0, 1, q.d)))
    return worst <= 1e-10, f"max residual {worst:.2e} over 150 samples"


def decomposition():
    names = ("hub", "complete", "toblerone", "hub-mixed", "complete-mixed", "toblerone-mixed")
    res = {n: verify_decomposition(CASES[n], trials=20, seed=3) for n in names}
    worst = max(res.values())
    return worst <= 1e-12, "max residual " + f"{worst:.2e} (" + ", ".join(
        f"{n} {v:.1e}" for n, v in res.items()) + ")"


def decay_verdicts():
    fast = hub_example(1, -3.5)
    slow = hub_example(1, -2.5)
    cm2 = check_condition(fast, "Cm2", K=12)
    cm3f = check_condition(fast, "Cm3", K=12, fit_levels=(4, 12))
    cm5 = check_cm5(fast, s=0.75)
    cm3s = check_condition(slow, "Cm3", K=12, fit_levels=(4, 12))
    exp_ok = all(abs(r.exponent - (a + 1) / 2) <= 0.15 for r, a in ((cm3f, -3.5), (cm3s, -2.5)))
    ok = (cm2.verdict == cm3f.verdict == cm5.verdict == "finite"
          and cm3s.verdict == "divergent" and exp_ok)
    return ok, (f"a=-3.5: Cm2 {cm2.verdict}, Cm3 {cm3f.verdict} p={cm3f.exponent:.3f}, "
                f"Cm5 {cm5.verdict}; a=-2.5: Cm3 {cm3s.verdict} p={cm3s.exponent:.3f}")


def degree_sums():
    pg = hub_example(1, -4.0, 1.0)
    deg = partial_degree(pg, (0, (0,)))
    hub_ok = deg.lower <= PI4_45 <= deg.upper and deg.width <= 1e-9
    tob = toblerone_example(-4.0, 1.0)
    tdeg = degree(tob, tob.measure, (0, (0,)))
    env = tob.degree_envelope(tob.measure, 16)
    tob_ok = tdeg.bounded and math.isfinite(tdeg.upper) and env is not None
    return hub_ok and tob_ok, (f"hub deg_F+ in [{deg.lower:.15g}, {deg.upper:.15g}] width "
                               f"{deg.width:.1e} vs pi^4/45={PI4_45:.15g}; toblerone hub degree "
                               f"<= {tdeg.upper:.6f}, envelope {env:.6f}")


def eigenvalue_stabilization():
    hub = count_eigenvalues_in(hub_example(), (0.5, 3.5), Ls=(512, 1024))
    bump = PerturbedGraph(lattice_zd(1), potential_profile=Profile({(0, (0,)): 5.0}))
    bres = count_eigenvalues_in(bump, (4.5, 12.0), Ls=(128, 256, 512))
    ok = hub.counts[0] == hub.counts[1] and bres.counts == (1, 1, 1)
    vals = [v[0] for v in bres.eigenvalues if v]
    return ok, (f"hub counts at L=512,1024: {hub.counts}; bump counts {bres.counts} "
                f"eigenvalue {vals[0]:.12f} (2+sqrt29={2 + math.sqrt(29):.12f})")


def wave_operator():
    hub = wave_probe(hub_example(), (1.0, 3.0), times=(10, 20, 40, 80))
    triv = wave_probe(lattice_zd(1), (1.0, 3.0), times=(10, 20, 40, 80))
    ok = (hub.decreasing() and hub.valid and hub.boundary_mass <= 1e-6
          and triv.valid and max(triv.cauchy) <= 1e-10)
    return ok, (f"hub Cauchy {tuple(f'{c:.3g}' for c in hub.cauchy)} L={hub.L} boundary "
                f"{hub.boundary_mass:.1e}; trivial max {max(triv.cauchy):.1e}")


def hygiene():
    rng = np.random.default_rng(8)
    checks = {}
    # Hermiticity of fibers and sections
    herm = 0.0
    for q in (lattice_zd(2).quotient, toblerone().quotient, weighted_chain()):
        for _ in range(20):
            h = assemble_fiber(q, rng.uniform(0, 1, q.d)).entries
            herm = max(herm, np.abs(h - h.conj().T).max())
    for pg in (hub_example(), toblerone_example()):
        a = finite_section(pg, 64).matrix
        herm = max(herm, abs(a - a.conj().T).max())
    checks["hermiticity"] = (herm, 1e-13)
    # evolution unitarity
    sec = finite_section(hub_example(), 256)
    v = rng.standard_normal(sec.size) + 1j * rng.standard_normal(sec.size)
    v /= np.linalg.norm(v)
    checks["unitarity"] = (abs(np.linalg.norm(evolve_section(sec, v, 80.0)) - 1), 1e-8)
    # filter idempotence
    fib = FiberedH0(toblerone().quotient, 64)
    a = rng.standard_normal(fib.shape) + 1j * rng.standard_normal(fib.shape)
    p = fib.projector(a, (1.1, 2.9))
    checks["idempotence"] = (np.abs(fib.projector(p, (1.1, 2.9)) - p).max(), 1e-8)
    # propagation against dense exponentials, 200 unknowns
    q = weighted_chain()
    fib = FiberedH0(q, 100)
    a = rng.standard_normal(fib.shape) + 1j * rng.standard_normal(fib.shape)
    ref = expm(-7j * antiperiodic_ring(q, 100)) @ a.reshape(-1)
    prop = np.abs(fib.propagate(a, 7.0).reshape(-1) - ref).max()
    sec = finite_section(hub_example(), 99)
    w = rng.standard_normal(sec.size) + 1j * rng.standard_normal(sec.size)
    prop = max(prop, np.abs(evolve_section(sec, w, 7.0) - expm(-7j * sec.matrix.toarray()) @ w).max())
    checks["propagation"] = (prop, 1e-8)
    # fiber gradient against central differences
    grad_err = 0.0
    for q in (lattice_zd(2).quotient, weighted_chain()):
        xi = rng.uniform(0, 1, q.d)
        g = fiber_gradient(q, xi)
        for k in range(q.d):
            e = np.zeros(q.d)
            e[k] = 1e-6
            fd = (assemble_fiber(q, xi + e).entries - assemble_fiber(q, xi - e).entries) / 2e-6
            grad_err = max(grad_err, np.abs(fd - g[k]).max())
    checks["gradient"] = (grad_err, 1e-6)
    # self-adjointness of the perturbed operator in l2(m)
    sa = 0.0
    for name in ("hub-mixed", "complete-mixed", "toblerone-mixed"):
        pg = CASES[name]
        for _ in range(5):
            f = random_cell_function(pg.n, 1, 3, rng)
            g = random_cell_function(pg.n, 1, 3, rng)
            hf = schrodinger_apply(pg, pg.measure, pg.potential, f, window=8)
            hg = schrodinger_apply(pg, pg.measure, pg.potential, g, window=8)
            diff = abs(inner_product(pg.measure, hf, g) - inner_product(pg.measure, f, hg))
            sa = max(sa, diff / (norm(pg.measure, f) * norm(pg.measure, g)))
    checks["self-adjointness"] = (sa, 1e-12)
    ok = all(v <= tol for v, tol in checks.values())
    return ok, "; ".join(f"{k} {v:.1e}<={tol:.0e}" for k, (v, tol) in checks.items())


CRITERIA = [
    (1, "fiber formula band union", band_union, 5),
    (2, "unitary equivalence of the fiber decomposition", fiber_equivalence, 5),
    (3, "decomposition identity", decomposition, 30),
    (4, "decay-condition verdicts", decay_verdicts, 60),
    (5, "degree sums", degree_sums, 60),
    (6, "finite-eigenvalue stabilization", eigenvalue_stabilization, 600),
    (7, "wave-operator probe", wave_operator, 600),
    (8, "numerical hygiene suite", hygiene, 120),
]


@pytest.mark.parametrize("number,name,fn,limit", CRITERIA, ids=[f"criterion{c[0]}" for c in CRITERIA])
def test_criterion(number, name, fn, limit):
    ok, detail, elapsed = timed(fn)
    assert report(number, name, ok, elapsed, limit, detail), detail


if __name__ == "__main__":
    results = []
    for number, name, fn, limit in CRITERIA:
        ok, detail, elapsed = timed(fn)
        results.append(report(number, name, ok, elapsed, limit, detail))
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
