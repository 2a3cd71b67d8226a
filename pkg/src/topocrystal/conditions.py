"""Computational checks of the decay hypotheses on a perturbed graph.

Each integral condition ``int_1^inf g(lambda) d lambda < inf`` is sampled
on dyadic levels ``lambda_k = 2^k``.  The integral over ``[2^k, 2^(k+1)]``
is approximated by ``g(2^k) 2^k`` and the tail is judged from a log-log fit
``g ~ lambda^p``: finite when ``p < -1 - margin``, divergent when
``p > -1 + margin``, inconclusive in between.  A finite computation cannot
decide an improper integral, so the verdict is an extrapolation and the
report carries the samples it is based on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import bracket, box_cells
from .perturbation import PerturbedGraph

__all__ = ["DecayReport", "check_condition", "check_cm5", "check_all", "annulus_cells",
           "fit_exponent"]

CONDITIONS = ("Cm1", "Cm2", "Cm3", "Cm4")
DEFAULT_BUDGET = 20_000_000


@dataclass(frozen=True)
class DecayReport:
    condition: str
    samples: tuple[tuple[float, float], ...]
    exponent: float
    confidence: float
    partial_integral: float
    verdict: str
    diagnostics: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {"condition": self.condition, "verdict": self.verdict, "exponent": self.exponent,
                "confidence": self.confidence, "partial_integral": self.partial_integral,
                "levels": len(self.samples), **self.diagnostics}


def annulus_cells(d: int, lo: float, hi: float, closed: bool = False) -> np.ndarray:
    """Cells with ``lo < |mu| < hi`` (Euclidean), or ``lo <= |mu| <= hi`` if ``closed``."""
    r = int(math.floor(hi))
    if d == 1:
        pos = np.arange(max(int(math.floor(lo)), 0), r + 1)
        cells = np.concatenate([pos, -pos[pos > 0]])[:, None]
    else:
        cells = box_cells(d, r)
    dist = np.linalg.norm(cells, axis=1)
    keep = (dist >= lo) & (dist <= hi) if closed else (dist > lo) & (dist < hi)
    return cells[keep]


def _annulus_size(d: int, lam: float) -> float:
    return (4 * lam + 1) ** d if d > 1 else 2 * lam + 2


def fit_exponent(lams, values):
    """Least-squares slope of ``log g`` against ``log lambda`` and twice its standard error."""
    x, y = np.log(np.asarray(lams, float)), np.log(np.asarray(values, float))
    if len(x) < 2:
        return math.nan, math.inf
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    if len(x) > 2:
        sigma2 = float(np.sum((y - A @ coef) ** 2)) / (len(x) - 2)
        se = math.sqrt(sigma2 / float(np.sum((x - x.mean()) ** 2)))
    else:
        se = 0.0
    return float(coef[0]), 2.0 * se


def _verdict(samples, fit_levels, target: float, margin: float, budget_hit: bool):
    """Shared decision rule; ``target`` is the critical exponent."""
    ks = [k for k, _, _ in samples]
    g = {k: v for k, _, v in samples}
    lo, hi = fit_levels if fit_levels else (ks[len(ks) // 2], ks[-1])
    used = [k for k in ks if lo <= k <= hi]
    if samples and all(v == 0 for _, _, v in samples):
        return -math.inf, 0.0, "finite", "integrand vanishes on every level"
    tail = used[len(used) // 2:] if used else []
    if tail and all(g[k] == 0 for k in tail):
        return -math.inf, 0.0, "finite", "integrand vanishes on the upper levels"
    pos = [k for k in used if g[k] > 0]
    if len(pos) < 3:
        return math.nan, math.inf, "inconclusive", "too few nonzero levels to fit"
    p, conf = fit_exponent([2.0 ** k for k in pos], [g[k] for k in pos])
    if budget_hit:
        return p, conf, "inconclusive", "enumeration budget exhausted"
    if p < target - margin:
        return p, conf, "finite", ""
    if p > target + margin:
        return p, conf, "divergent", ""
    return p, conf, "inconclusive", "fitted exponent inside the margin"


def _cm1(pg: PerturbedGraph, lam: float) -> float:
    q = pg.crystal.quotient
    if pg.edge_profile.trivial and pg.vertex_profile.trivial:
        return 0.0
    cells = annulus_cells(pg.dimension, lam, 2 * lam)
    worst = 0.0
    m0v = np.asarray(q.vertex_weights)
    removed = pg.perturbation.removed
    for e in q.oriented_edges():
        # oriented edge lifted at origin cell mu; its key cell is the listed origin
        key_cells = cells + e.index if e.reversed else cells
        m_e = pg.m_edges(np.full(len(cells), e.number), key_cells)
        m_o = pg.m_vertices(e.origin, cells)
        diff = np.abs(m_e / m_o - e.weight / m0v[e.origin])
        if removed:
            gone = np.array([(e.number, tuple(int(v) for v in c)) in removed for c in key_cells])
            diff = np.where(gone, 0.0, diff)
        if len(diff):
            worst = max(worst, float(diff.max()))
    return worst


def _cm2(pg: PerturbedGraph, lam: float) -> float:
    if pg.kernel is None:
        return 0.0
    cells = annulus_cells(pg.dimension, lam, 2 * lam)
    worst = 0.0
    for j in range(pg.n):
        if len(cells):
            deg = pg.kernel.raw_degrees(j, cells) / pg.m_vertices(j, cells)
            worst = max(worst, float(deg.max()))
    return worst


def _sup_vertices(pg: PerturbedGraph, sup_radius: int):
    cells = box_cells(pg.dimension, sup_radius)
    per_site = {j: [cells] for j in range(pg.n)}
    for x in pg.kernel.candidate_vertices():
        per_site[x.site].append(np.array([x.cell]))
    return {j: np.unique(np.concatenate(c), axis=0) for j, c in per_site.items()}


def _cm3(pg: PerturbedGraph, lam: float, sup_radius: int) -> float:
    if pg.kernel is None:
        return 0.0
    worst = 0.0
    for j, cells in _sup_vertices(pg, sup_radius).items():
        s = pg.kernel.shell_sums(j, cells, lam, 2 * lam) / pg.m_vertices(j, cells)
        worst = max(worst, float(np.sqrt(s.max())))
    return worst


def _cm4(pg: PerturbedGraph, lam: float) -> float:
    if pg.potential_profile.trivial:
        return 0.0
    cells = annulus_cells(pg.dimension, lam, 2 * lam)
    q = pg.crystal.quotient
    worst = 0.0
    for j in range(pg.n):
        if len(cells):
            dr = np.abs(pg.r_vertices(j, cells) - q.potential[j])
            worst = max(worst, float(dr.max()))
    return worst


def check_condition(pg: PerturbedGraph, condition: str, K: int = 12, fit_levels=None,
                    margin: float = 0.1, sup_radius: int = 16,
                    budget: int = DEFAULT_BUDGET) -> DecayReport:
    """Sample the integrand of ``condition`` on ``lambda = 2^k``, ``k = 0..K``.

    ``fit_levels=(k_lo, k_hi)`` selects the levels used in the exponent fit;
    by default the upper half.  For the connectivity condition the supremum
    over vertices is taken over ``|cell|_inf <= sup_radius`` and the
    kernel's distinguished vertices; a bound for the rest is reported as a
    diagnostic.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}; expected one of {CONDITIONS}")
    if K < 2:
        raise ValueError("at least three dyadic levels are needed")
    samples = []
    budget_hit = False
    for k in range(K + 1):
        lam = 2.0 ** k
        work = _annulus_size(pg.dimension, lam) * pg.n
        if work > budget:
            budget_hit = True
            break
        if condition == "Cm1":
            g = _cm1(pg, lam)
        elif condition == "Cm2":
            g = _cm2(pg, lam)
        elif condition == "Cm3":
            g = _cm3(pg, lam, sup_radius)
        else:
            g = _cm4(pg, lam)
        samples.append((k, lam, g))
    diagnostics = {"levels_done": len(samples), "levels_asked": K + 1}
    if condition == "Cm3" and pg.kernel is not None:
        env = pg.kernel.degree_envelope(sup_radius)
        vp = pg.vertex_profile
        m_min = min(pg.crystal.quotient.vertex_weights) + min(0.0, vp.amplitude)
        diagnostics["outside_sup_bound"] = math.sqrt(env / m_min) if env is not None else math.inf
    if len(samples) < 3:
        return DecayReport(condition, tuple((lam, g) for _, lam, g in samples), math.nan,
                           math.inf, math.nan, "inconclusive",
                           {**diagnostics, "note": "enumeration budget exhausted"})
    integral = math.fsum(g * lam for _, lam, g in samples)
    target = -1.0
    p, conf, verdict, note = _verdict(samples, fit_levels, target, margin, budget_hit)
    if note:
        diagnostics["note"] = note
    return DecayReport(condition, tuple((lam, g) for _, lam, g in samples), p, conf,
                       integral, verdict, diagnostics)


def _cm5_sup(pg: PerturbedGraph, s: float, r: int) -> float:
    kernel = pg.kernel
    cells = box_cells(pg.dimension, r)
    worst = 0.0
    for j in range(pg.n):
        mom = kernel.star_moments(j, cells, 2 * s, r)
        val = bracket(cells) ** (2 * s) * mom / pg.m_vertices(j, cells)
        worst = max(worst, float(val.max()))
    return worst


def check_cm5(pg: PerturbedGraph, s: float = 0.75, cutoffs=None, margin: float = 0.1,
              budget: int = DEFAULT_BUDGET) -> DecayReport:
    """Weighted connectivity supremum on growing boxes.

    For each cutoff ``r`` the supremum runs over ``|cell x|_inf <= r`` with
    termini also cut to the box.  The partial suprema ``S(r)`` increase with
    ``r``; their increments are fitted as ``r^q``.  Decaying increments
    (``q < -margin``) mean a finite limit, growing ones (``q > margin``) a
    divergent supremum.
    """
    if s <= 0.5:
        raise ValueError("the weighted condition needs s > 1/2")
    if cutoffs is None:
        cutoffs = [2 ** k for k in range(6, 13)]
    cutoffs = sorted(int(r) for r in cutoffs)
    if pg.kernel is None:
        samples = tuple((float(r), 0.0) for r in cutoffs)
        return DecayReport("Cm5", samples, -math.inf, 0.0, 0.0, "finite",
                           {"note": "no added edges", "s": s})
    sups = []
    budget_hit = False
    for r in cutoffs:
        work = (2 * r + 1) ** pg.dimension * pg.n
        if pg.kernel.kind == "complete":
            work *= 2
        if work > budget:
            budget_hit = True
            break
        sups.append((float(r), _cm5_sup(pg, s, r)))
    diagnostics = {"s": s, "levels_done": len(sups), "levels_asked": len(cutoffs)}
    if pg.kernel.candidate_vertices():
        x = pg.kernel.candidate_vertices()[0]
        tail = pg.kernel.star_tail(x, cutoffs[-1], 2 * s)
        diagnostics["candidate_tail_upper"] = tail.upper
    if len(sups) < 3:
        return DecayReport("Cm5", tuple(sups), math.nan, math.inf, math.nan, "inconclusive",
                           {**diagnostics, "note": "enumeration budget exhausted"})
    inc = [(sups[i + 1][0], sups[i + 1][1] - sups[i][1]) for i in range(len(sups) - 1)]
    last = sups[-1][1]
    scale = max(abs(last), 1e-300)
    pos = [(r, v) for r, v in inc if v > 1e-14 * scale]
    if not pos or all(v <= 1e-14 * scale for _, v in inc[len(inc) // 2:]):
        return DecayReport("Cm5", tuple(sups), -math.inf, 0.0, last, "finite",
                           {**diagnostics, "note": "partial suprema stationary"})
    if len(pos) < 2:
        return DecayReport("Cm5", tuple(sups), math.nan, math.inf, last, "inconclusive",
                           {**diagnostics, "note": "too few increments to fit"})
    q, conf = fit_exponent([r for r, _ in pos], [v for _, v in pos])
    if budget_hit:
        verdict = "inconclusive"
    elif q < -margin:
        verdict = "finite"
    elif q > margin:
        verdict = "divergent"
    else:
        verdict = "inconclusive"
    return DecayReport("Cm5", tuple(sups), q, conf, last, verdict, diagnostics)


def check_all(pg: PerturbedGraph, K: int = 12, s: float = 0.75, **kw) -> list[DecayReport]:
    reports = [check_condition(pg, c, K, **kw) for c in CONDITIONS]
    reports.append(check_cm5(pg, s))
    return reports
