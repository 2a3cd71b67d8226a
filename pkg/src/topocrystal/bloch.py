"""Floquet-Bloch analysis of the periodic operator ``H0``.

Conventions: a point of the torus is ``xi`` in ``[0, 1)^d`` and the phase
attached to a cell ``mu`` is ``exp(-2 pi i xi . mu)`` in the forward
transform.  Fibers act on ``C^n`` with the standard inner product; the
weight ``m0(site)^(1/2)`` converts between the two.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .crystal import QuotientGraph, TopologicalCrystal
from .graph import GridFunction, schrodinger_apply

__all__ = [
    "FiberMatrix", "BandStructure", "IntervalUnion", "ThresholdEstimate",
    "assemble_fiber", "assemble_fibers", "fiber_gradient", "eig_fiber",
    "lipschitz_constant", "sample_bands", "spectrum_h0", "estimate_thresholds",
    "floquet_transform", "floquet_weighted", "verify_fiber_equivalence", "torus_grid",
]

HERMITIAN_TOL = 1e-13


def _quotient(q) -> QuotientGraph:
    return q.quotient if isinstance(q, TopologicalCrystal) else q


def _edge_arrays(quotient: QuotientGraph):
    """Coefficients ``m0(e) / sqrt(m0(o) m0(t))`` for every listed edge."""
    m = np.asarray(quotient.vertex_weights)
    o = np.array([e.origin for e in quotient.edges], dtype=int)
    t = np.array([e.terminus for e in quotient.edges], dtype=int)
    eta = np.array([e.index for e in quotient.edges], dtype=float).reshape(-1, quotient.d)
    w = np.array([e.weight for e in quotient.edges], dtype=float)
    coef = w / np.sqrt(m[o] * m[t]) if len(w) else w
    return o, t, eta, coef


def assemble_fibers(quotient, xis: np.ndarray) -> np.ndarray:
    """Fiber matrices ``h0(xi)`` for a stack of torus points, shape ``(K, n, n)``."""
    quotient = _quotient(quotient)
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    n = quotient.n
    o, t, eta, coef = _edge_arrays(quotient)
    h = np.zeros((len(xis), n, n), dtype=complex)
    if len(coef):
        phase = np.exp(2j * np.pi * xis @ eta.T) * coef  # (K, E)
        for k in range(len(coef)):
            h[:, o[k], t[k]] -= phase[:, k]
            h[:, t[k], o[k]] -= phase[:, k].conj()
    diag = quotient.degrees() + np.asarray(quotient.potential)
    h[:, np.arange(n), np.arange(n)] += diag
    return h


@dataclass(frozen=True)
class FiberMatrix:
    xi: tuple[float, ...]
    entries: np.ndarray

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        a = self.entries
        return np.abs(a - a.conj().T).max(initial=0.0) <= tol * max(1.0, np.abs(a).max())


def assemble_fiber(quotient, xi: Sequence[float] | float) -> FiberMatrix:
    xi = tuple(float(v) for v in np.atleast_1d(xi))
    return FiberMatrix(xi, assemble_fibers(quotient, np.array([xi]))[0])


def fiber_gradient(quotient, xi: Sequence[float] | float) -> np.ndarray:
    """Analytic derivative of ``h0`` along each torus axis, shape ``(d, n, n)``."""
    quotient = _quotient(quotient)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    n, d = quotient.n, quotient.d
    o, t, eta, coef = _edge_arrays(quotient)
    grad = np.zeros((d, n, n), dtype=complex)
    for k in range(len(coef)):
        ph = coef[k] * np.exp(2j * np.pi * xi @ eta[k])
        for a in range(d):
            g = -2j * np.pi * eta[k, a] * ph
            grad[a, o[k], t[k]] += g
            grad[a, t[k], o[k]] += g.conjugate()
    return grad


def eig_fiber(fiber: FiberMatrix | np.ndarray, tol: float = HERMITIAN_TOL):
    """Sorted eigenvalues and an orthonormal eigenbasis of a Hermitian fiber."""
    a = fiber.entries if isinstance(fiber, FiberMatrix) else np.asarray(fiber)
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if np.abs(a - a.conj().T).max(initial=0.0) > tol * scale:
        raise ValueError("fiber matrix is not Hermitian within tolerance")
    values, vectors = np.linalg.eigh(a)
    return values, vectors


def lipschitz_constant(quotient) -> float:
    """Bound on ``|lambda_j(xi) - lambda_j(xi')| / |xi - xi'|`` (Euclidean)."""
    quotient = _quotient(quotient)
    o, t, eta, coef = _edge_arrays(quotient)
    loops = (o == t).astype(float) + 1.0
    return float(np.sum(loops * coef * 2 * np.pi * np.linalg.norm(eta, axis=1)))


def torus_grid(d: int, N: int) -> np.ndarray:
    """Tensor grid ``k / N``, ``k = 0..N-1`` per axis, shape ``(N**d, d)``."""
    axis = np.arange(N) / N
    return np.stack(np.meshgrid(*([axis] * d), indexing="ij"), -1).reshape(-1, d)


@dataclass(frozen=True)
class BandStructure:
    """Sorted eigenvalues of ``h0`` on the ``N``-point tensor grid.

    ``bands`` has shape ``(N,) * d + (n,)``; ``lipschitz`` bounds the
    variation of every band function along the torus.
    """

    quotient: QuotientGraph
    N: int
    bands: np.ndarray
    lipschitz: float

    @property
    def d(self) -> int:
        return self.quotient.d

    @property
    def slack(self) -> float:
        """Largest possible overshoot of a band between grid points."""
        return self.lipschitz * math.sqrt(self.d) / (2 * self.N)

    def grid(self) -> np.ndarray:
        return torus_grid(self.d, self.N)


def sample_bands(quotient, N: int = 64) -> BandStructure:
    quotient = _quotient(quotient)
    if N < 2:
        raise ValueError("band sampling needs at least 2 points per axis")
    h = assemble_fibers(quotient, torus_grid(quotient.d, N))
    bands = np.linalg.eigvalsh(h).reshape((N,) * quotient.d + (quotient.n,))
    return BandStructure(quotient, N, bands, lipschitz_constant(quotient))


@dataclass(frozen=True)
class IntervalUnion:
    intervals: tuple[tuple[float, float], ...]
    slack: float = 0.0

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return any(a - tol <= x <= b + tol for a, b in self.intervals)

    def contains_interval(self, a: float, b: float, tol: float = 0.0) -> bool:
        return any(lo - tol <= a and b <= hi + tol for lo, hi in self.intervals)

    @property
    def hull(self) -> tuple[float, float]:
        return self.intervals[0][0], self.intervals[-1][1]

    def __iter__(self):
        return iter(self.intervals)


def merge_intervals(intervals, tol: float = 0.0) -> tuple[tuple[float, float], ...]:
    out: list[list[float]] = []
    for a, b in sorted(intervals):
        if out and a <= out[-1][1] + tol:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return tuple((float(a), float(b)) for a, b in out)


def spectrum_h0(bands: BandStructure) -> IntervalUnion:
    """Band ranges on the sampled grid, merged into a union of intervals.

    The exact spectrum lies within ``slack`` of the returned union.
    """
    flat = bands.bands.reshape(-1, bands.quotient.n)
    ranges = zip(flat.min(axis=0), flat.max(axis=0))
    return IntervalUnion(merge_intervals(ranges), bands.slack)


@dataclass(frozen=True)
class ThresholdEstimate:
    values: tuple[float, ...]
    tolerance: float

    def distance(self, x: float) -> float:
        return min((abs(x - v) for v in self.values), default=math.inf)

    def meets(self, a: float, b: float, buffer: float = 0.0) -> bool:
        """Whether ``[a - buffer, b + buffer]`` contains an estimated threshold."""
        return any(a - buffer <= v <= b + buffer for v in self.values)


def _dedup(values, tol: float) -> tuple[float, ...]:
    out: list[float] = []
    for v in sorted(values):
        if not out or v - out[-1] > tol:
            out.append(float(v))
    return tuple(out)


def estimate_thresholds(bands: BandStructure, tol: float = 1e-6) -> ThresholdEstimate:
    """Critical values of the sampled band functions.

    A grid point is critical for band ``j`` when, along every axis, the
    forward and backward differences of ``lambda_j`` do not share a strict
    sign (a zero within ``tol`` counts as a sign change).  Global band
    extrema are always included.
    """
    b = bands.bands
    d = bands.d
    crit = np.ones(b.shape, dtype=bool)
    for axis in range(d):
        fwd = np.roll(b, -1, axis=axis) - b
        bwd = b - np.roll(b, 1, axis=axis)
        flat = (np.abs(fwd) <= tol) | (np.abs(bwd) <= tol)
        crit &= (fwd * bwd <= 0) | flat
    flat_b = b.reshape(-1, b.shape[-1])
    values = list(b[crit]) + list(flat_b.min(axis=0)) + list(flat_b.max(axis=0))
    return ThresholdEstimate(_dedup(values, tol), tol)


def _cell_arrays(f: GridFunction, d: int):
    items = [(x.site, x.cell, c) for x, c in f.items()]
    if not items:
        return np.zeros(0, int), np.zeros((0, d), int), np.zeros(0, complex)
    sites = np.array([s for s, _, _ in items], dtype=int)
    cells = np.array([c for _, c, _ in items], dtype=np.int64).reshape(-1, d)
    vals = np.array([v for _, _, v in items], dtype=complex)
    return sites, cells, vals


def floquet_transform(f: GridFunction, xi, n: int) -> np.ndarray:
    """``(U f)(xi)_j = sum_mu exp(-2 pi i xi . mu) f(j, mu)``."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    sites, cells, vals = _cell_arrays(f, len(xi))
    out = np.zeros(n, dtype=complex)
    np.add.at(out, sites, vals * np.exp(-2j * np.pi * cells @ xi))
    return out


def floquet_weighted(f: GridFunction, xi, quotient) -> np.ndarray:
    """``(I U f)(xi)``: the transform with component ``j`` scaled by ``m0_j^(1/2)``."""
    quotient = _quotient(quotient)
    return np.sqrt(np.asarray(quotient.vertex_weights)) * floquet_transform(f, xi, quotient.n)


def verify_fiber_equivalence(crystal: TopologicalCrystal, f: GridFunction, xi) -> float:
    """``|| (I U H0 f)(xi) - h0(xi) (I U f)(xi) ||`` computed along two routes."""
    h0f = schrodinger_apply(crystal, crystal.measure, crystal.potential, f)
    lhs = floquet_weighted(h0f, xi, crystal.quotient)
    rhs = assemble_fiber(crystal.quotient, xi).entries @ floquet_weighted(f, xi, crystal.quotient)
    return float(np.linalg.norm(lhs - rhs))


def warn_near_band(bands: BandStructure, a: float, b: float, tol: float = 1e-6) -> None:
    flat = bands.bands.ravel()
    if np.any(np.abs(flat - a) < tol) or np.any(np.abs(flat - b) < tol):
        warnings.warn(f"interval end within {tol} of a sampled band value; "
                      "spectral projection is discontinuous there", RuntimeWarning, stacklevel=3)
