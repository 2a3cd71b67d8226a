"""Finite sections of ``H`` and ``H0`` and their eigenvalues.

A finite section keeps the cells ``|mu|_inf <= L`` and all sites.  It is the
compression ``P H P`` written in the orthonormal basis ``m(x)^(-1/2) delta_x``:
edges leaving the box are dropped from the hopping part while the diagonal
keeps the full degree (Dirichlet truncation).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse import linalg as spla

from .bloch import estimate_thresholds, sample_bands
from .crystal import TopologicalCrystal
from .graph import GridFunction, Vertex
from .kernels import box_cells
from .perturbation import PerturbedGraph

__all__ = ["FiniteSection", "NumericalRefusal", "EigenResult", "finite_section",
           "eigensolve_section", "count_eigenvalues_in", "CountResult", "as_perturbed",
           "section_norm", "memory_estimate"]

DENSE_LIMIT = 4096


class NumericalRefusal(RuntimeError):
    """A computation was refused because it exceeds a configured resource limit."""


def as_perturbed(op) -> PerturbedGraph:
    if isinstance(op, PerturbedGraph):
        return op
    if isinstance(op, TopologicalCrystal):
        return PerturbedGraph(op)
    raise TypeError(f"expected a crystal or a perturbed graph, got {type(op).__name__}")


@dataclass(frozen=True)
class FiniteSection:
    """Hermitian matrix of ``H`` on a box, rows ordered by (cell, site)."""

    L: int
    n: int
    d: int
    matrix: sp.csr_matrix
    sites: np.ndarray
    cells: np.ndarray
    sqrt_m: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def index(self, x: Vertex) -> int:
        side = 2 * self.L + 1
        if any(abs(c) > self.L for c in x.cell):
            raise KeyError(f"{x} lies outside the box")
        flat = 0
        for c in x.cell:
            flat = flat * side + (c + self.L)
        return flat * self.n + x.site

    def vertex(self, row: int) -> Vertex:
        return Vertex(int(self.sites[row]), tuple(int(c) for c in self.cells[row]))

    def to_vector(self, f: GridFunction) -> np.ndarray:
        """Orthonormal coordinates ``m(x)^(1/2) f(x)``; values outside the box are dropped."""
        v = np.zeros(self.size, dtype=complex)
        for x, c in f.items():
            if all(abs(k) <= self.L for k in x.cell):
                i = self.index(x)
                v[i] = self.sqrt_m[i] * c
        return v

    def from_vector(self, v: np.ndarray) -> GridFunction:
        f = v / self.sqrt_m
        return GridFunction({self.vertex(i): f[i] for i in np.flatnonzero(f)})

    def inner_mask(self, fraction: float = 0.5) -> np.ndarray:
        """Rows with ``|mu|_inf <= fraction * L``."""
        return np.abs(self.cells).max(axis=1) <= fraction * self.L

    def gershgorin(self) -> tuple[float, float]:
        a = self.matrix
        diag = a.diagonal()
        radius = np.asarray(abs(a).sum(axis=1)).ravel() - np.abs(diag)
        return float((diag - radius).min()), float((diag + radius).max())


def _degree_parts(pg: PerturbedGraph, sites: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Full ``sum m(e)`` over surviving crystal edges and added edges, per row."""
    q = pg.crystal.quotient
    total = np.zeros(len(sites))
    removed = pg.perturbation.removed
    for e in q.oriented_edges():
        rows = sites == e.origin
        c = cells[rows]
        key_cells = c + e.index if e.reversed else c
        w = pg.m_edges(np.full(len(c), e.number), key_cells)
        if removed:
            gone = np.array([(e.number, tuple(int(v) for v in k)) in removed for k in key_cells],
                            dtype=bool)
            w = np.where(gone, 0.0, w)
        total[rows] += w
    if pg.kernel is not None:
        for j in range(pg.n):
            rows = sites == j
            total[rows] += pg.kernel.raw_degrees(j, cells[rows])
    return total


def finite_section(op, L: int, max_size: int = 2_000_000,
                   max_entries: int = 50_000_000) -> FiniteSection:
    """Compression of ``H`` (perturbed graph) or ``H0`` (crystal) to the box of radius ``L``."""
    pg = as_perturbed(op)
    if L < 1:
        raise ValueError("box radius must be at least 1")
    n, d = pg.n, pg.dimension
    size = n * (2 * L + 1) ** d
    if size > max_size:
        raise NumericalRefusal(f"section of size {size} exceeds {max_size}; lower L")
    if pg.kernel is not None and pg.kernel.kind == "complete" and size * size / 2 > max_entries:
        raise NumericalRefusal(f"complete kernel gives about {size * size // 2} entries; lower L")
    cells = np.repeat(box_cells(d, L), n, axis=0)
    sites = np.tile(np.arange(n), (2 * L + 1) ** d)
    m = pg.m_vertices(sites, cells)
    sqrt_m = np.sqrt(m)
    diag = _degree_parts(pg, sites, cells) / m + pg.r_vertices(sites, cells)

    side = 2 * L + 1
    weights_of = np.array([side ** (d - 1 - a) for a in range(d)], dtype=np.int64)

    def rows_of(s, c):
        return ((c + L) @ weights_of) * n + s

    rows, cols, vals = [], [], []
    os_, oc, ts, tc, num = pg.crystal.box_edges(L)
    if len(num):
        w = pg.m_edges(num, oc)
        if pg.perturbation.removed:
            gone = np.array([(int(q), tuple(int(v) for v in c)) in pg.perturbation.removed
                             for q, c in zip(num, oc)], dtype=bool)
            w = np.where(gone, 0.0, w)
        rows.append(rows_of(os_, oc))
        cols.append(rows_of(ts, tc))
        vals.append(w)
    if pg.kernel is not None:
        os_, oc, ts, tc, w = pg.kernel.box_edges(L)
        if len(w):
            rows.append(rows_of(os_, oc))
            cols.append(rows_of(ts, tc))
            vals.append(w)
    if rows:
        r, c, w = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
        off = -w / (sqrt_m[r] * sqrt_m[c])
        r, c, off = np.concatenate([r, c]), np.concatenate([c, r]), np.concatenate([off, off])
    else:
        r = c = np.zeros(0, dtype=np.int64)
        off = np.zeros(0)
    idx = np.arange(size)
    mat = sp.coo_matrix((np.concatenate([off, diag]), (np.concatenate([r, idx]),
                                                       np.concatenate([c, idx]))),
                        shape=(size, size)).tocsr()
    mat.sum_duplicates()
    return FiniteSection(L, n, d, mat, sites, cells, sqrt_m)


@dataclass(frozen=True)
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray | None
    residual: float
    complete: bool
    method: str


def _residual(a, values, vectors) -> float:
    if vectors is None or not len(values):
        return 0.0
    r = a @ vectors - vectors * values
    return float(np.linalg.norm(r, axis=0).max())


def eigensolve_section(section: FiniteSection, vectors: bool = False, window=None,
                       dense_limit: int = DENSE_LIMIT, tol: float = 1e-9) -> EigenResult:
    """Sorted eigenvalues of a section.

    Sections up to ``dense_limit`` rows are solved densely.  Larger ones
    need ``window=(a, b)``; eigenpairs near the window are then found by
    shift-invert Lanczos, enlarging the request until the window is covered.
    A pair whose residual exceeds ``tol * ||A||`` marks the result incomplete.
    """
    a = section.matrix
    lo, hi = section.gershgorin()
    scale = max(abs(lo), abs(hi), 1.0)
    if section.size <= dense_limit:
        dense = a.toarray()
        w, v = np.linalg.eigh(dense)
        res = _residual(dense, w, v)
        return EigenResult(w, v if vectors else None, res, res <= tol * scale, "dense")
    if window is None:
        raise NumericalRefusal(f"section of size {section.size} needs an eigenvalue window "
                               f"for the iterative solver")
    wa, wb = window
    centre, half = 0.5 * (wa + wb), 0.5 * (wb - wa)
    k = 16
    while True:
        k = min(k, section.size - 2)
        w, v = spla.eigsh(a, k=k, sigma=centre, which="LM")
        order = np.argsort(w)
        w, v = w[order], v[:, order]
        covered = np.abs(w - centre).max() > half
        if covered or k >= section.size - 2:
            break
        if k >= 2048:
            return EigenResult(w, v if vectors else None, _residual(a, w, v), False, "lanczos")
        k *= 2
    keep = (w >= wa) & (w <= wb)
    w, v = w[keep], v[:, keep]
    res = _residual(a, w, v)
    return EigenResult(w, v if vectors else None, res, res <= tol * scale, "lanczos")


@dataclass(frozen=True)
class CountResult:
    interval: tuple[float, float]
    Ls: tuple[int, ...]
    counts: tuple[int, ...]
    raw_counts: tuple[int, ...]
    eigenvalues: tuple[tuple[float, ...], ...]
    residuals: tuple[float, ...]
    stable: bool

    @property
    def verdict(self) -> str:
        return "stable" if self.stable else "unstable"


def count_eigenvalues_in(op, interval, Ls=(128, 256, 512), localization: float = 0.9,
                         buffer: float = 0.05, grid: int = 64) -> CountResult:
    """Localized section eigenvalues in ``interval`` for each box radius.

    An eigenpair is localized when at least ``localization`` of its mass
    sits in ``|mu|_inf <= L/2``.  The counts are stable when the two largest
    boxes agree.  ``interval`` must stay ``buffer`` away from the estimated
    thresholds of the periodic operator.
    """
    pg = as_perturbed(op)
    a, b = map(float, interval)
    if not a < b:
        raise ValueError("interval must satisfy a < b")
    th = estimate_thresholds(sample_bands(pg.crystal.quotient, grid))
    if th.meets(a, b, buffer):
        raise ValueError(f"interval [{a}, {b}] is within {buffer} of a threshold {th.values}")
    counts, raw, values, residuals = [], [], [], []
    for L in sorted(int(x) for x in Ls):
        sec = finite_section(pg, L)
        res = eigensolve_section(sec, vectors=True, window=(a, b))
        sel = (res.values >= a) & (res.values <= b)
        vec = res.vectors[:, sel]
        mass = np.sum(np.abs(vec[sec.inner_mask()]) ** 2, axis=0)
        loc = mass >= localization
        counts.append(int(loc.sum()))
        raw.append(int(sel.sum()))
        values.append(tuple(float(v) for v in res.values[sel][loc]))
        residuals.append(res.residual)
    stable = len(counts) >= 2 and counts[-1] == counts[-2]
    return CountResult((a, b), tuple(sorted(int(x) for x in Ls)), tuple(counts), tuple(raw),
                       tuple(values), tuple(residuals), stable)


def section_norm(section: FiniteSection) -> float:
    """``max |eigenvalue|`` of a section, via its extremal eigenvalues."""
    if section.size <= DENSE_LIMIT:
        w = np.linalg.eigvalsh(section.matrix.toarray())
        return float(np.abs(w).max())
    big = spla.eigsh(section.matrix, k=1, which="LA", return_eigenvectors=False)[0]
    small = spla.eigsh(section.matrix, k=1, which="SA", return_eigenvectors=False)[0]
    return float(max(abs(big), abs(small)))


def memory_estimate(op, L: int) -> int:
    """Bytes of a dense copy of the section (used by the command line to refuse early)."""
    pg = as_perturbed(op)
    size = pg.n * (2 * L + 1) ** pg.dimension
    return 8 * size * size
