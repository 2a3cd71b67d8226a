"""Spectral filters, time evolution and wave-operator probes.

The periodic operator is handled fiber by fiber: a state on a ring of ``N``
cells per axis is Fourier transformed, every fiber ``h0(xi)`` is
diagonalised once, and functions of ``H0`` act by multiplying eigenvalues.
The torus points are ``(k + offset) / N``; the default offset of one half is
the midpoint rule, which never lands on the symmetry points where band edges
sit.

States of the periodic operator are stored in the coordinates
``a = m0^(1/2) f``, the same coordinates a finite section uses for ``J f``
(``m^(1/2) J f = m0^(1/2) f``), so ``J`` needs no work between the two.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .bloch import _quotient, assemble_fibers, estimate_thresholds, sample_bands
from .graph import GridFunction, Vertex
from .spectral import FiniteSection, NumericalRefusal, as_perturbed, finite_section

__all__ = ["FiberedH0", "band_filter", "evolve", "evolve_section", "chebyshev_degree",
           "WaveProbe", "wave_probe", "gaussian_packet"]


class FiberedH0:
    """``H0`` on a ring of ``N`` cells per axis, diagonalised fiber by fiber."""

    def __init__(self, quotient, N: int, offset: float = 0.5):
        q = _quotient(quotient)
        if N < 2:
            raise ValueError("ring needs at least 2 cells per axis")
        self.quotient, self.N, self.offset = q, int(N), float(offset)
        self.d, self.n = q.d, q.n
        axis = (np.arange(N) + offset) / N
        grid = np.stack(np.meshgrid(*([axis] * self.d), indexing="ij"), -1).reshape(-1, self.d)
        self.xis = grid
        self.values, self.vectors = np.linalg.eigh(assemble_fibers(q, grid))
        centred = (np.arange(N) + N // 2) % N - N // 2
        mesh = np.stack(np.meshgrid(*([centred] * self.d), indexing="ij"), -1)
        self.cells = mesh  # shape (N,)*d + (d,), centred cell of each ring slot
        self._twist = np.exp(-2j * np.pi * offset * mesh.sum(axis=-1) / N)[..., None]
        self.sqrt_m0 = np.sqrt(np.asarray(q.vertex_weights))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d + (self.n,)

    def half_width(self) -> int:
        return (self.N - 1) // 2

    # -- conversions -----------------------------------------------------
    def to_array(self, f: GridFunction) -> np.ndarray:
        """Ring array of ``m0^(1/2) f``; the support must fit inside the ring."""
        a = np.zeros(self.shape, dtype=complex)
        h = self.half_width()
        for x, c in f.items():
            if any(abs(k) > h for k in x.cell):
                raise ValueError(f"{x} does not fit on a ring of {self.N} cells")
            a[tuple(k % self.N for k in x.cell) + (x.site,)] += self.sqrt_m0[x.site] * c
        return a

    def to_function(self, a: np.ndarray, cutoff: float = 0.0) -> GridFunction:
        f = a / self.sqrt_m0
        out = {}
        for idx in zip(*np.nonzero(np.abs(f) > cutoff)):
            cell = tuple(int(c) for c in self.cells[idx[:-1]])
            out[Vertex(int(idx[-1]), cell)] = f[idx]
        return GridFunction(out)

    def box_slice(self, a: np.ndarray, L: int) -> np.ndarray:
        """Values on ``|mu|_inf <= L`` ordered like the rows of a finite section."""
        if 2 * L + 1 > self.N:
            raise ValueError("box does not fit on the ring")
        idx = np.arange(-L, L + 1) % self.N
        sub = a[np.ix_(*([idx] * self.d))] if self.d > 1 else a[idx]
        return sub.reshape(-1)

    def from_box(self, v: np.ndarray, L: int) -> np.ndarray:
        a = np.zeros(self.shape, dtype=complex)
        idx = np.arange(-L, L + 1) % self.N
        block = v.reshape((2 * L + 1,) * self.d + (self.n,))
        if self.d > 1:
            a[np.ix_(*([idx] * self.d))] = block
        else:
            a[idx] = block
        return a

    # -- functional calculus -------------------------------------------
    def apply(self, a: np.ndarray, fn) -> np.ndarray:
        """``g(H0) a`` for ``g = fn(eigenvalues)`` evaluated fiberwise."""
        axes = tuple(range(self.d))
        fa = np.fft.fftn(a * self._twist, axes=axes).reshape(-1, self.n)
        coeff = np.einsum("kji,kj->ki", self.vectors.conj(), fa)
        coeff *= fn(self.values)
        fa = np.einsum("kij,kj->ki", self.vectors, coeff).reshape(self.shape)
        return np.fft.ifftn(fa, axes=axes) / self._twist

    def projector(self, a: np.ndarray, interval) -> np.ndarray:
        lo, hi = interval
        return self.apply(a, lambda lam: ((lam >= lo) & (lam <= hi)).astype(float))

    def propagate(self, a: np.ndarray, t: float) -> np.ndarray:
        """``exp(-i H0 t) a``."""
        return self.apply(a, lambda lam: np.exp(-1j * lam * t))

    def near_band(self, value: float, tol: float = 1e-6) -> bool:
        return bool(np.any(np.abs(self.values - value) < tol))


def _ring_size(f: GridFunction, minimum: int = 64) -> int:
    reach = max((max(abs(c) for c in x.cell) for x in f), default=0)
    N = minimum
    while (N - 1) // 2 < 2 * reach + 8:
        N *= 2
    return N


def band_filter(quotient, psi: GridFunction, interval, N: int | None = None,
                cutoff: float = 0.0) -> GridFunction:
    """``E^{H0}(I) psi`` by fiberwise spectral projection on an ``N``-point torus grid.

    Warns when an end of ``interval`` is within ``1e-6`` of a sampled band
    value, where the projection is discontinuous.
    """
    q = _quotient(quotient)
    N = _ring_size(psi) if N is None else N
    fib = FiberedH0(q, N)
    for end in interval:
        if fib.near_band(end):
            warnings.warn(f"interval end {end} within 1e-6 of a sampled band value; "
                          "the projection is discontinuous there", RuntimeWarning, stacklevel=2)
    return fib.to_function(fib.projector(fib.to_array(psi), interval), cutoff)


def chebyshev_degree(z: float, tol: float) -> int:
    """Smallest ``K`` with ``2 sum_{k > K} (z/2)^k / k! <= tol``."""
    z = abs(z)
    K = max(int(math.ceil(z)), 1)
    while True:
        # log of the first omitted term; the rest is a geometric tail once K + 2 > z
        log_term = (K + 1) * math.log(max(z / 2, 1e-300)) - math.lgamma(K + 2)
        ratio = z / (2 * (K + 2))
        if ratio < 1 and math.log(2) + log_term - math.log(1 - ratio) <= math.log(tol):
            return K
        K += max(1, K // 16)


def evolve_section(section: FiniteSection, v: np.ndarray, t: float, tol: float = 1e-10,
                   max_degree: int = 200_000, spectrum=None) -> np.ndarray:
    """``exp(-i A t) v`` by a Chebyshev expansion on an enclosing interval of the spectrum.

    ``spectrum=(lo, hi)`` defaults to the Gershgorin interval of the section.
    Raises :class:`NumericalRefusal` if the required degree exceeds
    ``max_degree``.
    """
    if t == 0:
        return np.array(v, dtype=complex, copy=True)
    a = section.matrix
    lo, hi = section.gershgorin() if spectrum is None else spectrum
    centre, half = 0.5 * (lo + hi), max(0.5 * (hi - lo), 1e-12)
    z = half * t
    K = chebyshev_degree(z, tol)
    if K > max_degree:
        raise NumericalRefusal(f"evolution to t={t} needs Chebyshev degree {K} > {max_degree}")
    # exp(-i z x) = J0(z) + 2 sum_k (-i)^k Jk(z) Tk(x)
    coef = special.jv(np.arange(K + 1), abs(z))
    phases = (-1j * np.sign(z)) ** np.arange(K + 1)
    coef = coef * phases
    coef[1:] *= 2

    def scaled(x):
        return (a @ x - centre * x) / half

    t0 = np.asarray(v, dtype=complex)
    t1 = scaled(t0)
    out = coef[0] * t0 + coef[1] * t1
    for k in range(2, K + 1):
        t0, t1 = t1, 2 * scaled(t1) - t0
        out += coef[k] * t1
    return np.exp(-1j * centre * t) * out


def evolve(op, state, t: float, **kw):
    """``exp(-i H t)`` applied to ``state`` for a section (vector) or a fibered ``H0`` (ring array)."""
    if isinstance(op, FiberedH0):
        return op.propagate(state, t)
    if isinstance(op, FiniteSection):
        return evolve_section(op, state, t, **kw)
    raise TypeError(f"cannot evolve with {type(op).__name__}")


def gaussian_packet(quotient, sigma: float, xi0, band_vector=None, centre=None) -> GridFunction:
    """``exp(-|mu - c|^2 / (2 sigma^2) + 2 pi i xi0 . mu) v / m0^(1/2)`` on ``|mu - c|_inf <= 8 sigma``."""
    q = _quotient(quotient)
    xi0 = np.atleast_1d(np.asarray(xi0, float))
    centre = np.zeros(q.d) if centre is None else np.asarray(centre, float)
    v = np.ones(q.n) / math.sqrt(q.n) if band_vector is None else np.asarray(band_vector)
    r = int(math.ceil(8 * sigma))
    axis = np.arange(-r, r + 1)
    cells = np.stack(np.meshgrid(*([axis] * q.d), indexing="ij"), -1).reshape(-1, q.d)
    cells = cells + np.round(centre).astype(int)
    amp = np.exp(-np.sum((cells - centre) ** 2, axis=1) / (2 * sigma ** 2)
                 + 2j * np.pi * cells @ xi0)
    sq = np.sqrt(np.asarray(q.vertex_weights))
    return GridFunction({Vertex(j, tuple(int(c) for c in cell)): amp[i] * v[j] / sq[j]
                         for i, cell in enumerate(cells) for j in range(q.n)})


@dataclass(frozen=True)
class WaveProbe:
    interval: tuple[float, float]
    times: tuple[float, ...]
    cauchy: tuple[float, ...]
    boundary_mass: float
    norm_drift: float
    L: int
    N: int
    xi0: tuple[float, ...]
    valid: bool
    notes: tuple[str, ...] = field(default_factory=tuple)

    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.cauchy, self.cauchy[1:]))


def _pick_momentum(quotient, interval, grid: int = 256):
    """Torus point and fiber eigenvector whose band value is closest to the interval midpoint."""
    fib = FiberedH0(quotient, grid, offset=0.0)
    mid = 0.5 * (interval[0] + interval[1])
    k, b = np.unravel_index(np.argmin(np.abs(fib.values - mid)), fib.values.shape)
    return tuple(float(v) for v in fib.xis[k]), fib.vectors[k][:, b]


def _strip_mass(a_box: np.ndarray, section: FiniteSection, width: int) -> float:
    outer = np.abs(section.cells).max(axis=1) > section.L - width
    return float(np.sum(np.abs(a_box[outer]) ** 2))


def wave_probe(op, interval, psi: GridFunction | None = None, times=(10, 20, 40, 80),
               L: int | None = None, sigma: float = 16.0, buffer: float = 0.05,
               boundary_tol: float = 1e-6, tol: float = 1e-12, max_L: int = 4096,
               threshold_grid: int = 64) -> WaveProbe:
    """Cauchy differences ``||w(2T) - w(T)||`` of ``w(t) = exp(iHt) J exp(-iH0 t) E(I) psi``.

    ``psi`` defaults to a Gaussian packet of width ``sigma`` whose momentum
    sits at the middle of ``interval``.  Free evolution is exact on a ring;
    the perturbed evolution runs on a finite section.  Unless ``L`` is given
    the box is doubled until every intermediate state keeps at most
    ``boundary_tol`` of its mass in the outer strip ``|mu|_inf > L - L/8``
    (or ``max_L`` is reached, which flags the probe invalid).
    """
    pg = as_perturbed(op)
    q = pg.crystal.quotient
    a, b = map(float, interval)
    bands = sample_bands(q, threshold_grid)
    th = estimate_thresholds(bands)
    if th.meets(a, b, buffer):
        raise ValueError(f"interval [{a}, {b}] is within {buffer} of a threshold {th.values}")
    flat = bands.bands.reshape(-1, q.n)
    if not any(lo <= a and b <= hi for lo, hi in zip(flat.min(axis=0), flat.max(axis=0))):
        raise ValueError(f"interval [{a}, {b}] is not inside a single band")
    xi0, vec = _pick_momentum(q, (a, b))
    if psi is None:
        psi = gaussian_packet(q, sigma, xi0, vec)
    times = tuple(float(t) for t in times)
    stamps = sorted(set(times) | {2 * t for t in times})
    notes: list[str] = []
    L_try = L if L is not None else 64
    while True:
        N = 1 << int(math.ceil(math.log2(2 * (2 * L_try + 1))))
        fib = FiberedH0(q, N)
        a0 = fib.projector(fib.to_array(psi), (a, b))
        norm0 = math.sqrt(float(np.sum(np.abs(a0) ** 2)))
        if norm0 == 0:
            raise ValueError("the filtered state vanishes; choose another interval or state")
        a0 /= norm0
        section = finite_section(pg, L_try)
        width = max(4, L_try // 8)
        spectrum = section.gershgorin()
        free = {t: fib.propagate(a0, t) for t in stamps}
        outside = max(1.0 - float(np.sum(np.abs(fib.box_slice(s, L_try)) ** 2)) for s in free.values())
        mass = max(_strip_mass(fib.box_slice(s, L_try), section, width) for s in free.values())
        mass = max(mass, outside)
        w = {}
        drift = 0.0
        if mass <= boundary_tol or L is not None or 2 * L_try > max_L:
            for t in stamps:
                v = fib.box_slice(free[t], L_try)
                wt = evolve_section(section, v, -t, tol=tol, spectrum=spectrum)
                drift = max(drift, abs(np.linalg.norm(wt) - np.linalg.norm(v)))
                mass = max(mass, _strip_mass(wt, section, width))
                w[t] = wt
        if w and (mass <= boundary_tol or L is not None or 2 * L_try > max_L):
            break
        L_try *= 2
    valid = mass <= boundary_tol
    if not valid:
        notes.append(f"boundary mass {mass:.3g} exceeds {boundary_tol:.3g}")
    cauchy = tuple(float(np.linalg.norm(w[2 * t] - w[t])) for t in times)
    return WaveProbe((a, b), times, cauchy, mass, drift, L_try, N, xi0, valid, tuple(notes))
