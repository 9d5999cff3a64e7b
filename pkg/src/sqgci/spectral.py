"""
Fourier-multiplier calculus on the periodic square [0, 2pi)^2.

Fields are sampled on a uniform N x N grid with N a power of two; sample
``(i, j)`` sits at ``x = (2 pi i / N, 2 pi j / N)``, so array axis 0 carries
``x1`` and axis 1 carries ``x2``.  Fourier coefficients are normalised so
that ``f(x) = sum_k c(k) exp(i k.x)``; a constant field ``1`` has
``c(0, 0) = 1`` and ``cos(x1)`` has ``c(+-1, 0) = 1/2``.

Internally everything runs on the real-to-complex transform (scipy.fft), and
the half spectrum is laid out as ``(N, N//2 + 1)`` with ``k1`` on axis 0.
Nyquist modes (``|k_i| = N/2``) cannot carry an odd real symbol consistently,
so every multiplier annihilates them; band-limited fields never touch them.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.fft as sfft

__all__ = [
    "TorusField",
    "SpectralField",
    "MultiplierSpec",
    "Vector",
    "grid",
    "from_function",
    "cos_mode",
    "sin_mode",
    "zeros",
    "transform",
    "inverse",
    "rfft_coeffs",
    "field_from_coeffs",
    "wavenumbers",
    "apply_multiplier",
    "lowpass",
    "highpass",
    "band_leakage",
    "effective_band",
    "resample",
    "dealiased_product",
    "norm",
    "sup_norm",
    "x_norm",
    "holder_norm",
    "l2_norm",
    "pairing",
    "grad",
    "perp_grad",
    "div",
    "gradient_part",
    "vec_add",
    "vec_scale",
    "vec_sup",
    "lam",
    "riesz",
    "odd_riesz",
    "ODD_RIESZ_DIRECTIONS",
]

XI1 = np.array([3.0 / 5.0, 4.0 / 5.0])
XI2 = np.array([1.0, 0.0])
ODD_RIESZ_DIRECTIONS = (XI1, XI2)

DEFAULT_LEAKAGE_TOL = 1e-12


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("SQGCI_THREADS", "1")))
    except ValueError:
        return 1


def _is_pow2(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


# ---------------------------------------------------------------------------
# field containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TorusField:
    """Real scalar field on the N x N periodic grid.

    Parameters
    ----------
    samples : ndarray, shape (N, N)
        Grid values.  The array is converted to contiguous float64 and
        flagged read-only; the field takes ownership of it.
    band_limit : float, optional
        Declared radius ``r`` such that the spectrum vanishes for ``|k| > r``.
        The declaration is bookkeeping; :func:`band_leakage` measures it.
    """

    samples: np.ndarray
    band_limit: Optional[float] = None

    def __post_init__(self):
        a = np.ascontiguousarray(self.samples, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square 2-D array, got shape {a.shape}")
        if not _is_pow2(a.shape[0]):
            raise ValueError(f"grid size must be a power of two, got {a.shape[0]}")
        if not np.isfinite(a).all():
            raise ValueError("field samples must be finite")
        if self.band_limit is not None and self.band_limit < 0:
            raise ValueError("band_limit must be nonnegative")
        a.setflags(write=False)
        object.__setattr__(self, "samples", a)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    def mean(self) -> float:
        return float(self.samples.mean())

    def with_band(self, band_limit: Optional[float]) -> "TorusField":
        return TorusField(self.samples, band_limit)

    def _combine_band(self, other) -> Optional[float]:
        if isinstance(other, TorusField):
            if self.band_limit is None or other.band_limit is None:
                return None
            return max(self.band_limit, other.band_limit)
        return self.band_limit

    def _check_grid(self, other):
        if isinstance(other, TorusField) and other.n != self.n:
            raise ValueError(f"grid mismatch: {self.n} vs {other.n}")

    def __add__(self, other):
        self._check_grid(other)
        if isinstance(other, TorusField):
            return TorusField(self.samples + other.samples, self._combine_band(other))
        if other == 0:
            return self
        return TorusField(self.samples + other, self._combine_band(None))

    __radd__ = __add__

    def __sub__(self, other):
        self._check_grid(other)
        if isinstance(other, TorusField):
            return TorusField(self.samples - other.samples, self._combine_band(other))
        return TorusField(self.samples - other, self.band_limit)

    def __neg__(self):
        return TorusField(-self.samples, self.band_limit)

    def __mul__(self, c):
        if isinstance(c, TorusField):
            raise TypeError("use dealiased_product for field-field products")
        return TorusField(self.samples * float(c), self.band_limit)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return TorusField(self.samples / float(c), self.band_limit)

    def __repr__(self):
        return f"TorusField(n={self.n}, band_limit={self.band_limit})"


Vector = Tuple[TorusField, TorusField]


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex Fourier coefficients of a real field.

    ``coeffs`` uses the ``numpy.fft.fft2`` layout; :meth:`coeff` accepts
    signed wavevectors in ``(-N/2, N/2]``.
    """

    n: int
    coeffs: np.ndarray
    mean_zero: bool = False

    def coeff(self, k1: int, k2: int) -> complex:
        return complex(self.coeffs[k1 % self.n, k2 % self.n])

    def hermitian_defect(self) -> float:
        c = self.coeffs
        flipped = np.conj(np.roll(np.flip(c, (0, 1)), 1, axis=(0, 1)))
        return float(np.max(np.abs(c - flipped)))


@dataclass(frozen=True)
class MultiplierSpec:
    """Fourier multiplier ``k -> symbol(k1, k2)``.

    ``symbol`` receives broadcastable float arrays of integer wavenumbers and
    may misbehave at ``k = 0``; that mode always receives ``zero_mode``.
    """

    symbol: Callable[[np.ndarray, np.ndarray], np.ndarray]
    zero_mode: complex = 0.0
    name: str = dc_field(default="m", compare=False)

    def __call__(self, k1, k2):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.symbol(np.asarray(k1, dtype=float), np.asarray(k2, dtype=float))

    def __mul__(self, other: "MultiplierSpec") -> "MultiplierSpec":
        s1, s2 = self.symbol, other.symbol
        return MultiplierSpec(
            lambda k1, k2: s1(k1, k2) * s2(k1, k2),
            self.zero_mode * other.zero_mode,
            f"{self.name}*{other.name}",
        )


# ---------------------------------------------------------------------------
# grids and transforms
# ---------------------------------------------------------------------------


def grid(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Physical coordinates ``(X1, X2)`` of the N x N grid (ij indexing)."""
    x = 2.0 * np.pi * np.arange(n) / n
    return np.meshgrid(x, x, indexing="ij")


def from_function(n: int, func, band_limit=None) -> TorusField:
    x1, x2 = grid(n)
    return TorusField(func(x1, x2), band_limit)


def _phase(n: int, k) -> np.ndarray:
    # integer phase reduction keeps large carriers exact to round-off
    i = np.arange(n, dtype=np.int64)
    ph = (np.outer(i * int(k[0]), np.ones(n, dtype=np.int64))
          + np.outer(np.ones(n, dtype=np.int64), i * int(k[1]))) % n
    return 2.0 * np.pi * ph / n


def cos_mode(n: int, k, amplitude: float = 1.0) -> TorusField:
    """``amplitude * cos(k . x)`` for an integer wavevector ``k``."""
    return TorusField(amplitude * np.cos(_phase(n, k)), float(np.hypot(*k)))


def sin_mode(n: int, k, amplitude: float = 1.0) -> TorusField:
    return TorusField(amplitude * np.sin(_phase(n, k)), float(np.hypot(*k)))


def zeros(n: int) -> TorusField:
    return TorusField(np.zeros((n, n)), 0.0)


@lru_cache(maxsize=8)
def wavenumbers(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Integer wavenumbers ``(k1, k2)`` broadcastable onto the half spectrum."""
    k1 = sfft.fftfreq(n, 1.0 / n).reshape(n, 1)
    k2 = sfft.rfftfreq(n, 1.0 / n).reshape(1, n // 2 + 1)
    return k1, k2


@lru_cache(maxsize=4)
def _kmag(n: int) -> np.ndarray:
    k1, k2 = wavenumbers(n)
    out = np.hypot(k1, k2)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=4)
def _nyquist_mask(n: int) -> np.ndarray:
    m = np.ones((n, n // 2 + 1), dtype=bool)
    m[n // 2, :] = False
    m[:, n // 2] = False
    m.setflags(write=False)
    return m


def rfft_coeffs(f: TorusField) -> np.ndarray:
    """Normalised half-spectrum coefficients of ``f``."""
    return sfft.rfft2(f.samples, norm="forward", workers=_workers())


def field_from_coeffs(h: np.ndarray, n: int, band_limit=None) -> TorusField:
    return TorusField(sfft.irfft2(h, s=(n, n), norm="forward", workers=_workers()), band_limit)


def transform(f: TorusField, mean_zero: bool = False) -> SpectralField:
    """Full complex spectrum of ``f`` (``fft2`` layout, normalised).

    With ``mean_zero=True`` the ``k = 0`` coefficient is annihilated.
    """
    c = sfft.fft2(f.samples, norm="forward", workers=_workers())
    if mean_zero:
        c[0, 0] = 0.0
    return SpectralField(f.n, c, mean_zero)


def inverse(s: SpectralField, band_limit=None) -> TorusField:
    if not _is_pow2(s.n):
        raise ValueError(f"grid size must be a power of two, got {s.n}")
    c = s.coeffs
    if s.mean_zero:
        c = c.copy()
        c[0, 0] = 0.0
    x = sfft.ifft2(c, norm="forward", workers=_workers())
    scale = max(1.0, float(np.max(np.abs(x.real))))
    if np.max(np.abs(x.imag)) > 1e-10 * scale:
        raise ValueError("spectrum is not Hermitian: inverse is not real")
    return TorusField(x.real, band_limit)


# ---------------------------------------------------------------------------
# multipliers
# ---------------------------------------------------------------------------


def _symbol_on_grid(m: MultiplierSpec, n: int) -> np.ndarray:
    k1, k2 = wavenumbers(n)
    sym = np.broadcast_to(m(k1, k2), (n, n // 2 + 1)).astype(complex)
    sym[0, 0] = m.zero_mode
    sym[~_nyquist_mask(n)] = 0.0
    return sym


def _apply_symbol(h: np.ndarray, m: MultiplierSpec, n: int) -> np.ndarray:
    sym = _symbol_on_grid(m, n)
    bad = ~np.isfinite(sym)
    if bad.any():
        if np.any(h[bad] != 0):
            raise ValueError(f"symbol {m.name} is not finite at an active wavevector")
        sym[bad] = 0.0
    return h * sym


def apply_multiplier(f: TorusField, m: MultiplierSpec) -> TorusField:
    """Return the field with coefficients ``m(k) * c(k)``.

    Realness of the output relies on ``m(-k) = conj(m(k))``; the half
    spectrum transform enforces it implicitly.
    """
    h = _apply_symbol(rfft_coeffs(f), m, f.n)
    return field_from_coeffs(h, f.n, f.band_limit)


def lam(s: float = 1.0) -> MultiplierSpec:
    """``Lambda^s = (-Delta)^{s/2}``, symbol ``|k|^s``, zero mode 0."""
    return MultiplierSpec(lambda k1, k2: np.hypot(k1, k2) ** s, 0.0, f"Lambda^{s:g}")


def riesz(j: int) -> MultiplierSpec:
    """Classical Riesz transform ``R_j = d_j Lambda^{-1}``, symbol ``i k_j / |k|``."""
    if j == 1:
        return MultiplierSpec(lambda k1, k2: 1j * k1 / np.hypot(k1, k2), 0.0, "R1")
    if j == 2:
        return MultiplierSpec(lambda k1, k2: 1j * k2 / np.hypot(k1, k2), 0.0, "R2")
    raise ValueError("j must be 1 or 2")


def odd_riesz(j: int) -> MultiplierSpec:
    """Degree-0 multipliers paired with the directions (3/5, 4/5) and (1, 0).

    For every ``k != 0`` they satisfy
    ``sum_j (xi_j^perp . k)(xi_j . k) m_j(k) = |k|^2``, which splits a
    gradient into the two directional pieces up to a perpendicular gradient.
    """
    if j == 1:
        return MultiplierSpec(
            lambda k1, k2: 25.0 * (k2**2 - k1**2) / (12.0 * (k1**2 + k2**2)), 0.0, "R1o")
    if j == 2:
        return MultiplierSpec(
            lambda k1, k2: 7.0 * (k2**2 - k1**2) / (12.0 * (k1**2 + k2**2))
            + 4.0 * k1 * k2 / (k1**2 + k2**2),
            0.0,
            "R2o",
        )
    raise ValueError("j must be 1 or 2")


# ---------------------------------------------------------------------------
# projections and resampling
# ---------------------------------------------------------------------------


def lowpass(f: TorusField, r: float) -> TorusField:
    """Sharp Euclidean cutoff: keep ``|k| <= r``."""
    if r < 1:
        raise ValueError("cutoff radius must be >= 1")
    h = rfft_coeffs(f)
    h[_kmag(f.n) > r] = 0.0
    h[~_nyquist_mask(f.n)] = 0.0
    band = r if f.band_limit is None else min(r, f.band_limit)
    return field_from_coeffs(h, f.n, band)


def highpass(f: TorusField, r: float) -> TorusField:
    """Complement of :func:`lowpass`: keep ``|k| > r``."""
    h = rfft_coeffs(f)
    h[_kmag(f.n) <= r] = 0.0
    return field_from_coeffs(h, f.n, f.band_limit)


def _spectral_energy(h: np.ndarray) -> np.ndarray:
    # half-spectrum weights: interior columns stand for two modes
    w = np.full(h.shape[1], 2.0)
    w[0] = 1.0
    if h.shape[0] % 2 == 0:
        w[-1] = 1.0
    return np.abs(h) ** 2 * w


def band_leakage(f: TorusField, r: Optional[float] = None) -> float:
    """Relative L2 energy of ``f`` outside ``|k| <= r`` (default: declared band)."""
    r = f.band_limit if r is None else r
    if r is None:
        return 0.0
    e = _spectral_energy(rfft_coeffs(f))
    total = e.sum()
    if total == 0:
        return 0.0
    return float(np.sqrt(e[_kmag(f.n) > r].sum() / total))


def effective_band(f: TorusField, rtol: float = 1e-13) -> float:
    """Largest ``|k|`` whose coefficient exceeds ``rtol`` times the largest one."""
    a = np.abs(rfft_coeffs(f))
    top = a.max()
    if top == 0:
        return 0.0
    return float(_kmag(f.n)[a > rtol * top].max())


def resample(f: TorusField, n: int) -> TorusField:
    """Spectral embedding onto (or truncation to) an ``n x n`` grid.

    Refinement is exact.  Coarsening raises unless the declared band fits
    strictly inside the new Nyquist range.
    """
    if n == f.n:
        return f
    if not _is_pow2(n):
        raise ValueError(f"grid size must be a power of two, got {n}")
    h = rfft_coeffs(f)
    h[~_nyquist_mask(f.n)] = 0.0
    m = min(n, f.n)
    if n < f.n and (f.band_limit is None or f.band_limit >= n / 2):
        raise ValueError("cannot coarsen a field whose band does not fit the target grid")
    out = np.zeros((n, n // 2 + 1), dtype=complex)
    half = m // 2
    out[:half, :half] = h[:half, :half]
    out[-half + 1:, :half] = h[-half + 1:, :half]
    return field_from_coeffs(out, n, f.band_limit)


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------


def _band_or_full(f: TorusField) -> float:
    return f.band_limit if f.band_limit is not None else f.n / np.sqrt(2.0)


def dealiased_product(f: TorusField, g: TorusField, rtol: float = 1e-12) -> TorusField:
    """Exact product of two trigonometric polynomials on their common grid.

    When the declared bands satisfy ``B_f + B_g < N/2`` every product mode is
    already representable and the pointwise product is exact.  Otherwise both
    factors are zero-padded onto a ``2N`` grid, multiplied there, and the
    result is accepted only if it has no content outside the native range.
    """
    if f.n != g.n:
        raise ValueError(f"grid mismatch: {f.n} vs {g.n}")
    n = f.n
    bf, bg = _band_or_full(f), _band_or_full(g)
    band = None if (f.band_limit is None or g.band_limit is None) else bf + bg
    if bf + bg < n / 2:
        return TorusField(f.samples * g.samples, band)
    m = 2 * n
    fp, gp = resample(f, m), resample(g, m)
    h = rfft_coeffs(TorusField(fp.samples * gp.samples))
    k1, k2 = wavenumbers(m)
    outside = (np.abs(k1) >= n / 2) | (np.abs(k2) >= n / 2)
    outside = np.broadcast_to(outside, h.shape)
    scale = np.abs(h).max()
    if scale > 0 and np.abs(h[outside]).max() > rtol * scale:
        raise ValueError("product band exceeds the grid Nyquist range")
    half = n // 2
    out = np.zeros((n, half + 1), dtype=complex)
    out[:half, :half] = h[:half, :half]
    out[-half + 1:, :half] = h[-half + 1:, :half]
    return field_from_coeffs(out, n, band)


# ---------------------------------------------------------------------------
# vector calculus
# ---------------------------------------------------------------------------


def grad(f: TorusField) -> Vector:
    h = rfft_coeffs(f)
    k1, k2 = wavenumbers(f.n)
    mask = _nyquist_mask(f.n)
    return (field_from_coeffs(1j * k1 * h * mask, f.n, f.band_limit),
            field_from_coeffs(1j * k2 * h * mask, f.n, f.band_limit))


def perp_grad(f: TorusField) -> Vector:
    """``grad^perp f = (-d2 f, d1 f)``."""
    g1, g2 = grad(f)
    return (-g2, g1)


def div(v: Vector) -> TorusField:
    n = v[0].n
    k1, k2 = wavenumbers(n)
    h = 1j * k1 * rfft_coeffs(v[0]) + 1j * k2 * rfft_coeffs(v[1])
    h *= _nyquist_mask(n)
    return field_from_coeffs(h, n, _vec_band(v))


def _vec_band(v: Vector) -> Optional[float]:
    if v[0].band_limit is None or v[1].band_limit is None:
        return None
    return max(v[0].band_limit, v[1].band_limit)


def gradient_part_coeffs(v: Vector) -> np.ndarray:
    n = v[0].n
    k1, k2 = wavenumbers(n)
    k2sum = k1**2 + k2**2
    k2sum = np.where(k2sum == 0, 1.0, k2sum)
    h = rfft_coeffs(v[0]) * (-1j * k1 / k2sum)
    h += rfft_coeffs(v[1]) * (-1j * k2 / k2sum)
    h[0, 0] = 0.0
    h *= _nyquist_mask(n)
    return h


def gradient_part(v: Vector) -> TorusField:
    """Helmholtz potential ``Delta^{-1} div v`` (mean zero).

    ``v - grad(gradient_part(v))`` is divergence free, i.e. a perpendicular
    gradient on the torus (plus a constant vector).
    """
    return field_from_coeffs(gradient_part_coeffs(v), v[0].n, _vec_band(v))


def vec_add(*vs: Vector) -> Vector:
    return (sum((v[0] for v in vs[1:]), vs[0][0]), sum((v[1] for v in vs[1:]), vs[0][1]))


def vec_scale(c: float, v: Vector) -> Vector:
    return (v[0] * c, v[1] * c)


def vec_sup(v: Vector) -> float:
    return float(max(np.abs(v[0].samples).max(), np.abs(v[1].samples).max()))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def sup_norm(f: TorusField) -> float:
    return float(np.abs(f.samples).max())


def l2_norm(f: TorusField) -> float:
    """L2 norm for the normalised measure ``dx / (2 pi)^2``."""
    return float(np.sqrt(np.mean(f.samples**2)))


def pairing(f: TorusField, g: TorusField) -> float:
    """``(2 pi)^{-2} int f g dx``; exact for grid functions by discrete Parseval."""
    if f.n != g.n:
        raise ValueError(f"grid mismatch: {f.n} vs {g.n}")
    return float(np.mean(f.samples * g.samples))


def _require_mean_zero(f: TorusField, what: str, tol: float = 1e-10, floor: float = 1e-14):
    m = abs(f.mean())
    if m > tol * sup_norm(f) and m > floor:
        raise ValueError(f"{what} requires a mean-zero field (mean = {m:.3e})")


def x_norm(f: TorusField, parts: bool = False):
    """``||f||_inf + ||R1o f||_inf + ||R2o f||_inf``."""
    _require_mean_zero(f, "X norm")
    h = rfft_coeffs(f)
    s0 = sup_norm(f)
    s1 = sup_norm(field_from_coeffs(_apply_symbol(h, odd_riesz(1), f.n), f.n))
    s2 = sup_norm(field_from_coeffs(_apply_symbol(h, odd_riesz(2), f.n), f.n))
    if parts:
        return s0 + s1 + s2, (s0, s1, s2)
    return s0 + s1 + s2


def _subgrid_sup(h: np.ndarray, n: int, select: np.ndarray, m: int) -> float:
    """Max of the selected modes synthesised on an ``m x m`` subgrid of the native grid."""
    sel = np.where(select, h, 0.0)
    if m >= n:
        return float(np.abs(sfft.irfft2(sel, s=(n, n), norm="forward", workers=_workers())).max())
    half = m // 2
    out = np.zeros((m, half + 1), dtype=complex)
    out[:half, :half] = sel[:half, :half]
    out[-half + 1:, :half] = sel[-half + 1:, :half]
    return float(np.abs(sfft.irfft2(out, s=(m, m), norm="forward", workers=_workers())).max())


def holder_norm(f: TorusField, s: float, blocks: bool = False):
    """Dyadic-block proxy for the C^s norm.

    ``||P_{<=1} f||_inf + max_j 2^{js} ||Delta_j f||_inf`` with ``Delta_j`` the
    sharp annulus ``2^j <= |k| < 2^{j+1}``.  Each block is synthesised on a
    power-of-two subgrid of the native grid oversampling its band by at least
    eight per axis (the native grid itself once the block gets large).
    """
    if s < 0:
        raise ValueError("Holder exponent must be nonnegative")
    _require_mean_zero(f, "Holder norm")
    n = f.n
    h = rfft_coeffs(f)
    kmag = _kmag(n)
    low = _subgrid_sup(h, n, kmag <= 1.0, min(n, 16))
    best = 0.0
    table = []
    j = 0
    kmax = kmag[_nyquist_mask(n)].max()
    while 2.0**j <= kmax:
        sel = (kmag >= 2.0**j) & (kmag < 2.0 ** (j + 1))
        val = 0.0
        if np.any(h[sel] != 0):
            val = _subgrid_sup(h, n, sel, min(n, 2 ** (j + 4)))
        table.append((j, val))
        best = max(best, 2.0 ** (j * s) * val)
        j += 1
    if blocks:
        return low + best, low, table
    return low + best


def norm(f: TorusField, kind: str = "sup", s: Optional[float] = None) -> float:
    """Norm dispatcher: ``kind`` is ``"sup"``, ``"X"`` or ``"holder"``."""
    if kind == "sup":
        return sup_norm(f)
    if kind == "X":
        return x_norm(f)
    if kind == "holder":
        if s is None:
            raise ValueError("holder norm needs an exponent s")
        return holder_norm(f, s)
    raise ValueError(f"unknown norm kind {kind!r}")
