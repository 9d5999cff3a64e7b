"""
Correctors for Lambda acting on a modulated plane wave.

For an envelope ``a`` and an integer carrier ``c = lam * xi`` (``|xi| = 1``)

    Lambda(a cos(c.x)) = lam a cos + (xi.grad a) sin + T1[a] cos + T2[a] sin

where ``T1`` and ``T2`` are the Fourier multipliers

    T1:  (|c + k| + |c - k|) / 2 - lam
    T2:  i ((|c + k| - |c - k|) / 2 - xi.k)

The identity is exact for trigonometric polynomials; :func:`lambda_modulated`
evaluates both sides independently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import spectral as sp
from .spectral import MultiplierSpec, TorusField

__all__ = [
    "ModulatedWave",
    "LeibnizCheck",
    "integer_carrier",
    "t1_multiplier",
    "t2_multiplier",
    "t1",
    "t2",
    "lambda_modulated",
    "in_hypothesis",
]


def integer_carrier(lam: int, xi, tol: float = 1e-9) -> Tuple[int, int]:
    """Return ``lam * xi`` as an integer vector, or raise if it is not one."""
    xi = np.asarray(xi, dtype=float)
    if abs(np.hypot(*xi) - 1.0) > 1e-12:
        raise ValueError(f"direction {tuple(xi)} is not a unit vector")
    c = lam * xi
    ci = np.rint(c)
    if np.max(np.abs(c - ci)) > tol:
        raise ValueError(f"carrier {lam} * {tuple(xi)} is not an integer wavevector")
    return int(ci[0]), int(ci[1])


def _shifted_norms(lam, xi, k1, k2):
    c1, c2 = lam * xi[0], lam * xi[1]
    ck = c1 * k1 + c2 * k2
    kk = k1**2 + k2**2
    p = np.hypot(c1 + k1, c2 + k2)
    m = np.hypot(c1 - k1, c2 - k2)
    # |c +- k| - lam rewritten without cancellation
    s1 = 0.5 * ((2.0 * ck + kk) / (p + lam) + (kk - 2.0 * ck) / (m + lam))
    return p, m, s1


def t1_multiplier(lam: int, xi) -> MultiplierSpec:
    integer_carrier(lam, xi)
    xi = np.asarray(xi, dtype=float)

    def symbol(k1, k2):
        return _shifted_norms(lam, xi, k1, k2)[2]

    return MultiplierSpec(symbol, 0.0, f"T1[{lam}]")


def t2_multiplier(lam: int, xi) -> MultiplierSpec:
    integer_carrier(lam, xi)
    xi = np.asarray(xi, dtype=float)

    def symbol(k1, k2):
        p, m, s1 = _shifted_norms(lam, xi, k1, k2)
        # (p - m)/2 - xi.k = -2 (xi.k) s1 / (p + m)
        return -2j * (xi[0] * k1 + xi[1] * k2) * s1 / (p + m)

    return MultiplierSpec(symbol, 0.0, f"T2[{lam}]")


def t1(a: TorusField, lam: int, xi) -> TorusField:
    """Even corrector ``T_{1, lam xi}[a]``; annihilates constants."""
    return sp.apply_multiplier(a, t1_multiplier(lam, xi))


def t2(a: TorusField, lam: int, xi) -> TorusField:
    """Odd corrector ``T_{2, lam xi}[a]`` (imaginary odd symbol, real output)."""
    return sp.apply_multiplier(a, t2_multiplier(lam, xi))


def in_hypothesis(r: Optional[float], lam: float) -> bool:
    """Envelope band inside the operator-bound window ``10 <= r <= lam / 2``."""
    return r is not None and 10.0 <= r <= 0.5 * lam


@dataclass(frozen=True)
class ModulatedWave:
    """``envelope(x) * cos(carrier_freq * direction . x)``."""

    envelope: TorusField
    carrier_freq: int
    direction: Tuple[float, float]

    def __post_init__(self):
        integer_carrier(self.carrier_freq, self.direction)

    @property
    def carrier(self) -> Tuple[int, int]:
        return integer_carrier(self.carrier_freq, self.direction)

    @property
    def in_hypothesis(self) -> bool:
        return in_hypothesis(self.envelope.band_limit, self.carrier_freq)

    def field(self) -> TorusField:
        return sp.dealiased_product(self.envelope, sp.cos_mode(self.envelope.n, self.carrier))


@dataclass(frozen=True)
class LeibnizCheck:
    direct: TorusField
    decomposed: TorusField
    rel_error: float
    in_hypothesis: bool


def lambda_modulated(a: TorusField, lam: int, xi, rtol: float = 1e-10) -> LeibnizCheck:
    """Compute ``Lambda(a cos(lam xi.x))`` directly and by the four-term split.

    Raises ``ArithmeticError`` when the two disagree by more than ``rtol``
    (relative sup norm), which can only mean a broken symbol.
    """
    wave = ModulatedWave(a, lam, tuple(np.asarray(xi, dtype=float)))
    c = wave.carrier
    n = a.n
    cos_c, sin_c = sp.cos_mode(n, c), sp.sin_mode(n, c)

    direct = sp.apply_multiplier(wave.field(), sp.lam(1.0))

    g1, g2 = sp.grad(a)
    xi_grad = g1 * float(xi[0]) + g2 * float(xi[1])
    prod = sp.dealiased_product
    decomposed = (
        prod(a, cos_c) * float(lam)
        + prod(xi_grad, sin_c)
        + prod(t1(a, lam, xi), cos_c)
        + prod(t2(a, lam, xi), sin_c)
    )
    scale = max(sp.sup_norm(direct), 1e-300)
    err = sp.sup_norm(direct - decomposed) / scale
    if err > rtol:
        raise ArithmeticError(f"modulated-wave decomposition mismatch: {err:.3e}")
    return LeibnizCheck(direct, decomposed, err, wave.in_hypothesis)
