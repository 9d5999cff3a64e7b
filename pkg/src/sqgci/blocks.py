"""
Building blocks of one half-step: amplitudes, the high-frequency increment
and the exact splitting of its self-interaction ``Lambda M grad^perp M``.

Directions are ``xi_1 = (3/5, 4/5)`` and ``xi_2 = (1, 0)``; with
``lam_c = 5 * lam`` both carriers ``lam_c * xi_j`` are integer wavevectors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from . import spectral as sp
from .corrector import integer_carrier, t1, t2
from .spectral import ODD_RIESZ_DIRECTIONS, TorusField, Vector

__all__ = [
    "AmplitudePositivityError",
    "InductiveHypothesisWarning",
    "AmplitudePair",
    "Increment",
    "NonlinearParts",
    "PART_NAMES",
    "amplitude_prefactor",
    "make_amplitudes",
    "carrier_vectors",
    "make_increment",
    "nonlinear_term",
    "iter_nonlinear_parts",
    "decompose_nonlinear",
    "calibrate_kappa",
]

CARRIER_SCALE = 5
PART_NAMES = ("curl", "main", "NO", "O1", "O2", "O3", "O4", "O5", "O6")


class AmplitudePositivityError(ValueError):
    """The radicand of an amplitude is not positive somewhere on the grid."""


class InductiveHypothesisWarning(UserWarning):
    pass


def _sign(parity: str) -> float:
    if parity == "A":
        return -1.0
    if parity == "B":
        return 1.0
    raise ValueError(f"parity must be 'A' or 'B', got {parity!r}")


def amplitude_prefactor(delta: float, lam_next: float, kappa: float = 1.0) -> float:
    """``kappa * sqrt(2 delta / (5 lam_next))``."""
    return kappa * np.sqrt(2.0 * delta / (CARRIER_SCALE * lam_next))


@dataclass(frozen=True)
class AmplitudePair:
    a1: TorusField
    a2: TorusField
    parity: str
    delta: float
    lam_next: int
    c0: float
    kappa: float
    radicand_min: float

    @property
    def amplitudes(self) -> Tuple[TorusField, TorusField]:
        return self.a1, self.a2


def make_amplitudes(Gt: TorusField, delta: float, lam_next: int, c0: float = 2.0,
                    parity: str = "A", kappa: float = 1.0) -> AmplitudePair:
    """Amplitudes ``a_j = kappa sqrt(2 delta / (5 lam)) sqrt(c0 -+ R_j^o Gt / delta)``.

    Parity ``A`` takes the minus sign, ``B`` the plus sign.

    Raises
    ------
    AmplitudePositivityError
        If a radicand is nonpositive anywhere.
    """
    sign = _sign(parity)
    if delta <= 0:
        raise ValueError("delta must be positive")
    xn = sp.x_norm(Gt)
    if xn > delta:
        warnings.warn(f"||Gt||_X = {xn:.4g} exceeds delta = {delta:.4g}",
                      InductiveHypothesisWarning, stacklevel=2)
    pref = amplitude_prefactor(delta, lam_next, kappa)
    out = []
    rmin = np.inf
    for j in (1, 2):
        rj = sp.apply_multiplier(Gt, sp.odd_riesz(j))
        rad = c0 + sign * rj.samples / delta
        m = float(rad.min())
        rmin = min(rmin, m)
        if m <= 0:
            raise AmplitudePositivityError(
                f"amplitude radicand {j} reaches {m:.4g} (parity {parity})")
        out.append(TorusField(pref * np.sqrt(rad)))
    return AmplitudePair(out[0], out[1], parity, delta, lam_next, c0, kappa, rmin)


def carrier_vectors(lam_next: int) -> List[Tuple[int, int]]:
    lam_c = CARRIER_SCALE * lam_next
    return [integer_carrier(lam_c, xi) for xi in ODD_RIESZ_DIRECTIONS]


@dataclass(frozen=True)
class Increment:
    """``M = sum_j P_{<=r} a_j cos(5 lam xi_j . x)``."""

    M: TorusField
    envelopes: Tuple[TorusField, TorusField]
    r_cutoff: float
    lam_next: int
    parity: str
    leakage: float

    @property
    def lam_carrier(self) -> int:
        return CARRIER_SCALE * self.lam_next

    @property
    def carriers(self) -> List[Tuple[int, int]]:
        return carrier_vectors(self.lam_next)


def _support_leakage(f: TorusField, carriers, r: float) -> float:
    h = sp.rfft_coeffs(f)
    k1, k2 = sp.wavenumbers(f.n)
    inside = np.zeros(h.shape, dtype=bool)
    for c in carriers:
        for s in (1, -1):
            inside |= np.hypot(k1 - s * c[0], k2 - s * c[1]) <= r + 1e-9
    e = sp._spectral_energy(h)
    tot = e.sum()
    return 0.0 if tot == 0 else float(np.sqrt(e[~inside].sum() / tot))


def make_increment(amps: AmplitudePair, r_cutoff: float,
                   leakage_tol: float = 1e-10) -> Increment:
    """Low-pass the amplitudes at ``r_cutoff`` and modulate them.

    Raises ``ValueError`` if ``r_cutoff`` is not below the carrier frequency
    or if ``M`` has spectral energy outside the discs ``|k -+ c_j| <= r``.
    """
    lam_next = amps.lam_next
    lam_c = CARRIER_SCALE * lam_next
    if not 1 <= r_cutoff < lam_c:
        raise ValueError(f"cutoff {r_cutoff} must lie in [1, {lam_c})")
    n = amps.a1.n
    env = tuple(sp.lowpass(a, r_cutoff) for a in amps.amplitudes)
    carriers = carrier_vectors(lam_next)
    M = sum(sp.dealiased_product(e, sp.cos_mode(n, c)) for e, c in zip(env, carriers))
    leak = _support_leakage(M, carriers, r_cutoff)
    if leak > leakage_tol:
        raise ValueError(f"increment leaks outside the carrier discs: {leak:.3e}")
    return Increment(M, env, float(r_cutoff), lam_next, amps.parity, leak)


def nonlinear_term(inc: Increment) -> Vector:
    """``Lambda M grad^perp M`` by direct dealiased products."""
    LM = sp.apply_multiplier(inc.M, sp.lam(1.0))
    p1, p2 = sp.perp_grad(inc.M)
    return sp.dealiased_product(LM, p1), sp.dealiased_product(LM, p2)


def _perp(xi) -> Tuple[float, float]:
    return float(-xi[1]), float(xi[0])


def _sv(scalar: TorusField, vec) -> Vector:
    """Scalar field times a constant vector."""
    return scalar * vec[0], scalar * vec[1]


def _fv(scalar: TorusField, v: Vector) -> Vector:
    """Scalar field times a vector field."""
    return sp.dealiased_product(scalar, v[0]), sp.dealiased_product(scalar, v[1])


def iter_nonlinear_parts(inc: Increment) -> Iterator[Tuple[str, Vector]]:
    """Yield the exact pieces of ``Lambda M grad^perp M`` one at a time.

    Pieces (``lam = 5 lam_next``, ``D_j = xi_j.grad a_j + T2_j a_j``,
    ``E_j = T1_j a_j``, ``c_j, s_j = cos, sin(lam xi_j.x)``):

    ``curl``  ``lam/2 grad^perp(M^2)``
    ``main``  ``-lam/2 sum_j (xi_j.grad a_j) a_j xi_j^perp``
    ``NO``    ``sum_j [-lam/2 T2_j a_j xi_j^perp + 1/2 E_j grad^perp a_j]``
    ``O1``    ``sum_j 1/2 [lam D_j a_j xi_j^perp + E_j grad^perp a_j] cos(2 lam xi_j.x)``
    ``O2``    ``sum_j 1/2 [D_j grad^perp a_j - lam E_j a_j xi_j^perp] sin(2 lam xi_j.x)``
    ``O3``    ``-lam sum_{j != j'} D_j a_j' xi_j'^perp s_j s_j'``
    ``O4``    ``sum_{j != j'} D_j grad^perp a_j' s_j c_j'``
    ``O5``    ``-lam sum_{j != j'} E_j a_j' xi_j'^perp c_j s_j'``
    ``O6``    ``sum_{j != j'} E_j grad^perp a_j' c_j c_j'``

    Their sum equals :func:`nonlinear_term` exactly; ``curl`` is a
    perpendicular gradient and ``main`` is the low-frequency term that
    cancels the previous stress.
    """
    n = inc.M.n
    lam = float(inc.lam_carrier)
    prod = sp.dealiased_product
    xis = ODD_RIESZ_DIRECTIONS
    carriers = inc.carriers

    M2 = prod(inc.M, inc.M)
    yield "curl", sp.vec_scale(0.5 * lam, sp.perp_grad(M2))
    del M2

    a, D, E, T2, pg = [], [], [], [], []
    main = []
    for env, xi in zip(inc.envelopes, xis):
        g1, g2 = sp.grad(env)
        xgrad = g1 * float(xi[0]) + g2 * float(xi[1])
        t2a = t2(env, inc.lam_carrier, xi)
        main.append(_sv(prod(xgrad, env) * (-0.5 * lam), _perp(xi)))
        a.append(env)
        T2.append(t2a)
        D.append(xgrad + t2a)
        E.append(t1(env, inc.lam_carrier, xi))
        pg.append((-g2, g1))
        del xgrad

    yield "main", sp.vec_add(*main)
    del main

    no = []
    for j in (0, 1):
        no.append(sp.vec_add(_sv(prod(T2[j], a[j]) * (-0.5 * lam), _perp(xis[j])),
                             sp.vec_scale(0.5, _fv(E[j], pg[j]))))
    yield "NO", sp.vec_add(*no)
    del no, T2

    cos2 = [sp.cos_mode(n, (2 * c[0], 2 * c[1])) for c in carriers]
    o1 = []
    for j in (0, 1):
        v = sp.vec_add(_sv(prod(D[j], a[j]) * (0.5 * lam), _perp(xis[j])),
                       sp.vec_scale(0.5, _fv(E[j], pg[j])))
        o1.append(_fv(cos2[j], v))
    yield "O1", sp.vec_add(*o1)
    del o1, cos2

    sin2 = [sp.sin_mode(n, (2 * c[0], 2 * c[1])) for c in carriers]
    o2 = []
    for j in (0, 1):
        v = sp.vec_add(sp.vec_scale(0.5, _fv(D[j], pg[j])),
                       _sv(prod(E[j], a[j]) * (-0.5 * lam), _perp(xis[j])))
        o2.append(_fv(sin2[j], v))
    yield "O2", sp.vec_add(*o2)
    del o2, sin2

    cs = [sp.cos_mode(n, c) for c in carriers]
    sn = [sp.sin_mode(n, c) for c in carriers]
    pairs = ((0, 1), (1, 0))

    def cross(first, second, build):
        terms = []
        for j, jp in pairs:
            w = prod(first[j], second[jp])
            terms.append(_fv(w, build(j, jp)))
        return sp.vec_add(*terms)

    yield "O3", cross(sn, sn, lambda j, jp: _sv(prod(D[j], a[jp]) * (-lam), _perp(xis[jp])))
    yield "O4", cross(sn, cs, lambda j, jp: _fv(D[j], pg[jp]))
    yield "O5", cross(cs, sn, lambda j, jp: _sv(prod(E[j], a[jp]) * (-lam), _perp(xis[jp])))
    yield "O6", cross(cs, cs, lambda j, jp: _fv(E[j], pg[jp]))


@dataclass
class NonlinearParts:
    """Vectors and gradient potentials of the pieces of ``Lambda M grad^perp M``.

    ``potentials[name]`` is ``Delta^{-1} div`` of the piece (mean zero); the
    potential of ``curl`` vanishes up to round-off.
    """

    vectors: Dict[str, Vector]
    potentials: Dict[str, TorusField]

    def total(self) -> Vector:
        return sp.vec_add(*self.vectors.values())

    def reconstruction_error(self, reference: Vector) -> float:
        tot = self.total()
        scale = max(sp.vec_sup(reference), 1e-300)
        return sp.vec_sup((tot[0] - reference[0], tot[1] - reference[1])) / scale


def decompose_nonlinear(inc: Increment) -> NonlinearParts:
    vectors, pots = {}, {}
    for name, vec in iter_nonlinear_parts(inc):
        vectors[name] = vec
        pots[name] = sp.gradient_part(vec)
    return NonlinearParts(vectors, pots)


def calibrate_kappa(n: int = 512, lam_next: int = 20, r_cutoff: float = 12.0,
                    delta: float = 0.5, eps: float = 0.2, c0: float = 2.0,
                    candidates=(1.0, np.sqrt(2.0))) -> Tuple[float, Dict[float, float]]:
    """Pick the amplitude constant that makes the main term cancel the stress.

    Uses ``Gt = eps * delta * cos(x1)`` and measures the low-frequency part
    (``|k| <= r``) of ``Gt - 2 Delta^{-1} div(Lambda M grad^perp M)`` for each
    candidate.  Returns the best candidate and the residual ratio
    ``||residual||_X / ||Gt||_X`` of every candidate.
    """
    Gt = sp.cos_mode(n, (1, 0), eps * delta)
    scores = {}
    for kappa in candidates:
        amps = make_amplitudes(Gt, delta, lam_next, c0, "A", kappa)
        inc = make_increment(amps, r_cutoff)
        res = Gt - sp.gradient_part(nonlinear_term(inc)) * 2.0
        low = sp.lowpass(res, r_cutoff)
        scores[float(kappa)] = sp.x_norm(low - low.mean()) / sp.x_norm(Gt)
    best = min(scores, key=scores.get)
    return best, scores
