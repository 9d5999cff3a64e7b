"""
Independent checks on constructed fields.

* :func:`weak_residual` tests the stationary equation
  ``u . grad(theta) + nu Lambda^gamma theta = f`` with ``u = grad^perp Lambda^{-1} theta``
  in commutator form against a bank of trigonometric test functions.
* :func:`pm4_residual` measures how far a stored state is from the coupled
  stress system, up to perpendicular gradients.
* :func:`bound_probes` estimates the constants of the corrector bounds.
* :func:`decay_report` tabulates the stress decay of a run.

All pairings are grid means, i.e. ``(2 pi)^{-2} int f g dx``; they are exact
finite Fourier sums for band-limited fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import spectral as sp
from .corrector import in_hypothesis, t1, t2
from .spectral import TorusField, Vector

__all__ = [
    "TestFunctionBank",
    "WeakResidual",
    "Pm4Residual",
    "ProbeEntry",
    "DecayRow",
    "DecayTable",
    "perp_riesz",
    "commutator",
    "commutator_identity_defect",
    "weak_residual",
    "stationary_forcing",
    "pm4_residual",
    "random_envelope",
    "probe_ratios",
    "bound_probes",
    "decay_report",
]


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunctionBank:
    """All ``cos(k.x)`` and ``sin(k.x)`` with ``0 < |k| <= k_test``.

    Only one wavevector of each pair ``+-k`` is kept.  Fields are built on
    demand for a given grid so large grids never hold the whole bank.
    """

    __test__ = False  # not a pytest class

    k_test: int = 8

    def __post_init__(self):
        if self.k_test < 1:
            raise ValueError("test bank needs k_test >= 1")

    @property
    def modes(self) -> List[Tuple[str, Tuple[int, int]]]:
        out = []
        K = self.k_test
        for k1 in range(0, K + 1):
            for k2 in range(-K, K + 1):
                if k1 == 0 and k2 <= 0:
                    continue
                if k1 * k1 + k2 * k2 <= K * K:
                    out.append(("cos", (k1, k2)))
                    out.append(("sin", (k1, k2)))
        return out

    def __len__(self) -> int:
        return len(self.modes)

    def fields(self, n: int) -> Iterator[Tuple[str, TorusField]]:
        for kind, k in self.modes:
            f = sp.cos_mode(n, k) if kind == "cos" else sp.sin_mode(n, k)
            yield f"{kind}{k}", f

    def with_gradients(self, n: int) -> Iterator[Tuple[str, TorusField, Vector]]:
        """Like :meth:`fields`, plus the exact gradient of each test function."""
        i = np.arange(n, dtype=np.int64)
        for kind, k in self.modes:
            # separable evaluation: cos(a + b) = cos a cos b - sin a sin b
            a = 2.0 * np.pi * ((i * k[0]) % n) / n
            b = 2.0 * np.pi * ((i * k[1]) % n) / n
            ca, sa, cb, sb = np.cos(a), np.sin(a), np.cos(b), np.sin(b)
            band = float(np.hypot(*k))
            c = TorusField(np.outer(ca, cb) - np.outer(sa, sb), band)
            s = TorusField(np.outer(sa, cb) + np.outer(ca, sb), band)
            if kind == "cos":
                yield f"cos{k}", c, (s * -k[0], s * -k[1])
            else:
                yield f"sin{k}", s, (c * k[0], c * k[1])


# ---------------------------------------------------------------------------
# commutator and weak residual
# ---------------------------------------------------------------------------


def perp_riesz(theta: TorusField) -> Vector:
    """``u = grad^perp Lambda^{-1} theta``, symbol ``(-i k2, i k1) / |k|``."""
    r1 = sp.apply_multiplier(theta, sp.riesz(1))
    r2 = sp.apply_multiplier(theta, sp.riesz(2))
    return -r2, r1


def _perp_riesz_div(v: Vector) -> TorusField:
    """``grad^perp Lambda^{-1} . v`` (a scalar)."""
    return sp.apply_multiplier(v[1], sp.riesz(1)) - sp.apply_multiplier(v[0], sp.riesz(2))


def commutator(theta: TorusField, psi: TorusField) -> TorusField:
    """``grad^perp Lambda^{-1} . (theta grad psi) - (grad^perp Lambda^{-1} theta) . grad psi``."""
    sp._require_mean_zero(theta, "commutator")
    g1, g2 = sp.grad(psi)
    prod = sp.dealiased_product
    first = _perp_riesz_div((prod(theta, g1), prod(theta, g2)))
    u1, u2 = perp_riesz(theta)
    return first - (prod(u1, g1) + prod(u2, g2))


def commutator_identity_defect(theta: TorusField, psi: TorusField) -> float:
    """Relative gap in ``<theta u, grad psi> = -1/2 <theta, C(theta, psi)>``."""
    u1, u2 = perp_riesz(theta)
    g1, g2 = sp.grad(psi)
    prod = sp.dealiased_product
    lhs = sp.pairing(prod(theta, u1), g1) + sp.pairing(prod(theta, u2), g2)
    rhs = -0.5 * sp.pairing(theta, commutator(theta, psi))
    scale = sp.l2_norm(theta) ** 2 * _c1(psi)
    return abs(lhs - rhs) / max(scale, 1e-300)


def _c1(psi: TorusField, g: Optional[Vector] = None) -> float:
    g1, g2 = sp.grad(psi) if g is None else g
    return sp.sup_norm(psi) + float(np.sqrt(np.max(g1.samples**2 + g2.samples**2)))


class _CommutatorPairing:
    """``<theta, C(theta, psi)>`` for many ``psi`` with the theta work done once."""

    def __init__(self, theta: TorusField):
        self.theta = theta
        self.h = sp.rfft_coeffs(theta)
        self.u = perp_riesz(theta)
        k1, k2 = sp.wavenumbers(theta.n)
        kmag = np.hypot(k1, k2)
        kmag[0, 0] = 1.0
        # conj(theta_hat) times the symbol of grad^perp Lambda^{-1} .
        self.w1 = np.conj(self.h) * (-1j * k2 / kmag)
        self.w2 = np.conj(self.h) * (1j * k1 / kmag)

    def __call__(self, g: Vector) -> float:
        prod = sp.dealiased_product
        v1 = sp.rfft_coeffs(prod(self.theta, g[0]))
        v2 = sp.rfft_coeffs(prod(self.theta, g[1]))
        weight = sp._spectral_energy(np.ones_like(v1))
        first = float(np.sum(weight * (self.w1 * v1 + self.w2 * v2).real))
        second = sp.pairing(self.theta, prod(self.u[0], g[0]) + prod(self.u[1], g[1]))
        return first - second


@dataclass
class WeakResidual:
    """Residuals per test function; ``max_normalized`` is the verdict value."""

    max_normalized: float
    max_raw: float
    values: List[Tuple[str, float, float]] = field(default_factory=list)


def weak_residual(theta: TorusField, f: TorusField, nu: float = 0.0, gamma: float = 1.0,
                  bank: Optional[TestFunctionBank] = None) -> WeakResidual:
    """Weak-form residual of the stationary equation.

    For each test function ``psi``::

        R(psi) = 1/2 <theta, C(theta, psi)> + nu <theta, Lambda^gamma psi> - <f, psi>

    normalised by ``||theta||_2^2 ||psi||_{C^1} + ||f||_2 ||psi||_2``.
    """
    bank = bank or TestFunctionBank()
    sp._require_mean_zero(theta, "weak residual")
    n = theta.n
    th2 = sp.l2_norm(theta) ** 2
    f2 = sp.l2_norm(f)
    out = []
    worst = worst_raw = 0.0
    pair = _CommutatorPairing(theta)
    for label, psi, g in bank.with_gradients(n):
        val = 0.5 * pair(g)
        if nu:
            val += nu * sp.pairing(theta, sp.apply_multiplier(psi, sp.lam(gamma)))
        val -= sp.pairing(f, psi)
        scale = th2 * _c1(psi, g) + f2 * sp.l2_norm(psi)
        norm_val = abs(val) / scale if scale > 0 else abs(val)
        out.append((label, val, norm_val))
        worst = max(worst, norm_val)
        worst_raw = max(worst_raw, abs(val))
    return WeakResidual(worst, worst_raw, out)


def stationary_forcing(theta: TorusField, nu: float = 0.0, gamma: float = 1.0) -> TorusField:
    """The forcing ``u . grad(theta) + nu Lambda^gamma theta`` that makes ``theta`` stationary."""
    u1, u2 = perp_riesz(theta)
    g1, g2 = sp.grad(theta)
    prod = sp.dealiased_product
    f = prod(u1, g1) + prod(u2, g2)
    if nu:
        f = f + sp.apply_multiplier(theta, sp.lam(gamma)) * nu
    return f


# ---------------------------------------------------------------------------
# coupled-system residual
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pm4Residual:
    """``||div(LHS - RHS)||_2 / ||LHS||_2`` for the two stress equations."""

    eq1: float
    eq2: float
    raw1: float
    raw2: float

    @property
    def worst(self) -> float:
        return max(self.eq1, self.eq2)


def _vec_l2(v: Vector) -> float:
    return float(np.sqrt(np.mean(v[0].samples**2 + v[1].samples**2)))


def _lap_grad(f: TorusField, nu: float, gamma: float) -> Vector:
    if not nu:
        z = sp.zeros(f.n)
        return z, z
    return sp.vec_scale(nu, sp.grad(sp.apply_multiplier(f, sp.lam(gamma - 1.0))))


def pm4_residual(state, nu: float = 0.0, gamma: float = 1.0) -> Pm4Residual:
    """Residual of the coupled system

    ``Lambda Pi grad^perp Pi + Lambda mu grad^perp mu = nu Lambda^{gamma-1} grad Pi + grad G``
    ``Lambda mu grad^perp Pi + Lambda Pi grad^perp mu = nu Lambda^{gamma-1} grad mu + grad Gt``

    modulo perpendicular gradients.  ``state`` needs attributes ``Pi``, ``mu``,
    ``G`` and ``Gt``.
    """
    Pi, mu, G, Gt = state.Pi, state.mu, state.G, state.Gt
    prod = sp.dealiased_product
    LP = sp.apply_multiplier(Pi, sp.lam(1.0))
    Lm = sp.apply_multiplier(mu, sp.lam(1.0))
    pP = sp.perp_grad(Pi)
    pm = sp.perp_grad(mu)

    out = []
    for (A, pa), (B, pb), lin, stress in (
        ((LP, pP), (Lm, pm), Pi, G),
        ((Lm, pP), (LP, pm), mu, Gt),
    ):
        lhs = (prod(A, pa[0]) + prod(B, pb[0]), prod(A, pa[1]) + prod(B, pb[1]))
        d = _lap_grad(lin, nu, gamma)
        g = sp.grad(stress)
        res = (lhs[0] - d[0] - g[0], lhs[1] - d[1] - g[1])
        raw = sp.l2_norm(sp.div(res))
        den = _vec_l2(lhs)
        out.append((raw / den if den > 0 else raw, raw))
    return Pm4Residual(out[0][0], out[1][0], out[0][1], out[1][1])


# ---------------------------------------------------------------------------
# operator-bound probes
# ---------------------------------------------------------------------------


def random_envelope(n: int, r: float, rng: np.random.Generator) -> TorusField:
    """Mean-zero real field with i.i.d. Gaussian coefficients on ``0 < |k| <= r``."""
    k1, k2 = sp.wavenumbers(n)
    kmag = np.hypot(k1, k2)
    h = (rng.standard_normal(kmag.shape) + 1j * rng.standard_normal(kmag.shape))
    h[(kmag > r) | (kmag == 0)] = 0.0
    f = sp.field_from_coeffs(h, n)
    # round trip makes the spectrum Hermitian and restores the band
    return sp.lowpass(f, r) / max(sp.sup_norm(f), 1e-300)


@dataclass(frozen=True)
class ProbeEntry:
    lam: int
    r: float
    in_hypothesis: bool
    t1: float
    t2: float
    t2_potential: float
    degree0: float


def probe_ratios(a: TorusField, lam: int, xi) -> ProbeEntry:
    """Normalised corrector sizes for one envelope.

    ``t1``: ``||T1 a||_inf lam / (r^2 ||a||_inf)``; ``t2``: ``||T2 a||_inf lam^2 / (r^3 ||a||_inf)``;
    ``t2_potential``: ``||Delta^{-1} grad T2 a||_X lam^2 / (r^2 ||a||_inf log r)`` (max over
    components); ``degree0``: ``max_T ||T a||_inf / (||a||_inf log r)`` over the Riesz and odd
    Riesz transforms.
    """
    r = a.band_limit if a.band_limit is not None else sp.effective_band(a)
    asup = sp.sup_norm(a)
    T1 = t1(a, lam, xi)
    T2 = t2(a, lam, xi)
    g = sp.grad(T2)
    pot = [sp.apply_multiplier(c, sp.MultiplierSpec(
        lambda k1, k2: -1.0 / (k1**2 + k2**2), 0.0, "inv_lap")) for c in g]
    logr = np.log(r) if r > 1 else np.nan
    deg0 = max(sp.sup_norm(sp.apply_multiplier(a, m))
               for m in (sp.riesz(1), sp.riesz(2), sp.odd_riesz(1), sp.odd_riesz(2)))
    return ProbeEntry(
        lam=lam,
        r=float(r),
        in_hypothesis=in_hypothesis(r, lam),
        t1=sp.sup_norm(T1) * lam / (r**2 * asup),
        t2=sp.sup_norm(T2) * lam**2 / (r**3 * asup),
        t2_potential=max(sp.x_norm(p) for p in pot) * lam**2 / (r**2 * asup * logr),
        degree0=deg0 / (asup * logr),
    )


def bound_probes(corpus: Iterable[Tuple[TorusField, int, Sequence[float]]],
                 include_out_of_hypothesis: bool = False) -> dict:
    """Empirical sup of each normalised ratio over a corpus of ``(a, lam, xi)``.

    Entries with ``r`` outside ``[10, lam/2]`` are skipped unless asked for.
    """
    entries, skipped = [], 0
    for a, lam, xi in corpus:
        e = probe_ratios(a, lam, xi)
        if not e.in_hypothesis and not include_out_of_hypothesis:
            skipped += 1
            continue
        entries.append(e)
    report = {"count": len(entries), "excluded": skipped}
    for key in ("t1", "t2", "t2_potential", "degree0"):
        report[key] = max((getattr(e, key) for e in entries), default=float("nan"))
    report["entries"] = entries
    return report


# ---------------------------------------------------------------------------
# decay table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayRow:
    n: int
    lam: int
    delta: float
    Gt_X: float
    ratio: Optional[float]
    delta_ratio: Optional[float]
    budgets: dict


@dataclass(frozen=True)
class DecayTable:
    rows: List[DecayRow]

    @property
    def ratios(self) -> List[float]:
        return [r.ratio for r in self.rows[1:]]

    @property
    def strictly_decreasing(self) -> bool:
        return all(r < 1.0 for r in self.ratios)

    def format(self) -> str:
        lines = [f"{'n':>3} {'lambda':>7} {'delta':>9} {'||Gt||_X':>11} {'ratio':>8} {'d-ratio':>8}"]
        for r in self.rows:
            ratio = "" if r.ratio is None else f"{r.ratio:8.4f}"
            dr = "" if r.delta_ratio is None else f"{r.delta_ratio:8.4f}"
            lines.append(f"{r.n:>3} {r.lam:>7d} {r.delta:>9.5f} {r.Gt_X:>11.5g} {ratio:>8} {dr:>8}")
        return "\n".join(lines)


def decay_report(reports: Sequence) -> DecayTable:
    """Stress decay across consecutive reports (``stage``, ``lam``, ``delta``, ``norms``)."""
    if len(reports) < 2:
        raise ValueError("decay report needs at least two stages")
    rows = []
    prev = None
    for rep in reports:
        gt = rep.norms["Gt_X"]
        budgets = dict(getattr(rep, "budgets", {}) or {})
        if prev is None:
            rows.append(DecayRow(rep.stage, rep.lam, rep.delta, gt, None, None, budgets))
        else:
            ratio = gt / prev.norms["Gt_X"] if prev.norms["Gt_X"] > 0 else float("inf")
            rows.append(DecayRow(rep.stage, rep.lam, rep.delta, gt, ratio,
                                 rep.delta / prev.delta, budgets))
        prev = rep
    return DecayTable(rows)
