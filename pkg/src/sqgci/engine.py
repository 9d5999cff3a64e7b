"""
Parameter schedule, initial data and the two half-step iteration.

The state stores ``eta = Pi + mu`` and ``eta_t = Pi - mu`` rather than
``(Pi, mu)``: a parity-A half-step changes only ``eta_t`` and a parity-B
half-step changes only ``eta``, so the untouched field is carried over as the
very same array.

Half-step from state ``n`` (``sigma = -1`` for parity A, ``+1`` for B;
``lam = lam_{n+1}``, ``r = r_{n+1}``, ``w = Pi + sigma mu``)::

    Pi' = Pi + sigma M,  mu' = mu + M
    Gt' = Gt - nu Lambda^{gamma-1} M + P[N(w, M)] + 2 sigma P[Lambda M grad^perp M]
    G'  = G - sigma nu Lambda^{gamma-1} M + sigma P[N(w, M)] + 2 P[Lambda M grad^perp M]

with ``N(w, M) = Lambda w grad^perp M + Lambda M grad^perp w`` and ``P`` the
gradient-part potential ``Delta^{-1} div``.
"""

from __future__ import annotations

import decimal
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import spectral as sp
from .blocks import (
    AmplitudePositivityError,
    decompose_nonlinear,  # noqa: F401  (re-exported for convenience)
    iter_nonlinear_parts,
    make_amplitudes,
    make_increment,
    nonlinear_term,
)
from .corrector import in_hypothesis
from .spectral import TorusField, Vector
from .verification import pm4_residual

__all__ = [
    "ParamSchedule",
    "ParamVerdict",
    "EngineConfig",
    "InitRecipe",
    "IterState",
    "StageReport",
    "RunResult",
    "RunAborted",
    "GridOverflowError",
    "ConsistencyError",
    "BandLeakageError",
    "validate_params",
    "schedule",
    "grid_size",
    "step_band",
    "init_state",
    "half_step",
    "run",
]

log = logging.getLogger(__name__)

J_NAMES = ("O1", "O2", "O3", "O4", "O5", "O6")


class GridOverflowError(ValueError):
    """The requested stage needs a grid beyond the configured cap."""

    def __init__(self, msg: str, max_feasible: int):
        super().__init__(f"{msg} (maximal feasible half-step index: {max_feasible})")
        self.max_feasible = max_feasible


class ConsistencyError(ArithmeticError):
    """Direct and decomposed stress assemblies disagree."""


class BandLeakageError(ValueError):
    """A field carries more energy outside its band than tolerated."""


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamSchedule:
    lambda0: int
    b: float
    beta: float
    alpha: float
    gamma: float
    nu: float = 0.0
    c0: float = 2.0
    n_max: int = 2

    def lam(self, n: int) -> int:
        """``ceil(lambda0 ** (b ** n))`` evaluated in 60-digit decimal arithmetic."""
        return _lam_exact(self.lambda0, self.b, n)

    def delta(self, n: int) -> float:
        return float(self.lam(n)) ** (-self.beta)

    def r(self, n: int) -> float:
        """``(lam_{n-1} lam_n)^{1/2}``; ``0`` for ``n = 0``."""
        if n == 0:
            return 0.0
        return math.sqrt(self.lam(n - 1) * self.lam(n))


def _lam_exact(lambda0: int, b: float, n: int) -> int:
    if n == 0:
        return int(lambda0)
    with decimal.localcontext() as ctx:
        ctx.prec = 60
        expo = decimal.Decimal(b) ** n
        v = decimal.Decimal(int(lambda0)) ** expo
        return int(v.to_integral_value(rounding=decimal.ROUND_CEILING))


@dataclass(frozen=True)
class Check:
    name: str
    satisfied: bool
    slack: float


@dataclass(frozen=True)
class ParamVerdict:
    lower: float
    upper: float
    checks: Tuple[Check, ...]

    @property
    def valid(self) -> bool:
        return all(c.satisfied for c in self.checks)

    @property
    def window_empty(self) -> bool:
        return self.lower >= self.upper

    def format(self) -> str:
        lines = [f"beta window: ({self.lower:.6g}, {self.upper:.6g})"
                 + ("  EMPTY" if self.window_empty else "")]
        for c in self.checks:
            lines.append(f"  [{'ok' if c.satisfied else 'FAIL':>4}] {c.name:<40} slack {c.slack:+.6g}")
        lines.append("valid" if self.valid else "invalid")
        return "\n".join(lines)


def validate_params(p: ParamSchedule) -> ParamVerdict:
    """Check the admissible window for ``beta`` and the side conditions.

    ``(2 alpha - 1) b < beta < min{ 2b/(2b-1) (3/2 - gamma), (b^2 - 2 + 2 alpha)/(b (2b - 1)) }``,
    ``alpha < 1/2 + beta/(2b)`` and ``gamma < 2 - alpha``.  Slack is positive
    when a strict inequality holds.
    """
    b, beta, alpha, gamma = p.b, p.beta, p.alpha, p.gamma
    lower = (2 * alpha - 1) * b
    up1 = 2 * b / (2 * b - 1) * (1.5 - gamma) if b > 0.5 else float("nan")
    up2 = (b * b - 2 + 2 * alpha) / (b * (2 * b - 1)) if b > 0.5 else float("nan")
    upper = min(up1, up2)
    checks = [
        Check("(2a-1)b < beta", lower < beta, beta - lower),
        Check("beta < 2b/(2b-1)(3/2-gamma)", beta < up1, up1 - beta),
        Check("beta < (b^2-2+2a)/(b(2b-1))", beta < up2, up2 - beta),
        Check("window nonempty", lower < upper, upper - lower),
        Check("alpha < 1/2 + beta/(2b)", alpha < 0.5 + beta / (2 * b), 0.5 + beta / (2 * b) - alpha),
        Check("gamma < 2 - alpha", gamma < 2 - alpha, 2 - alpha - gamma),
        Check("gamma > 0", gamma > 0, gamma),
        Check("b > 1", b > 1, b - 1),
        Check("0 < beta < 1/2", 0 < beta < 0.5, min(beta, 0.5 - beta)),
        Check("1/2 <= alpha < 3/4", 0.5 <= alpha < 0.75, min(alpha - 0.5, 0.75 - alpha)),
        Check("nu >= 0", p.nu >= 0, p.nu),
        Check("c0 >= 2", p.c0 >= 2, p.c0 - 2),
        Check("lambda0 >= 8", p.lambda0 >= 8, p.lambda0 - 8),
    ]
    return ParamVerdict(lower, upper, tuple(checks))


def step_band(p: ParamSchedule, n: int) -> float:
    """Largest product band met during the half-step leaving state ``n``."""
    return 2.0 * (5 * p.lam(n + 1) + p.r(n + 1))


def grid_size(band: float, floor: int = 16) -> int:
    """Smallest power of two ``N >= floor`` with ``N/2 > band``."""
    n = floor
    while n / 2 <= band:
        n *= 2
    return n


def schedule(p: ParamSchedule, n: int, grid_cap: int = 8192) -> Tuple[int, float, float]:
    """``(lam_n, delta_n, r_n)`` for half-step index ``n <= 2 n_max``.

    Raises :class:`GridOverflowError` when producing state ``n`` would need a
    grid larger than ``grid_cap``.
    """
    if not 0 <= n <= 2 * p.n_max:
        raise ValueError(f"index {n} outside 0..{2 * p.n_max}")
    if n >= 1 and grid_size(step_band(p, n - 1)) > grid_cap:
        raise GridOverflowError(f"lambda_{n} = {p.lam(n)} needs a grid beyond {grid_cap}",
                                _max_feasible(p, grid_cap))
    return p.lam(n), p.delta(n), p.r(n)


# ---------------------------------------------------------------------------
# configuration and state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitRecipe:
    """Mono-mode initial pair ``Pi0 = A_Pi cos(k_Pi.x)``, ``mu0 = A_mu cos(k_mu.x)``."""

    k_pi: Tuple[int, int] = (1, 0)
    k_mu: Tuple[int, int] = (1, 1)
    amp_pi: float = 1.0
    amp_mu: float = 1.0
    shrink: float = 0.9
    margin: float = 0.1


@dataclass(frozen=True)
class EngineConfig:
    kappa: float = 1.0
    grid: Optional[int] = None  # None: smallest grid per half-step
    grid_cap: int = 8192
    two_way_tol: float = 1e-9
    band_tol: float = 1e-8
    leakage_tol: float = 1e-10
    iter3_constant: float = 10.0
    init: InitRecipe = field(default_factory=InitRecipe)


@dataclass(frozen=True)
class IterState:
    """Snapshot after ``n`` half-steps.  ``parity`` is that of the next half-step."""

    n: int
    eta: TorusField
    eta_t: TorusField
    G: TorusField
    Gt: TorusField

    @property
    def parity(self) -> str:
        return "A" if self.n % 2 == 0 else "B"

    @property
    def grid(self) -> int:
        return self.eta.n

    @property
    def Pi(self) -> TorusField:
        return (self.eta + self.eta_t) * 0.5

    @property
    def mu(self) -> TorusField:
        return (self.eta - self.eta_t) * 0.5

    @property
    def bands(self) -> Dict[str, Optional[float]]:
        return {k: getattr(self, k).band_limit for k in ("eta", "eta_t", "G", "Gt")}

    def resampled(self, n: int) -> "IterState":
        if n == self.grid:
            return self
        return IterState(self.n, *(sp.resample(getattr(self, k), n)
                                   for k in ("eta", "eta_t", "G", "Gt")))


@dataclass
class StageReport:
    """Diagnostics of the state ``stage`` (produced by a half-step unless ``parity == 'init'``)."""

    stage: int
    parity: str
    lam: int
    delta: float
    r: float
    grid: int
    norms: Dict[str, object]
    budgets: Dict[str, float]
    inductive: Dict[str, Dict[str, object]]
    curl_discarded: float
    M_sup: float
    mu_sup: float
    holder: Dict[str, float]
    extra: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "stage": self.stage,
            "parity": self.parity,
            "lambda": self.lam,
            "delta": self.delta,
            "r": self.r,
            "grid": self.grid,
            "norms": self.norms,
            "budgets": self.budgets,
            "inductive": self.inductive,
            "curl_discarded": self.curl_discarded,
            "M_sup": self.M_sup,
            "mu_sup": self.mu_sup,
            "holder": self.holder,
            "extra": self.extra,
        }
        return _jsonable(d)

    @classmethod
    def from_dict(cls, d: dict) -> "StageReport":
        return cls(d["stage"], d["parity"], d["lambda"], d["delta"], d["r"], d["grid"],
                   d["norms"], d["budgets"], d["inductive"], d["curl_discarded"],
                   d["M_sup"], d["mu_sup"], d["holder"], d.get("extra", {}))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _nash(w: TorusField, M: TorusField) -> Vector:
    prod = sp.dealiased_product
    Lw = sp.apply_multiplier(w, sp.lam(1.0))
    LM = sp.apply_multiplier(M, sp.lam(1.0))
    pM = sp.perp_grad(M)
    pw = sp.perp_grad(w)
    return prod(Lw, pM[0]) + prod(LM, pw[0]), prod(Lw, pM[1]) + prod(LM, pw[1])


def _dissipative(f: TorusField, nu: float, gamma: float) -> TorusField:
    """``nu Lambda^{gamma-1} f``."""
    if not nu:
        return sp.zeros(f.n).with_band(f.band_limit)
    return sp.apply_multiplier(f, sp.lam(gamma - 1.0)) * nu


def _quad(a: TorusField, b: TorusField) -> Vector:
    """``Lambda a grad^perp b``."""
    La = sp.apply_multiplier(a, sp.lam(1.0))
    pb = sp.perp_grad(b)
    return sp.dealiased_product(La, pb[0]), sp.dealiased_product(La, pb[1])


def _solenoidal_sup(v: Vector) -> float:
    g = sp.grad(sp.gradient_part(v))
    return sp.vec_sup((v[0] - g[0], v[1] - g[1]))


def _project(f: TorusField, band: float, tol: float, what: str,
             ref: float = 0.0) -> Tuple[TorusField, float]:
    """Hard projection onto ``|k| <= band``; returns the field and the discarded fraction.

    The discarded L2 norm is measured against ``max(||f||_2, ref)`` so that a
    field cancelling to round-off is judged by the size of its inputs.
    """
    out = sp.lowpass(f, band)
    den = max(sp.l2_norm(f), ref)
    leak = sp.l2_norm(f - out) / den if den > 0 else 0.0
    if leak > tol:
        raise BandLeakageError(f"{what} leaks {leak:.3e} outside |k| <= {band:.6g}")
    return out, leak


def _diagnostics(state: IterState, p: ParamSchedule, cfg: EngineConfig) -> dict:
    """Norms and inductive verdicts shared by init and half-step reports."""
    n = state.n
    lam_n, delta_n = p.lam(n), p.delta(n)
    Pi, mu = state.Pi, state.mu
    G_X = sp.x_norm(state.G)
    Gt_X = sp.x_norm(state.Gt)

    nominal = {"eta": 6 * lam_n, "eta_t": 6 * lam_n, "G": 12 * lam_n, "Gt": 12 * lam_n}
    band_margin = min((nominal[k] - (b if b is not None else state.grid / 2)) / nominal[k]
                      for k, b in state.bands.items())
    leak = max(sp.band_leakage(getattr(state, k)) for k in nominal)
    iter1_ok = band_margin >= 0 and leak <= cfg.band_tol

    iter3 = {}
    for s in (p.beta, 1.0, 2.0):
        iter3[f"{s:g}"] = sp.holder_norm(state.G, s) / (lam_n**s * delta_n)
    iter3_worst = max(iter3.values())

    return {
        "G_X": G_X,
        "Gt_X": Gt_X,
        "inductive": {
            "iter1": {"ok": bool(iter1_ok), "margin": float(band_margin)},
            "iter2": {"ok": bool(G_X <= 1 - math.sqrt(delta_n)),
                      "margin": float(1 - math.sqrt(delta_n) - G_X)},
            "iter3": {"ok": bool(iter3_worst <= cfg.iter3_constant),
                      "margin": float(cfg.iter3_constant - iter3_worst)},
            "iter4": {"ok": bool(Gt_X <= delta_n), "margin": float(delta_n - Gt_X)},
        },
        "iter3_ratios": iter3,
        "leakage": leak,
        "holder": {
            "Pi_alpha": sp.holder_norm(Pi, p.alpha),
            "mu_alpha": sp.holder_norm(mu, p.alpha),
            "G_2am1": sp.holder_norm(state.G, 2 * p.alpha - 1),
        },
        "mu_sup": sp.sup_norm(mu),
    }


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------


def _init_fields(n: int, p: ParamSchedule, rec: InitRecipe, a_pi: float, a_mu: float):
    Pi = sp.cos_mode(n, rec.k_pi, a_pi)
    mu = sp.cos_mode(n, rec.k_mu, a_mu)
    prod_band = 2 * max(np.hypot(*rec.k_pi), np.hypot(*rec.k_mu))
    v1 = sp.vec_add(_quad(Pi, Pi), _quad(mu, mu))
    v2 = sp.vec_add(_quad(mu, Pi), _quad(Pi, mu))
    # projection only removes round-off: every product mode lies in the band
    G = sp.lowpass(sp.gradient_part(v1) - _dissipative(Pi, p.nu, p.gamma), prod_band)
    Gt = sp.lowpass(sp.gradient_part(v2) - _dissipative(mu, p.nu, p.gamma), prod_band)
    return Pi, mu, G, Gt


def init_state(p: ParamSchedule, cfg: Optional[EngineConfig] = None) -> Tuple[IterState, StageReport]:
    """Mono-mode initial pair with stresses solving the coupled system exactly.

    Amplitudes start at the recipe values and shrink geometrically until
    ``||G0||_X`` and ``||Gt0||_X`` sit at least ``margin`` below their bounds.
    """
    cfg = cfg or EngineConfig()
    rec = cfg.init
    if rec.amp_mu <= 0:
        raise ValueError("the initial mu must be nonzero (amp_mu > 0)")
    if tuple(rec.k_pi) == tuple(rec.k_mu):
        raise ValueError("initial wavevectors must differ")
    kmax = max(np.hypot(*rec.k_pi), np.hypot(*rec.k_mu))
    if kmax > 6 * p.lambda0 or min(np.hypot(*rec.k_pi), np.hypot(*rec.k_mu)) == 0:
        raise ValueError("initial wavevectors must satisfy 0 < |k| <= 6 lambda0")
    if not 0 < rec.shrink < 1:
        raise ValueError("shrink factor must lie in (0, 1)")

    n = cfg.grid or grid_size(2 * kmax)
    delta0 = p.delta(0)
    g_bound = (1 - rec.margin) * (1 - math.sqrt(delta0))
    gt_bound = (1 - rec.margin) * delta0
    a_pi, a_mu = rec.amp_pi, rec.amp_mu
    for _ in range(2000):
        Pi, mu, G, Gt = _init_fields(n, p, rec, a_pi, a_mu)
        if sp.x_norm(G) <= g_bound and sp.x_norm(Gt) <= gt_bound:
            break
        a_pi *= rec.shrink
        a_mu *= rec.shrink
    else:
        raise ValueError("cannot meet the initial stress bounds")
    eta = (Pi + mu).with_band(kmax)
    eta_t = (Pi - mu).with_band(kmax)
    state = IterState(0, eta, eta_t, G, Gt)

    d = _diagnostics(state, p, cfg)
    pm4 = pm4_residual(state, p.nu, p.gamma)
    report = StageReport(
        stage=0, parity="init", lam=p.lam(0), delta=delta0, r=0.0, grid=n,
        norms={"Gt_X": d["Gt_X"], "GD_X": 0.0, "GN_X": 0.0, "GR0_X": 0.0, "JNO_X": 0.0,
               "JO_X": [0.0] * 6, "G_X": d["G_X"]},
        budgets={"Gt": d["Gt_X"] / delta0},
        inductive=d["inductive"], curl_discarded=0.0, M_sup=0.0, mu_sup=d["mu_sup"],
        holder=d["holder"],
        extra={"amp_pi": a_pi, "amp_mu": a_mu, "pm4": [pm4.eq1, pm4.eq2],
               "iter3_ratios": d["iter3_ratios"], "leakage": d["leakage"]},
    )
    return state, report


# ---------------------------------------------------------------------------
# half-step
# ---------------------------------------------------------------------------


def _max_feasible(p: ParamSchedule, cap: int) -> int:
    k = 0
    while grid_size(step_band(p, k)) <= cap:
        k += 1
    return k


def _grid_for(state: IterState, p: ParamSchedule, cfg: EngineConfig) -> int:
    need = grid_size(step_band(p, state.n))
    cap = cfg.grid if cfg.grid is not None else cfg.grid_cap
    if need > cap:
        raise GridOverflowError(
            f"half-step {state.n + 1} (lambda = {p.lam(state.n + 1)}) needs N = {need} > {cap}",
            _max_feasible(p, cap))
    return cfg.grid if cfg.grid is not None else max(need, state.grid)


def half_step(state: IterState, p: ParamSchedule,
              cfg: Optional[EngineConfig] = None) -> Tuple[IterState, StageReport]:
    """Add one increment and rebuild both stresses.

    Raises
    ------
    AmplitudePositivityError
        The incoming stress is too large for real amplitudes.
    ConsistencyError
        Direct and decomposed assembly of the new ``Gt`` disagree.
    BandLeakageError
        A changed field has energy outside its band.
    """
    cfg = cfg or EngineConfig()
    t0 = time.perf_counter()
    n = state.n
    parity = state.parity
    sigma = -1.0 if parity == "A" else 1.0
    lam_next, delta_n, r_next = p.lam(n + 1), p.delta(n), p.r(n + 1)
    delta_next = p.delta(n + 1)
    N = _grid_for(state, p, cfg)
    st = state.resampled(N)

    amps = make_amplitudes(st.Gt, delta_n, lam_next, p.c0, parity, cfg.kappa)
    inc = make_increment(amps, r_next, cfg.leakage_tol)
    M = inc.M
    w = st.eta_t if parity == "A" else st.eta

    # direct assembly
    U = _nash(w, M)
    if p.nu:
        U = sp.vec_add(U, sp.vec_scale(-p.nu, sp.grad(sp.apply_multiplier(M, sp.lam(p.gamma - 1.0)))))
    B = nonlinear_term(inc)
    V = sp.vec_add(U, sp.vec_scale(2 * sigma, B))
    Gt_direct = st.Gt + sp.gradient_part(V)
    curl_discarded = _solenoidal_sup(V)
    G_new = st.G + sp.gradient_part(sp.vec_add(sp.vec_scale(sigma, U), sp.vec_scale(2.0, B)))
    del U, V

    # decomposed assembly
    GD = -_dissipative(M, p.nu, p.gamma)
    GN = sp.gradient_part(_nash(w, M))
    parts: Dict[str, TorusField] = {}
    recon = None
    curl_M2 = 0.0
    for name, vec in iter_nonlinear_parts(inc):
        recon = vec if recon is None else sp.vec_add(recon, vec)
        if name == "curl":
            curl_M2 = 2.0 * sp.vec_sup(vec)
            continue
        parts[name] = sp.gradient_part(vec) * (2 * sigma)
        del vec
    recon_err = sp.vec_sup((recon[0] - B[0], recon[1] - B[1])) / max(sp.vec_sup(B), 1e-300)
    del recon, B
    GR0 = st.Gt + parts.pop("main")
    Gt_decomp = GD + GN + GR0 + parts["NO"] + sum(parts[k] for k in J_NAMES)
    # relative to the largest input: the sum itself may cancel to round-off
    scale = max([sp.sup_norm(Gt_direct), sp.sup_norm(GD), sp.sup_norm(GN), sp.sup_norm(GR0),
                 curl_M2] + [sp.sup_norm(v) for v in parts.values()] + [1e-300])
    two_way = sp.sup_norm(Gt_direct - Gt_decomp) / scale
    if two_way > cfg.two_way_tol or recon_err > cfg.two_way_tol:
        raise ConsistencyError(f"stress assemblies disagree: {two_way:.3e} (parts {recon_err:.3e})")

    # new state; only the changed fields are re-projected
    band_M = 5 * lam_next + r_next
    discarded = {}
    if parity == "A":
        eta = st.eta
        eta_t, discarded["eta_t"] = _project(
            st.eta_t - M * 2.0, max(st.eta_t.band_limit or 0.0, band_M), cfg.band_tol, "eta_t")
    else:
        eta_t = st.eta_t
        eta, discarded["eta"] = _project(
            st.eta + M * 2.0, max(st.eta.band_limit or 0.0, band_M), cfg.band_tol, "eta")
    gband_t = max(st.Gt.band_limit or 0.0, 2 * band_M)
    gband = max(st.G.band_limit or 0.0, 2 * band_M)
    Gt_new, discarded["Gt"] = _project(Gt_direct, gband_t, cfg.band_tol, "Gt", scale)
    G_new, discarded["G"] = _project(G_new, gband, cfg.band_tol, "G", scale)
    new = IterState(n + 1, eta, eta_t, G_new, Gt_new)

    if parity == "A":
        skip = float(np.max(np.abs(new.eta.samples - st.eta.samples)))
    else:
        skip = float(np.max(np.abs(new.eta_t.samples - st.eta_t.samples)))

    d = _diagnostics(new, p, cfg)
    pm4 = pm4_residual(new, p.nu, p.gamma)
    comp = {
        "GD_X": sp.x_norm(GD) if p.nu else 0.0,
        "GN_X": sp.x_norm(GN),
        "GR0_X": sp.x_norm(GR0),
        "JNO_X": sp.x_norm(parts["NO"]),
        "JO_X": [sp.x_norm(parts[k]) for k in J_NAMES],
    }
    total = comp["GD_X"] + comp["GN_X"] + comp["GR0_X"] + comp["JNO_X"] + sum(comp["JO_X"])
    norms = {"Gt_X": d["Gt_X"], **comp, "G_X": d["G_X"], "components_sum": total}
    budgets = {
        "GD": comp["GD_X"] / (delta_next / 3),
        "GN": comp["GN_X"] / (delta_next / 3),
        "GR0": comp["GR0_X"] / (delta_next / 24),
        "JNO": comp["JNO_X"] / (delta_next / 24),
        "JO": [x / (delta_next / 24) for x in comp["JO_X"]],
        "Gt": d["Gt_X"] / delta_next,
    }
    m_sup = sp.sup_norm(M)
    report = StageReport(
        stage=n + 1, parity=parity, lam=lam_next, delta=delta_next, r=r_next, grid=N,
        norms=norms, budgets=budgets, inductive=d["inductive"],
        curl_discarded=curl_discarded, M_sup=m_sup, mu_sup=d["mu_sup"], holder=d["holder"],
        extra={
            "two_way_rel": two_way,
            "parts_recon_rel": recon_err,
            "pm4": [pm4.eq1, pm4.eq2],
            "skip_defect": skip,
            "band_discarded": discarded,
            "radicand_min": amps.radicand_min,
            "increment_leakage": inc.leakage,
            "increment_constant": m_sup / math.sqrt(delta_n / lam_next),
            "corrector_in_hypothesis": in_hypothesis(r_next, 5 * lam_next),
            "curl_M2_sup": curl_M2,
            "iter3_ratios": d["iter3_ratios"],
            "leakage": d["leakage"],
            "triangle_ok": d["Gt_X"] <= total * (1 + 1e-12),
        },
    )
    log.info("half-step %d (%s) N=%d ||Gt||_X=%.4g in %.1fs",
             n + 1, parity, N, d["Gt_X"], time.perf_counter() - t0)
    return new, report


# ---------------------------------------------------------------------------
# full run
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    params: ParamSchedule
    states: List[IterState]
    reports: List[StageReport]
    error: Optional[BaseException] = None

    @property
    def final(self) -> IterState:
        return self.states[-1]

    @property
    def completed(self) -> bool:
        return self.error is None

    @property
    def theta(self) -> TorusField:
        return sp.apply_multiplier(self.final.eta, sp.lam(1.0))

    @property
    def theta_t(self) -> TorusField:
        return sp.apply_multiplier(self.final.eta_t, sp.lam(1.0))

    @property
    def forcing(self) -> TorusField:
        """``f = Delta G`` of the final state."""
        return sp.apply_multiplier(self.final.G, sp.MultiplierSpec(
            lambda k1, k2: -(k1**2 + k2**2), 0.0, "Delta"))

    def regularity(self) -> Dict[str, float]:
        p = self.params
        st = self.final
        return {
            "Pi_alpha": sp.holder_norm(st.Pi, p.alpha),
            "mu_alpha": sp.holder_norm(st.mu, p.alpha),
            "G_2am1": sp.holder_norm(st.G, 2 * p.alpha - 1),
        }


class RunAborted(RuntimeError):
    """A half-step failed; ``result`` holds every state and report produced before it."""

    def __init__(self, result: RunResult):
        super().__init__(f"run aborted after state {result.final.n}: {result.error}")
        self.result = result


def run(p: ParamSchedule, cfg: Optional[EngineConfig] = None, *,
        start: Optional[Tuple[IterState, StageReport]] = None,
        callback: Optional[Callable[[IterState, StageReport], None]] = None,
        keep_states: bool = True) -> RunResult:
    """Run ``p.n_max`` stages (two half-steps each) from the initial pair or ``start``.

    ``callback`` sees every new state, the initial one included when
    ``start`` is not given.  The last state is always kept.
    """
    cfg = cfg or EngineConfig()
    if start is None:
        state, rep = init_state(p, cfg)
        if callback:
            callback(state, rep)
    else:
        state, rep = start
    states, reports = [state], [rep]
    result = RunResult(p, states, reports)
    while state.n < 2 * p.n_max:
        try:
            state, rep = half_step(state, p, cfg)
        except (AmplitudePositivityError, ConsistencyError, BandLeakageError, GridOverflowError) as exc:
            result.error = exc
            raise RunAborted(result) from exc
        if not keep_states:
            states.clear()
        states.append(state)
        reports.append(rep)
        if callback:
            callback(state, rep)
    if sp.sup_norm(state.mu) == 0:
        result.error = ValueError("mu vanished: the two solutions coincide")
        raise RunAborted(result)
    return result
