import dataclasses
import math

import numpy as np
import pytest

from sqgci import spectral as sp
from sqgci.blocks import amplitude_prefactor
from sqgci.engine import (
    EngineConfig,
    GridOverflowError,
    InitRecipe,
    IterState,
    ParamSchedule,
    RunAborted,
    StageReport,
    grid_size,
    half_step,
    init_state,
    run,
    schedule,
    step_band,
    validate_params,
)
from sqgci.verification import TestFunctionBank, pm4_residual, weak_residual

from . import oracles

DESK = ParamSchedule(12, 1.2, 0.3, 0.6, 1.0, 0.0, 2.0, 2)
SMALL = ParamSchedule(8, 1.2, 0.3, 0.6, 1.0, 0.0, 2.0, 1)

DELTA = sp.MultiplierSpec(lambda k1, k2: -(k1**2 + k2**2), 0.0, "Delta")


class TestSchedule:
    def test_examples(self):
        p = dataclasses.replace(DESK, beta=0.4)
        assert p.lam(1) == 20
        assert p.delta(1) == pytest.approx(0.3017, abs=1e-4)
        assert p.lam(2) == 36
        assert p.r(2) == pytest.approx(26.83, abs=1e-2)
        assert p.r(0) == 0.0

    def test_monotone(self):
        lams = [DESK.lam(n) for n in range(6)]
        assert all(a < b for a, b in zip(lams, lams[1:]))
        deltas = [DESK.delta(n) for n in range(6)]
        assert all(a > b for a, b in zip(deltas, deltas[1:]))
        for n in range(1, 6):
            assert DESK.lam(n - 1) < DESK.r(n) < DESK.lam(n)

    def test_exact_ceiling(self):
        # 16^1.5 = 64 exactly; binary floating point would be free to land above it
        assert ParamSchedule(16, 1.5, 0.3, 0.6, 1.0).lam(1) == 64
        assert ParamSchedule(8, 1.5, 0.3, 0.6, 1.0).lam(2) == 108  # 2^6.75 = 107.6

    def test_schedule_tuple(self):
        lam, delta, r = schedule(DESK, 1)
        assert (lam, r) == (20, pytest.approx(math.sqrt(240)))
        assert delta == pytest.approx(20**-0.3)

    def test_index_range(self):
        with pytest.raises(ValueError):
            schedule(DESK, 5)

    def test_grid_overflow(self):
        with pytest.raises(GridOverflowError) as err:
            schedule(DESK, 2, grid_cap=512)
        assert err.value.max_feasible == 1
        assert "grid" in str(err.value)

    def test_grid_size(self):
        assert grid_size(7.9) == 16
        assert grid_size(8) == 32
        assert grid_size(step_band(DESK, 0)) == 512


class TestValidate:
    def test_thin_window(self):
        v = validate_params(ParamSchedule(12, 1.01, 0.01, 0.5, 1.0))
        assert v.valid
        assert v.lower == 0.0
        assert v.upper == pytest.approx((1.01**2 - 1) / (1.01 * 1.02))
        assert v.upper == pytest.approx(0.0195, abs=1e-4)

    def test_desk(self):
        v = validate_params(DESK)
        assert v.valid
        assert v.lower == pytest.approx(0.24)
        slack = {c.name: c.slack for c in v.checks}
        assert slack["beta < 2b/(2b-1)(3/2-gamma)"] + 0.3 == pytest.approx(0.857, abs=1e-3)
        assert v.upper == pytest.approx(0.381, abs=1e-3)

    def test_empty_window(self):
        for beta in (0.1, 0.3, 0.5049):
            v = validate_params(ParamSchedule(12, 1.01, beta, 0.75, 1.0))
            assert not v.valid and v.window_empty
            assert v.lower == pytest.approx(0.505)
            assert v.upper == pytest.approx(0.5048, abs=1e-4)
        assert "EMPTY" in v.format()

    def test_side_conditions(self):
        v = validate_params(ParamSchedule(12, 1.2, 0.3, 0.6, 1.45))
        bad = {c.name for c in v.checks if not c.satisfied}
        assert "gamma < 2 - alpha" in bad
        assert not validate_params(dataclasses.replace(DESK, c0=1.5)).valid
        assert not validate_params(dataclasses.replace(DESK, nu=-1.0)).valid


def oracle_gradient_part(v1, v2):
    """Delta^{-1} div of a vector given by coefficient dicts."""
    out = {}
    for k in set(v1) | set(v2):
        kk = k[0] ** 2 + k[1] ** 2
        if kk:
            out[k] = -1j * (k[0] * v1.get(k, 0) + k[1] * v2.get(k, 0)) / kk
    return out


def mode(k, a):
    return {k: a / 2, (-k[0], -k[1]): a / 2}


class TestInit:
    def test_consistent_and_within_margin(self):
        st, rep = init_state(DESK)
        assert pm4_residual(st).worst < 1e-12
        d0 = DESK.delta(0)
        assert sp.x_norm(st.Gt) <= 0.9 * d0 * (1 + 1e-12)
        assert sp.x_norm(st.G) <= 0.9 * (1 - math.sqrt(d0)) * (1 + 1e-12)
        assert rep.parity == "init" and rep.stage == 0
        assert all(v["ok"] for v in rep.inductive.values())
        assert st.parity == "A"

    def test_stress_matches_oracle(self):
        st, rep = init_state(DESK)
        a, m = rep.extra["amp_pi"], rep.extra["amp_mu"]
        n = st.grid
        Pi, mu = mode((1, 0), a), mode((1, 1), m)
        lam = lambda c: {k: math.hypot(*k) * v for k, v in c.items()}
        perp = lambda c: ({k: -1j * k[1] * v for k, v in c.items()},
                          {k: 1j * k[0] * v for k, v in c.items()})
        pP, pm = perp(Pi), perp(mu)
        conv = oracles.convolve
        add = lambda x, y: {k: x.get(k, 0) + y.get(k, 0) for k in set(x) | set(y)}
        v1 = add(conv(lam(mu), pP[0]), conv(lam(Pi), pm[0]))
        v2 = add(conv(lam(mu), pP[1]), conv(lam(Pi), pm[1]))
        want = oracles.synth(oracle_gradient_part(v1, v2), n)
        assert np.abs(st.Gt.samples - want).max() < 1e-14
        assert sp.x_norm(st.Gt) > 0

    def test_orthogonal_pair_has_zero_stress(self):
        # Pi = A cos x1, mu = A cos x2: the coupled products are divergence free
        cfg = EngineConfig(init=InitRecipe(k_pi=(1, 0), k_mu=(0, 1)))
        st, _ = init_state(DESK, cfg)
        assert sp.sup_norm(st.Gt) < 1e-15

    def test_recipe_errors(self):
        with pytest.raises(ValueError, match="nonzero"):
            init_state(DESK, EngineConfig(init=InitRecipe(amp_mu=0.0)))
        with pytest.raises(ValueError, match="differ"):
            init_state(DESK, EngineConfig(init=InitRecipe(k_pi=(1, 1), k_mu=(1, 1))))
        with pytest.raises(ValueError, match="lambda0"):
            init_state(DESK, EngineConfig(init=InitRecipe(k_mu=(80, 0))))

    @pytest.mark.parametrize("nu, factor", [(0.0, 4.0), (0.5, 2.0)])
    def test_scaling(self, nu, factor):
        p = dataclasses.replace(DESK, nu=nu)

        def gt(a):
            cfg = EngineConfig(init=InitRecipe(amp_pi=a, amp_mu=a))
            st, rep = init_state(p, cfg)
            assert rep.extra["amp_pi"] == a  # no shrinking happened
            return sp.x_norm(st.Gt)

        ratio = gt(0.02) / gt(0.01)
        assert ratio >= factor * (1 - 1e-12)
        if nu == 0:
            assert ratio == pytest.approx(4.0, rel=1e-12)


@pytest.fixture(scope="module")
def small_steps():
    s0, r0 = init_state(SMALL)
    s1, r1 = half_step(s0, SMALL)
    s2, r2 = half_step(s1, SMALL)
    return [s0, s1, s2], [r0, r1, r2]


class TestHalfStep:
    def test_skip_identities(self, small_steps):
        (s0, s1, s2), _ = small_steps
        assert s1.eta is s0.eta or np.array_equal(s1.eta.samples, sp.resample(s0.eta, s1.grid).samples)
        assert s2.eta_t is s1.eta_t
        assert np.array_equal(s2.eta_t.samples, s1.eta_t.samples)

    def test_updates(self, small_steps):
        (s0, s1, s2), _ = small_steps
        # parity A: Pi -= M, mu += M; parity B: both += M
        M1 = s1.mu - sp.resample(s0.mu, s1.grid)
        assert np.abs((s1.Pi - sp.resample(s0.Pi, s1.grid) + M1).samples).max() < 1e-15
        M2 = s2.mu - s1.mu
        assert np.abs((s2.Pi - s1.Pi - M2).samples).max() < 1e-15
        assert sp.sup_norm(M2) > 0

    def test_consistency(self, small_steps):
        states, reports = small_steps
        for st, rep in zip(states[1:], reports[1:]):
            assert rep.extra["two_way_rel"] < 1e-9
            assert rep.extra["parts_recon_rel"] < 1e-10
            assert max(rep.extra["pm4"]) < 1e-9
            assert pm4_residual(st).worst < 1e-9
            assert rep.extra["skip_defect"] == 0.0
            assert rep.extra["increment_leakage"] < 1e-10

    def test_triangle_inequality(self, small_steps):
        _, reports = small_steps
        for rep in reports[1:]:
            nm = rep.norms
            total = nm["GD_X"] + nm["GN_X"] + nm["GR0_X"] + nm["JNO_X"] + sum(nm["JO_X"])
            assert nm["Gt_X"] <= total * (1 + 1e-12)
            assert rep.extra["triangle_ok"]
            assert set(rep.budgets) == {"GD", "GN", "GR0", "JNO", "JO", "Gt"}
            assert len(rep.budgets["JO"]) == 6

    def test_report_round_trip(self, small_steps):
        _, reports = small_steps
        for rep in reports:
            d = rep.to_dict()
            assert "lambda" in d
            back = StageReport.from_dict(d)
            assert back.to_dict() == d

    def test_report_finite(self, small_steps):
        _, reports = small_steps

        def walk(x):
            if isinstance(x, dict):
                for v in x.values():
                    walk(v)
            elif isinstance(x, (list, tuple)):
                for v in x:
                    walk(v)
            elif isinstance(x, float):
                assert math.isfinite(x)

        for rep in reports:
            walk(rep.to_dict())

    def test_parities(self, small_steps):
        _, reports = small_steps
        assert [r.parity for r in reports] == ["init", "A", "B"]

    def test_bands_grow_monotonically(self, small_steps):
        states, _ = small_steps
        for a, b in zip(states, states[1:]):
            for k, v in a.bands.items():
                assert b.bands[k] >= v
            assert b.grid >= a.grid

    def test_synthetic_zero_stress(self):
        # Gt = 0 and eta_t = 0: only the self-interaction remains, and with
        # constant amplitudes it is a pure curl, so the new stress vanishes
        n = 512
        z = sp.zeros(n)
        st = IterState(0, z, z, z, z)
        new, rep = half_step(st, SMALL)
        assert sp.sup_norm(new.Gt) < 1e-12
        assert rep.norms["GN_X"] == 0.0
        assert rep.curl_discarded > 0


class TestRun:
    def test_n_max_zero(self):
        p = dataclasses.replace(SMALL, n_max=0)
        res = run(p)
        assert res.completed and len(res.states) == 1
        assert sp.sup_norm(res.theta - res.theta_t) > 0

    def test_distinctness_lower_bound(self, small_steps):
        states, _ = small_steps
        bound = 0.5 * amplitude_prefactor(SMALL.delta(0), SMALL.lam(1)) * math.sqrt(SMALL.c0)
        assert sp.sup_norm(states[-1].mu) >= bound

    def test_dissipative_run_weak_form(self):
        p = dataclasses.replace(SMALL, nu=0.05)
        res = run(p)
        st = res.final
        bank = TestFunctionBank(4)
        theta = res.theta
        f = sp.apply_multiplier(st.G + st.Gt, DELTA)
        assert weak_residual(theta, f, p.nu, p.gamma, bank).max_normalized < 1e-10
        f_t = sp.apply_multiplier(st.G - st.Gt, DELTA)
        assert weak_residual(res.theta_t, f_t, p.nu, p.gamma, bank).max_normalized < 1e-10
        for rep in res.reports[1:]:
            assert rep.norms["GD_X"] > 0
            assert max(rep.extra["pm4"]) < 1e-9
        reg = res.regularity()
        assert set(reg) == {"Pi_alpha", "mu_alpha", "G_2am1"}

    def test_abort_keeps_history(self):
        # the desk schedule cannot fit its second stage on a 512 grid
        with pytest.raises(RunAborted) as err:
            run(DESK, EngineConfig(grid_cap=512))
        res = err.value.result
        assert isinstance(res.error, GridOverflowError)
        assert not res.completed
        assert res.final.n == 1 and len(res.reports) == 2

    def test_callback_sees_every_state(self):
        seen = []
        run(SMALL, callback=lambda s, r: seen.append((s.n, r.parity)), keep_states=False)
        assert seen == [(0, "init"), (1, "A"), (2, "B")]
