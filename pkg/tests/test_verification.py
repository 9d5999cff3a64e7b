import math
from types import SimpleNamespace

import numpy as np
import pytest

from sqgci import spectral as sp
from sqgci.engine import IterState, ParamSchedule, half_step, init_state
from sqgci.verification import (
    DecayTable,
    TestFunctionBank,
    bound_probes,
    commutator,
    commutator_identity_defect,
    decay_report,
    pm4_residual,
    probe_ratios,
    random_envelope,
    stationary_forcing,
    weak_residual,
)

from . import oracles

SMALL = ParamSchedule(8, 1.2, 0.3, 0.6, 1.0, 0.0, 2.0, 1)


def perp_riesz_dot(v1, v2):
    """Oracle for grad^perp Lambda^{-1} . v on coefficient dicts."""
    out = {}
    for k in set(v1) | set(v2):
        m = math.hypot(*k)
        if m:
            out[k] = (-1j * k[1] * v1.get(k, 0) + 1j * k[0] * v2.get(k, 0)) / m
    return out


def oracle_commutator(theta, psi):
    g1 = {k: 1j * k[0] * c for k, c in psi.items()}
    g2 = {k: 1j * k[1] * c for k, c in psi.items()}
    first = perp_riesz_dot(oracles.convolve(theta, g1), oracles.convolve(theta, g2))
    u1 = {k: -1j * k[1] * c / math.hypot(*k) for k, c in theta.items()}
    u2 = {k: 1j * k[0] * c / math.hypot(*k) for k, c in theta.items()}
    second = oracles.convolve(u1, g1)
    for k, c in oracles.convolve(u2, g2).items():
        second[k] = second.get(k, 0) + c
    return {k: first.get(k, 0) - second.get(k, 0) for k in set(first) | set(second)}


class TestBank:
    def test_modes(self):
        bank = TestFunctionBank(1)
        assert sorted(k for _, k in bank.modes) == sorted([(0, 1), (0, 1), (1, 0), (1, 0)])
        big = TestFunctionBank(8)
        ks = {k for _, k in big.modes}
        assert all(0 < k[0] ** 2 + k[1] ** 2 <= 64 for k in ks)
        assert not any((-k[0], -k[1]) in ks for k in ks)
        assert len(big) == 2 * len(ks)

    def test_validation(self):
        with pytest.raises(ValueError):
            TestFunctionBank(0)


class TestCommutator:
    def test_constant_psi(self, rng):
        theta = random_envelope(32, 6, rng)
        c = commutator(theta, sp.TorusField(np.full((32, 32), 2.0), 0.0))
        assert sp.sup_norm(c) == 0.0

    def test_single_modes_against_oracle(self):
        n = 16
        theta = sp.cos_mode(n, (1, 0))
        psi = sp.cos_mode(n, (0, 1))
        got = commutator(theta, psi)
        want = oracles.synth(oracle_commutator({(1, 0): .5, (-1, 0): .5},
                                               {(0, 1): .5, (0, -1): .5}), n)
        assert sp.sup_norm(got) > 0.1
        assert np.abs(got.samples - want).max() < 1e-10

    def test_random_against_oracle(self, rng):
        n = 32
        th, ps = oracles.random_poly(rng, 3), oracles.random_poly(rng, 2)
        got = commutator(sp.TorusField(oracles.synth(th, n), 3.0),
                         sp.TorusField(oracles.synth(ps, n), 2.0))
        want = oracles.synth(oracle_commutator(th, ps), n)
        assert np.abs(got.samples - want).max() < 1e-10 * max(1, np.abs(want).max())

    def test_integration_by_parts(self, rng):
        for _ in range(5):
            theta = random_envelope(64, 10, rng)
            psi = random_envelope(64, 6, rng)
            assert commutator_identity_defect(theta, psi) < 1e-10

    def test_smoothing_trend(self, rng):
        theta = random_envelope(128, 32, rng)
        ratios = []
        for m in (16, 8, 4, 2):
            psi = sp.cos_mode(128, (m, 0), 1.0 / m)  # unit gradient
            ratios.append(sp.sup_norm(commutator(theta, psi)) / sp.sup_norm(theta))
        print("commutator / theta as psi band shrinks:", ", ".join(f"{r:.3g}" for r in ratios))
        assert all(a > b for a, b in zip(ratios, ratios[1:]))

    def test_requires_mean_zero(self):
        with pytest.raises(ValueError):
            commutator(sp.TorusField(np.ones((16, 16))), sp.cos_mode(16, (1, 0)))


class TestWeakResidual:
    def test_fast_pairing_matches_commutator(self, rng):
        from sqgci.verification import _CommutatorPairing

        theta = random_envelope(64, 12, rng)
        pair = _CommutatorPairing(theta)
        for label, psi, g in TestFunctionBank(3).with_gradients(64):
            ref = sp.pairing(theta, commutator(theta, psi))
            g_ref = sp.grad(psi)
            assert max(sp.sup_norm(g[i] - g_ref[i]) for i in (0, 1)) < 1e-12
            assert pair(g) == pytest.approx(ref, abs=1e-13 * sp.l2_norm(theta) ** 2 * 10)

    @pytest.mark.parametrize("k", [(1, 0), (3, 4), (2, -5)])
    def test_single_mode_is_stationary(self, k):
        theta = sp.cos_mode(64, k)
        res = weak_residual(theta, sp.zeros(64))
        assert res.max_normalized < 1e-12
        assert len(res.values) == len(TestFunctionBank())

    def test_manufactured_forcing(self, rng):
        theta = random_envelope(64, 6, rng)
        for nu, gamma in ((0.0, 1.0), (0.3, 0.7)):
            f = stationary_forcing(theta, nu, gamma)
            assert weak_residual(theta, f, nu, gamma).max_normalized < 1e-10

    def test_wrong_forcing_detected(self, rng):
        theta = random_envelope(64, 6, rng)
        f = stationary_forcing(theta) + sp.cos_mode(64, (1, 2), 0.1)
        assert weak_residual(theta, f).max_normalized > 1e-3


@pytest.fixture(scope="module")
def state():
    return init_state(SMALL)[0]


class TestPm4:
    def test_init_is_consistent(self, state):
        assert pm4_residual(state).worst < 1e-12

    def test_sensitivity(self, state):
        eps = 1e-3
        bad = SimpleNamespace(Pi=state.Pi, mu=state.mu, Gt=state.Gt,
                              G=state.G + sp.cos_mode(state.grid, (1, 0), eps))
        res = pm4_residual(bad)
        # div grad (eps cos x1) = -eps cos x1, whose L2 norm is eps / sqrt 2
        assert res.raw1 == pytest.approx(eps / math.sqrt(2), rel=1e-6)
        assert res.eq1 > 1e-6 and res.eq2 < 1e-12

    def test_perpendicular_gradient_invariance(self, state, rng):
        h = random_envelope(state.grid, 3, rng)
        dG = sp.gradient_part(sp.perp_grad(h))
        assert sp.sup_norm(dG) < 1e-14
        shifted = SimpleNamespace(Pi=state.Pi, mu=state.mu, Gt=state.Gt + dG, G=state.G + dG)
        assert pm4_residual(shifted).worst == pytest.approx(pm4_residual(state).worst, abs=1e-14)


class TestProbes:
    def test_single_mode_symbol(self):
        a = sp.cos_mode(32, (3, 4))
        e = probe_ratios(a, 100, (1.0, 0.0))
        assert e.t1 == pytest.approx(0.32, abs=1e-3)
        assert e.r == 5.0 and not e.in_hypothesis

    def test_exclusion(self, rng):
        corpus = [(sp.cos_mode(32, (3, 4)), 100, (1.0, 0.0)),
                  (random_envelope(64, 12, rng), 100, (1.0, 0.0))]
        rep = bound_probes(corpus)
        assert rep["count"] == 1 and rep["excluded"] == 1
        rep = bound_probes(corpus, include_out_of_hypothesis=True)
        assert rep["count"] == 2 and rep["t1"] >= 0.32 - 1e-3

    def test_lambda_sweep_bounded(self, rng):
        by_lam = {}
        for lam in (64, 128, 256):
            r = math.sqrt(lam)
            # only xi = (1, 0) gives an integer carrier at these lambda
            corpus = [(random_envelope(64, r, rng), lam, (1.0, 0.0)) for _ in range(8)]
            by_lam[lam] = bound_probes(corpus, include_out_of_hypothesis=True)
        for key in ("t1", "t2", "t2_potential", "degree0"):
            vals = [by_lam[lam][key] for lam in by_lam]
            print(f"{key}: " + ", ".join(f"{v:.3g}" for v in vals))
            assert all(np.isfinite(vals))
            assert max(vals) / min(vals) < 4


class TestDecay:
    def test_table(self):
        reps = [SimpleNamespace(stage=i, lam=10 * (i + 1), delta=0.5 / (i + 1),
                                norms={"Gt_X": g}, budgets={})
                for i, g in enumerate([0.4, 0.2, 0.15])]
        t = decay_report(reps)
        assert isinstance(t, DecayTable)
        assert t.ratios == pytest.approx([0.5, 0.75])
        assert t.strictly_decreasing
        assert t.rows[1].delta_ratio == pytest.approx(0.5)
        assert "ratio" in t.format()

    def test_needs_two(self):
        with pytest.raises(ValueError):
            decay_report([])

    def test_zero_stress_floor(self):
        # Gt = 0 and eta = eta_t = 0: the stress stays zero to round-off
        z = sp.zeros(512)
        st = IterState(0, z, z, z, z)
        s1, r1 = half_step(st, SMALL)
        s2, r2 = half_step(s1, SMALL)
        reps = [SimpleNamespace(stage=0, lam=8, delta=SMALL.delta(0), norms={"Gt_X": 0.0},
                                budgets={}), r1, r2]
        t = decay_report(reps)
        print(t.format())
        assert [row.Gt_X for row in t.rows][0] == 0.0
        assert max(row.Gt_X for row in t.rows) < 1e-12
