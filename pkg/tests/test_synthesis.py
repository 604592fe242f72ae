import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from switchcons.errors import SynthesisError, ValidationError
from switchcons.numkit import gramian_quadrature_oracle
from switchcons.spectral import lambda_H
from switchcons.synthesis import (
    GainDesign,
    PlantModel,
    check_solvable,
    decay_certificate,
    design_gains,
    feedback_gain,
    growth_envelope_C1,
    instability_margin,
    observer_gain,
    select_ell,
    select_lambda_star,
    spectral_abscissa,
    weighted_ctrl_gramian,
    weighted_obs_gramian,
)

from conftest import EXAMPLE_A, EXAMPLE_B

SCALAR_W = (1 - math.exp(-2.0)) / 2
SQRT_HALF = math.sqrt(2) / 2


def scalar_plant(a=0.0):
    return PlantModel([[a]], [[1.0]], [[1.0]])


def refined_envelope_sup(A, lam, step=1e-4):
    """Independent grid oracle for sup ||e^{At}|| e^{-lam t}."""
    gap = lam - np.max(np.linalg.eigvals(A).real)
    n_steps = int(20.0 / gap / step)
    E_step = scipy.linalg.expm(A * step)
    stack = np.empty((n_steps + 1,) + A.shape)
    for k in range(n_steps + 1):
        # re-anchor periodically so products do not accumulate rounding
        stack[k] = scipy.linalg.expm(A * (k * step)) if k % 100 == 0 else stack[k - 1] @ E_step
    t = np.arange(n_steps + 1) * step
    return float(np.max(np.linalg.norm(stack, 2, axis=(1, 2)) * np.exp(-lam * t)))


class TestPlantModel:
    def test_example_ranks(self, example_plant):
        assert example_plant.controllability_rank() == 3
        assert example_plant.observability_rank() == 3

    def test_vector_inputs_are_reshaped(self):
        p = PlantModel(np.eye(2), [1.0, 0.0], [0.0, 1.0])
        assert p.B.shape == (2, 1)
        assert p.C.shape == (1, 2)

    @pytest.mark.parametrize(
        "A, B, match",
        [(np.ones((2, 3)), np.ones((2, 1)), "square"), (np.eye(2), np.ones((3, 1)), "rows")],
    )
    def test_dimension_errors(self, A, B, match):
        with pytest.raises(ValidationError, match=match):
            PlantModel(A, B)

    def test_missing_output(self):
        with pytest.raises(ValidationError, match="no output"):
            PlantModel(np.eye(2), np.ones((2, 1))).observability_rank()


class TestGramians:
    def test_scalar_closed_form(self):
        assert weighted_ctrl_gramian([[0.0]], [[1.0]], 2.0, 1.0)[0, 0] == pytest.approx(SCALAR_W, rel=1e-13)

    def test_small_weight_limit(self):
        assert weighted_ctrl_gramian([[0.0]], [[1.0]], 1e-8, 1.0)[0, 0] == pytest.approx(1.0, abs=1e-8)

    def test_double_integrator_against_oracle(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        B = np.array([[0.0], [1.0]])
        W = weighted_ctrl_gramian(A, B, 1.0, 1.0)
        ref = gramian_quadrature_oracle(-0.5 * (A + np.eye(2)), B, 1.0)
        np.testing.assert_allclose(W, ref, atol=1e-8 * np.abs(ref).max())

    def test_uncontrollable_pair(self):
        with pytest.raises(SynthesisError, match="Gramian singular: smallest eigenvalue"):
            weighted_ctrl_gramian(np.diag([1.0, 2.0]), [[1.0], [0.0]], 1.0, 1.0)

    @pytest.mark.parametrize("alpha, t_star", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
    def test_weights_must_be_positive(self, alpha, t_star):
        with pytest.raises(SynthesisError, match="positive"):
            weighted_ctrl_gramian([[0.0]], [[1.0]], alpha, t_star)

    def test_observability_scalar(self):
        assert weighted_obs_gramian([[0.0]], [[1.0]], 2.0, 1.0)[0, 0] == pytest.approx(SCALAR_W, rel=1e-13)

    def test_duality(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((4, 4))
        C = rng.standard_normal((2, 4))
        np.testing.assert_array_equal(
            weighted_obs_gramian(A, C, 1.5, 2.0), weighted_ctrl_gramian(A.T, C.T, 1.5, 2.0)
        )

    def test_example_observability_gramian_positive(self, example_plant):
        W = weighted_obs_gramian(example_plant.A, example_plant.C, 3.0, 5.0)
        assert np.linalg.eigvalsh(W).min() > 0

    @pytest.mark.parametrize("a1, a2", [(0.5, 1.0), (1.0, 3.0), (3.0, 10.0)])
    def test_monotone_in_alpha(self, example_plant, a1, a2):
        diff = weighted_ctrl_gramian(EXAMPLE_A, EXAMPLE_B, a1, 2.0) - weighted_ctrl_gramian(
            EXAMPLE_A, EXAMPLE_B, a2, 2.0
        )
        assert np.linalg.eigvalsh(diff).min() >= -1e-12 * np.abs(diff).max()


class TestGains:
    def test_scalar_feedback(self):
        K = feedback_gain(scalar_plant(), 2.0, 1.0, 1.0)
        assert K[0, 0] == pytest.approx(1 / SCALAR_W, rel=1e-12)
        assert K[0, 0] == pytest.approx(2.31304, abs=1e-5)

    def test_scalar_observer(self):
        assert observer_gain(scalar_plant(), 2.0, 1.0, 1.0)[0, 0] == pytest.approx(2.31304, abs=1e-5)

    def test_example_feedback_stabilizes_floor_eigenvalue(self, example_plant):
        K = feedback_gain(example_plant, 3.0, 5.0, 120.0, n_followers=8)
        assert K.shape == (1, 3)
        assert spectral_abscissa(EXAMPLE_A - lambda_H(8) * EXAMPLE_B @ K) < 0

    def test_example_observer_shape(self, example_plant):
        assert observer_gain(example_plant, 3.0, 5.0, 120.0, n_followers=8).shape == (3, 1)

    def test_linear_in_mu(self, example_plant):
        K1 = feedback_gain(example_plant, 3.0, 5.0, 120.0)
        K2 = feedback_gain(example_plant, 3.0, 5.0, 240.0)
        np.testing.assert_array_equal(K2, 2.0 * K1)

    def test_observer_is_transposed_dual(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((3, 3))
        C = rng.standard_normal((1, 3))
        L = observer_gain(PlantModel(A, np.zeros((3, 1)), C), 1.0, 1.0, 2.0)
        K = feedback_gain(PlantModel(A.T, C.T), 1.0, 1.0, 2.0)
        np.testing.assert_allclose(L, K.T, rtol=1e-14)

    def test_mu_floor(self, example_plant):
        with pytest.raises(SynthesisError, match="below the required floor 120"):
            feedback_gain(example_plant, 3.0, 5.0, 100.0, n_followers=8)

    def test_measured_floor_replaces_bound(self, example_plant):
        K = feedback_gain(example_plant, 3.0, 5.0, 10.0, eig_floor=0.1)
        np.testing.assert_allclose(K, feedback_gain(example_plant, 3.0, 5.0, 10.0))

    def test_observer_needs_output(self):
        with pytest.raises(SynthesisError, match="no C"):
            observer_gain(PlantModel([[0.0]], [[1.0]]), 1.0, 1.0, 1.0)

    def test_design_modes(self, example_plant):
        both = design_gains(example_plant, 3.0, 5.0, 120.0, "both", n_followers=8)
        assert both.K is not None and both.L is not None
        cons = design_gains(example_plant, 3.0, 5.0, 120.0, "consensus")
        assert cons.L is None
        np.testing.assert_array_equal(cons.K, both.K)
        np.testing.assert_array_equal(both.coupling(example_plant, "observer"), both.L @ example_plant.C)
        with pytest.raises(SynthesisError, match="observer gain"):
            cons.coupling(example_plant, "observer")


class TestMargin:
    def test_example_value(self):
        assert round(instability_margin(0.863, 0.1), 2) == 1.47

    def test_two_follower_value(self):
        assert instability_margin(SQRT_HALF, 0.2) == pytest.approx(1.73287, abs=1e-5)

    def test_zero_delta(self):
        assert instability_margin(0.0, 0.1) == math.inf

    @pytest.mark.parametrize("d", [1.0, 1.5, -0.1])
    def test_out_of_range(self, d):
        with pytest.raises(SynthesisError, match=r"\[0, 1\)"):
            instability_margin(d, 0.1)

    def test_example_solvable(self):
        check = check_solvable(EXAMPLE_A, 0.863, 0.1)
        assert check.solvable
        assert check.lambda_max == pytest.approx(0.319, abs=5e-4)

    def test_not_certified(self):
        check = check_solvable(np.diag([2.0]), 0.863, 0.1)
        assert check.verdict == "not_certified"
        assert "not a proof of impossibility" in check.summary()

    @pytest.mark.parametrize("d", [0.0, 0.5, 0.99])
    def test_hurwitz_always_solvable(self, d):
        assert check_solvable(-np.eye(2), d, 0.3).solvable


class TestLambdaStar:
    def test_midpoint_example(self):
        A = np.diag([0.319])
        d = math.exp(-0.147)
        assert select_lambda_star(A, d, 0.1) == pytest.approx(0.8945, abs=1e-12)

    def test_midpoint_two_follower(self):
        assert select_lambda_star(np.diag([0.5]), SQRT_HALF, 0.2) == pytest.approx(1.11644, abs=1e-5)

    def test_zero_delta_fallback(self):
        assert select_lambda_star(np.diag([0.319]), 0.0, 0.1) == pytest.approx(1.319)

    def test_infeasible(self):
        with pytest.raises(SynthesisError, match="infeasible"):
            select_lambda_star(np.diag([2.0]), 0.863, 0.1)


class TestGrowthEnvelope:
    def test_contraction(self):
        assert growth_envelope_C1(-np.eye(2), 0.1) == 1.0

    def test_zero(self):
        assert growth_envelope_C1(np.zeros((2, 2)), 1.0) == 1.0

    def test_nilpotent_matches_grid_oracle(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        # ||[[1,t],[0,1]]|| e^{-t} starts at 1 with negative slope, so the supremum is 1.
        oracle = refined_envelope_sup(A, 1.0)
        assert oracle == pytest.approx(1.0, abs=1e-12)
        assert growth_envelope_C1(A, 1.0) == pytest.approx(max(1.0, oracle), abs=1e-12)

    @pytest.mark.parametrize(
        "A, lam",
        [
            (np.array([[0.0, 5.0], [0.0, -0.1]]), 0.5),
            (np.array([[-1.0, 20.0], [0.0, -2.0]]), 0.0),
            (EXAMPLE_A, 1.21916),
        ],
    )
    def test_bound_holds_on_refined_grid(self, A, lam):
        C1 = growth_envelope_C1(A, lam)
        sup = refined_envelope_sup(A, lam)
        assert sup <= C1
        assert C1 <= 1.01 * sup + 1e-9

    def test_requires_gap(self):
        with pytest.raises(SynthesisError, match="must exceed"):
            growth_envelope_C1(np.diag([1.0]), 0.5)


class TestSelectEll:
    def test_unit_C1(self):
        assert select_ell(1.0, 0.8, 1.0, 0.1) == 1

    def test_worked_example(self):
        lam = 1.11644
        denom = math.log(SQRT_HALF) + lam * 0.2
        assert -math.log(1.27) == pytest.approx(-0.2390, abs=1e-4)
        assert round(denom, 4) == -0.1233
        ell = select_ell(1.27, SQRT_HALF, lam, 0.2)
        assert ell == 2
        assert 1.27 * (SQRT_HALF * math.exp(lam * 0.2)) ** ell < 1

    @settings(max_examples=100)
    @given(st.floats(1.0, 50.0), st.floats(0.05, 0.95), st.floats(0.0, 0.99), st.floats(0.05, 1.0))
    def test_defining_property(self, C1, d, frac, T_c):
        lam = frac * (-math.log(d) / T_c)
        ell = select_ell(C1, d, lam, T_c)
        assert C1 * (d * math.exp(lam * T_c)) ** ell < 1
        if ell > 1:
            assert C1 * (d * math.exp(lam * T_c)) ** (ell - 1) >= 1 - 1e-9

    def test_zero_delta(self):
        assert select_ell(3.0, 0.0, 1.0, 0.1) == 1

    def test_precondition(self):
        with pytest.raises(SynthesisError, match="negative"):
            select_ell(1.5, 0.9, 2.0, 0.1)


def _certificate(alpha, t_star, ell_override=None, delta=SQRT_HALF):
    plant = scalar_plant(0.1)
    design = design_gains(plant, alpha, t_star, 3.0, "both", n_followers=2)
    return decay_certificate(plant, design, delta, 0.2, 0.1, ell_override=ell_override, n_followers=2)


def recompute_rho(c):
    return c.C1 * (c.delta * math.exp(c.lambda_star * c.T_c)) ** c.ell + c.C3 * math.exp(
        -(c.alpha + c.lambda_star) * c.tau
    )


class TestCertificate:
    def test_scalar_two_follower_constants(self):
        c = _certificate(2.0, 1.0)
        assert c.lambda_star == pytest.approx((0.1 + instability_margin(SQRT_HALF, 0.2)) / 2)
        assert c.C1 == 1.0
        assert c.ell == 1
        assert c.C0 == pytest.approx(math.exp(1.0), rel=1e-12)
        assert c.phases_per_window == 2
        m, ell, C0, C1 = 2, 1, c.C0, c.C1
        C3 = C0 * m * ell / (C0 + C1) * ((C0 + C1) ** m * math.exp(c.lambda_star * 0.2)) ** ell
        assert c.C3 == pytest.approx(C3, rel=1e-12)
        assert c.rho == pytest.approx(recompute_rho(c), rel=1e-12)
        assert not c.certified
        assert "raise alpha" in c.notes[0]

    def test_certified_fixture(self):
        c = _certificate(60.0, 0.02)
        assert c.alpha > c.alpha_threshold
        assert 0 < c.rho < 1 and c.varrho > 0
        assert c.varrho == pytest.approx(math.log(1 / c.rho) / (c.T_c * c.ell), rel=1e-14)
        assert c.rho == pytest.approx(recompute_rho(c), rel=1e-12)
        assert c.certified

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.01, 0.03), st.floats(0.0, 200.0))
    def test_above_threshold_certifies(self, t_star, extra):
        probe = _certificate(50.0, t_star)
        alpha = max(probe.alpha_threshold, 1.0) + 1.0 + extra
        c = _certificate(alpha, t_star)
        if c.alpha > c.alpha_threshold:
            assert c.rho < 1 and c.varrho > 0

    def test_rho_decreases_with_alpha_at_short_horizon(self):
        rhos = [_certificate(a, 0.02).rho for a in (45, 60, 80, 120, 200)]
        assert all(r1 > r2 for r1, r2 in zip(rhos, rhos[1:]))

    def test_rho_decreases_with_alpha_for_fixed_C3(self):
        c = _certificate(60.0, 0.02)
        psi = c.C1 * (c.delta * math.exp(c.lambda_star * c.T_c)) ** c.ell
        rho = [psi + c.C3 * math.exp(-(a + c.lambda_star) * c.tau) for a in (60, 61, 70)]
        assert rho[0] > rho[1] > rho[2]

    def test_ell_override(self):
        assert _certificate(60.0, 0.02, ell_override=3).ell == 3
        with pytest.raises(SynthesisError, match="does not make"):
            _certificate(60.0, 0.02, ell_override=0)

    def test_zero_delta(self):
        c = _certificate(60.0, 0.02, delta=0.0)
        assert c.ell == 1
        assert c.lambda_star == pytest.approx(1.1)
        assert c.psi_contraction == 0.0

    def test_unsolvable(self):
        plant = PlantModel([[3.0]], [[1.0]])
        design = design_gains(plant, 1.0, 1.0, 1.0)
        with pytest.raises(SynthesisError, match="cannot certify"):
            decay_certificate(plant, design, 0.863, 0.1, 0.05)

    def test_mode_needs_gain(self, example_plant):
        design = design_gains(example_plant, 3.0, 5.0, 120.0, "consensus")
        with pytest.raises(SynthesisError, match="observer certificate"):
            decay_certificate(example_plant, design, 0.8, 0.1, 0.05, mode="observer")

    def test_aggressive_mu_not_certified(self):
        plant = scalar_plant(0.1)
        design = design_gains(plant, 60.0, 0.02, 1.0, eig_floor=1.0)
        c = decay_certificate(plant, design, SQRT_HALF, 0.2, 0.1, n_followers=2)
        assert c.rho < 1
        assert not c.certified
        assert any("below 1/lambda_H" in n for n in c.notes)

    def test_envelope_and_serialization(self):
        c = _certificate(60.0, 0.02)
        assert c.envelope(0.0) == pytest.approx(c.C2 / c.rho)
        d = c.to_dict()
        assert d["rho"] == c.rho and d["ell"] == c.ell
        assert "CERTIFIED" in c.summary()

    def test_overflow_safe(self, example_plant):
        design = design_gains(example_plant, 3.0, 5.0, 120.0, "both")
        c = decay_certificate(example_plant, design, 0.809017, 0.1, 0.05, n_followers=8)
        assert math.isfinite(c.log_C3) and c.rho > 1
        assert not c.certified


def test_gain_design_to_dict():
    d = GainDesign(1.0, 2.0, 3.0, K=np.array([[1.0, 2.0]]))
    out = d.to_dict()
    assert out["K"] == [[1.0, 2.0]] and out["L"] is None
