"""Tests for Hamiltonian evaluation, PMP certificates, and normality classification."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from bandctrl.extremal import (
    ExtremalLift,
    NormalityClass,
    adjoint_backward,
    classify_normality_classic,
    classify_normality_freq,
    evaluate_hamiltonian,
    lift_from_solver,
    reachability_stack,
    verify_pmp,
)
from bandctrl.lq import lq_transfer_freq_solve, lq_transfer_solve
from bandctrl.problem import Box, lti_spec, rollout
from bandctrl.spectrum import SupportSpec, build_frequency_constraint

from oracles import has_nontrivial_nullspace, random_lq_matrices


def _transfer_setup(seed=0, horizon=8, n=2, m=1, banned=None):
    rng = np.random.default_rng(seed)
    A, B, Q, R = random_lq_matrices(rng, n, m)
    x0 = rng.standard_normal(n)
    xf = rng.standard_normal(n)
    spec = lti_spec(A, B, Q, R, horizon, x0=x0, xf=xf, banned=banned)
    sol = lq_transfer_freq_solve(A, B, Q, R, horizon, x0, xf, spec.frequency_constraint)
    return spec, sol


class TestHamiltonian:
    def test_all_zero_multipliers(self):
        spec = lti_spec(np.eye(2), np.eye(2), np.eye(2), np.eye(2), 3, x0=[0.0, 0.0])
        rng = np.random.default_rng(0)
        for _ in range(5):
            value = evaluate_hamiltonian(
                0.0, np.zeros(0), np.zeros(2), 1, rng.standard_normal(2), rng.standard_normal(2), spec
            )
            assert value == 0.0

    def test_identity_example(self):
        spec = lti_spec(np.eye(2), np.eye(2), np.eye(2), np.eye(2), 3, x0=[1.0, 0.0])
        e1 = np.array([1.0, 0.0])
        value = evaluate_hamiltonian(1.0, np.zeros(0), e1, 0, e1, np.zeros(2), spec)
        assert value == pytest.approx(0.5)

    def test_matches_independent_formula(self):
        spec = lti_spec([[0.8, 0.1], [0.0, 1.1]], [[0.2], [1.0]], np.eye(2), [[2.0]], 6,
                        x0=[0.0, 0.0], xf=[1.0, 0.0], banned=[[2]])
        fc = spec.frequency_constraint
        rng = np.random.default_rng(1)
        for _ in range(25):
            t = int(rng.integers(0, 6))
            x = rng.standard_normal(2)
            u = rng.standard_normal(1)
            p = rng.standard_normal(2)
            nu = rng.standard_normal(fc.row_count)
            eta = float(rng.choice([0.0, 1.0]))
            expected = (
                p @ (spec.dynamics.A @ x + spec.dynamics.B @ u)
                - eta * (0.5 * x @ spec.cost.Q @ x + 0.5 * u @ spec.cost.R @ u)
                - nu @ (fc.blocks[t] @ u)
            )
            got = evaluate_hamiltonian(eta, nu, p, t, x, u, spec)
            assert abs(got - expected) < 1e-12


class TestAdjointBackward:
    def test_homogeneous_recursion_stays_zero(self):
        spec, sol = _transfer_setup(seed=2)
        p = adjoint_backward(sol.trajectory, 0.0, np.zeros(0), np.zeros(2), None, spec)
        assert np.max(np.abs(p)) == 0.0

    def test_lti_recursion_formula(self):
        spec, sol = _transfer_setup(seed=3)
        terminal = -sol.adjoints[-1]
        p = adjoint_backward(sol.trajectory, 1.0, np.zeros(0), terminal, None, spec)
        A, Q = spec.dynamics.A, spec.cost.Q
        for t in range(spec.horizon - 1, 0, -1):
            expected = A.T @ p[t] - Q @ sol.trajectory.states[t]
            assert_allclose(p[t - 1], expected, atol=1e-12)

    def test_reproduces_transfer_solver_adjoints(self):
        spec, sol = _transfer_setup(seed=4, horizon=10)
        p = adjoint_backward(sol.trajectory, 1.0, sol.nu, -sol.adjoints[-1], None, spec)
        assert np.max(np.abs(p - sol.adjoints)) < 1e-8

    def test_rejects_dynamics_violation(self):
        spec, sol = _transfer_setup(seed=5)
        bad_states = sol.trajectory.states.copy()
        bad_states[1] += 1.0
        from bandctrl.problem import Trajectory

        bad = Trajectory(states=bad_states, controls=sol.trajectory.controls)
        with pytest.raises(ValueError, match="dynamics"):
            adjoint_backward(bad, 1.0, np.zeros(0), np.zeros(2), None, spec)


class TestVerifyPmp:
    def test_solver_output_passes(self):
        spec, sol = _transfer_setup(seed=6, banned=[[2]])
        lift = lift_from_solver(spec, sol.trajectory, sol.adjoints, sol.nu)
        cert = verify_pmp(sol.trajectory, lift, spec, tol=1e-7)
        assert cert.passed
        assert cert.freq_residual <= 1e-9

    def test_perturbed_control_fails_condition_v(self):
        spec, sol = _transfer_setup(seed=7, banned=[[2]])
        lift = lift_from_solver(spec, sol.trajectory, sol.adjoints, sol.nu)
        controls = sol.trajectory.controls.copy()
        controls[3, 0] += 1e-3
        perturbed = rollout(spec.dynamics, sol.trajectory.states[0], controls)
        cert = verify_pmp(perturbed, lift, spec, tol=1e-7)
        assert not cert.condition_passed["v"]
        assert cert.hamiltonian_vi_worst > 1e-4

    def test_all_zero_lift_fails_nontriviality(self):
        spec, sol = _transfer_setup(seed=8)
        q = spec.frequency_constraint.row_count
        lift = ExtremalLift(0.0, np.zeros(q), np.zeros((spec.horizon, 2)), np.zeros((spec.horizon + 1, 2)))
        cert = verify_pmp(sol.trajectory, lift, spec)
        assert not cert.nontrivial and not cert.passed

    def test_negative_eta_fails_nonnegativity(self):
        spec, sol = _transfer_setup(seed=9)
        lift = lift_from_solver(spec, sol.trajectory, sol.adjoints, sol.nu, eta_c=-1.0)
        cert = verify_pmp(sol.trajectory, lift, spec)
        assert not cert.nonneg

    @pytest.mark.parametrize("scale", [1e-6, 1e-3, 1.0, 1e3, 1e6])
    def test_verdicts_invariant_under_lift_scaling(self, scale):
        spec, sol = _transfer_setup(seed=10, banned=[[1]])
        base = lift_from_solver(spec, sol.trajectory, sol.adjoints, sol.nu)
        scaled = ExtremalLift(
            base.eta_c * scale,
            base.nu * scale,
            base.adjoints * scale,
            base.state_multipliers * scale,
        )
        ref = verify_pmp(sol.trajectory, base, spec)
        got = verify_pmp(sol.trajectory, scaled, spec)
        assert got.condition_passed == ref.condition_passed
        # a failing certificate stays failing under scaling as well
        controls = sol.trajectory.controls.copy()
        controls[0, 0] += 5e-3
        bad_traj = rollout(spec.dynamics, sol.trajectory.states[0], controls)
        assert (
            verify_pmp(bad_traj, scaled, spec).condition_passed["v"]
            == verify_pmp(bad_traj, base, spec).condition_passed["v"]
            == False  # noqa: E712
        )

    def test_free_start_requires_zero_gradient(self):
        # free initial set: eta_x_0 must vanish, so a nonzero dH/dx at t=0 fails (iv)
        spec, sol = _transfer_setup(seed=11)
        free_spec = lti_spec(
            spec.dynamics.A, spec.dynamics.B, spec.cost.Q, spec.cost.R, spec.horizon,
            x0=None, xf=sol.trajectory.states[-1],
        )
        lift = lift_from_solver(free_spec, sol.trajectory, sol.adjoints, sol.nu)
        cert = verify_pmp(sol.trajectory, lift, free_spec)
        assert not cert.condition_passed["iv"]

    def test_box_control_set_at_active_bound(self):
        # minimum-energy transfer clipped by the box: at an active upper bound the
        # inequality only needs to hold along the inward direction
        A, B = np.array([[1.0]]), np.array([[1.0]])
        Q, R = np.array([[0.0]]), np.array([[1.0]])
        horizon, x0, xf = 4, np.array([0.0]), np.array([4.0])
        sol = lq_transfer_solve(A, B, Q, R, horizon, x0, xf)
        spec_box = lti_spec(A, B, Q, R, horizon, x0=x0, xf=xf)
        spec_box = spec_box.__class__(
            horizon=horizon,
            dynamics=spec_box.dynamics,
            cost=spec_box.cost,
            state_sets=spec_box.state_sets,
            control_sets=(Box([0.0], [1.0]),) * horizon,
            supports=spec_box.supports,
            frequency_constraint=spec_box.frequency_constraint,
        )
        lift = lift_from_solver(spec_box, sol.trajectory, sol.adjoints, sol.nu)
        cert = verify_pmp(sol.trajectory, lift, spec_box)
        # u = 1 sits exactly on the upper bound; dH/du = p - u = 0 here, so it passes
        assert cert.condition_passed["v"]


class TestNormalityClassic:
    def test_identity_pair(self):
        verdict = classify_normality_classic(np.eye(2), np.eye(2), 2)
        assert verdict.classification is NormalityClass.ALL_NORMAL
        assert verdict.rank_reachability == 2

    def test_chain_integrator(self):
        verdict = classify_normality_classic([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], 3)
        assert verdict.classification is NormalityClass.ALL_NORMAL
        assert verdict.rank_reachability == 2

    def test_uncontrollable_pair(self):
        verdict = classify_normality_classic(np.eye(2), [[1.0], [0.0]], 5)
        assert verdict.classification is NormalityClass.UNDETERMINED
        assert verdict.rank_reachability == 1

    def test_short_horizon_is_undetermined(self):
        verdict = classify_normality_classic(np.eye(3), np.eye(3), 2)
        assert verdict.classification is NormalityClass.UNDETERMINED


class TestNormalityFreq:
    def test_no_rows_reduces_to_classic(self):
        fc = build_frequency_constraint(SupportSpec.all_allowed(4, 1), 4, 1)
        verdict = classify_normality_freq([[1.0]], [[1.0]], 4, fc)
        assert verdict.classification is NormalityClass.ALL_NORMAL
        assert verdict.dims == (1, 1, 4, 0)

    def test_overconstrained_is_all_abnormal(self):
        fc = build_frequency_constraint(SupportSpec.from_banned([[0, 1]], 2), 2, 1)
        assert fc.row_count == 2
        verdict = classify_normality_freq([[1.0]], [[1.0]], 2, fc)
        assert verdict.classification is NormalityClass.ALL_ABNORMAL
        # with everything banned the only feasible control is u = 0
        assert np.linalg.matrix_rank(fc.stacked) == 2

    def test_single_ban_independent_rows(self):
        fc = build_frequency_constraint(SupportSpec.from_banned([[2]], 4), 4, 1)
        verdict = classify_normality_freq([[1.0]], [[1.0]], 4, fc)
        aug = np.hstack([reachability_stack([[1.0]], [[1.0]], 4), -fc.stacked.T])
        assert np.linalg.matrix_rank(aug) == 2
        assert verdict.classification is NormalityClass.ALL_NORMAL
        assert verdict.rank_augmented == 2

    def test_agrees_with_nullspace_oracle(self):
        agreements = 0
        for seed in range(100):
            rng = np.random.default_rng(300 + seed)
            n = int(rng.integers(1, 4))
            m = int(rng.integers(1, 3))
            horizon = int(rng.integers(2, 8))
            A, B, Q, R = random_lq_matrices(rng, n, m)
            banned = [[] for _ in range(m)]
            for _ in range(int(rng.integers(0, 3))):
                banned[int(rng.integers(m))].append(int(rng.integers(horizon)))
            fc = build_frequency_constraint(SupportSpec.from_banned(banned, horizon), horizon, m)
            verdict = classify_normality_freq(A, B, horizon, fc)
            aug = np.hstack(
                [reachability_stack(A, B, horizon), -fc.stacked.T]
                if fc.row_count
                else [reachability_stack(A, B, horizon)]
            )
            nontrivial = has_nontrivial_nullspace(aug)
            if verdict.classification is NormalityClass.ALL_NORMAL:
                assert not nontrivial
            else:
                assert nontrivial
            agreements += 1
        assert agreements == 100

    def test_rejects_dependent_rows(self):
        fc = build_frequency_constraint(SupportSpec.from_banned([[2]], 4), 4, 1)
        doubled = fc.__class__(
            blocks=np.concatenate([fc.blocks, fc.blocks], axis=1),
            row_count=2,
            effective_rank=1,
            canonical_supports=fc.canonical_supports,
        )
        with pytest.raises(ValueError, match="dependent"):
            classify_normality_freq([[1.0]], [[1.0]], 4, doubled)
