import numpy as np
import pytest
from scipy.linalg import expm

from helpers import linear_conditional_moments
from levysde import malliavin, sde_core, subordinators as subs
from levysde import oscillator_chain as chain
from levysde.errors import FlowDivergenceError


def stable_spec(m, beta=0.5):
    return subs.SubordinatorSpec([subs.StableSubordinator(beta)] * m)


class TestIntegrateFlows:
    def test_zero_drift_flows_are_identity(self):
        model = sde_core.linear_model(np.zeros((2, 2)), np.eye(2))
        path = subs.sample_path(stable_spec(2), 1.0, 50, seed=0)
        traj = sde_core.simulate_path(model, np.zeros(2), path, seed=0)
        flows = malliavin.integrate_flows(model, traj)
        assert np.array_equal(flows.J, np.broadcast_to(np.eye(2), flows.J.shape))
        assert np.array_equal(flows.K, np.broadcast_to(np.eye(2), flows.K.shape))
        assert flows.max_defect == 0.0

    def test_linear_drift_flows_match_matrix_exponential(self):
        B = np.array([[0.0, 1.5], [-1.0, -0.3]])
        model = sde_core.linear_model(B, np.eye(2))
        path = subs.sample_path(stable_spec(2), 1.0, 1000, seed=1)
        traj = sde_core.simulate_path(model, np.array([1.0, -1.0]), path, seed=1)
        flows = malliavin.integrate_flows(model, traj)
        assert np.allclose(flows.J[-1], expm(B), atol=1e-8)
        assert np.allclose(flows.K[-1], expm(-B), atol=1e-8)

    def test_chain_defect_below_tolerance(self):
        params = chain.ChainParams(d=3, t1=2.0, td=2.0)
        model, _ = chain.build_model(params)
        spec = subs.SubordinatorSpec([subs.GammaSubordinator(2.0, 1.0)] * 6)
        path = subs.sample_path(spec, 1.0, 1000, seed=2)
        traj = sde_core.simulate_path(model, np.zeros(6), path, seed=2)
        flows = malliavin.integrate_flows(model, traj)
        assert flows.max_defect <= 1e-6

    def test_flow_divergence_raises(self):
        B = 5.0 * np.eye(2)
        model = sde_core.linear_model(B, np.eye(2))
        path = subs.sample_path(stable_spec(2), 1.0, 4, seed=3)
        traj = sde_core.simulate_path(model, np.ones(2), path, seed=3, h_max=0.25)
        with pytest.raises(FlowDivergenceError, match="finer grid"):
            malliavin.integrate_flows(model, traj, h_max=0.25, flow_tol=1e-14)


class TestCovariance:
    def test_zero_drift_identity(self):
        A = np.array([[1.0, 0.5], [0.0, 2.0], [0.3, 0.0]])
        model = sde_core.SdeModel(
            drift=sde_core.linear_model(np.zeros((3, 3)), A).drift, noise=A
        )
        path = subs.sample_path(stable_spec(2), 1.0, 64, seed=4)
        traj = sde_core.simulate_path(model, np.zeros(3), path, seed=4)
        flows = malliavin.integrate_flows(model, traj)
        cov = malliavin.covariance(model, traj, flows, path)
        totals = path.totals()
        expected = sum(
            totals[k] * np.outer(A[:, k], A[:, k]) for k in range(2)
        )
        scale = np.abs(expected).max()
        assert np.max(np.abs(cov.sigma - expected)) <= 1e-12 * scale

    def test_zero_subordinator_gives_zero_covariance(self):
        model = sde_core.linear_model(-np.eye(2), np.eye(2))
        grid = np.linspace(0.0, 1.0, 11)
        path = subs.SubordinatorPath(grid=grid, increments=np.zeros((10, 2)))
        traj = sde_core.simulate_path(model, np.ones(2), path, seed=5)
        flows = malliavin.integrate_flows(model, traj)
        cov = malliavin.covariance(model, traj, flows, path)
        assert np.all(cov.sigma == 0.0)

    def test_linear_covariance_matches_expm_quadrature(self):
        B = np.array([[0.0, 1.0], [-1.0, -1.0]])
        A = np.array([[0.0], [1.0]])
        model = sde_core.linear_model(B, A)
        path = subs.sample_path(stable_spec(1), 1.0, 500, seed=6)
        traj = sde_core.simulate_path(model, np.array([1.0, 0.0]), path, seed=6)
        flows = malliavin.integrate_flows(model, traj)
        cov = malliavin.covariance(model, traj, flows, path)
        _, oracle = linear_conditional_moments(
            B, A, [1.0, 0.0], path.grid, path.increments
        )
        assert np.max(np.abs(cov.sigma - oracle)) <= 1e-8 * max(np.abs(oracle).max(), 1.0)

    def test_grid_mismatch_rejected(self):
        model = sde_core.linear_model(np.zeros((1, 1)), np.eye(1))
        path = subs.sample_path(stable_spec(1), 1.0, 10, seed=7)
        other = subs.sample_path(stable_spec(1), 1.0, 20, seed=7)
        traj = sde_core.simulate_path(model, np.zeros(1), path, seed=7)
        flows = malliavin.integrate_flows(model, traj)
        with pytest.raises(ValueError, match="grid"):
            malliavin.covariance(model, traj, flows, other)

    def test_reassembly_from_contributions_is_bit_exact(self):
        B = np.array([[0.0, 1.0], [-0.4, -0.1]])
        model = sde_core.linear_model(B, np.eye(2))
        path = subs.sample_path(stable_spec(2), 1.0, 100, seed=8)
        traj = sde_core.simulate_path(model, np.zeros(2), path, seed=8)
        flows = malliavin.integrate_flows(model, traj)
        cov = malliavin.covariance(model, traj, flows, path)
        rebuilt = malliavin.assemble(flows.J[-1], cov.contributions)
        assert np.array_equal(rebuilt, cov.sigma)

    def test_loewner_monotonicity_in_grid_cells(self):
        # appending cells with nonnegative increments never decreases the
        # inner sum in the positive semidefinite order
        rng = np.random.default_rng(9)
        B = np.array([[0.0, 1.0], [-1.0, -0.5]])
        model = sde_core.linear_model(B, np.eye(2))
        path = subs.sample_path(stable_spec(2), 1.0, 60, seed=10)
        traj = sde_core.simulate_path(model, np.zeros(2), path, seed=10)
        flows = malliavin.integrate_flows(model, traj)
        grid = path.grid
        for _ in range(5):
            i, j = sorted(rng.integers(10, 61, size=2))
            if i == j:
                continue
            cov_i = malliavin.covariance(model, traj, flows, path, t=grid[i])
            cov_j = malliavin.covariance(model, traj, flows, path, t=grid[j])
            inner_i = cov_i.contributions.sum(axis=0)
            inner_j = cov_j.contributions.sum(axis=0)
            diff_eigs = np.linalg.eigvalsh(inner_j - inner_i)
            assert diff_eigs.min() >= -1e-12 * max(diff_eigs.max(), 1e-30)


class TestInvertibilityStats:
    def test_full_rank_noise_zero_drift_always_invertible(self):
        A = np.eye(2)
        model = sde_core.linear_model(np.zeros((2, 2)), A)
        rep = malliavin.invertibility_stats(
            model, np.zeros(2), stable_spec(2), t=1.0, n_paths=50, seed=11,
            steps=50,
        )
        assert rep.fraction_invertible == 1.0
        # lambda_min(Sigma) = min_k l^k_1 for the identity noise matrix
        assert np.all(rep.lambda_min > 0.0)

    def test_compound_poisson_zero_jump_fraction(self):
        lam, t, m = 0.1, 1.0, 1
        spec = subs.SubordinatorSpec([subs.CompoundPoisson(rate=lam)])
        model = sde_core.linear_model(np.zeros((1, 1)), np.eye(1))
        n = 400
        rep = malliavin.invertibility_stats(
            model, np.zeros(1), spec, t=t, n_paths=n, seed=12, steps=20,
        )
        expected_zero = np.exp(-lam * t * m)
        frac_zero = 1.0 - rep.fraction_invertible
        se = np.sqrt(expected_zero * (1 - expected_zero) / n)
        assert abs(frac_zero - expected_zero) < 4.0 * se + 1e-9

    def test_chain_covariance_invertible_on_every_path(self):
        # hypoelliptic regime: two noise directions reach all six through
        # the drift, so the covariance is invertible path by path
        from levysde import backend

        params = chain.ChainParams(d=3, t1=2.0, td=2.0)
        model, _ = chain.build_model(params)
        spec = stable_spec(6)
        # per-path flow integration dominates; the forced-numpy fallback
        # gets a smaller sample of the same check
        n_paths = 1000 if backend.active_backend() == "numba" else 60
        rep = malliavin.invertibility_stats(
            model, np.zeros(6), spec, t=1.0, n_paths=n_paths, seed=15, steps=500,
        )
        assert rep.fraction_invertible == 1.0
        assert rep.n_failed <= n_paths // 100  # rare heavy-tail explosions

    def test_csv_layout(self, tmp_path):
        model = sde_core.linear_model(np.zeros((1, 1)), np.eye(1))
        rep = malliavin.invertibility_stats(
            model, np.zeros(1), stable_spec(1), t=1.0, n_paths=5, seed=13,
            steps=10,
        )
        out = tmp_path / "paths.csv"
        rep.to_csv(str(out))
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "path_id, lambda_min, lambda_max, trace"
        assert len(lines) == 6


def test_paper_inverse_flow_equation_is_not_the_inverse():
    # the alternative quadrature K~ = I - int J grad_b ds drifts away from
    # J^{-1} as soon as the Jacobians stop commuting along the path
    params = chain.ChainParams(d=3, t1=2.0, td=2.0)
    model, _ = chain.build_model(params)
    spec = subs.SubordinatorSpec([subs.GammaSubordinator(2.0, 1.0)] * 6)
    path = subs.sample_path(spec, 1.0, 400, seed=14)
    traj = sde_core.simulate_path(model, 0.5 * np.ones(6), path, seed=14)
    flows = malliavin.integrate_flows(model, traj)
    alt_defect, impl_defect = malliavin.paper_inverse_flow_defect(model, traj, flows)
    assert impl_defect <= 1e-6
    assert alt_defect > 100.0 * max(impl_defect, 1e-12)
