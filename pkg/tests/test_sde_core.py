import numpy as np
import pytest

from helpers import linear_conditional_moments
from levysde import sde_core, subordinators as subs
from levysde.errors import ExplosionError, ModelError
from levysde.oracles import CallableDrift, quadratic_lyapunov
from levysde.polyfield import Poly
from levysde.sde_core import SdeModel


def stable_spec(m=1, beta=0.5):
    return subs.SubordinatorSpec([subs.StableSubordinator(beta)] * m)


class TestSimulatePath:
    def test_zero_drift_adds_exactly_the_recorded_noise(self):
        model = sde_core.linear_model(np.zeros((3, 3)), np.eye(3))
        path = subs.sample_path(stable_spec(3), 1.0, 128, seed=4)
        traj = sde_core.simulate_path(model, np.zeros(3), path, seed=5)
        replay = np.zeros(3)
        for i in range(128):
            replay = replay + model.noise @ traj.gaussians[i]
        assert np.array_equal(traj.terminal(), replay)

    def test_initial_state_is_respected(self):
        model = sde_core.linear_model(np.zeros((2, 2)), np.eye(2))
        path = subs.sample_path(stable_spec(2), 1.0, 10, seed=1)
        x0 = np.array([3.0, -4.0])
        traj = sde_core.simulate_path(model, x0, path, seed=2)
        assert np.array_equal(traj.states[0], x0)

    def test_zero_drift_terminal_is_gaussian_given_the_clock(self):
        # with b = 0 and A = I, X_T - x0 | clock has independent components
        # Normal(0, l^k_T); standardized terminals must pass a KS normality test
        from scipy.stats import kstest

        from levysde import engine

        model = sde_core.linear_model(np.zeros((2, 2)), np.eye(2))
        spec = stable_spec(2)
        steps, n_paths = 100, 10**4
        term, status = engine.terminal_states(
            model, np.zeros(2), spec, 1.0, steps, n_paths, seed=55,
            share_subordinator=True,
        )
        assert np.all(status == -1)
        shared = subs.sample_increments(spec, 1.0, steps, subs.derive_rng(55, 0, 0))
        totals = shared.sum(axis=0)
        standardized = (term / np.sqrt(totals)).ravel()
        assert kstest(standardized, "norm").pvalue > 1e-3

    def test_pure_ode_branch_matches_exponential_decay(self):
        model = sde_core.linear_model(-np.eye(1), np.zeros((1, 1)))
        path = subs.sample_path(stable_spec(1), 1.0, 100, seed=0)
        traj = sde_core.simulate_path(model, np.ones(1), path, seed=0)
        assert traj.terminal()[0] == pytest.approx(np.exp(-1.0), abs=1e-8)

    def test_fourth_order_convergence_on_linear_decay(self):
        # A = 0, b(x) = -x: halving h should cut the error by about 2^4
        model = sde_core.linear_model(-np.eye(1), np.zeros((1, 1)))
        errs = []
        for steps in (4, 8):
            path = subs.sample_path(stable_spec(1), 1.0, steps, seed=3)
            traj = sde_core.simulate_path(model, np.ones(1), path, seed=3,
                                          h_max=np.inf)
            errs.append(abs(traj.terminal()[0] - np.exp(-1.0)))
        ratio = errs[0] / errs[1]
        assert 8.0 < ratio < 32.0

    def test_linear_model_matches_gaussian_oracle(self):
        from levysde import engine

        B = np.array([[0.0, 1.0], [-1.0, -1.0]])
        A = np.array([[0.0], [1.0]])
        model = sde_core.linear_model(B, A)
        spec = stable_spec(1)
        steps, n_paths = 500, 4000
        x0 = np.array([1.0, 0.0])
        term, status = engine.terminal_states(
            model, x0, spec, 1.0, steps, n_paths, seed=21,
            share_subordinator=True,
        )
        assert np.all(status == -1)
        shared = subs.sample_increments(spec, 1.0, steps, subs.derive_rng(21, 0, 0))
        grid = np.linspace(0.0, 1.0, steps + 1)
        mean, cov = linear_conditional_moments(B, A, x0, grid, shared)
        mean_se = term.std(axis=0, ddof=1) / np.sqrt(n_paths)
        assert np.all(np.abs(term.mean(axis=0) - mean) < 4.0 * mean_se)
        emp_cov = np.cov(term.T)
        for i in range(2):
            for j in range(2):
                se = np.sqrt((cov[i, i] * cov[j, j] + cov[i, j] ** 2) / n_paths)
                assert abs(emp_cov[i, j] - cov[i, j]) < 4.0 * se

    def test_grid_refinement_leaves_law_within_monte_carlo_error(self):
        # light-tailed clock so empirical means are meaningful
        from levysde import engine

        B = np.array([[0.0, 1.0], [-1.0, -1.0]])
        A = np.array([[0.0], [1.0]])
        model = sde_core.linear_model(B, A)
        spec = subs.SubordinatorSpec([subs.GammaSubordinator(1.0, 1.0)])
        x0 = np.array([1.0, 0.0])
        n_paths = 4000
        stats = []
        for steps in (1000, 2000):
            term, _ = engine.terminal_states(model, x0, spec, 1.0, steps,
                                             n_paths, seed=77)
            stats.append((term.mean(axis=0), np.cov(term.T),
                          term.std(axis=0, ddof=1) / np.sqrt(n_paths)))
        (m1, c1, se1), (m2, c2, se2) = stats
        se = np.sqrt(se1**2 + se2**2)
        assert np.all(np.abs(m1 - m2) < 5.0 * se)
        for i in range(2):
            for j in range(2):
                cov_se = np.sqrt(
                    2.0 * (c1[i, i] * c1[j, j] + c1[i, j] ** 2) / n_paths
                )
                assert abs(c1[i, j] - c2[i, j]) < 5.0 * cov_se

    def test_explosion_carries_first_bad_time(self):
        # super-linear growth without cutoff blows up in finite time
        d = 1
        cubic = sde_core.polynomial_model([[1.0]], [[3]], np.zeros((1, 1)))
        path = subs.sample_path(stable_spec(1), 5.0, 50, seed=1)
        with pytest.raises(ExplosionError) as err:
            sde_core.simulate_path(cubic, np.array([2.0]), path, seed=1)
        assert 0.0 < err.value.first_bad_time <= 5.0

    def test_dimension_mismatch_rejected(self):
        model = sde_core.linear_model(np.zeros((2, 2)), np.eye(2))
        path = subs.sample_path(stable_spec(1), 1.0, 10, seed=1)
        with pytest.raises(ValueError):
            sde_core.simulate_path(model, np.zeros(2), path, seed=1)


class TestCheckLyapunov:
    def test_zero_drift_gives_zero_kappa1(self):
        model = sde_core.linear_model(np.zeros((2, 2)), np.eye(2))
        H = quadratic_lyapunov(2)
        rep = sde_core.check_lyapunov(model, H, np.random.default_rng(0).normal(size=(50, 2)))
        assert rep.kappa1 == 0.0
        assert not rep.violated

    def test_full_rank_noise_with_contracting_drift(self):
        # x . b(x) <= 0 <= kappa_1 (|x|^2 + 1): measured kappa_1 is zero
        model = sde_core.linear_model(-np.eye(3), np.eye(3))
        H = quadratic_lyapunov(3)
        pts = np.random.default_rng(1).normal(size=(200, 3))
        rep = sde_core.check_lyapunov(model, H, pts)
        assert rep.kappa1 == 0.0
        assert rep.kappa2 > 0.0
        assert rep.kappa3 == pytest.approx(2.0, rel=1e-12)

    def test_expanding_drift_reports_positive_kappa1(self):
        model = sde_core.linear_model(np.eye(2), np.eye(2))
        H = quadratic_lyapunov(2)
        pts = np.random.default_rng(2).normal(size=(100, 2))
        rep = sde_core.check_lyapunov(model, H, pts)
        assert rep.kappa1 > 0.0

    def test_negative_lyapunov_rejected(self):
        from levysde.oracles import LyapunovFunction

        model = sde_core.linear_model(np.zeros((1, 1)), np.eye(1))
        bad = LyapunovFunction(
            value=lambda x: -1.0, grad=lambda x: np.zeros(1),
            hess=lambda x: np.zeros((1, 1)), dim=1,
        )
        with pytest.raises(ModelError):
            sde_core.check_lyapunov(model, bad, np.zeros((1, 1)))

    def test_empty_points_rejected(self):
        model = sde_core.linear_model(np.zeros((1, 1)), np.eye(1))
        with pytest.raises(ValueError):
            sde_core.check_lyapunov(model, quadratic_lyapunov(1), np.zeros((0, 1)))


class TestCutoffDrift:
    def _cubic_model(self):
        # b(x) = (-x_0^3, -x_1): super-linear in the first coordinate
        polys = [
            -1.0 * Poly.variable(2, 0) ** 3,
            -1.0 * Poly.variable(2, 1),
        ]
        from levysde.oracles import PolynomialDrift

        return SdeModel(drift=PolynomialDrift(polys), noise=np.eye(2))

    def test_agrees_with_original_inside_sublevel_set(self):
        model = self._cubic_model()
        H = quadratic_lyapunov(2)
        cut = sde_core.cutoff_drift(model, H, 10)
        rng = np.random.default_rng(3)
        for _ in range(50):
            x = rng.uniform(-1.5, 1.5, 2)
            if H.value(x) <= 10.0:
                assert np.array_equal(cut.drift.eval(x), model.drift.eval(x))

    def test_vanishes_outside(self):
        model = self._cubic_model()
        H = quadratic_lyapunov(2)
        cut = sde_core.cutoff_drift(model, H, 4)
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = rng.uniform(2.0, 6.0, 2) * rng.choice([-1.0, 1.0], 2)
            if H.value(x) >= 5.0:
                assert np.all(cut.drift.eval(x) == 0.0)

    def test_cutoff_drift_is_bounded(self):
        model = self._cubic_model()
        H = quadratic_lyapunov(2)
        cut = sde_core.cutoff_drift(model, H, 10)
        rng = np.random.default_rng(5)
        pts = rng.uniform(-20, 20, size=(10000, 2))
        vals = cut.drift.eval_batch(pts)
        norms = np.linalg.norm(vals, axis=1)
        assert np.all(np.isfinite(norms))
        peak = pts[np.argmax(norms)]
        assert H.value(peak) < 11.0  # attained inside {H < n + 1}

    def test_invalid_level_rejected(self):
        model = self._cubic_model()
        with pytest.raises(ValueError):
            sde_core.cutoff_drift(model, quadratic_lyapunov(2), 0)

    def test_cutoff_jacobian_matches_finite_differences(self):
        from helpers import fd_jacobian

        model = self._cubic_model()
        H = quadratic_lyapunov(2)
        cut = sde_core.cutoff_drift(model, H, 2)
        for x in ([1.2, 0.9], [1.4, 1.0], [0.3, 0.2]):
            x = np.array(x)
            fd = fd_jacobian(cut.drift.eval, x, h=1e-6)
            assert np.allclose(cut.drift.jacobian(x), fd, atol=2e-5)

    def test_cutoff_taylor_matches_value_and_jacobian(self):
        model = self._cubic_model()
        H = quadratic_lyapunov(2)
        cut = sde_core.cutoff_drift(model, H, 2)
        x = np.array([1.2, 0.9])  # inside the transition band
        jets = cut.drift.taylor(x, 2)
        val = np.array([p.taylor_coefficient((0, 0)) for p in jets])
        assert np.allclose(val, cut.drift.eval(x), rtol=1e-12)
        jac_from_jets = np.array(
            [[p.taylor_coefficient((1, 0)), p.taylor_coefficient((0, 1))] for p in jets]
        )
        assert np.allclose(jac_from_jets, cut.drift.jacobian(x), rtol=1e-9, atol=1e-12)


class TestDriftOracles:
    def test_consistency_check_passes_for_polynomial_drift(self):
        model = sde_core.linear_model(np.array([[0.0, 2.0], [-1.0, 0.5]]), np.eye(2))
        pts = np.random.default_rng(0).normal(size=(10, 2))
        assert sde_core.drift_consistency_check(model, pts) < 1e-5

    def test_callable_drift_matches_polynomial_twin(self):
        fn = lambda x: np.array([-x[0] ** 3, -x[1]])
        cd = CallableDrift(fn, dim=2, order=3)
        model = SdeModel(drift=cd, noise=np.eye(2))
        pts = np.random.default_rng(1).normal(size=(5, 2))
        assert sde_core.drift_consistency_check(model, pts) < 1e-5

    def test_callable_jet_order_capability_error(self):
        from levysde.errors import JetOrderError

        cd = CallableDrift(lambda x: -x, dim=1, order=2)
        with pytest.raises(JetOrderError, match="order 3"):
            cd.taylor(np.zeros(1), 3)


class TestMomentDiagnostic:
    def test_no_dynamics_is_bounded_by_initial_energy(self):
        model = sde_core.linear_model(np.zeros((1, 1)), np.zeros((1, 1)))
        H = quadratic_lyapunov(1)
        x0 = np.array([1.0])
        rep = sde_core.moment_diagnostic(
            model, H, x0, stable_spec(1), t=1.0, n_paths=64, seed=9, steps=32
        )
        # sup H = H(x0); statistic = exp(2 H / (kappa2 |l| + 1)) <= e^{2H}
        assert rep.statistic <= np.exp(2.0 * H.value(x0)) + 1e-9
        assert np.isfinite(rep.ratio)

    def test_linear_drift_self_consistent_across_sample_sizes(self):
        model = sde_core.linear_model(-np.eye(2), 0.1 * np.eye(2))
        H = quadratic_lyapunov(2)
        x0 = np.zeros(2)
        small = sde_core.moment_diagnostic(
            model, H, x0, stable_spec(2), t=1.0, n_paths=300, seed=10, steps=64
        )
        large = sde_core.moment_diagnostic(
            model, H, x0, stable_spec(2), t=1.0, n_paths=1200, seed=11, steps=64
        )
        assert np.isfinite(small.statistic) and np.isfinite(large.statistic)
        assert abs(small.statistic - large.statistic) < 0.5 * max(
            small.statistic, large.statistic
        )


def test_lyapunov_coercivity_diagnostic():
    assert quadratic_lyapunov(3).coercivity_diagnostic()


def test_trajectory_csv_layout():
    model = sde_core.linear_model(np.zeros((2, 2)), np.eye(2))
    path = subs.sample_path(stable_spec(2), 1.0, 3, seed=6)
    traj = sde_core.simulate_path(model, np.zeros(2), path, seed=6)
    text = sde_core.trajectory_to_csv_string(traj)
    lines = text.strip().split("\n")
    assert lines[0] == "t, x_1, x_2"
    assert len(lines) == 5
