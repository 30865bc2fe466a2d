import numpy as np
import pytest

from levysde import hormander, sde_core, subordinators as subs
from levysde import oscillator_chain as chain
from levysde.errors import JetOrderError
from levysde.oracles import CallableDrift
from levysde.polyfield import Poly
from levysde.sde_core import SdeModel


def constant_drift_model(d=2):
    from levysde.oracles import PolynomialDrift

    polys = [Poly.constant(d, 1.5) for _ in range(d)]
    return SdeModel(drift=PolynomialDrift(polys), noise=np.eye(d))


class TestBracketMatrices:
    def test_constant_drift_brackets_vanish(self):
        model = constant_drift_model()
        mats = hormander.bracket_matrices(model, np.zeros(2), 3)
        for B in mats:
            assert np.all(B == 0.0)

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_linear_drift_gives_signed_matrix_powers(self, d):
        rng = np.random.default_rng(d)
        B = rng.normal(size=(d, d))
        model = sde_core.linear_model(B, np.eye(d))
        mats = hormander.bracket_matrices(model, rng.normal(size=d), 5)
        power = B.copy()
        for k, Bk in enumerate(mats, start=1):
            expected = (-1.0) ** (k - 1) * power
            scale = max(np.abs(expected).max(), 1.0)
            assert np.max(np.abs(Bk - expected)) <= 1e-10 * scale
            power = power @ B
    def test_chain_first_bracket_is_drift_jacobian_at_origin(self):
        params = chain.ChainParams(d=3)
        model, _ = chain.build_model(params)
        mats = hormander.bracket_matrices(model, np.zeros(6), 1)
        # hand-coded Jacobian of the chain drift at 0: V'' = 1, U'' = 1
        d = 3
        J = np.zeros((6, 6))
        J[0, 3] = J[1, 4] = J[2, 5] = 1.0
        stiff = np.array([
            [-2.0, 1.0, 0.0],
            [1.0, -3.0, 1.0],
            [0.0, 1.0, -2.0],
        ])
        J[3:, :3] = stiff
        J[3, 3] = -params.gamma1
        J[5, 5] = -params.gammad
        assert np.max(np.abs(mats[0] - J)) <= 1e-10

    def test_jet_based_second_bracket_matches_central_differences(self):
        # recursion differentiated through jets vs differencing B_1 matrices
        rng = np.random.default_rng(42)
        d = 3
        polys = []
        for i in range(d):
            terms = {}
            for _ in range(4):
                exp = tuple(int(e) for e in rng.integers(0, 3, d))
                terms[exp] = float(rng.normal())
            polys.append(Poly(d, terms))
        from levysde.oracles import PolynomialDrift

        model = SdeModel(drift=PolynomialDrift(polys), noise=np.eye(d))
        x = 0.3 * rng.normal(size=d)
        B1, B2 = hormander.bracket_matrices(model, x, 2)
        h = 1e-3
        bx = model.drift.eval(x)
        transport = np.zeros((d, d))
        for l in range(d):
            e = np.zeros(d)
            e[l] = h
            B1p = hormander.bracket_matrices(model, x + e, 1)[0]
            B1m = hormander.bracket_matrices(model, x - e, 1)[0]
            transport += bx[l] * (B1p - B1m) / (2 * h)
        approx = transport - model.drift.jacobian(x) @ B1
        scale = max(np.abs(B2).max(), 1.0)
        assert np.max(np.abs(B2 - approx)) <= 1e-5 * scale

    def test_insufficient_jet_order_names_requirement(self):
        fn = lambda x: np.array([-x[0] ** 3, -x[1]])
        model = SdeModel(drift=CallableDrift(fn, dim=2, order=2), noise=np.eye(2))
        with pytest.raises(JetOrderError, match="order 3"):
            hormander.bracket_matrices(model, np.zeros(2), 3)

    def test_callable_drift_brackets_match_polynomial_twin(self):
        B = np.array([[0.0, 1.0], [-2.0, -0.5]])
        poly_model = sde_core.linear_model(B, np.eye(2))
        call_model = SdeModel(
            drift=CallableDrift(lambda x: B @ x, dim=2, order=3), noise=np.eye(2)
        )
        x = np.array([0.4, -0.2])
        exact = hormander.bracket_matrices(poly_model, x, 2)
        approx = hormander.bracket_matrices(call_model, x, 2)
        for E, A in zip(exact, approx):
            assert np.allclose(E, A, atol=1e-4)


class TestRankCheck:
    def test_kalman_integrator_needs_one_bracket(self):
        model = sde_core.linear_model(
            np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]])
        )
        rep = hormander.rank_check(model, np.zeros(2), n_max=3)
        assert rep.minimal_order == 1
        assert rep.attained
        # the assembled matrix at order 1 is a permutation: both singular
        # values equal one
        assert np.allclose(rep.singular_values[-1], [1.0, 1.0])

    def test_full_rank_noise_needs_no_brackets(self):
        model = sde_core.linear_model(np.zeros((3, 3)), np.eye(3))
        rep = hormander.rank_check(model, np.zeros(3), n_max=2)
        assert rep.minimal_order == 0

    def test_zero_noise_never_attains(self):
        model = sde_core.linear_model(np.eye(2), np.zeros((2, 2)))
        rep = hormander.rank_check(model, np.zeros(2), n_max=4)
        assert rep.minimal_order is None
        assert not rep.attained

    def test_numerical_rank_is_nondecreasing_in_order(self):
        rng = np.random.default_rng(3)
        B = rng.normal(size=(4, 4))
        model = sde_core.linear_model(B, rng.normal(size=(4, 2)))
        rep = hormander.rank_check(model, rng.normal(size=4), n_max=6)
        assert all(r2 >= r1 for r1, r2 in zip(rep.ranks, rep.ranks[1:]))

    def test_invariant_under_positive_column_scaling(self):
        rng = np.random.default_rng(4)
        B = rng.normal(size=(3, 3))
        A = rng.normal(size=(3, 2))
        x = rng.normal(size=3)
        base = hormander.rank_check(sde_core.linear_model(B, A), x, 6)
        for scales in ([0.5, 2.0], [10.0, 0.1]):
            scaled = hormander.rank_check(
                sde_core.linear_model(B, A * np.asarray(scales)), x, 6
            )
            assert scaled.minimal_order == base.minimal_order

    def test_negative_n_max_rejected(self):
        model = sde_core.linear_model(np.zeros((1, 1)), np.eye(1))
        with pytest.raises(ValueError):
            hormander.rank_check(model, np.zeros(1), n_max=-1)


class TestRankScan:
    def test_full_rank_noise_all_orders_zero(self):
        model = sde_core.linear_model(np.ones((2, 2)), np.eye(2))
        scan = hormander.rank_scan(
            model, hormander.gaussian_sampler(np.zeros(2)), count=20, n_max=2,
            seed=0,
        )
        assert scan.verified
        assert scan.minimal_orders == [0] * 20

    def test_chain_with_linear_interaction_fails(self):
        # U'' = 0 kills the only route by which noise reaches the interior
        params = chain.ChainParams(
            d=3, u=chain.potential_from_coefficients([0.0, 1.0])
        )
        model, _ = chain.build_model(params)
        scan = hormander.rank_scan(
            model, hormander.gaussian_sampler(np.zeros(6)), count=10, n_max=6,
            seed=1,
        )
        assert not scan.verified
        assert scan.n_failures == 10

    def test_chain_with_quartic_interaction_passes(self):
        params = chain.ChainParams(d=3)
        model, _ = chain.build_model(params)
        scan = hormander.rank_scan(
            model, hormander.gaussian_sampler(np.zeros(6)), count=25, n_max=6,
            seed=2,
        )
        assert scan.verified
        assert max(o for o in scan.minimal_orders) <= 4

    def test_csv_layout(self, tmp_path):
        model = sde_core.linear_model(np.zeros((2, 2)), np.eye(2))
        scan = hormander.rank_scan(
            model, hormander.gaussian_sampler(np.zeros(2)), count=3, n_max=1,
            seed=3,
        )
        out = tmp_path / "scan.csv"
        scan.to_csv(str(out))
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "x_1, x_2, minimal_order, sigma_min, sigma_max, verdict"
        assert len(lines) == 4
        assert all(line.endswith("ok") for line in lines[1:])
