import itertools
import math

import numpy as np
import pytest

from blindid import (
    Dataset,
    Dims,
    InputPlan,
    LtvModel,
    SolverOptions,
    StabilityInputs,
    assemble,
    check_rank_conditions,
    mcc_bound,
    mutual_coherence,
    nsp_check,
    partial_nsp_check,
    partial_rip_constant,
    rip_constant_bruteforce,
    simulate_dataset,
    solve_bpdn,
    spark_bruteforce,
    stability_bounds,
    theorem1_check,
)
from blindid.errors import BudgetError
from blindid.sensing import SensingSystem, numerical_rank


class TestMutualCoherence:
    def test_identity_is_zero(self):
        assert mutual_coherence(np.eye(4)) == 0.0

    def test_duplicated_column_is_one(self):
        mat = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        assert mutual_coherence(mat) == pytest.approx(1.0)

    def test_hand_value(self):
        mat = np.array([[1.0, 1 / math.sqrt(2)], [0.0, 1 / math.sqrt(2)]])
        assert mutual_coherence(mat) == pytest.approx(1 / math.sqrt(2), abs=1e-12)

    def test_zero_column_rejected(self):
        with pytest.raises(ValueError):
            mutual_coherence(np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_needs_two_columns(self):
        with pytest.raises(ValueError):
            mutual_coherence(np.ones((3, 1)))


class TestMccBound:
    def test_values(self):
        assert mcc_bound(0.5) == pytest.approx(1.5)
        assert mcc_bound(1.0) == pytest.approx(1.0)
        assert mcc_bound(0.0) == math.inf

    def test_domain(self):
        with pytest.raises(ValueError):
            mcc_bound(1.5)
        with pytest.raises(ValueError):
            mcc_bound(-0.1)


class TestSpark:
    def test_identity_convention(self):
        res = spark_bruteforce(np.eye(3))
        assert (res.value, res.exact) == (4, True)

    def test_duplicated_column(self):
        mat = np.array([[1.0, 2.0, 1.0], [0.0, 1.0, 0.0], [3.0, 0.0, 3.0]])
        res = spark_bruteforce(mat)
        assert (res.value, res.exact) == (2, True)

    def test_zero_column(self):
        mat = np.array([[1.0, 0.0], [0.0, 0.0]])
        assert spark_bruteforce(mat).value == 1

    def test_random_3x4_generic(self):
        rng = np.random.default_rng(0)
        res = spark_bruteforce(rng.standard_normal((3, 4)))
        assert (res.value, res.exact) == (4, True)

    def test_budget_gives_lower_bound(self):
        rng = np.random.default_rng(1)
        mat = rng.standard_normal((6, 12))
        res = spark_bruteforce(mat, budget=12 + math.comb(12, 2))  # sizes 1 and 2 only
        assert not res.exact
        assert res.value == 3  # all smaller subsets verified independent

    def test_exhaustive_matches_definition(self):
        rng = np.random.default_rng(2)
        base = rng.standard_normal((4, 3))
        mat = np.hstack([base, (base[:, :1] + base[:, 1:2])])  # 3-column dependency
        res = spark_bruteforce(mat)
        assert (res.value, res.exact) == (3, True)


class TestRankConditions:
    def test_q_smaller_than_n_fails_count(self):
        dims = Dims(n=10, k_f=2, q=5)
        ds = Dataset(dims, np.random.default_rng(0).standard_normal((5, 3, 10)))
        checks = check_rank_conditions(ds, "ltv")
        count = checks[0]
        assert not count.passed and count.rank == 5 and count.required == 10
        assert not any(c.passed for c in checks[1:])

    def test_generic_pass(self):
        dims = Dims(n=4, k_f=3, q=6)
        ds = Dataset(dims, np.random.default_rng(1).standard_normal((6, 4, 4)))
        checks = check_rank_conditions(ds, "ltv")
        assert all(c.passed for c in checks)
        assert [c.rank for c in checks[1:]] == [4, 4, 4]

    def test_lti_stacked(self):
        dims = Dims(n=4, k_f=2, q=2, lti=True)
        ds = Dataset(dims, np.random.default_rng(2).standard_normal((2, 3, 4)))
        checks = check_rank_conditions(ds, "lti")
        assert all(c.passed for c in checks)  # k_f*q = 4 >= n = 4, generic rank 4

    def test_lti_insufficient_samples(self):
        dims = Dims(n=5, k_f=2, q=2, lti=True)
        ds = Dataset(dims, np.random.default_rng(3).standard_normal((2, 3, 5)))
        checks = check_rank_conditions(ds, "lti")
        assert not checks[0].passed


class TestRip:
    def test_orthonormal_columns(self):
        res = rip_constant_bruteforce(np.eye(4), 2)
        assert res.delta == pytest.approx(0.0, abs=1e-12)
        assert res.lemma_pass

    def test_correlated_pair(self):
        rho = 0.3
        mat = np.array([[1.0, rho], [0.0, math.sqrt(1 - rho * rho)]])
        res = rip_constant_bruteforce(mat, 2)
        assert res.delta == pytest.approx(rho, abs=1e-12)

    def test_scaled_identity(self):
        res = rip_constant_bruteforce(2 * np.eye(2), 1)
        assert res.delta == pytest.approx(3.0)
        assert not res.lemma_pass

    def test_monotone_in_order(self):
        rng = np.random.default_rng(4)
        mat = rng.standard_normal((6, 8)) / math.sqrt(6)
        deltas = [rip_constant_bruteforce(mat, s).delta for s in (1, 2, 3)]
        assert deltas[0] <= deltas[1] <= deltas[2]

    def test_budget(self):
        with pytest.raises(BudgetError):
            rip_constant_bruteforce(np.eye(30), 15, budget=1000)


class TestNsp:
    def test_trivial_null_space_vacuous(self):
        res = nsp_check(np.eye(3), 1)
        assert res.holds and res.witness is None

    def test_balanced_null_vector_fails_strictly(self):
        res = nsp_check(np.array([[1.0, 1.0]]), 1)
        assert not res.holds
        assert res.worst_ratio == pytest.approx(0.5, abs=1e-9)
        x = res.witness
        assert np.sum(np.abs(x)) == pytest.approx(1.0)
        assert np.max(np.abs(x[list(res.worst_support)])) >= 0.5 - 1e-9

    def test_unbalanced_null_vector(self):
        res = nsp_check(np.array([[1.0, 2.0]]), 1)
        assert not res.holds
        assert res.worst_ratio == pytest.approx(2.0 / 3.0, abs=1e-9)

    def test_holds_on_good_matrix(self):
        # wide matrix whose null space keeps mass spread out
        rng = np.random.default_rng(11)
        mat = rng.standard_normal((5, 6))
        res = nsp_check(mat, 1)
        if res.holds:
            assert res.worst_ratio < 0.5

    def test_budget(self):
        with pytest.raises(BudgetError):
            nsp_check(np.ones((1, 20)), 4, budget=100)

    def test_nsp_predicts_exhaustive_l1_recovery(self):
        # valid equivalence: NSP of order s <=> every s-sparse vector is the
        # unique basis pursuit solution; checked exhaustively at tiny scale
        rng = np.random.default_rng(5)
        for _ in range(6):
            mat = rng.standard_normal((4, 6))
            res = nsp_check(mat, 1)
            recovered_all = True
            for idx in range(6):
                for sign in (1.0, -1.0):
                    x = np.zeros(6)
                    x[idx] = sign * 1.3
                    sol = solve_bpdn(mat, mat @ x, SolverOptions(eta=0.0))
                    if np.max(np.abs(sol.x - x)) > 1e-6:
                        recovered_all = False
            assert res.holds == recovered_all


def _system_from_psi_a(psi_a, dims):
    return SensingSystem(dims, psi_a, np.zeros(psi_a.shape[0]), 0.0)


class TestPartialChecks:
    def test_square_invertible_gives_delta_one(self):
        dims = Dims(n=1, k_f=1, q=1)
        sys_ = _system_from_psi_a(np.array([[3.0]]), dims)
        res = partial_rip_constant(sys_, 1)
        assert res.delta == pytest.approx(1.0)  # P = 0, zero columns

    def test_axis_regressor_detail(self):
        dims = Dims(n=1, k_f=1, q=2)
        sys_ = _system_from_psi_a(np.array([[1.0], [0.0]]), dims)
        res = partial_rip_constant(sys_, 1)
        # P = diag(0, 1): projected-away column has squared norm 0
        assert res.delta == pytest.approx(1.0)
        assert res.worst_support == (0,)

    def test_random_tall_closed_form(self):
        rng = np.random.default_rng(7)
        dims = Dims(n=2, k_f=1, q=4)
        psi_a = rng.standard_normal((8, 4))
        sys_ = _system_from_psi_a(psi_a, dims)
        from blindid import complement_projector
        p = complement_projector(sys_).p
        expected = float(np.max(np.abs(np.sum(p * p, axis=0) - 1.0)))
        assert partial_rip_constant(sys_, 1).delta == pytest.approx(expected, abs=1e-12)

    def test_partial_nsp_mirrors_plain_check_after_projection(self):
        # craft regressors whose range is span((1,1)) and span((1,2)): the
        # projected identity then reproduces the scalar nsp examples
        dims = Dims(n=1, k_f=1, q=2)
        for col, holds in [(np.array([[1.0], [1.0]]), False),
                           (np.array([[1.0], [2.0]]), False)]:
            res = partial_nsp_check(_system_from_psi_a(col, dims), 1)
            assert res.holds == holds

    def test_full_range_vacuous(self):
        dims = Dims(n=1, k_f=2, q=1)
        sys_ = _system_from_psi_a(np.eye(2), dims)
        assert partial_nsp_check(sys_, 1).holds

    def test_zero_rank_regressor_reduces_to_plain_nsp(self):
        # rank-0 regressor block: P = I and the partial property is the plain
        # property of the identity input block (vacuously true)
        dims = Dims(n=1, k_f=1, q=2)
        sys_ = _system_from_psi_a(np.zeros((2, 1)), dims)
        from blindid import complement_projector
        proj = complement_projector(sys_, allow_rank_deficient=True)
        assert np.array_equal(proj.p, np.eye(2))
        plain = nsp_check(np.eye(2), 1)
        projected = nsp_check(proj.p, 1)
        assert plain.holds == projected.holds


class TestStabilityBounds:
    def test_noiseless_exact(self):
        inp = StabilityInputs(beta1=1.0, beta2=1.0, eta=0.0, sigma_s=0.0, s=5, r=2, c1=1.0, c2=1.0)
        assert stability_bounds(inp) == (0.0, 0.0)

    def test_eta_term(self):
        inp = StabilityInputs(beta1=1.0, beta2=0.0, eta=0.1, sigma_s=0.0, s=4, r=1, c1=0.0, c2=0.0)
        assert stability_bounds(inp)[0] == pytest.approx(0.1)

    def test_dense_bound_formula(self):
        inp = StabilityInputs(beta1=1.0, beta2=0.0, eta=0.1, sigma_s=0.0, s=4, r=1, c1=1.0, c2=1.0)
        bound_u, bound_a = stability_bounds(inp)
        assert bound_a == pytest.approx(2 * 0.1 + bound_u)
        assert bound_a == pytest.approx(0.3)

    def test_degenerate_order(self):
        inp = StabilityInputs(beta1=1.0, beta2=1.0, eta=0.0, sigma_s=0.5, s=3, r=3, c1=1.0, c2=1.0)
        with pytest.raises(ValueError):
            stability_bounds(inp)
        ok = StabilityInputs(beta1=2.0, beta2=1.0, eta=0.1, sigma_s=0.0, s=3, r=3, c1=1.0, c2=1.0)
        assert stability_bounds(ok)[0] == pytest.approx(0.2)

    def test_validation(self):
        with pytest.raises(ValueError):
            StabilityInputs(beta1=-1.0, beta2=0.0, eta=0.0, sigma_s=0.0, s=2, r=1, c1=0.0, c2=0.0)
        with pytest.raises(ValueError):
            StabilityInputs(beta1=0.0, beta2=0.0, eta=0.0, sigma_s=0.0, s=1, r=2, c1=0.0, c2=0.0)


class TestTheorem1Check:
    def test_paper_scale_fraction(self):
        rng = np.random.default_rng(9)
        dims = Dims(n=10, k_f=4, q=10)
        ds = Dataset(dims, rng.standard_normal((10, 5, 10)))
        report = theorem1_check(ds, u_true_sparsity=40, mode="ltv")
        assert report.rho_u == pytest.approx(0.1)
        assert report.rho_u <= 0.5

    def test_full_sparsity_fails(self):
        rng = np.random.default_rng(10)
        dims = Dims(n=3, k_f=2, q=4)
        ds = Dataset(dims, rng.standard_normal((4, 3, 3)))
        report = theorem1_check(ds, u_true_sparsity=dims.n_measurements, mode="ltv")
        assert report.rho_u == 1.0
        assert report.theorem1_pass is False

    def test_rank_deficiency_fails(self):
        rng = np.random.default_rng(11)
        dims = Dims(n=4, k_f=2, q=2)  # q < n
        ds = Dataset(dims, rng.standard_normal((2, 3, 4)))
        report = theorem1_check(ds, u_true_sparsity=2, mode="ltv")
        assert report.psi_a_full_rank is False
        assert report.theorem1_pass is False
        assert not report.rank_conditions_pass

    def test_coherence_and_spark_extras(self):
        rng = np.random.default_rng(12)
        dims = Dims(n=2, k_f=1, q=3)
        ds = Dataset(dims, rng.standard_normal((3, 2, 2)))
        report = theorem1_check(ds, 1, "ltv", with_coherence=True, spark_budget=10 ** 5)
        assert 0.0 <= report.mu <= 1.0
        assert report.mcc_bound >= 1.0
        assert report.spark is not None

    def test_unknown_sparsity(self):
        rng = np.random.default_rng(13)
        dims = Dims(n=2, k_f=2, q=3)
        ds = Dataset(dims, rng.standard_normal((3, 3, 2)))
        report = theorem1_check(ds, None, "ltv")
        assert report.rho_u is None and report.theorem1_pass is None

    def test_json_round_trip_fields(self):
        rng = np.random.default_rng(14)
        dims = Dims(n=2, k_f=1, q=3)
        ds = Dataset(dims, rng.standard_normal((3, 2, 2)))
        doc = theorem1_check(ds, 2, "ltv").to_dict()
        assert set(doc) >= {"mode", "rho_u", "psi_a_full_rank", "per_step_ranks",
                            "theorem1_pass", "s_u"}


class TestOrderingInvariant:
    def test_mcc_bound_below_half_spark(self):
        rng = np.random.default_rng(20)
        for _ in range(10):
            mat = rng.standard_normal((4, 8))
            spark = spark_bruteforce(mat)
            assert spark.exact
            bound = mcc_bound(mutual_coherence(mat))
            assert bound <= spark.value / 2 + 1e-12


class TestCorollarySoundness:
    def test_equivalence_both_directions(self):
        rng = np.random.default_rng(21)
        for trial in range(20):
            n = int(rng.integers(2, 5))
            k_f = int(rng.integers(1, 4))
            q = int(rng.integers(max(1, n - 2), 2 * n + 1))
            dims = Dims(n=n, k_f=k_f, q=q)
            snaps = rng.standard_normal((q, k_f + 1, n))
            if trial % 4 == 0 and q >= 2:
                snaps[1] = snaps[0]  # duplicated experiment can break rank at q >= n
            ds = Dataset(dims, snaps)
            sys_ = assemble(ds, "ltv")
            full_rank = numerical_rank(sys_.psi_a) == sys_.psi_a.shape[1]
            per_step = check_rank_conditions(ds, "ltv")[1:]
            assert full_rank == all(c.passed for c in per_step)
