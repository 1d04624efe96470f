import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blindid import (
    Dataset,
    Dims,
    InputPlan,
    LtvModel,
    flat_index,
    load_dataset,
    save_dataset,
    simulate_dataset,
    simulate_step,
    stack_measurements,
)
from blindid.errors import ConfigError


class TestDims:
    def test_valid(self):
        d = Dims(n=3, k_f=4, q=5)
        assert d.n_measurements == 60
        assert d.n_dynamics == 36
        assert Dims(n=3, k_f=4, q=5, lti=True).n_dynamics == 9

    @pytest.mark.parametrize("bad", [dict(n=0, k_f=1, q=1), dict(n=1, k_f=0, q=1),
                                     dict(n=1, k_f=1, q=-2), dict(n=1.5, k_f=1, q=1)])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            Dims(**bad)


class TestSimulateStep:
    def test_identity(self):
        out = simulate_step(np.eye(2), [1.0, 2.0], [0.0, 0.0], [0.0, 0.0])
        assert np.array_equal(out, [1.0, 2.0])

    def test_zero_dynamics(self):
        out = simulate_step(np.zeros((2, 2)), [5.0, 5.0], [3.0, -1.0], [0.0, 0.0])
        assert np.array_equal(out, [3.0, -1.0])

    def test_hand_matrix(self):
        out = simulate_step([[0.0, 1.0], [1.0, 0.0]], [1.0, 2.0], [0.5, 0.0], [0.0, 0.0])
        assert np.allclose(out, [2.5, 1.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            simulate_step(np.eye(3), [1.0, 2.0], [0.0, 0.0], [0.0, 0.0])

    @given(st.integers(1, 4), st.integers(0, 6))
    @settings(max_examples=25, deadline=None)
    def test_linearity_in_input(self, n, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((n, n))
        z, u1, u2 = rng.standard_normal((3, n))
        lhs = simulate_step(a, z, u1 + u2, np.zeros(n))
        rhs = simulate_step(a, z, u1, np.zeros(n)) + u2
        assert np.allclose(lhs, rhs, atol=1e-12)


class TestSimulateDataset:
    def test_identity_dynamics_keeps_state(self):
        dims = Dims(n=2, k_f=3, q=2)
        model = LtvModel(dims, np.stack([np.eye(2)] * 3))
        z0 = np.array([[1.0, -2.0], [0.5, 4.0]])
        ds = simulate_dataset(model, InputPlan(dims), None, z0)
        assert np.array_equal(ds.snapshots, np.stack([np.stack([row] * 4) for row in z0]))

    def test_hand_iteration(self):
        dims = Dims(n=1, k_f=2, q=1)
        model = LtvModel(dims, np.array([[[2.0]], [[3.0]]]))
        ds = simulate_dataset(model, InputPlan(dims), None, np.array([[1.0]]))
        assert np.array_equal(ds.snapshots.ravel(), [1.0, 2.0, 6.0])

    def test_zero_noise_gives_zero_eta(self):
        dims = Dims(n=2, k_f=2, q=1)
        model = LtvModel(dims, np.stack([np.eye(2)] * 2))
        ds = simulate_dataset(model, InputPlan(dims), np.zeros((1, 2, 2)), np.ones((1, 2)))
        assert ds.eta == 0.0

    def test_eta_is_realized_noise_norm(self):
        dims = Dims(n=2, k_f=2, q=3)
        model = LtvModel(dims, np.stack([np.eye(2)] * 2))
        noise = np.arange(12, dtype=float).reshape(3, 2, 2) / 10
        ds = simulate_dataset(model, InputPlan(dims), noise, np.zeros((3, 2)))
        assert ds.eta == pytest.approx(np.linalg.norm(noise.ravel()))
        loose = simulate_dataset(model, InputPlan(dims), noise, np.zeros((3, 2)), eta=10.0)
        assert loose.eta == 10.0
        with pytest.raises(ValueError):
            simulate_dataset(model, InputPlan(dims), noise, np.zeros((3, 2)), eta=1e-3)

    def test_overflow(self):
        dims = Dims(n=1, k_f=60, q=1)
        model = LtvModel(dims, np.full((60, 1, 1), 1e20))
        with pytest.raises(OverflowError):
            simulate_dataset(model, InputPlan(dims), None, np.array([[1e20]]))

    def test_round_trip_resimulation(self):
        rng = np.random.default_rng(3)
        dims = Dims(n=3, k_f=4, q=2)
        model = LtvModel(dims, rng.standard_normal((4, 3, 3)))
        plan = InputPlan(dims, {(0, 1, 2): 0.7, (1, 3, 0): -1.1})
        ds = simulate_dataset(model, plan, None, rng.standard_normal((2, 3)))
        again = simulate_dataset(model, plan, None, ds.snapshots[:, 0, :])
        assert np.array_equal(ds.snapshots, again.snapshots)


class TestStacking:
    def test_singleton(self):
        dims = Dims(n=1, k_f=1, q=1)
        ds = Dataset(dims, np.array([[[0.0], [7.0]]]))
        assert np.array_equal(stack_measurements(ds), [7.0])

    def test_column_major_order(self):
        # z(1)[1]=a, z(2)[1]=b, z(1)[2]=c, z(2)[2]=d stacks to (a, c, b, d)
        dims = Dims(n=1, k_f=2, q=2)
        snaps = np.zeros((2, 3, 1))
        snaps[0, 1, 0], snaps[1, 1, 0] = 1.0, 2.0
        snaps[0, 2, 0], snaps[1, 2, 0] = 3.0, 4.0
        ds = Dataset(dims, snaps)
        assert np.array_equal(stack_measurements(ds), [1.0, 3.0, 2.0, 4.0])

    def test_length(self):
        dims = Dims(n=3, k_f=4, q=5)
        ds = Dataset(dims, np.zeros((5, 5, 3)))
        assert stack_measurements(ds).shape == (60,)

    def test_initial_states_never_measured(self):
        dims = Dims(n=2, k_f=1, q=2)
        snaps = np.zeros((2, 2, 2))
        snaps[:, 0, :] = 99.0  # regressors only
        ds = Dataset(dims, snaps)
        assert not np.any(stack_measurements(ds) == 99.0)

    def test_flat_index_matches_vector_layout(self):
        dims = Dims(n=2, k_f=3, q=2)
        plan = InputPlan(dims, {(1, 2, 0): 5.0})
        vec = plan.to_vector()
        assert vec[flat_index(dims, 1, 2, 0)] == 5.0
        assert np.sum(vec != 0) == 1


class TestInputPlan:
    def test_sparsity_count(self):
        dims = Dims(n=2, k_f=2, q=2)
        plan = InputPlan(dims, {(0, 0, 0): 1.0, (1, 1, 1): -2.0})
        assert plan.s_u == 2

    def test_round_trip(self):
        dims = Dims(n=2, k_f=2, q=3)
        plan = InputPlan(dims, {(0, 1, 1): 2.5, (2, 0, 0): -0.5})
        back = InputPlan.from_vector(dims, plan.to_vector())
        assert back.entries == plan.entries

    def test_index_out_of_range(self):
        dims = Dims(n=2, k_f=2, q=2)
        with pytest.raises(ValueError):
            InputPlan(dims, {(0, 0, 5): 1.0})

    def test_zero_value_rejected(self):
        dims = Dims(n=2, k_f=2, q=2)
        with pytest.raises(ValueError):
            InputPlan(dims, {(0, 0, 0): 0.0})


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(11)
        dims = Dims(n=3, k_f=2, q=4)
        ds = Dataset(dims, rng.standard_normal((4, 3, 3)), eta=0.25)
        save_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        assert back.dims == dims
        assert back.eta == ds.eta
        assert np.array_equal(back.snapshots, ds.snapshots)

    def test_lti_flag_round_trip(self, tmp_path):
        dims = Dims(n=2, k_f=2, q=1, lti=True)
        ds = Dataset(dims, np.ones((1, 3, 2)))
        save_dataset(ds, tmp_path)
        assert load_dataset(tmp_path).dims.lti is True


class TestLtvModel:
    def test_vector_round_trip(self):
        rng = np.random.default_rng(5)
        dims = Dims(n=3, k_f=2, q=1)
        model = LtvModel(dims, rng.standard_normal((2, 3, 3)))
        back = LtvModel.from_vector(dims, model.to_vector())
        assert np.array_equal(back.a_mats, model.a_mats)

    def test_lti_stores_one_matrix(self):
        dims = Dims(n=2, k_f=3, q=1, lti=True)
        model = LtvModel(dims, np.eye(2))
        assert model.a_mats.shape == (1, 2, 2)
        assert np.array_equal(model.a(2), np.eye(2))
        assert model.to_vector().shape == (4,)

    def test_lti_rejects_differing_slices(self):
        dims = Dims(n=2, k_f=2, q=1, lti=True)
        mats = np.stack([np.eye(2), 2 * np.eye(2)])
        with pytest.raises(ValueError):
            LtvModel(dims, mats)

    def test_wrong_count(self):
        dims = Dims(n=2, k_f=3, q=1)
        with pytest.raises(ValueError):
            LtvModel(dims, np.stack([np.eye(2)] * 2))
