import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cve.bandwidth import bandwidth_rot
from cve.errors import DegenerateSliceError, InvalidArgumentError, InvalidDimensionError
from cve.manifold import random_stiefel
from cve.objective import (
    DataSet,
    KernelSpec,
    Ltilde_n,
    Objective,
    SliceCache,
    distances,
    kernel_weights,
    local_stats,
    objective_Ln,
    objective_Ln_weighted,
    oracle_L_toy,
)
from oracles import naive_Ln, naive_Ln_weighted, naive_Ltilde, naive_weights, toy_dataset

GAUSS = KernelSpec("gaussian", 1.0)


def random_instance(seed, n=None, p=None, q=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(3, 11))
    p = p or int(rng.integers(2, 6))
    q = q or int(rng.integers(1, p))
    X = rng.standard_normal((n, p))
    y = X[:, 0] ** 2 + 0.3 * rng.standard_normal(n)
    return DataSet(y, X), random_stiefel(p, q, rng), float(rng.uniform(0.5, 3.0)), rng


class TestDataSet:
    def test_shapes(self):
        d = DataSet([1, 2, 3], [[1, 2], [3, 4], [5, 6]])
        assert (d.n, d.p) == (3, 2)

    def test_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            DataSet([1, 2], np.zeros((3, 2)))

    def test_too_small_and_nonfinite(self):
        with pytest.raises(InvalidArgumentError):
            DataSet([1.0], [[1.0]])
        with pytest.raises(InvalidArgumentError):
            DataSet([1.0, np.nan], np.zeros((2, 1)))
        with pytest.raises(InvalidArgumentError):
            DataSet([1.0, 2.0], [[0.0], [np.inf]])


class TestKernelSpec:
    def test_invalid(self):
        with pytest.raises(InvalidArgumentError):
            KernelSpec("gaussian", 0.0)
        with pytest.raises(InvalidArgumentError):
            KernelSpec("triangle", 1.0)

    @pytest.mark.parametrize("kind", ["gaussian", "exponential", "epanechnikov-squared"])
    def test_nonincreasing_bounded(self, kind):
        z = np.linspace(0, 5, 501)
        k = KernelSpec(kind)(z)
        assert np.all(np.diff(k) <= 0)
        assert k.max() <= 1.0 and k.min() >= 0.0


class TestDistances:
    def test_full_frame_gives_zero(self):
        data, _, _, rng = random_instance(0, p=4)
        V = random_stiefel(4, 4, rng)
        assert np.allclose(distances(data, V, rng.standard_normal(4)), 0.0, atol=1e-12)

    def test_shift_at_observation(self):
        data, V, _, _ = random_instance(1)
        assert distances(data, V, data.X[2])[2] == 0.0

    def test_handmade(self):
        data = DataSet([0.0, 1.0], [[3.0, 4.0], [0.0, 1.0]])
        d = distances(data, np.array([[0.0], [1.0]]), np.zeros(2))
        assert d[0] == pytest.approx(9.0, abs=1e-14)
        assert d[1] == pytest.approx(0.0, abs=1e-14)

    def test_shape_mismatch(self):
        data, V, _, _ = random_instance(2, p=3)
        with pytest.raises(InvalidDimensionError):
            distances(data, V, np.zeros(2))
        with pytest.raises(InvalidDimensionError):
            distances(data, np.eye(2), np.zeros(3))

    def test_matches_loop_oracle(self):
        data, V, h, _ = random_instance(3)
        _, d, _ = naive_weights(data.X, data.y, V, data.X[0], h)
        assert np.allclose(distances(data, V, data.X[0]), d, atol=1e-12)


class TestKernelWeights:
    def test_equal_distances(self):
        w = kernel_weights(np.full(5, 0.7), GAUSS)
        assert np.allclose(w, 0.2, atol=1e-15)

    def test_two_points(self):
        w = kernel_weights(np.array([0.0, 2.0]), GAUSS)
        e = math.exp(-2.0)
        assert w == pytest.approx([1 / (1 + e), e / (1 + e)], abs=1e-15)
        assert w == pytest.approx([0.88080, 0.11920], abs=1e-5)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 50), min_size=1, max_size=30),
           st.sampled_from(["gaussian", "exponential", "epanechnikov-squared"]),
           st.floats(0.5, 100), st.floats(1e-3, 1e3))
    def test_normalized_and_scale_free(self, d, kind, h, c):
        d = np.array(d)
        d[0] = 0.0  # keep at least one slice member for the compact kernel
        w = kernel_weights(d, KernelSpec(kind, h))
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) <= 1e-12
        assert np.allclose(kernel_weights(d, KernelSpec(kind, h, c)), w, rtol=0, atol=1e-12)

    def test_underflow_raises(self):
        with pytest.raises(DegenerateSliceError) as info:
            kernel_weights(np.array([1e3, 2e3]), KernelSpec("gaussian", 1e-3), index=4)
        assert info.value.index == 4


class TestLocalStats:
    def test_constant_response(self):
        w = kernel_weights(np.array([0.1, 0.5, 2.0]), GAUSS)
        assert local_stats(np.full(3, 0.1), w).Ltilde == 0.0

    def test_uniform_weights_give_sample_variance(self):
        y = np.random.default_rng(0).standard_normal(9)
        st_ = local_stats(y, np.full(9, 1 / 9))
        ybar = sum(y) / 9
        assert st_.Ltilde == pytest.approx(sum((v - ybar) ** 2 for v in y) / 9, abs=1e-14)

    def test_two_points(self):
        st_ = local_stats(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
        assert (st_.ybar1, st_.ybar2, st_.Ltilde) == (0.5, 0.5, 0.25)

    def test_moment_identity(self):
        rng = np.random.default_rng(4)
        y = rng.standard_normal(12)
        w = rng.random(12)
        st_ = local_stats(y, w / w.sum())
        assert st_.Ltilde == pytest.approx(st_.ybar2 - st_.ybar1 ** 2, abs=1e-13)
        assert st_.Ltilde >= -1e-12

    def test_shape_mismatch(self):
        with pytest.raises(InvalidDimensionError):
            local_stats(np.zeros(3), np.ones(2) / 2)


class TestLn:
    def test_constant_response(self):
        X = np.random.default_rng(1).standard_normal((15, 3))
        data = DataSet(np.full(15, -2.3), X)
        V = random_stiefel(3, 2, np.random.default_rng(2))
        assert objective_Ln(data, V, GAUSS) == 0.0
        assert objective_Ln_weighted(data, V, GAUSS) == 0.0

    def test_three_points_against_naive_loop(self):
        data = DataSet([0.5, -1.0, 2.0], [[0.0, 1.0], [1.0, 0.5], [-0.5, 2.0]])
        V = np.array([[0.6], [0.8]])
        parts = [naive_Ltilde(data.X, data.y, V, data.X[i], 0.8) for i in range(3)]
        assert objective_Ln(data, V, KernelSpec("gaussian", 0.8)) == pytest.approx(sum(parts) / 3, abs=1e-14)

    @pytest.mark.parametrize("seed", range(8))
    def test_brute_force_equivalence(self, seed):
        data, V, h, _ = random_instance(seed)
        k = KernelSpec("gaussian", h)
        assert abs(objective_Ln(data, V, k) - naive_Ln(data.X, data.y, V, h)) <= 1e-12
        assert abs(objective_Ln_weighted(data, V, k) - naive_Ln_weighted(data.X, data.y, V, h)) <= 1e-12

    def test_per_shift_matches_cache(self):
        data, V, h, _ = random_instance(9, n=10)
        k = KernelSpec("gaussian", h)
        cache = SliceCache(data, V, k)
        for i in range(data.n):
            assert cache.Ltilde[i] == pytest.approx(Ltilde_n(data, V, data.X[i], k), abs=1e-13)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_rotation_invariance(self, seed):
        data, V, h, rng = random_instance(seed)
        q = V.shape[1]
        O, _ = np.linalg.qr(rng.standard_normal((q, q)))
        k = KernelSpec("gaussian", h)
        for f in (objective_Ln, objective_Ln_weighted):
            a, b = f(data, V, k), f(data, V @ O, k)
            assert abs(a - b) <= 1e-10 * (1 + abs(a))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
    def test_kernel_scale_invariance(self, seed, c):
        data, V, h, _ = random_instance(seed)
        a = KernelSpec("gaussian", h)
        b = KernelSpec("gaussian", h, c)
        assert abs(objective_Ln(data, V, a) - objective_Ln(data, V, b)) <= 1e-12
        assert abs(Ltilde_n(data, V, data.X[0], a) - Ltilde_n(data, V, data.X[0], b)) <= 1e-12

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_sandwich(self, seed):
        data, V, h, _ = random_instance(seed)
        cache = SliceCache(data, V, KernelSpec("gaussian", h))
        assert cache.Ltilde.min() - 1e-15 <= cache.value <= cache.Ltilde.max() + 1e-15

    def test_self_weight_keeps_every_slice_occupied(self):
        # K(d_ii / h) = K(0) = 1, so L_n is finite even for a tiny bandwidth
        data, V, _, _ = random_instance(11)
        assert np.isfinite(objective_Ln(data, V, KernelSpec("gaussian", 1e-9)))

    def test_weighted_degenerate_when_slices_are_singletons(self):
        data, V, _, _ = random_instance(12)
        with pytest.raises(DegenerateSliceError):
            objective_Ln_weighted(data, V, KernelSpec("epanechnikov-squared", 1e-12))

    def test_objective_class_matches_functions(self):
        data, V, h, _ = random_instance(10)
        k = KernelSpec("gaussian", h)
        assert Objective(data, k)(V) == objective_Ln(data, V, k)
        assert Objective(data, k, weighted=True)(V) == objective_Ln_weighted(data, V, k)


class TestWeighted:
    def test_uniform_occupancy_matches_Ln(self):
        # equilateral triangle in the x1-x2 plane; V = e3 keeps all pairwise distances equal
        X = np.array([[1.0, 0.0, 0.3], [-0.5, math.sqrt(3) / 2, -1.0], [-0.5, -math.sqrt(3) / 2, 2.0]])
        data = DataSet([0.2, 1.0, -0.7], X)
        V = np.array([[0.0], [0.0], [1.0]])
        k = KernelSpec("gaussian", 2.0)
        wt, _ = SliceCache(data, V, k).slice_weights()
        assert np.allclose(wt, 1 / 3, atol=1e-15)
        assert objective_Ln_weighted(data, V, k) == pytest.approx(objective_Ln(data, V, k), abs=1e-15)

    def test_four_points_against_naive_loop(self):
        X = np.array([[0.0, 0.2], [1.0, -0.4], [0.3, 1.1], [-0.8, 0.5]])
        data = DataSet([1.0, -0.5, 0.25, 2.0], X)
        V = np.array([[np.cos(0.4)], [np.sin(0.4)]])
        got = objective_Ln_weighted(data, V, KernelSpec("gaussian", 0.6))
        assert got == pytest.approx(naive_Ln_weighted(X, data.y, V, 0.6), abs=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_slice_weights_normalized(self, seed):
        data, V, h, _ = random_instance(seed)
        wt, _ = SliceCache(data, V, KernelSpec("gaussian", h)).slice_weights()
        assert np.all(wt >= 0) and abs(wt.sum() - 1) <= 1e-12


class TestToyOracle:
    def test_orthogonal_frame_gives_noise_level(self):
        for Sigma in (np.eye(2), np.array([[2.0, 0.5], [0.5, 1.0]])):
            B = np.array([0.6, 0.8])
            V = np.array([-0.8, 0.6])
            assert oracle_L_toy(V, Sigma, B, 0.04) == pytest.approx(0.04, abs=1e-15)

    def test_aligned_frame(self):
        assert oracle_L_toy([1.0, 0.0], np.eye(2), [1.0, 0.0], 0.01) == pytest.approx(1.01, abs=1e-15)

    def test_quarter_turn(self):
        v = [math.cos(math.pi / 4), math.sin(math.pi / 4)]
        assert oracle_L_toy(v, np.eye(2), [1.0, 0.0], 0.01) == pytest.approx(0.51, abs=1e-14)

    def test_minimized_only_orthogonal_to_B(self):
        Sigma = np.array([[1.5, 0.3], [0.3, 0.7]])
        thetas = np.linspace(0, np.pi, 2001)
        vals = [oracle_L_toy([math.cos(t), math.sin(t)], Sigma, [1.0, 0.0], 0.01) for t in thetas]
        assert thetas[int(np.argmin(vals))] == pytest.approx(math.pi / 2, abs=1e-3)
        assert min(vals) >= 0.01 - 1e-15

    def test_singular_sigma(self):
        with pytest.raises(InvalidArgumentError):
            oracle_L_toy([1.0, 0.0], np.ones((2, 2)), [1.0, 0.0], 0.0)


def test_toy_separation_rate():
    """``L_n(V(0)) > L_n(V(pi/2))`` in at least 95 of 100 seeded toy data sets."""
    V0 = np.array([[1.0], [0.0]])
    V90 = np.array([[0.0], [1.0]])
    wins = 0
    for seed in range(100):
        data = toy_dataset(500, seed=seed)
        obj = Objective(data, KernelSpec("gaussian", bandwidth_rot(500, 2, 1, data.X)))
        wins += obj(V0) > obj(V90)
    assert wins >= 95


def test_cache_slice_means_match_local_stats():
    data, V, h, _ = random_instance(13, n=9)
    data = DataSet(data.y + 40.0, data.X)
    k = KernelSpec("gaussian", h)
    cache = SliceCache(data, V, k)
    for i in range(data.n):
        ref = local_stats(data.y, kernel_weights(distances(data, V, data.X[i]), k))
        assert cache.ybar1[i] == pytest.approx(ref.ybar1, abs=1e-12)
        assert cache.Ltilde[i] == pytest.approx(ref.Ltilde, abs=1e-12)
