"""Core linear maps, particle measures, moments, transport metrics."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgreduce.core import (
    ParticleCloud,
    ReductionMap,
    half_line_moments,
    moments,
    power_feature,
    quadratic_feature,
    quadratic_slice_moments,
    reduce_and_lift,
    wasserstein,
)
from mfgreduce.exceptions import DegenerateMapError, InputError, UnsupportedConfigurationError


def brute_force_wasserstein(xa, xb, q):
    """Oracle: exact optimum over all permutation couplings (equal sizes)."""
    xa, xb = np.asarray(xa, dtype=float), np.asarray(xb, dtype=float)
    M = len(xa)
    best = np.inf
    for perm in itertools.permutations(range(M)):
        cost = np.mean([np.linalg.norm(np.atleast_1d(xa[i] - xb[p])) ** q for i, p in enumerate(perm)])
        best = min(best, cost)
    return best ** (1.0 / q)


def lp_wasserstein(xa, xb, q):
    """Oracle: transport LP solved with scipy.linprog (any sizes, d = 1)."""
    from scipy.optimize import linprog

    Ma, Mb = len(xa), len(xb)
    cost = np.abs(np.subtract.outer(xa, xb)) ** q
    A_eq = []
    b_eq = []
    for i in range(Ma):
        row = np.zeros((Ma, Mb))
        row[i, :] = 1.0
        A_eq.append(row.ravel())
        b_eq.append(1.0 / Ma)
    for j in range(Mb):
        row = np.zeros((Ma, Mb))
        row[:, j] = 1.0
        A_eq.append(row.ravel())
        b_eq.append(1.0 / Mb)
    res = linprog(cost.ravel(), A_eq=np.array(A_eq), b_eq=np.array(b_eq), bounds=(0, None))
    assert res.success
    return res.fun ** (1.0 / q)


class TestReductionMap:
    def test_identity_case(self):
        rmap = ReductionMap(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
        lx, lu, _ = reduce_and_lift(rmap, x=np.array([3.0, 4.0, 0.0]), u=np.array([1.0, 2.0]))
        assert np.allclose(lx, [3.0, 4.0])
        assert np.allclose(lu, [1.0, 2.0, 0.0])

    def test_row_sum_map(self):
        rmap = ReductionMap(np.array([[1.0, 1.0]]))
        lx, lu, pre = reduce_and_lift(rmap, x=np.array([2.0, 5.0]), u=np.array([3.0]),
                                      y=np.array([7.0]))
        assert lx[0] == 7.0
        assert np.allclose(lu, [3.0, 3.0])
        # by hand: L+ = L* (L L*)^{-1}, L L* = 2, so L+ 7 = (3.5, 3.5)
        assert np.allclose(pre, [3.5, 3.5])
        assert np.allclose(rmap.apply(pre), [7.0])

    def test_right_inverse_property_presets(self):
        presets = [
            np.array([[1.0, 1.0]]),
            np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
            np.array([[1.0, 2.0, 3.0], [0.0, 1.0, -1.0]]),
        ]
        for L in presets:
            rmap = ReductionMap(L)
            n = rmap.n
            resid = np.abs(rmap.matrix @ rmap.right_inverse - np.eye(n)).max()
            assert resid <= 1e-12

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_right_inverse_random_maps(self, seed):
        rng = np.random.default_rng(seed)
        N = int(rng.integers(2, 7))
        n = int(rng.integers(1, N))
        L = rng.normal(size=(n, N))
        try:
            rmap = ReductionMap(L)
        except DegenerateMapError:
            return
        assert np.abs(rmap.matrix @ rmap.right_inverse - np.eye(n)).max() <= 1e-12
        # kernel basis is orthonormal and annihilated by L
        K = rmap.kernel_basis
        assert np.abs(K @ K.T - np.eye(N - n)).max() < 1e-10
        assert np.abs(rmap.apply(K)).max() < 1e-10 * max(1.0, np.abs(L).max())

    def test_degenerate_map_rejected(self):
        with pytest.raises(DegenerateMapError):
            ReductionMap(np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0]]))

    def test_dimension_mismatch(self):
        rmap = ReductionMap(np.array([[1.0, 1.0]]))
        with pytest.raises(InputError):
            rmap.apply(np.zeros(3))
        with pytest.raises(InputError):
            ReductionMap(np.eye(2))  # needs n < N


class TestMoments:
    def test_dirac(self):
        phi = power_feature(2.0)  # |y|^2 / 2
        assert moments(ParticleCloud(np.array([2.0])), phi) == pytest.approx(2.0, abs=1e-15)

    def test_two_point_hand_sum(self):
        cloud = ParticleCloud(np.array([-1.0, 1.0]))
        vals = moments(cloud, quadratic_feature())
        assert np.allclose(vals, [1.0, 0.0, 0.5])

    def test_zero_cloud(self):
        cloud = ParticleCloud(np.zeros(3))
        assert moments(cloud, power_feature(2.0)) == 0.0

    def test_moments_in_moment_set(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            cloud = ParticleCloud(rng.normal(size=rng.integers(1, 30)))
            z = moments(cloud, quadratic_feature())
            assert quadratic_slice_moments().contains(z, tol=1e-9)
            assert half_line_moments().contains(moments(cloud, power_feature(2.0)))

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_concat_linearity(self, seed):
        rng = np.random.default_rng(seed)
        a = ParticleCloud(rng.normal(size=rng.integers(1, 20)))
        b = ParticleCloud(rng.normal(size=rng.integers(1, 20)))
        phi = quadratic_feature()
        lhs = moments(a.concat(b), phi)
        rhs = (a.M * np.asarray(moments(a, phi)) + b.M * np.asarray(moments(b, phi))) / (a.M + b.M)
        assert np.allclose(lhs, rhs, rtol=0, atol=1e-12)


class TestWasserstein:
    def test_two_diracs(self):
        for q in (1.0, 2.0, 3.5):
            a, b = ParticleCloud(np.array([1.0])), ParticleCloud(np.array([-2.5]))
            assert wasserstein(a, b, q) == pytest.approx(3.5, abs=1e-14)

    def test_identical_clouds(self):
        pts = np.array([0.3, -1.2, 4.0])
        assert wasserstein(ParticleCloud(pts), ParticleCloud(pts.copy()), 2.0) == 0.0

    def test_two_point_brute_force(self):
        a, b = ParticleCloud(np.array([0.0, 1.0])), ParticleCloud(np.array([1.0, 2.0]))
        # oracle over both couplings of 2 points
        assert brute_force_wasserstein([0.0, 1.0], [1.0, 2.0], 1.0) == pytest.approx(1.0)
        assert wasserstein(a, b, 1.0) == pytest.approx(1.0, abs=1e-14)

    def test_1d_matches_brute_force(self):
        rng = np.random.default_rng(3)
        for q in (1.0, 2.0):
            xa, xb = rng.normal(size=5), rng.normal(size=5)
            got = wasserstein(ParticleCloud(xa), ParticleCloud(xb), q)
            assert got == pytest.approx(brute_force_wasserstein(xa, xb, q), abs=1e-12)

    def test_1d_unequal_sizes_lp_oracle(self):
        rng = np.random.default_rng(11)
        xa, xb = rng.normal(size=4), rng.normal(size=7)
        got = wasserstein(ParticleCloud(xa), ParticleCloud(xb), 2.0)
        assert got == pytest.approx(lp_wasserstein(xa, xb, 2.0), abs=1e-9)

    def test_d2_matches_brute_force(self):
        rng = np.random.default_rng(5)
        xa, xb = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
        got = wasserstein(ParticleCloud(xa), ParticleCloud(xb), 2.0)
        assert got == pytest.approx(brute_force_wasserstein(xa, xb, 2.0), abs=1e-12)

    def test_d2_unequal_sizes_rejected(self):
        with pytest.raises(UnsupportedConfigurationError):
            wasserstein(ParticleCloud(np.zeros((2, 2))), ParticleCloud(np.zeros((3, 2))), 2.0)

    def test_cap_and_order_validation(self):
        with pytest.raises(InputError):
            wasserstein(ParticleCloud(np.zeros(2)), ParticleCloud(np.zeros(2)), 0.5)
        big = ParticleCloud(np.zeros((513, 2)))
        with pytest.raises(UnsupportedConfigurationError):
            wasserstein(big, big, 2.0)

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        a = ParticleCloud(rng.normal(size=rng.integers(1, 40)))
        b = ParticleCloud(rng.normal(size=rng.integers(1, 40)))
        q = float(rng.uniform(1.0, 3.0))
        assert abs(wasserstein(a, b, q) - wasserstein(b, a, q)) <= 1e-12

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        M = int(rng.integers(1, 64))
        a, b, c = (ParticleCloud(rng.normal(size=M) * 3) for _ in range(3))
        q = float(rng.uniform(1.0, 3.0))
        assert wasserstein(a, c, q) <= wasserstein(a, b, q) + wasserstein(b, c, q) + 1e-10

    def test_second_moment_decay_under_contraction(self):
        # particles y e^{-t}: second moment decays by e^{-2t}
        pts = np.linspace(-1, 1, 33)
        phi = power_feature(2.0)
        m0 = moments(ParticleCloud(pts), phi)
        mt = moments(ParticleCloud(pts * np.exp(-0.7)), phi)
        assert mt == pytest.approx(m0 * np.exp(-1.4), rel=1e-12)
