"""Reduction maps, equal-weight particle measures, moment features, transport metrics.

Conventions: vectors are row-batched, i.e. an array of shape ``(..., N)`` holds
points of R^N in its last axis.  All objects here are immutable after
construction and all operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import DegenerateMapError, EvaluationError, InputError, UnsupportedConfigurationError

RIGHT_INVERSE_TOL = 1e-12
ASSIGNMENT_CAP = 512


@dataclass(frozen=True)
class ReductionMap:
    """Surjective linear map L: R^N -> R^n with cached adjoint and right inverse.

    The right inverse is L+ = L* (L L*)^{-1}, so L L+ = I on R^n.  Rank and
    conditioning of L L* are checked at construction.
    """

    matrix: np.ndarray
    adjoint: np.ndarray = field(init=False, repr=False)
    right_inverse: np.ndarray = field(init=False, repr=False)
    gram_inverse: np.ndarray = field(init=False, repr=False)
    kernel_basis: np.ndarray = field(init=False, repr=False)
    condition_number: float = field(init=False)

    def __post_init__(self):
        L = np.asarray(self.matrix, dtype=float)
        if L.ndim != 2:
            raise InputError("reduction map must be a 2-d matrix")
        n, N = L.shape
        if not n < N:
            raise InputError(f"need n < N, got shape {L.shape}")
        if not np.all(np.isfinite(L)):
            raise InputError("reduction map has non-finite entries")
        gram = L @ L.T
        cond = float(np.linalg.cond(gram))
        if not np.isfinite(cond) or cond > 1e14:
            raise DegenerateMapError(f"L L* numerically singular (cond={cond:.3e})")
        gram_inv = np.linalg.inv(gram)
        right_inv = L.T @ gram_inv
        resid = np.abs(L @ right_inv - np.eye(n)).max()
        if resid > RIGHT_INVERSE_TOL:
            raise DegenerateMapError(f"right inverse residual {resid:.3e} exceeds {RIGHT_INVERSE_TOL}")
        # rows n..N-1 of Vh span ker L
        _, _, vh = np.linalg.svd(L)
        object.__setattr__(self, "matrix", L)
        object.__setattr__(self, "adjoint", L.T.copy())
        object.__setattr__(self, "right_inverse", right_inv)
        object.__setattr__(self, "gram_inverse", gram_inv)
        object.__setattr__(self, "kernel_basis", vh[n:].copy())
        object.__setattr__(self, "condition_number", cond)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def N(self) -> int:
        return self.matrix.shape[1]

    def apply(self, x):
        """L x for x of shape (..., N)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.N:
            raise InputError(f"expected last axis {self.N}, got {x.shape[-1]}")
        return x @ self.matrix.T

    def apply_adjoint(self, u):
        """L* u for u of shape (..., n)."""
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.n:
            raise InputError(f"expected last axis {self.n}, got {u.shape[-1]}")
        return u @ self.matrix

    def apply_right_inverse(self, y):
        """L+ y for y of shape (..., n); satisfies L (L+ y) = y."""
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.n:
            raise InputError(f"expected last axis {self.n}, got {y.shape[-1]}")
        return y @ self.right_inverse.T

    def apply_gram_inverse(self, u):
        """(L L*)^{-1} u for u of shape (..., n)."""
        u = np.asarray(u, dtype=float)
        return u @ self.gram_inverse.T

    def sample_kernel(self, rng, shape=(), scale=1.0):
        """Random elements of ker L with coefficients uniform in [-scale, scale]."""
        k = self.N - self.n
        coeff = rng.uniform(-scale, scale, tuple(np.atleast_1d(shape)) + (k,))
        return coeff @ self.kernel_basis


def reduce_and_lift(rmap: ReductionMap, x=None, u=None, y=None):
    """Composite accessor: returns (L x, L* u, L+ y); entries are None when skipped."""
    lx = rmap.apply(x) if x is not None else None
    lifted = rmap.apply_adjoint(u) if u is not None else None
    pre = rmap.apply_right_inverse(y) if y is not None else None
    return lx, lifted, pre


@dataclass(frozen=True)
class ParticleCloud:
    """Equal-weight empirical measure on R^d: M points, each of mass 1/M."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise InputError("points must have shape (M,) or (M, d)")
        if pts.shape[0] < 1:
            raise InputError("need M >= 1 particles")
        if not np.all(np.isfinite(pts)):
            raise InputError("particle coordinates must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def concat(self, other: "ParticleCloud") -> "ParticleCloud":
        if other.d != self.d:
            raise InputError("dimension mismatch in concat")
        return ParticleCloud(np.concatenate([self.points, other.points], axis=0))

    def power_moment(self, order: float) -> float:
        """(1/M) sum |x_i|^order, Euclidean norm per particle."""
        r = np.linalg.norm(self.points, axis=1)
        return float(np.mean(r**order))

    @staticmethod
    def from_quantiles(inverse_cdf, M: int) -> "ParticleCloud":
        """Deterministic 1-d cloud at the mid-level quantiles (i+1/2)/M."""
        levels = (np.arange(M) + 0.5) / M
        return ParticleCloud(np.asarray([inverse_cdf(p) for p in levels], dtype=float))

    @staticmethod
    def uniform_quantiles(lo: float, hi: float, M: int) -> "ParticleCloud":
        levels = (np.arange(M) + 0.5) / M
        return ParticleCloud(lo + (hi - lo) * levels)


@dataclass(frozen=True)
class FeatureMap:
    """Feature map phi: R^d -> R^{m_feat} with derivative and growth metadata.

    ``phi`` is vectorized: input (..., d) (or (...,) when d = 1), output
    (..., m_feat).  ``dphi`` returns the gradient; for d = 1 its shape equals
    phi's.  ``growth_exponent`` is the declared K in |phi(x)| <= C (1+|x|^K).
    """

    family: str
    phi: callable
    dphi: callable
    m_feat: int
    d: int
    growth_exponent: float
    params: dict = field(default_factory=dict)

    def __call__(self, y):
        val = np.asarray(self.phi(np.asarray(y, dtype=float)), dtype=float)
        if not np.all(np.isfinite(val)):
            raise EvaluationError("feature map produced non-finite values", witness=y)
        return val

    def grad(self, y):
        return np.asarray(self.dphi(np.asarray(y, dtype=float)), dtype=float)

    def fitted_growth_constant(self, samples) -> float:
        """Smallest C with |phi(x)| <= C (1+|x|^K) over the given sample points."""
        samples = np.asarray(samples, dtype=float)
        vals = self(samples)
        mag = np.abs(vals) if self.m_feat == 1 else np.linalg.norm(vals, axis=-1)
        r = np.abs(samples) if self.d == 1 else np.linalg.norm(samples, axis=-1)
        return float(np.max(mag / (1.0 + r**self.growth_exponent)))


def power_feature(q_conj: float) -> FeatureMap:
    """phi(y) = |y|^{q'} / q' on R (scalar feature of the power family)."""
    qp = float(q_conj)

    def phi(y):
        return np.abs(y) ** qp / qp

    def dphi(y):
        return np.sign(y) * np.abs(y) ** (qp - 1.0)

    return FeatureMap("power", phi, dphi, m_feat=1, d=1, growth_exponent=qp, params={"q_conj": qp})


def quadratic_feature() -> FeatureMap:
    """phi(y) = (1, y, y^2/2) on R."""

    def phi(y):
        y = np.asarray(y, dtype=float)
        return np.stack([np.ones_like(y), y, 0.5 * y * y], axis=-1)

    def dphi(y):
        y = np.asarray(y, dtype=float)
        return np.stack([np.zeros_like(y), np.ones_like(y), y], axis=-1)

    return FeatureMap("polynomial-quadratic", phi, dphi, m_feat=3, d=1, growth_exponent=2.0)


@dataclass(frozen=True)
class MomentSet:
    """Admissible set C of feature moments, with membership and boundary data.

    ``contains(z, tol)`` and ``boundary_defect(z)`` are vectorized over the
    leading axes; ``outward_normal(z)`` is defined on the boundary only.
    ``sample(rng, size)`` draws points of C for randomized checks.
    """

    family: str
    contains: callable
    boundary_defect: callable
    outward_normal: callable
    sample: callable
    project: callable

    def distance_to_boundary(self, z):
        return np.abs(self.boundary_defect(z))


def half_line_moments(sample_hi: float = 5.0) -> MomentSet:
    """C = [0, inf) for the scalar power-family moment."""

    def contains(z, tol=1e-9):
        return np.asarray(z, dtype=float) >= -tol

    def defect(z):
        # signed distance to the boundary point {0}
        return np.asarray(z, dtype=float)

    def normal(z):
        return np.full_like(np.asarray(z, dtype=float), -1.0)

    def sample(rng, size=()):
        return rng.uniform(0.0, sample_hi, size)

    def project(z):
        return np.maximum(np.asarray(z, dtype=float), 0.0)

    return MomentSet("half-line", contains, defect, normal, sample, project)


def quadratic_slice_moments(z1_range=(-3.0, 3.0), gap_hi: float = 4.0) -> MomentSet:
    """C = {1} x {(z1, z2): z1^2/2 <= z2} for the quadratic feature triple."""

    def contains(z, tol=1e-9):
        z = np.asarray(z, dtype=float)
        ok0 = np.abs(z[..., 0] - 1.0) <= tol
        return ok0 & (z[..., 2] >= 0.5 * z[..., 1] ** 2 - tol)

    def defect(z):
        z = np.asarray(z, dtype=float)
        return z[..., 2] - 0.5 * z[..., 1] ** 2

    def normal(z):
        z = np.asarray(z, dtype=float)
        raw = np.stack([np.zeros_like(z[..., 1]), z[..., 1], -np.ones_like(z[..., 1])], axis=-1)
        return raw / np.linalg.norm(raw, axis=-1, keepdims=True)

    def sample(rng, size=()):
        size = tuple(np.atleast_1d(size))
        z1 = rng.uniform(*z1_range, size)
        z2 = 0.5 * z1**2 + rng.uniform(0.0, gap_hi, size)
        return np.stack([np.ones_like(z1), z1, z2], axis=-1)

    def project(z):
        z = np.asarray(z, dtype=float)
        z1 = z[..., 1]
        return np.stack([np.ones_like(z1), z1, np.maximum(z[..., 2], 0.5 * z1**2)], axis=-1)

    return MomentSet("quadratic-slice", contains, defect, normal, sample, project)


def box_moments(lo, hi) -> MomentSet:
    """Axis-aligned box preset (used for generic sampling boxes)."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))

    def contains(z, tol=1e-9):
        z = np.asarray(z, dtype=float)
        return np.all((z >= lo - tol) & (z <= hi + tol), axis=-1)

    def defect(z):
        z = np.asarray(z, dtype=float)
        return np.min(np.minimum(z - lo, hi - z), axis=-1)

    def normal(z):
        raise NotImplementedError("box boundary normals are not needed by any preset model")

    def sample(rng, size=()):
        size = tuple(np.atleast_1d(size))
        return rng.uniform(lo, hi, size + lo.shape)

    def project(z):
        return np.clip(np.asarray(z, dtype=float), lo, hi)

    return MomentSet("box", contains, defect, normal, sample, project)


def moments(cloud: ParticleCloud, fmap: FeatureMap):
    """Feature moments (1/M) sum phi(y_i), deterministic summation order.

    Returns a scalar when m_feat = 1, else a vector of length m_feat.
    """
    if fmap.d != cloud.d:
        raise InputError(f"feature map dimension {fmap.d} != cloud dimension {cloud.d}")
    pts = cloud.points[:, 0] if cloud.d == 1 else cloud.points
    vals = fmap(pts)
    out = np.add.reduce(vals, axis=0) / cloud.M
    return float(out) if fmap.m_feat == 1 else out


def _wasserstein_1d(xa, xb, q):
    xa = np.sort(xa)
    xb = np.sort(xb)
    if xa.size == xb.size:
        return float(np.mean(np.abs(xa - xb) ** q) ** (1.0 / q))
    # merged-quantile exact integral of |Fa^{-1}(s) - Fb^{-1}(s)|^q ds
    Ma, Mb = xa.size, xb.size
    cuts = np.union1d(np.arange(1, Ma) / Ma, np.arange(1, Mb) / Mb)
    edges = np.concatenate([[0.0], cuts, [1.0]])
    mids = 0.5 * (edges[:-1] + edges[1:])
    widths = np.diff(edges)
    qa = xa[np.minimum((mids * Ma).astype(int), Ma - 1)]
    qb = xb[np.minimum((mids * Mb).astype(int), Mb - 1)]
    return float(np.sum(widths * np.abs(qa - qb) ** q) ** (1.0 / q))


def wasserstein(a: ParticleCloud, b: ParticleCloud, q: float = 2.0) -> float:
    """Exact q-Wasserstein distance between equal-weight clouds.

    d = 1 uses the sorted order statistics (any sizes); d > 1 requires equal
    sizes M <= 512 and solves the minimum-cost assignment exactly.
    """
    if q < 1:
        raise InputError("order q must be >= 1")
    if a.d != b.d:
        raise InputError("clouds live in different dimensions")
    if a.d == 1:
        return _wasserstein_1d(a.points[:, 0], b.points[:, 0], q)
    if a.M != b.M:
        raise UnsupportedConfigurationError("d > 1 requires equal particle counts (assignment form)")
    if a.M > ASSIGNMENT_CAP:
        raise UnsupportedConfigurationError(f"d > 1 exact assignment capped at M <= {ASSIGNMENT_CAP}")
    diff = a.points[:, None, :] - b.points[None, :, :]
    cost = np.linalg.norm(diff, axis=-1) ** q
    rows, cols = linear_sum_assignment(cost)
    return float((cost[rows, cols].sum() / a.M) ** (1.0 / q))
