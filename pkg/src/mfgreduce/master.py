"""Reduced master equation on the moment set: backward characteristics, boundary
data, point evaluation, the forward-backward moment system, and particle
transport for the continuity equation.

Characteristics are seeded at the terminal time: Z(T, z) = z, U(T, z) = g(z),
with dZ/dt = -z h_u(Z, U) and dU/dt = h(Z, U).  The value u(t, zhat) is read
off by inverting the seed map z -> Z(t; z).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checks import CheckReport, check_h_monotone
from .core import ParticleCloud, moments
from .exceptions import GeometryError, InputError
from .models import PowerMasterModel, QuadraticMasterModel
from .odes import IntegratorSpec, ShootingSpec, ShootResult, integrate, newton_invert_batch, shoot_forward_backward

MEMBERSHIP_TOL = 1e-9


def _as_batch(model, z):
    """Seeds as (B, m) float array for either master family."""
    z = np.asarray(z, dtype=float)
    if model.m_feat == 1:
        return z.reshape(-1, 1)
    return z.reshape(-1, model.m_feat)


def _char_field(model):
    if model.m_feat == 1:
        def fld(t, state):
            Z, U = state[..., 0], state[..., 1]
            return np.stack([-model.z_velocity(Z, U), model.h(Z, U)], axis=-1)
        return fld

    m = model.m_feat

    def fld(t, state):
        Z, U = state[..., :m], state[..., m:]
        return np.concatenate([-model.z_velocity(Z, U), model.h(Z, U)], axis=-1)

    return fld


def verify_hypotheses(model, samples=2000, seed=0):
    """Light sampled pre-checks: h-monotonicity and strict monotonicity of g
    on the moment set (reported as an empirical modulus, pairing / |dz|^2)."""
    h_rep = check_h_monotone(model, samples=samples, seed=seed)
    rng = np.random.default_rng(seed + 1)
    zs = model.moment_set.sample(rng, (samples,))
    zt = model.moment_set.sample(rng, (samples,))
    dg = np.asarray(model.g(zs)) - np.asarray(model.g(zt))
    dz = zs - zt
    if model.m_feat == 1:
        pair, dist2 = dg * dz, dz**2
    else:
        pair, dist2 = (dg * dz).sum(-1), (dz**2).sum(-1)
    ok = dist2 > 0
    margin = float((pair[ok] / dist2[ok]).min())
    g_rep = CheckReport("g-strict-monotone", margin > 0, margin, {}, samples, seed, 0.0)
    return h_rep, g_rep


@dataclass
class ReducedMasterSolution:
    """Backward characteristic bundle with a Newton-based point evaluator."""

    model: object
    T: float
    seeds: np.ndarray          # (B, m)
    ts: np.ndarray             # ascending, ts[-1] = T
    Z: np.ndarray              # (K, B, m)
    U: np.ndarray              # (K, B, m)
    boundary_seeds: np.ndarray | None = None
    boundary_f: np.ndarray | None = None   # (K, Bb, m) boundary data trajectories
    integ: IntegratorSpec = field(default_factory=IntegratorSpec)
    membership_margin: float = np.inf

    def terminal_slice_exact(self) -> bool:
        g_seed = np.asarray(self.model.g(self.seeds[..., 0] if self.model.m_feat == 1
                                         else self.seeds), dtype=float).reshape(self.seeds.shape[0], -1)
        return bool(np.array_equal(self.U[-1], g_seed))

    def evaluate(self, t, zhat, tol=1e-10):
        """u(t, zhat) by inverting z -> Z(t; z); zhat batched (B, m) or scalar.

        Newton iterates are pulled back into the moment set before each flow
        evaluation (the dynamics may blow up outside it); the offset keeps the
        probed map injective and equal to the true seed map on the set.
        """
        m = self.model.m_feat
        zhat = np.asarray(zhat, dtype=float).reshape(-1, m)
        fld = _char_field(self.model)
        project = self.model.moment_set.project

        def seed_to_Z(seeds):
            raw = seeds[..., 0] if m == 1 else seeds
            clamped = np.reshape(project(raw), seeds.shape)
            g_term = self.model.g(clamped[..., 0] if m == 1 else clamped)
            state_T = np.concatenate([clamped, np.reshape(g_term, clamped.shape)], axis=-1)
            if t == self.T:
                return clamped + (seeds - clamped)
            out = integrate(fld, state_T, self.T, float(t), self.integ)
            return out.ys[-1][..., :m] + (seeds - clamped)

        # initial guess from the stored bundle: invert the (monotone) sampled
        # seed map at the nearest stored time, then let Newton polish
        k = int(np.argmin(np.abs(self.ts - t)))
        if m == 1:
            order = np.argsort(self.Z[k, :, 0])
            guess = np.interp(zhat[:, 0], self.Z[k, order, 0],
                              self.seeds[order, 0])[:, None]
        else:
            d2 = ((zhat[:, None, :] - self.Z[k][None, :, :]) ** 2).sum(-1)
            guess = self.seeds[np.argmin(d2, axis=1)].copy()

        seeds = newton_invert_batch(seed_to_Z, zhat, guess, tol=tol)
        seeds = np.reshape(project(seeds[..., 0] if m == 1 else seeds), seeds.shape)
        g_term = self.model.g(seeds[..., 0] if m == 1 else seeds)
        state_T = np.concatenate([seeds, np.reshape(g_term, seeds.shape)], axis=-1)
        if t == self.T:
            vals = np.reshape(g_term, seeds.shape)
        else:
            out = integrate(fld, state_T, self.T, float(t), self.integ)
            vals = out.ys[-1][..., m:]
        return vals[..., 0] if m == 1 else vals

    def seed_monotonicity_margin(self) -> float:
        """min over times and seed pairs of <dZ, dz)/|dz|^2 (empirical strictness)."""
        B = self.seeds.shape[0]
        if B < 2:
            return np.inf
        i, j = np.triu_indices(B, k=1)
        dz = self.seeds[i] - self.seeds[j]
        dist2 = (dz**2).sum(-1)
        dZ = self.Z[:, i, :] - self.Z[:, j, :]
        pair = (dZ * dz).sum(-1) / dist2
        return float(pair.min())


def default_boundary_seeds(model, k=9):
    # the quadratic range keeps backward characteristics inside their
    # classical horizon on [0, 1]
    if isinstance(model, PowerMasterModel):
        return np.zeros((1, 1))
    if isinstance(model, QuadraticMasterModel):
        z1 = np.linspace(-1.0, 1.0, k)
        return np.stack([np.ones_like(z1), z1, 0.5 * z1**2], axis=-1)
    raise InputError("no boundary preset for this model")


def solve_reduced_master(model, z_grid, T, integ: IntegratorSpec | None = None,
                         t_eval=None, boundary_seeds=None, check_hypotheses=True,
                         membership_tol=MEMBERSHIP_TOL) -> ReducedMasterSolution:
    """Backward characteristics from the terminal slice, plus boundary data f
    from df/dt = h(z, f), f(T, z) = g(z) at boundary seeds.

    Raises GeometryError when a characteristic leaves the moment set beyond
    tolerance (exits are findings, never silently projected).
    """
    integ = integ or IntegratorSpec()
    if check_hypotheses:
        h_rep, g_rep = verify_hypotheses(model)
        if not h_rep.passed or not g_rep.passed:
            raise InputError("model hypotheses failed the sampled pre-check")
    seeds = _as_batch(model, z_grid)
    if not np.all(model.moment_set.contains(seeds[..., 0] if model.m_feat == 1 else seeds,
                                            tol=membership_tol)):
        raise GeometryError("a seed lies outside the moment set")
    if t_eval is None:
        t_eval = np.linspace(0.0, T, 11)
    t_eval = np.sort(np.asarray(t_eval, dtype=float))
    m = model.m_feat
    g_term = np.reshape(model.g(seeds[..., 0] if m == 1 else seeds), seeds.shape)
    state_T = np.concatenate([seeds, g_term], axis=-1)
    out = integrate(_char_field(model), state_T, T, 0.0, integ, t_eval=t_eval[::-1])
    Z = out.ys[::-1][..., :m]
    U = out.ys[::-1][..., m:]
    member = model.moment_set.contains(Z[..., 0] if m == 1 else Z, tol=membership_tol)
    defect = model.moment_set.boundary_defect(Z[..., 0] if m == 1 else Z)
    margin = float(defect.min())
    if not member.all():
        raise GeometryError(f"characteristic left the moment set (worst defect {margin:.3e})")

    if boundary_seeds is None:
        try:
            boundary_seeds = default_boundary_seeds(model)
        except InputError:
            boundary_seeds = None
    boundary_f = None
    if boundary_seeds is not None:
        bseeds = _as_batch(model, boundary_seeds)
        gb = np.reshape(model.g(bseeds[..., 0] if m == 1 else bseeds), bseeds.shape)

        def f_field(t, fval):
            zb = bseeds[..., 0] if m == 1 else bseeds
            fv = fval[..., 0] if m == 1 else fval
            return np.reshape(model.h(zb, fv), fval.shape)

        bf = integrate(f_field, gb, T, 0.0, integ, t_eval=t_eval[::-1])
        boundary_f = bf.ys[::-1]

    return ReducedMasterSolution(model, T, seeds, t_eval, Z, U,
                                 boundary_seeds=boundary_seeds, boundary_f=boundary_f,
                                 integ=integ, membership_margin=margin)


def boundary_invariance_check(model, boundary_seeds=None, T=1.0,
                              integ: IntegratorSpec | None = None, tol=1e-8,
                              t_eval=None) -> CheckReport:
    """Characteristics seeded on the boundary stay on it: sup_t dist(Z, dC)."""
    integ = integ or IntegratorSpec()
    if boundary_seeds is None:
        boundary_seeds = default_boundary_seeds(model)
    seeds = _as_batch(model, boundary_seeds)
    m = model.m_feat
    if t_eval is None:
        t_eval = np.linspace(0.0, T, 21)
    g_term = np.reshape(model.g(seeds[..., 0] if m == 1 else seeds), seeds.shape)
    state_T = np.concatenate([seeds, g_term], axis=-1)
    out = integrate(_char_field(model), state_T, T, 0.0, integ, t_eval=np.sort(t_eval)[::-1])
    Z = out.ys[..., :m]
    dist = model.moment_set.distance_to_boundary(Z[..., 0] if m == 1 else Z)
    worst = float(dist.max())
    k, b = np.unravel_index(int(np.argmax(dist)), dist.shape)
    return CheckReport("boundary-invariance", worst <= tol, -worst,
                       {"t": float(out.ts[k]), "seed": seeds[b]},
                       seeds.shape[0], 0, tol)


def reconstruct_master_value(model, u_eval, t, x, cloud: ParticleCloud,
                             membership_tol=MEMBERSHIP_TOL) -> float:
    """Full master value phi(x) . u(t, moments(cloud)); the measure enters only
    through its feature moments."""
    z = moments(cloud, model.feature)
    if not np.all(model.moment_set.contains(z, tol=membership_tol)):
        raise GeometryError("cloud moments lie outside the moment set")
    uval = u_eval(t, z)
    phi_x = model.feature(x)
    if model.m_feat == 1:
        return float(phi_x * np.asarray(uval).reshape(()))
    return float(np.dot(np.atleast_1d(phi_x), np.asarray(uval).reshape(-1)))


@dataclass
class FBReducedSolution:
    model: object
    ts: np.ndarray
    psi: np.ndarray        # (K, m)
    z: np.ndarray          # (K, m)
    residual: float
    converged: bool
    iterations: int
    residual_history: list
    membership_margin: float

    def psi0(self):
        return self.psi[0, 0] if self.model.m_feat == 1 else self.psi[0]


def solve_fb_reduced(model, z0, T, shooting: ShootingSpec | None = None,
                     integ: IntegratorSpec | None = None,
                     membership_tol=MEMBERSHIP_TOL) -> FBReducedSolution:
    """Forward moment / backward value pair: dz/dt = -z h_u(z, psi), z(0) = z0,
    dpsi/dt = h(z, psi), psi(T) = g(z(T)).  Sweep shooting on psi(T)."""
    integ = integ or IntegratorSpec()
    shooting = shooting or ShootingSpec()
    m = model.m_feat
    z0v = np.asarray(z0, dtype=float).reshape(m)
    if not np.all(model.moment_set.contains(z0v[0] if m == 1 else z0v, tol=membership_tol)):
        raise GeometryError("z0 outside the moment set")

    def fwd(t, z, psi):
        zz = z[..., 0] if m == 1 else z
        pp = psi[..., 0] if m == 1 else psi
        return np.reshape(-model.z_velocity(zz, pp), z.shape)

    def bwd(t, z, psi):
        zz = z[..., 0] if m == 1 else z
        pp = psi[..., 0] if m == 1 else psi
        return np.reshape(model.h(zz, pp), psi.shape)

    def gmap(zT):
        return np.reshape(model.g(zT[0] if m == 1 else zT), (m,))

    res: ShootResult = shoot_forward_backward(fwd, bwd, gmap, z0v, T, shooting, integ)
    defect = model.moment_set.boundary_defect(res.forward[..., 0] if m == 1 else res.forward)
    margin = float(np.min(defect))
    member = model.moment_set.contains(res.forward[..., 0] if m == 1 else res.forward,
                                       tol=membership_tol)
    if res.converged and not np.all(member):
        raise GeometryError(f"moment path left the moment set (worst defect {margin:.3e})")
    return FBReducedSolution(model, res.ts, res.backward, res.forward, res.residual,
                             res.converged, res.iterations, res.residual_history, margin)


def transport_particles(velocity, m0: ParticleCloud, T,
                        integ: IntegratorSpec | None = None, t_eval=None):
    """Push every particle along dy/dt = velocity(t, y); mass is conserved
    exactly (the particle count never changes).  Returns (ts, clouds)."""
    integ = integ or IntegratorSpec()
    if t_eval is None:
        t_eval = np.linspace(0.0, T, 11)
    pts0 = m0.points[:, 0] if m0.d == 1 else m0.points
    out = integrate(velocity, pts0, 0.0, T, integ, t_eval=t_eval)
    clouds = [ParticleCloud(y) for y in out.ys]
    return out.ts, clouds


def verify_moment_consistency(model: PowerMasterModel, fb: FBReducedSolution,
                              m0: ParticleCloud, integ: IntegratorSpec | None = None,
                              t_eval=None, tol=1e-3):
    """Transport particles with the value-driven velocity and compare their
    feature moments to the moment path z(t) of the reduced system.

    The joint system (psi, z, particles) is integrated in one pass so both
    sides share the same time discretization; z0 is the particle moment by
    construction, so the gap at t = 0 vanishes and the remaining gap is pure
    integration error.  Returns (CheckReport, ts, gaps, clouds).
    """
    integ = integ or IntegratorSpec()
    if model.m_feat != 1:
        raise InputError("particle consistency is implemented for scalar-moment families")
    if t_eval is None:
        t_eval = np.linspace(0.0, fb.ts[-1], 11)
    M = m0.M
    y0 = m0.points[:, 0]
    z0 = moments(m0, model.feature)
    psi0 = fb.psi[0, 0]

    def joint(t, s):
        psi, z, y = s[..., 0], s[..., 1], s[..., 2:]
        ds = np.empty_like(s)
        ds[..., 0] = model.h(z, psi)
        ds[..., 1] = -model.z_velocity(z, psi)
        ds[..., 2:] = model.particle_velocity(y, psi, z)
        return ds

    s0 = np.concatenate([[psi0, z0], y0])
    out = integrate(joint, s0, 0.0, fb.ts[-1], integ, t_eval=t_eval)
    gaps = np.empty(len(out.ts))
    clouds = []
    for k in range(len(out.ts)):
        cloud = ParticleCloud(out.ys[k][2:])
        clouds.append(cloud)
        gaps[k] = abs(out.ys[k][1] - moments(cloud, model.feature))
    worst = float(gaps.max())
    rep = CheckReport("moment-consistency", worst <= tol, -worst,
                      {"t": float(out.ts[int(np.argmax(gaps))]), "M": M,
                       "z0": z0, "t0_gap": float(gaps[0])},
                      M, 0, tol)
    return rep, out.ts, gaps, clouds


def moment_consistency_refinement(model, z0_cloud_builder, T, levels,
                                  shooting=None):
    """Gap sup per (dt, M) level; used by the refinement study."""
    sups = []
    for dt, M in levels:
        m0 = z0_cloud_builder(M)
        integ = IntegratorSpec(dt=dt)
        fb = solve_fb_reduced(model, moments(m0, model.feature), T,
                              shooting or ShootingSpec(), integ)
        rep, _, gaps, _ = verify_moment_consistency(model, fb, m0, integ,
                                                    t_eval=np.linspace(0, T, 11))
        sups.append(float(gaps.max()))
    return sups
