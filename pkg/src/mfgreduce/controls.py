"""Strongly coupled mean field games: the population-coupled value problem, the
terminal-measure map, its damped fixed point, and the reduced power-family
systems with the p = q uniqueness probe.

The value solve is a backward semi-Lagrangian march on a 1-d grid: freeze the
gradient, backtrack the characteristic x - dt D_pH, interpolate (cubic by
default), and add the Legendre-type source D_pH . Du - H.  Particles follow
-D_pH along the stored gradient field.  Measure iteration mixes quantile
functions, which keeps 1-d mixing convex and metric-compatible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checks import CheckReport
from .core import ParticleCloud, wasserstein
from .exceptions import InputError, UnsupportedConfigurationError
from .grids import cubic_interp_1d, gradient_1d, linear_interp_1d, second_diff_1d
from .models import ControlsModel, PowerControlsModel


@dataclass
class ControlsState:
    """Value grid, coupling path, and particle clouds of one solve."""

    ts: np.ndarray              # (K+1,)
    xs: np.ndarray              # (nx,)
    u: np.ndarray               # (K+1, nx)
    du: np.ndarray              # (K+1, nx)
    phi: np.ndarray             # (K+1, m)
    out_ts: np.ndarray          # output times for the clouds
    clouds: list                # ParticleCloud at out_ts
    flags: np.ndarray           # (nx,) boundary-influence flags at t = 0
    diagnostics: dict = field(default_factory=dict)

    def interior_mask(self):
        return ~self.flags

    def du_at(self, k, pts):
        vals, _ = cubic_interp_1d(self.du[k], self.xs[0], self.xs[1] - self.xs[0], pts)
        return vals


def eval_g_of_m(model: ControlsModel, cloud: ParticleCloud, T: float):
    """Terminal coupling g(m) = mean of Phi(T, y, D_yG(y, m)) over the cloud."""
    stats = model.m_stats(cloud)
    y = cloud.points[:, 0]
    p = model.terminal_grad(y, stats)
    vals = np.atleast_2d(np.asarray(model.Phi(T, y, p), dtype=float).T).T  # (M, m)
    return np.add.reduce(vals, axis=0) / cloud.M


def _phi_path(model, gval, ts):
    """Backward coupling path: -phi' = f(t, phi), phi(T) = gval, on the grid ts."""
    K = len(ts) - 1
    phi = np.empty((K + 1, model.m_feat))
    phi[K] = gval
    for k in range(K - 1, -1, -1):
        h = ts[k + 1] - ts[k]
        # RK4 on dphi/ds = f(t, phi) going down in t (s = -t)
        p = phi[k + 1]
        t1 = ts[k + 1]
        k1 = model.f(t1, p)
        k2 = model.f(t1 - h / 2, p + h / 2 * k1)
        k3 = model.f(t1 - h / 2, p + h / 2 * k2)
        k4 = model.f(t1 - h, p + h * k3)
        phi[k] = p + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return phi


def solve_hj(model: ControlsModel, phi_path, terminal_vals, xs, ts, interp="cubic"):
    """Backward semi-Lagrangian value solve; returns (u, du, flags)."""
    nx = len(xs)
    dx = xs[1] - xs[0]
    K = len(ts) - 1
    interp_fn = cubic_interp_1d if interp == "cubic" else linear_interp_1d
    u = np.empty((K + 1, nx))
    du = np.empty((K + 1, nx))
    u[K] = terminal_vals
    du[K] = gradient_1d(u[K], dx)
    flags = np.zeros(nx, dtype=bool)
    width = xs[-1] - xs[0]
    for k in range(K - 1, -1, -1):
        dt = ts[k + 1] - ts[k]
        p = du[k + 1]
        phi = phi_path[k + 1]
        v = model.Hp(xs, p, phi)
        if dt * np.abs(v).max() > width:
            raise UnsupportedConfigurationError(
                "time step moves characteristics across the whole box; refusing")
        src = v * p - model.H(xs, p, phi)
        vals, touched = interp_fn(u[k + 1], xs[0], dx, xs - dt * v, flags)
        u[k] = vals + dt * src
        flags = touched
        du[k] = gradient_1d(u[k], dx)
    return u, du, flags


def _transport(model, du, phi_path, xs, ts, m0, out_idx):
    """Particles under dy/dt = -D_pH(y, Du, phi); Heun steps on the stored field."""
    dx = xs[1] - xs[0]
    y = m0.points[:, 0].copy()
    clouds = {0: ParticleCloud(y.copy())} if 0 in out_idx else {}
    for k in range(len(ts) - 1):
        dt = ts[k + 1] - ts[k]
        p1, _ = cubic_interp_1d(du[k], xs[0], dx, y)
        v1 = -model.Hp(y, p1, phi_path[k])
        ystar = y + dt * v1
        p2, _ = cubic_interp_1d(du[k + 1], xs[0], dx, ystar)
        v2 = -model.Hp(ystar, p2, phi_path[k + 1])
        y = y + 0.5 * dt * (v1 + v2)
        if k + 1 in out_idx:
            clouds[k + 1] = ParticleCloud(y.copy())
    return clouds


def apply_T_map(model: ControlsModel, m_bar: ParticleCloud, m0: ParticleCloud, T,
                nx=401, box=6.0, dt=1e-3, n_out=21, interp="cubic"):
    """One application of the terminal-measure map.

    Solves, in order: the backward coupling ODE with phi(T) = g(m_bar); the
    terminal-value problem with u(T, .) = G(., m_bar); the continuity equation
    for m0 under -D_pH.  Returns (ControlsState, final cloud).
    """
    K = max(1, int(round(T / dt)))
    ts = np.linspace(0.0, T, K + 1)
    xs = np.linspace(-box, box, nx)
    gval = eval_g_of_m(model, m_bar, T)
    phi_path = _phi_path(model, gval, ts)
    stats = model.m_stats(m_bar)
    u, du, flags = solve_hj(model, phi_path, model.terminal(xs, stats), xs, ts, interp)
    out_idx = set(np.linspace(0, K, n_out).round().astype(int).tolist())
    clouds_map = _transport(model, du, phi_path, xs, ts, m0, out_idx)
    out_ids = sorted(clouds_map)
    clouds = [clouds_map[i] for i in out_ids]
    out_ts = ts[out_ids]
    if np.abs(clouds[-1].points).max() > box:
        raise UnsupportedConfigurationError("particles left the grid box; enlarge it")

    d2u_min = min(float(second_diff_1d(u[k], xs[1] - xs[0])[1:-1].min())
                  for k in range(len(ts)))
    qp = model.q / (model.q - 1.0)
    growth_c = float(np.max(np.abs(du) / (1.0 + np.abs(xs) ** (qp - 1.0))))
    lam = model.moment_order
    moment_bound = max(float(np.mean(np.abs(c.points) ** lam)) for c in clouds)
    state = ControlsState(ts, xs, u, du, phi_path, out_ts, clouds, flags,
                          diagnostics={
                              "d2u_min": d2u_min,
                              "du_growth_constant": growth_c,
                              "moment_bound": moment_bound,
                              "terminal_moment": float(np.mean(np.abs(clouds[-1].points) ** lam)),
                              "boundary_influenced_nodes": int(flags.sum()),
                          })
    return state, clouds[-1]


@dataclass
class FixedPointResult:
    state: ControlsState
    measure: ParticleCloud
    gaps: list
    converged: bool
    iterations: int


def fixed_point_solve(model: ControlsModel, m0: ParticleCloud, T, damping=1.0,
                      tol=1e-4, max_iter=30, **grid_kw) -> FixedPointResult:
    """Damped Picard iteration on the terminal measure.

    Iterates m_{k+1} = quantile-mix(m_k, T m_k; damping) and stops when the
    Wasserstein gap of order gamma between m_k and T m_k is below tol.
    Non-convergence is returned with the gap history, never raised.
    """
    if not 0.0 < damping <= 1.0:
        raise InputError("damping must lie in (0, 1]")
    gamma = max(model.gamma, 1.0)
    m_bar = m0
    gaps = []
    state, m_T = None, None
    for it in range(1, max_iter + 1):
        state, m_T = apply_T_map(model, m_bar, m0, T, **grid_kw)
        gap = wasserstein(m_bar, m_T, gamma)
        gaps.append(gap)
        if gap <= tol:
            return FixedPointResult(state, m_bar, gaps, True, it)
        mixed = (1.0 - damping) * np.sort(m_bar.points[:, 0]) + damping * np.sort(m_T.points[:, 0])
        m_bar = ParticleCloud(mixed)
    return FixedPointResult(state, m_bar, gaps, False, max_iter)


def equivalence_check(model: ControlsModel, state: ControlsState, tol=5e-3) -> CheckReport:
    """Coupling-path consistency: phi(t) vs the particle integral of
    Phi(t, y, Du(t, y)) at the output times."""
    worst = -np.inf
    wit = {}
    for out_k, t in enumerate(state.out_ts):
        k = int(np.argmin(np.abs(state.ts - t)))
        y = state.clouds[out_k].points[:, 0]
        p = state.du_at(k, y)
        vals = np.atleast_2d(np.asarray(model.Phi(t, y, p), dtype=float).T).T
        integral = np.add.reduce(vals, axis=0) / len(y)
        gap = float(np.abs(state.phi[k] - integral).max())
        if gap > worst:
            worst = gap
            wit = {"t": float(t), "phi": state.phi[k], "integral": integral}
    return CheckReport("controls-equivalence", worst <= tol, -worst, wit,
                       len(state.out_ts), 0, tol)


def compute_band(model: PowerControlsModel, T) -> dict:
    """Conservative a-priori band for (psi, z) by elementary comparison.

    Backward growth of psi is bounded with |a| <= a_sup; the lower bound uses
    the Bernoulli closed form of dw/ds = -w^p/p - a_sup w from the smallest
    terminal value.  The z band follows by integrating the bounds on psi.
    """
    p = model.p
    a_sup = model.a_sup()
    z0 = model.z0
    z_max = z0 * np.exp(a_sup * T)
    g_max = float(model.g(z_max))
    c_psi_top = g_max * np.exp(a_sup * T)
    z_min = z0 * np.exp(-(max(c_psi_top, 0.0) ** (p - 1.0) + a_sup) * T)
    g_min = float(model.g(z_min))
    if g_min <= 0:
        c_psi_bot = 0.0
    else:
        v0 = g_min ** (1.0 - p)
        if a_sup == 0:
            vT = v0 + (p - 1.0) * T / p
        else:
            vT = (v0 + 1.0 / (p * a_sup)) * np.exp(a_sup * (p - 1.0) * T) - 1.0 / (p * a_sup)
        c_psi_bot = vT ** (-1.0 / (p - 1.0))
    c0 = min(c_psi_bot, z_min)
    C0 = max(c_psi_top, z_max)
    return {"c0": c0, "C0": C0, "psi_band": (c_psi_bot, c_psi_top),
            "z_band": (z_min, z_max), "a_sup": a_sup, "z0": z0}


def _reduced_rhs(model: PowerControlsModel, include_phi=True):
    p, q, pc = model.p, model.q, model.p_conj

    def rhs(t, s):
        psi, z = s[0], s[1]
        phi = s[2] if include_phi else z * np.abs(psi) ** q
        a = model.a(phi)
        dpsi = np.abs(psi) ** p / p - a * psi
        dz = -z * (psi * np.abs(psi) ** (p - 2.0) - a)
        if include_phi:
            return np.array([dpsi, dz, -(q / pc) * a * phi])
        return np.array([dpsi, dz])

    return rhs


def _rk4_path(rhs, s0, ts):
    out = np.empty((len(ts), len(s0)))
    out[0] = s0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(len(ts) - 1):
            h = ts[k + 1] - ts[k]
            t, s = ts[k], out[k]
            if not np.all(np.isfinite(s)):
                out[k + 1:] = np.nan  # forward blow-up; caller penalizes
                break
            k1 = rhs(t, s)
            k2 = rhs(t + h / 2, s + h / 2 * k1)
            k3 = rhs(t + h / 2, s + h / 2 * k2)
            k4 = rhs(t + h, s + h * k3)
            out[k + 1] = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return out


def _shoot_scalar(rhs, s0_of_psi0, terminal_residual, ts, guess, tol, max_iter=80):
    """Bracketed root solve on psi(0).

    Blown-up trials count as a positive residual (psi(T) runs to +inf), which
    is sign-consistent, and psi0 = 0 is an equilibrium with residual
    -g(z(T)) <= 0 for the nonnegative terminal maps of this family, so a
    bracket always exists; Brent does the rest.
    """
    from scipy.optimize import brentq

    def residual(psi0):
        path = _rk4_path(rhs, s0_of_psi0(psi0), ts)
        if not np.all(np.isfinite(path[-1])):
            return 1e6 * (1.0 + abs(psi0))
        return terminal_residual(path)

    flo = residual(0.0)
    if flo == 0.0:
        return 0.0, 0.0
    if flo > 0.0:
        return 0.0, flo  # terminal map not nonnegative; report non-convergence
    hi = max(abs(guess), 1e-3)
    fhi = residual(hi)
    grow = 0
    while fhi < 0 and grow < 60:
        hi *= 1.7
        fhi = residual(hi)
        grow += 1
    if fhi < 0:
        return hi, fhi
    psi0 = brentq(residual, 0.0, hi, xtol=1e-15, rtol=8.9e-16, maxiter=200)
    return psi0, residual(psi0)


@dataclass
class ReducedControlsSolution:
    ts: np.ndarray
    psi: np.ndarray
    z: np.ndarray
    phi: np.ndarray
    residual: float
    converged: bool
    band: dict
    band_report: CheckReport


def solve_reduced_controls(model: PowerControlsModel, T, dt=1e-3, tol=1e-10,
                           max_iter=60) -> ReducedControlsSolution:
    """Scalar shooting on psi(0) for the reduced power system.

    The coupling starts at phi(0) = alpha0 |psi(0)|^q, so a 1-d secant on the
    initial value closes the system; the residual is psi(T) - g(z(T)).
    """
    K = max(1, int(round(T / dt)))
    ts = np.linspace(0.0, T, K + 1)
    rhs = _reduced_rhs(model, include_phi=True)
    z0, a0 = model.z0, model.alpha0

    def s0_of(psi0):
        return np.array([psi0, z0, a0 * np.abs(psi0) ** model.q])

    psi0, res = _shoot_scalar(rhs, s0_of,
                              lambda path: float(path[-1, 0] - model.g(path[-1, 1])),
                              ts, float(model.g(z0)), tol, max_iter)
    path = _rk4_path(rhs, s0_of(psi0), ts)
    band = compute_band(model, T)
    lo = min(path[:, 0].min(), path[:, 1].min())
    hi = max(path[:, 0].max(), path[:, 1].max())
    band_margin = float(min(lo - band["c0"], band["C0"] - hi))
    band_rep = CheckReport("psi-z-apriori-band", band_margin >= -1e-9, band_margin,
                           {"c0": band["c0"], "C0": band["C0"],
                            "path_min": lo, "path_max": hi}, len(ts), 0, 1e-9)
    return ReducedControlsSolution(ts, path[:, 0], path[:, 1], path[:, 2],
                                   abs(res), abs(res) <= tol, band, band_rep)


@dataclass
class PQState:
    start: float
    ts: np.ndarray
    psi: np.ndarray
    z: np.ndarray
    phi: np.ndarray        # derived z |psi|^q
    trace: np.ndarray
    det: np.ndarray
    residual: float
    converged: bool


def _pq_matrix_diagnostics(model: PowerControlsModel, psi, z):
    """tr and det of the dissipation matrix along a path (positive psi, z).

    Entries: A_z = -a'(z psi^p) psi^{p+1}; z B_psi = z psi^{p-2} [p-1 -
    p z psi a'(z psi^p)]; off-diagonal -(p-1) z psi^p a'(z psi^p) / 2.
    """
    p = model.p
    phi = z * psi**p
    ap = model.da(phi)
    A_z = -ap * psi ** (p + 1.0)
    zB_psi = z * psi ** (p - 2.0) * ((p - 1.0) - p * z * psi * ap)
    off = -(p - 1.0) * z * psi**p * ap / 2.0
    trace = -zB_psi + A_z
    det = (-zB_psi) * A_z - off**2
    return trace, det


def solve_pq(model: PowerControlsModel, T, dt=1e-3, n_starts=5, tol=1e-10,
             agree_tol=1e-6):
    """Multistart shooting for the p = q system plus the uniqueness criterion.

    Verdict is "unique-consistent" only when every start converges to the same
    path (pairwise sup distance <= agree_tol), tr M < 0 and det M > 0 hold at
    every output time, and the declared slope band delta1 respects the trace
    bound delta1 <= (p-1) / (p C0^{1-1/p}).  Otherwise "criterion-fails":
    uniqueness is not claimed and non-uniqueness is not asserted either.
    """
    if model.p != model.q:
        raise InputError("solve_pq requires p = q")
    if model.delta_band is None:
        raise InputError("solve_pq requires a declared (delta0, delta1) band")
    p = model.p
    band = compute_band(model, T)
    c0, C0 = band["c0"], band["C0"]
    K = max(1, int(round(T / dt)))
    ts = np.linspace(0.0, T, K + 1)
    rhs = _reduced_rhs(model, include_phi=False)
    z0 = model.z0

    states = []
    for start in np.linspace(max(c0 / 2, 1e-6), 2 * C0, n_starts):
        psi0, res = _shoot_scalar(rhs, lambda v: np.array([v, z0]),
                                  lambda path: float(path[-1, 0] - model.g(path[-1, 1])),
                                  ts, float(start), tol, 80)
        path = _rk4_path(rhs, np.array([psi0, z0]), ts)
        trace, det = _pq_matrix_diagnostics(model, path[:, 0], path[:, 1])
        states.append(PQState(float(start), ts, path[:, 0], path[:, 1],
                              path[:, 1] * np.abs(path[:, 0]) ** model.q,
                              trace, det, abs(res), abs(res) <= tol))

    converged = [s for s in states if s.converged]
    pair_gap = 0.0
    for i in range(len(converged)):
        for j in range(i + 1, len(converged)):
            pair_gap = max(pair_gap, float(np.abs(converged[i].psi - converged[j].psi).max()),
                           float(np.abs(converged[i].z - converged[j].z).max()))
    delta1 = model.delta_band[1]
    trace_bound = (p - 1.0) / (p * C0 ** (1.0 - 1.0 / p))
    criteria = {
        "all_starts_converged": len(converged) == len(states),
        "starts_agree": pair_gap <= agree_tol,
        "trace_negative": all(float(s.trace.max()) < 0 for s in converged),
        "det_positive": all(float(s.det.min()) > 0 for s in converged),
        "delta1_within_trace_bound": delta1 <= trace_bound,
    }
    verdict = "unique-consistent" if all(criteria.values()) else "criterion-fails"
    report = {
        "verdict": verdict,
        "criteria": criteria,
        "pairwise_sup_gap": pair_gap,
        "delta1": delta1,
        "trace_bound": trace_bound,
        "band": band,
    }
    return states, report


def pq_dissipation_check(model: PowerControlsModel, T, starts=(0.5, 1.5), dt=1e-3,
                         tol=1e-10) -> CheckReport:
    """X(t) = (psi1 - psi2)(z1 - z2) is nonincreasing for two system paths
    sharing z(0) when the dissipation matrix is negative (discrete check)."""
    K = max(1, int(round(T / dt)))
    ts = np.linspace(0.0, T, K + 1)
    rhs = _reduced_rhs(model, include_phi=False)
    p1 = _rk4_path(rhs, np.array([starts[0], model.z0]), ts)
    p2 = _rk4_path(rhs, np.array([starts[1], model.z0]), ts)
    X = (p1[:, 0] - p2[:, 0]) * (p1[:, 1] - p2[:, 1])
    worst = float(-np.diff(X).max())  # positive when nonincreasing
    return CheckReport("pq-dissipation", worst >= -tol, worst,
                       {"X0": float(X[0]), "XT": float(X[-1])}, len(ts), 0, tol)
