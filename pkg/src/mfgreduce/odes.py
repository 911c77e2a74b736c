"""Time integration, two-point shooting, and monotone-map inversion.

The fixed-step RK4 integrator is the workhorse: deterministic, batched over
arbitrary leading axes, exact landing on requested output times.  The adaptive
RK45 variant delegates to scipy and is reserved for stiffness diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import BlowUpError, InputError

DEFAULT_DT = 1e-3


@dataclass(frozen=True)
class IntegratorSpec:
    scheme: str = "rk4"  # "rk4" | "rk45"
    dt: float = DEFAULT_DT
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8

    def __post_init__(self):
        if self.dt <= 0 or self.abs_tol <= 0 or self.rel_tol <= 0:
            raise InputError("dt and tolerances must be positive")
        if self.scheme not in ("rk4", "rk45"):
            raise InputError(f"unknown scheme {self.scheme!r}")


@dataclass(frozen=True)
class ShootingSpec:
    damping: float = 1.0
    max_iter: int = 100
    tol: float = 1e-10
    secant: bool = True

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise InputError("damping must lie in (0, 1]")


@dataclass
class TrajectoryBundle:
    """Dense output of an integration: times ts (K,), states ys (K, ...)."""

    ts: np.ndarray
    ys: np.ndarray
    labels: tuple = ()

    def at(self, t: float):
        k = int(np.argmin(np.abs(self.ts - t)))
        if abs(self.ts[k] - t) > 1e-12 * max(1.0, abs(t)):
            raise InputError(f"time {t} is not an output time")
        return self.ys[k]


def _rk4_span(f, y, t0, t1, nsteps):
    """March y from t0 to t1 in nsteps uniform RK4 steps (t1 < t0 allowed)."""
    h = (t1 - t0) / nsteps
    t = t0
    for _ in range(nsteps):
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return y


def integrate(f, y0, t0, t1, spec: IntegratorSpec | None = None, t_eval=None) -> TrajectoryBundle:
    """Integrate dy/dt = f(t, y) from t0 to t1 with dense output.

    f is vectorized over the state's leading axes.  Output times are hit
    exactly: each inter-output span is subdivided into uniform RK4 steps of
    size at most spec.dt.  Non-finite states raise BlowUpError with the time
    of the offending span.
    """
    spec = spec or IntegratorSpec()
    y0 = np.asarray(y0, dtype=float)
    if t_eval is None:
        t_eval = np.array([t0, t1]) if t1 != t0 else np.array([t0])
    t_eval = np.asarray(t_eval, dtype=float)
    span = t1 - t0
    if span != 0 and np.any((t_eval - t0) * np.sign(span) < -1e-14):
        raise InputError("t_eval must lie between t0 and t1")

    if spec.scheme == "rk45":
        return _integrate_rk45(f, y0, t0, t1, spec, t_eval)

    ts = [t0]
    ys = [y0]
    y, t = y0, t0
    for tnext in t_eval:
        if tnext == t:
            if tnext != t0:
                ts.append(tnext)
                ys.append(y)
            continue
        nsteps = max(1, int(np.ceil(abs(tnext - t) / spec.dt - 1e-12)))
        with np.errstate(over="ignore", invalid="ignore"):
            y = _rk4_span(f, y, t, tnext, nsteps)
        if not np.all(np.isfinite(y)):
            raise BlowUpError(f"state became non-finite before t={tnext}", t=tnext)
        t = tnext
        ts.append(t)
        ys.append(y)
    if len(ts) > 1 and ts[1] == ts[0] and t_eval[0] == t0:
        ts, ys = ts[1:], ys[1:]
    return TrajectoryBundle(np.asarray(ts), np.stack(ys))


def _integrate_rk45(f, y0, t0, t1, spec, t_eval):
    from scipy.integrate import solve_ivp

    shape = y0.shape

    def flat_f(t, yf):
        return np.asarray(f(t, yf.reshape(shape)), dtype=float).ravel()

    order = np.argsort(t_eval) if t1 >= t0 else np.argsort(-t_eval)
    sol = solve_ivp(flat_f, (t0, t1), y0.ravel(), method="RK45", t_eval=t_eval[order],
                    rtol=spec.rel_tol, atol=spec.abs_tol, dense_output=False)
    if not sol.success:
        raise BlowUpError(f"rk45 failed: {sol.message}", t=t1)
    ys = sol.y.T.reshape((len(t_eval),) + shape)
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    return TrajectoryBundle(t_eval.copy(), ys[inv])


def sample_path(ts, ys, t):
    """Cubic 4-point Lagrange sample of a path stored on a uniform time grid.

    Fourth-order accurate, so it does not degrade RK4 trajectories.  ts must
    be uniformly spaced (ascending or descending).
    """
    ts = np.asarray(ts)
    n = len(ts)
    if n == 1:
        return ys[0]
    h = ts[1] - ts[0]
    s = (t - ts[0]) / h
    if n < 4:
        j = int(np.clip(np.floor(s), 0, n - 2))
        th = s - j
        return (1 - th) * ys[j] + th * ys[j + 1]
    j = int(np.clip(np.floor(s), 1, n - 3))
    th = s - j
    w = (
        -th * (th - 1) * (th - 2) / 6.0,
        (th + 1) * (th - 1) * (th - 2) / 2.0,
        -(th + 1) * th * (th - 2) / 2.0,
        (th + 1) * th * (th - 1) / 6.0,
    )
    return w[0] * ys[j - 1] + w[1] * ys[j] + w[2] * ys[j + 1] + w[3] * ys[j + 2]


def secant_root(f, x0, x1, tol=1e-12, max_iter=60):
    """Scalar secant iteration for f(x) = 0; returns (root, residual, iters)."""
    f0, f1 = f(x0), f(x1)
    for it in range(max_iter):
        if abs(f1) <= tol:
            return x1, f1, it
        denom = f1 - f0
        if denom == 0:
            break
        x2 = x1 - f1 * (x1 - x0) / denom
        x0, f0, x1, f1 = x1, f1, x2, f(x2)
    return x1, f1, max_iter


def newton_invert(map_fn, target, guess, tol=1e-10, max_iter=60, fd_step=1e-7):
    """Solve map_fn(x) = target by damped Newton with finite-difference Jacobian.

    Backtracking line search on the residual norm; singular Jacobians retry
    once with Tikhonov regularization 1e-12 before failing.
    """
    target = np.atleast_1d(np.asarray(target, dtype=float))
    x = np.atleast_1d(np.asarray(guess, dtype=float)).copy()
    m = x.size

    def resid(xv):
        return np.atleast_1d(np.asarray(map_fn(xv), dtype=float)) - target

    r = resid(x)
    for _ in range(max_iter):
        nr = np.linalg.norm(r, ord=np.inf)
        if nr <= tol:
            return x
        J = np.empty((m, m))
        for j in range(m):
            xp = x.copy()
            xp[j] += fd_step
            J[:, j] = (resid(xp) - r) / fd_step
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(J + 1e-12 * np.eye(m), r)
        lam = 1.0
        for _ in range(30):
            x_new = x - lam * step
            r_new = resid(x_new)
            if np.linalg.norm(r_new, ord=np.inf) < nr:
                break
            lam *= 0.5
        x, r = x_new, r_new
    if np.linalg.norm(r, ord=np.inf) > tol:
        raise np.linalg.LinAlgError(
            f"newton_invert stalled at residual {np.linalg.norm(r, np.inf):.3e}")
    return x


def newton_invert_batch(map_fn, targets, guesses, tol=1e-10, max_iter=60, fd_step=1e-7):
    """Vectorized Newton: solve map_fn(x_i) = target_i for a batch (B, M).

    map_fn must accept (P, M) arrays.  Per-point damping; points that have
    converged are frozen.  Returns the (B, M) solutions.
    """
    targets = np.asarray(targets, dtype=float)
    x = np.asarray(guesses, dtype=float).copy()
    B, m = x.shape
    eye = np.eye(m)

    def resid(xv):
        return np.asarray(map_fn(xv), dtype=float) - targets[: len(xv)]

    for _ in range(max_iter):
        stacked = np.concatenate([x] + [x + fd_step * eye[j] for j in range(m)], axis=0)
        vals = np.asarray(map_fn(stacked), dtype=float)
        r = vals[:B] - targets
        nr = np.abs(r).max(axis=1)
        if nr.max() <= tol:
            return x
        J = np.empty((B, m, m))
        for j in range(m):
            J[:, :, j] = (vals[(j + 1) * B:(j + 2) * B] - vals[:B]) / fd_step
        try:
            step = np.linalg.solve(J, r[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.linalg.solve(J + 1e-12 * eye, r[..., None])[..., 0]
        lam = np.ones(B)
        active = nr > tol
        x_try = x - (lam * active)[:, None] * step
        for _ in range(30):
            r_try = np.asarray(map_fn(x_try), dtype=float) - targets
            worse = active & (np.abs(r_try).max(axis=1) >= nr)
            if not worse.any():
                break
            lam[worse] *= 0.5
            x_try = x - (lam * active)[:, None] * step
        x = x_try
    r = np.asarray(map_fn(x), dtype=float) - targets
    if np.abs(r).max() > tol:
        raise np.linalg.LinAlgError(
            f"newton_invert_batch stalled at residual {np.abs(r).max():.3e}")
    return x


@dataclass
class ShootResult:
    ts: np.ndarray
    forward: np.ndarray       # z path, shape (K+1, mz)
    backward: np.ndarray      # psi path, shape (K+1, mp)
    residual: float
    residual_history: list
    converged: bool
    iterations: int


def shoot_forward_backward(forward_field, backward_field, terminal_map, z0, T,
                           shooting: ShootingSpec | None = None,
                           integ: IntegratorSpec | None = None,
                           psi_guess=None) -> ShootResult:
    """Solve the coupled pair z' = forward_field(t, z, psi), z(0) = z0 and
    psi' = backward_field(t, z, psi), psi(T) = terminal_map(z(T)).

    Unknown is the backward variable's terminal value w = psi(T).  Each sweep
    integrates z forward along the stored psi path, updates w toward
    terminal_map(z(T)) (damped, secant-accelerated when scalar), then
    re-integrates psi backward along the new z path.  Off-grid path values are
    sampled with 4-point cubic interpolation, preserving RK4 order.
    Non-convergence is reported in the result, never raised.
    """
    shooting = shooting or ShootingSpec()
    integ = integ or IntegratorSpec()
    K = max(2, int(np.ceil(T / integ.dt - 1e-12)))
    ts = np.linspace(0.0, T, K + 1)

    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    if psi_guess is None:
        psi_guess = terminal_map(z0)
    w = np.atleast_1d(np.asarray(psi_guess, dtype=float)).copy()
    psi_path = np.tile(w, (K + 1, 1))
    scalar = w.size == 1

    z_path = None
    history = []
    prev = None  # (w, residual_vec) for secant
    w_new = w
    for it in range(shooting.max_iter):
        z_path = integrate(
            lambda t, z: np.asarray(forward_field(t, z, sample_path(ts, psi_path, t)), dtype=float),
            z0, 0.0, T, integ, t_eval=ts).ys
        target = np.atleast_1d(np.asarray(terminal_map(z_path[-1]), dtype=float))
        r = w - target
        res = float(np.linalg.norm(r, ord=np.inf))
        history.append(res)
        if res <= shooting.tol:
            return ShootResult(ts, z_path, psi_path, res, history, True, it + 1)
        if scalar and shooting.secant and prev is not None and prev[1][0] != r[0]:
            w_new = w - r * (w - prev[0]) / (r - prev[1])
        else:
            w_new = (1.0 - shooting.damping) * w + shooting.damping * target
        prev = (w.copy(), r.copy())
        w = w_new
        back = integrate(
            lambda t, p: np.asarray(backward_field(t, sample_path(ts, z_path, t), p), dtype=float),
            w, T, 0.0, integ, t_eval=ts[::-1]).ys
        psi_path = back[::-1].copy()
    return ShootResult(ts, z_path, psi_path, history[-1], history, False, shooting.max_iter)
