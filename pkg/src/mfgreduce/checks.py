"""Sampling-based verifiers for the algebraic hypotheses behind each reduction.

Every check draws from a seeded generator, records the worst signed margin
(negative = violation) together with the witness attaining it, and is
bit-reproducible for a fixed seed.  Sampling does not prove a condition; it
is the testable surrogate for the quantified statements the models declare.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ReductionMap
from .exceptions import EvaluationError, InputError
from .models import ControlsModel, FiniteStateModel, PowerMasterModel, QuadraticMasterModel, ReducedFiniteModel

DEFAULT_SAMPLES = 10_000
DEFAULT_BOX = 5.0
DEFAULT_TOL = 1e-10


@dataclass
class CheckReport:
    """Outcome of one verification: pass flag, worst margin, witness point."""

    name: str
    passed: bool | None
    worst_margin: float
    witness: dict = field(default_factory=dict)
    samples: int = 0
    seed: int = 0
    tolerance: float = DEFAULT_TOL

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pass": self.passed,
            "worst_margin": self.worst_margin,
            "witness": _jsonable(self.witness),
            "samples": self.samples,
            "seed": self.seed,
            "tolerance": self.tolerance,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _uniform(rng, lo, hi, shape):
    return rng.uniform(lo, hi, shape)


def _finite_or_raise(vals, where, inputs):
    bad = ~np.all(np.isfinite(vals), axis=tuple(range(1, vals.ndim))) if vals.ndim > 1 else ~np.isfinite(vals)
    if bad.any():
        i = int(np.argmax(bad))
        raise EvaluationError(f"non-finite value in {where}", witness=np.asarray(inputs)[i])


def check_monotone(map_fn, dim, box=DEFAULT_BOX, samples=DEFAULT_SAMPLES, seed=0,
                   strict_margin=False, tol=DEFAULT_TOL) -> CheckReport:
    """Worst pairing <A(x)-A(y), x-y> over sampled pairs; with strict_margin the
    pairing is divided by |x-y|^2, reporting an empirical strictness modulus."""
    if samples < 1:
        raise InputError("need samples >= 1")
    rng = np.random.default_rng(seed)
    x = _uniform(rng, -box, box, (samples, dim))
    y = _uniform(rng, -box, box, (samples, dim))
    ax, ay = np.asarray(map_fn(x), dtype=float), np.asarray(map_fn(y), dtype=float)
    _finite_or_raise(ax, "map(x)", x)
    _finite_or_raise(ay, "map(y)", y)
    pair = np.sum((ax - ay) * (x - y), axis=-1)
    if strict_margin:
        dist2 = np.sum((x - y) ** 2, axis=-1)
        pair = pair / np.where(dist2 > 0, dist2, 1.0)
    k = int(np.argmin(pair))
    worst = float(pair[k])
    return CheckReport("monotone", worst >= -tol, worst,
                       {"x": x[k], "y": y[k], "strict_margin": strict_margin},
                       samples, seed, tol)


def extract_complete(A, rmap: ReductionMap):
    """A_tilde(y) = (L L*)^{-1} L A(L+ y), the complete-reduction extraction."""
    def A_tilde(y):
        return rmap.apply_gram_inverse(rmap.apply(A(rmap.apply_right_inverse(y))))
    return A_tilde


def extract_fiber(A, rmap: ReductionMap):
    """A_tilde(y) = L A(L+ y), the fiber-reduction extraction."""
    def A_tilde(y):
        return rmap.apply(A(rmap.apply_right_inverse(y)))
    return A_tilde


def _reduction_check(name, A, rmap, residual_fn, samples, seed, box, tol):
    rng = np.random.default_rng(seed)
    x = _uniform(rng, -box, box, (samples, rmap.N))
    shift = rmap.sample_kernel(rng, (samples,), scale=box)
    res_alg, res_fib = residual_fn(x, shift)
    worst_alg = float(res_alg.max())
    worst_fib = float(res_fib.max())
    worst = -max(worst_alg, worst_fib)
    which = "formula" if worst_alg >= worst_fib else "fiber"
    k = int(np.argmax(res_alg if which == "formula" else res_fib))
    witness = {"criterion": which, "x": x[k]}
    if which == "fiber":
        witness["x_shifted"] = x[k] + shift[k]
    return CheckReport(name, worst >= -tol, worst, witness, samples, seed, tol)


def check_complete_reduce(A, rmap: ReductionMap, samples=DEFAULT_SAMPLES, seed=0,
                          box=DEFAULT_BOX, tol=DEFAULT_TOL):
    """Does A(x) = L* A_tilde(L x)?  Also checks constancy of A on fibers of L."""
    A_tilde = extract_complete(A, rmap)

    def residuals(x, shift):
        ax = np.asarray(A(x), dtype=float)
        _finite_or_raise(ax, "A(x)", x)
        alg = np.abs(ax - rmap.apply_adjoint(A_tilde(rmap.apply(x)))).max(axis=-1)
        fib = np.abs(np.asarray(A(x + shift), dtype=float) - ax).max(axis=-1)
        return alg, fib

    report = _reduction_check("complete-reduce", A, rmap, residuals, samples, seed, box, tol)
    return report, A_tilde


def check_fiber_reduce(A, rmap: ReductionMap, samples=DEFAULT_SAMPLES, seed=0,
                       box=DEFAULT_BOX, tol=DEFAULT_TOL):
    """Does L A(x) = A_tilde(L x)?  Equivalently Lx1 = Lx2 implies LA(x1) = LA(x2)."""
    A_tilde = extract_fiber(A, rmap)

    def residuals(x, shift):
        lax = rmap.apply(np.asarray(A(x), dtype=float))
        _finite_or_raise(lax, "L A(x)", x)
        alg = np.abs(lax - A_tilde(rmap.apply(x))).max(axis=-1)
        fib = np.abs(rmap.apply(np.asarray(A(x + shift), dtype=float)) - lax).max(axis=-1)
        return alg, fib

    report = _reduction_check("fiber-reduce", A, rmap, residuals, samples, seed, box, tol)
    return report, A_tilde


def check_pair_reduction(model: FiniteStateModel, rmap: ReductionMap,
                         samples=DEFAULT_SAMPLES, seed=0, box=DEFAULT_BOX, tol=DEFAULT_TOL):
    """Verify that U0 and x -> G(x, L*u) completely reduce and x -> F(x, L*u)
    fiber-reduces, extract the reduced triple, and check that monotonicity
    transfers to it on sampled pairs."""
    rng = np.random.default_rng(seed)
    n, N = rmap.n, rmap.N
    x = _uniform(rng, -box, box, (samples, N))
    u = _uniform(rng, -box, box, (samples, n))
    shift = rmap.sample_kernel(rng, (samples,), scale=box)
    Lu = rmap.apply_adjoint(u)

    def Ft(y, w):
        return rmap.apply(model.F(rmap.apply_right_inverse(y), rmap.apply_adjoint(w)))

    def Gt(y, w):
        return rmap.apply_gram_inverse(rmap.apply(
            model.G(rmap.apply_right_inverse(y), rmap.apply_adjoint(w))))

    def U0t(y):
        return rmap.apply_gram_inverse(rmap.apply(model.U0(rmap.apply_right_inverse(y))))

    y = rmap.apply(x)
    resid = {
        "U0 formula": np.abs(model.U0(x) - rmap.apply_adjoint(U0t(y))).max(axis=-1),
        "U0 fiber": np.abs(model.U0(x + shift) - model.U0(x)).max(axis=-1),
        "G formula": np.abs(model.G(x, Lu) - rmap.apply_adjoint(Gt(y, u))).max(axis=-1),
        "G fiber": np.abs(model.G(x + shift, Lu) - model.G(x, Lu)).max(axis=-1),
        "F formula": np.abs(rmap.apply(model.F(x, Lu)) - Ft(y, u)).max(axis=-1),
        "F fiber": np.abs(rmap.apply(model.F(x + shift, Lu)) - rmap.apply(model.F(x, Lu))).max(axis=-1),
    }
    margins = {k: -float(v.max()) for k, v in resid.items()}

    # monotonicity transfer to the extracted pair, when the full pair is declared monotone
    if model.monotone_flags.get("pair"):
        y1, y2 = _uniform(rng, -box, box, (2, samples, n))
        w1, w2 = _uniform(rng, -box, box, (2, samples, n))
        pair = (np.sum((Gt(y1, w1) - Gt(y2, w2)) * (y1 - y2), axis=-1)
                + np.sum((Ft(y1, w1) - Ft(y2, w2)) * (w1 - w2), axis=-1))
        margins["monotone transfer"] = float(pair.min())
    if model.monotone_flags.get("U0"):
        y1, y2 = _uniform(rng, -box, box, (2, samples, n))
        margins["U0 monotone transfer"] = float(
            np.sum((U0t(y1) - U0t(y2)) * (y1 - y2), axis=-1).min())

    worst_key = min(margins, key=margins.get)
    worst = margins[worst_key]
    if worst_key in resid:
        k = int(np.argmax(resid[worst_key]))
        witness = {"condition": worst_key, "x": x[k], "u": u[k]}
    else:
        witness = {"condition": worst_key}
    witness["margins"] = margins
    report = CheckReport("pair-reduction", worst >= -tol, worst, witness, samples, seed, tol)
    reduced = ReducedFiniteModel(n, F=Ft, G=Gt, U0=U0t)
    return report, reduced


def check_abc(model: PowerMasterModel, z_grid=None, u_grid=None, tol=1e-9) -> CheckReport:
    """Coefficient conditions of the power family, plus a direct sample of the
    differential conditions h_z <= 0, h_uu >= 0, z h_uz^2 <= -4 h_z h_uu."""
    if z_grid is None:
        z_grid = np.linspace(0.0, 5.0, 251)
    z_grid = np.asarray(z_grid, dtype=float)
    if np.any(z_grid < 0):
        raise InputError("z grid must lie in [0, inf)")
    if u_grid is None:
        u_grid = np.linspace(-5.0, 5.0, 101)
    for fn in (model.da, model.db, model.dc):
        if fn is None:
            raise InputError("coefficient derivatives are required for this check")
    a, da = model.a(z_grid), model.da(z_grid)
    b, db = model.b(z_grid), model.db(z_grid)
    dc = model.dc(z_grid)
    q = model.q

    margins = {
        "a positive": float(np.min(a)),
        "a nonincreasing": float(np.min(-da)),
        "c nonincreasing": float(np.min(-dc)),
    }
    growth = a * z_grid ** (4.0 * (q - 1.0) / q)
    margins["a z^{4(q-1)/q} nondecreasing"] = float(np.min(np.diff(growth)))
    if q > 2:
        margins["b constant for q > 2"] = float(1e-12 - (np.max(b) - np.min(b)))
    else:
        margins["b'^2 <= 2 a' c' for q = 2"] = float(np.min(2.0 * da * dc - db**2))

    Z, U = np.meshgrid(z_grid, u_grid, indexing="ij")
    hz = model.h_z(Z, U)
    huu = model.h_uu(Z, U)
    huz = model.h_uz(Z, U)
    margins["h_z <= 0"] = float(np.min(-hz))
    margins["h_uu >= 0"] = float(np.min(huu))
    margins["z h_uz^2 <= -4 h_z h_uu"] = float(np.min(-(Z * huz**2 + 4.0 * hz * huu)))

    strict = {"a positive"}
    failed = [k for k, m in margins.items() if (m <= 0 if k in strict else m < -tol)]
    worst_key = min(margins, key=margins.get)
    # name the first failed condition in declaration order (coefficient
    # conditions first), so negative controls report the documented witness
    named = failed[0] if failed else worst_key
    return CheckReport("power-family-abc", not failed, margins[worst_key],
                       {"condition": named, "failed": failed, "margins": margins,
                        "q": q, "z_grid_max": float(z_grid.max())},
                       len(z_grid), 0, tol)


def _h_pairing(model, z, zt, u, ut):
    """Monotonicity pairing of (z, u) -> (-h, z h_u) for a master-family model."""
    if model.m_feat == 1:
        dh = model.h(z, u) - model.h(zt, ut)
        dzv = model.z_velocity(z, u) - model.z_velocity(zt, ut)
        return -dh * (z - zt) + dzv * (u - ut)
    dh = model.h(z, u) - model.h(zt, ut)
    dzv = model.z_velocity(z, u) - model.z_velocity(zt, ut)
    return (-dh * (z - zt)).sum(axis=-1) + (dzv * (u - ut)).sum(axis=-1)


def check_h_monotone(model, samples=DEFAULT_SAMPLES, seed=0, u_box=DEFAULT_BOX,
                     tol=DEFAULT_TOL) -> CheckReport:
    """Sampled monotonicity of (z, u) -> (-h(z,u), z h_u(z,u)) on C x R^m."""
    rng = np.random.default_rng(seed)
    m = model.m_feat
    z = model.moment_set.sample(rng, (samples,))
    zt = model.moment_set.sample(rng, (samples,))
    shape = (samples,) if m == 1 else (samples, m)
    u = _uniform(rng, -u_box, u_box, shape)
    ut = _uniform(rng, -u_box, u_box, shape)
    pair = _h_pairing(model, z, zt, u, ut)
    if not np.all(np.isfinite(pair)):
        bad = int(np.argmax(~np.isfinite(pair)))
        raise EvaluationError("non-finite h pairing", witness={"z": z[bad], "u": u[bad]})
    k = int(np.argmin(pair))
    worst = float(pair[k])
    return CheckReport("h-monotone", worst >= -tol, worst,
                       {"z": z[k], "z_other": zt[k], "u": u[k], "u_other": ut[k]},
                       samples, seed, tol)


def check_quadratic_chain(model: QuadraticMasterModel, samples=DEFAULT_SAMPLES, seed=0,
                          u_box=DEFAULT_BOX, tol=DEFAULT_TOL):
    """Pairing decompositions for the quadratic family, three reports.

    "as-printed": pairing >= 3/4 du1^2 + 1/8 (2 z1 du2 + du1)^2
                  + 1/8 (2 zt1 du2 + du1)^2 - <df, dz>.
    "corrected":  pairing - <df, dz> minus the exact decomposition
                  1/2 (du1 + z1 du2)^2 + 1/2 (du1 + zt1 du2)^2
                  + (z2 - z1^2/2) du2^2 + (zt2 - zt1^2/2) du2^2,
                  which is an algebraic identity (margin 0 up to rounding).
    "monotone":   plain pairing >= 0.
    The printed bound is falsifiable on C x R^3 (its cross term drops a factor
    of 2), so "as-printed" is expected to fail; the other two must pass.
    """
    rng = np.random.default_rng(seed)
    z = model.moment_set.sample(rng, (samples,))
    zt = model.moment_set.sample(rng, (samples,))
    u = _uniform(rng, -u_box, u_box, (samples, 3))
    ut = _uniform(rng, -u_box, u_box, (samples, 3))
    pair = _h_pairing(model, z, zt, u, ut)
    df = model.f(z) - model.f(zt)
    fterm = (df * (z - zt)).sum(axis=-1)
    du1, du2 = u[:, 1] - ut[:, 1], u[:, 2] - ut[:, 2]
    z1, z2, zt1, zt2 = z[:, 1], z[:, 2], zt[:, 1], zt[:, 2]

    printed_bound = (0.75 * du1**2 + 0.125 * (2 * z1 * du2 + du1) ** 2
                     + 0.125 * (2 * zt1 * du2 + du1) ** 2)
    literal = pair - printed_bound + fterm
    exact_dec = (0.5 * (du1 + z1 * du2) ** 2 + 0.5 * (du1 + zt1 * du2) ** 2
                 + (z2 - 0.5 * z1**2) * du2**2 + (zt2 - 0.5 * zt1**2) * du2**2)
    corrected = pair - fterm - exact_dec

    def report(name, margins, absolute=False):
        vals = -np.abs(margins) if absolute else margins
        k = int(np.argmin(vals))
        worst = float(vals[k])
        return CheckReport(name, worst >= -tol, worst,
                           {"z": z[k], "z_other": zt[k], "u": u[k], "u_other": ut[k]},
                           samples, seed, tol)

    return {
        "as-printed": report("quadratic-chain-as-printed", literal),
        "corrected": report("quadratic-chain-corrected-identity", corrected, absolute=True),
        "monotone": report("quadratic-chain-monotone", pair),
    }


def check_phi_homogeneity(phi, dphi, samples=200, seed=0, box=DEFAULT_BOX,
                          candidate=None, tol=1e-8):
    """Fit (or verify) the matrix in DPhi(p) p = A Phi(p); scalar features only.

    Rank-deficient fits are reported as indeterminate (passed is None).
    """
    rng = np.random.default_rng(seed)
    p = rng.uniform(-box, box, samples)
    p = p[np.abs(p) > 1e-3]
    vals = np.atleast_2d(np.asarray(phi(p), dtype=float).T).T  # (S, m)
    lhs = np.atleast_2d(np.asarray(dphi(p), dtype=float).T).T * p[:, None]  # DPhi(p) * p
    if vals.shape != lhs.shape:
        raise InputError("phi and dphi must produce matching shapes")
    if candidate is None:
        gram = vals.T @ vals
        if np.linalg.cond(gram) > 1e12:
            rep = CheckReport("phi-homogeneity", None, 0.0,
                              {"status": "indeterminate (rank-deficient fit)"},
                              len(p), seed, tol)
            return rep, None
        fitted = np.linalg.solve(gram, vals.T @ lhs).T
    else:
        fitted = np.atleast_2d(np.asarray(candidate, dtype=float))
    resid = np.abs(lhs - vals @ fitted.T).max(axis=-1)
    k = int(np.argmax(resid))
    worst = -float(resid[k])
    rep = CheckReport("phi-homogeneity", worst >= -tol, worst,
                      {"p": p[k], "matrix": fitted}, len(p), seed, tol)
    return rep, fitted


def check_control_reduction(model: ControlsModel, samples=DEFAULT_SAMPLES, seed=0,
                            box=DEFAULT_BOX, t_max=1.0, tol=1e-8) -> CheckReport:
    """Residual of the structural identity
    Phi_t - D_pH . D_xPhi + D_xH . D_pPhi + A Phi + B = 0 on sampled (t,x,p,phi)."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, t_max, samples)
    x = rng.uniform(-box, box, samples)
    p = rng.uniform(-box, box, samples)
    phi = rng.uniform(-box, box, (samples, model.m_feat))
    res = np.empty((samples, model.m_feat))
    for i in range(samples):  # A, B act per sample on the coupling vector
        Av = np.asarray(model.A(t[i], phi[i]), dtype=float)
        Bv = np.asarray(model.B(t[i], phi[i]), dtype=float)
        Phi_v = np.atleast_1d(model.Phi(t[i], x[i], p[i]))
        res[i] = (np.atleast_1d(model.Phi_t(t[i], x[i], p[i]))
                  - model.Hp(x[i], p[i], phi[i]) * np.atleast_1d(model.Phi_x(t[i], x[i], p[i]))
                  + model.Hx(x[i], p[i], phi[i]) * np.atleast_1d(model.Phi_p(t[i], x[i], p[i]))
                  + Av @ Phi_v + Bv)
    worst_abs = np.abs(res).max(axis=-1)
    k = int(np.argmax(worst_abs))
    worst = -float(worst_abs[k])
    return CheckReport("control-reduction", worst >= -tol, worst,
                       {"t": t[k], "x": x[k], "p": p[k], "phi": phi[k]},
                       samples, seed, tol)


def check_strong_monotonicity(F, G, dim, alpha, samples=DEFAULT_SAMPLES, seed=0,
                              box=DEFAULT_BOX, tol=DEFAULT_TOL) -> CheckReport:
    """Sampled margin of <dG, dx> + <dF, dU> - alpha |dx|^2 >= 0."""
    rng = np.random.default_rng(seed)
    x, y = _uniform(rng, -box, box, (2, samples, dim))
    U, V = _uniform(rng, -box, box, (2, samples, dim))
    pair = (np.sum((G(x, U) - G(y, V)) * (x - y), axis=-1)
            + np.sum((F(x, U) - F(y, V)) * (U - V), axis=-1)
            - alpha * np.sum((x - y) ** 2, axis=-1))
    k = int(np.argmin(pair))
    worst = float(pair[k])
    return CheckReport("strong-monotonicity", worst >= -tol, worst,
                       {"x": x[k], "y": y[k], "U": U[k], "V": V[k], "alpha": alpha},
                       samples, seed, tol)


def check_jacobian_consistency(fn, jac, dim, samples=100, seed=0, box=2.0,
                               rel_tol=1e-4) -> CheckReport:
    """Analytic Jacobian vs central differences, relative to 1 + |analytic|."""
    from .models import fd_jacobian

    rng = np.random.default_rng(seed)
    pts = rng.uniform(-box, box, (samples, dim))
    worst = 0.0
    wit = {}
    for pt in pts:
        Ja = np.asarray(jac(pt), dtype=float)
        Jn = fd_jacobian(fn, pt)
        rel = np.abs(Ja - Jn) / (1.0 + np.abs(Ja))
        if rel.max() > worst:
            worst = float(rel.max())
            wit = {"point": pt.copy()}
    return CheckReport("jacobian-consistency", worst <= rel_tol, -worst, wit,
                       samples, seed, rel_tol)
