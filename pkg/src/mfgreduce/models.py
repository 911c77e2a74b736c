"""Registry of parameterized model families consumed by every solver.

Models are preset families with differentiable callbacks, not a general
expression parser; users extend the catalog in code.  All callbacks are
vectorized over leading axes: a finite-state callback maps (..., N) arrays to
(..., N) arrays, a scalar-feature callback maps (...) to (...).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    FeatureMap,
    MomentSet,
    ParticleCloud,
    ReductionMap,
    half_line_moments,
    power_feature,
    quadratic_feature,
    quadratic_slice_moments,
)
from .exceptions import InputError

FD_STEP = 1e-6


def fd_jacobian(fn, x, step=FD_STEP):
    """Central-difference Jacobian of fn at x (1-d input), shape (out, in)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        cols.append((np.atleast_1d(fn(x + e)) - np.atleast_1d(fn(x - e))) / (2 * step))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class FiniteStateModel:
    """Finite-state master equation data: F, G drive the flow, U0 seeds it."""

    N: int
    F: callable
    G: callable
    U0: callable
    jacobians: dict = field(default_factory=dict)  # optional: F_x, F_u, G_x, G_u, U0_x
    monotone_flags: dict = field(default_factory=dict)

    def field(self, t, state):
        """Characteristic field on stacked states (..., 2N): d(X,V)/dt = (F, G)."""
        X, V = state[..., : self.N], state[..., self.N:]
        return np.concatenate([self.F(X, V), self.G(X, V)], axis=-1)


@dataclass(frozen=True)
class ReducedFiniteModel:
    n: int
    F: callable
    G: callable
    U0: callable

    def field(self, t, state):
        Y, W = state[..., : self.n], state[..., self.n:]
        return np.concatenate([self.F(Y, W), self.G(Y, W)], axis=-1)


@dataclass(frozen=True)
class PowerMasterModel:
    """Scalar-moment family h(z, u) = a(z)|u|^q / q + b(z) u + c(z).

    Lives on the half-line moment set with feature |y|^{q'}/q'.
    """

    q: float
    a: callable
    b: callable
    c: callable
    da: callable
    db: callable
    dc: callable
    g: callable
    dg: callable
    positive_coefficient: bool = True  # declared a > 0 on the sampled moment set
    feature: FeatureMap = field(init=False, repr=False)
    moment_set: MomentSet = field(init=False, repr=False)

    def __post_init__(self):
        if self.q < 2:
            raise InputError("power family exposes q >= 2 only")
        object.__setattr__(self, "feature", power_feature(self.q_conj))
        object.__setattr__(self, "moment_set", half_line_moments())

    @property
    def q_conj(self) -> float:
        return self.q / (self.q - 1.0)

    @property
    def m_feat(self) -> int:
        return 1

    def h(self, z, u):
        return self.a(z) * np.abs(u) ** self.q / self.q + self.b(z) * u + self.c(z)

    def h_u(self, z, u):
        return self.a(z) * np.abs(u) ** (self.q - 1.0) * np.sign(u) + self.b(z)

    def h_z(self, z, u):
        return self.da(z) * np.abs(u) ** self.q / self.q + self.db(z) * u + self.dc(z)

    def h_uu(self, z, u):
        return self.a(z) * (self.q - 1.0) * np.abs(u) ** (self.q - 2.0)

    def h_uz(self, z, u):
        return self.da(z) * np.abs(u) ** (self.q - 1.0) * np.sign(u) + self.db(z)

    def z_velocity(self, z, u):
        """z h_u(z, u): the moment-transport speed of the reduced equation."""
        return z * self.h_u(z, u)

    def hamiltonian(self, x, z, p):
        qc = self.q_conj
        return (self.a(z) * np.abs(p) ** self.q / self.q + self.b(z) * p * x
                + self.c(z) * np.abs(x) ** qc) / qc

    def particle_velocity(self, y, psi, z):
        """-D_p H(y, m, Du) with Du = Dphi(y) psi; drives the continuity equation."""
        p = self.feature.grad(y) * psi
        return -(self.a(z) * np.abs(p) ** (self.q - 2.0) * p + self.b(z) * y) / self.q_conj


@dataclass(frozen=True)
class QuadraticMasterModel:
    """Three-moment family h(z,u) = (u1^2/2 - f0, u1 u2 - f1, u2^2 - f2) on the
    parabolic slice; monotone whenever the coefficient map f is monotone."""

    f: callable
    g: callable
    feature: FeatureMap = field(init=False, repr=False)
    moment_set: MomentSet = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "feature", quadratic_feature())
        object.__setattr__(self, "moment_set", quadratic_slice_moments())

    @property
    def m_feat(self) -> int:
        return 3

    def h(self, z, u):
        fz = self.f(z)
        return np.stack([
            0.5 * u[..., 1] ** 2 - fz[..., 0],
            u[..., 1] * u[..., 2] - fz[..., 1],
            u[..., 2] ** 2 - fz[..., 2],
        ], axis=-1)

    def z_velocity(self, z, u):
        """(h_u)^T z; its first component vanishes, freezing z0 = 1."""
        return np.stack([
            np.zeros(np.broadcast(z[..., 0], u[..., 0]).shape),
            z[..., 0] * u[..., 1] + z[..., 1] * u[..., 2],
            z[..., 1] * u[..., 1] + 2.0 * z[..., 2] * u[..., 2],
        ], axis=-1)


@dataclass(frozen=True)
class ControlsModel:
    """Strongly coupled model: H(x, p, phi) with coupling phi = mean of
    Phi(t, y, Du) under the population; G's measure dependence enters only
    through declared moment statistics of the cloud."""

    q: float
    r: float
    moment_order: float  # lambda in the moment bound diagnostics
    m_feat: int
    H: callable          # H(x, p, phi)
    Hp: callable
    Hx: callable
    terminal: callable   # G(x, stats)
    terminal_grad: callable  # D_x G(x, stats)
    m_stats: callable    # ParticleCloud -> tuple of moment statistics
    Phi: callable        # Phi(t, x, p)
    Phi_t: callable
    Phi_x: callable
    Phi_p: callable
    A: callable          # A(t, phi): (m, m)
    B: callable          # B(t, phi): (m,)

    @property
    def gamma(self) -> float:
        return self.r / (self.q - 1.0)

    def f(self, t, phi):
        """Coupling drift f(t, phi) = A(t, phi) phi + B(t, phi)."""
        phi = np.atleast_1d(phi)
        return np.asarray(self.A(t, phi)) @ phi + np.asarray(self.B(t, phi))


@dataclass(frozen=True)
class PowerControlsModel:
    """One-dimensional power family of the strongly coupled system.

    Scalars z0 = (1/p') int |y|^{p'} m0 and alpha0 = (1/q) int |x|^{q(p'-1)} m0
    are computed from the initial cloud.  ``delta_band`` declares the
    (delta0, delta1] band for phi^{1/p} a'(phi) when the model claims it.
    """

    p: float
    q: float
    a: callable
    da: callable
    g: callable
    dg: callable
    m0: ParticleCloud
    delta_band: tuple | None = None
    phi_range_hint: tuple = (1e-8, 10.0)

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def z0(self) -> float:
        return self.m0.power_moment(self.p_conj) / self.p_conj

    @property
    def alpha0(self) -> float:
        return self.m0.power_moment(self.q * (self.p_conj - 1.0)) / self.q

    def a_sup(self, n=2001) -> float:
        phis = np.linspace(*self.phi_range_hint, n)
        return float(np.abs(self.a(phis)).max())


@dataclass(frozen=True)
class NoiseModel:
    """Finite-state core plus a rearrangement map applied at rate lam.

    The rearrangement is affine with linear part ``tmap``; its adjoint is the
    transpose of the linear part.  ``alpha`` is the declared strong
    monotonicity margin of the (G, F) pair.
    """

    N: int
    F: callable
    G: callable
    U0: callable
    tmap: np.ndarray
    alpha: float
    lam: float = 0.5
    box_radius: float = 4.0
    resolution: int = 81
    F_u: callable | None = None   # (..., N) -> (..., N, N)
    G_u: callable | None = None
    jacobians: dict = field(default_factory=dict)

    def tmap_into_box(self) -> bool:
        """True when T maps the simulation box into itself (checked on corners)."""
        R = self.box_radius
        corners = np.array(np.meshgrid(*([[-R, R]] * self.N), indexing="ij")).reshape(self.N, -1).T
        return bool(np.all(np.abs(corners @ self.tmap.T) <= R + 1e-12))


@dataclass(frozen=True)
class DemoEntry:
    kind: str
    model: object
    aux: dict = field(default_factory=dict)


def _finite_demo_A() -> DemoEntry:
    ones = lambda X: np.ones_like(X)

    def F(X, U):
        s = X.sum(axis=-1, keepdims=True) + U.sum(axis=-1, keepdims=True)
        return 0.5 * s * ones(X)

    def G(X, U):
        return X.sum(axis=-1, keepdims=True) * ones(X)

    def U0(X):
        return X.sum(axis=-1, keepdims=True) * ones(X)

    J1 = np.ones((2, 2))
    jac = {
        "F_x": lambda X, U: 0.5 * J1,
        "F_u": lambda X, U: 0.5 * J1,
        "G_x": lambda X, U: J1,
        "G_u": lambda X, U: np.zeros((2, 2)),
        "U0_x": lambda X: J1,
    }
    model = FiniteStateModel(2, F, G, U0, jacobians=jac,
                             monotone_flags={"pair": True, "U0": True, "strict": None})
    L = ReductionMap(np.array([[1.0, 1.0]]))
    reduced = ReducedFiniteModel(
        1,
        F=lambda Y, W: Y + 2.0 * W,
        G=lambda Y, W: Y,
        U0=lambda Y: Y,
    )

    def exact_eval(t, pts):
        # (s, v) = (sum X, sum V) obeys s' = s + v, v' = 2 s with v(0) = 2 s(0);
        # eigen-decomposition gives s(t)/s0 and v(t)/s0 in closed form
        pts = np.atleast_2d(pts)
        c = (4.0 / 3.0) * np.exp(2 * t) - (1.0 / 3.0) * np.exp(-t)
        vc = (4.0 / 3.0) * np.exp(2 * t) + (2.0 / 3.0) * np.exp(-t)
        s0 = pts.sum(-1) / c
        return 0.5 * vc * s0[:, None] * np.ones_like(pts)

    return DemoEntry("finite", model, {"reduction_map": L, "reduced_closed_form": reduced,
                                       "exact_eval": exact_eval})


def _finite_demo_stationary() -> DemoEntry:
    # F = U, G = x, U0 = id admits the stationary solution U(t, x) = x
    model = FiniteStateModel(
        2,
        F=lambda X, U: U,
        G=lambda X, U: X,
        U0=lambda X: X,
        jacobians={
            "F_x": lambda X, U: np.zeros((2, 2)),
            "F_u": lambda X, U: np.eye(2),
            "G_x": lambda X, U: np.eye(2),
            "G_u": lambda X, U: np.zeros((2, 2)),
            "U0_x": lambda X: np.eye(2),
        },
        monotone_flags={"pair": True, "U0": True, "strict": None},
    )
    return DemoEntry("finite", model, {"stationary_solution": lambda t, x: x})


def make_power_master(q=2.0, a_name="one", b_name="zero", c_name="neg-z", g_name="identity") -> PowerMasterModel:
    """Power-family factory over named coefficient presets (used by the CLI)."""
    coeff = {
        "one": (lambda z: np.ones_like(np.asarray(z, dtype=float)),
                lambda z: np.zeros_like(np.asarray(z, dtype=float))),
        "zero": (lambda z: np.zeros_like(np.asarray(z, dtype=float)),
                 lambda z: np.zeros_like(np.asarray(z, dtype=float))),
        "neg-z": (lambda z: -np.asarray(z, dtype=float),
                  lambda z: -np.ones_like(np.asarray(z, dtype=float))),
        "identity": (lambda z: np.asarray(z, dtype=float),
                     lambda z: np.ones_like(np.asarray(z, dtype=float))),
        "exp-decay": (lambda z: np.exp(-np.asarray(z, dtype=float)),
                      lambda z: -np.exp(-np.asarray(z, dtype=float))),
    }
    coeff["nonconstant"] = coeff["identity"]  # CLI alias used by negative controls
    try:
        a, da = coeff[a_name]
        b, db = coeff[b_name]
        c, dc = coeff[c_name]
        g, dg = coeff[g_name]
    except KeyError as e:
        raise InputError(f"unknown coefficient preset {e.args[0]!r}") from None
    return PowerMasterModel(q=q, a=a, b=b, c=c, da=da, db=db, dc=dc, g=g, dg=dg,
                            positive_coefficient=(a_name != "zero"))


def _controls_quad_demo() -> DemoEntry:
    # H = p^2/2, G = x^2/2 (no measure dependence), Phi = p, A = B = 0
    zero_m = np.zeros((1, 1))

    model = ControlsModel(
        q=2.0, r=2.0, moment_order=3.0, m_feat=1,
        H=lambda x, p, phi: 0.5 * p**2,
        Hp=lambda x, p, phi: p,
        Hx=lambda x, p, phi: np.zeros_like(x),
        terminal=lambda x, stats: 0.5 * x**2,
        terminal_grad=lambda x, stats: x,
        m_stats=lambda cloud: (),
        Phi=lambda t, x, p: p,
        Phi_t=lambda t, x, p: np.zeros_like(p),
        Phi_x=lambda t, x, p: np.zeros_like(p),
        Phi_p=lambda t, x, p: np.ones_like(p),
        A=lambda t, phi: zero_m,
        B=lambda t, phi: np.zeros(1),
    )
    m0 = ParticleCloud.uniform_quantiles(-1.0, 1.0, 10000)
    closed_form = lambda t, x, T: x**2 / (2.0 * (1.0 + T - t))
    return DemoEntry("controls", model, {"m0": m0, "closed_form_u": closed_form})


def make_power_controls(p=2.0, q=2.0, a_name="zero", g_name="one", m0=None,
                        delta=0.05) -> PowerControlsModel:
    """Power controls factory; ``a_name``: zero | sqrt-slope (phi^{1/p} a' = delta)."""
    if m0 is None:
        m0 = ParticleCloud.uniform_quantiles(0.5, 1.5, 4000)
    if a_name == "zero":
        a = lambda phi: np.zeros_like(np.asarray(phi, dtype=float))
        da = lambda phi: np.zeros_like(np.asarray(phi, dtype=float))
        band = None
    elif a_name == "sqrt-slope":
        pc = p / (p - 1.0)
        a = lambda phi: delta * pc * np.maximum(phi, 0.0) ** (1.0 / pc)
        da = lambda phi: delta * np.maximum(phi, 1e-300) ** (-1.0 / p)
        band = (0.9 * delta, delta)
    else:
        raise InputError(f"unknown a preset {a_name!r}")
    if g_name == "one":
        g = lambda z: np.ones_like(np.asarray(z, dtype=float))
        dg = lambda z: np.zeros_like(np.asarray(z, dtype=float))
    elif g_name == "affine":
        g = lambda z: 1.0 + 0.25 * np.asarray(z, dtype=float)
        dg = lambda z: 0.25 * np.ones_like(np.asarray(z, dtype=float))
    elif g_name == "identity":
        g = lambda z: np.asarray(z, dtype=float)
        dg = lambda z: np.ones_like(np.asarray(z, dtype=float))
    else:
        raise InputError(f"unknown g preset {g_name!r}")
    return PowerControlsModel(p=p, q=q, a=a, da=da, g=g, dg=dg, m0=m0, delta_band=band)


def _rotation_contraction(rho=0.7, theta=np.pi / 6) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return rho * np.array([[c, -s], [s, c]])


def make_noise_model(u0_name="identity", lam=0.5) -> NoiseModel:
    if u0_name == "identity":
        U0 = lambda X: X.copy()
    elif u0_name == "wavy":
        U0 = lambda X: X + 0.3 * np.tanh(X)
    else:
        raise InputError(f"unknown U0 preset {u0_name!r}")
    return NoiseModel(
        N=2,
        F=lambda X, U: U,
        G=lambda X, U: X,
        U0=U0,
        tmap=_rotation_contraction(),
        alpha=1.0,
        lam=lam,
        F_u=lambda X, U: np.broadcast_to(np.eye(2), X.shape + (2,)),
        G_u=lambda X, U: np.broadcast_to(np.zeros((2, 2)), X.shape + (2,)),
        jacobians={
            "F_x": lambda X, U: np.zeros((2, 2)),
            "F_u": lambda X, U: np.eye(2),
            "G_x": lambda X, U: np.eye(2),
            "G_u": lambda X, U: np.zeros((2, 2)),
        },
    )


def build_demo_models() -> dict:
    """Catalog of the shipped demo models; keys are the CLI ``model=`` names."""
    catalog = {
        "demo-finite-A": _finite_demo_A(),
        "demo-finite-stationary": _finite_demo_stationary(),
        "demo-power": DemoEntry("power-master", make_power_master()),
        # terminal map g = z/4 keeps backward characteristics inside their
        # classical horizon on [0, 1] for the shipped seed ranges
        "demo-quadratic": DemoEntry(
            "quadratic-master",
            QuadraticMasterModel(f=lambda z: np.asarray(z, dtype=float),
                                 g=lambda z: 0.25 * np.asarray(z, dtype=float))),
        "demo-controls-quad": _controls_quad_demo(),
        "demo-power-controls": DemoEntry("power-controls", make_power_controls()),
        "demo-pq-small": DemoEntry(
            "power-controls",
            make_power_controls(a_name="sqrt-slope", g_name="affine", delta=0.05)),
        "demo-pq-large": DemoEntry(
            "power-controls",
            make_power_controls(a_name="sqrt-slope", g_name="affine", delta=0.6)),
        "demo-noise": DemoEntry("noise", make_noise_model()),
        "demo-noise-wavy": DemoEntry("noise", make_noise_model(u0_name="wavy")),
    }
    return catalog


def lookup(name: str) -> DemoEntry:
    catalog = build_demo_models()
    if name not in catalog:
        raise InputError(f"unknown model {name!r}; known: {sorted(catalog)}")
    return catalog[name]
