"""Current representations and the energy functionals on them.

A current is known to the library only through one of four representations:

``Smooth``
    a (1,1)-form ``T`` with (Hermitian) coefficient field.
``Potential``
    the data ``(c, S, h)`` of ``T = c omega + dS + dbar Sbar + i ddbar h``,
    ``c`` in unit-mass normalisation and ``h`` possibly singular at declared
    points.
``DiscPush``
    ``T_r = Phi_*(G_r [disc])`` with ``G_r = log+(r/|x|) / 2 pi``.
``LaminatedSum``
    a weighted sum of plaque currents of a flow box.

All functionals are computed from pairings with test forms (for singular
representations) or from the decomposition data (for energy and ``Q``).
Energy is ``E = int dbar S ^ d Sbar = 4 int |g|^2 dlambda`` with ``g`` the
coefficient of ``dbar S`` and ``Q(T1, T2) = m1 m2 - int dbar S1 ^ d S2bar
- int d S1bar ^ dbar S2``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

import jax
import jax.numpy as jnp

from .geometry import (
    abs2,
    OMEGA_UNIT,
    P2,
    TWO_PI,
    AnalyticScalarField,
    Form01,
    Form11,
    HolomorphicMap,
    Region,
    _split,
    ball,
    ddbar,
    integrate_chart,
    projective_map,
    wedge_density,
)
from .quadrature import IntegralResult, QuadratureSpec, integrate_box

# ---------------------------------------------------------------------------
# test functions and test forms


def bump_fn(center, radius: float):
    """jax-traceable smooth bump ``e * exp(-1/(1-s))``, ``s = |zeta-c|^2/R^2``; equals 1 at the centre."""
    c0, c1 = complex(center[0]), complex(center[1])
    R2 = float(radius) ** 2

    def f(u, v):
        du, dv = u - c0, v - c1
        # squared parts rather than abs**2: differentiable twice at the centre
        s = (du.real**2 + du.imag**2 + dv.real**2 + dv.imag**2) / R2
        inside = s < 1.0
        ss = jnp.where(inside, s, 0.0)
        return jnp.where(inside, jnp.exp(1.0 - 1.0 / (1.0 - ss)), 0.0)

    return f


@dataclass
class TestFunction:
    """A compactly supported real test function with support in a ball."""

    __test__ = False  # not a pytest class

    field: AnalyticScalarField
    center: tuple
    radius: float
    name: str = "f"

    @property
    def support(self) -> Region:
        return ball(self.center, self.radius)

    def c2_proxy(self, n: int = 400, seed: int = 0) -> float:
        """max of ``|f|``, first and second analytic partials over a grid of the support."""
        P = _ball_grid(self.center, self.radius, n, seed)
        j = self.field.jet(P)
        return float(max(np.abs(j["f"]).max(), np.abs(j["d"]).max(), np.abs(j["levi"]).max(),
                         np.abs(j["hol"]).max()))

    def ddbar_form(self, factor: float = 1.0) -> "TestForm":
        f = self.field
        levi = _levi_matrix_fn(f.fn)
        return TestForm(lambda u, v: factor * levi(u, v), self.center, self.radius,
                        f"{factor}*i ddbar {self.name}", closed=True)


def _ball_grid(center, radius, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 4))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    x *= radius * rng.random(n)[:, None] ** 0.25
    return np.stack([x[:, 0] + 1j * x[:, 1] + center[0], x[:, 2] + 1j * x[:, 3] + center[1]], axis=1)


def _real_hessian_fn(fn):
    def h(x):
        val = jnp.asarray(fn(x[0] + 1j * x[1], x[2] + 1j * x[3]), dtype=jnp.complex128)
        return jnp.stack([val.real, val.imag])

    return jax.hessian(h)


def _levi_from_real_hessian(Hs):
    """Levi matrix from the real Hessian (..., 4, 4) of a complex function."""
    Hxx = Hs[..., 0::2, 0::2]
    Hxy = Hs[..., 0::2, 1::2]
    Hyx = Hs[..., 1::2, 0::2]
    Hyy = Hs[..., 1::2, 1::2]
    return 0.25 * (Hxx + 1j * Hxy - 1j * Hyx + Hyy)


def _levi_matrix_fn(fn):
    """jax-traceable ``(u, v) -> 2x2`` Levi matrix of ``fn``."""
    hess = _real_hessian_fn(fn)

    def L(u, v):
        x = jnp.stack([jnp.real(u), jnp.imag(u), jnp.real(v), jnp.imag(v)])
        Hs = hess(x)
        return _levi_from_real_hessian(Hs[0] + 1j * Hs[1])

    return L


class TestForm:
    """Compactly supported (1,1)-form ``i sum H_jk dzeta_j ^ dzetabar_k``.

    ``Hfn(u, v)`` returns the 2x2 coefficient matrix and must be
    jax-traceable so that ``i ddbar`` of the form is available.  ``closed``
    marks forms with ``i ddbar theta = 0`` (``i ddbar`` of a function, or the
    (1,1)-part ``d gamma + dbar gammabar`` of an exact form), for which the
    ``i ddbar`` pairing term vanishes identically.
    """

    __test__ = False

    def __init__(self, Hfn, center, radius, name="theta", closed=False, scalar=None, K=None, scalar_levi=None):
        self.Hfn = Hfn
        self.scalar_levi = scalar_levi
        # theta = scalar * K with constant K: i ddbar theta needs only the Levi form of the scalar
        self.scalar = scalar
        self.K = None if K is None else np.asarray(K, dtype=complex)
        self.center = (complex(center[0]), complex(center[1]))
        self.radius = float(radius)
        self.name = name
        self.closed = closed
        self._H = None
        self._dd = None

    @property
    def support(self) -> Region:
        return ball(self.center, self.radius)

    def H(self, P) -> np.ndarray:
        if self._H is None:
            Hfn = self.Hfn
            self._H = jax.jit(jax.vmap(lambda x: jnp.asarray(Hfn(x[0] + 1j * x[1], x[2] + 1j * x[3]), dtype=jnp.complex128)))
        return np.asarray(self._H(_split(np.atleast_2d(P))))

    @property
    def form(self) -> Form11:
        return Form11(self.H, self.name, support=self.support)

    def ddbar_density(self, P) -> np.ndarray:
        """Density of ``i ddbar theta`` against ``dlambda``.

        ``4 (L[H22]_11 + L[H11]_22 - L[H21]_12 - L[H12]_21)`` with
        ``L[F]_lm = d_l dbar_m F``.
        """
        if self.closed:
            return np.zeros(len(np.atleast_2d(P)), dtype=complex)
        if self._dd is None and self.scalar is not None:
            L = self.scalar_levi or _levi_matrix_fn(self.scalar)
            K = jnp.asarray(self.K)

            def dens_fk(x):
                M = L(x[0] + 1j * x[1], x[2] + 1j * x[3])
                return 4.0 * (M[0, 0] * K[1, 1] + M[1, 1] * K[0, 0] - M[0, 1] * K[1, 0] - M[1, 0] * K[0, 1])

            self._dd = jax.jit(jax.vmap(dens_fk))
        if self._dd is None:
            Hfn = self.Hfn

            def entries(x):
                M = jnp.asarray(Hfn(x[0] + 1j * x[1], x[2] + 1j * x[3]), dtype=jnp.complex128).ravel()
                return jnp.concatenate([M.real, M.imag])

            hess = jax.hessian(entries)

            def dens(x):
                Hs = hess(x)  # (8, 4, 4)
                Hc = Hs[:4] + 1j * Hs[4:]
                L = _levi_from_real_hessian(Hc)  # (4 entries, 2, 2); entry index = 2j+k
                return 4.0 * (L[3, 0, 0] + L[0, 1, 1] - L[2, 0, 1] - L[1, 1, 0])

            self._dd = jax.jit(jax.vmap(dens))
        return np.asarray(self._dd(_split(np.atleast_2d(P))))


def bump_levi_fn(center, radius: float):
    """Closed-form Levi matrix of :func:`bump_fn`.

    With ``phi(s) = exp(1 - 1/(1-s))``: ``L_jk = phi'' ds_j dsbar_k + phi' delta_jk / R^2``.
    """
    c = jnp.asarray([complex(center[0]), complex(center[1])])
    R2 = float(radius) ** 2

    def L(u, v):
        d = jnp.stack([u, v]) - c
        s = jnp.sum(abs2(d)) / R2
        inside = s < 1.0
        a = 1.0 / (1.0 - jnp.where(inside, s, 0.0))
        phi = jnp.where(inside, jnp.exp(1.0 - a), 0.0)
        p1 = -phi * a**2
        p2 = phi * (a**4 - 2.0 * a**3)
        return p2 * jnp.outer(jnp.conj(d), d) / R2**2 + p1 * jnp.eye(2) / R2

    return L


def constant_times_bump(K, center, radius, name="fK", poly=None) -> TestForm:
    """``theta = f K`` with ``f`` a bump (optionally times a real polynomial field)."""
    K = jnp.asarray(np.asarray(K, dtype=complex))
    b = bump_fn(center, radius)
    levi = None
    if poly is None:
        sc = b
        levi = bump_levi_fn(center, radius)
    else:
        def sc(u, v):
            return b(u, v) * jnp.real(poly(u, v))
    return TestForm(lambda u, v: sc(u, v) * K, center, radius, name, scalar=sc, K=np.asarray(K), scalar_levi=levi)


def _avoid(center, radius, singular_points, margin=0.05):
    for p in singular_points:
        if np.hypot(abs(center[0] - p[0]), abs(center[1] - p[1])) < radius + margin:
            return False
    return True


def function_battery(n_bump: int = 25, n_poly: int = 10, seed: int = 0, singular_points: Sequence = (),
                     extent: float = 1.2, radii=(0.35, 0.8)) -> list[TestFunction]:
    """Deterministic battery: radial bumps and real polynomials times bumps."""
    rng = np.random.default_rng(seed)
    out: list[TestFunction] = []
    while len(out) < n_bump + n_poly:
        c = tuple(extent * (rng.uniform(-1, 1, 2) + 1j * rng.uniform(-1, 1, 2)) / np.sqrt(2))
        R = rng.uniform(*radii)
        if not _avoid(c, R, singular_points):
            continue
        b = bump_fn(c, R)
        k = len(out)
        if k < n_bump:
            out.append(TestFunction(AnalyticScalarField(b, f"bump{k}", real=True), c, R, f"bump{k}"))
        else:
            co = rng.normal(size=6) + 1j * rng.normal(size=6)

            def fn(u, v, b=b, co=co):
                p = co[0] + co[1] * u + co[2] * v + co[3] * u * u + co[4] * u * jnp.conj(v) + co[5] * v * v
                return b(u, v) * jnp.real(p)

            out.append(TestFunction(AnalyticScalarField(fn, f"polybump{k}", real=True), c, R, f"polybump{k}"))
    return out


def form_battery(n: int = 12, seed: int = 1, singular_points: Sequence = (), extent: float = 1.2,
                 radii=(0.35, 0.8), positive: bool = False) -> list[TestForm]:
    """Test (1,1)-forms ``f K`` with random Hermitian (optionally PSD) ``K``."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        c = tuple(extent * (rng.uniform(-1, 1, 2) + 1j * rng.uniform(-1, 1, 2)) / np.sqrt(2))
        R = rng.uniform(*radii)
        if not _avoid(c, R, singular_points):
            continue
        X = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        K = X @ X.conj().T if positive else 0.5 * (X + X.conj().T)
        out.append(constant_times_bump(K, c, R, f"fK{len(out)}"))
    return out


def one_form_battery(n: int = 8, seed: int = 2, singular_points: Sequence = (), extent: float = 1.2,
                     radii=(0.35, 0.8)) -> list[Form01]:
    """(0,1)-forms ``gamma = f dubar`` or ``f dvbar`` with complex bump coefficients.

    A real 1-form is ``beta = gamma + gammabar`` and the (1,1)-part of
    ``d beta`` is ``d gamma + dbar gammabar``.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        c = tuple(extent * (rng.uniform(-1, 1, 2) + 1j * rng.uniform(-1, 1, 2)) / np.sqrt(2))
        R = rng.uniform(*radii)
        if not _avoid(c, R, singular_points):
            continue
        b = bump_fn(c, R)
        ph = complex(np.exp(2j * np.pi * rng.random()))
        f = AnalyticScalarField(lambda u, v, b=b, ph=ph: ph * b(u, v) * (1.0 + 0.5 * u), "gamma")
        k = len(out)
        S = Form01(f, None, f"gamma{k}", support=ball(c, R)) if k % 2 == 0 else Form01(None, f, f"gamma{k}", support=ball(c, R))
        out.append(S)
    return out


# ---------------------------------------------------------------------------
# representations


@dataclass
class Smooth:
    T: Form11
    region: Region = P2
    name: str = "smooth"
    variant: str = field(default="Smooth", init=False)

    def coefficients(self, P) -> np.ndarray:
        return self.T.H(P)


@dataclass
class Potential:
    """``T = c omega_unit + dS + dbar Sbar + i ddbar h``.

    ``pieces`` optionally maps a test-form support ball to a list of regions
    covering it (used to align quadrature with kinks of ``h``).
    ``smooth`` optionally carries a pointwise (1,1)-form equal to ``T`` away
    from the declared singular points.
    """

    c: float
    S: Form01 | None = None
    h: AnalyticScalarField | None = None
    name: str = "potential"
    smooth: Form11 | None = None
    pieces: Callable | None = None
    leaves: object | None = None
    meta: dict = field(default_factory=dict)
    variant: str = field(default="Potential", init=False)

    @property
    def singular_points(self):
        return self.h.singular_points if self.h is not None else []


@dataclass
class DiscPush:
    map: object
    r: float
    name: str = "disc-push"
    variant: str = field(default="DiscPush", init=False)

    def __post_init__(self):
        if not 0 < self.r < 1:
            raise ValueError("r must lie in (0, 1)")
        rmax = getattr(self.map, "r_max", 1.0)
        if self.r >= rmax:
            raise ValueError(f"r = {self.r} is beyond the map's r_max = {rmax}")


@dataclass
class LaminatedSum:
    box: object
    name: str = "laminated"
    variant: str = field(default="LaminatedSum", init=False)


CurrentRep = Union[Smooth, Potential, DiscPush, LaminatedSum]


# ---------------------------------------------------------------------------
# pairings


def _support_of(S: Form01 | None):
    if S is None:
        return None
    return S.support if S.support is not None else P2


def _s_region(S: Form01) -> Region:
    return S.support if isinstance(S.support, Region) or hasattr(S.support, "param") else P2


def pair_potential_terms(T: Potential, theta: TestForm, q: QuadratureSpec | None = None,
                         termwise: bool = True) -> dict:
    """Termwise pairing of a Potential current with a test form.

    Returns a dict with ``omega``, ``dS`` and ``h`` contributions (complex
    ``IntegralResult``) and their sum ``total``.  With ``termwise=False``
    only the summed integrand is integrated (cheaper; tolerance applies to
    the total).
    """
    q = q or QuadratureSpec()
    c = T.c
    S = T.S
    h = T.h
    sym = S.sym_form() if S is not None else None

    def dens(P):
        Ht = theta.H(P)
        cols = [c * wedge_density(OMEGA_UNIT.H(P), Ht)]
        cols.append(wedge_density(sym.H(P), Ht) if sym is not None else np.zeros(len(P), dtype=complex))
        if h is not None and not theta.closed:
            hv = np.asarray(h(P))
            dd = theta.ddbar_density(P)
            cols.append(np.where(dd == 0, 0.0, hv * dd))
        else:
            cols.append(np.zeros(len(P), dtype=complex))
        out = np.stack(cols, axis=1)
        return out if termwise else out.sum(axis=1)

    # pieces align quadrature with kinks of h; without the h term the integrand is smooth
    use_pieces = T.pieces is not None and h is not None and not theta.closed
    regions = T.pieces(theta.support) if use_pieces else [theta.support]
    res = None
    for reg in regions:
        r = integrate_chart(dens, reg, q)
        res = r if res is None else res + r
    if not termwise:
        return {"total": res}
    val = np.asarray(res.value)
    err = np.asarray(res.error)
    terms = {k: IntegralResult(val[i], err[i], res.converged, res.n_evals, res.n_boxes)
             for i, k in enumerate(("omega", "dS", "h"))}
    terms["total"] = IntegralResult(val.sum(), err.sum(), res.converged, res.n_evals, res.n_boxes)
    return terms


def pair(T: CurrentRep, theta: TestForm, q: QuadratureSpec | None = None, route: str = "auto") -> IntegralResult:
    """``<T, theta>`` for a compactly supported test form."""
    q = q or QuadratureSpec()
    if isinstance(T, Smooth):
        return integrate_chart(lambda P: wedge_density(T.T.H(P), theta.H(P)), theta.support, q)
    if isinstance(T, Potential):
        if route == "leaves" or (route == "auto" and T.leaves is not None and T.h is not None and not theta.closed and T.pieces is None):
            return T.leaves.pair(theta.H, theta.center, theta.radius, q)
        if route == "smooth":
            return integrate_chart(lambda P: wedge_density(T.smooth.H(P), theta.H(P)), theta.support, q)
        return pair_potential_terms(T, theta, q, termwise=False)["total"]
    if isinstance(T, DiscPush):
        return disc_pairing(T.map, T.r, theta.H, q)
    if isinstance(T, LaminatedSum):
        return T.box.pair_form(theta.H, q)
    raise TypeError(type(T))


def disc_pairing(Phi, r: float, Hfun: Callable, q: QuadratureSpec | None = None) -> IntegralResult:
    """``(1/2 pi) int_{|x|<r} log(r/|x|) Phi^* theta``.

    ``Phi^* theta = 2 Phi'^T H conj(Phi') dlambda``.
    """

    def dens(x):
        P = Phi(x)
        D = Phi.derivative(x)
        d = 2.0 * np.einsum("nj,njk,nk->n", D, Hfun(P), np.conj(D))
        # compactly supported forms vanish where the image has left every bounded set
        return np.where(np.all(np.isfinite(P), axis=1), d, 0.0)

    return log_weighted_integral(dens, r, q, getattr(Phi, "angle_edges", None))


def graded_edges(hot: Sequence[float], finest: float, n_uniform: int = 8) -> np.ndarray:
    """Angular edges on ``[0, 2 pi]``: uniform, plus geometric grading down to ``finest`` at each hot angle."""
    edges = set(np.linspace(0.0, TWO_PI, n_uniform + 1).tolist())
    k_max = int(np.ceil(np.log2(np.pi / max(finest, 1e-300))))
    for a in hot:
        for k in range(k_max + 1):
            d = np.pi * 2.0**-k
            for e in (a - d, a + d):
                edges.add(float(np.mod(e, TWO_PI)))
        edges.add(float(np.mod(a, TWO_PI)))
    return np.array(sorted(edges))


def log_weighted_integral(dens: Callable, r: float, q: QuadratureSpec | None = None,
                          angle_edges: Callable | None = None) -> IntegralResult:
    """``(1/2 pi) int_{|x|<r} log(r/|x|) dens(x) dlambda``.

    Polar coordinates with ``|x| = r y^2`` make the logarithmic weight
    integrable at the origin; ``angle_edges(r)`` optionally supplies
    initial angular cuts for integrands with narrow angular features.
    """
    q = q or QuadratureSpec()

    def f(X):
        y, phi = X[:, 0], X[:, 1]
        rho = r * y**2
        d = dens(rho * np.exp(1j * phi))
        w = -2.0 * np.log(np.where(y > 0, y, 1.0)) / TWO_PI
        return d * w * rho * 2 * r * y

    edges = None if angle_edges is None else angle_edges(r)
    if edges is None:
        return integrate_box(f, [0.0, 0.0], [1.0, TWO_PI], q, initial_splits=(2, 4))
    return integrate_pieces(f, [([0.0, a], [1.0, b]) for a, b in _pairs(edges)], q)


def _pairs(edges):
    e = np.asarray(edges)
    return list(zip(e[:-1], e[1:]))


def integrate_pieces(f: Callable, boxes, q: QuadratureSpec | None = None) -> IntegralResult:
    """Sum of adaptive integrals over a list of ``(lo, hi)`` boxes."""
    out = None
    for lo, hi in boxes:
        r = integrate_box(f, lo, hi, q)
        out = r if out is None else out + r
    return out


# ---------------------------------------------------------------------------
# functionals


@dataclass
class MassResult:
    unit: float
    raw: float
    error: float
    converged: bool

    def __iter__(self):
        return iter((self.unit, self.raw))


def compute_mass(T: CurrentRep, q: QuadratureSpec | None = None) -> MassResult:
    """``<T, omega>`` in unit-mass normalisation (``raw = 2 pi unit``)."""
    q = q or QuadratureSpec()
    if isinstance(T, Smooth):
        r = integrate_chart(lambda P: wedge_density(T.T.H(P), OMEGA_UNIT.H(P)), T.region, q)
        val, err, ok = float(np.real(r.value)), float(np.abs(r.error)), r.converged
    elif isinstance(T, Potential):
        # omega is closed: dS terms and i ddbar h pair to zero by parts; the dS
        # term is still integrated so that the by-parts identity is measured.
        val, err, ok = float(T.c), 0.0, True
        if T.S is not None:
            r = integrate_chart(lambda P: wedge_density(T.S.sym_form().H(P), OMEGA_UNIT.H(P)), _s_region(T.S), q)
            val += float(np.real(r.value))
            err += float(np.abs(r.error))
            ok = r.converged
    elif isinstance(T, DiscPush):
        r = disc_pairing(T.map, T.r, OMEGA_UNIT.H, q)
        val, err, ok = float(np.real(r.value)), float(np.abs(r.error)), r.converged
    elif isinstance(T, LaminatedSum):
        r = T.box.pair_form(OMEGA_UNIT.H, q)
        val, err, ok = float(np.real(r.value)), float(np.abs(r.error)), r.converged
    else:
        raise TypeError(type(T))
    return MassResult(val, TWO_PI * val, err, ok)


def _gram_region(S1: Form01, S2: Form01):
    r1, r2 = _s_region(S1), _s_region(S2)
    if r1 == r2:
        return r1
    return P2


def energy_integral(S1: Form01, S2: Form01, q: QuadratureSpec | None = None, conj_first: bool = False) -> IntegralResult:
    """``int dbar S1 ^ d S2bar = 4 int g1 conj(g2)``; with ``conj_first`` the
    mirrored integral ``int d S1bar ^ dbar S2 = 4 int conj(g1) g2``."""
    q = q or QuadratureSpec()
    if conj_first:
        f = lambda P: 4.0 * np.conj(S1.dbar_coefficient(P)) * S2.dbar_coefficient(P)  # noqa: E731
    else:
        f = lambda P: 4.0 * S1.dbar_coefficient(P) * np.conj(S2.dbar_coefficient(P))  # noqa: E731
    return integrate_chart(f, _gram_region(S1, S2), q)


def compute_energy(T: CurrentRep, q: QuadratureSpec | None = None, screen: bool = True) -> IntegralResult:
    """``E(T) = int dbar S ^ d Sbar`` for a Potential representation."""
    q = q or QuadratureSpec()
    if not isinstance(T, Potential):
        raise TypeError("energy needs the Potential representation")
    if T.S is None:
        return IntegralResult(0.0, 0.0, True, 0, 0)
    if screen:
        for p in getattr(T.S.a, "singular_points", []) + getattr(T.S.b, "singular_points", []):
            rep = screen_integrability(lambda P: 4 * np.abs(T.S.dbar_coefficient(P)) ** 2, p)
            if rep["divergent"]:
                return IntegralResult(np.inf, np.inf, False, 0, 0)
    r = integrate_chart(lambda P: 4.0 * np.abs(T.S.dbar_coefficient(P)) ** 2, _s_region(T.S), q)
    val = float(np.real(r.value))
    if val < -max(q.abs_tol, 10 * abs(r.error)):
        raise RuntimeError(f"negative energy {val}: internal error")
    return IntegralResult(val, float(abs(r.error)), r.converged, r.n_evals, r.n_boxes)


def compute_Q(T1: Potential, T2: Potential, q: QuadratureSpec | None = None) -> IntegralResult:
    """``Q(T1, T2) = m1 m2 - int dbar S1 ^ d S2bar - int d S1bar ^ dbar S2``.

    The two cross integrals are evaluated as separate complex quadratures;
    their imaginary parts cancel only up to quadrature error.
    """
    q = q or QuadratureSpec()
    m1 = compute_mass(T1, q)
    m2 = compute_mass(T2, q)
    val = m1.unit * m2.unit
    err = abs(m1.unit) * m2.error + abs(m2.unit) * m1.error
    ok = m1.converged and m2.converged
    if T1.S is not None and T2.S is not None:
        a = energy_integral(T1.S, T2.S, q)
        b = energy_integral(T1.S, T2.S, q, conj_first=True)
        val = val - a.value - b.value
        err += abs(a.error) + abs(b.error)
        ok = ok and a.converged and b.converged
    return IntegralResult(float(np.real(val)), float(err), ok, 0, 0)


@dataclass
class EnergyReport:
    mass_raw: float
    mass_unit: float
    energy: float
    q_self: float
    identity_residual: float
    error_estimates: dict
    name: str = ""
    q_over_mass2: float = float("nan")
    converged: bool = True
    extra: dict = field(default_factory=dict)

    def to_json(self, **kw) -> str:
        return json.dumps(asdict(self), default=_json_default, **kw)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def energy_report(T: Potential, q: QuadratureSpec | None = None) -> EnergyReport:
    q = q or QuadratureSpec()
    m = compute_mass(T, q)
    E = compute_energy(T, q)
    Qs = compute_Q(T, T, q)
    resid = abs(Qs.value - m.unit**2 + 2 * E.value)
    errs = {"mass": m.error, "energy": float(E.error), "q_self": float(Qs.error)}
    errs["combined"] = errs["q_self"] + 2 * abs(m.unit) * m.error + 2 * errs["energy"]
    return EnergyReport(m.raw, m.unit, float(E.value), float(Qs.value), float(resid), errs, T.name,
                        float(Qs.value / m.unit**2) if m.unit else float("nan"),
                        bool(m.converged and E.converged and Qs.converged))


def screen_integrability(density: Callable, point, k_max: int = 20, ratio: float = 0.9, n: int = 6) -> dict:
    """Dyadic-annulus screening of ``int density`` near ``point``.

    The shell ``2^-(k+1) < |zeta - p| < 2^-k`` is integrated with a fixed
    tensor Gauss rule.  The integral is declared divergent when the tail of
    the shell sums fails the ratio test with the given factor.
    """
    from .quadrature import gauss_legendre

    p = np.asarray(point, dtype=complex)
    xs, ws = [], []
    for lo, hi in [(0.0, 1.0), (0.0, np.pi / 2), (0.0, TWO_PI), (0.0, TWO_PI)]:
        x, w = gauss_legendre(n, lo, hi)
        xs.append(x)
        ws.append(w)
    grid = np.stack(np.meshgrid(*xs, indexing="ij"), -1).reshape(-1, 4)
    W = np.einsum("i,j,k,l->ijkl", *ws).ravel()
    sums = []
    for k in range(k_max + 1):
        r_hi, r_lo = 2.0**-k, 2.0 ** -(k + 1)
        rho = r_lo + (r_hi - r_lo) * grid[:, 0]
        eta, p1, p2 = grid[:, 1], grid[:, 2], grid[:, 3]
        P = np.stack([p[0] + rho * np.cos(eta) * np.exp(1j * p1), p[1] + rho * np.sin(eta) * np.exp(1j * p2)], 1)
        jac = rho**3 * np.cos(eta) * np.sin(eta) * (r_hi - r_lo)
        sums.append(float(np.sum(np.abs(density(P)) * jac * W)))
    sums = np.asarray(sums)
    tail = sums[k_max // 2:]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = tail[1:] / tail[:-1]
    ok = bool(np.all((tail[1:] <= ratio * tail[:-1]) | (tail[1:] < 1e-300)))
    return {"annulus_sums": sums.tolist(), "ratios": np.nan_to_num(ratios).tolist(), "divergent": not ok}


def harmonicity_defect(T: CurrentRep, battery: Sequence[TestFunction], q: QuadratureSpec | None = None,
                       route: str = "auto", normalize: bool = True) -> dict:
    """``max |<T, i ddbar f>| / ||f||_C2`` over the battery."""
    q = q or QuadratureSpec()
    vals, skipped = [], []
    for f in battery:
        r = pair(T, f.ddbar_form(), q, route)
        if not r.converged:
            skipped.append(f.name)
        scale = f.c2_proxy() if normalize else 1.0
        vals.append(abs(r.value) / scale)
    return {"defect": float(max(vals)) if vals else 0.0, "values": vals, "skipped": skipped}


def closedness_defect(T: CurrentRep, battery: Sequence[Form01], q: QuadratureSpec | None = None,
                      route: str = "auto", sample_points: int = 200) -> dict:
    """``max |<T, d beta>|`` over real 1-forms ``beta = gamma + gammabar``."""
    q = q or QuadratureSpec()
    vals = []
    for g in battery:
        sup = g.support
        center = sup.center
        radius = sup.radius
        # sym(gamma) has entries built from first derivatives of gamma: expose as TestForm
        theta = _sym_test_form(g, center, radius)
        r = pair(T, theta, q, route)
        vals.append(abs(r.value))
    out = {"defect": float(max(vals)) if vals else 0.0, "values": vals}
    if isinstance(T, Potential) and T.S is not None:
        P = _ball_grid((0j, 0j), 1.5, sample_points, 7)
        out["dbar_S_sup"] = float(np.abs(T.S.dbar_coefficient(P)).max())
    return out


def _sym_test_form(g: Form01, center, radius) -> TestForm:
    """``d gamma + dbar gammabar`` as a jax-traceable test form."""
    a, b = g.a.fn, g.b.fn

    def Hfn(u, v):
        def comp(x):
            uu, vv = x[0] + 1j * x[1], x[2] + 1j * x[3]
            va = jnp.asarray(a(uu, vv), dtype=jnp.complex128)
            vb = jnp.asarray(b(uu, vv), dtype=jnp.complex128)
            return jnp.stack([va.real, va.imag, vb.real, vb.imag])

        x = jnp.stack([jnp.real(u), jnp.imag(u), jnp.real(v), jnp.imag(v)])
        J = jax.jacfwd(comp)(x)  # (4 out, 4 in)
        # D[j, k] = d_j S_k
        rows = []
        for j in range(2):
            row = []
            for k in range(2):
                dfdx = J[2 * k, 2 * j] + 1j * J[2 * k + 1, 2 * j]
                dfdy = J[2 * k, 2 * j + 1] + 1j * J[2 * k + 1, 2 * j + 1]
                row.append(0.5 * (dfdx - 1j * dfdy))
            rows.append(jnp.stack(row))
        D = jnp.stack(rows)
        M = D - jnp.conj(D.T)
        return -1j * M

    # ddbar(d gamma) = ddbar(dbar gammabar) = 0, so the h term drops out
    return TestForm(Hfn, center, radius, f"d[{g.name}]", closed=True)


@dataclass
class PositivityReport:
    min_eigenvalue: float
    certified: bool
    n_points: int
    argmin: list


def positivity_certificate(T: CurrentRep, grid: np.ndarray | None = None, abs_tol: float = 1e-10) -> PositivityReport:
    """Minimum eigenvalue of the coefficient matrix over a sample grid."""
    if grid is None:
        grid = default_grid()
    if isinstance(T, Smooth):
        form = T.T
    elif isinstance(T, Potential):
        form = potential_pointwise_form(T)
    else:
        raise TypeError("positivity needs pointwise coefficients")
    ev = form.min_eigenvalue(grid)
    i = int(np.argmin(ev))
    return PositivityReport(float(ev[i]), bool(ev[i] >= -abs_tol), len(grid), [complex(grid[i, 0]), complex(grid[i, 1])])


def potential_pointwise_form(T: Potential) -> Form11:
    if T.smooth is not None:
        return T.smooth
    form = OMEGA_UNIT.scale(T.c)
    if T.S is not None:
        form = form + T.S.sym_form()
    if T.h is not None:
        form = form + ddbar(T.h)
    return form


def default_grid(n: int = 2000, radius: float = 1.5, seed: int = 3) -> np.ndarray:
    return _ball_grid((0j, 0j), radius, n, seed)


# ---------------------------------------------------------------------------
# pushforward and regularisation


def _inverse_matrix_map(M) -> HolomorphicMap:
    return projective_map(np.linalg.inv(np.asarray(M, dtype=complex)), name="M^-1")


def _safe_form(form: Form11) -> Form11:
    """Zero out coefficients at non-finite points (images of the chart's line at infinity)."""
    def H(P):
        ok = np.all(np.isfinite(P), axis=1)
        out = np.zeros((len(P), 2, 2), dtype=complex)
        if ok.any():
            out[ok] = form.H(P[ok])
        return out
    return Form11(H, form.name, form.positive, form.support)


def _pull_smooth(T: Form11, F: HolomorphicMap) -> Form11:
    def H(P):
        FP = F(P)
        J = F.jacobian(P)
        ok = np.all(np.isfinite(FP), axis=1) & np.all(np.isfinite(J), axis=(1, 2))
        out = np.zeros((len(P), 2, 2), dtype=complex)
        if ok.any():
            Hf = T.H(FP[ok])
            out[ok] = np.einsum("nja,njk,nkb->nab", J[ok], Hf, np.conj(J[ok]))
        return out
    return Form11(H, f"{F.name}^*{T.name}", T.positive)


def matrix_potential_shift(M) -> AnalyticScalarField:
    """``phi`` with ``(M^-1)^* omega_raw = omega_raw + i ddbar phi`` in the t=1 chart."""
    Mi = jnp.asarray(np.linalg.inv(np.asarray(M, dtype=complex)))

    def phi(u, v):
        Z = jnp.stack([u, v, 1.0 + 0j])
        W = Mi @ Z
        return jnp.log(jnp.sum(abs2(W))) - jnp.log(jnp.sum(abs2(Z)))

    return AnalyticScalarField(phi, "phi_M", real=True)


def pushforward(T: CurrentRep, kind: str, M=None, d: int = 2) -> CurrentRep:
    """Push ``T`` forward by a projective automorphism or pull back by an endomorphism.

    ``kind`` is ``"matrix"`` (any invertible 3x3 ``M``, e.g. unitary or the
    shear ``[z : w + eps z : t]``) or ``"endomorphism"``, which returns the
    scaled pullback ``f^* T / d`` for ``f = [z^d : w^d : t^d]``.
    """
    if kind == "matrix":
        M = np.asarray(M, dtype=complex)
        Finv = _inverse_matrix_map(M)
        if isinstance(T, Smooth):
            return Smooth(_pull_smooth(T.T, Finv), P2, f"M_*{T.name}")
        if isinstance(T, Potential):
            S = T.S.pullback(Finv) if T.S is not None else None
            if S is not None:
                S.support = P2
            phi = matrix_potential_shift(M) * (T.c / TWO_PI)
            h = phi if T.h is None else T.h.compose(Finv) + phi
            sm = _pull_smooth(T.smooth, Finv) if T.smooth is not None else None
            return Potential(T.c, S, h, f"M_*{T.name}", sm)
        raise TypeError("pushforward supports Smooth and Potential")
    if kind == "endomorphism":
        F = HolomorphicMap(lambda u, v: (u**d, v**d), f"z^{d}")
        if isinstance(T, Smooth):
            return Smooth(_pull_smooth(T.T, F).scale(1.0 / d), T.region, f"f^*{T.name}/{d}")
        if isinstance(T, Potential):
            S = T.S.pullback(F).scale(1.0 / d) if T.S is not None else None
            if S is not None:
                S.support = _endo_support(T.S.support, d)
            dd = d

            def phi(u, v):
                return jnp.log(1.0 + abs2(u) ** dd + abs2(v) ** dd) - dd * jnp.log(1.0 + abs2(u) + abs2(v))

            shift = AnalyticScalarField(phi, "phi_f", real=True) * (T.c / TWO_PI / d)
            h = shift if T.h is None else T.h.compose(F) * (1.0 / d) + shift
            sm = _pull_smooth(T.smooth, F).scale(1.0 / d) if T.smooth is not None else None
            return Potential(T.c, S, h, f"f^*{T.name}/{d}", sm)
        raise TypeError("pushforward supports Smooth and Potential")
    raise ValueError(kind)


def _endo_support(sup, d):
    if isinstance(sup, Region) and sup.kind == "bidisc":
        R = sup.radius if isinstance(sup.radius, tuple) else (sup.radius, sup.radius)
        return Region("bidisc", radius=(R[0] ** (1.0 / d), R[1] ** (1.0 / d)))
    return P2


def shear_matrix(eps: complex) -> np.ndarray:
    """``[z : w : t] -> [z : w + eps z : t]``."""
    return np.array([[1, 0, 0], [eps, 1, 0], [0, 0, 1]], dtype=complex)


def random_unitaries(n: int, delta: float, seed: int = 42) -> list[np.ndarray]:
    """``exp(i X)`` with ``X`` Hermitian uniform in the ``delta``-ball of the Lie algebra."""
    from scipy.linalg import expm

    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        X = 0.5 * (A + A.conj().T)
        X -= np.trace(X) / 3 * np.eye(3)
        X /= np.linalg.norm(X)
        X *= delta * rng.random() ** (1.0 / 8.0)  # uniform in the 8-dimensional ball
        out.append(expm(1j * X))
    return out


def regularize(T: CurrentRep, n: int = 64, delta: float = 0.05, seed: int = 42) -> Smooth:
    """Average of ``g_* T`` over ``n`` unitaries near the identity."""
    if isinstance(T, Potential):
        if T.smooth is None:
            raise TypeError("regularize needs a pointwise form")
        base = T.smooth
    elif isinstance(T, Smooth):
        base = T.T
    else:
        raise TypeError("regularize supports Smooth and Potential")
    maps = [_inverse_matrix_map(U) for U in random_unitaries(n, delta, seed)]
    pulled = [_pull_smooth(base, F) for F in maps]

    def H(P):
        acc = np.zeros((len(P), 2, 2), dtype=complex)
        for f in pulled:
            acc += f.H(P)
        return acc / n

    return Smooth(Form11(H, f"reg[{getattr(T, 'name', '')}]", base.positive), P2, f"reg[{getattr(T, 'name', '')}]")


def fubini(c: float = 1.0) -> Potential:
    """``c omega_unit`` as a Potential current (``S = 0``, ``h = 0``)."""
    return Potential(c, None, None, "fubini", OMEGA_UNIT.scale(c))
