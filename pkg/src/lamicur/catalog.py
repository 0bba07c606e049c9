"""Explicit currents, functions and holomorphic motions with closed-form decompositions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

import jax
import jax.numpy as jnp

from .currents import Potential, Smooth, fubini, positivity_certificate, default_grid
from .geometry import (
    abs2,
    OMEGA_UNIT,
    TWO_PI,
    AnalyticScalarField,
    Form01,
    Form11,
    MappedBox,
    Region,
    UNIT_BIDISC,
)
from .quadrature import QuadratureSpec, gauss_legendre, integrate_1d, integrate_box

# ---------------------------------------------------------------------------
# bump profiles

_PROFILE_JIT: dict = {}


@dataclass(frozen=True)
class BumpProfile:
    """Smooth profile supported in ``(lo, hi)``: ``a exp(-1/(t(1-t)))`` with ``t = (s-lo)/(hi-lo)``.

    ``fn`` is jax-traceable; ``value`` and ``deriv`` are vectorised numpy
    evaluations (the derivative is exact, by automatic differentiation).
    """

    amplitude: float = 1.0
    lo: float = 0.0
    hi: float = 1.0

    def fn(self, s):
        t = (s - self.lo) / (self.hi - self.lo)
        inside = (t > 0.0) & (t < 1.0)
        tt = jnp.where(inside, t, 0.5)
        return jnp.where(inside, self.amplitude * jnp.exp(-1.0 / (tt * (1.0 - tt))), 0.0)

    def dfn(self, s):
        return jax.grad(lambda x: self.fn(x))(s)

    def _jitted(self, which):
        cache = _PROFILE_JIT.setdefault((self.amplitude, self.lo, self.hi), {})
        if which not in cache:
            cache[which] = jax.jit(jax.vmap(self.fn if which == 0 else self.dfn))
        return cache[which]

    def value(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.asarray(self._jitted(0)(jnp.asarray(s.ravel()))).reshape(s.shape)

    def deriv(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.asarray(self._jitted(1)(jnp.asarray(s.ravel()))).reshape(s.shape)

    def second_deriv(self, s) -> np.ndarray:
        d2 = jax.grad(self.dfn)
        return np.asarray(jax.vmap(d2)(jnp.asarray(np.atleast_1d(s), dtype=float)))

    def fd_mismatch(self, n: int = 50, h: float = 1e-5, seed: int = 0) -> float:
        s = np.random.default_rng(seed).uniform(self.lo, self.hi, n)
        fd = (self.value(s + h) - self.value(s - h)) / (2 * h)
        return float(np.abs(fd - self.deriv(s)).max() / max(1.0, np.abs(self.deriv(s)).max()))


# ---------------------------------------------------------------------------
# radial log potentials


class RadialLogPotential:
    """``U(z) = 4 int_0^1 rho f(rho) log max(|z|, rho) d rho`` with ``f(rho) = u'(rho^2)^2 rho^2``.

    This is the logarithmic potential ``(2/pi) int log|z - x| F(x) dlambda``
    of the radial density ``F(x) = u'(|x|^2)^2 |x|^2`` after taking the
    circular average of ``log|z - x|`` (which equals ``log max(|z|, |x|)``).
    ``i ddbar U = F i dz ^ dzbar`` and ``U = A log|z|`` for ``|z| >= 1``.
    """

    def __init__(self, profile: BumpProfile, n: int = 48, n_cheb: int = 160):
        self.profile = profile
        self.x, self.w = gauss_legendre(n, 0.0, 1.0)
        self.A = self.total()
        # U is smooth in |z| on [0, 1]; a Chebyshev interpolant of the
        # Gauss evaluation makes repeated calls cheap
        self._cheb = np.polynomial.chebyshev.Chebyshev.interpolate(lambda r: self.gauss(r), n_cheb, domain=[0.0, 1.0])

    def _f(self, rho):
        return self.profile.deriv(rho**2) ** 2 * rho**2

    def total(self) -> float:
        """``A = 4 int_0^1 rho^3 u'(rho^2)^2 d rho = 2 int_0^1 s u'(s)^2 ds``."""
        r = integrate_1d(lambda s: 2.0 * s * self.profile.deriv(s) ** 2, 0.0, 1.0, QuadratureSpec(rel_tol=1e-12, abs_tol=1e-15))
        return float(r.value)

    def __call__(self, modulus) -> np.ndarray:
        m = np.abs(np.asarray(modulus, dtype=float))
        inside = m <= 1.0
        with np.errstate(divide="ignore"):
            return np.where(inside, self._cheb(np.minimum(m, 1.0)), self.A * np.log(np.where(inside, 1.0, m)))

    def gauss(self, modulus) -> np.ndarray:
        """Panel Gauss evaluation of the split radial integrals."""
        a = np.minimum(np.abs(np.asarray(modulus, dtype=float)), 1.0)
        flat = a.ravel()
        out = np.empty_like(flat)
        # split both integrals at |z| on two Gauss panels each
        inner = np.zeros_like(flat)
        outer = np.zeros_like(flat)
        for lo_frac, hi_frac in ((0.0, 0.5), (0.5, 1.0)):
            # int_0^a rho f(rho) d rho
            lo = lo_frac * flat
            hi = hi_frac * flat
            rho = lo[:, None] + (hi - lo)[:, None] * self.x[None, :]
            inner += np.sum(self.w[None, :] * rho * self._f(rho.ravel()).reshape(rho.shape), axis=1) * (hi - lo)
            # int_a^1 rho f(rho) log rho d rho
            lo = flat + lo_frac * (1.0 - flat)
            hi = flat + hi_frac * (1.0 - flat)
            rho = lo[:, None] + (hi - lo)[:, None] * self.x[None, :]
            outer += np.sum(self.w[None, :] * rho * np.log(rho) * self._f(rho.ravel()).reshape(rho.shape), axis=1) * (hi - lo)
        with np.errstate(divide="ignore"):
            out = 4.0 * (inner * np.log(np.where(flat > 0, flat, 1.0)) + outer)
        out = out.reshape(a.shape)
        m = np.abs(np.asarray(modulus, dtype=float))
        big = m > 1.0
        if np.any(big):
            out = np.where(big, self.A * np.log(np.where(big, m, 1.0)), out)
        return out

    def direct(self, z: complex, q: QuadratureSpec | None = None) -> float:
        """Independent 2D evaluation ``(2/pi) int log|z - x| F(x) dlambda`` with polar refinement about ``z``."""
        q = q or QuadratureSpec(rel_tol=1e-10, abs_tol=1e-13)
        z = complex(z)

        def g(X):
            s, phi = X[:, 0], X[:, 1]
            # polar about z out to radius 1 + |z| (covers the unit disc)
            R = 1.0 + abs(z)
            r = R * s**2
            x = z + r * np.exp(1j * phi)
            F = self.profile.deriv(np.abs(x) ** 2) ** 2 * np.abs(x) ** 2
            return (2.0 / np.pi) * np.log(np.where(r > 0, r, 1.0)) * F * r * 2 * R * s

        return float(integrate_box(g, [0.0, 0.0], [1.0, TWO_PI], q, initial_splits=(4, 4)).value)


class NumericField:
    """Scalar field evaluated by numpy (no derivatives); used for potentials that are only paired."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], name: str = "h", singular_points=(), homogeneous_poles=()):
        self.fn = fn
        self.name = name
        self.singular_points = list(singular_points)
        self.homogeneous_poles = list(homogeneous_poles)

    def __call__(self, P) -> np.ndarray:
        return self.fn(np.atleast_2d(P))

    def compose(self, F, singular_points=None) -> "NumericField":
        """``h o F``.  Singular data is carried over unchanged unless given
        (exact for the coordinate power maps, which fix the origin and the
        points at infinity)."""
        fn = self.fn
        sp = self.singular_points if singular_points is None else list(singular_points)
        return NumericField(lambda P: fn(np.asarray(F(P))), f"{self.name}o{F.name}", sp, self.homogeneous_poles)

    def __mul__(self, c) -> "NumericField":
        fn = self.fn
        return NumericField(lambda P: c * fn(P), f"{c}*{self.name}", self.singular_points, self.homogeneous_poles)

    __rmul__ = __mul__

    def __add__(self, other) -> "NumericField":
        fn = self.fn
        sp = self.singular_points + list(getattr(other, "singular_points", []))
        return NumericField(lambda P: fn(P) + np.real(np.asarray(other(P))), f"{self.name}+{other.name}", sp,
                            self.homogeneous_poles)


# ---------------------------------------------------------------------------
# product current


@dataclass
class ProductCurrent:
    smooth: Smooth
    potential: Potential
    A: float
    B: float
    U: RadialLogPotential
    V: RadialLogPotential

    @property
    def c_raw(self) -> float:
        return 0.5 * (self.A + self.B)


def product_current(u: BumpProfile | None = None, v: BumpProfile | None = None) -> ProductCurrent:
    """``T = i d psi ^ dbar psibar`` for ``psi = u(|z|^2) + i v(|w|^2)``.

    The Potential representation is ``c = pi (A + B)`` (unit mass),
    ``S = u(|z|^2) v'(|w|^2) w dwbar`` and
    ``h = U(z) + V(w) - (A+B)/2 log(1 + |z|^2 + |w|^2)`` with poles at
    ``[1:0:0]`` and ``[0:1:0]``.
    """
    u = u or BumpProfile()
    v = v or u
    U = RadialLogPotential(u)
    V = RadialLogPotential(v)
    A, B = U.A, V.A
    c_raw = 0.5 * (A + B)

    def a_vec(P):
        z, w = P[:, 0], P[:, 1]
        return np.stack([u.deriv(np.abs(z) ** 2) * np.conj(z), 1j * v.deriv(np.abs(w) ** 2) * np.conj(w)], axis=1)

    def H(P):
        a = a_vec(np.atleast_2d(P))
        return np.einsum("nj,nk->njk", a, np.conj(a))

    Tform = Form11(H, "i dpsi^dbar psibar", positive=True)
    b = AnalyticScalarField(lambda zz, ww: u.fn(abs2(zz)) * v.dfn(abs2(ww)) * ww, "u v' w")
    S = Form01(None, b, "u v' w dwbar", support=UNIT_BIDISC)

    def h(P):
        return U(np.abs(P[:, 0])) + V(np.abs(P[:, 1])) - c_raw * np.log(1.0 + np.sum(np.abs(P) ** 2, axis=1))

    hf = NumericField(h, "h_product", homogeneous_poles=[(1, 0, 0), (0, 1, 0)])
    pot = Potential(TWO_PI * c_raw, S, hf, "product", Tform, meta={"A": A, "B": B, "c_raw": c_raw})
    return ProductCurrent(Smooth(Tform, name="product"), pot, A, B, U, V)


# ---------------------------------------------------------------------------
# perturbed Fubini-Study


def radial_bidisc_S(amplitude: float = 1.0, kind: str = "dz") -> Form01:
    """The preset ``S = a(|z|, |w|) dzbar`` with ``a = chi(|z|^2) chi(|w|^2)`` supported in the unit bidisc."""
    chi = BumpProfile(1.0, -1.0, 1.0)
    a = AnalyticScalarField(lambda z, w: amplitude * chi.fn(abs2(z)) * chi.fn(abs2(w)) + 0j, "a(|z|,|w|)")
    if kind == "dz":
        return Form01(a, None, "a dzbar", support=UNIT_BIDISC)
    return Form01(None, a, "a dwbar", support=UNIT_BIDISC)


def positivity_threshold(S: Form01, grid=None, tol: float = 1e-3, eps_max: float = 10.0) -> float:
    """Largest ``eps`` with ``omega_unit + eps (dS + dbar Sbar)`` PSD on the grid (bisection)."""
    grid = default_grid() if grid is None else grid
    Hw = OMEGA_UNIT.H(grid)
    Hs = S.sym_form().H(grid)

    def ok(eps):
        M = Hw + eps * Hs
        M = 0.5 * (M + np.conj(np.swapaxes(M, 1, 2)))
        return np.linalg.eigvalsh(M)[:, 0].min() >= 0.0

    lo, hi = 0.0, eps_max
    if ok(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def perturbed_fubini(S: Form01 | None = None, eps: float = 0.1, grid=None, check: bool = True) -> Potential:
    """``T = omega_unit + eps (dS + dbar Sbar)`` as a Potential current."""
    S = S if S is not None else radial_bidisc_S()
    Se = S.scale(eps)
    Se.support = S.support
    sm = OMEGA_UNIT + Se.sym_form()
    T = Potential(1.0, Se, None, f"perturbed:eps={eps}", sm)
    if check:
        cert = positivity_certificate(T, grid)
        if not cert.certified:
            thr = positivity_threshold(S, grid)
            T.meta["positivity_failure"] = {"min_eigenvalue": cert.min_eigenvalue, "threshold": thr}
    return T


# ---------------------------------------------------------------------------
# Example 2.4: the linear foliation current


class LeafFamily:
    """Leaves ``z = e^{i theta} w^alpha``: ``Phi_theta(zeta) = (e^{i theta + alpha zeta}, e^zeta)``.

    ``T = (1/2) int_0^{2 pi} [L_theta] d theta`` so that
    ``<T, theta> = int d theta ds dt  Phi'^T H conj(Phi')``, ``zeta = s + i t``,
    ``t in [0, 2 pi)``.
    """

    def __init__(self, alpha: float):
        self.alpha = float(alpha)

    def point(self, th, zeta):
        return np.stack([np.exp(1j * th + self.alpha * zeta), np.exp(zeta)], axis=-1)

    def tangent(self, P):
        return np.stack([self.alpha * P[..., 0], P[..., 1]], axis=-1)

    def s_range(self, center, radius):
        cz, cw = abs(center[0]), abs(center[1])
        lo_w, hi_w = cw - radius, cw + radius
        lo_z, hi_z = cz - radius, cz + radius
        if lo_w <= 0 and lo_z <= 0:
            raise ValueError("test support contains the origin, where the leaves accumulate")
        cands_lo = []
        if lo_w > 0:
            cands_lo.append(np.log(lo_w))
        if lo_z > 0:
            cands_lo.append(np.log(lo_z) / self.alpha)
        return max(cands_lo), min(np.log(hi_w), np.log(hi_z) / self.alpha)

    def pair(self, Hfun, center, radius, q: QuadratureSpec | None = None):
        q = q or QuadratureSpec()
        s_lo, s_hi = self.s_range(center, radius)
        if s_hi <= s_lo:
            from .quadrature import IntegralResult

            return IntegralResult(0.0, 0.0, True, 0, 0)

        def f(X):
            th, s, t = X[:, 0], X[:, 1], X[:, 2]
            P = self.point(th, s + 1j * t)
            D = self.tangent(P)
            return np.einsum("nj,njk,nk->n", D, Hfun(P), np.conj(D))

        return integrate_box(f, [0.0, s_lo, 0.0], [TWO_PI, s_hi, TWO_PI], q, initial_splits=(2, 2, 2))

    def directedness_form(self):
        """``gamma = w dz - alpha z dw``, the (1,0)-form vanishing on the leaves."""
        a = self.alpha
        return lambda u, v: jnp.stack([v, -a * u])


def _kink_pieces(alpha: float):
    """Regions covering a test ball, split along ``|z| = |w|^alpha``."""

    def pieces(reg: Region):
        cz, cw = abs(reg.center[0]), abs(reg.center[1])
        R = float(reg.radius)
        r1lo, r1hi = max(cz - R, 0.0), cz + R
        r2lo, r2hi = max(cw - R, 0.0), cw + R
        # angular window of the ball's shadow in each coordinate plane
        w1 = np.arcsin(R / cz) if cz > R else np.pi
        w2 = np.arcsin(R / cw) if cw > R else np.pi
        a1, a2 = np.angle(reg.center[0]), np.angle(reg.center[1])
        out = []

        # |z| < |w|^alpha: r1 = r2^alpha s
        def pa(X):
            r2, s, p1, p2 = X.T
            r1 = r2**alpha * s
            P = np.stack([r1 * np.exp(1j * p1), r2 * np.exp(1j * p2)], 1)
            return P, r1 * r2**alpha * r2

        # |z| > |w|^alpha: r2 = r1^(1/alpha) s
        def pb(X):
            r1, s, p1, p2 = X.T
            r2 = r1 ** (1.0 / alpha) * s
            P = np.stack([r1 * np.exp(1j * p1), r2 * np.exp(1j * p2)], 1)
            return P, r1 * r2 * r1 ** (1.0 / alpha)

        s_hi_a = min(1.0, r1hi / max(r2lo, 1e-300) ** alpha) if r2lo > 0 else 1.0
        s_lo_a = r1lo / r2hi**alpha if r2hi > 0 else 0.0
        if s_lo_a < s_hi_a:
            out.append(MappedBox((r2lo, max(s_lo_a, 0.0), a1 - w1, a2 - w2), (r2hi, s_hi_a, a1 + w1, a2 + w2), pa, (1, 1, 1, 1)))
        s_hi_b = min(1.0, r2hi / max(r1lo, 1e-300) ** (1.0 / alpha)) if r1lo > 0 else 1.0
        s_lo_b = r2lo / r1hi ** (1.0 / alpha) if r1hi > 0 else 0.0
        if s_lo_b < s_hi_b:
            out.append(MappedBox((r1lo, max(s_lo_b, 0.0), a1 - w1, a2 - w2), (r1hi, s_hi_b, a1 + w1, a2 + w2), pb, (1, 1, 1, 1)))
        return out

    return pieces


def linear_foliation_current(alpha: float = 1.618) -> Potential:
    """Example 2.4 current ``T = i ddbar log max(|z|, |w|^alpha)`` in the t=1 chart.

    Potential data: ``c = pi alpha`` (unit mass), ``S = 0`` and
    ``h = log max(|z|, |w|^alpha) - (alpha/2) log(1 + |z|^2 + |w|^2)``.
    """
    alpha = float(alpha)
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    note = None
    if abs(alpha - round(alpha)) < 1e-12 or np.isclose(alpha * 1e6 % 1, 0):
        note = "alpha looks rational: leaves are closed curves and T is a sum of algebraic pieces"

    def h(P):
        z, w = np.abs(P[:, 0]), np.abs(P[:, 1])
        with np.errstate(divide="ignore"):
            m = np.maximum(np.log(z), alpha * np.log(w))
        return m - 0.5 * alpha * np.log(1.0 + z**2 + w**2)

    hf = NumericField(h, "h_linear", singular_points=[(0j, 0j)], homogeneous_poles=[(1, 0, 0)])
    T = Potential(np.pi * alpha, None, hf, f"example2.4:alpha={alpha}", None, _kink_pieces(alpha), LeafFamily(alpha),
                  meta={"alpha": alpha, "note": note})
    return T


# ---------------------------------------------------------------------------
# boundary slab currents


def boundary_slab_current(rho: AnalyticScalarField | None = None, chi: BumpProfile | None = None, eps: float = 0.1,
                          check: bool = True) -> Smooth:
    """``T_eps = i (1/eps) chi(rho/eps) d rho ^ dbar rho`` (smooth, positive).

    The working region is ``|z| < 1``, ``|Im w| < 1``, ``|rho| < eps``.
    """
    rho = rho or rho_rew()
    chi = chi or BumpProfile(1.0, -1.0, 1.0)
    # normalise chi to unit integral
    Z = float(integrate_1d(lambda s: chi.value(s), -1.0, 1.0, QuadratureSpec(rel_tol=1e-12)).value)

    def H(P):
        j = rho.jet(P)
        r = np.real(j["f"])
        d = j["d"]
        weight = chi.value(r / eps) / (Z * eps)
        return weight[:, None, None] * np.einsum("nj,nk->njk", d, np.conj(d))

    form = Form11(H, f"slab[{rho.name}]:eps={eps}", positive=True)
    T = Smooth(form, slab_region(rho, eps), f"slab:rho={rho.name}:eps={eps}")
    if check:
        P = np.random.default_rng(5).normal(size=(200, 2)) * 0.5 + 0j
        P[:, 1] = 1j * P[:, 1].real  # points on Re w = 0
        j = rho.jet(P)
        if np.abs(j["d"]).sum(axis=1).min() < 1e-8:
            raise ValueError("d rho vanishes on {rho = 0} in the working region")
    return T


def rho_rew() -> AnalyticScalarField:
    return AnalyticScalarField(lambda z, w: jnp.real(w) + 0j, "rew", real=True)


def rho_bent(k: float = 1.0) -> AnalyticScalarField:
    """``Re w + k (Re w)^2 |z|^2``: the Levi hypotheses hold only to the stated order on ``{rho = 0}``."""
    return AnalyticScalarField(lambda z, w: jnp.real(w) + k * jnp.real(w) ** 2 * abs2(z) + 0j, "bent", real=True)


def slab_region(rho: AnalyticScalarField, eps: float) -> MappedBox:
    """``|z| < 1``, ``|Im w| < 1``, ``|Re w| < 2 eps`` (covers the slab when ``rho ~ Re w``)."""
    a = 2.0 * eps

    def param(X):
        s, p1, x, y = X.T
        r = s**2
        P = np.stack([r * np.exp(1j * p1), x + 1j * y], 1)
        return P, r * 2 * s

    return MappedBox((0.0, 0.0, -a, -1.0), (1.0, TWO_PI, a, 1.0), param, (1, 2, 2, 1))


def slab_hypotheses(rho: AnalyticScalarField, n: int = 200, seed: int = 0) -> dict:
    """Sampled checks of ``(i ddbar rho)^2 = 0`` and ``i ddbar rho ^ d rho ^ dbar rho`` on ``{rho = 0}``."""
    rng = np.random.default_rng(seed)
    z = rng.uniform(-0.7, 0.7, n) + 1j * rng.uniform(-0.7, 0.7, n)
    w = 1j * rng.uniform(-0.9, 0.9, n)
    P = np.stack([z, w], 1)
    j = rho.jet(P)
    L = j["levi"]
    det = np.abs(np.linalg.det(L))
    d = j["d"]
    # i ddbar rho ^ i d rho ^ dbar rho density ~ levi paired with d d^*
    R = np.einsum("nj,nk->njk", d, np.conj(d))
    mixed = np.abs(L[:, 0, 0] * R[:, 1, 1] + L[:, 1, 1] * R[:, 0, 0] - L[:, 0, 1] * R[:, 1, 0] - L[:, 1, 0] * R[:, 0, 1])
    return {"max_det_levi": float(det.max()), "max_mixed": float(mixed.max())}


# ---------------------------------------------------------------------------
# degenerate Monge-Ampere examples


@dataclass
class DegenerateExample:
    name: str
    field: AnalyticScalarField
    sampler: Callable[[int, int], np.ndarray]
    period_check: Callable[[np.ndarray], float] | None = None
    control: bool = False

    def det_levi(self, n: int = 200, seed: int = 0) -> np.ndarray:
        P = self.sampler(n, seed)
        L = self.field.jet(P)["levi"]
        return np.real(np.linalg.det(L))

    def check(self, n: int = 200, seed: int = 0, tol: float = 1e-8) -> dict:
        d = self.det_levi(n, seed)
        out = {"name": self.name, "max_abs_det": float(np.abs(d).max()), "degenerate": bool(np.abs(d).max() < tol),
               "control": self.control}
        if self.period_check is not None:
            out["period_residual"] = float(self.period_check(self.sampler(n, seed + 1)))
        return out


def _annulus_sampler(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 4))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    r = np.sqrt(rng.uniform(0.25, 1.0, n))  # 1/2 <= |z| <= 1
    x *= r[:, None]
    return np.stack([x[:, 0] + 1j * x[:, 1], x[:, 2] + 1j * x[:, 3]], 1)


def hopf_example(r: float = 1.0, alpha1: complex = 0.5, alpha2: complex = 0.25) -> DegenerateExample:
    """``v = |z1|^2 / (|z1|^2 + |z2|^r)`` on the Hopf surface ``(C^2 - 0)/<(alpha1 z1, alpha2 z2)>``.

    ``v`` is a function of the pluriharmonic ``log|z1|^2 - r log|z2|``, so its
    Levi form has rank at most one for every ``r``.  Invariance under the
    generator holds iff ``|alpha1|^2 = |alpha2|^r``; it is measured, not assumed.
    """
    f = AnalyticScalarField(lambda z1, z2: abs2(z1) / (abs2(z1) + jnp.abs(z2) ** r) + 0j, f"hopf:r={r}", real=True)

    def period(P):
        Q = P * np.array([alpha1, alpha2])[None, :]
        return np.abs(f(Q) - f(P)).max()

    return DegenerateExample(f"hopf:r={r}", f, _annulus_sampler, period)


def torus_example(phi: Callable | None = None) -> DegenerateExample:
    """``v = phi(Re z1)`` on the torus ``C^2 / (Z + iZ)^2`` with ``phi`` 1-periodic."""
    phi = phi or (lambda x: jnp.sin(TWO_PI * x) + 0.3 * jnp.cos(4 * jnp.pi * x))
    f = AnalyticScalarField(lambda z1, z2: phi(jnp.real(z1)) + 0j, "torus", real=True)

    def sampler(n, seed):
        rng = np.random.default_rng(seed)
        return rng.uniform(0, 1, (n, 2)) + 1j * rng.uniform(0, 1, (n, 2))

    def period(P):
        return np.abs(f(P + 1.0) - f(P)).max()

    return DegenerateExample("torus", f, sampler, period)


def control_example() -> DegenerateExample:
    f = AnalyticScalarField(lambda z1, z2: abs2(z1) + abs2(z2) + 0j, "|z|^2", real=True)
    return DegenerateExample("control:|z|^2", f, _annulus_sampler, None, control=True)


def degenerate_ma_examples(r: float = 1.0) -> list[DegenerateExample]:
    return [torus_example(), hopf_example(r), control_example()]


# ---------------------------------------------------------------------------
# holomorphic motions


@dataclass
class HolMotionFamily:
    """``(alpha, z) -> f_alpha(z)``: holomorphic in ``z``, injective in ``alpha``, ``f_alpha(0) = alpha``.

    ``f`` and ``df`` (the ``z``-derivative) broadcast over numpy arrays.
    """

    kind: str
    f: Callable
    df: Callable
    params: dict = field(default_factory=dict)
    transversal_radius: float = 0.5
    plaque_radius: float = 1.0

    def __call__(self, alpha, z):
        return self.f(alpha, z)

    def cr_residual(self, alpha, n: int = 16, h: float = 1e-6) -> float:
        """``|df/dzbar|`` by central differences on a grid of the plaque (relative)."""
        r = np.linspace(0.1, 0.8, n) * self.plaque_radius
        z = (r[:, None] * np.exp(1j * np.linspace(0, TWO_PI, n, endpoint=False))[None, :]).ravel()
        fx = (self.f(alpha, z + h) - self.f(alpha, z - h)) / (2 * h)
        fy = (self.f(alpha, z + 1j * h) - self.f(alpha, z - 1j * h)) / (2 * h)
        dzbar = 0.5 * (fx + 1j * fy)
        return float(np.abs(dzbar).max() / max(1e-300, np.abs(self.f(alpha, z)).max()))

    def injectivity_violation(self, alphas, zs) -> float:
        """min over sampled pairs of ``|f_a(z) - f_b(z)| / |a - b|`` (0 means a collision)."""
        alphas = np.asarray(alphas)
        worst = np.inf
        for z in np.atleast_1d(zs):
            v = self.f(alphas, z)
            d = np.abs(v[:, None] - v[None, :])
            da = np.abs(alphas[:, None] - alphas[None, :])
            iu = np.triu_indices(len(alphas), 1)
            worst = min(worst, float((d[iu] / da[iu]).min()))
        return worst


def model_motion(kind: str = "affine-C1", **params) -> HolMotionFamily:
    """Model holomorphic motions.

    ``affine-C1``
        ``f_a(z) = a (1 + g(z))`` with ``g(z) = c z`` (default ``c = 1/10``).
    ``rotational``
        plaques of the linear foliation near ``(1, 1)``: in the coordinates
        ``x = 2 (w - 1)`` and ``y = z - (1 + x/2)^alpha`` the leaf through
        ``y = t`` at ``x = 0`` is ``y = t (1 + x/2)^alpha``.
    ``rough-Holder``
        ``f_t(z) = t |t|^(kappa z)`` (artifact-owned).  Holomorphic in ``z``;
        injective in ``t`` while ``1 + kappa Re z > 0``.  Near ``t = 0`` the
        transverse modulus of continuity is ``|t|^(1 + kappa Re z)``, which is
        Holder but not bi-Lipschitz uniformly in ``z``.
    """
    kind = kind.lower().replace("_", "-")
    if kind in ("affine-c1", "affine"):
        c = complex(params.get("c", 0.1))
        if abs(c) >= 1:
            raise ValueError("|c| < 1 keeps 1 + c z nonvanishing on the plaque")
        return HolMotionFamily("affine-C1", lambda a, z: a * (1 + c * z), lambda a, z: a * c + 0 * z, {"c": c})
    if kind == "rotational":
        al = float(params.get("alpha", 1.618))

        def f(t, z):
            return t * (1 + z / 2) ** al

        def df(t, z):
            return t * al / 2 * (1 + z / 2) ** (al - 1)

        return HolMotionFamily("rotational", f, df, {"alpha": al}, transversal_radius=0.5)
    if kind in ("rough-holder", "rough-hölder", "rough"):
        kappa = float(params.get("kappa", 0.5))
        R = float(params.get("plaque_radius", 1.0))
        if kappa * R >= 1:
            raise ValueError("kappa * plaque_radius < 1 is needed for injectivity")

        def f(t, z):
            t = np.asarray(t, dtype=complex)
            m = np.abs(t)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = t * np.exp(kappa * z * np.log(np.where(m > 0, m, 1.0)))
            return np.where(m > 0, out, 0.0)

        def df(t, z):
            t = np.asarray(t, dtype=complex)
            m = np.abs(t)
            lg = np.log(np.where(m > 0, m, 1.0))
            return np.where(m > 0, kappa * lg * t * np.exp(kappa * z * lg), 0.0)

        return HolMotionFamily("rough-Holder", f, df, {"kappa": kappa}, transversal_radius=0.5, plaque_radius=R)
    if kind == "trivial":
        return HolMotionFamily("trivial", lambda a, z: a + 0 * z, lambda a, z: 0 * a + 0 * z)
    raise ValueError(f"unknown motion kind {kind!r}")


# ---------------------------------------------------------------------------
# string ids


def _parse(id_: str):
    name, _, rest = id_.partition(":")
    params = {}
    if rest:
        for kv in rest.split(","):
            k, _, v = kv.partition("=")
            params[k.strip()] = v.strip()
    return name.strip().lower(), params


def resolve(id_: str):
    """Catalog entry from a string id such as ``product:u=v`` or ``example2.4:alpha=1.618``."""
    name, p = _parse(id_)
    if name in ("fubini", "omega"):
        return fubini(float(p.get("c", 1.0)))
    if name == "product":
        amp_u = float(p.get("au", 1.0))
        amp_v = amp_u if p.get("u") == "v" or "av" not in p else float(p["av"])
        return product_current(BumpProfile(amp_u), BumpProfile(amp_v)).potential
    if name in ("example2.4", "linear"):
        return linear_foliation_current(float(p.get("alpha", 1.618)))
    if name == "perturbed":
        return perturbed_fubini(radial_bidisc_S(), float(p.get("eps", 0.1)))
    if name == "slab":
        rho = {"rew": rho_rew, "bent": rho_bent}[p.get("rho", "rew")]()
        return boundary_slab_current(rho, eps=float(p.get("eps", 0.1)))
    raise KeyError(f"unknown catalog id {id_!r}")


CATALOG_IDS = ["fubini", "product:u=v", "perturbed:eps=0.1", "perturbed:eps=0.2", "example2.4:alpha=1.618",
               "slab:rho=rew,eps=0.1"]
