"""Weighted disc pushforwards and the hyperbolicity estimates for leaves.

For a holomorphic disc ``Phi`` the current ``T_r = Phi_*(G_r [disc])`` with
``G_r(x) = log+(r/|x|) / 2 pi`` satisfies ``dd^c T_r = Phi_*(nu_r) - delta_p``
where ``nu_r`` is normalized arc length on ``|x| = r`` and ``p = Phi(0)``.
Throughout ``dd^c = 2 i ddbar``, the normalization under which the identity
carries no extra factor:

    <T_r, 2 i ddbar f> = (1/2 pi) int f(Phi(r e^{i phi})) d phi - f(p).

Leaf uniformizations come in closed form (half-plane and strip sub-leaves of
the linear foliation, flat graphs and the line).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

import jax
import jax.numpy as jnp

from .currents import (
    DiscPush,
    TestForm,
    TestFunction,
    _pairs,
    bump_fn,
    constant_times_bump,
    disc_pairing,
    graded_edges,
    integrate_pieces,
    log_weighted_integral,
)
from .geometry import TWO_PI, AnalyticScalarField, fs_raw_H
from .quadrature import IntegralResult, QuadratureSpec, integrate_1d

DDC = 2.0  # dd^c = DDC * i ddbar


class DiscMap:
    """Holomorphic map of the unit disc into the t=1 chart.

    Parameters
    ----------
    fn : callable
        jax-traceable ``x -> (z, w)`` for a complex scalar ``x``.
    name : str
    r_max : float
        radius up to which ``fn`` is trusted (finite, continuous).
    leaf : str, optional
        id of the source leaf.
    plaque : callable, optional
        jax-traceable plaque coordinate ``x -> complex``; the plaque is the
        component of ``{|coord(Phi(x))| < 1}`` through ``x = 0``.  Used by
        :func:`hyperbolicity_radii`.
    """

    def __init__(self, fn: Callable, name: str, r_max: float = 1.0 - 1e-9, leaf: str | None = None,
                 plaque: Callable | None = None, log_hom: Callable | None = None, hot_angles=()):
        if not 0 < r_max <= 1:
            raise ValueError("r_max must lie in (0, 1]")
        self.fn = fn
        self.name = name
        self.r_max = float(r_max)
        self.leaf = leaf
        self.plaque = plaque
        self.log_hom = log_hom
        self.hot_angles = tuple(hot_angles)
        if log_hom is not None:
            self._lh = jax.jit(jax.vmap(lambda x: jax.jvp(lambda y: jnp.asarray(log_hom(y), dtype=jnp.complex128),
                                                          (x,), (jnp.ones_like(x),))))
        f = lambda x: jnp.asarray(fn(x), dtype=jnp.complex128)  # noqa: E731
        self._f = jax.jit(jax.vmap(f))
        self._jvp = jax.jit(jax.vmap(lambda x, t: jax.jvp(f, (x,), (t,))[1]))

    def _arr(self, x):
        return jnp.asarray(np.atleast_1d(np.asarray(x, dtype=complex)))

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self._f(self._arr(x)))

    def derivative(self, x) -> np.ndarray:
        x = self._arr(x)
        return np.asarray(self._jvp(x, jnp.ones_like(x)))

    @property
    def base_point(self) -> np.ndarray:
        return self(0.0)[0]

    def cr_residual(self, n: int = 400, seed: int = 0) -> float:
        """Relative Cauchy-Riemann residual ``|d_y Phi - i d_x Phi|`` on a random grid."""
        rng = np.random.default_rng(seed)
        x = self.r_max * np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n)) * 0.999
        xa = self._arr(x)
        dx = np.asarray(self._jvp(xa, jnp.ones_like(xa)))
        dy = np.asarray(self._jvp(xa, 1j * jnp.ones_like(xa)))
        return float(np.max(np.abs(dy - 1j * dx) / np.maximum(1.0, np.abs(dx))))

    def rescale(self, lam: float) -> "DiscMap":
        """``x -> Phi(lam x)``."""
        fn, pl = self.fn, self.plaque
        lh = self.log_hom
        return DiscMap(lambda x: fn(lam * x), f"{self.name}(x*{lam})", min(1.0 - 1e-9, self.r_max / lam),
                       self.leaf, plaque=pl, log_hom=None if lh is None else (lambda x: lh(lam * x)),
                       hot_angles=self.hot_angles)

    def angle_edges(self, r: float) -> np.ndarray | None:
        """Initial angular cuts for integrals over ``|x| < r``: graded toward ``hot_angles``.

        Boundary points where the image runs to infinity in the leaf produce
        features of angular width about ``(1 - r)^2``.
        """
        if not self.hot_angles:
            return None
        return graded_edges(self.hot_angles, 1e-3 * (1 - r) ** 2)

    def fs_density(self, x) -> np.ndarray:
        """``h = Phi'^T H conj(Phi')`` for the raw Fubini-Study form, ``Phi^* omega = i h dx ^ dxbar``.

        With homogeneous log-coordinates ``L`` available, ``Z = exp(L - max Re L)`` and
        ``h = |Z ^ Z'|^2 / |Z|^4`` stays finite where chart coordinates overflow.
        """
        if self.log_hom is None:
            P, D = self(x), self.derivative(x)
            return np.einsum("nj,njk,nk->n", D, fs_raw_H(P), np.conj(D)).real
        L, dL = (np.asarray(a) for a in self._lh(self._arr(x)))
        Z = np.exp(L - L.real.max(axis=1, keepdims=True))
        dZ = dL * Z
        n2 = np.sum(np.abs(Z) ** 2, axis=1)
        cross = np.sum(np.abs(dZ) ** 2, axis=1) * n2 - np.abs(np.sum(np.conj(Z) * dZ, axis=1)) ** 2
        return np.maximum(cross, 0.0) / n2**2

    def fs_speed(self, x) -> np.ndarray:
        """Fubini-Study length density ``sqrt(2 h)`` (raw normalization)."""
        return np.sqrt(2.0 * np.maximum(self.fs_density(x), 0.0))


# ---------------------------------------------------------------------------
# catalog maps


def line_map() -> DiscMap:
    """``x -> (x, 0)``."""
    return DiscMap(lambda x: jnp.stack([x, 0.0 * x]), "line", leaf="w=0",
                   plaque=lambda P: P[0])


def flat_map(lam: float = 2.0, coeffs: Sequence[complex] = (0.0, 0.1, 0.05), w0: complex = 0.0) -> DiscMap:
    """``x -> (lam x, g(lam x))`` with ``g(z) = w0 + sum c_k z^{k+1}``; plaque ``|z| < 1``."""
    cs = [complex(c) for c in coeffs]

    def g(z):
        return w0 + sum(c * z ** (k + 1) for k, c in enumerate(cs))

    return DiscMap(lambda x: jnp.stack([lam * x, g(lam * x)]), f"flat:lam={lam}", leaf="graph",
                   plaque=lambda P: P[0])


def _leaf_point(alpha, theta0, zeta):
    return jnp.stack([jnp.exp(1j * theta0 + alpha * zeta), jnp.exp(zeta)])


def _leaf_log(alpha, theta0, zeta):
    return jnp.stack([1j * theta0 + alpha * zeta, zeta, 0.0 * zeta])


def half_plane_map(alpha: float = 1.618, theta0: float = 0.3, kappa: float = 0.02) -> DiscMap:
    """Sub-leaf ``{Im zeta > 0}`` of ``z = e^{i theta0} w^alpha``, ``w = e^zeta``.

    ``zeta(x) = i kappa (1 + x) / (1 - x)``; the half-plane is hyperbolic and
    its image wraps infinitely often, so ``A(r)`` diverges.
    """
    def zeta(x):
        return 1j * kappa * (1 + x) / (1 - x)

    return DiscMap(lambda x: _leaf_point(alpha, theta0, zeta(x)), f"half-plane:alpha={alpha},kappa={kappa}",
                   leaf=f"linear:alpha={alpha}", log_hom=lambda x: _leaf_log(alpha, theta0, zeta(x)),
                   hot_angles=(0.0,))


def strip_map(alpha: float = 1.618, theta0: float = 0.3, a: float = 1.0, zeta_c: complex = 0.0,
              rho: float = 0.4) -> DiscMap:
    """Sub-leaf ``{|Re(zeta - zeta_c)| < a}`` uniformized by ``zeta = zeta_c - i (4a/pi) artanh(x)``.

    The plaque is ``{|zeta - zeta_c| < rho}`` with coordinate ``(zeta - zeta_c)/rho``.
    """
    k = 4.0 * a / np.pi

    def zeta(x):
        return zeta_c - 1j * k * jnp.arctanh(x)

    def fn(x):
        return _leaf_point(alpha, theta0, zeta(x))

    def plaque(P):
        # zeta recovered from w on the branch near zeta_c
        return (jnp.log(P[1] * jnp.exp(-zeta_c)) / rho)

    m = DiscMap(fn, f"strip:alpha={alpha},a={a},zc={zeta_c}", leaf=f"linear:alpha={alpha}", plaque=plaque,
                log_hom=lambda x: _leaf_log(alpha, theta0, zeta(x)), hot_angles=(0.0, np.pi))
    m.strip = {"a": a, "zeta": zeta, "zeta_c": zeta_c}
    return m


def catalog_maps() -> dict[str, DiscMap]:
    return {"line": line_map(), "flat": flat_map(), "half-plane": half_plane_map(), "strip": strip_map()}


# ---------------------------------------------------------------------------
# pushforwards and the defect identity


def disc_push(Phi: DiscMap, r: float) -> DiscPush:
    """``T_r = Phi_*(G_r [disc])``; rejects ``r`` outside ``(0, r_max)``."""
    return DiscPush(Phi, r, name=f"T_r[{Phi.name}, r={r}]")


def mass(Phi: DiscMap, r: float, q: QuadratureSpec | None = None) -> IntegralResult:
    """``A(r) = <T_r, omega_unit>``, through the overflow-safe pullback density."""
    return log_weighted_integral(lambda x: 2.0 * Phi.fs_density(x) / TWO_PI, r, q, getattr(Phi, "angle_edges", None))


def circle_average(f: AnalyticScalarField, Phi: DiscMap, r: float, q: QuadratureSpec | None = None) -> IntegralResult:
    """``(1/2 pi) int f(Phi(r e^{i phi})) d phi``."""
    q = q or QuadratureSpec()

    def g(phi):
        return np.real(np.asarray(f(Phi(r * np.exp(1j * phi))))) / TWO_PI

    return integrate_1d(g, 0.0, TWO_PI, q, breakpoints=np.linspace(0, TWO_PI, 9)[1:-1])


def defect_identity(Phi: DiscMap, r: float, f: TestFunction, q: QuadratureSpec | None = None) -> dict:
    """Both sides of ``<T_r, dd^c f> = circle average - f(p)``."""
    q = q or QuadratureSpec()
    lhs = disc_pairing(Phi, r, f.ddbar_form(DDC).H, q)
    avg = circle_average(f.field, Phi, r, q)
    base = float(np.real(f.field(Phi(0.0))[0]))
    rhs = float(avg.value) - base
    return {"lhs": float(np.real(lhs.value)), "rhs": rhs, "residual": abs(float(np.real(lhs.value)) - rhs),
            "error": float(lhs.error) + float(avg.error), "converged": bool(lhs.converged and avg.converged)}


def image_battery(Phi: DiscMap, n: int = 10, seed: int = 0, r_range=(0.1, 0.85), radii=(0.3, 0.6),
                  poly: bool = True) -> list[TestFunction]:
    """Bumps centred near sampled image points of ``Phi`` so that pairings are nontrivial.

    Every third function is a bump times a real quadratic, the rest plain bumps.
    """
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        x = rng.uniform(*r_range) * np.exp(2j * np.pi * rng.random())
        p = Phi(x)[0] + 0.1 * (rng.normal(size=2) + 1j * rng.normal(size=2))
        c = (complex(p[0]), complex(p[1]))
        R = rng.uniform(*radii)
        b = bump_fn(c, R)
        if poly and k % 3 == 2:
            co = rng.normal(size=4)

            def fn(u, v, b=b, co=co):
                return b(u, v) * (co[0] + co[1] * jnp.real(u) + co[2] * jnp.imag(v) + co[3] * jnp.real(u * jnp.conj(v)))

            name = f"polybump{k}"
        else:
            fn, name = b, f"bump{k}"
        out.append(TestFunction(AnalyticScalarField(fn, name, real=True), c, R, name))
    return out


def normalized_defect(Phi: DiscMap, r: float, battery: Sequence[TestFunction], A: float | None = None,
                      q: QuadratureSpec | None = None) -> float:
    """``max |<T_r / A(r), dd^c f>| / ||f||_C2`` over the battery."""
    q = q or QuadratureSpec()
    A = float(np.real(mass(Phi, r, q).value)) if A is None else A
    vals = [abs(np.real(disc_pairing(Phi, r, f.ddbar_form(DDC).H, q).value)) / f.c2_proxy() for f in battery]
    return float(max(vals)) / A


# ---------------------------------------------------------------------------
# exhaustion


def default_schedule(r_max: float = 1.0, k_max: int = 10) -> list[float]:
    return [1 - 2.0**-k for k in range(1, k_max + 1) if 1 - 2.0**-k < r_max]


def boundary_length(Phi: DiscMap, r: float, q: QuadratureSpec | None = None) -> IntegralResult:
    """Fubini-Study length of ``Phi(|x| = r)``."""
    edges = Phi.angle_edges(r)
    bp = np.linspace(0, TWO_PI, 17)[1:-1] if edges is None else edges[1:-1]
    return integrate_1d(lambda phi: Phi.fs_speed(r * np.exp(1j * phi)) * r, 0.0, TWO_PI, q, breakpoints=bp)


@dataclass
class ExhaustionProfile:
    name: str
    radii: list
    A: list
    lengths: list
    pairings: list  # one row per radius
    defects: list
    cauchy: float
    divergent: bool
    growth_exponent: float
    converged: bool = True
    extra: dict = field(default_factory=dict)

    @property
    def normalized(self) -> np.ndarray:
        return np.asarray(self.pairings) / np.asarray(self.A)[:, None]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = len(self.pairings[0]) if self.pairings else 0
        w.writerow(["r", "A", "ell"] + [f"pairing_{i + 1}" for i in range(n)] + ["defect"])
        for r, A, ell, row, d in zip(self.radii, self.A, self.lengths, self.pairings, self.defects):
            w.writerow([repr(float(r)), repr(float(A)), repr(float(ell))] + [repr(float(v)) for v in row] + [repr(float(d))])
        return buf.getvalue()


def exhaustion(Phi: DiscMap, radii: Sequence[float] | None = None, forms: Sequence[TestForm] | None = None,
               functions: Sequence[TestFunction] | None = None, q: QuadratureSpec | None = None) -> ExhaustionProfile:
    """Masses, normalized pairings and defects of ``T_r`` along a radius schedule.

    ``divergent`` is set when, over the last three radii, ``A`` still grows
    by more than 2% of its value per unit of ``log(1/(1-r))``; bounded discs
    have ``A(1) - A(r) = O(1-r)``, so their slope is ``O(1-r)`` and falls
    below this once the schedule approaches the boundary.  The fitted
    power of ``A`` against ``1/(1-r)`` is reported as ``growth_exponent``.
    """
    q = q or QuadratureSpec()
    radii = list(default_schedule(Phi.r_max) if radii is None else radii)
    if any(not 0 < r < Phi.r_max for r in radii):
        raise ValueError("schedule must lie in (0, r_max)")
    radii = sorted(radii)
    if forms is None:
        forms = [f.ddbar_form(1.0) for f in image_battery(Phi, 4, seed=11, poly=False)]
        forms = [constant_times_bump(np.array([[1.0, 0.2j], [-0.2j, 0.5]]), f.center, f.radius, f"fK{i}")
                 for i, f in enumerate(forms)]
    functions = image_battery(Phi, 5, seed=12) if functions is None else functions
    A, L, rows, D = [], [], [], []
    ok = True
    for r in radii:
        m = mass(Phi, r, q)
        a = float(np.real(m.value))
        A.append(a)
        L.append(float(boundary_length(Phi, r, q).value))
        row = []
        for th in forms:
            p = disc_pairing(Phi, r, th.H, q)
            ok &= bool(p.converged)
            row.append(float(np.real(p.value)))
        rows.append(row)
        D.append(normalized_defect(Phi, r, functions, a, q))
        ok &= bool(m.converged)
    P = np.asarray(rows) / np.asarray(A)[:, None]
    last = P[-3:]
    cauchy = float(max(np.abs(last[i] - last[j]).max() for i in range(len(last)) for j in range(i + 1, len(last)))) \
        if len(last) > 1 else 0.0
    logs = np.log(1.0 / (1.0 - np.asarray(radii)))
    expo = float(np.polyfit(logs, np.log(A), 1)[0]) if len(radii) > 1 else 0.0
    k = min(3, len(radii))
    slope = float(np.polyfit(logs[-k:], A[-k:], 1)[0]) if k > 1 else 0.0
    divergent = slope > 0.02 * A[-1]
    return ExhaustionProfile(Phi.name, radii, A, L, rows, D, cauchy, divergent, expo, ok,
                             extra={"log_slope": slope})


def cauchy_trend(Phi: DiscMap, radii: Sequence[float], **kw) -> list[float]:
    """Cauchy diagnostic recomputed on growing prefixes of the schedule (needs at least 3 radii)."""
    prof = exhaustion(Phi, radii, **kw)
    P = prof.normalized
    out = []
    for k in range(3, len(radii) + 1):
        last = P[k - 3:k]
        out.append(float(max(np.abs(last[i] - last[j]).max() for i in range(3) for j in range(i + 1, 3))))
    return out


# ---------------------------------------------------------------------------
# growth of leaf uniformizations


def growth_report(Phi: DiscMap, R: float = 2.0, k_max: int = 8, n_circle: int = 256,
                  arc: Callable | None = None, q: QuadratureSpec | None = None) -> dict:
    """Annular areas, boundary lengths, ``(1-|x|) |Phi'|`` samples and partial integrals.

    ``|Phi'|`` is the Fubini-Study speed.  ``arc`` optionally masks circle
    samples (``x -> bool``) to the part of the disc being compared.
    Partial integrals ``I(r_k) = int_{|x| < r_k} (1 - |x|) |Phi'|^2`` use
    ``r_k = 1 - R^{-k}``; ``plateau`` is set when the last increment is below
    1% of the total, ``increasing`` when every increment is positive.
    """
    q = q or QuadratureSpec()
    ks = [k for k in range(1, k_max + 2) if 1 - R ** (-k) < Phi.r_max]
    truncated = len(ks) < k_max + 1
    radii = [1 - R ** (-k) for k in ks]
    u = (np.arange(n_circle) + 0.5) / n_circle
    if arc is None:
        phis = TWO_PI * u
    else:
        # arcs of interest shrink toward the hot angles: sample densely there
        hot = Phi.hot_angles or (0.0,)
        phis = np.concatenate([a + s * np.pi * u**4 for a in hot for s in (1, -1)])
    bands, lengths = [], []
    for r in radii:
        x = r * np.exp(1j * phis)
        s = Phi.fs_speed(x) * (1 - r)
        if arc is not None:
            s = s[np.asarray([bool(arc(xx)) for xx in x])]
        bands.append((float(s.min()), float(s.max())) if len(s) else (np.nan, np.nan))
        lengths.append(float(boundary_length(Phi, r, q).value))

    def ring(r0, r1, weight):
        def f(X):
            rr, ph = X[:, 0], X[:, 1]
            sp = Phi.fs_speed(rr * np.exp(1j * ph))
            return weight(rr) * sp**2 * rr

        edges = Phi.angle_edges(r1)
        edges = np.linspace(0, TWO_PI, 9) if edges is None else edges
        return integrate_pieces(f, [([r0, a], [r1, b]) for a, b in _pairs(edges)], q)

    areas, partial = [], []
    total = 0.0
    edges = [0.0] + radii
    for r0, r1 in zip(edges[:-1], edges[1:]):
        areas.append(float(ring(r0, r1, lambda rr: 0.5 * np.ones_like(rr)).value))
        total += float(ring(r0, r1, lambda rr: 1 - rr).value)
        partial.append(total)
    inc = np.diff([0.0] + partial)
    slope = float(np.polyfit(np.arange(len(partial)), partial, 1)[0]) if len(partial) > 1 else 0.0
    band_lo = np.nanmin([b[0] for b in bands])
    band_hi = np.nanmax([b[1] for b in bands])
    return {
        "name": Phi.name,
        "radii": radii,
        "annulus_area": areas,
        "boundary_length": lengths,
        "band": bands,
        "band_ratio": float(band_hi / band_lo) if band_lo > 0 else np.inf,
        "partial_integrals": partial,
        "increments": inc.tolist(),
        "increasing": bool(np.all(inc > 0)),
        "plateau": bool(inc[-1] < 0.01 * partial[-1]),
        "trend_slope": slope,
        "truncated": truncated,
    }


# ---------------------------------------------------------------------------
# hyperbolicity radii


def hyperbolicity_radii(Phi: DiscMap, n_rays: int = 64, tol: float = 1e-6, n_scan: int = 400) -> dict:
    """``r_x`` and ``R_x`` of ``U_x = Phi^{-1}(plaque)`` by radial bisection.

    Along each ray the first exit from ``{|coord| < 1}`` is located on a scan
    grid and refined by bisection to ``tol``.  Also returns the derivative of
    the plaque coordinate at 0 for the Koebe comparison.
    """
    if Phi.plaque is None:
        raise ValueError(f"{Phi.name} has no plaque coordinate")
    coord = jax.jit(jax.vmap(lambda x: Phi.plaque(jnp.asarray(Phi.fn(x), dtype=jnp.complex128))))

    def inside(x):
        return np.abs(np.asarray(coord(jnp.asarray(np.atleast_1d(x).astype(complex))))) < 1.0

    if not inside(np.array([0j]))[0]:
        raise ValueError(f"{Phi.name}: Phi(0) is not in the plaque, cannot identify the preimage component")
    rmax = Phi.r_max * (1 - 1e-9)
    grid = np.linspace(0, rmax, n_scan + 1)[1:]
    exits = []
    unbounded = False
    for j in range(n_rays):
        e = np.exp(2j * np.pi * j / n_rays)
        ins = inside(grid * e)
        if ins.all():
            exits.append(rmax)
            unbounded = True
            continue
        k = int(np.argmin(ins))
        lo = grid[k - 1] if k > 0 else 0.0
        hi = grid[k]
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if inside(np.array([mid * e]))[0]:
                lo = mid
            else:
                hi = mid
        exits.append(0.5 * (lo + hi))
    exits = np.asarray(exits)
    d0 = jax.jvp(lambda x: Phi.plaque(jnp.asarray(Phi.fn(x), dtype=jnp.complex128)), (0j,), (1.0 + 0j,))[1]
    r_x, R_x = float(exits.min()), float(exits.max())
    dcoord = float(abs(d0))
    return {"r_x": r_x, "R_x": R_x, "exits": exits.tolist(), "unbounded": unbounded, "dcoord0": dcoord,
            "koebe": dcoord * 4 * r_x, "schwarz": dcoord * R_x}


def hyperbolicity_catalog() -> list[DiscMap]:
    """Center-point maps of the catalog flow boxes (plaques extending over ``|z| < 2``)."""
    maps = [flat_map(lam, coeffs, w0) for lam, coeffs, w0 in [
        (2.0, (0.0, 0.1, 0.05), 0.0), (2.0, (0.3, 0.0, 0.02), 0.2 + 0.1j), (3.0, (0.1j, 0.05), -0.3), (4.0, (0.0,), 0.5)]]
    maps += [strip_map(theta0=t, zeta_c=zc) for t, zc in [(0.3, 0.0), (1.1, 0.5j), (2.0, -0.2 + 1.3j)]]
    return maps
