"""Charts of P^2, analytic fields, (0,1)- and (1,1)-forms, Fubini-Study, wedge pairings.

Conventions
-----------
* A chart point is a complex pair ``(u, v)``; arrays of points have shape
  ``(n, 2)``.  The default chart is ``t=1`` with ``(u, v) = (z, w)``.
* A (1,1)-form is ``i * sum_jk H_jk dzeta_j ^ dzetabar_k``.
* The volume form is ``(i/2) du^dubar ^ (i/2) dv^dvbar`` = Lebesgue measure
  ``dlambda``.  With this orientation
  ``A ^ B = 4 (A11 B22 + A22 B11 - A12 B21 - A21 B12) dlambda``.
* A (0,1)-form ``S = a dubar + b dvbar`` has ``dbar S = g dubar ^ dvbar``
  with ``g = d b/d ubar - d a/d vbar`` and
  ``dbar S ^ d Sbar = 4 |g|^2 dlambda``.
* Fubini-Study: ``raw = i ddbar log(1+|u|^2+|v|^2)`` with total volume
  ``int raw^2 = 4 pi^2``; ``unit = raw / (2 pi)`` has ``int unit^2 = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

import jax

jax.config.update("jax_enable_x64", True)
import jax.numpy as jnp  # noqa: E402

from .quadrature import IntegralResult, QuadratureSpec, integrate_box, integrate_tensor  # noqa: E402

TWO_PI = 2.0 * np.pi
FS_RAW_VOLUME = 4.0 * np.pi**2

# ---------------------------------------------------------------------------
# charts


CHARTS = ("t=1", "w=1", "z=1")


def to_homogeneous(P: np.ndarray, chart: str = "t=1") -> np.ndarray:
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    one = np.ones(len(P), dtype=complex)
    u, v = P[:, 0], P[:, 1]
    if chart == "t=1":
        return np.stack([u, v, one], axis=1)
    if chart == "w=1":
        return np.stack([u, one, v], axis=1)
    if chart == "z=1":
        return np.stack([one, u, v], axis=1)
    raise ValueError(f"unknown chart {chart!r}")


def from_homogeneous(Z: np.ndarray, chart: str = "t=1") -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    z, w, t = Z[:, 0], Z[:, 1], Z[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        if chart == "t=1":
            return np.stack([z / t, w / t], axis=1)
        if chart == "w=1":
            return np.stack([z / w, t / w], axis=1)
        if chart == "z=1":
            return np.stack([w / z, t / z], axis=1)
    raise ValueError(f"unknown chart {chart!r}")


def chart_transition(P: np.ndarray, src: str, dst: str) -> np.ndarray:
    return from_homogeneous(to_homogeneous(P, src), dst)


def projectively_equal(Z1, Z2, tol: float = 1e-12) -> bool:
    """``[Z1] == [Z2]`` iff the 3-vectors are proportional."""
    Z1 = np.asarray(Z1, dtype=complex)
    Z2 = np.asarray(Z2, dtype=complex)
    if not (np.any(Z1) and np.any(Z2)):
        raise ValueError("homogeneous coordinates must not all vanish")
    cross = np.abs(np.outer(Z1, Z2) - np.outer(Z2, Z1)).max()
    return cross <= tol * np.linalg.norm(Z1) * np.linalg.norm(Z2)


@dataclass(frozen=True)
class HomogeneousPoint:
    coords: tuple

    def __post_init__(self):
        if not np.any(np.asarray(self.coords)):
            raise ValueError("[0:0:0] is not a point of P^2")

    def normalized(self) -> np.ndarray:
        z = np.asarray(self.coords, dtype=complex)
        return z / np.linalg.norm(z)

    def best_chart(self) -> str:
        # largest coordinate has modulus >= 1/sqrt(3) after normalisation
        k = int(np.argmax(np.abs(self.normalized())))
        return ("z=1", "w=1", "t=1")[k]

    def __eq__(self, other):
        return isinstance(other, HomogeneousPoint) and projectively_equal(self.coords, other.coords)

    def __hash__(self):
        return hash(tuple(np.round(self.normalized() * np.exp(-1j * np.angle(self.normalized()[np.argmax(np.abs(self.normalized()))])), 10)))


@dataclass(frozen=True)
class ChartPoint:
    chart: str
    u: complex
    v: complex

    def to(self, chart: str) -> "ChartPoint":
        P = chart_transition([[self.u, self.v]], self.chart, chart)[0]
        return ChartPoint(chart, complex(P[0]), complex(P[1]))


# ---------------------------------------------------------------------------
# analytic scalar fields


def abs2(x):
    """``|x|^2`` written so that jax differentiates it correctly at ``x = 0``."""
    return jnp.real(x) ** 2 + jnp.imag(x) ** 2


def _split(P: np.ndarray) -> jnp.ndarray:
    P = np.asarray(P, dtype=complex)
    return jnp.asarray(np.stack([P[:, 0].real, P[:, 0].imag, P[:, 1].real, P[:, 1].imag], axis=1))


class AnalyticScalarField:
    """Complex field on a chart, built from a jax-traceable ``fn(u, v)``.

    First and second Wirtinger partials are obtained by forward-mode
    differentiation of ``fn`` viewed as a function of ``(x1, y1, x2, y2)``,
    so they are exact up to rounding.

    Parameters
    ----------
    fn : callable
        ``fn(u, v) -> complex``, jax-traceable, acting on scalars.
    name : str
        Label used in reports.
    singular_points : sequence of complex pairs
        Declared poles; integrators and test batteries keep away from them.
    real : bool
        Declares ``fn`` real-valued (enables exact Hermitian symmetrisation
        of the Levi matrix).
    """

    def __init__(self, fn, name: str = "f", singular_points: Sequence = (), real: bool = False):
        self.fn = fn
        self.name = name
        self.singular_points = [tuple(p) for p in singular_points]
        self.real = real
        self._val = None
        self._jet = None

    # composition -------------------------------------------------------
    def _binop(self, other, op, sym):
        if isinstance(other, AnalyticScalarField):
            g = other.fn
            sp = self.singular_points + other.singular_points
            real = self.real and other.real
            oname = other.name
        else:
            c = other
            g = lambda u, v: c  # noqa: E731
            sp = self.singular_points
            real = self.real and np.isreal(c)
            oname = repr(c)
        f = self.fn
        return AnalyticScalarField(lambda u, v: op(f(u, v), g(u, v)), f"({self.name}{sym}{oname})", sp, real)

    def __add__(self, other):
        return self._binop(other, lambda a, b: a + b, "+")

    __radd__ = __add__

    def __sub__(self, other):
        return self._binop(other, lambda a, b: a - b, "-")

    def __mul__(self, other):
        return self._binop(other, lambda a, b: a * b, "*")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def conj(self) -> "AnalyticScalarField":
        f = self.fn
        return AnalyticScalarField(lambda u, v: jnp.conj(f(u, v)), f"conj({self.name})", self.singular_points, self.real)

    def compose(self, F: "HolomorphicMap") -> "AnalyticScalarField":
        """``f o F`` for a holomorphic chart map ``F``."""
        f, Ff = self.fn, F.fn
        def g(u, v):
            a, b = Ff(u, v)
            return f(a, b)
        return AnalyticScalarField(g, f"{self.name}o{F.name}", (), self.real)

    # evaluation --------------------------------------------------------
    def _real_pair(self):
        f = self.fn

        def h(x):
            val = f(x[0] + 1j * x[1], x[2] + 1j * x[3])
            val = jnp.asarray(val, dtype=jnp.complex128)
            return jnp.stack([val.real, val.imag])

        return h

    def __call__(self, P) -> np.ndarray:
        if self._val is None:
            f = self.fn
            self._val = jax.jit(jax.vmap(lambda x: jnp.asarray(f(x[0] + 1j * x[1], x[2] + 1j * x[3]), dtype=jnp.complex128)))
        out = np.asarray(self._val(_split(np.atleast_2d(P))))
        return out.real if self.real else out

    def grad(self, P) -> tuple[np.ndarray, np.ndarray]:
        """First Wirtinger derivatives ``(d/dzeta, d/dzetabar)``, each (n, 2)."""
        if getattr(self, "_grad", None) is None:
            self._grad = jax.jit(jax.vmap(jax.jacfwd(self._real_pair())))
        J = np.asarray(self._grad(_split(np.atleast_2d(P))))
        D = J[:, 0, :] + 1j * J[:, 1, :]
        dx, dy = D[:, 0::2], D[:, 1::2]
        return 0.5 * (dx - 1j * dy), 0.5 * (dx + 1j * dy)

    def jet(self, P) -> dict:
        """Value, Wirtinger gradient and complex Hessians at points ``P``.

        Returns a dict with ``f`` (n,), ``d`` (n,2) = d/dzeta_j,
        ``dbar`` (n,2) = d/dzetabar_j, ``levi`` (n,2,2) = d^2/dzeta_j dzetabar_k,
        ``hol`` (n,2,2) = d^2/dzeta_j dzeta_k, ``antihol`` = d^2/dzetabar_j dzetabar_k.
        """
        if self._jet is None:
            h = self._real_pair()

            def one(x):
                return h(x), jax.jacfwd(h)(x), jax.jacfwd(jax.jacfwd(h))(x)

            self._jet = jax.jit(jax.vmap(one))
        v, J, Hs = self._jet(_split(np.atleast_2d(P)))
        v = np.asarray(v)
        J = np.asarray(J)
        Hs = np.asarray(Hs)
        val = v[:, 0] + 1j * v[:, 1]
        D = J[:, 0, :] + 1j * J[:, 1, :]  # (n,4) real-variable derivatives
        H = Hs[:, 0] + 1j * Hs[:, 1]  # (n,4,4)
        dx = D[:, 0::2]
        dy = D[:, 1::2]
        Hxx = H[:, 0::2, 0::2]
        Hxy = H[:, 0::2, 1::2]
        Hyx = H[:, 1::2, 0::2]
        Hyy = H[:, 1::2, 1::2]
        out = {
            "f": val.real if self.real else val,
            "d": 0.5 * (dx - 1j * dy),
            "dbar": 0.5 * (dx + 1j * dy),
            "levi": 0.25 * (Hxx + 1j * Hxy - 1j * Hyx + Hyy),
            "hol": 0.25 * (Hxx - 1j * Hxy - 1j * Hyx - Hyy),
            "antihol": 0.25 * (Hxx + 1j * Hxy + 1j * Hyx - Hyy),
        }
        if self.real:
            L = out["levi"]
            out["levi"] = 0.5 * (L + np.conj(np.swapaxes(L, 1, 2)))
        return out


def richardson_check(f: AnalyticScalarField, P, h: float = 1e-4) -> float:
    """Max relative mismatch between analytic and finite-difference partials.

    Central differences with one Richardson level (step ``h`` and ``h/2``)
    for the first Wirtinger derivatives and the Levi matrix.
    """
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    jet = f.jet(P)
    n = len(P)
    real_dirs = [np.array([1, 0]), np.array([1j, 0]), np.array([0, 1]), np.array([0, 1j])]

    def d1(dir_, step):
        return (f(P + step * dir_) - f(P - step * dir_)) / (2 * step)

    def rich1(dir_):
        return (4 * d1(dir_, h / 2) - d1(dir_, h)) / 3

    def d2(a, b, step):
        return (f(P + step * (a + b)) - f(P + step * (a - b)) - f(P - step * (a - b)) + f(P - step * (a + b))) / (4 * step**2)

    def rich2(a, b):
        return (4 * d2(a, b, h / 2) - d2(a, b, h)) / 3

    g = [rich1(d) for d in real_dirs]  # d/dx1, d/dy1, d/dx2, d/dy2
    d_fd = np.stack([0.5 * (g[0] - 1j * g[1]), 0.5 * (g[2] - 1j * g[3])], axis=1)
    levi_fd = np.zeros((n, 2, 2), dtype=complex)
    for j in range(2):
        for k in range(2):
            xj, yj = real_dirs[2 * j], real_dirs[2 * j + 1]
            xk, yk = real_dirs[2 * k], real_dirs[2 * k + 1]
            levi_fd[:, j, k] = 0.25 * (rich2(xj, xk) + 1j * rich2(xj, yk) - 1j * rich2(yj, xk) + rich2(yj, yk))
    scale = max(1.0, np.abs(jet["d"]).max(), np.abs(jet["levi"]).max())
    return float(max(np.abs(d_fd - jet["d"]).max(), np.abs(levi_fd - jet["levi"]).max()) / scale)


# ---------------------------------------------------------------------------
# holomorphic maps between charts


class HolomorphicMap:
    """Holomorphic ``F: C^2 -> C^2`` given by a jax-traceable ``fn(u, v) -> (a, b)``."""

    def __init__(self, fn, name: str = "F"):
        self.fn = fn
        self.name = name
        self._ev = None
        self._jac = None

    def __call__(self, P) -> np.ndarray:
        if self._ev is None:
            fn = self.fn
            self._ev = jax.jit(jax.vmap(lambda x: jnp.stack([jnp.asarray(c, dtype=jnp.complex128) for c in fn(x[0] + 1j * x[1], x[2] + 1j * x[3])])))
        return np.asarray(self._ev(_split(np.atleast_2d(P))))

    def jacobian(self, P) -> np.ndarray:
        """Complex Jacobian ``J[j, a] = dF_j / dzeta_a`` (n,2,2)."""
        if self._jac is None:
            fn = self.fn

            def h(x):
                a, b = fn(x[0] + 1j * x[1], x[2] + 1j * x[3])
                a = jnp.asarray(a, dtype=jnp.complex128)
                b = jnp.asarray(b, dtype=jnp.complex128)
                return jnp.stack([a.real, a.imag, b.real, b.imag])

            self._jac = jax.jit(jax.vmap(jax.jacfwd(h)))
        J = np.asarray(self._jac(_split(np.atleast_2d(P))))  # (n, 4 out, 4 in)
        out = np.empty((J.shape[0], 2, 2), dtype=complex)
        for j in range(2):
            for a in range(2):
                dfdx = J[:, 2 * j, 2 * a] + 1j * J[:, 2 * j + 1, 2 * a]
                dfdy = J[:, 2 * j, 2 * a + 1] + 1j * J[:, 2 * j + 1, 2 * a + 1]
                out[:, j, a] = 0.5 * (dfdx - 1j * dfdy)
        return out

    def compose(self, other: "HolomorphicMap") -> "HolomorphicMap":
        f, g = self.fn, other.fn

        def h(u, v):
            a, b = g(u, v)
            return f(a, b)

        return HolomorphicMap(h, f"{self.name}o{other.name}")


def projective_map(M, chart: str = "t=1", name: str = "M") -> HolomorphicMap:
    """The automorphism ``[Z] -> [M Z]`` of P^2 written in one chart."""
    M = np.asarray(M, dtype=complex)
    Mj = jnp.asarray(M)

    def fn(u, v):
        if chart == "t=1":
            Z = jnp.stack([u, v, 1.0 + 0j])
        elif chart == "w=1":
            Z = jnp.stack([u, 1.0 + 0j, v])
        else:
            Z = jnp.stack([1.0 + 0j, u, v])
        W = Mj @ Z
        if chart == "t=1":
            return W[0] / W[2], W[1] / W[2]
        if chart == "w=1":
            return W[0] / W[1], W[2] / W[1]
        return W[1] / W[0], W[2] / W[0]

    return HolomorphicMap(fn, name)


def transition_map(src: str, dst: str) -> HolomorphicMap:
    """Chart transition ``src -> dst`` as a holomorphic map."""
    def fn(u, v):
        one = 1.0 + 0j
        Z = {"t=1": (u, v, one), "w=1": (u, one, v), "z=1": (one, u, v)}[src]
        z, w, t = Z
        return {"t=1": (z / t, w / t), "w=1": (z / w, t / w), "z=1": (w / z, t / z)}[dst]

    return HolomorphicMap(fn, f"{src}->{dst}")


# ---------------------------------------------------------------------------
# forms


class Form11:
    """A (1,1)-form ``i sum H_jk dzeta_j ^ dzetabar_k`` on a chart.

    ``H`` maps points ``(n,2)`` to coefficient matrices ``(n,2,2)``.
    ``positive`` records that the form is known to be semipositive.
    """

    def __init__(self, H: Callable[[np.ndarray], np.ndarray], name: str = "theta",
                 positive: bool = False, support=None, chart: str = "t=1"):
        self._H = H
        self.name = name
        self.positive = positive
        self.support = support
        self.chart = chart

    def H(self, P) -> np.ndarray:
        return np.asarray(self._H(np.atleast_2d(P)))

    def __add__(self, other: "Form11") -> "Form11":
        return Form11(lambda P: self.H(P) + other.H(P), f"({self.name}+{other.name})",
                      self.positive and other.positive, _union_support(self.support, other.support), self.chart)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, c: float) -> "Form11":
        return Form11(lambda P: c * self.H(P), f"{c}*{self.name}", self.positive and c >= 0, self.support, self.chart)

    __rmul__ = lambda self, c: self.scale(c)  # noqa: E731

    def times(self, f: AnalyticScalarField) -> "Form11":
        """Multiply by a real scalar field."""
        return Form11(lambda P: np.real(f(P))[:, None, None] * self.H(P), f"{f.name}*{self.name}", False, self.support, self.chart)

    def pullback(self, F: HolomorphicMap) -> "Form11":
        """``F^* theta``: ``H'(p) = J^T H(F p) conj(J)``."""
        def H(P):
            J = F.jacobian(P)
            Hf = self.H(F(P))
            return np.einsum("nja,njk,nkb->nab", J, Hf, np.conj(J))
        return Form11(H, f"{F.name}^*{self.name}", self.positive)

    def hermitian_residual(self, P) -> float:
        H = self.H(P)
        num = np.abs(H - np.conj(np.swapaxes(H, 1, 2))).max()
        return float(num / max(np.abs(H).max(), 1e-300))

    def min_eigenvalue(self, P) -> np.ndarray:
        H = self.H(P)
        H = 0.5 * (H + np.conj(np.swapaxes(H, 1, 2)))
        return np.linalg.eigvalsh(H)[:, 0]


def _union_support(a, b):
    if a is None or b is None:
        return None
    return ("union", a, b)


ZERO_FORM = Form11(lambda P: np.zeros((len(P), 2, 2), dtype=complex), "0")


def constant_form(K, name: str = "K") -> Form11:
    K = np.asarray(K, dtype=complex)
    return Form11(lambda P: np.broadcast_to(K, (len(P), 2, 2)).copy(), name,
                  bool(np.all(np.linalg.eigvalsh(0.5 * (K + K.conj().T)) >= 0)))


def wedge_density(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Density of ``A ^ B`` against Lebesgue measure, for coefficient stacks."""
    return 4.0 * (A[:, 0, 0] * B[:, 1, 1] + A[:, 1, 1] * B[:, 0, 0]
                  - A[:, 0, 1] * B[:, 1, 0] - A[:, 1, 0] * B[:, 0, 1])


def ddbar(f: AnalyticScalarField) -> Form11:
    """``i ddbar f``: coefficients are the Levi matrix ``d^2 f / dzeta_j dzetabar_k``."""
    return Form11(lambda P: f.jet(P)["levi"], f"i ddbar {f.name}", False)


class Form01:
    """``S = a dubar + b dvbar`` with analytic coefficient fields."""

    def __init__(self, a: AnalyticScalarField | None, b: AnalyticScalarField | None, name: str = "S",
                 support=None):
        zero = AnalyticScalarField(lambda u, v: 0.0 * u, "0")
        self.a = a if a is not None else zero
        self.b = b if b is not None else zero
        self.name = name
        self.support = support

    def coefficients(self, P) -> np.ndarray:
        return np.stack([self.a(P), self.b(P)], axis=1)

    def scale(self, c) -> "Form01":
        return Form01(self.a * c, self.b * c, f"{c}*{self.name}", self.support)

    def __add__(self, other: "Form01") -> "Form01":
        return Form01(self.a + other.a, self.b + other.b, f"({self.name}+{other.name})",
                      _union_support(self.support, other.support))

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def jets(self, P):
        return self.a.jet(P), self.b.jet(P)

    def dbar_coefficient(self, P) -> np.ndarray:
        _, a_bar = self.a.grad(P)
        _, b_bar = self.b.grad(P)
        return b_bar[:, 0] - a_bar[:, 1]

    def sym_form(self) -> Form11:
        """The real (1,1)-form ``d S + dbar Sbar``.

        With ``M_jk = d_j S_k - conj(d_k S_j)`` (coefficient of
        ``dzeta_j ^ dzetabar_k``) the Hermitian matrix is ``H = -i M``.
        """
        def H(P):
            D = np.stack([self.a.grad(P)[0], self.b.grad(P)[0]], axis=2)  # D[n, j, k] = d_j S_k
            M = D - np.conj(np.swapaxes(D, 1, 2))
            return -1j * M
        return Form11(H, f"dS+dbarSbar[{self.name}]", False, self.support)

    def pullback(self, F: HolomorphicMap) -> "Form01":
        """``F^* S``: coefficient of ``dzetabar_j`` is ``sum_k S_k(F) conj(dF_k/dzeta_j)``."""
        a, b, Ff = self.a.fn, self.b.fn, F.fn

        def coef(j):
            def c(u, v):
                # jax-traceable Jacobian of F at (u, v)
                def h(x):
                    p, q = Ff(x[0] + 1j * x[1], x[2] + 1j * x[3])
                    return jnp.stack([jnp.real(p), jnp.imag(p), jnp.real(q), jnp.imag(q)])
                x = jnp.stack([jnp.real(u), jnp.imag(u), jnp.real(v), jnp.imag(v)])
                Jr = jax.jacfwd(h)(x)
                dF = []
                for k in range(2):
                    dfdx = Jr[2 * k, 2 * j] + 1j * Jr[2 * k + 1, 2 * j]
                    dfdy = Jr[2 * k, 2 * j + 1] + 1j * Jr[2 * k + 1, 2 * j + 1]
                    dF.append(0.5 * (dfdx - 1j * dfdy))
                p, q = Ff(u, v)
                return a(p, q) * jnp.conj(dF[0]) + b(p, q) * jnp.conj(dF[1])
            return c

        return Form01(AnalyticScalarField(coef(0), f"{F.name}^*a"), AnalyticScalarField(coef(1), f"{F.name}^*b"),
                      f"{F.name}^*{self.name}")


def dbar(S: Form01) -> Callable[[np.ndarray], np.ndarray]:
    """Coefficient field ``g`` of ``dbar S = g dubar ^ dvbar``."""
    return S.dbar_coefficient


def dbar_of_function(f: AnalyticScalarField) -> Form01:
    """``dbar f`` as a (0,1)-form."""
    fn = f.fn

    def part(j):
        def c(u, v):
            def h(x):
                val = jnp.asarray(fn(x[0] + 1j * x[1], x[2] + 1j * x[3]), dtype=jnp.complex128)
                return jnp.stack([val.real, val.imag])
            x = jnp.stack([jnp.real(u), jnp.imag(u), jnp.real(v), jnp.imag(v)])
            J = jax.jacfwd(h)(x)
            dfdx = J[0, 2 * j] + 1j * J[1, 2 * j]
            dfdy = J[0, 2 * j + 1] + 1j * J[1, 2 * j + 1]
            return 0.5 * (dfdx + 1j * dfdy)
        return c

    return Form01(AnalyticScalarField(part(0), f"d{f.name}/dubar"), AnalyticScalarField(part(1), f"d{f.name}/dvbar"),
                  f"dbar {f.name}")


# ---------------------------------------------------------------------------
# Fubini-Study


def fs_raw_H(P) -> np.ndarray:
    """Closed-form coefficients of ``i ddbar log(1+|u|^2+|v|^2)``."""
    P = np.atleast_2d(P)
    s = 1.0 + np.sum(np.abs(P) ** 2, axis=1)
    H = (np.eye(2)[None] * s[:, None, None] - np.einsum("nj,nk->njk", np.conj(P), P)) / s[:, None, None] ** 2
    return H


fs_potential = AnalyticScalarField(lambda u, v: jnp.log(1.0 + abs2(u) + abs2(v)), "log(1+|u|^2+|v|^2)", real=True)


@dataclass(frozen=True)
class FubiniStudy:
    normalization: str = "unit-mass"

    def __post_init__(self):
        if self.normalization not in ("raw", "unit-mass"):
            raise ValueError("normalization is 'raw' or 'unit-mass'")

    @property
    def factor(self) -> float:
        return 1.0 if self.normalization == "raw" else 1.0 / TWO_PI

    @property
    def potential(self) -> AnalyticScalarField:
        return fs_potential

    def form(self) -> Form11:
        c = self.factor
        return Form11(lambda P: c * fs_raw_H(P), f"omega_{self.normalization}", positive=True)


OMEGA_RAW = FubiniStudy("raw").form()
OMEGA_UNIT = FubiniStudy("unit-mass").form()


# ---------------------------------------------------------------------------
# regions: parametrisations of chart domains by boxes


@dataclass(frozen=True)
class Region:
    """A chart domain parametrised by a box.

    ``kind`` is one of ``"P2"`` (whole chart, compactified spherical
    coordinates), ``"ball"``, ``"bidisc"``, ``"disc"`` (one variable) or
    ``"shell"`` (ball between two radii).
    """

    kind: str
    center: tuple = (0j, 0j)
    radius: float | tuple = 1.0
    inner: float = 0.0
    pole: complex | None = None
    splits: tuple | None = None

    @property
    def dim(self) -> int:
        return 2 if self.kind == "disc" else 4

    def box(self):
        if self.kind in ("P2", "ball", "shell"):
            top = np.pi / 2 if self.kind == "P2" else self.radius
            return [self.inner if self.kind == "shell" else 0.0, 0.0, 0.0, 0.0], [top, np.pi / 2, TWO_PI, TWO_PI]
        if self.kind == "bidisc":
            r1, r2 = self.radius if isinstance(self.radius, tuple) else (self.radius, self.radius)
            return [0.0, 0.0, 0.0, 0.0], [1.0, TWO_PI, 1.0, TWO_PI]
        if self.kind == "disc":
            return [0.0, 0.0], [1.0, TWO_PI]
        raise ValueError(self.kind)

    def param(self, X: np.ndarray):
        """Map box parameters to chart points; returns ``(P, jacobian)``."""
        c = np.asarray(self.center, dtype=complex)
        if self.kind in ("P2", "ball", "shell"):
            a, eta, p1, p2 = X.T
            if self.kind == "P2":
                rho = np.tan(a)
                drho = 1.0 / np.cos(a) ** 2
            else:
                rho = a
                drho = np.ones_like(a)
            z = rho * np.cos(eta) * np.exp(1j * p1)
            w = rho * np.sin(eta) * np.exp(1j * p2)
            jac = rho**3 * np.cos(eta) * np.sin(eta) * drho
            return np.stack([z + c[0], w + c[1]], axis=1), jac
        if self.kind == "bidisc":
            r1, r2 = self.radius if isinstance(self.radius, tuple) else (self.radius, self.radius)
            s1, p1, s2, p2 = X.T
            # r = R s^2 concentrates nodes near the origin of each factor
            z = r1 * s1**2 * np.exp(1j * p1)
            w = r2 * s2**2 * np.exp(1j * p2)
            jac = (r1 * s1**2) * (2 * r1 * s1) * (r2 * s2**2) * (2 * r2 * s2)
            return np.stack([z + c[0], w + c[1]], axis=1), jac
        if self.kind == "disc":
            s, phi = X.T
            c0 = complex(np.asarray(self.center).ravel()[0])
            R = float(self.radius)
            if self.pole is None:
                r = R * s
                jac = r * R
                x = c0 + r * np.exp(1j * phi)
            else:
                # polar coordinates about the pole; boundary distance along each ray
                a = complex(self.pole) - c0
                d = np.exp(1j * phi)
                proj = (np.conj(a) * d).real
                Rphi = -proj + np.sqrt(proj**2 + R**2 - abs(a) ** 2)
                r = Rphi * s**2
                jac = r * Rphi * 2 * s
                x = complex(self.pole) + r * d
            return x[:, None], jac
        raise ValueError(self.kind)


@dataclass(frozen=True)
class MappedBox:
    """A chart domain given by an arbitrary parametrisation ``fn(X) -> (P, jac)`` of a box."""

    lo: tuple
    hi: tuple
    fn: Callable = field(compare=False)
    splits: tuple | None = None
    kind: str = "mapped"

    @property
    def dim(self) -> int:
        return len(self.lo)

    def box(self):
        return list(self.lo), list(self.hi)

    def param(self, X):
        return self.fn(X)


def ball(center=(0j, 0j), radius: float = 1.0) -> Region:
    return Region("ball", center=(complex(center[0]), complex(center[1])), radius=float(radius))


P2 = Region("P2")
UNIT_BIDISC = Region("bidisc", radius=1.0)


def integrate_chart(f: Callable[[np.ndarray], np.ndarray], region: Region, q: QuadratureSpec | None = None) -> IntegralResult:
    """Integrate a density (against Lebesgue measure of the chart) over ``region``."""
    q = q or QuadratureSpec()
    lo, hi = region.box()

    def g(X):
        P, jac = region.param(X)
        val = np.asarray(f(P))
        return val * (jac if val.ndim == 1 else jac[:, None])

    splits = region.splits
    kind = getattr(region, "kind", "")
    if splits is None:
        splits = {"P2": (2, 1, 1, 1), "disc": (1, 2)}.get(kind, None)
    tensor = q.method == "tensor" or (q.method == "auto" and kind in ("ball", "mapped") and len(lo) >= 3)
    if tensor:
        return integrate_tensor(g, lo, hi, q, splits)
    return integrate_box(g, lo, hi, q, initial_splits=splits)


def wedge_pair(A: Form11, B: Form11, region: Region = P2, q: QuadratureSpec | None = None) -> IntegralResult:
    """``int_region A ^ B``."""
    return integrate_chart(lambda P: wedge_density(A.H(P), B.H(P)), region, q)
