"""Energy minimization on finite-dimensional slices of currents.

A slice is ``T_theta = c omega + sum_j theta_j (d S_j + dbar Sbar_j)`` with
real coefficients ``theta``.  The ``dS`` terms carry no mass, so every slice
current has mass ``c`` and energy ``E(theta) = theta^T Re(G) theta`` where
``G_jk = int dbar S_j ^ d Sbar_k = 4 int g_j conj(g_k)`` (the same
normalisation as :func:`lamicur.currents.compute_energy`).  Linear pairing
equalities emulate directedness and positivity of ``T_theta`` is imposed at
sample points, where each 2x2 condition is a second-order cone in ``theta``.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import cvxpy as cp
import numpy as np
from scipy.linalg import null_space

from .currents import _ball_grid, bump_fn, constant_times_bump, energy_integral
from .geometry import OMEGA_UNIT, AnalyticScalarField, Form01, Region, ball, integrate_chart, wedge_density
from .quadrature import QuadratureSpec

UNIQUE_TOL = 1e-8
GRAM_SPEC = QuadratureSpec(rel_tol=1e-6, abs_tol=1e-6)


class InfeasibleSliceError(ValueError):
    """No slice current meets the constraints; the message names the worst one."""


@dataclass
class CurrentSlice:
    """``c omega + sum theta_j (d S_j + dbar Sbar_j)`` with constraints.

    Parameters
    ----------
    basis : list of Form01
        Compactly supported (0,1)-forms ``S_j`` (``support`` a ball).
    c : float
        Mass of every slice current.
    constraints : list of (TestForm, float)
        Pairing equalities ``<T_theta, phi> = target``.
    grid : ndarray, optional
        Positivity sample points, shape ``(n, 2)``.  Defaults to points
        spread over the supports of the basis.
    """

    basis: list
    c: float = 1.0
    constraints: list = field(default_factory=list)
    grid: np.ndarray | None = None
    name: str = "slice"

    def __post_init__(self):
        if self.grid is None:
            self.grid = support_grid(self.basis, 300, seed=11)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def form_stack(self, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(W0, W)``: coefficients of ``c omega`` and of each ``d S_j + dbar Sbar_j`` at ``P``."""
        W0 = self.c * OMEGA_UNIT.H(P)
        W = np.stack([S.sym_form().H(P) for S in self.basis], axis=0) if self.basis else np.zeros((0, len(P), 2, 2))
        return W0, W


def support_grid(basis: Sequence[Form01], n_per: int = 60, seed: int = 11) -> np.ndarray:
    """Sample points in the union of the basis supports."""
    pts = [_ball_grid(S.support.center, S.support.radius, n_per, seed + k) for k, S in enumerate(basis)
           if isinstance(S.support, Region)]
    return np.concatenate(pts, axis=0) if pts else np.zeros((0, 2), dtype=complex)


def bump_form(center, radius: float, slot: int = 0, tilt: complex = 0.3, name: str = "S") -> Form01:
    """``S = b(zeta) (1 + tilt u) dzetabar_slot`` with ``b`` the standard bump."""
    b = bump_fn(center, radius)
    f = AnalyticScalarField(lambda u, v: b(u, v) * (1.0 + tilt * u), name)
    sup = ball(center, radius)
    return Form01(f, None, name, sup) if slot == 0 else Form01(None, f, name, sup)


# ---------------------------------------------------------------------------
# Gram assembly


@dataclass
class GramResult:
    G: np.ndarray
    errors: np.ndarray
    converged: bool
    hermitian_residual: float
    min_eigenvalue: float
    mass_terms: np.ndarray  # mass of each d S_j + dbar Sbar_j (zero by parts)
    mass_check: float  # max |mass(T_theta) - c| over random theta

    @property
    def real(self) -> np.ndarray:
        return np.real(self.G)


def _balls_overlap(r1, r2) -> bool:
    if not (isinstance(r1, Region) and isinstance(r2, Region) and r1.kind == r2.kind == "ball"):
        return True
    d = np.linalg.norm(np.asarray(r1.center) - np.asarray(r2.center))
    return d < r1.radius + r2.radius


def _gram_entry(Sj: Form01, Sk: Form01, q: QuadratureSpec):
    rj, rk = Sj.support, Sk.support
    if not _balls_overlap(rj, rk):
        return 0.0, 0.0, True
    if isinstance(rj, Region) and isinstance(rk, Region) and rj.kind == rk.kind == "ball":
        region = rj if rj.radius <= rk.radius else rk  # the product vanishes off the smaller ball
        r = integrate_chart(lambda P: 4.0 * Sj.dbar_coefficient(P) * np.conj(Sk.dbar_coefficient(P)), region, q)
    else:
        r = energy_integral(Sj, Sk, q)
    return complex(r.value), float(abs(r.error)), bool(r.converged)


def assemble_gram(slc: CurrentSlice, q: QuadratureSpec | None = None, workers: int = 1,
                  n_mass_checks: int = 4, seed: int = 42) -> GramResult:
    """``G_jk = int dbar S_j ^ d Sbar_k`` and the by-parts mass check.

    Entries with disjoint ball supports are exactly zero.  The upper
    triangle is integrated and mirrored; the Hermitian residual is therefore
    measured on the diagonal (imaginary parts) only.
    """
    q = q or GRAM_SPEC
    m = slc.dim
    jobs = [(j, k) for j in range(m) for k in range(j, m)]

    def run(jk):
        j, k = jk
        return _gram_entry(slc.basis[j], slc.basis[k], q)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(run, jobs))
    else:
        out = [run(jk) for jk in jobs]
    G = np.zeros((m, m), dtype=complex)
    E = np.zeros((m, m))
    ok = True
    for (j, k), (v, e, c) in zip(jobs, out):
        G[j, k], E[j, k] = v, e
        G[k, j], E[k, j] = np.conj(v), e
        ok = ok and c
    herm = float(np.max(np.abs(np.imag(np.diag(G))))) if m else 0.0
    G[np.diag_indices(m)] = np.real(np.diag(G))
    mins = float(np.linalg.eigvalsh(G)[0]) if m else 0.0
    mass_terms = np.zeros(m)
    for j, S in enumerate(slc.basis):
        sym = S.sym_form()
        reg = S.support if isinstance(S.support, Region) else None
        if reg is None:
            raise ValueError("basis elements need a ball support for the mass check")
        r = integrate_chart(lambda P: wedge_density(sym.H(P), OMEGA_UNIT.H(P)), reg, q)
        mass_terms[j] = float(np.real(r.value))
    rng = np.random.default_rng(seed)
    thetas = rng.normal(size=(n_mass_checks, m))
    mass_check = float(np.max(np.abs(thetas @ mass_terms))) if m else 0.0
    return GramResult(G, E, ok, herm, mins, mass_terms, mass_check)


# ---------------------------------------------------------------------------
# constraints


@dataclass
class ConstraintData:
    """Linear data of a slice: ``A theta = b`` and positivity cones at samples."""

    A: np.ndarray  # (n_eq, m)
    b: np.ndarray
    p0: np.ndarray  # cone data: p = p0 + P theta etc., one row per sample
    s0: np.ndarray
    z0: np.ndarray
    P: np.ndarray
    S: np.ndarray
    Z: np.ndarray

    def min_eigenvalues(self, theta: np.ndarray) -> np.ndarray:
        p = self.p0 + self.P @ theta
        s = self.s0 + self.S @ theta
        z = self.z0 + self.Z @ theta
        return 0.5 * (p + s) - np.sqrt(0.25 * (p - s) ** 2 + np.abs(z) ** 2)

    def eq_residual(self, theta: np.ndarray) -> float:
        return float(np.max(np.abs(self.A @ theta - self.b))) if len(self.b) else 0.0


def constraint_data(slc: CurrentSlice, q: QuadratureSpec | None = None) -> ConstraintData:
    q = q or QuadratureSpec()
    m = slc.dim
    rows, rhs = [], []
    for phi, target in slc.constraints:
        base = integrate_chart(lambda P: wedge_density(OMEGA_UNIT.H(P), phi.H(P)), phi.support, q)
        a = []
        for S in slc.basis:
            sym = S.sym_form()
            a.append(float(np.real(integrate_chart(lambda P: wedge_density(sym.H(P), phi.H(P)), phi.support, q).value)))
        rows.append(a)
        rhs.append(float(target) - slc.c * float(np.real(base.value)))
    A = np.asarray(rows, dtype=float).reshape(len(rows), m)
    return ConstraintData(A, np.asarray(rhs, dtype=float), *_cone_rows(slc, slc.grid))


def _cone_rows(slc: CurrentSlice, P: np.ndarray) -> tuple:
    W0, W = slc.form_stack(P)
    return (np.real(W0[:, 0, 0]), np.real(W0[:, 1, 1]), W0[:, 0, 1],
            np.real(W[:, :, 0, 0]).T, np.real(W[:, :, 1, 1]).T, W[:, :, 0, 1].T)


def add_samples(slc: CurrentSlice, cd: ConstraintData, P: np.ndarray) -> ConstraintData:
    """Append positivity samples ``P`` to the slice grid and the cone data."""
    slc.grid = np.concatenate([slc.grid, P], axis=0)
    new = _cone_rows(slc, P)
    old = (cd.p0, cd.s0, cd.z0, cd.P, cd.S, cd.Z)
    return ConstraintData(cd.A, cd.b, *[np.concatenate([o, n], axis=0) for o, n in zip(old, new)])


def _cone_constraints(th, cd: ConstraintData, margin: float = 0.0):
    p = cd.p0 + cd.P @ th
    s = cd.s0 + cd.S @ th
    zr = np.real(cd.z0) + np.real(cd.Z) @ th
    zi = np.imag(cd.z0) + np.imag(cd.Z) @ th
    # [[p, z], [zbar, s]] >= 0  iff  |(2 z, p - s)| <= p + s
    return [cp.SOC(p + s - margin, cp.vstack([2 * zr, 2 * zi, p - s]), axis=0)]


def _solve(prob: cp.Problem):
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.SolverError:
        prob.solve(solver=cp.SCS, eps=1e-10)


def feasibility(cd: ConstraintData) -> np.ndarray:
    """A feasible point, or :class:`InfeasibleSliceError` naming the worst constraint."""
    m = cd.A.shape[1]
    if not len(cd.p0):
        x = _affine(np.zeros(m), cd)
        if cd.eq_residual(x) > 1e-8:
            raise InfeasibleSliceError(f"equality constraints inconsistent (residual {cd.eq_residual(x):.3g})")
        return x
    th = cp.Variable(m)
    e = cp.Variable(len(cd.b)) if len(cd.b) else None
    tau = cp.Variable(len(cd.p0), nonneg=True)
    p = cd.p0 + cd.P @ th + tau
    s = cd.s0 + cd.S @ th + tau
    zr = np.real(cd.z0) + np.real(cd.Z) @ th
    zi = np.imag(cd.z0) + np.imag(cd.Z) @ th
    cons = [cp.SOC(p + s, cp.vstack([2 * zr, 2 * zi, p - s]), axis=0)]
    obj = cp.sum(tau)
    if e is not None:
        cons.append(cd.A @ th - cd.b == e)
        obj = obj + cp.norm1(e)
    _solve(cp.Problem(cp.Minimize(obj), cons))
    if th.value is None:
        raise InfeasibleSliceError("feasibility phase failed to solve")
    worst_eq = float(np.max(np.abs(e.value))) if e is not None else 0.0
    worst_pos = float(np.max(tau.value))
    if max(worst_eq, worst_pos) > 1e-7:
        if worst_eq >= worst_pos:
            i = int(np.argmax(np.abs(e.value)))
            raise InfeasibleSliceError(f"equality constraint {i} violated by {worst_eq:.3g}")
        i = int(np.argmax(tau.value))
        raise InfeasibleSliceError(f"positivity at sample {i} violated by {worst_pos:.3g}")
    return project(np.asarray(th.value), cd)


def project(y: np.ndarray, cd: ConstraintData, margin: float = 1e-10) -> np.ndarray:
    """Euclidean projection onto ``{A theta = b} cap {positive at samples}``.

    The affine projection is exact and used whenever it is already positive
    at every sample; otherwise a conic projection is solved.
    """
    x = _affine(y, cd)
    if not len(cd.p0) or np.all(cd.min_eigenvalues(x) >= 0):
        return x
    th = cp.Variable(len(y))
    cons = _cone_constraints(th, cd, margin)
    if len(cd.b):
        cons.append(cd.A @ th == cd.b)
    _solve(cp.Problem(cp.Minimize(cp.sum_squares(th - y)), cons))
    if th.value is None:
        raise InfeasibleSliceError("projection failed")
    return _affine(np.asarray(th.value), cd)


def _affine(y: np.ndarray, cd: ConstraintData) -> np.ndarray:
    if not len(cd.b):
        return np.asarray(y, dtype=float).copy()
    r = cd.A @ y - cd.b
    return y - np.linalg.lstsq(cd.A, r, rcond=None)[0]


# ---------------------------------------------------------------------------
# minimization


@dataclass
class MinimizeResult:
    theta: np.ndarray
    energy: float
    Q_self: float
    active: list  # sample indices with min eigenvalue below 1e-8
    certificate: str  # "unique" or "degenerate-with-nullspace"
    iterations: int
    agreement: float
    restricted_min_eigenvalue: float
    nullspace: np.ndarray | None = None
    eq_residual: float = 0.0
    min_eigenvalue: float = 0.0
    starts: list = field(default_factory=list)
    audit: dict | None = None

    def to_json(self, **kw) -> str:
        d = asdict(self)
        return json.dumps(d, default=_json_default, **kw)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o))


def restricted_certificate(Gr: np.ndarray, A: np.ndarray) -> tuple[str, float, np.ndarray | None]:
    """``unique`` iff ``Re G`` is positive definite on the null space of ``A``."""
    m = Gr.shape[0]
    Z = null_space(A) if A.size else np.eye(m)
    if Z.shape[1] == 0:
        return "unique", float("inf"), None
    ev, V = np.linalg.eigh(Z.T @ Gr @ Z)
    if ev[0] > UNIQUE_TOL:
        return "unique", float(ev[0]), None
    return "degenerate-with-nullspace", float(ev[0]), Z @ V[:, ev <= UNIQUE_TOL]


def projected_gradient(Gr: np.ndarray, cd: ConstraintData, x0: np.ndarray, tol: float = 1e-10,
                       max_iter: int = 100_000) -> tuple[np.ndarray, int]:
    """Minimize ``x^T Gr x`` over the slice constraints from the feasible ``x0``.

    Steps to the projection of a gradient step and then performs an exact
    line search along that feasible direction.
    """
    L = 2 * max(float(np.linalg.eigvalsh(Gr)[-1]), 1e-300)
    x = np.asarray(x0, dtype=float)
    for it in range(1, max_iter + 1):
        g = 2 * Gr @ x
        d = project(x - g / L, cd) - x
        if np.linalg.norm(d) * L < tol or np.linalg.norm(d) < 1e-15:
            return x, it
        curv = float(d @ Gr @ d)
        t = 1.0 if curv <= 0 else float(np.clip(-(g @ d) / (2 * curv), 0.0, 1.0))
        if t == 0.0:
            return x, it
        x = x + t * d
    return x, max_iter


def minimize_quadratic(Gr: np.ndarray, cd: ConstraintData, c: float = 1.0, n_starts: int = 8, seed: int = 42,
                       tol: float = 1e-10, max_iter: int = 100_000) -> MinimizeResult:
    """Minimize ``theta^T Gr theta`` under ``cd`` from ``n_starts`` seeded feasible points."""
    Gr = 0.5 * (np.real(Gr) + np.real(Gr).T)
    m = Gr.shape[0]
    x_feas = feasibility(cd)
    scale = max(1.0, float(np.linalg.norm(x_feas)))
    results = []
    for k in range(n_starts):
        rng = np.random.default_rng(seed + k)
        x0 = project(x_feas + scale * rng.normal(size=m), cd)
        x, it = projected_gradient(Gr, cd, x0, tol, max_iter)
        results.append((float(x @ Gr @ x), x, it))
    results.sort(key=lambda r: r[0])
    e_best, x_best, _ = results[0]
    agreement = max(float(np.max(np.abs(r[1] - x_best))) for r in results) if m else 0.0
    cert, lam, ns = restricted_certificate(Gr, cd.A)
    ev = cd.min_eigenvalues(x_best)
    return MinimizeResult(
        theta=x_best, energy=e_best, Q_self=c**2 - 2 * e_best,
        active=[int(i) for i in np.where(ev < 1e-8)[0]], certificate=cert,
        iterations=int(sum(r[2] for r in results)), agreement=agreement,
        restricted_min_eigenvalue=lam, nullspace=ns, eq_residual=cd.eq_residual(x_best),
        min_eigenvalue=float(ev.min()) if len(ev) else 0.0,
        starts=[r[1] for r in results])


def minimize_energy(slc: CurrentSlice, gram: GramResult | None = None, cd: ConstraintData | None = None,
                    q: QuadratureSpec | None = None, n_starts: int = 8, seed: int = 42,
                    tol: float = 1e-10, max_iter: int = 100_000, cutting_rounds: int = 3,
                    n_cuts: int = 64) -> MinimizeResult:
    """Minimize ``E(theta) = theta^T Re(G) theta`` on the slice with multistarts.

    After each solve a fresh audit grid is scanned and its ``n_cuts`` worst
    points join the positivity samples (``cutting_rounds`` times).  The
    reported audit uses a further independent grid.
    """
    gram = gram or assemble_gram(slc)
    cd = cd or constraint_data(slc, q)
    res = minimize_quadratic(np.real(gram.G), cd, slc.c, n_starts, seed, tol, max_iter)
    for k in range(cutting_rounds):
        P, ev = _audit_points(slc, res.theta, seed=1000 + k)
        bad = np.argsort(ev)[:n_cuts]
        bad = bad[ev[bad] < 0]
        if not bad.size:
            break
        cd = add_samples(slc, cd, P[bad])
        res = minimize_quadratic(np.real(gram.G), cd, slc.c, n_starts, seed, tol, max_iter)
    res.audit = positivity_audit(slc, res.theta)
    return res


def linear_constraints(A=None, b=None, m: int | None = None) -> ConstraintData:
    """Constraint data with equalities only (no positivity samples)."""
    A = np.zeros((0, m)) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(0) if b is None else np.atleast_1d(np.asarray(b, dtype=float))
    m = A.shape[1]
    e = np.zeros(0)
    return ConstraintData(A, b, e, e, e.astype(complex), np.zeros((0, m)), np.zeros((0, m)), np.zeros((0, m), dtype=complex))


def _audit_points(slc: CurrentSlice, theta: np.ndarray, n_per: int = 400, seed: int = 5):
    P = support_grid(slc.basis, n_per, seed)
    W0, W = slc.form_stack(P)
    H = W0 + np.tensordot(theta, W, axes=1)
    ev = np.linalg.eigvalsh(0.5 * (H + np.conj(np.swapaxes(H, 1, 2))))[:, 0]
    return P, ev


def positivity_audit(slc: CurrentSlice, theta: np.ndarray, n_per: int = 400, seed: int = 5) -> dict:
    """Worst min-eigenvalue of ``T_theta`` on a dense grid distinct from the constraint samples."""
    P, ev = _audit_points(slc, theta, n_per, seed)
    i = int(np.argmin(ev))
    return {"min_eigenvalue": float(ev[i]), "at": [complex(P[i, 0]), complex(P[i, 1])], "n_points": len(P)}


# ---------------------------------------------------------------------------
# concavity


def q_self(theta: np.ndarray, Gr: np.ndarray, c: float = 1.0) -> float:
    """``Q(T_theta, T_theta) = c^2 - 2 E(theta)``."""
    theta = np.asarray(theta, dtype=float)
    return float(c**2 - 2 * theta @ Gr @ theta)


def concavity_probe(theta: np.ndarray, theta2: np.ndarray, Gr: np.ndarray, c: float = 1.0) -> dict:
    """``Q(midpoint) - (Q(theta) + Q(theta2)) / 2`` beside ``E(theta - theta2) / 2``."""
    theta, theta2 = np.asarray(theta, dtype=float), np.asarray(theta2, dtype=float)
    mid = 0.5 * (theta + theta2)
    probe = q_self(mid, Gr, c) - 0.5 * (q_self(theta, Gr, c) + q_self(theta2, Gr, c))
    diff = theta - theta2
    half_e = 0.5 * float(diff @ Gr @ diff)
    return {"probe": float(probe), "half_energy": half_e, "residual": abs(probe - half_e),
            "q_difference": -2 * float(diff @ Gr @ diff)}


# ---------------------------------------------------------------------------
# catalog slices


def default_basis(m: int = 3) -> list[Form01]:
    """Overlapping bump (0,1)-forms near the origin."""
    spec = [((0.0, 0.0), 0.8, 0, 0.3), ((0.3, 0.1j), 0.7, 1, -0.2), ((-0.2j, 0.25), 0.75, 0, 0.5j),
            ((0.15, -0.2), 0.6, 1, 0.1)]
    if m > len(spec):
        raise ValueError(f"default_basis supports m <= {len(spec)}")
    return [bump_form(c, R, slot, tilt, f"S{k}") for k, (c, R, slot, tilt) in enumerate(spec[:m])]


def default_slice(m: int = 3, shift: float = 0.02, constrained: bool = True, q: QuadratureSpec | None = None) -> CurrentSlice:
    """Catalog slice with one pairing equality.

    The equality asks ``<T_theta, phi>`` to exceed ``<omega, phi>`` by
    ``shift``, with ``phi`` a bump times the identity matrix, so ``theta = 0``
    is excluded.
    """
    basis = default_basis(m)
    cons = []
    if constrained:
        phi = constant_times_bump(np.eye(2), (0.1, 0.0), 0.9, "phi")
        q = q or QuadratureSpec()
        base = float(np.real(integrate_chart(lambda P: wedge_density(OMEGA_UNIT.H(P), phi.H(P)), phi.support, q).value))
        cons = [(phi, base + shift)]
    return CurrentSlice(basis, 1.0, cons, name=f"default-{m}")
