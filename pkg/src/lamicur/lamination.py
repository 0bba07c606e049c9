"""Flow boxes of holomorphic motions, intersection counts and the geometric wedge.

A flow box is a holomorphic motion ``(alpha, z) -> f_alpha(z)`` together
with a finite atomic transversal measure ``sum w_i delta_{alpha_i}``.  Its
plaques are the graphs ``w = w0 + f_alpha(z)`` over ``|z| < plaque_radius``
in the t=1 chart.  Shearing by ``[z : w : t] -> [z : w + eps z : t]`` moves
the plaque of ``beta`` to ``w = f_beta(z) + eps z``; intersections with the
plaque of ``alpha`` are the zeros of ``g = f_beta + eps z - f_alpha``,
counted by the argument principle.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .catalog import HolMotionFamily, model_motion
from .geometry import TWO_PI
from .quadrature import IntegralResult, QuadratureSpec, integrate_box

# ---------------------------------------------------------------------------
# flow boxes


def poisson_weight(zeta: complex, radius: float = 1.0, spread: float = 1.2) -> Callable:
    """Positive harmonic weight on ``|z| < radius``: the Poisson kernel of the disc of radius
    ``spread * radius`` at its boundary point in direction ``zeta``; equals 1 at the centre."""
    rho = spread * radius
    e = rho * zeta / abs(zeta)

    def h(z):
        z = np.asarray(z)
        return (rho**2 - np.abs(z) ** 2) / np.abs(e - z) ** 2

    return h


@dataclass
class FlowBox:
    """Flow box with atomic transversal measure.

    Parameters
    ----------
    motion : HolMotionFamily
    alphas, weights : array_like
        atoms and positive weights.
    h : sequence of callables, optional
        positive harmonic factors on the plaques (default 1).
    plaque_radius : float
    w0 : complex
        vertical offset of the box in the chart.
    chart : str
    """

    motion: HolMotionFamily
    alphas: np.ndarray
    weights: np.ndarray
    h: Sequence[Callable] | None = None
    plaque_radius: float = 1.0
    w0: complex = 0.0
    chart: str = "t=1"

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=complex)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.alphas.shape != self.weights.shape:
            raise ValueError("one weight per atom")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")

    def __len__(self):
        return len(self.alphas)

    def normalized(self) -> "FlowBox":
        return FlowBox(self.motion, self.alphas, self.weights / self.weights.sum(), self.h, self.plaque_radius,
                       self.w0, self.chart)

    def hfac(self, i: int, z) -> np.ndarray:
        if self.h is None:
            return np.ones_like(np.asarray(z, dtype=float))
        return np.asarray(self.h[i](z), dtype=float)

    def plaque(self, i: int, z) -> np.ndarray:
        """Chart points ``(z, w0 + f_alpha_i(z))``."""
        z = np.asarray(z, dtype=complex)
        return np.stack([z, self.w0 + self.motion(self.alphas[i], z)], axis=-1)

    def disjointness(self, n_z: int = 64, seed: int = 0) -> float:
        """min over sampled plaque points and atom pairs of ``|f_a(z) - f_b(z)|``; 0 means overlap."""
        rng = np.random.default_rng(seed)
        z = 0.95 * self.plaque_radius * np.sqrt(rng.random(n_z)) * np.exp(TWO_PI * 1j * rng.random(n_z))
        F = self.motion(self.alphas[:, None], z[None, :])
        iu = np.triu_indices(len(self), 1)
        if len(iu[0]) == 0:
            return np.inf
        return float(np.abs(F[iu[0]] - F[iu[1]]).min())

    def pair_form(self, Hfun: Callable, q: QuadratureSpec | None = None) -> IntegralResult:
        """``<sum w_i h_i [V_i], theta> = sum w_i int h_i (1, f')^T H conj(1, f') 2 dlambda``."""
        q = q or QuadratureSpec()
        out = None
        R = self.plaque_radius
        for i, (a, w) in enumerate(zip(self.alphas, self.weights)):

            def f(X, i=i, a=a, w=w):
                rho, phi = X[:, 0], X[:, 1]
                z = rho * np.exp(1j * phi)
                P = self.plaque(i, z)
                D = np.stack([np.ones_like(z), self.motion.df(a, z) * np.ones_like(z)], axis=1)
                d = 2.0 * np.einsum("nj,njk,nk->n", D, Hfun(P), np.conj(D))
                return w * self.hfac(i, z) * d * rho

            r = integrate_box(f, [0.0, 0.0], [R, TWO_PI], q, initial_splits=(2, 4))
            out = r if out is None else out + r
        return out


def grid_atoms(n: int = 20, radius: float = 0.5) -> np.ndarray:
    """``n x n`` square grid inscribed in the transversal disc."""
    s = radius / np.sqrt(2)
    x = np.linspace(-s, s, n)
    X, Y = np.meshgrid(x, x)
    return (X + 1j * Y).ravel()


def random_atoms(n: int = 400, radius: float = 0.5, seed: int = 0) -> np.ndarray:
    """Uniform sample of the transversal disc (a finite-transverse-energy measure)."""
    u = np.random.default_rng(seed).random((n, 2))  # rows fixed by seed: samples are nested in n
    return radius * np.sqrt(u[:, 0]) * np.exp(TWO_PI * 1j * u[:, 1])


def make_box(motion: HolMotionFamily | str = "affine-C1", atoms: str | np.ndarray = "grid", n: int = 20,
             seed: int = 0, **kw) -> FlowBox:
    m = model_motion(motion) if isinstance(motion, str) else motion
    if isinstance(atoms, str):
        atoms = grid_atoms(n, m.transversal_radius) if atoms == "grid" else random_atoms(n, m.transversal_radius, seed)
    atoms = np.asarray(atoms)
    return FlowBox(m, atoms, np.full(len(atoms), 1.0 / len(atoms)), plaque_radius=m.plaque_radius, **kw)


# ---------------------------------------------------------------------------
# Bers-Royden


def bers_royden_check(motion: HolMotionFamily, K: float | None = None, n: int = 20,
                      t_radius: float | None = None, z_radius: float = 0.8, z_max_for_lemma: float = 1 / 3) -> dict:
    """Sweep ``(t, s, z)`` over an ``n^3`` grid for both Bers-Royden inequalities.

    ``1/K |t-s|^{(1+|z|)/(1-|z|)} <= |F_t(z) - F_s(z)| <= K |t-s|^{(1-|z|)/(1+|z|)}``.

    ``t`` and ``s`` run over ``n`` points of a spiral in the transversal disc
    and ``z`` over ``n`` points of a spiral in ``|z| <= z_radius``.  Returns
    the smallest admissible ``K`` and, for a supplied ``K``, the violating
    triples.  The small-disc specialization (``|z| <= 1/3`` gives exponents 2
    and 1/2) is reported through ``C_lemma``.
    """
    tr = motion.transversal_radius if t_radius is None else t_radius
    k = np.arange(n)
    ts = tr * np.sqrt((k + 0.5) / n) * np.exp(1j * 2.399963229728653 * k)
    zs = z_radius * np.sqrt((k + 0.5) / n) * np.exp(1j * 2.399963229728653 * k + 0.3j)
    F = motion(ts[:, None], zs[None, :]) - motion(0.0, zs)[None, :]  # (t, z), normalized F_0 = 0
    dF = np.abs(F[:, None, :] - F[None, :, :])  # (t, s, z)
    dt = np.abs(ts[:, None] - ts[None, :])[:, :, None] * np.ones_like(dF)
    az = np.abs(zs)[None, None, :] * np.ones_like(dF)
    off = dt > 0
    lo_exp = (1 + az) / (1 - az)
    hi_exp = (1 - az) / (1 + az)
    with np.errstate(divide="ignore", invalid="ignore"):
        need_up = np.where(off, dF / dt**hi_exp, 0.0)
        need_lo = np.where(off, dt**lo_exp / np.where(dF > 0, dF, np.inf), 0.0)
        need_lo = np.where(off & (dF == 0), np.inf, need_lo)
    best = float(max(need_up.max(), need_lo.max()))
    lemma = az <= z_max_for_lemma
    with np.errstate(divide="ignore", invalid="ignore"):
        C_lemma = float(max(np.where(lemma & off, dF / dt**0.5, 0).max(),
                            np.where(lemma & off, dt**2 / np.where(dF > 0, dF, np.inf), 0).max()))
    out = {"motion": motion.kind, "n": n, "K_best": best, "C_lemma": C_lemma, "delta_lemma": z_max_for_lemma}
    if K is not None:
        bad = off & ((dF > K * dt**hi_exp) | (dF < dt**lo_exp / K))
        idx = np.argwhere(bad)
        out["K"] = float(K)
        out["violations"] = [(complex(ts[i]), complex(ts[j]), complex(zs[l])) for i, j, l in idx[:1000]]
        out["n_violations"] = int(bad.sum())
    return out


def shear_separation(box: FlowBox, eps: float, delta: float = 1 / 3, n_z: int = 128) -> dict:
    """``min over atom pairs of d_max(Phi_eps(L_a), L_b)`` on ``|z| <= delta`` against ``|eps|^3``."""
    z = delta * np.exp(TWO_PI * 1j * np.arange(n_z) / n_z)
    F = box.motion(box.alphas[:, None], z[None, :])
    G = F[:, None, :] + eps * z[None, None, :] - F[None, :, :]
    dmax = np.abs(G).max(axis=2)
    return {"eps": eps, "min_dmax": float(dmax.min()), "eps_cubed": abs(eps) ** 3,
            "holds": bool(dmax.min() >= abs(eps) ** 3)}


# ---------------------------------------------------------------------------
# intersections


@dataclass
class IntersectionRecord:
    alpha: complex
    beta: complex
    eps: complex
    count: int
    residual: float  # largest phase step of g on the counting circle
    points: list = field(default_factory=list)  # (chart point (z, w), multiplicity)
    radius: float = 1.0

    def row(self) -> list:
        pts = ";".join(f"{p[0][0]:.12g}|{p[0][1]:.12g}|{p[1]}" for p in self.points)
        return [repr(complex(self.alpha)), repr(complex(self.beta)), repr(complex(self.eps)), self.count, pts]


def records_to_csv(records: Sequence[IntersectionRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "beta", "eps", "N", "points"])
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def _winding(g: Callable, radius: float, n_rows: int = 1, n0: int = 64, n_max: int = 1 << 16,
             block: int = 1 << 21, strict: bool = True):
    """Winding numbers of ``g`` on ``|z| = radius`` for ``n_rows`` functions.

    ``g(rows, z)`` returns an array of shape ``(len(rows), len(z))``.  Sums
    the phase increments around the circle and doubles the sample count for
    the rows whose largest increment is still above ``pi / 4``.  Rows are
    evaluated in blocks of at most ``block`` samples.  Returns the counts and
    the largest phase increment of the accepted sampling (``inf`` for rows
    with a sampled zero when ``strict`` is off).
    """
    N = np.zeros(n_rows, dtype=int)
    step = np.full(n_rows, np.inf)
    active = np.arange(n_rows)
    n = n0
    while active.size:
        z = radius * np.exp(TWO_PI * 1j * np.arange(n) / n)
        per = max(1, block // n)
        for s in range(0, active.size, per):
            rows = active[s:s + per]
            G = g(rows, z)
            A = np.abs(G)
            hit = A.min(axis=-1) < 1e-14 * np.maximum(1.0, A.max(axis=-1))
            with np.errstate(divide="ignore", invalid="ignore"):
                d = np.angle(np.roll(G, -1, axis=-1) / G)
            N[rows] = np.round(d.sum(axis=-1) / TWO_PI).astype(int)
            step[rows] = np.where(hit, np.inf, np.abs(d).max(axis=-1))
            if strict and np.any(hit):
                raise ZeroDivisionError("root on the counting circle")
        if n >= n_max:
            break
        active = active[step[active] >= np.pi / 4]
        n *= 2
    return N, step


def _square_winding(g: Callable, z0: complex, h: float, n: int = 64) -> int:
    """Winding of ``g`` around the square ``z0 + [-h, h]^2`` by phase unwrapping."""
    while True:
        s = np.linspace(-h, h, n, endpoint=False)
        path = np.concatenate([z0 + s - 1j * h, z0 + h + 1j * s, z0 - s + 1j * h, z0 - h - 1j * s])
        G = g(path)
        d = np.angle(np.roll(G, -1) / G)
        if np.abs(d).max() < np.pi / 3 or n > 1 << 14:
            return int(np.round(d.sum() / TWO_PI))
        n *= 2


def _locate_roots(g: Callable, dg: Callable, radius: float, count: int, min_h: float = 1e-7) -> list:
    """Roots of ``g`` in ``|z| < radius`` by recursive square subdivision and Newton polish."""
    found: list = []
    stack = [(0j, radius * 1.01)]
    while stack:
        z0, h = stack.pop()
        if abs(z0) - h * np.sqrt(2) > radius:
            continue
        try:
            k = _square_winding(g, z0, h * 1.01)
        except FloatingPointError:
            k = 2
        if k <= 0:
            continue
        if k == 1 or h < min_h:
            z = z0
            for _ in range(50):
                step = g(np.array([z]))[0] / dg(np.array([z]))[0]
                z = z - step
                if abs(step) < 1e-15 * max(1.0, abs(z)):
                    break
            if abs(z - z0) > 2 * h:
                z = z0
            found.append((complex(z), k))
            continue
        for dz in (-0.5 - 0.5j, 0.5 - 0.5j, -0.5 + 0.5j, 0.5 + 0.5j):
            stack.append((z0 + dz * h, h / 2))
    merged: list = []
    for z, k in found:
        if abs(z) >= radius:
            continue
        for i, (z2, k2) in enumerate(merged):
            if abs(z - z2) < 1e-9:
                break
        else:
            merged.append((z, k))
    return merged


def count_intersections(box: FlowBox, alpha: complex, beta: complex, eps: complex, radius: float | None = None,
                        points: bool = True) -> IntersectionRecord:
    """Intersections of the plaque of ``alpha`` with the sheared plaque of ``beta``."""
    m = box.motion
    R0 = box.plaque_radius * 0.99 if radius is None else radius

    def g(z):
        return m(beta, z) + eps * z - m(alpha, z)

    def dg(z):
        return m.df(beta, z) + eps - m.df(alpha, z)

    for k in range(11):
        R = R0 * (1 + (-1) ** k * 0.001 * ((k + 1) // 2))
        N, res = _winding(lambda rows, z: g(z)[None, :], R, strict=False)
        N, res = int(N[0]), float(res[0])
        if res < np.pi / 4:
            break
    else:
        raise ValueError(f"phase of g not resolved near |z| = {R0} for ({alpha}, {beta}, {eps})")
    pts = []
    if points and N > 0:
        for z, mult in _locate_roots(g, dg, R, N):
            pts.append(((complex(z), complex(box.w0 + m(alpha, z))), mult))
    return IntersectionRecord(complex(alpha), complex(beta), complex(eps), N, res, pts, R)


def pair_counts(box: FlowBox, eps: complex, radius: float | None = None, chunk: int = 16384,
                diagonal: bool = False) -> np.ndarray:
    """Vectorized counts ``N[i, j]`` for the plaque of ``alpha_i`` against the sheared plaque of ``alpha_j``."""
    m = box.motion
    R = box.plaque_radius * 0.99 if radius is None else radius
    n = len(box)
    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    I, J = I.ravel(), J.ravel()
    if not diagonal:
        keep = I != J
        I, J = I[keep], J[keep]
    out = np.zeros((n, n), dtype=int)
    A = box.alphas
    for s in range(0, len(I), chunk):
        ii, jj = I[s:s + chunk], J[s:s + chunk]
        a, b = A[ii][:, None], A[jj][:, None]
        N = np.zeros(len(ii), dtype=int)
        todo = np.arange(len(ii))
        for k in range(11):
            Rk = R * (1 + (-1) ** k * 0.001 * ((k + 1) // 2))
            a_k, b_k = a[todo], b[todo]
            Nk, step = _winding(lambda r, z: m(b_k[r], z) + eps * z - m(a_k[r], z), Rk, len(todo), strict=False)
            ok = step < np.pi / 4
            N[todo[ok]] = Nk[ok]
            todo = todo[~ok]
            if not todo.size:
                break
        else:
            raise ValueError("phase of the intersection function not resolved after radius perturbation")
        out[ii, jj] = N
    return out


def vertical_distances(box: FlowBox, alpha: complex, beta: complex, radius: float | None = None,
                       n: int = 32) -> tuple[float, float]:
    """``(inf, sup)`` of ``|f_alpha - f_beta|`` over a polar grid of ``|z| <= radius``."""
    R = box.plaque_radius * 0.99 if radius is None else radius
    r = np.linspace(0, R, n)
    z = (r[:, None] * np.exp(TWO_PI * 1j * np.arange(n) / n)[None, :]).ravel()
    d = np.abs(box.motion(alpha, z) - box.motion(beta, z))
    return float(d.min()), float(d.max())


def comparability_constant(box: FlowBox, radius: float | None = None, max_pairs: int = 2000, seed: int = 0) -> float:
    """``max d_max / d_min`` over (sampled) distinct atom pairs."""
    rng = np.random.default_rng(seed)
    n = len(box)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if len(pairs) > max_pairs:
        pairs = [pairs[k] for k in rng.choice(len(pairs), max_pairs, replace=False)]
    ratios = []
    for i, j in pairs:
        lo, hi = vertical_distances(box, box.alphas[i], box.alphas[j], radius)
        ratios.append(hi / lo if lo > 0 else np.inf)
    return float(max(ratios))


# ---------------------------------------------------------------------------
# sweeps


def default_eps(n_decades: int = 6) -> list[float]:
    return [10.0 ** -k for k in range(1, n_decades + 1)]


def intersection_sweep(motion: HolMotionFamily | str = "affine-C1", eps_list: Sequence[float] | None = None,
                       n: int = 20, scale_atoms: bool | None = None, diagonal: bool = True) -> dict:
    """Max and total intersection counts over atom pairs along an ``eps`` schedule.

    With ``scale_atoms`` (default for the rough-Holder motion) the atom grid
    is rescaled to ``eps`` for every sweep point, probing the transversal
    scale at which that motion fails to be Lipschitz.  Reports the constant
    ``N_hat`` (max count) and fits ``count ~ A log(1/eps) + b`` with ``R^2``
    for the mean count per pair (``A_hat``, ``R2``) and for the max count
    (``A_hat_max``, ``R2_max``).
    Diagonal pairs (a plaque against its own shear, one transverse point at
    ``z = 0``) are included by default.  The grid is ``n x n`` atoms.
    """
    m = model_motion(motion) if isinstance(motion, str) else motion
    eps_list = list(default_eps() if eps_list is None else eps_list)
    if scale_atoms is None:
        scale_atoms = m.kind == "rough-Holder"
    rows = []
    for eps in eps_list:
        atoms = grid_atoms(n, m.transversal_radius)
        if scale_atoms:
            atoms = atoms * (eps / m.transversal_radius)
        box = FlowBox(m, atoms, np.full(len(atoms), 1.0 / len(atoms)), plaque_radius=m.plaque_radius)
        N = pair_counts(box, eps, diagonal=diagonal)
        n_pairs = N.size if diagonal else N.size - len(atoms)
        rows.append({"eps": eps, "max_count": int(N.max()), "total_count": int(N.sum()),
                     "mean_count": float(N.sum() / n_pairs), "pairs_hit": int((N > 0).sum())})
    x = np.log(1.0 / np.asarray(eps_list))
    y = np.array([r["max_count"] for r in rows], dtype=float)
    fit_max = _log_fit(x, y)
    fit_mean = _log_fit(x, np.array([r["mean_count"] for r in rows]))
    return {"motion": m.kind, "rows": rows, "N_hat": int(y.max()), "constant": bool(np.ptp(y) == 0),
            "A_hat": fit_mean[0], "b_hat": fit_mean[1], "R2": fit_mean[2],
            "A_hat_max": fit_max[0], "b_hat_max": fit_max[1], "R2_max": fit_max[2], "scale_atoms": bool(scale_atoms)}


def _log_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least squares ``y ~ A x + b`` with ``R^2`` (nan for constant data)."""
    if len(x) < 2 or np.ptp(y) == 0:
        return 0.0, float(y.mean()) if len(y) else 0.0, float("nan")
    A, b = np.polyfit(x, y, 1)
    r2 = 1 - np.sum((y - (A * x + b)) ** 2) / np.sum((y - y.mean()) ** 2)
    return float(A), float(b), float(r2)


def sweep_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# transverse energy


def _pair_energy(alphas: np.ndarray, weights: np.ndarray) -> float:
    d = np.abs(alphas[:, None] - alphas[None, :])
    iu = np.triu_indices(len(alphas), 1)
    if np.any(d[iu] == 0):
        raise ValueError("coincident atoms: a point mass makes the energy -inf")
    W = weights[:, None] * weights[None, :]
    return float(2.0 * np.sum(W[iu] * np.log(d[iu])))


def transverse_energy(box: FlowBox | None = None, alphas=None, weights=None,
                      refine: Callable[[int], tuple] | None = None, levels: Sequence[int] = ()) -> dict:
    """``sum_{i != j} w_i w_j log|alpha_i - alpha_j|`` with an optional refinement trend.

    ``refine(n)`` returns ``(alphas, weights)`` of the ``n``-atom
    approximation of the same measure; the energies along ``levels`` form
    the trend.  ``divergent`` is set when the trend keeps decreasing by more
    than 0.1 per level without its increments shrinking (the signature of a
    point mass or of infinite energy; finite-energy samples settle with
    increments of order ``log n / n``).
    """
    if box is not None:
        alphas, weights = box.alphas, box.weights
    alphas = np.asarray(alphas, dtype=complex)
    weights = np.asarray(weights, dtype=float)
    weights = weights / weights.sum()
    out = {"energy": _pair_energy(alphas, weights), "n": len(alphas)}
    if refine is not None and levels:
        trend = []
        for n in levels:
            a, w = refine(n)
            w = np.asarray(w, float)
            trend.append(_pair_energy(np.asarray(a, complex), w / w.sum()))
        inc = np.diff(trend)
        out["levels"] = list(levels)
        out["trend"] = trend
        out["divergent"] = bool(len(inc) >= 2 and np.all(inc < 0) and abs(inc[-1]) >= 0.5 * abs(inc[0])
                                and inc[-1] < -0.1)
    return out


def circle_atoms(n: int, rho: float = 1.0):
    return rho * np.exp(TWO_PI * 1j * np.arange(n) / n), np.full(n, 1.0 / n)


def circle_energy_exact(n: int, rho: float = 1.0) -> float:
    """Closed form of the diagonal-free energy of ``n`` equal atoms on ``|z| = rho``:
    ``((n-1)/n) log rho + (log n)/n``, from ``prod_{k=1}^{n-1} |1 - e^{2 pi i k/n}| = n``."""
    return (n - 1) / n * np.log(rho) + np.log(n) / n


def geometric_atoms(n: int, ratio: float = 0.5):
    """Equal-weight atoms ``ratio^k`` accumulating at 0."""
    return ratio ** np.arange(1, n + 1) + 0j, np.full(n, 1.0 / n)


# ---------------------------------------------------------------------------
# geometric wedge


def geometric_wedge(box: FlowBox, eps: complex, phi: Callable | None = None, radius: float | None = None,
                    diagonal: bool = False) -> dict:
    """``sum_{a, b} w_a w_b sum_{p in J_ab} phi(p) h_a(p) h_b(p)``.

    ``J_ab`` are the intersections of the plaque of ``a`` with the sheared
    plaque of ``b``.  Diagonal pairs are excluded by default: they carry
    ``mu x mu`` mass only through the atoms themselves, and the measures
    being approximated have no point masses.  The diagonal contribution is
    reported separately.
    """
    R = box.plaque_radius * 0.99 if radius is None else radius
    N = pair_counts(box, eps, R, diagonal=True)
    w = box.weights
    total = 0.0
    diag = 0.0
    hits = np.argwhere(N > 0)
    n_hit = 0
    for i, j in hits:
        if phi is None and box.h is None:
            val = float(N[i, j])
        else:
            rec = count_intersections(box, box.alphas[i], box.alphas[j], eps, R)
            val = 0.0
            for (z, wv), mult in rec.points:
                p = np.array([z, wv])
                f = 1.0 if phi is None else float(np.real(phi(p)))
                val += mult * f * float(box.hfac(i, z)) * float(box.hfac(j, z))
        if i == j:
            diag += w[i] * w[j] * val
        else:
            total += w[i] * w[j] * val
            n_hit += 1
    value = total + (diag if diagonal else 0.0)
    return {"eps": abs(eps), "value": value, "diagonal_term": diag, "pairs_hit": n_hit,
            "max_count": int(N.max())}


def wedge_envelope(box: FlowBox, eps: float, C: float, N: int, A: float | None = None) -> float:
    """``C sum_{|a - b| <= C eps} w_a w_b min(N, A log(1/eps))`` over distinct pairs."""
    d = np.abs(box.alphas[:, None] - box.alphas[None, :])
    W = box.weights[:, None] * box.weights[None, :]
    close = (d <= C * eps) & (d > 0)
    factor = N if A is None else min(N, A * np.log(1 / eps))
    return float(C * np.sum(W[close]) * factor)


def wedge_decay_sweep(motion: HolMotionFamily | str = "affine-C1", eps_list: Sequence[float] | None = None,
                      n_atoms: int = 400, seed: int = 0) -> dict:
    """Geometric wedge of a random-atom box (finite transverse energy) along an ``eps`` schedule."""
    m = model_motion(motion) if isinstance(motion, str) else motion
    eps_list = list(default_eps(5) if eps_list is None else eps_list)
    box = make_box(m, "random", n_atoms, seed)
    C = comparability_constant(box, max_pairs=300)
    rows = []
    for eps in eps_list:
        g = geometric_wedge(box, eps)
        g["envelope"] = wedge_envelope(box, eps, C, max(1, g["max_count"]))
        rows.append(g)
    return {"motion": m.kind, "rows": rows, "energy": transverse_energy(box)["energy"], "C": C,
            "decay_ratio": rows[-1]["value"] / rows[0]["value"] if rows[0]["value"] > 0 else 0.0}


# ---------------------------------------------------------------------------
# Blaschke products and subharmonic propagation


def blaschke(zeros: Sequence[complex]) -> Callable:
    """``B(z) = prod (z - a) / (1 - conj(a) z)``."""
    a = np.asarray(zeros, dtype=complex)

    def B(z):
        z = np.asarray(z, dtype=complex)
        return np.prod((z[..., None] - a) / (1 - np.conj(a) * z[..., None]), axis=-1)

    return B


def disc_grid(radius: float, n_r: int = 40, n_phi: int = 128) -> np.ndarray:
    r = radius * np.linspace(0, 1, n_r)
    return (r[:, None] * np.exp(TWO_PI * 1j * np.arange(n_phi) / n_phi)[None, :]).ravel()


def blaschke_constant(n: int = 101) -> float:
    """Grid maximum of ``|z - a| / |1 - conj(a) z|`` over ``|a|, |z| <= 1/2``.

    The pseudo-hyperbolic distance increases with ``|z|`` and ``|a|`` and is
    maximal for antipodal boundary points, where it equals ``1 / (5/4) = 4/5``.
    """
    G = disc_grid(0.5, n, 2 * n)
    best = 0.0
    for a in disc_grid(0.5, 21, 64):
        best = max(best, float(np.max(np.abs(G - a) / np.abs(1 - np.conj(a) * G))))
    return best


def blaschke_property(n_samples: int = 1000, n_max: int = 20, seed: int = 0, c: float = 0.8) -> dict:
    """Random products of ``N <= n_max`` factors with zeros in ``Delta(0, 1/2)``: ``sup |B| <= c^N`` on a grid."""
    rng = np.random.default_rng(seed)
    G = disc_grid(0.5, 24, 96)
    worst = -np.inf
    fails = 0
    for _ in range(n_samples):
        N = int(rng.integers(1, n_max + 1))
        zeros = 0.5 * np.sqrt(rng.random(N)) * np.exp(TWO_PI * 1j * rng.random(N))
        s = float(np.abs(blaschke(zeros)(G)).max())
        gap = s - c**N
        worst = max(worst, gap)
        fails += gap > 1e-9
    return {"n": n_samples, "worst_excess": worst, "violations": fails}


def sqrt_eta_property(n_samples: int = 1000, seed: int = 0, n_circle: int = 2048) -> dict:
    """``|g| < 1`` on the disc and ``|g| < eta`` on ``Delta(0, 1/4)`` imply ``|g| < sqrt(eta)`` on ``Delta(0, 1/2)``.

    Samples are random polynomials (degree <= 12) times random Blaschke
    factors, scaled so that the unit-circle maximum is ``1/1.01``.  Maxima
    over discs are taken on their boundary circles.
    """
    rng = np.random.default_rng(seed)
    ph = np.exp(TWO_PI * 1j * np.arange(n_circle) / n_circle)
    fails, worst = 0, -np.inf
    for _ in range(n_samples):
        deg = int(rng.integers(0, 13))
        co = (rng.normal(size=deg + 1) + 1j * rng.normal(size=deg + 1)) * rng.random(deg + 1) ** 2
        k = int(rng.integers(0, 4))
        zeros = 0.6 * np.sqrt(rng.random(k)) * np.exp(TWO_PI * 1j * rng.random(k))
        B = blaschke(zeros)

        def g(z):
            return np.polyval(co, z) * B(z)

        m1 = float(np.abs(g(ph)).max())
        if m1 == 0:
            continue
        scale = 1.0 / (1.01 * m1)
        eta = float(np.abs(scale * g(0.25 * ph)).max())
        m_half = float(np.abs(scale * g(0.5 * ph)).max())
        gap = m_half - np.sqrt(eta)
        worst = max(worst, gap)
        fails += gap >= 0
    return {"n": n_samples, "worst_gap": worst, "violations": fails}


def to_json(obj) -> str:
    def conv(o):
        if isinstance(o, complex):
            return [o.real, o.imag]
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))

    return json.dumps(obj, default=conv, sort_keys=True)
