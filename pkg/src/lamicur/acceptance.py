"""Acceptance battery: each criterion runs at its stated tolerance and reports a row.

Rows carry the expected value, the measured value, the tolerance and a
pass/fail status.  ``level`` is ``must`` or ``should``; :func:`run` returns
every row and :func:`summary_ok` is true iff no ``must`` row failed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import ahlfors, catalog, currents, lamination, minimizer
from .quadrature import QuadratureSpec

TARGET_Q_RATIO = 1.0 - 1.0 / (2.0 * np.pi**2)


@dataclass
class CriterionResult:
    number: str
    slug: str
    level: str
    title: str
    expected: str
    got: str
    tolerance: str
    passed: bool
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        return (f"[{self.status}] {self.number} {self.slug} ({self.level}): expected {self.expected}, "
                f"got {self.got}, tol {self.tolerance}")


@dataclass
class Criterion:
    number: str
    slug: str
    level: str
    title: str
    fn: Callable[[QuadratureSpec | None], CriterionResult]


_REPORTS: dict = {}


def _report(cid: str, q: QuadratureSpec | None):
    key = (cid, repr(q))
    if key not in _REPORTS:
        T = catalog.resolve(cid)
        if isinstance(T, currents.Smooth):
            # slab currents are i ddbar of a function of Re w: S = 0, so E = 0 and Q = mass^2
            m = currents.compute_mass(T, q)
            _REPORTS[key] = currents.EnergyReport(m.raw, m.unit, 0.0, m.unit**2, 0.0,
                                                  {"mass": m.error, "energy": 0.0, "q_self": 2 * abs(m.unit) * m.error,
                                                   "combined": 4 * abs(m.unit) * m.error},
                                                  T.name, 1.0, m.converged)
        else:
            _REPORTS[key] = currents.energy_report(T, q)
    return _REPORTS[key]


def _row(number, slug, level, title, expected, got, tol, passed, t0, **details) -> CriterionResult:
    return CriterionResult(number, slug, level, title, expected, got, tol, bool(passed), time.time() - t0, details)


# ---------------------------------------------------------------------------
# criteria


def c1_product_ratio(q=None):
    t0 = time.time()
    _REPORTS.pop(("product:u=v", repr(q)), None)
    r = _report("product:u=v", q)
    secs = time.time() - t0
    ok = abs(r.q_over_mass2 - TARGET_Q_RATIO) <= 1e-3 and secs < 300
    return _row("1", "prop611", "must", "Product current Q/mass^2", f"{TARGET_Q_RATIO:.7f}",
                f"{r.q_over_mass2:.7f} in {secs:.1f}s", "1e-3, < 300 s", ok, t0,
                q_self=r.q_self, mass=r.mass_unit, energy=r.energy)


def c2_q_identity(q=None):
    t0 = time.time()
    rows = {}
    ok = True
    for cid in catalog.CATALOG_IDS:
        r = _report(cid, q)
        bound = 4 * r.error_estimates["combined"]
        rows[cid] = {"residual": r.identity_residual, "bound": bound}
        ok &= r.identity_residual <= bound
    worst = max(v["residual"] for v in rows.values())
    return _row("2", "q-identity", "must", "Q = mass^2 - 2E on catalog currents", "residual <= 4 x error",
                f"max residual {worst:.2e} over {len(rows)}", "4 x combined error", ok and len(rows) >= 6, t0, rows=rows)


def c3_energy_bound(q=None):
    t0 = time.time()
    rows = {}
    ok = True
    for cid in catalog.CATALOG_IDS:
        r = _report(cid, q)
        gap = 2 * r.energy - r.mass_unit**2
        rows[cid] = gap
        ok &= gap <= 1e-6
    worst = max(rows.values())
    return _row("3", "energy-bound", "must", "2E <= mass^2", "2E - mass^2 <= 0", f"max {worst:.3e}", "1e-6", ok, t0,
                gaps=rows)


def c4_pullback(q=None):
    t0 = time.time()
    T = catalog.product_current().potential
    e0 = currents.compute_energy(T, q)
    e1 = currents.compute_energy(currents.pushforward(T, "endomorphism", d=2), q)
    rel = abs(e1.value / e0.value - 1)
    return _row("4", "pullback", "must", "E(f^*T/2) = E(T) for f = z^2", "relative error 0", f"{rel:.2e}", "1e-3",
                rel < 1e-3, t0, E=e0.value, E_pulled=e1.value)


def c5_ahlfors_defect(q=None):
    t0 = time.time()
    worst, n = 0.0, 0
    per_map = {}
    for Phi in (ahlfors.flat_map(), ahlfors.half_plane_map()):
        w = 0.0
        for r in (0.3, 0.6, 0.9):
            for f in ahlfors.image_battery(Phi, 10, seed=0, r_range=(0.1, r)):
                d = ahlfors.defect_identity(Phi, r, f, q)
                w = max(w, d["residual"])
                n += 1
        per_map[Phi.name] = w
        worst = max(worst, w)
    return _row("5", "ahlfors-defect", "must", "<T_r, dd^c f> = circle average - f(p)", "residual 0",
                f"max {worst:.2e} over {n}", "1e-5", worst < 1e-5 and n == 60, t0, per_map=per_map)


def c6_normalized_decay(q=None):
    t0 = time.time()
    Phi = ahlfors.half_plane_map()
    radii = [0.9] + [r for r in ahlfors.default_schedule(Phi.r_max, 12) if r > 0.9]
    p = ahlfors.exhaustion(Phi, radii, q=q)
    ratio = p.defects[0] / p.defects[-1]
    return _row("6", "normalized-decay", "must", "defect(T_r/A(r)) decay on a divergent leaf", "ratio >= 10",
                f"ratio {ratio:.1f}, divergent={p.divergent}", ">= 10", ratio >= 10 and p.divergent, t0,
                radii=p.radii, A=p.A, defects=p.defects)


def c7_koebe_schwarz(q=None):
    t0 = time.time()
    rows = {}
    ok = True
    for Phi in ahlfors.hyperbolicity_catalog():
        h = ahlfors.hyperbolicity_radii(Phi)
        bp = Phi.base_point
        rows[f"{Phi.name}@({bp[0]:.3g}, {bp[1]:.3g})"] = (h["R_x"], h["koebe"])
        ok &= h["R_x"] <= 0.5 + 1e-6 and h["koebe"] >= 1 - 1e-6
    Rmax = max(v[0] for v in rows.values())
    kmin = min(v[1] for v in rows.values())
    return _row("7", "koebe-schwarz", "must", "R_x <= 1/2 and |Phi'(0)| 4 r_x >= 1", "R_x <= 0.5, koebe >= 1",
                f"max R_x {Rmax:.7f}, min koebe {kmin:.4f}", "1e-6", ok, t0, rows={k: list(v) for k, v in rows.items()})


def c8_blaschke(q=None):
    t0 = time.time()
    c = lamination.blaschke_constant()
    b = lamination.blaschke_property(1000, 20, c=0.8)
    s = lamination.sqrt_eta_property(1000)
    ok = abs(c - 0.8) < 1e-9 and b["violations"] == 0 and s["violations"] == 0
    return _row("8", "blaschke", "must", "Blaschke (4/5)^N bound and sqrt(eta) propagation", "0 violations, c = 0.8",
                f"c={c:.10f}, {b['violations']} + {s['violations']} violations", "1e-9", ok, t0,
                blaschke=b, sqrt_eta=s)


def c9a_intersections_affine(q=None):
    t0 = time.time()
    s = lamination.intersection_sweep("affine-C1", lamination.default_eps(6))
    counts = [r["max_count"] for r in s["rows"]]
    return _row("9a", "intersections-affine", "must", "affine-C1 max count constant in eps", "constant",
                f"max counts {counts}", "exact", s["constant"], t0, sweep=s)


def c9b_intersections_rough(q=None):
    t0 = time.time()
    s = lamination.intersection_sweep("rough-Holder", lamination.default_eps(6))
    ok = s["A_hat"] > 0 and s["R2"] > 0.9
    return _row("9b", "intersections-rough", "should", "rough-Holder counts ~ A log(1/eps)", "A > 0, R^2 > 0.9",
                f"A={s['A_hat']:.4f}, R^2={s['R2']:.4f} (max-count R^2={s['R2_max']:.3f})", "R^2 > 0.9", ok, t0, sweep=s)


def c10_bers_royden(q=None):
    t0 = time.time()
    m = catalog.model_motion("rotational")
    K = lamination.bers_royden_check(m, n=40)["K_best"]  # estimated on an independent finer grid
    r = lamination.bers_royden_check(m, K=K, n=20)
    ok = np.isfinite(K) and r["n_violations"] == 0
    return _row("10", "bers-royden", "must", "two-sided Bers-Royden inequality, rotational motion",
                "finite K, 0 violations", f"K={K:.4f}, {r['n_violations']} violations on 20^3", "exact", ok, t0,
                K_best_20=r["K_best"])


def c11_wedge_decay(q=None):
    t0 = time.time()
    s = lamination.wedge_decay_sweep("affine-C1", lamination.default_eps(5))
    first, last = s["rows"][0]["value"], s["rows"][-1]["value"]
    return _row("11", "wedge-decay", "must", "geometric wedge decay", "value(1e-5) < value(1e-1)/10",
                f"{first:.3e} -> {last:.3e}", "factor 10", last < first / 10, t0,
                values=[r["value"] for r in s["rows"]], envelope=[r["envelope"] for r in s["rows"]])


def c12_minimizer(q=None):
    t0 = time.time()
    slc = minimizer.default_slice(3)
    gram = minimizer.assemble_gram(slc)
    cd = minimizer.constraint_data(slc, q)
    res = minimizer.minimize_energy(slc, gram, cd)
    Gr = np.real(gram.G)
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(20):
        a = minimizer.project(rng.normal(scale=0.05, size=3), cd)
        b = minimizer.project(rng.normal(scale=0.05, size=3), cd)
        worst = max(worst, minimizer.concavity_probe(a, b, Gr, slc.c)["residual"])
    ok = res.certificate == "unique" and res.agreement < 1e-4 and worst <= 1e-10
    return _row("12", "minimizer", "must", "multistart agreement and concavity identity",
                "unique, agreement < 1e-4, probe residual <= 1e-10",
                f"{res.certificate}, agreement {res.agreement:.1e}, probe {worst:.1e}", "1e-4 / 1e-10", ok, t0,
                theta=res.theta.tolist(), energy=res.energy, audit=res.audit)


def c13_monge_ampere(q=None):
    t0 = time.time()
    rows = {ex.name: ex.check(200) for ex in catalog.degenerate_ma_examples() if not ex.control}
    worst = max(r["max_abs_det"] for r in rows.values())
    return _row("13", "monge-ampere", "must", "det(i ddbar v) on torus and Hopf examples", "0",
                f"max |det| {worst:.1e}", "1e-8", worst < 1e-8, t0, rows=rows)


def c14_slab(q=None):
    t0 = time.time()
    bat = currents.function_battery(6, 2, seed=0)
    vals = []
    for eps in (0.2, 0.1, 0.05):
        T = catalog.boundary_slab_current(eps=eps)
        vals.append(currents.harmonicity_defect(T, bat, q)["defect"])
    ok = vals[0] > vals[1] > vals[2]
    return _row("14", "slab", "should", "slab defect decreasing in eps (rho = Re w)", "monotone decrease",
                "[" + ", ".join(f"{v:.2e}" for v in vals) + "]", "strict", ok, t0, defects=vals)


def c15_transverse_energy(q=None):
    t0 = time.time()
    a, w = lamination.circle_atoms(256, 1.0)
    e = lamination.transverse_energy(alphas=a, weights=w)["energy"]
    target = np.log(1.0)
    return _row("15", "transverse-energy", "must", "circle atoms energy -> log rho", f"{target:.4f}",
                f"{e:.5f} (n = 256)", "1e-2", abs(e - target) <= 1e-2, t0,
                closed_form=lamination.circle_energy_exact(256, 1.0))


CRITERIA: list[Criterion] = [
    Criterion("1", "prop611", "must", "Product current Q/mass^2", c1_product_ratio),
    Criterion("2", "q-identity", "must", "Energy-Q identity", c2_q_identity),
    Criterion("3", "energy-bound", "must", "Energy bound", c3_energy_bound),
    Criterion("4", "pullback", "must", "Pullback invariance", c4_pullback),
    Criterion("5", "ahlfors-defect", "must", "Ahlfors defect identity", c5_ahlfors_defect),
    Criterion("6", "normalized-decay", "must", "Normalized harmonicity decay", c6_normalized_decay),
    Criterion("7", "koebe-schwarz", "must", "Koebe/Schwarz bounds", c7_koebe_schwarz),
    Criterion("8", "blaschke", "must", "Blaschke bound property test", c8_blaschke),
    Criterion("9a", "intersections-affine", "must", "Intersection regimes (affine)", c9a_intersections_affine),
    Criterion("9b", "intersections-rough", "should", "Intersection regimes (rough)", c9b_intersections_rough),
    Criterion("10", "bers-royden", "must", "Bers-Royden sweep", c10_bers_royden),
    Criterion("11", "wedge-decay", "must", "Geometric wedge decay", c11_wedge_decay),
    Criterion("12", "minimizer", "must", "Minimizer uniqueness", c12_minimizer),
    Criterion("13", "monge-ampere", "must", "Degenerate Monge-Ampere", c13_monge_ampere),
    Criterion("14", "slab", "should", "Slab current", c14_slab),
    Criterion("15", "transverse-energy", "must", "Transverse energy oracle", c15_transverse_energy),
]


def select(only: Sequence[str] | None = None) -> list[Criterion]:
    """Criteria whose number or slug is in ``only`` (all when empty)."""
    if not only:
        return list(CRITERIA)
    keys = {k.strip().lower() for k in only}
    chosen = [c for c in CRITERIA if c.number.lower() in keys or c.slug in keys]
    unknown = keys - {c.number.lower() for c in chosen} - {c.slug for c in chosen}
    if unknown:
        raise KeyError(f"unknown criteria: {sorted(unknown)}")
    return chosen


def run_one(c: Criterion, q: QuadratureSpec | None = None) -> CriterionResult:
    t0 = time.time()
    try:
        return c.fn(q)
    except Exception as e:  # a crash is a failed row, not an aborted battery
        return CriterionResult(c.number, c.slug, c.level, c.title, "-", f"error: {type(e).__name__}: {e}", "-",
                               False, time.time() - t0)


def run(only: Sequence[str] | None = None, q: QuadratureSpec | None = None,
        echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    out = []
    for c in select(only):
        r = run_one(c, q)
        out.append(r)
        if echo is not None:
            echo(r.line())
    return out


def summary_ok(results: Sequence[CriterionResult]) -> bool:
    return all(r.passed for r in results if r.level == "must")


def format_table(results: Sequence[CriterionResult]) -> str:
    head = ["criterion", "level", "expected", "got", "tolerance", "status", "time"]
    rows = [[f"{r.number} {r.slug}", r.level, r.expected, r.got, r.tolerance, r.status, f"{r.seconds:.1f}s"]
            for r in results]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h) for i, h in enumerate(head)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*head), fmt.format(*("-" * w for w in widths))]
    lines += [fmt.format(*row) for row in rows]
    return "\n".join(lines)
