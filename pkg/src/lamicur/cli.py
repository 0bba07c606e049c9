"""Command-line front end.

``lamicur [global options] <command> [options]``.  Global options may also
come from a YAML config file (``--config``); command-line flags override the
file and unknown keys are rejected.  Every JSON output embeds the resolved
config and the package version; CSV outputs (RFC 4180) carry both as the
last two columns of every row.  Exit codes: 0 success, 1 configuration error or failed ``must``
criterion, 2 quadrature non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import fields

import yaml

from . import __version__

EXIT_OK, EXIT_CONFIG, EXIT_QUADRATURE = 0, 1, 2

COMMANDS = ("report", "ahlfors", "intersect", "wedge-decay", "minimize", "catalog", "verify", "sweep")
SWEEP_KINDS = ("intersect", "ahlfors", "wedge-decay")
CONFIG_KEYS = {"command", "current", "leaf", "motion", "eps", "radii", "quad", "out", "seed", "only", "basis",
               "shift", "battery", "sweep", "n_atoms", "grid"}
DEFAULTS = {"seed": 42, "current": "fubini", "leaf": "half-plane", "motion": "affine-C1", "radii": "geometric",
            "eps": None, "quad": {}, "out": None, "only": [], "basis": 3, "shift": 0.02, "battery": 3,
            "sweep": None, "n_atoms": 400, "grid": 20}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config


def _threads():
    n = os.environ.get("LAMICUR_THREADS")
    if n is None:
        return 1
    try:
        n = int(n)
    except ValueError as e:
        raise ConfigError(f"LAMICUR_THREADS must be an integer, got {n!r}") from e
    if n < 1:
        raise ConfigError("LAMICUR_THREADS must be >= 1")
    return n


def _cap_threads(n: int) -> None:
    # must run before numpy / jax spin up their pools
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))
    flags = os.environ.get("XLA_FLAGS", "")
    if "intra_op_parallelism_threads" not in flags:
        os.environ["XLA_FLAGS"] = (flags + f" --xla_cpu_multi_thread_eigen={'true' if n > 1 else 'false'}"
                                   f" intra_op_parallelism_threads={n}").strip()


def parse_quad(items) -> dict:
    """``["rel_tol=1e-4", "max_boxes=200"]`` or a mapping -> QuadratureSpec overrides."""
    from .quadrature import QuadratureSpec

    allowed = {f.name: f.type for f in fields(QuadratureSpec)}
    out = {}
    if isinstance(items, dict):
        pairs = list(items.items())
    else:
        pairs = []
        for it in items or []:
            for kv in str(it).split(","):
                if not kv.strip():
                    continue
                k, sep, v = kv.partition("=")
                if not sep:
                    raise ConfigError(f"quadrature override {kv!r} is not key=value")
                pairs.append((k.strip(), v.strip()))
    for k, v in pairs:
        if k not in allowed:
            raise ConfigError(f"unknown quadrature key {k!r} (allowed: {sorted(allowed)})")
        default = getattr(QuadratureSpec(), k)
        if isinstance(default, bool):
            v = str(v).lower() in ("1", "true", "yes")
        elif isinstance(default, int) and not isinstance(default, bool):
            v = _num(int, k, v)
        elif isinstance(default, float):
            v = _num(float, k, v)
        elif k == "rule":
            v = None if str(v).lower() == "none" else _num(int, k, v)
        out[k] = v
    return out


def _num(kind, key, v):
    try:
        return kind(v)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"quadrature key {key!r} expects {kind.__name__}, got {v!r}") from e


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config {path} is not valid YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def _eps_list(spec) -> list[float]:
    """``"1e-1..1e-6"`` (decades), ``"0.1,0.01"`` or a list."""
    try:
        out = _parse_eps(spec)
    except ValueError as e:
        raise ConfigError(f"bad eps list {spec!r}") from e
    if any(not 0 < e < 1 for e in out):
        raise ConfigError("eps values must lie in (0, 1)")
    return out


def _parse_eps(spec) -> list[float]:
    if spec is None:
        return []
    if isinstance(spec, (list, tuple)):
        return [float(e) for e in spec]
    s = str(spec)
    if ".." in s:
        a, b = (float(x) for x in s.split(".."))
        import numpy as np

        lo, hi = np.log10(b), np.log10(a)
        n = int(round(hi - lo)) + 1
        return [float(10.0**e) for e in np.linspace(hi, lo, n)]
    return [float(x) for x in s.split(",") if x.strip()]


def _radii(spec, r_max: float) -> list[float]:
    from .ahlfors import default_schedule

    if spec in (None, "geometric"):
        return default_schedule(r_max)
    if isinstance(spec, (list, tuple)):
        return [float(r) for r in spec]
    return [float(r) for r in str(spec).split(",") if r.strip()]


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    file_cfg = load_config(args.config)
    cfg.update(file_cfg)
    for k in CONFIG_KEYS:
        v = getattr(args, k, None)
        if v is not None and not (isinstance(v, list) and not v):
            cfg[k] = v
    cfg["command"] = args.command
    if args.command == "sweep":
        cfg["sweep"] = args.kind
    q = dict(parse_quad(file_cfg.get("quad", {})))
    q.update(parse_quad(args.quad))
    cfg["quad"] = q
    from .quadrature import QuadratureSpec

    try:
        QuadratureSpec(**q)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid quadrature settings: {e}") from e
    if isinstance(cfg["only"], str):
        cfg["only"] = [s for s in cfg["only"].split(",") if s]
    cfg["seed"] = int(cfg["seed"])
    cfg["threads"] = _threads()
    return {k: cfg[k] for k in sorted(cfg)}


# ---------------------------------------------------------------------------
# output


def _jsonable(o):
    import numpy as np

    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if hasattr(o, "__dataclass_fields__"):
        from dataclasses import asdict

        return asdict(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def emit_json(payload: dict, cfg: dict) -> str:
    doc = {"lamicur_version": __version__, "config": cfg, **payload}
    text = json.dumps(doc, default=_jsonable, sort_keys=True, indent=2) + "\n"
    _write(text, cfg)
    return text


def emit_csv(rows: list[dict], cfg: dict) -> str:
    """RFC 4180 CSV; every row carries the version and the resolved config (JSON) in its last two columns."""
    buf = io.StringIO()
    echo = {"lamicur_version": __version__, "config": json.dumps(cfg, default=_jsonable, sort_keys=True)}
    keys: list = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    keys += list(echo)
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**{k: _cell(r.get(k, "")) for k in keys[:-2]}, **echo})
    text = buf.getvalue()
    _write(text, cfg)
    return text


def _cell(v):
    import numpy as np

    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, default=_jsonable, sort_keys=True)
    return v


def _write(text: str, cfg: dict) -> None:
    if cfg.get("out"):
        with open(cfg["out"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _quad(cfg):
    from .quadrature import QuadratureSpec

    try:
        return QuadratureSpec(**cfg["quad"]) if cfg["quad"] else None
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _motion(cfg):
    from .catalog import model_motion

    try:
        return model_motion(cfg["motion"])
    except ValueError as e:
        raise ConfigError(str(e)) from e


# ---------------------------------------------------------------------------
# commands


def cmd_catalog(cfg) -> int:
    from .ahlfors import catalog_maps
    from .catalog import CATALOG_IDS

    payload = {"currents": CATALOG_IDS, "maps": sorted(catalog_maps()),
               "motions": ["affine-C1", "rotational", "rough-Holder", "trivial"],
               "verify": [f"{c.number}:{c.slug}" for c in _criteria()]}
    emit_json(payload, cfg)
    return EXIT_OK


def _criteria():
    from .acceptance import CRITERIA

    return CRITERIA


def cmd_report(cfg) -> int:
    from .catalog import resolve
    from .currents import (Potential, Smooth, closedness_defect, compute_mass, function_battery,
                           harmonicity_defect, one_form_battery, energy_report)

    q = _quad(cfg)
    try:
        T = resolve(cfg["current"])
    except (KeyError, ValueError) as e:
        raise ConfigError(str(e)) from e
    if isinstance(T, Smooth):
        m = compute_mass(T, q)
        rep = {"name": T.name, "mass_unit": m.unit, "mass_raw": m.raw, "converged": m.converged}
        converged = m.converged
    elif isinstance(T, Potential):
        r = energy_report(T, q)
        rep = _jsonable(r)
        converged = r.converged
    else:
        raise ConfigError("report supports Potential and Smooth currents")
    n = int(cfg["battery"])
    sing = list(getattr(T, "singular_points", []) or [])
    defects = {}
    if n > 0:
        hd = harmonicity_defect(T, function_battery(n, 0, seed=cfg["seed"], singular_points=sing), q)
        cd = closedness_defect(T, one_form_battery(n, seed=cfg["seed"] + 1, singular_points=sing), q)
        defects = {"harmonicity": hd["defect"], "closedness": cd["defect"]}
        # zero-valued pairings often miss abs_tol while being tiny; listed, not fatal
        rep["unconverged_defect_pairings"] = hd["skipped"]
    rep["defects"] = defects
    emit_json({"report": rep}, cfg)
    rows = [("mass (unit)", rep.get("mass_unit")), ("mass (raw)", rep.get("mass_raw")), ("energy", rep.get("energy")),
            ("Q(T,T)", rep.get("q_self")), ("Q/mass^2", rep.get("q_over_mass2")),
            ("identity residual", rep.get("identity_residual"))] + [(f"{k} defect", v) for k, v in defects.items()]
    for k, v in rows:
        if v is not None:
            _info(f"{k:<22} {v:.10g}")
    return EXIT_OK if converged else EXIT_QUADRATURE


def _map(name: str):
    from . import ahlfors

    maps = ahlfors.catalog_maps()
    maps["linear"] = maps["half-plane"]  # a hyperbolic leaf of the linear foliation
    if name not in maps:
        raise ConfigError(f"unknown leaf {name!r} (choose from {sorted(maps)})")
    return maps[name]


def cmd_ahlfors(cfg) -> int:
    from .ahlfors import exhaustion

    Phi = _map(cfg["leaf"])
    radii = _radii(cfg["radii"], Phi.r_max)
    q = _quad(cfg)
    try:
        p = exhaustion(Phi, radii, q=q)
        rows = [{"r": r, "A": a, "ell": ell, **{f"pairing_{i + 1}": v for i, v in enumerate(row)}, "defect": d,
                 "status": "ok"} for r, a, ell, row, d in zip(p.radii, p.A, p.lengths, p.pairings, p.defects)]
        ok = p.converged
    except Exception as e:  # fall back to one radius at a time so that partial rows survive
        rows, ok = [], False
        for r in radii:
            try:
                pr = exhaustion(Phi, [r], q=q)
                rows.append({"r": r, "A": pr.A[0], "ell": pr.lengths[0],
                             **{f"pairing_{i + 1}": v for i, v in enumerate(pr.pairings[0])},
                             "defect": pr.defects[0], "status": "ok"})
            except Exception as e_r:
                rows.append({"r": r, "status": f"error: {type(e_r).__name__}: {e_r}"})
        _info(f"exhaustion failed as a batch ({e}); rows computed individually")
    emit_csv(rows, cfg)
    return EXIT_OK if ok else EXIT_QUADRATURE


def _grids(spec) -> list[int]:
    try:
        vals = [int(g) for g in (spec if isinstance(spec, (list, tuple)) else str(spec).split(",")) if str(g).strip()]
    except ValueError as e:
        raise ConfigError(f"bad grid list {spec!r}") from e
    if not vals or min(vals) < 1:
        raise ConfigError("grid sizes must be positive integers")
    return vals


def cmd_intersect(cfg) -> int:
    from .lamination import default_eps, intersection_sweep

    eps = _eps_list(cfg["eps"]) or default_eps(6)
    m = _motion(cfg)
    rows = []
    for n in _grids(cfg["grid"]):
        for e in eps:
            try:
                s = intersection_sweep(m, [e], n=n)
                rows.append({"grid": n, **s["rows"][0], "motion": s["motion"], "status": "ok"})
            except Exception as ex:
                rows.append({"grid": n, "eps": e, "motion": cfg["motion"], "status": f"error: {type(ex).__name__}: {ex}"})
    emit_csv(rows, cfg)
    return EXIT_OK


def cmd_wedge(cfg) -> int:
    from .lamination import default_eps, wedge_decay_sweep

    eps = _eps_list(cfg["eps"]) or default_eps(5)
    s = wedge_decay_sweep(_motion(cfg), eps, n_atoms=int(cfg["n_atoms"]), seed=cfg["seed"])
    rows = [{"eps": r["eps"], "value": r["value"], "envelope": r["envelope"], "pairs_hit": r["pairs_hit"],
             "max_count": r["max_count"], "diagonal_term": r["diagonal_term"], "status": "ok"} for r in s["rows"]]
    emit_csv(rows, cfg)
    return EXIT_OK


def cmd_minimize(cfg) -> int:
    from .minimizer import assemble_gram, constraint_data, default_slice, minimize_energy

    q = _quad(cfg)
    slc = default_slice(int(cfg["basis"]), float(cfg["shift"]), q=q)
    gram = assemble_gram(slc, workers=cfg["threads"])
    res = minimize_energy(slc, gram, constraint_data(slc, q), seed=cfg["seed"])
    emit_json({"gram": {"G": [[[v.real, v.imag] for v in row] for row in gram.G], "converged": gram.converged,
                        "min_eigenvalue": gram.min_eigenvalue, "mass_check": gram.mass_check},
               "result": json.loads(res.to_json())}, cfg)
    _info(f"theta* = {res.theta}  energy* = {res.energy:.6g}  certificate = {res.certificate}  "
          f"agreement = {res.agreement:.2e}")
    return EXIT_OK if gram.converged else EXIT_QUADRATURE


def cmd_verify(cfg) -> int:
    from .acceptance import format_table, run, summary_ok

    try:
        results = run(cfg["only"], _quad(cfg), echo=_info)
    except KeyError as e:
        raise ConfigError(str(e)) from e
    _info(format_table(results))
    emit_json({"criteria": [{k: v for k, v in _jsonable(r).items() if k not in ("details", "seconds")} | {"status": r.status}
                            for r in results], "all_must_pass": summary_ok(results)}, cfg)
    return EXIT_OK if summary_ok(results) else EXIT_CONFIG


def cmd_sweep(cfg) -> int:
    kind = cfg["sweep"]
    return {"intersect": cmd_intersect, "ahlfors": cmd_ahlfors, "wedge-decay": cmd_wedge}[kind](cfg)


HANDLERS = {"report": cmd_report, "ahlfors": cmd_ahlfors, "intersect": cmd_intersect, "wedge-decay": cmd_wedge,
            "minimize": cmd_minimize, "catalog": cmd_catalog, "verify": cmd_verify, "sweep": cmd_sweep}


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser, default=None) -> None:
    # accepted before or after the command; values given after the command win
    p.add_argument("--config", default=default, help="YAML config file")
    p.add_argument("--seed", type=int, default=default, help="random seed (default 42)")
    p.add_argument("--out", default=default, help="output path (default stdout)")
    p.add_argument("--quad", action="append", default=[] if default is None else default, metavar="KEY=VALUE",
                   help="QuadratureSpec override, e.g. rel_tol=1e-4 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lamicur", description="Positive harmonic currents on P^2: reports and sweeps.")
    p.add_argument("--version", action="version", version=f"lamicur {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("report", help="mass, energy, Q and defects of a catalog current")
    s.add_argument("--current", help="catalog id, e.g. product:u=v")
    s.add_argument("--battery", type=int, help="test functions per defect battery (0 skips defects)")

    s = sub.add_parser("ahlfors", help="Ahlfors exhaustion profile (CSV)")
    s.add_argument("--leaf")
    s.add_argument("--radii", help="'geometric' or comma-separated radii")

    s = sub.add_parser("intersect", help="intersection counts along an eps sweep (CSV)")
    s.add_argument("--motion")
    s.add_argument("--eps", help="'1e-1..1e-6' or comma-separated values")
    s.add_argument("--grid", help="atoms per side of the grid; a comma list sweeps the resolution")

    s = sub.add_parser("wedge-decay", help="geometric wedge along an eps sweep (CSV)")
    s.add_argument("--motion")
    s.add_argument("--eps")
    s.add_argument("--n-atoms", dest="n_atoms", type=int)

    s = sub.add_parser("minimize", help="energy minimization on a catalog slice (JSON)")
    s.add_argument("--basis", type=int, help="number of basis forms (<= 4)")
    s.add_argument("--shift", type=float, help="pairing excess forced by the equality constraint")

    sub.add_parser("catalog", help="list catalog ids (JSON)")

    s = sub.add_parser("verify", help="run the acceptance battery")
    s.add_argument("--only", help="comma-separated criterion numbers or slugs")

    s = sub.add_parser("sweep", help="sweep drivers writing CSV")
    s.add_argument("kind", choices=SWEEP_KINDS)
    s.add_argument("--motion")
    s.add_argument("--eps")
    s.add_argument("--leaf")
    s.add_argument("--radii")
    s.add_argument("--grid", help="comma list of grid sizes (intersect)")
    s.add_argument("--n-atoms", dest="n_atoms", type=int)

    _common(p)
    for sp in sub.choices.values():
        _common(sp, argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        _cap_threads(cfg["threads"])
        return HANDLERS[cfg["command"]](cfg)
    except ConfigError as e:
        print(f"lamicur: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
