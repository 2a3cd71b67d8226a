"""Command-line front end.

Every subcommand reads a crystal spec (and, where relevant, a perturbation
spec), runs one experiment and writes CSV or JSON.  Options may come from a
JSON file given with ``--config``; flags given on the command line win.

Exit codes: 0 success, 2 invalid input, 3 numerical refusal.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from contextlib import nullcontext

import numpy as np

from .bloch import estimate_thresholds, sample_bands, spectrum_h0
from .conditions import check_cm5, check_condition
from .dynamics import wave_probe
from .graph import UnboundedTailError, operator_norm_bound
from .perturbation import PerturbedGraph, verify_decomposition
from .spectral import NumericalRefusal, count_eigenvalues_in
from .specfile import SpecError, read_crystal, read_perturbation

THREADS_ENV = "TOPOCRYSTAL_THREADS"

# option -> (type, default); None defaults mean "required" or "unused"
OPTIONS = {
    "crystal": (str, None),
    "perturbation": (str, None),
    "output": (str, None),
    "format": (str, "csv"),
    "seed": (int, 0),
    "threads": (int, None),
    "N": (int, 64),
    "tolerance": (float, 1e-6),
    "K": (int, 12),
    "fit_levels": (str, None),
    "s": (float, 0.75),
    "trials": (int, 20),
    "support_radius": (int, 3),
    "window": (int, None),
    "interval": (str, None),
    "L": (str, None),
    "times": (str, "10,20,40,80"),
    "localization": (float, 0.9),
    "buffer": (float, 0.05),
    "sigma": (float, 16.0),
    "boundary_tol": (float, 1e-6),
}


class ValidationError(ValueError):
    pass


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.17g" % v
    return str(value)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _floats(text, name: str) -> list[float]:
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"--{name}: expected comma separated numbers, got {text!r}") from None


def _positive(cfg, *names):
    for name in names:
        v = cfg.get(name)
        if v is not None and not v > 0:
            raise ValidationError(f"--{name.replace('_', '-')} must be positive, got {v}")


def _crystal(cfg):
    if not cfg.get("crystal"):
        raise ValidationError("--crystal is required")
    return read_crystal(cfg["crystal"])


def _perturbed(cfg, crystal) -> PerturbedGraph:
    if not cfg.get("perturbation"):
        return PerturbedGraph(crystal)
    return read_perturbation(cfg["perturbation"], crystal)


def _interval(cfg):
    if cfg.get("interval") is None:
        raise ValidationError("--interval a,b is required")
    vals = _floats(cfg["interval"], "interval")
    if len(vals) != 2 or not vals[0] < vals[1]:
        raise ValidationError("--interval needs two numbers a < b")
    return tuple(vals)


# -- commands: each returns (main rows, sidecars {suffix: rows}, json payload) -----

def cmd_bands(cfg):
    crystal = _crystal(cfg)
    _positive(cfg, "N", "tolerance")
    if cfg["N"] < 2:
        raise ValidationError("--N must be at least 2")
    bands = sample_bands(crystal.quotient, cfg["N"])
    spec = spectrum_h0(bands)
    th = estimate_thresholds(bands, cfg["tolerance"])
    d, n = crystal.dimension, crystal.n
    rows = []
    grid = bands.grid()
    flat = bands.bands.reshape(-1, n)
    for xi, lam in zip(grid, flat):
        row = {f"xi{a + 1}": xi[a] for a in range(d)}
        row.update({f"lambda{j + 1}": lam[j] for j in range(n)})
        row["slack"] = bands.slack
        rows.append(row)
    spectrum_rows = [{"lower": a, "upper": b, "slack": spec.slack} for a, b in spec]
    threshold_rows = [{"threshold": v, "tolerance": th.tolerance, "N": cfg["N"]} for v in th.values]
    return rows, {"spectrum": spectrum_rows, "thresholds": threshold_rows}


def cmd_thresholds(cfg):
    crystal = _crystal(cfg)
    _positive(cfg, "N", "tolerance")
    if cfg["N"] < 2:
        raise ValidationError("--N must be at least 2")
    bands = sample_bands(crystal.quotient, cfg["N"])
    th = estimate_thresholds(bands, cfg["tolerance"])
    rows = [{"threshold": v, "tolerance": th.tolerance, "N": cfg["N"], "slack": bands.slack}
            for v in th.values]
    return rows, {}


def _fit_levels(cfg):
    if cfg.get("fit_levels") is None:
        return None
    vals = _floats(cfg["fit_levels"], "fit-levels")
    if len(vals) != 2 or vals[0] >= vals[1] or vals[0] < 0:
        raise ValidationError("--fit-levels needs two levels lo < hi")
    return int(vals[0]), int(vals[1])


def cmd_verify(cfg):
    crystal = _crystal(cfg)
    pg = _perturbed(cfg, crystal)
    _positive(cfg, "K", "trials", "support_radius")
    if cfg["s"] <= 0.5:
        raise ValidationError("--s must exceed 1/2")
    levels = _fit_levels(cfg)
    rows = []
    for c in ("Cm1", "Cm2", "Cm3", "Cm4"):
        r = check_condition(pg, c, cfg["K"], fit_levels=levels)
        rows.append(_report_row(r))
    rows.append(_report_row(check_cm5(pg, cfg["s"])))
    res = verify_decomposition(pg, cfg["trials"], cfg["support_radius"], cfg.get("window"),
                               cfg["seed"])
    rows.append({"condition": "decomposition", "verdict": "pass" if res <= 1e-12 else "fail",
                 "exponent": math.nan, "confidence": math.nan, "partial_integral": math.nan,
                 "residual": res, "levels": cfg["trials"], "note": "tolerance 1e-12"})
    try:
        bound = operator_norm_bound(pg, pg.measure, pg.potential)
    except UnboundedTailError:
        bound = math.inf
    rows.append({"condition": "norm_bound", "verdict": "finite" if math.isfinite(bound) else "unknown",
                 "exponent": math.nan, "confidence": math.nan, "partial_integral": bound,
                 "residual": math.nan, "levels": 0, "note": "2 sup deg + sup |R|"})
    return rows, {}


def _report_row(r):
    return {"condition": r.condition, "verdict": r.verdict, "exponent": r.exponent,
            "confidence": r.confidence, "partial_integral": r.partial_integral,
            "residual": math.nan, "levels": len(r.samples),
            "note": r.diagnostics.get("note", "")}


def cmd_decomp_check(cfg):
    crystal = _crystal(cfg)
    pg = _perturbed(cfg, crystal)
    _positive(cfg, "trials", "support_radius")
    rows = []
    rng = np.random.default_rng(cfg["seed"])
    seeds = rng.integers(0, 2 ** 31, size=cfg["trials"])
    for i, s in enumerate(seeds):
        res = verify_decomposition(pg, 1, cfg["support_radius"], cfg.get("window"), int(s))
        rows.append({"trial": i, "seed": int(s), "residual": res, "tolerance": 1e-12,
                     "pass": res <= 1e-12})
    return rows, {}


def _int_list(text, name):
    vals = _floats(text, name)
    if not vals or any(v != int(v) or v < 1 for v in vals):
        raise ValidationError(f"--{name} needs positive integers")
    return [int(v) for v in vals]


def cmd_spectrum(cfg):
    crystal = _crystal(cfg)
    pg = _perturbed(cfg, crystal)
    interval = _interval(cfg)
    Ls = _int_list(cfg.get("L") or "128,256,512", "L")
    if not 0 < cfg["localization"] <= 1:
        raise ValidationError("--localization must lie in (0, 1]")
    res = count_eigenvalues_in(pg, interval, Ls, cfg["localization"], cfg["buffer"])
    rows = []
    for L, c, raw, vals, r in zip(res.Ls, res.counts, res.raw_counts, res.eigenvalues, res.residuals):
        rows.append({"L": L, "lower": interval[0], "upper": interval[1], "localized": c,
                     "in_interval": raw, "residual": r, "stable": res.stable,
                     "eigenvalues": ";".join(fmt(v) for v in vals)})
    return rows, {}


def cmd_wave(cfg):
    crystal = _crystal(cfg)
    pg = _perturbed(cfg, crystal)
    interval = _interval(cfg)
    times = _floats(cfg["times"], "times")
    if not times or any(t <= 0 for t in times):
        raise ValidationError("--times needs positive numbers")
    _positive(cfg, "sigma", "boundary_tol")
    L = None
    if cfg.get("L"):
        L = _int_list(cfg["L"], "L")[0]
    probe = wave_probe(pg, interval, times=times, L=L, sigma=cfg["sigma"],
                       buffer=cfg["buffer"], boundary_tol=cfg["boundary_tol"])
    rows = [{"T": t, "cauchy": c, "boundary_mass": probe.boundary_mass,
             "norm_drift": probe.norm_drift, "L": probe.L, "N": probe.N, "valid": probe.valid,
             "decreasing": probe.decreasing()} for t, c in zip(probe.times, probe.cauchy)]
    return rows, {}


COMMANDS = {
    "bands": (cmd_bands, "sample band functions, spectrum and thresholds of H0"),
    "thresholds": (cmd_thresholds, "estimate the threshold values of H0"),
    "verify": (cmd_verify, "decay conditions and decomposition residual of a perturbation"),
    "decomp-check": (cmd_decomp_check, "decomposition residual on random vectors"),
    "spectrum": (cmd_spectrum, "localized section eigenvalues in an interval"),
    "wave": (cmd_wave, "wave-operator Cauchy differences"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topocrystal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file with option values")
        for opt, (kind, _) in OPTIONS.items():
            flag = "--" + opt.replace("_", "-")
            if opt == "format":
                p.add_argument(flag, choices=("csv", "json"), default=None)
            else:
                p.add_argument(flag, type=kind, default=None, dest=opt)
    return parser


def resolve_config(args) -> dict:
    cfg = {k: v for k, (_, v) in OPTIONS.items()}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"--config: {exc}") from None
        unknown = set(loaded) - set(OPTIONS)
        if unknown:
            raise ValidationError(f"--config: unknown keys {sorted(unknown)}")
        for k, v in loaded.items():
            kind = OPTIONS[k][0]
            cfg[k] = v if v is None or kind is str and not isinstance(v, (int, float)) else kind(v)
            if kind is str and isinstance(v, (list, tuple)):
                cfg[k] = ",".join(str(x) for x in v)
            elif kind is str and v is not None:
                cfg[k] = str(v)
    for k in OPTIONS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if cfg.get("threads") is None and os.environ.get(THREADS_ENV):
        try:
            cfg["threads"] = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ValidationError(f"{THREADS_ENV} must be an integer") from None
    if cfg.get("threads") is not None and cfg["threads"] < 1:
        raise ValidationError("--threads must be at least 1")
    if cfg["format"] not in ("csv", "json"):
        raise ValidationError("--format must be csv or json")
    return cfg


def _csv_text(rows) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: fmt(v) for k, v in row.items()})
    return buf.getvalue()


def write_output(command: str, cfg: dict, rows, sidecars) -> None:
    out = cfg.get("output")
    if cfg["format"] == "json":
        payload = {"command": command, "rows": rows, **sidecars}
        text = json.dumps(_jsonable(payload), indent=1, sort_keys=True) + "\n"
        if out:
            with open(out, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(_csv_text(rows))
        stem, ext = os.path.splitext(out)
        for suffix, srows in sidecars.items():
            with open(f"{stem}.{suffix}{ext or '.csv'}", "w", encoding="utf-8", newline="") as fh:
                fh.write(_csv_text(srows))
    else:
        sys.stdout.write(_csv_text(rows))
        for suffix, srows in sidecars.items():
            sys.stdout.write(f"# {suffix}\n")
            sys.stdout.write(_csv_text(srows))


def _thread_limit(threads):
    if threads is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        fn = COMMANDS[args.command][0]
        with _thread_limit(cfg.get("threads")):
            rows, sidecars = fn(cfg)
        write_output(args.command, cfg, rows, sidecars)
    except (NumericalRefusal, UnboundedTailError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, SpecError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
