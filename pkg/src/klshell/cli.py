"""Command-line front end for convergence studies of the benchmark cases.

Example::

    klshell --case scordelis_lo --p 3 --n 4,8,16 --probe --out results

A configuration file holds the same keys as the long flags, one
``key = value`` per line (``#`` starts a comment); flags given on the command
line take precedence over file values.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .assembly import AssemblyOptions
from .benchmarks import CASE_NAMES, ERROR_SETS, RunRecord, fit_slope, make_case, run_case

ERROR_CHOICES = ("l2", "res1", "res2", "bound", "energy")


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass
class RunConfig:
    """Validated settings of one CLI invocation."""

    cases: list = field(default_factory=lambda: ["extruded_arc"])
    orders: list = field(default_factory=lambda: [2, 3])
    meshes: list = field(default_factory=lambda: [2, 4, 8, 16])
    errors: Optional[list] = None  # None: the case defaults
    probe: bool = False
    geometry: str = "iso"
    precision: str = "double"
    quad: Optional[int] = None
    out: str = "results"
    export_vtk: bool = False
    threads: int = 1
    timing: bool = True

    def validate(self) -> "RunConfig":
        for c in self.cases:
            if c not in CASE_NAMES:
                raise ConfigError(f"unknown case {c!r}; choose from {', '.join(CASE_NAMES)}")
        if not self.orders or any(not 1 <= p <= 10 for p in self.orders):
            raise ConfigError("orders must lie in [1, 10]")
        if not self.meshes or any(n < 1 for n in self.meshes):
            raise ConfigError("mesh counts must be positive")
        if any(b <= a for a, b in zip(self.meshes, self.meshes[1:])):
            raise ConfigError("mesh list must be strictly ascending")
        if self.errors is not None:
            bad = [e for e in self.errors if e not in ERROR_CHOICES]
            if bad:
                raise ConfigError(f"unknown error measure(s) {bad}; choose from {', '.join(ERROR_CHOICES)}")
            if "l2" in self.errors:
                for c in self.cases:
                    if make_case(c).analytic is None:
                        raise ConfigError(f"case {c!r} has no analytic solution; L2 errors are unavailable")
        if self.geometry not in ("iso", "exact"):
            raise ConfigError("geometry must be 'iso' or 'exact'")
        if self.precision not in ("double", "extended"):
            raise ConfigError("precision must be 'double' or 'extended'")
        if self.quad is not None and not 1 <= self.quad <= 30:
            raise ConfigError("quadrature points per direction must lie in [1, 30]")
        if self.threads < 1:
            raise ConfigError("thread count must be at least 1")
        return self

    def error_groups(self, case) -> list:
        groups = list(self.errors) if self.errors is not None else [g for g in case.default_errors if g != "probe"]
        if self.probe or (self.errors is None and "probe" in case.default_errors):
            groups.append("probe")
        return groups


# ---------------------------------------------------------------------------
# parsing


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None


def _str_list(text: str) -> list:
    return [v for v in str(text).replace(" ", "").split(",") if v]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


_CONVERT = {
    "case": ("cases", _str_list),
    "p": ("orders", _int_list),
    "n": ("meshes", _int_list),
    "errors": ("errors", _str_list),
    "probe": ("probe", _bool),
    "geometry": ("geometry", str),
    "precision": ("precision", str),
    "quad": ("quad", int),
    "out": ("out", str),
    "export_vtk": ("export_vtk", _bool),
    "threads": ("threads", int),
    "timing": ("timing", _bool),
}


def read_config_file(path) -> dict:
    """Flat ``key = value`` file as a dict of raw strings."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    raw = {k.replace("-", "_"): v for k, v in parser["run"].items()}
    unknown = set(raw) - set(_CONVERT)
    if unknown:
        raise ConfigError(f"unknown config key(s) {sorted(unknown)}")
    return raw


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="klshell", description="Convergence studies for Kirchhoff-Love shell benchmarks.")
    ap.add_argument("--case", help=f"case name(s), comma separated: {', '.join(CASE_NAMES)}")
    ap.add_argument("--p", help="element orders, comma separated (default 2,3)")
    ap.add_argument("--n", help="ascending mesh parameters, comma separated (default 2,4,8,16)")
    ap.add_argument("--errors", help="error measures, comma separated: l2,res1,res2,bound,energy")
    ap.add_argument("--probe", action="store_const", const="true", help="report the reference-point displacement")
    ap.add_argument("--geometry", choices=("iso", "exact"), help="isoparametric or exact-chart geometry")
    ap.add_argument("--precision", choices=("double", "extended"),
                    help="arithmetic of assembly and condensation (default double)")
    ap.add_argument("--quad", help="Gauss points per direction (default p+2)")
    ap.add_argument("--out", help="output directory (default ./results)")
    ap.add_argument("--export-vtk", action="store_const", const="true", help="write one VTK file per run")
    ap.add_argument("--threads", help="number of worker processes (default 1)")
    ap.add_argument("--no-timing", dest="timing", action="store_const", const="false",
                    help="leave the wall_time_s column empty (byte-reproducible CSV)")
    ap.add_argument("--config", help="configuration file with key = value lines")
    return ap


def parse_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    """Merge defaults, an optional config file and command-line flags."""
    args = build_parser().parse_args(argv)
    raw = read_config_file(args.config) if args.config else {}
    for key in _CONVERT:
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    cfg = RunConfig()
    for key, text in raw.items():
        attr, conv = _CONVERT[key]
        try:
            setattr(cfg, attr, conv(text))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid value for {key}: {text!r}") from None
    return cfg.validate()


# ---------------------------------------------------------------------------
# running


def _columns(groups) -> list:
    cols = []
    for g in groups:
        cols.extend(ERROR_SETS[g])
    return cols


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _worker(args) -> RunRecord:
    name, p, n, groups, opts, vtk_path = args
    case = make_case(name)
    rec = run_case(case, p, n, groups, opts, keep_solution=vtk_path is not None)
    if vtk_path is not None and rec.solution is not None:
        from .postproc import export_vtk

        try:
            export_vtk(rec.solution, vtk_path)
        except OSError as exc:
            rec.error = str(exc)
    rec.solution = None
    return rec


def run(cfg: RunConfig) -> int:
    """Execute all runs, write CSV/JSON/VTK output and return the exit status."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    opts = AssemblyOptions(geometry=cfg.geometry, quad=cfg.quad, precision=cfg.precision)
    tasks = []
    for name in cfg.cases:
        groups = cfg.error_groups(make_case(name))
        for p in cfg.orders:
            for n in cfg.meshes:
                vtk = str(out / f"{name}_p{p}_n{n}.vtk") if cfg.export_vtk else None
                tasks.append((name, p, n, tuple(groups), opts, vtk))
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            records = list(pool.map(_worker, tasks))
    else:
        records = [_worker(t) for t in tasks]

    summary = {"config": asdict(cfg), "cases": {}}
    ok = True
    for name in cfg.cases:
        groups = cfg.error_groups(make_case(name))
        cols = _columns(groups)
        case_summary = {}
        for p in cfg.orders:
            recs = [r for r in records if r.case == name and r.p == p]
            path = out / f"convergence_{name}_p{p}.csv"
            with open(path, "w", newline="") as fh:
                wr = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
                wr.writerow(["n_elem", "h", "dofs_condensed", "dofs_uncondensed", *cols, "wall_time_s", "status"])
                for r in recs:
                    wr.writerow([
                        r.n, _fmt(r.h), r.dofs_condensed, r.dofs_uncondensed,
                        *(_fmt(r.values.get(c)) for c in cols),
                        _fmt(r.wall_time_s) if cfg.timing else "",
                        "ok" if r.error is None else r.error,
                    ])
            good = [r for r in recs if r.error is None]
            ok &= len(good) == len(recs)
            slopes = {}
            for c in cols:
                if c in ("energy", "probe"):
                    continue
                val = fit_slope([r.h for r in good], [r.values.get(c, float("nan")) for r in good])
                slopes[c] = None if math.isnan(val) else val
            entry = {"slopes": slopes, "csv": path.name,
                     "failures": {str(r.n): r.error for r in recs if r.error is not None}}
            if "probe" in groups:
                entry["probe"] = {str(r.n): r.values.get("probe") for r in good}
            case_summary[str(p)] = entry
        summary["cases"][name] = case_summary
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0 if ok else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"klshell: error: {exc}", file=sys.stderr)
        return 2
    status = run(cfg)
    if status:
        print(f"klshell: some runs failed; see {Path(cfg.out) / 'summary.json'}", file=sys.stderr)
    return status
