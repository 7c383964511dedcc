"""Command-line entry point: ``relaxsim <subcommand> --config run.toml --out dir``.

Every run writes its artifacts, ``config.resolved.json`` and a
``manifest.json``.  Failures print a JSON error object on stderr, also write
it to ``error.json`` when an output directory is known, and exit non-zero.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import parse_config
from .errors import ConfigError, RelaxsimError
from .runs import RUNNERS, Table
from .thermo import clausius_report, first_law_residual, records_from_arrays

COMMANDS = {
    "run-classical": "classical",
    "run-kramers": "kramers",
    "run-quantum": "quantum",
    "check-cptp": "cptp-check",
    "run-fermion": "fermion",
}

EXIT_CONFIG = 2
EXIT_RUNTIME = 1


# ----------------------------------------------------------------- serialisation

def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def table_text(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.header)
    for row in table.rows:
        w.writerow([_cell(x) for x in row])
    return buf.getvalue()


def _plain(obj):
    """JSON-ready copy; non-finite floats become the strings "inf"/"-inf"/"nan"."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def json_text(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path: Path, text: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = text.encode("utf-8")
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


# ----------------------------------------------------------------- run commands

def _versions() -> dict:
    return {"relaxsim": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def run_command(command: str, config_path: str, out_dir: str, seed=None) -> dict:
    cfg = parse_config(config_path).with_seed(seed)
    expected = COMMANDS[command]
    if cfg.scenario != expected:
        raise ConfigError("scenario", f"{command} needs scenario = {expected!r}, config has {cfg.scenario!r}")
    out = Path(out_dir)
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    clock = time.perf_counter()
    echo = cfg.echo()
    artifacts = RUNNERS[cfg.scenario](cfg)
    wall = time.perf_counter() - clock

    digests = {}
    for name in sorted(artifacts):
        payload = artifacts[name]
        text = table_text(payload) if isinstance(payload, Table) else json_text(payload)
        digests[name] = _write(out / name, text)
    digests["config.resolved.json"] = _write(out / "config.resolved.json", json_text(echo))
    manifest = {
        "command": command,
        "config_source": cfg.source,
        "config": echo,
        "seed": cfg.seed,
        "versions": _versions(),
        "started": started,
        "wall_time_s": wall,
        "artifacts": digests,
    }
    _write(out / "manifest.json", json_text(manifest))
    return manifest


# ----------------------------------------------------------------- report

def _read_csv(path: Path) -> dict:
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(header)}


def _first_law_tolerance(scenario: str, cols: dict, controls: dict) -> float:
    """Tolerance on the per-interval residual of the ensemble- or grid-level ledger.

    Quantum heat is the per-mode energy change, so only rounding remains.
    Grid heat is a per-step trapezoid sum of the exact heat rate; its error
    is bounded by ``T dt^2 max|d^2/dt^2 dQ/dt| / 12`` (safety factor 10).
    The classical ensemble ledger carries an O(dt) weak error per unit time,
    with the energy fluctuation scale ``std(E)`` as its natural size.
    """
    t = cols["t"]
    if scenario in ("quantum", "fermion"):
        return 1e-9
    if scenario == "kramers":
        dt = controls["kramers"]["dt"]
        q = cols[[c for c in cols if c.startswith("Q_")][0]]
        rate = np.gradient(q, t)
        curv = np.abs(np.gradient(np.gradient(rate, t), t)).max() if t.size > 3 else 0.0
        return max(1e-12, 10.0 * (t[-1] - t[0]) * dt**2 * curv / 12.0)
    dt = controls["classical"]["dt"]
    scale = max(1.0, float(np.abs(cols["E"]).max()))
    return 5.0 * dt * scale * float(np.diff(t).max())


def build_report(in_dir: str) -> dict:
    src = Path(in_dir)
    manifest = json.loads((src / "manifest.json").read_text())
    cfg = manifest["config"]
    scenario = cfg["scenario"]
    report = {"scenario": scenario, "source": str(src), "laws": {}}
    if scenario == "cptp-check":
        cp = json.loads((src / "cptp.json").read_text())
        report["laws"]["complete_positivity"] = {
            "verdict": cp["verdict"], "consistent": cp["consistent"],
            "kossakowski_determinant": cp["kossakowski_determinant"],
            "choi_min_eigenvalue": cp["choi_min_eigenvalue"]}
        return report

    cols = _read_csv(src / "thermo.csv")
    kb = cfg["units"]["k_boltzmann"]
    betas = [m["beta"] for m in cfg["modes"]]
    bath_cols = [c for c in cols if c.startswith("Q_")]
    heat = np.stack([cols[c] for c in bath_cols], axis=1)
    ep = cols["entropy_production"]
    has_ep = bool(np.all(~np.isnan(ep)))
    recs = records_from_arrays(cols["t"], cols["E"], heat, cols["W"], cols["S"],
                               ep if has_ep else None)

    resid = first_law_residual(recs)
    tol = _first_law_tolerance(scenario, cols, cfg)
    report["laws"]["first_law"] = {
        "max_abs_residual": float(np.abs(resid).max()), "tolerance": tol,
        "satisfied": bool(np.abs(resid).max() <= tol)}

    certified = None
    if scenario in ("quantum", "fermion"):
        summary = json.loads((src / "quantum_summary.json").read_text())
        certified = bool(summary["completely_positive_generator"])
    if has_ep:
        # the instantaneous column carries the verdict; the differenced series is informational
        inst = clausius_report(recs, betas, kb, tolerance=1e-9, certified=certified)
        d = inst.to_dict()
        diff_only = clausius_report(records_from_arrays(cols["t"], cols["E"], heat, cols["W"], cols["S"]),
                                    betas, kb, tolerance=math.inf)
        ok = bool(inst.instantaneous_min >= -1e-9)
        d["differenced_min"] = diff_only.min_rate
        d["satisfied"] = ok
        if ok:
            d["classification"] = "satisfied"
        d["verdict_source"] = "entropy_production column"
    else:
        # ensemble estimate: allow three standard errors of the differenced entropy balance
        t = cols["t"]
        spacing = np.gradient(t)
        sigma = 2.0 * cols["stderr"] / spacing if "stderr" in cols else np.zeros_like(t)
        rep = clausius_report(recs, betas, kb, tolerance=0.0, certified=certified)
        ok = bool(np.all(rep.rate >= -3.0 * sigma))
        d = rep.to_dict()
        d["tolerance"] = (3.0 * sigma).tolist()
        d["satisfied"] = ok
        d["classification"] = "satisfied" if ok else "violated"
        d["verdict_source"] = "differenced S and Q with 3 standard errors"
    report["laws"]["clausius"] = d
    return report


# ----------------------------------------------------------------- entry point

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relaxsim", description="Thermal relaxation simulations.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, scenario in COMMANDS.items():
        p = sub.add_parser(name, help=f"run a {scenario} scenario")
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p = sub.add_parser("report", help="check the thermodynamic laws of a finished run")
    p.add_argument("--in", dest="in_dir", required=True, help="run output directory")
    p.add_argument("--out", required=True, help="report JSON path")
    return ap


def _fail(exc: Exception, out_dir) -> int:
    if isinstance(exc, RelaxsimError):
        payload = exc.to_dict()
    else:
        payload = {"error": type(exc).__name__, "message": str(exc)}
    text = json.dumps(_plain(payload), sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            _write(Path(out_dir) / "error.json", text + "\n")
        except OSError:
            pass
    return EXIT_CONFIG if isinstance(exc, (ConfigError, FileNotFoundError)) else EXIT_RUNTIME


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "report":
            rep = build_report(args.in_dir)
            _write(Path(args.out), json_text(rep))
            return 0
        man = run_command(args.command, args.config, args.out, args.seed)
        print(json.dumps({"status": "ok", "out": args.out, "wall_time_s": man["wall_time_s"]}))
        return 0
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON error
        out = None if args.command == "report" else args.out
        return _fail(exc, out)


if __name__ == "__main__":
    sys.exit(main())
