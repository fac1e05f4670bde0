"""Command line interface: ``acsf converge | run | wulff | check``.

Exit codes: 0 on success, 2 when a quantitative check misses its tolerance,
1 on a runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .aniso import sample_frank, sample_wulff
from .errors import AcsfError
from .geom import write_svg
from .harness.checks import run_checks
from .harness.config import PRESETS, build_model, load_config, preset_config
from .harness.experiments import run_config, run_convergence

__all__ = ["main", "build_parser"]

log = logging.getLogger("acsf")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_TOLERANCE = 2


def _levels(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid level list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acsf", description="DeTurck finite elements for anisotropic curve shortening flow")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("converge", help="convergence sweep against an exact solution")
    c.add_argument("--suite", choices=("table1", "table2"), required=True)
    c.add_argument("--levels", type=_levels, default=[32, 64, 128, 256])
    c.add_argument("--out", type=Path, required=True)
    c.add_argument("--workers", type=int, default=1, help="levels run in parallel processes")

    r = sub.add_parser("run", help="run a preset or a JSON configuration")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS))
    src.add_argument("--config", type=Path)
    r.add_argument("--out", type=Path, required=True)
    r.add_argument("--J", type=int, default=None, help="override the number of nodes")
    r.add_argument("--dt", type=float, default=None, help="override the time step")
    r.add_argument("--T", type=float, default=None, help="override the final time")

    w = sub.add_parser("wulff", help="sample the Wulff shape and Frank diagram of a model")
    w.add_argument("--model", type=Path, required=True, help="JSON file with a model {variant, params}")
    w.add_argument("--samples", type=int, default=720)
    w.add_argument("--out", type=Path, required=True)

    k = sub.add_parser("check", help="run the invariant suites")
    k.add_argument("--full", action="store_true", help="include J = 64 in the stability sweep")
    return p


def _write_polyline(points: np.ndarray, path: Path) -> None:
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x1", "x2"])
        for x in np.vstack([points, points[:1]]):
            wr.writerow([repr(float(x[0])), repr(float(x[1]))])


def _cmd_converge(args) -> int:
    rep = run_convergence(args.suite, args.levels, args.out, workers=args.workers)
    print(f"{'J':>6} {'L2 error':>12} {'EOC':>6} {'H1 error':>12} {'EOC':>6}")
    for i, J in enumerate(rep["errors"]["J"]):
        e2 = f"{rep['eoc']['l2'][i - 1]:6.2f}" if i else " " * 6
        e1 = f"{rep['eoc']['h1'][i - 1]:6.2f}" if i else " " * 6
        print(f"{J:6d} {rep['errors']['l2'][i]:12.4e} {e2} {rep['errors']['h1'][i]:12.4e} {e1}")
    for J, cmp in rep["comparison"].items():
        tag = "ok" if cmp["passed"] else "off"
        print(f"J={J}: L2 {cmp['l2_rel_dev']:+.2%}, H1 {cmp['h1_rel_dev']:+.2%} vs reference ({tag})")
    print(f"status: {rep['status']}")
    return EXIT_OK if rep["status"] == "ok" else EXIT_TOLERANCE


def _cmd_run(args) -> int:
    overrides = {"J": args.J, "dt": args.dt, "T": args.T}
    if args.preset:
        cfg = preset_config(args.preset, **overrides)
    else:
        cfg = load_config(args.config)
        cfg.update({k: v for k, v in overrides.items() if v is not None})
    rep = run_config(cfg, args.out, progress=args.verbose)
    s = rep["summary"]
    print(f"status: {rep['status']} after {s['steps']} steps (t = {s['final_time']:.6g}), {rep['wall_clock']:.1f}s")
    print(f"energy {s['energy_initial']:.6g} -> {s['energy_final']:.6g}, max ratio {s['max_ratio']:.4g}")
    for name, chk in rep["checks"].items():
        print(f"check {name}: {'pass' if chk['passed'] else 'FAIL'} ({chk['value']})")
    return EXIT_OK if rep["checks_passed"] else EXIT_TOLERANCE


def _cmd_wulff(args) -> int:
    spec = json.loads(args.model.read_text())
    model = build_model(spec.get("model", spec))
    if model is None or not model.space_independent:
        raise ValueError("the Wulff shape needs a space independent model")
    args.out.mkdir(parents=True, exist_ok=True)
    W = sample_wulff(model, args.samples)
    F = sample_frank(model, args.samples)
    _write_polyline(W, args.out / "wulff.csv")
    _write_polyline(F, args.out / "frank.csv")
    write_svg(W, args.out / "wulff.svg")
    write_svg(F, args.out / "frank.svg")
    print(f"wrote wulff.csv, frank.csv and SVGs to {args.out}")
    return EXIT_OK


def _cmd_check(args) -> int:
    results = run_checks(quick=not args.full)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_TOLERANCE


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"converge": _cmd_converge, "run": _cmd_run, "wulff": _cmd_wulff, "check": _cmd_check}[args.command]
    try:
        return handler(args)
    except (AcsfError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
