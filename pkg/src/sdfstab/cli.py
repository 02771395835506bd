"""Command-line front end.

Exit codes: 0 success, 1 verification/classification/synthesis failure,
2 I/O error, 3 precondition or invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .classifier import PreconditionError, Tag, scan_region
from .config import ScenarioConfig
from .simloop import ERROR, DIVERGED, run_closed_loop, stability_sweep
from .symexpr import ExpressionTooLarge
from .synth import SynthesisError, synthesize
from .systems import ConfigError, verify_template

EXIT_OK, EXIT_FAIL, EXIT_IO, EXIT_PRECONDITION = 0, 1, 2, 3


class _IOFailure(Exception):
    pass


def _formats(args, cfg: ScenarioConfig) -> list[str]:
    return [args.format] if args.format else list(cfg.output.get("formats", cfgmod.FORMATS))


def _outdir(args, cfg: ScenarioConfig) -> Path:
    return Path(args.out if args.out is not None else cfg.output.get("dir", "out"))


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc}") from exc


def _seed(args, cfg: ScenarioConfig) -> int:
    return int(args.seed if args.seed is not None else cfg.simulation.get("seed", 0))


def cmd_verify(args, cfg: ScenarioConfig) -> int:
    if cfg.system["template"] != "corollary2":
        raise ConfigError("verify compares against the built-in template; set system.template: corollary2")
    p = cfg.system["params"]
    rep = verify_template(p.get("L", 3), str(p.get("a", "1")), str(p.get("b", "1")),
                          points=100, seed=_seed(args, cfg), flip=args.flip_bracket_sign)
    summary = {"passed": rep.passed, "checks": rep.checks, "max_abs_diff": rep.max_abs_diff,
               "mismatches": len(rep.mismatches), "first_mismatch": rep.first_mismatch()}
    if args.out is not None:
        _write(_outdir(args, cfg) / "verify.json", json.dumps(summary, indent=1, sort_keys=True))
    if rep.passed:
        print(f"verify: PASS ({rep.checks} checks, max |diff| {rep.max_abs_diff:.3g})")
        return EXIT_OK
    m = rep.first_mismatch()
    print(f"verify: FAIL ({len(rep.mismatches)} of {rep.checks} checks); first mismatch: "
          f"{m['quantity']} at x={m['x']}: symbolic {m['symbolic']} vs closed form {m['closed_form']}")
    return EXIT_FAIL


def cmd_classify(args, cfg: ScenarioConfig) -> int:
    sysdef = cfg.build_system(strict=False)
    rep = scan_region(sysdef, cfg.grid(), workers=args.workers)
    out = _outdir(args, cfg)
    fmts = _formats(args, cfg)
    if "csv" in fmts:
        _write(out / "scan.csv", rep.to_csv())
    if "json" in fmts:
        _write(out / "scan.json", rep.to_json())
    counts = rep.counts
    print("classify: " + ", ".join(f"{k}={v}" for k, v in counts.items() if v))
    bad = counts[Tag.Unclassified.value] + counts["error"]
    return EXIT_FAIL if bad else EXIT_OK


def _x0(args, cfg: ScenarioConfig) -> list[float]:
    x0 = args.x0 if args.x0 is not None else cfg.simulation["x0"]
    try:
        return [float(v) for v in x0]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid x0: {x0!r}") from exc


def cmd_synth(args, cfg: ScenarioConfig) -> int:
    sysdef = cfg.build_system()
    x0 = _x0(args, cfg)
    if len(x0) != sysdef.dimension:
        raise PreconditionError(f"x0 has length {len(x0)}, system dimension is {sysdef.dimension}")
    try:
        w = synthesize(sysdef, x0, float(cfg.synth["cap"]), cfg.synth_params())
    except SynthesisError as exc:
        print(f"synth: FAIL {exc}")
        return EXIT_FAIL
    _write(_outdir(args, cfg) / "witness.json", json.dumps(w.to_dict(), indent=1, sort_keys=True))
    print(f"synth: {w.kind} witness, duration {w.duration:.6g}, V {w.V_start:.6g} -> {w.V_end:.6g}")
    return EXIT_OK


def cmd_simulate(args, cfg: ScenarioConfig) -> int:
    sysdef = cfg.build_system()
    sim = cfg.simulation
    tr = run_closed_loop(sysdef, _x0(args, cfg), cfg.partition(), cfg.synth_params(),
                         R=float(sim["R"]), radius=float(sim["radius"]))
    out = _outdir(args, cfg)
    fmts = _formats(args, cfg)
    if "csv" in fmts:
        _write(out / "trajectory.csv", tr.to_csv())
    if "json" in fmts:
        _write(out / "trajectory.json", tr.to_json())
    print(f"simulate: {tr.termination} after {len(tr.sample_times)} samples, "
          f"|x| = {np.linalg.norm(tr.final):.4g}, V = {tr.sample_V[-1]:.4g}")
    if tr.message:
        print(f"simulate: {tr.message}")
    return EXIT_FAIL if tr.termination in (ERROR, DIVERGED) else EXIT_OK


def cmd_sweep(args, cfg: ScenarioConfig) -> int:
    sysdef = cfg.build_system()
    sim = cfg.simulation
    rep = stability_sweep(sysdef, sim["deltas"], cfg.partition(float(sim["sweep_horizon"])),
                          int(sim["samples"]), _seed(args, cfg), cfg.synth_params(),
                          R=float(sim["R"]), radius=float(sim["radius"]))
    _write(_outdir(args, cfg) / "stability.json", rep.to_json())
    for d, e in rep.table():
        print(f"sweep: delta={d:g} sup_peak={e:.4g}")
    return EXIT_FAIL if any(rep.failures.values()) else EXIT_OK


COMMANDS = {"verify": cmd_verify, "classify": cmd_classify, "synth": cmd_synth,
            "simulate": cmd_simulate, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdfstab",
                                 description="Lie-bracket decrease conditions and sampled-data stabilization")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario YAML file (defaults to the built-in template)")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--format", choices=cfgmod.FORMATS, help="write only this format")
    sub = ap.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", parents=[common], help="check the bracket engine against closed forms")
    v.add_argument("--flip-bracket-sign", action="store_true",
                   help="test hook: use the opposite bracket convention (must fail)")
    c = sub.add_parser("classify", parents=[common], help="classify a lattice of states")
    c.add_argument("--workers", type=int, default=1)
    for name, text in (("synth", "synthesize a decrease witness from x0"),
                       ("simulate", "run the sampled-data closed loop from x0")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--x0", type=float, nargs="+", help="initial state (overrides simulation.x0)")
    sub.add_parser("sweep", parents=[common], help="empirical delta -> peak stability table")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load(args.config) if args.config else ScenarioConfig.from_dict({})
        return COMMANDS[args.command](args, cfg)
    except (OSError, _IOFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except ExpressionTooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
