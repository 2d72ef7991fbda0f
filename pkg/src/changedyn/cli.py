"""Command line interface: ``simulate``, ``detect``, ``bench`` and ``sweep``.

Every run reads an optional YAML config; flags override config keys.
Exit status is 0 on success, 1 when a trial fails and 2 for configuration
or input errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from . import data, harness
from .harness import METHODS, ExperimentConfig, TrialFailure

log = logging.getLogger("changedyn")

DEFAULT_SWEEP = (1.0, 19.0, 39.0, 99.0, 199.0)

# flag -> dotted config key
_FLAGS = {
    "method": "method",
    "experiment": "experiment",
    "n_particles": "n_particles",
    "threshold_kind": "threshold.kind",
    "threshold_h": "threshold.h",
    "threshold_alpha": "threshold.alpha",
    "trials": "trials",
    "seed": "seed",
    "workers": "workers",
    "jobs": "jobs",
    "backend": "backend",
    "nu_bounds": "nu_bounds",
    "cp_levels": "cp_levels",
    "bocd_prior_var": "bocd.prior_var",
    "bocd_prune": "bocd.prune",
    "input_path": "input.path",
    "input_column": "input.column",
    "input_source_hz": "input.source_hz",
    "n_train": "input.n_train",
    "output_dir": "output.dir",
}


def _parse_set(items):
    out = {}
    for item in items or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = yaml.safe_load(val)
    return out


def _common(p: argparse.ArgumentParser, method_choices=METHODS):
    p.add_argument("--config", type=Path, help="YAML config file (schema_version: 1)")
    p.add_argument("--method", choices=method_choices)
    p.add_argument("--experiment", choices=("synthetic", "seizure"))
    p.add_argument("--n-particles", type=int, dest="n_particles")
    p.add_argument("--threshold-kind", choices=("fixed", "standard", "conservative"),
                   dest="threshold_kind")
    p.add_argument("--threshold-h", type=float, dest="threshold_h")
    p.add_argument("--threshold-alpha", type=float, dest="threshold_alpha")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="threads per particle filter")
    p.add_argument("--jobs", type=int, help="trial processes")
    p.add_argument("--backend", choices=("cython", "python"))
    p.add_argument("--nu-bounds", choices=("tight", "wide"), dest="nu_bounds")
    p.add_argument("--cp-levels", choices=("informed", "zero_base"), dest="cp_levels")
    p.add_argument("--bocd-prior-var", type=float, dest="bocd_prior_var")
    p.add_argument("--bocd-prune", type=float, dest="bocd_prune")
    p.add_argument("--input", type=Path, dest="input_path", help="observation CSV")
    p.add_argument("--input-column", dest="input_column")
    p.add_argument("--input-source-hz", type=int, dest="input_source_hz",
                   help="sampling rate of a raw recording to preprocess")
    p.add_argument("--n-train", type=int, dest="n_train")
    p.add_argument("--output-dir", "-o", type=Path, dest="output_dir")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key, e.g. generator.T=300")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="changedyn",
                                     description="Online detection of gradual change.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="emit a synthetic stream with ground truth")
    _common(p)
    p.add_argument("--trial", type=int, default=0, help="trial index whose data to emit")
    p.add_argument("--out", type=Path, help="CSV path (default stdout)")

    p = sub.add_parser("detect", help="run one method on one stream")
    _common(p)

    p = sub.add_parser("bench", help="multi-trial reproduction of the results table")
    _common(p, METHODS + ("all",))

    p = sub.add_parser("sweep", help="threshold sweep of PFA and ADD")
    _common(p)
    p.add_argument("--thresholds", type=lambda s: [float(v) for v in s.split(",")],
                   default=list(DEFAULT_SWEEP), help="comma-separated h values")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_yaml(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for attr, key in _FLAGS.items():
        val = getattr(args, attr, None)
        if val is None or (attr == "method" and val == "all"):
            continue
        overrides[key] = str(val) if isinstance(val, Path) else val
    if args.threshold_h is not None and args.threshold_kind is None:
        overrides["threshold.kind"] = "fixed"
    overrides.update(_parse_set(args.set))
    cfg = cfg.with_overrides(overrides)
    if cfg.input_path and not Path(cfg.input_path).is_file():
        raise FileNotFoundError(f"input file not found: {cfg.input_path}")
    return cfg


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    data_seed, _ = harness.trial_seeds(cfg.seed, args.trial)
    stream = harness.make_stream(replace(cfg, input_path=None), data_seed)
    data.write_stream_csv(args.out or sys.stdout, stream)
    return 0


def cmd_detect(cfg: ExperimentConfig, args) -> int:
    res = harness._run_one((cfg, 0))[1]
    outdir = Path(cfg.output_dir or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    harness.write_trial(outdir, 0, res, prefix="")
    for a in res.alarms:
        log.info("alarm t=%d z=%.4g state=%s", a.time, a.z_value, a.detected_state)
    print(f"{len(res.alarms)} alarms written to {outdir / 'alarms.csv'}")
    return 0


def cmd_bench(cfg: ExperimentConfig, args) -> int:
    methods = METHODS if args.method == "all" else (cfg.method,)
    root = Path(cfg.output_dir) if cfg.output_dir else None
    reports = []
    for m in methods:
        sub = replace(cfg, method=m)
        if root is not None and len(methods) > 1:
            sub = replace(sub, output_dir=str(root / m))
        rep = harness.run_experiment(sub)[0]
        reports.append(rep)
        print(_summary(rep))
    if root is not None:
        harness.write_report(root / "report.csv", reports)
    return 0


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    for rep in harness.run_sweep(cfg, args.thresholds):
        print(_summary(rep))
    return 0


def _summary(rep) -> str:
    row = rep.row()
    adds = " ".join(f"ADD{k}={row[f'add{k}']}" for k in range(1, len(rep.add) + 1))
    return (f"{rep.method} h={rep.h:g}: RMSFE={rep.rmsfe_mu:.4f} RMSE(nu)={rep.rmse_nu:.5f} "
            f"{adds} PFA={rep.pfa:.4f} PMA={rep.pma:.3f}")


COMMANDS = {"simulate": cmd_simulate, "detect": cmd_detect, "bench": cmd_bench,
            "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except TrialFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
