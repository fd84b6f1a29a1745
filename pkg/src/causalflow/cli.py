"""Command-line interface: ``causalflow <subcommand> [--flags]``.

Settings come from built-in defaults, then an optional ``--config`` JSON
file, then explicit flags. Errors are printed to stderr as one JSON object
and the process exits with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io as cfio
from .exceptions import CausalFlowError
from .pipeline import (
    load_config,
    parse_pair,
    run_analyze,
    run_diagnose,
    run_matrix,
    run_roc,
    run_synth,
    run_verify,
)

logger = logging.getLogger("causalflow")


def _measures(text):
    return [m.strip() for m in text.split(",") if m.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causalflow", description="Causal information flow between grouped channels.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline configuration")
    common.add_argument("--threads", type=int, help="worker threads (capped by CAUSALFLOW_THREADS)")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic EEG dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--trials", type=int, default=100, help="trials per activity level")
    p.add_argument("--activity", default="both", choices=["high", "low", "both"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, dest="synth_n_samples")
    p.add_argument("--lag", type=int, dest="synth_lag")
    p.add_argument("--leak", type=float, dest="synth_leak")
    p.add_argument("--noise-std", type=float, dest="synth_noise_std")
    p.add_argument("--wavelet", dest="synth_wavelet", choices=["meyer", "db2"])

    p = sub.add_parser("analyze", parents=[common], help="information rates for every ROI pair")
    p.add_argument("--dataset", required=True, help="dataset directory with manifest.json")
    p.add_argument("--out", required=True, help="rate CSV path")
    p.add_argument("--pair", action="append", help="ordered ROI pair such as 2:5 (repeatable)")
    p.add_argument("--mode", choices=["trial-blocks", "pooled-windows"])
    p.add_argument("--N", type=int, dest="N")
    p.add_argument("--edge-overlap", type=int)
    p.add_argument("--ridge", type=float)
    p.add_argument("--measures", type=_measures, help="comma-separated measure names")
    p.add_argument("--conditioning", choices=["causal", "none"])
    p.add_argument("--units", choices=["nats", "bits"])
    p.add_argument("--per-sample", action="store_true", default=None)
    p.add_argument("--section-cap", type=int)
    p.add_argument("--analysis-span-ms", type=float)

    p = sub.add_parser("roc", parents=[common], help="ROC, AUC and bootstrap significance per pair")
    p.add_argument("--rates", required=True, help="rate CSV from analyze")
    p.add_argument("--out", required=True, help="ROC result JSON")
    p.add_argument("--c", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--B", type=int, dest="bootstrap_B")
    p.add_argument("--bootstrap-seed", type=int)
    p.add_argument("--positive-tag")
    p.add_argument("--negative-tag")
    p.add_argument("--analysis-span-ms", type=float)

    p = sub.add_parser("matrix", parents=[common], help="connectivity-change matrices from ROC results")
    p.add_argument("--roc", required=True, help="ROC result JSON")
    p.add_argument("--out", required=True, help="matrix JSON")
    p.add_argument("--c", type=float)
    p.add_argument("--alpha", type=float)

    p = sub.add_parser("diagnose", parents=[common], help="Gaussianity report per ROI and tag")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--roi", type=int, action="append", help="restrict to these ROI ids (repeatable)")
    p.add_argument("--bins", type=int)

    p = sub.add_parser("verify", parents=[common], help="run the identity suites")
    p.add_argument("--pmfs", type=int, default=200)
    p.add_argument("--covariances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="optional report JSON")
    return parser


_CONFIG_FLAGS = (
    "threads",
    "mode",
    "N",
    "edge_overlap",
    "ridge",
    "measures",
    "conditioning",
    "units",
    "per_sample",
    "section_cap",
    "analysis_span_ms",
    "c",
    "alpha",
    "bootstrap_B",
    "bootstrap_seed",
    "positive_tag",
    "negative_tag",
    "bins",
    "synth_n_samples",
    "synth_lag",
    "synth_leak",
    "synth_noise_std",
    "synth_wavelet",
)


def _config(args):
    overrides = {k: getattr(args, k) for k in _CONFIG_FLAGS if hasattr(args, k)}
    return load_config(args.config, **overrides)


def _meta_path(rates_path) -> Path:
    return Path(f"{rates_path}.meta.json")


def cmd_synth(args) -> int:
    cfg = _config(args)
    manifest = run_synth(cfg, args.out, args.trials, args.activity, args.seed)
    print(f"wrote {len(manifest['files'])} trials to {args.out} (config hash {manifest['config_hash'][:12]})")
    return 0


def cmd_analyze(args) -> int:
    cfg = _config(args)
    manifest, trials = cfio.load_dataset(args.dataset)
    pairs = [parse_pair(p) for p in args.pair] if args.pair else None
    rows, meta = run_analyze(cfg, trials, manifest, pairs)
    cfio.write_rate_csv(args.out, rows, cfg.units)
    cfio.write_json(_meta_path(args.out), meta)
    print(f"wrote {len(rows)} rates for {len(meta['pairs'])} pairs to {args.out} ({meta['n_clamped']} clamped)")
    return 0


def cmd_roc(args) -> int:
    cfg = _config(args)
    rows, _ = cfio.read_rate_csv(args.rates)
    meta_path = _meta_path(args.rates)
    meta = cfio.read_json(meta_path) if meta_path.exists() else None
    result = run_roc(cfg, rows, meta)
    cfio.write_json(args.out, result)
    n_sig = sum(r["significant"] for r in result["pairs"])
    print(f"{len(result['pairs'])} pair/measure combinations, {n_sig} significant at c={cfg.c}, alpha={cfg.alpha}")
    return 0


def cmd_matrix(args) -> int:
    roc = cfio.read_json(args.roc)
    result = run_matrix(roc, args.c, args.alpha)
    cfio.write_json(args.out, result)
    for measure, m in result["matrices"].items():
        print(f"{measure}: {sum(r['significant'] for r in m['records'])} significant pairs")
    return 0


def cmd_diagnose(args) -> int:
    cfg = _config(args)
    manifest, trials = cfio.load_dataset(args.dataset)
    report = run_diagnose(cfg, trials, manifest, args.roi)
    cfio.write_json(args.out, report)
    tags = report["tags"]
    print("roi\t" + "\t".join(f"{t}:{c}" for t in tags for c in report["columns"]))
    for row in report["rois"]:
        vals = [row[t][c] if t in row else float("nan") for t in tags for c in report["columns"]]
        print(f"{row['label']}\t" + "\t".join(f"{v:.4f}" for v in vals))
    return 0


def cmd_verify(args) -> int:
    report = run_verify(args.pmfs, args.covariances, args.seed)
    if args.out:
        cfio.write_json(args.out, report)
    for c in report["checks"]:
        status = "PASS" if c["pass"] else "FAIL"
        print(f"{status} {c['engine']:8s} {c['identity']:28s} max residual {c['max_residual']:.3e} (tol {c['tolerance']:g})")
    return 0 if report["all_pass"] else 1


COMMANDS = {
    "synth": cmd_synth,
    "analyze": cmd_analyze,
    "roc": cmd_roc,
    "matrix": cmd_matrix,
    "diagnose": cmd_diagnose,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CausalFlowError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2
    except OSError as exc:
        err = {
            "error": type(exc).__name__,
            "module": "io",
            "operation": args.command,
            "parameter": getattr(exc, "filename", None),
            "message": str(exc),
        }
        print(json.dumps(err), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
