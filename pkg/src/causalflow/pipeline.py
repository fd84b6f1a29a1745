"""End-to-end orchestration behind the command-line interface.

Two analysis modes are supported:

``trial-blocks``
    Every trial is cut into disjoint blocks of ``N`` samples, one section
    each, and yields one rate per (pair, measure, tag). Used for the
    synthetic generator, where each trial is long and stationary.
``pooled-windows``
    Sliding windows relative to tag onset; window ``k`` is pooled across
    trials, tag repetitions and electrode pairings. Yields one rate per
    window, which gives a time course after each tag change.
"""

from __future__ import annotations

import dataclasses
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io as cfio
from .ensemble import (
    AGGREGATIONS,
    RoiGrouping,
    WindowEnsemble,
    estimate_joint_covariance,
    group_into_rois,
    pool_sections,
    slice_windows_quiet,
)
from .exceptions import ConfigurationError, DataError, FitError
from .gaussian import NEG_TOL, MeasureKind, clamp, evaluate_measures, random_gaussian_identity_suite
from .oracle import random_identity_suite
from .stats import (
    BootstrapResult,
    SignificanceConfig,
    auc_mann_whitney,
    block_bootstrap,
    connectivity_change_matrix,
    is_non_normal,
    l1_gaussian_fit,
    roc_points,
    significance_test,
    skewness_kurtosis,
)
from .synth import TAG_NAMES, SynthConfig, default_bands, default_layout, generate_dataset

logger = logging.getLogger(__name__)

MODES = ("trial-blocks", "pooled-windows")
CONDITIONING = ("causal", "none")
ORACLE_TOL = 1e-11
FORM_TOL = 1e-12
GAUSSIAN_TOL = 1e-8
THREADS_ENV = "CAUSALFLOW_THREADS"


@dataclass
class PipelineConfig:
    mode: str = "trial-blocks"
    N: int = 30
    edge_overlap: int = 8
    ridge: float = 1e-9
    measures: list = field(default_factory=lambda: ["cbi", "massey", "kamitake", "sum_te"])
    conditioning: str = "causal"
    grouping: dict | None = None
    aggregation: str = "per-electrode-realization"
    n_keep: int | None = None
    pairing_seed: int = 0
    section_cap: int | None = None
    analysis_span_ms: float = 1000.0
    positive_tag: str | None = None
    negative_tag: str | None = None
    bootstrap_B: int = 2000
    bootstrap_seed: int = 0
    c: float = 0.85
    alpha: float = 0.05
    units: str = "nats"
    per_sample: bool = False
    threads: int = 1
    bins: int = 50
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> "PipelineConfig":
        def bad(param, msg):
            raise ConfigurationError(msg, operation="PipelineConfig", parameter=param)

        if self.mode not in MODES:
            bad("mode", f"mode must be one of {MODES}")
        if self.conditioning not in CONDITIONING:
            bad("conditioning", f"conditioning must be one of {CONDITIONING}")
        if self.aggregation not in AGGREGATIONS:
            bad("aggregation", f"aggregation must be one of {AGGREGATIONS}")
        if int(self.N) < 1:
            bad("N", "N must be >= 1")
        if self.mode == "pooled-windows" and (self.edge_overlap < 0 or self.N <= 2 * self.edge_overlap):
            bad("edge_overlap", "need 0 <= edge_overlap and N > 2 * edge_overlap")
        if self.ridge < 0:
            bad("ridge", "ridge must be >= 0")
        if not self.measures:
            bad("measures", "at least one measure is required")
        self.measures = [MeasureKind.parse(m).value for m in self.measures]
        if self.grouping is not None:
            RoiGrouping(self.grouping)
        if self.n_keep is not None and self.n_keep < 1:
            bad("n_keep", "n_keep must be >= 1")
        if self.section_cap is not None and self.section_cap < 2:
            bad("section_cap", "section_cap must be >= 2")
        if not self.analysis_span_ms > 0:
            bad("analysis_span_ms", "analysis span must be positive")
        if self.bootstrap_B < 2:
            bad("bootstrap_B", "need at least 2 bootstrap resamples")
        SignificanceConfig(self.c, self.alpha)
        if self.units not in ("nats", "bits"):
            bad("units", "units must be nats or bits")
        if self.threads < 1:
            bad("threads", "threads must be >= 1")
        if self.bins < 3:
            bad("bins", "bins must be >= 3")
        self.synth.validate()
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["synth"] = self.synth.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d.pop("version", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(
                f"unknown configuration keys {unknown}", operation="PipelineConfig", parameter=unknown[0]
            )
        synth = d.pop("synth", None) or {}
        s_known = {f.name for f in dataclasses.fields(SynthConfig)}
        s_unknown = sorted(set(synth) - s_known)
        if s_unknown:
            raise ConfigurationError(
                f"unknown synth keys {s_unknown}", operation="PipelineConfig", parameter=f"synth.{s_unknown[0]}"
            )
        if d.get("grouping") is not None:
            d["grouping"] = {str(k): int(v) for k, v in d["grouping"].items()}
        return cls(synth=SynthConfig(**synth), **d).validate()

    def updated(self, **overrides) -> "PipelineConfig":
        """Copy with non-``None`` overrides applied (``synth_*`` keys go to ``synth``)."""
        d = self.to_dict()
        for k, v in overrides.items():
            if v is None:
                continue
            if k.startswith("synth_"):
                d["synth"][k[len("synth_"):]] = v
            else:
                d[k] = v
        return PipelineConfig.from_dict(d)


def load_config(path=None, **overrides) -> PipelineConfig:
    base = PipelineConfig.from_dict(cfio.read_json(path)) if path else PipelineConfig().validate()
    return base.updated(**overrides)


def effective_threads(requested: int = 1) -> int:
    """``requested`` capped by the ``CAUSALFLOW_THREADS`` environment variable."""
    env = os.environ.get(THREADS_ENV)
    if env is None or env == "":
        return max(1, int(requested))
    try:
        cap = int(env)
    except ValueError as exc:
        raise ConfigurationError(
            f"{THREADS_ENV}={env!r} is not an integer", operation="effective_threads", parameter=THREADS_ENV
        ) from exc
    if cap < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be >= 1", operation="effective_threads", parameter=THREADS_ENV)
    return max(1, min(int(requested), cap))


def _map(fn, items, threads):
    n = effective_threads(threads)
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def run_synth(cfg: PipelineConfig, out_dir, n_trials: int, activity: str = "both", seed: int = 0, layout=None) -> dict:
    """Write synthetic trials and a manifest; returns the manifest.

    ``activity='both'`` writes ``n_trials`` high-activity trials (indices
    ``0..n-1``) followed by ``n_trials`` low-activity trials (indices
    ``n..2n-1``).
    """
    if activity not in ("high", "low", "both"):
        raise ConfigurationError("activity must be high, low or both", operation="run_synth", parameter="activity")
    if n_trials < 1:
        raise ConfigurationError("n_trials must be >= 1", operation="run_synth", parameter="trials")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create {out}: {exc}", operation="run_synth", parameter="out") from exc
    layout = layout or default_layout()
    bands = default_bands(cfg.synth.sample_rate)
    plan = [("high", 0), ("low", n_trials)] if activity == "both" else [(activity, 0)]
    threads = effective_threads(cfg.threads)
    files = []
    for act, first in plan:
        trials = generate_dataset(n_trials, act, seed, cfg.synth, layout, bands, first_index=first, n_jobs=threads)
        for tr in trials:
            name = f"trial_{tr.trial_index:05d}_{act}.cfl"
            path = out / name
            try:
                cfio.write_trial_binary(path, tr.recording)
            except OSError as exc:
                raise ConfigurationError(f"cannot write {path}: {exc}", operation="run_synth", parameter="out") from exc
            files.append(
                {
                    "file": name,
                    "activity": act,
                    "trial_index": tr.trial_index,
                    "scales": tr.scales,
                    "n_pad": tr.n_pad,
                    "sha256": cfio.file_sha256(path),
                }
            )
    # Thread count does not affect the data, so it stays out of the hash.
    config = cfg.to_dict()
    config.pop("threads")
    manifest = {
        "kind": "synthetic",
        "seed": int(seed),
        "activity": activity,
        "n_trials": int(n_trials),
        "sample_rate": cfg.synth.sample_rate,
        "channel_names": list(layout.names),
        "tag_names": {str(k): v for k, v in TAG_NAMES.items()},
        "positive_tag": "high",
        "layout": layout.to_dict(),
        "bands": [b.to_dict() for b in bands],
        "config": config,
        "config_hash": cfio.config_hash(config),
        "files": files,
    }
    cfio.write_json(out / "manifest.json", manifest)
    return manifest


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _grouping_for(cfg, trials) -> RoiGrouping:
    if cfg.grouping:
        return RoiGrouping(cfg.grouping)
    return RoiGrouping.identity(trials[0].channel_names)


def parse_pair(text: str) -> tuple:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError as exc:
        raise ConfigurationError(f"pair must look like 2:5, got {text!r}", operation="parse_pair", parameter="pair") from exc


def _tag_name(code, tag_names):
    return tag_names.get(str(code), str(code))


def _roles(rois, x, y, conditioning):
    z = [r for r in rois if r not in (x, y)] if conditioning == "causal" else []
    return z, [("X", x), ("Y", y)] + [("Z", r) for r in z]


def _full_covariances(cfg, trials, grouping, tag_names):
    """Per (trial, tag): covariance over all ROI means in ROI order."""
    rois = grouping.rois
    out = []
    for ti, rec in enumerate(trials):
        g = group_into_rois(rec, grouping, "roi-mean")
        X = np.stack([g.data[r][0] for r in rois])
        per_tag = {}
        for code, start, stop in rec.segments():
            n_blocks = (stop - start) // cfg.N
            if n_blocks < 1:
                continue
            blk = X[:, start : start + n_blocks * cfg.N].reshape(len(rois), n_blocks, cfg.N).transpose(1, 0, 2)
            per_tag.setdefault(_tag_name(code, tag_names), []).append(blk)
        for tag, blocks in per_tag.items():
            S = np.concatenate(blocks)
            layout = [("X", rois[0]), ("Y", rois[1])] + [("Z", r) for r in rois[2:]]
            pc = estimate_joint_covariance(WindowEnsemble(S, layout), cfg.ridge)
            out.append((ti, tag, pc))
    return out


class _ClampCounter:
    def __init__(self):
        self.total = 0
        self.clamped = 0
        self._lock = threading.Lock()

    def add(self, n, clamped):
        with self._lock:
            self.total += n
            self.clamped += clamped


def _rates(pc, kinds, cfg, counter):
    vals = evaluate_measures(pc, kinds)
    out = {}
    n_clamped = 0
    for k in kinds:
        v, was = clamp(vals[k], NEG_TOL)
        n_clamped += was
        out[k] = v / pc.N if cfg.per_sample else v
    counter.add(len(kinds), n_clamped)
    return out


def run_analyze(cfg: PipelineConfig, trials: Sequence, manifest: dict | None = None, pairs=None):
    """Rate rows for every ordered ROI pair, measure and tag.

    Returns ``(rows, meta)``; ``rows`` carry the rate in nats.
    """
    if not trials:
        raise DataError("dataset has no trials", operation="run_analyze", parameter="dataset")
    manifest = manifest or {}
    tag_names = manifest.get("tag_names", {})
    grouping = _grouping_for(cfg, trials)
    rois = grouping.rois
    if pairs is None:
        pairs = [(a, b) for a in rois for b in rois if a != b]
    for a, b in pairs:
        if a not in rois or b not in rois or a == b:
            raise ConfigurationError(f"invalid ROI pair {a}:{b}", operation="run_analyze", parameter="pair")
    kinds = [MeasureKind.parse(m) for m in cfg.measures]
    counter = _ClampCounter()
    rows = []
    if cfg.mode == "trial-blocks":
        covs = _full_covariances(cfg, trials, grouping, tag_names)
        if not covs:
            raise DataError(f"no trial has a complete block of {cfg.N} samples", operation="run_analyze", parameter="N")
        order = list(rois)

        def work(pair):
            x, y = pair
            z, layout = _roles(rois, x, y, cfg.conditioning)
            keep = [order.index(r) for r in [x, y] + z]
            out = []
            for ti, tag, pc in covs:
                sub = pc.keep_vars(keep).with_layout(layout)
                vals = _rates(sub, kinds, cfg, counter)
                for k in kinds:
                    out.append((x, y, k, tag, ti, 0.0, vals[k]))
            return out

    else:
        grouped = [group_into_rois(rec, grouping, cfg.aggregation) for rec in trials]
        fs = trials[0].sample_rate
        stride = cfg.N - 2 * cfg.edge_overlap
        windows = {}
        for g in grouped:
            for w in slice_windows_quiet(g, cfg.N, cfg.edge_overlap):
                t_ms = 1000.0 * w.offset / fs
                if t_ms < cfg.analysis_span_ms:
                    windows.setdefault(_tag_name(w.tag, tag_names), {}).setdefault(w.k, w.tag)
        if not windows:
            raise DataError(
                f"no window of {cfg.N} samples fits inside any tag segment", operation="run_analyze", parameter="N"
            )
        n_keep = cfg.n_keep
        if n_keep is None:
            n_keep = min(g.data[r].shape[0] for g in grouped for r in g.rois)

        def work(pair):
            x, y = pair
            z, _ = _roles(rois, x, y, cfg.conditioning)
            out = []
            for tag in sorted(windows):
                for k in sorted(windows[tag]):
                    ens = pool_sections(
                        grouped,
                        k,
                        x,
                        y,
                        windows[tag][k],
                        cfg.N,
                        cfg.edge_overlap,
                        z_rois=z,
                        n_keep=n_keep,
                        pairing_seed=cfg.pairing_seed,
                        section_cap=cfg.section_cap,
                    )
                    pc = estimate_joint_covariance(ens, cfg.ridge)
                    vals = _rates(pc, kinds, cfg, counter)
                    for kind in kinds:
                        out.append((x, y, kind, tag, k, 1000.0 * k * stride / fs, vals[kind]))
            return out

    for chunk in _map(work, pairs, cfg.threads):
        for x, y, kind, tag, idx, t_ms, v in chunk:
            rows.append(
                {
                    "pair": f"{x}:{y}",
                    "measure": kind.value,
                    "tag": tag,
                    "window_index": idx,
                    "window_time_ms": t_ms,
                    "rate": v,
                }
            )
    rows.sort(key=lambda r: (pairs.index(parse_pair(r["pair"])), cfg.measures.index(r["measure"]), r["tag"], r["window_index"]))
    total, clamped = counter.total, counter.clamped
    if clamped:
        logger.warning("%d of %d rates were clamped at zero", clamped, total)
    logger.info("computed %d rates for %d pairs", total, len(pairs))
    meta = {
        "mode": cfg.mode,
        "rois": list(rois),
        "roi_labels": {str(r): "+".join(grouping.channels_of(r)) for r in rois},
        "measures": list(cfg.measures),
        "pairs": [f"{a}:{b}" for a, b in pairs],
        "positive_tag": manifest.get("positive_tag"),
        "n_rates": total,
        "n_clamped": clamped,
        "units": cfg.units,
        "config": cfg.to_dict(),
    }
    return rows, meta


# ---------------------------------------------------------------------------
# roc / matrix
# ---------------------------------------------------------------------------


def _resolve_tags(cfg, rows, meta):
    tags = sorted({r["tag"] for r in rows})
    pos = cfg.positive_tag or (meta or {}).get("positive_tag") or "low"
    if pos not in tags:
        raise DataError(f"positive tag {pos!r} not among {tags}", operation="run_roc", parameter="positive_tag")
    if cfg.negative_tag:
        neg = cfg.negative_tag
        if neg not in tags:
            raise DataError(f"negative tag {neg!r} not among {tags}", operation="run_roc", parameter="negative_tag")
    else:
        others = [t for t in tags if t != pos]
        if len(others) != 1:
            raise DataError(
                f"cannot infer the negative tag from {tags}; set negative_tag",
                operation="run_roc",
                parameter="negative_tag",
            )
        neg = others[0]
    return pos, neg


def run_roc(cfg: PipelineConfig, rows, meta: dict | None = None) -> dict:
    """ROC, AUC and bootstrap significance for every (pair, measure)."""
    if not rows:
        raise DataError("rate table is empty", operation="run_roc", parameter="rates")
    pos_tag, neg_tag = _resolve_tags(cfg, rows, meta)
    sig_cfg = SignificanceConfig(cfg.c, cfg.alpha)
    groups = {}
    for r in rows:
        if r["window_time_ms"] >= cfg.analysis_span_ms:
            continue
        groups.setdefault((r["pair"], r["measure"]), {}).setdefault(r["tag"], []).append(r)
    keys = sorted(groups, key=lambda k: (parse_pair(k[0]), k[1]))

    def work(key):
        by_tag = groups[key]
        pos = np.array([r["rate"] for r in sorted(by_tag.get(pos_tag, []), key=lambda r: r["window_index"])])
        neg = np.array([r["rate"] for r in sorted(by_tag.get(neg_tag, []), key=lambda r: r["window_index"])])
        if pos.size == 0 or neg.size == 0:
            raise DataError(f"pair {key[0]} {key[1]}: a tag has no rates", operation="run_roc", parameter="tag")
        if pos.size != neg.size:
            raise DataError(
                f"pair {key[0]} {key[1]}: {pos.size} {pos_tag} rates vs {neg.size} {neg_tag} rates",
                operation="run_roc",
                parameter="rates",
            )
        curve = roc_points(pos, neg)
        boot = block_bootstrap(pos, neg, cfg.bootstrap_B, cfg.bootstrap_seed)
        sig = significance_test(boot, sig_cfg)
        src, dst = parse_pair(key[0])
        return {
            "pair": key[0],
            "source": src,
            "dest": dst,
            "measure": key[1],
            "theta": curve.theta,
            "theta_mw": auc_mann_whitney(pos, neg),
            "p_value": sig.p_value,
            "empirical_p": sig.empirical_p,
            "significant": sig.reject,
            "n_pos": int(pos.size),
            "n_neg": int(neg.size),
            "curve": curve.to_dict(),
            "bootstrap": boot.to_dict(),
        }

    results = _map(work, keys, cfg.threads)
    rois = (meta or {}).get("rois") or sorted({p for r in results for p in (r["source"], r["dest"])})
    out = {
        "positive_tag": pos_tag,
        "negative_tag": neg_tag,
        "c": cfg.c,
        "alpha": cfg.alpha,
        "analysis_span_ms": cfg.analysis_span_ms,
        "rois": rois,
        "pairs": results,
    }
    out["matrices"] = matrices_from_results(results, rois, sig_cfg)
    return out


def matrices_from_results(results, rois, sig_cfg: SignificanceConfig) -> dict:
    by_measure = {}
    for r in results:
        by_measure.setdefault(r["measure"], {})[(r["source"], r["dest"])] = BootstrapResult.from_dict(r["bootstrap"])
    out = {}
    for measure, boots in by_measure.items():
        M, records = connectivity_change_matrix(boots, rois, sig_cfg)
        for rec in records:
            rec["measure"] = measure
        out[measure] = {"rois": list(rois), "matrix": M.tolist(), "records": records}
    return out


def run_matrix(roc: dict, c: float | None = None, alpha: float | None = None) -> dict:
    """Re-evaluate significance of stored bootstrap results at a new ``c``/``alpha``."""
    if "pairs" not in roc:
        raise DataError("input is not an ROC result", operation="run_matrix", parameter="roc")
    sig_cfg = SignificanceConfig(roc.get("c", 0.85) if c is None else c, roc.get("alpha", 0.05) if alpha is None else alpha)
    rois = roc.get("rois") or sorted({p for r in roc["pairs"] for p in (r["source"], r["dest"])})
    return {"c": sig_cfg.c, "alpha": sig_cfg.alpha, "matrices": matrices_from_results(roc["pairs"], rois, sig_cfg)}


# ---------------------------------------------------------------------------
# diagnose / verify
# ---------------------------------------------------------------------------


def run_diagnose(cfg: PipelineConfig, trials, manifest: dict | None = None, rois=None) -> dict:
    """Per-ROI, per-tag mean, skewness, kurtosis and L1 Gaussian fit."""
    if not trials:
        raise DataError("dataset has no trials", operation="run_diagnose", parameter="dataset")
    tag_names = (manifest or {}).get("tag_names", {})
    grouping = _grouping_for(cfg, trials)
    rois = list(grouping.rois if rois is None else rois)
    pooled = {}
    for rec in trials:
        g = group_into_rois(rec, grouping, "per-electrode-realization")
        for code, start, stop in rec.segments():
            tag = _tag_name(code, tag_names)
            for r in rois:
                if r not in g.data:
                    raise ConfigurationError(f"unknown ROI {r}", operation="run_diagnose", parameter="roi")
                pooled.setdefault((r, tag), []).append(g.data[r][:, start:stop].ravel())
    tags = sorted({t for _, t in pooled})
    table = []
    for r in rois:
        row = {"roi": r, "label": "+".join(grouping.channels_of(r))}
        for tag in tags:
            x = np.concatenate(pooled.get((r, tag), [np.empty(0)]))
            if x.size == 0:
                continue
            mean, skew, kurt = skewness_kurtosis(x)
            counts, edges = np.histogram(x, bins=cfg.bins)
            entry = {
                "mean": mean,
                "skewness": skew,
                "kurtosis": kurt,
                "non_normal": is_non_normal(skew, kurt),
                "n_samples": int(x.size),
                "histogram": {"edges": edges.tolist(), "counts": counts.tolist()},
            }
            try:
                mu, sigma = l1_gaussian_fit(edges, counts)
                entry["fit"] = {"mu": mu, "sigma": sigma}
            except FitError as exc:
                entry["fit"] = exc.to_dict()
            row[tag] = entry
        table.append(row)
    return {"tags": tags, "columns": ["mean", "skewness", "kurtosis"], "rois": table}


def run_verify(n_pmfs: int = 200, n_covariances: int = 100, seed: int = 0) -> dict:
    """Identity suites on random discrete pmfs and random Gaussian covariances."""
    oracle = random_identity_suite(n_pmfs, seed)
    gauss = random_gaussian_identity_suite(n_covariances, seed)
    checks = []
    for name, r in oracle["max_abs_residual"].items():
        tol = FORM_TOL if name == "form_equivalence" else ORACLE_TOL
        checks.append({"engine": "oracle", "identity": name, "max_residual": r, "tolerance": tol, "pass": r < tol})
    for name, r in gauss["max_abs_residual"].items():
        checks.append(
            {"engine": "gaussian", "identity": name, "max_residual": r, "tolerance": GAUSSIAN_TOL, "pass": r < GAUSSIAN_TOL}
        )
    return {
        "n_pmfs": oracle["n_pmfs"],
        "n_covariances": gauss["n_covariances"],
        "seed": seed,
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks),
    }
