"""End-to-end runs: corpus, autoencoder, both heads, thresholds, reports."""

from __future__ import annotations

import json
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..autoencoder import LossConfig, fit_autoencoder
from ..checkpoint import head_meta, save_autoencoder, save_head
from ..corpus.dsp import CLIP_SAMPLES
from ..corpus import default_spec, load_entries, read_manifest, select, synth_corpus
from ..heads import (
    LEVELS,
    Head,
    HeadSpec,
    PrefixCache,
    cached_proba,
    fit_head_cached,
    head_entries,
    label_of,
)
from ..rejection import calibrate_threshold, collect_confidences, decide
from ..training import ConfigError, TrainConfig
from .harness import error_propagation_report, generalization_report
from .metrics import compute_metrics
from .routing import CODEC, route

DECISIONS = {
    "trim_policy": "keep the first 48000 samples; zero-pad shorter clips at the end",
    "loss_reduction": "smoothed L1 averaged over every sample in the batch",
    "calibration": ("smallest distinct training-set confidence whose accepted subset "
                    "(confidence >= tau) reaches the target accuracy; reject-all otherwise"),
    "attention_parameters": "separate attention and classifier parameters per head",
    "early_stopping": "stop once validation loss fails to improve for more than patience epochs",
    "head_window": ("heads train, calibrate and evaluate on a centred slice of each "
                    "preprocessed clip (config window); the autoencoder sees whole clips"),
    "metrics_rejection": "headline metrics are scored with rejection off; as-error also reported",
}

DEFAULT_EXPECTATION = {"ada": ["unknown", CODEC], "admr": ["unknown"]}


def _train_cfg(d: dict, seed: int) -> TrainConfig:
    try:
        return TrainConfig(**{**d, "seed": seed})
    except TypeError as exc:
        raise ConfigError(f"bad training section: {exc}") from None


@dataclass
class ExperimentConfig:
    corpus: dict = field(default_factory=lambda: {
        "train": 300, "val": 100, "test": 100, "real_test": 100, "unseen_test": 100})
    seeds: dict = field(default_factory=lambda: {
        "corpus": 0, "autoencoder": 0, "ada": 0, "admr": 0})
    autoencoder: dict = field(default_factory=lambda: {
        "max_epochs": 2, "patience": 5, "lr": 1e-3, "limit_train": 64, "limit_val": 16})
    ada: dict = field(default_factory=lambda: {"max_epochs": 16, "patience": 5, "lr": 3e-3})
    admr: dict = field(default_factory=lambda: {"max_epochs": 20, "patience": 5, "lr": 3e-3})
    beta: float = 1e-4
    target_acc: float = 0.85
    attention: bool = True
    ablation: bool = False
    expectation: dict = field(default_factory=lambda: dict(DEFAULT_EXPECTATION))
    cache_mb: int = 1536
    window: int | None = 8000     # head inputs: centred slice of each clip; None = whole clip
    corpus_dir: str | None = None

    SECTIONS = ("corpus", "seeds", "autoencoder", "ada", "admr")

    def __post_init__(self):
        for key in ("corpus", "seeds", "autoencoder", "ada", "admr", "expectation"):
            if not isinstance(getattr(self, key), dict):
                raise ConfigError(f"config field {key!r} must be an object")
        if not 0.0 < self.target_acc <= 1.0:
            raise ConfigError("target_acc must lie in (0, 1]")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.window is not None and not 64 <= int(self.window) <= CLIP_SAMPLES:
            raise ConfigError(f"window must lie in [64, {CLIP_SAMPLES}]")
        unknown = set(self.seeds) - {"corpus", "autoencoder", "ada", "admr"}
        if unknown:
            raise ConfigError(f"unknown seed names: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        base = cls()
        known = set(asdict(base))
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        merged = {}
        for key in known:
            value = d.get(key, getattr(base, key))
            if key in cls.SECTIONS and key in d:
                if not isinstance(value, dict):
                    raise ConfigError(f"config field {key!r} must be an object")
                value = {**getattr(base, key), **value}
            merged[key] = value
        return cls(**merged)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            text = Path(path).read_text()
        except OSError:
            raise
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None

    def to_dict(self) -> dict:
        return asdict(self)

    def seed(self, name: str) -> int:
        return int(self.seeds.get(name, 0))


def _window(x: np.ndarray, window: int | None) -> np.ndarray:
    if window is None or window >= x.shape[1]:
        return x
    start = (x.shape[1] - int(window)) // 2
    return np.ascontiguousarray(x[:, start:start + int(window)])


def _dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_history(history, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in history:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


class _Log:
    def __init__(self, verbose: bool):
        self.verbose = verbose
        self.t0 = time.perf_counter()
        self.stages: dict[str, float] = {}
        self._last = self.t0

    def __call__(self, msg: str) -> None:
        if self.verbose:
            print(f"[{time.perf_counter() - self.t0:7.1f}s] {msg}", flush=True)

    def stage(self, name: str) -> None:
        now = time.perf_counter()
        self.stages[name] = round(now - self._last, 3)
        self._last = now


def _epoch_logger(log, name):
    def on_epoch(rec):
        extra = "".join(f" {k}={v:.4f}" for k, v in rec.extras.items())
        log(f"{name} epoch {rec.epoch} train={rec.train_loss:.5f} "
            f"val={rec.val_loss:.5f}{extra}")
    return on_epoch


def _train_level(level, attention, seed, cfg_section, cache, index, entries, log):
    spec = HeadSpec.for_level(level, attention)
    data = {}
    for split in ("train", "val"):
        chosen = head_entries(entries, level, split)
        if not chosen:
            raise ConfigError(f"{level} {split} split is empty")
        data[split] = (np.array([index[e.path] for e in chosen]),
                       np.array([spec.vocabulary.index(label_of(e, level)) for e in chosen]))
    head = Head(spec, cache.head.store, seed=seed)
    cfg = _train_cfg(cfg_section, seed)
    tag = level if attention else f"{level} (no attention)"
    result = fit_head_cached(head, cache, *data["train"], *data["val"], cfg,
                             _epoch_logger(log, tag))
    return head, result, data


def _level_metrics(head, probs, labels, tau) -> dict:
    preds = [decide(p, head.vocabulary, tau) for p in probs]
    pairs = list(zip(labels, preds))
    return {mode: compute_metrics(pairs, head.vocabulary, mode).to_dict()
            for mode in ("off", "as-error")}


def _pipeline_results(ada, admr, ada_probs, admr_probs_fn, tau_ada, tau_admr):
    out = []
    for i, p in enumerate(ada_probs):
        a = decide(p, ada.vocabulary, tau_ada)
        out.append(route(a, lambda i=i: decide(admr_probs_fn(i), admr.vocabulary, tau_admr)))
    return out


def run_experiment(config: ExperimentConfig, out_dir, verbose: bool = False) -> dict:
    """Run every stage and write the report bundle under ``out_dir``.

    Everything except ``run_manifest.json`` (which holds wall-clock
    timestamps and stage timings) is a deterministic function of the config.
    Returns a summary dict.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log = _Log(verbose)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")

    # corpus
    corpus_dir = Path(config.corpus_dir) if config.corpus_dir else out / "corpus"
    try:
        spec = default_spec(seed=config.seed("corpus"), **config.corpus)
    except TypeError as exc:
        raise ConfigError(f"bad corpus section: {exc}") from None
    synth = synth_corpus(spec, corpus_dir)
    entries, holdout = synth.entries, synth.holdout
    log(f"corpus: {len(entries)} entries, {len(holdout)} held out")
    log.stage("synth_corpus")

    # autoencoder on a strided fake-only subset
    ae_section = dict(config.autoencoder)
    limits = {"train": ae_section.pop("limit_train", None), "val": ae_section.pop("limit_val", None)}
    fakes = [e for e in entries if e.is_fake]
    ae_data = {}
    for split in ("train", "val"):
        chosen = select(fakes, split=split)
        cap = limits[split]
        if cap is not None and len(chosen) > cap:
            pick = np.linspace(0, len(chosen) - 1, cap).round().astype(int)
            chosen = [chosen[i] for i in pick]
        if not chosen:
            raise ConfigError(f"autoencoder {split} split is empty")
        ae_data[split] = load_entries(chosen, synth.manifest_path)
    ae_cfg = _train_cfg(ae_section, config.seed("autoencoder"))
    model, ae_fit = fit_autoencoder(ae_data["train"], ae_data["val"], ae_cfg,
                                    LossConfig(config.beta),
                                    on_epoch=_epoch_logger(log, "autoencoder"))
    del ae_data
    save_autoencoder(model, out / "checkpoints" / "autoencoder.lava", config.beta,
                     config.seed("autoencoder"))
    _write_history(ae_fit.history, out / "history" / "autoencoder.jsonl")
    log.stage("train_autoencoder")

    # preprocessed arrays: train/val fakes (cached prefix) and evaluation sets
    train_val = [e for e in fakes if e.split in ("train", "val")]
    x_tv = _window(load_entries(train_val, synth.manifest_path), config.window)
    index = {e.path: i for i, e in enumerate(train_val)}
    encoder = model.encoder_store()
    probe = Head(HeadSpec.for_level("ADA"), encoder)
    cache = PrefixCache(probe, x_tv, budget_bytes=int(config.cache_mb) << 20)
    log.stage("load_train_val")

    heads, fits, data = {}, {}, {}
    for level, seed in (("ADA", config.seed("ada")), ("ADMR", config.seed("admr"))):
        section = config.ada if level == "ADA" else config.admr
        heads[level], fits[level], data[level] = _train_level(
            level, config.attention, seed, section, cache, index, entries, log)
        _write_history(fits[level].history, out / "history" / f"{level.lower()}.jsonl")
        log.stage(f"train_{level.lower()}")

    # thresholds from training-set confidences
    thresholds = {}
    for level, head in heads.items():
        idx, y = data[level]["train"]
        probs = cached_proba(head, cache, idx)
        thresholds[level] = calibrate_threshold(collect_confidences(probs, y),
                                                config.target_acc, level)
        seed = config.seed(level.lower())
        save_head(head, out / "checkpoints" / f"{level.lower()}.lava",
                  head_meta(head, seed, config.beta, thresholds[level]))
    _dump({k: v.to_dict() for k, v in thresholds.items()}, out / "reports" / "calibration.json")
    log.stage("calibrate")

    # evaluation
    test = [e for e in entries if e.split == "test"]
    x_test = _window(load_entries(test, synth.manifest_path), config.window)
    x_unseen = (_window(load_entries(holdout, synth.manifest_path), config.window)
                if holdout else None)
    ada, admr = heads["ADA"], heads["ADMR"]

    def probs_for(x):
        h = np.empty((len(x), ada.spec.n_classes)), np.empty((len(x), admr.spec.n_classes))
        for s in range(0, len(x), 16):
            pre = ada.prefix(x[s:s + 16, None, :])
            h[0][s:s + 16] = ada.proba_from_prefix(pre)
            h[1][s:s + 16] = admr.proba_from_prefix(pre)
        return h

    p_ada, p_admr = probs_for(x_test)
    tau_ada, tau_admr = thresholds["ADA"].tau, thresholds["ADMR"].tau
    fake_i = [i for i, e in enumerate(test) if e.is_fake]
    codec_i = [i for i in fake_i if test[i].technology == CODEC and test[i].model]
    reports = {
        "metrics_ada": _level_metrics(ada, p_ada[fake_i],
                                      [test[i].technology for i in fake_i], tau_ada),
        "metrics_admr": _level_metrics(admr, p_admr[codec_i],
                                       [test[i].model for i in codec_i], tau_admr),
    }
    results = _pipeline_results(ada, admr, p_ada, lambda i: p_admr[i], tau_ada, tau_admr)
    reports["error_propagation"] = error_propagation_report(test, results)
    if x_unseen is not None:
        u_ada, u_admr = probs_for(x_unseen)
        u_results = _pipeline_results(ada, admr, u_ada, lambda i: u_admr[i], tau_ada, tau_admr)
        reports["generalization"] = generalization_report(holdout, u_results,
                                                          config.expectation)
    log.stage("evaluate")

    if config.ablation:
        flip = not config.attention
        alt, alt_fit, alt_data = _train_level("ADMR", flip, config.seed("admr"), config.admr,
                                       cache, index, entries, log)
        suffix = "attention" if flip else "no_attention"
        _write_history(alt_fit.history, out / "history" / f"admr_{suffix}.jsonl")
        idx, y = alt_data["train"]
        alt_th = calibrate_threshold(collect_confidences(cached_proba(alt, cache, idx), y),
                                     config.target_acc, "ADMR")
        thresholds[f"ADMR_{suffix}"] = alt_th
        save_head(alt, out / "checkpoints" / f"admr_{suffix}.lava",
                  head_meta(alt, config.seed("admr"), config.beta, alt_th))
        pa = np.concatenate([alt.proba_from_prefix(alt.prefix(x_test[codec_i[s:s + 16], None, :]))
                             for s in range(0, len(codec_i), 16)])
        reports[f"metrics_admr_{suffix}"] = _level_metrics(
            alt, pa, [test[i].model for i in codec_i], alt_th.tau)
        log.stage("ablation")

    for name, rep in reports.items():
        _dump(rep, out / "reports" / f"{name}.json")

    summary = {
        "ada_macro_f1": float(reports["metrics_ada"]["off"]["macro avg"]["f1-score"]),
        "admr_macro_f1": float(reports["metrics_admr"]["off"]["macro avg"]["f1-score"]),
        "ada_accuracy": float(reports["metrics_ada"]["off"]["accuracy"]),
        "admr_accuracy": float(reports["metrics_admr"]["off"]["accuracy"]),
        "tau_ada": thresholds["ADA"].tau_string(),
        "tau_admr": thresholds["ADMR"].tau_string(),
        "reports": sorted(f"reports/{n}.json" for n in reports) + ["reports/calibration.json"],
    }
    for name in reports:
        if name.startswith("metrics_admr_"):
            summary[f"{name[len('metrics_'):]}_macro_f1"] = \
                float(reports[name]["off"]["macro avg"]["f1-score"])
    _dump(summary, out / "reports" / "summary.json")

    manifest = {
        "config": config.to_dict(),
        "seeds": {k: config.seed(k) for k in ("corpus", "autoencoder", "ada", "admr")},
        "versions": {"lava": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "decisions": DECISIONS,
        "thresholds": {k: v.tau_string() for k, v in thresholds.items()},
        "levels": {k: list(v) for k, v in LEVELS.items()},
        "timestamps": {"started": started, "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z")},
        "stage_seconds": log.stages,
    }
    _dump(manifest, out / "run_manifest.json")
    log(f"done: ADA macro-F1 {summary['ada_macro_f1']:.4f}, "
        f"ADMR macro-F1 {summary['admr_macro_f1']:.4f}")
    return summary


def ablation_study(run_dir, seeds=(0, 1, 2), verbose: bool = False) -> dict:
    """Retrain ADMR with and without attention for several seeds.

    Reuses the corpus, encoder and config of a finished ``run_experiment``
    directory. Scores are test macro-F1 with rejection off; the result is
    also written to ``reports/ablation_seeds.json``.
    """
    from ..checkpoint import load_encoder

    run = Path(run_dir)
    config = ExperimentConfig.from_dict(
        json.loads((run / "run_manifest.json").read_text())["config"])
    corpus_dir = Path(config.corpus_dir) if config.corpus_dir else run / "corpus"
    manifest = corpus_dir / "manifest.jsonl"
    entries = read_manifest(manifest)
    log = _Log(verbose)
    model, _ = load_encoder(run / "checkpoints" / "autoencoder.lava")

    train_val = [e for e in entries if e.is_fake and e.technology == CODEC
                 and e.split in ("train", "val")]
    index = {e.path: i for i, e in enumerate(train_val)}
    probe = Head(HeadSpec.for_level("ADMR"), model.encoder_store())
    cache = PrefixCache(probe, _window(load_entries(train_val, manifest), config.window),
                        budget_bytes=int(config.cache_mb) << 20)
    test = [e for e in entries if e.split == "test" and e.is_fake and e.technology == CODEC
            and e.model]
    x_test = _window(load_entries(test, manifest), config.window)
    pre_test = np.concatenate([probe.prefix(x_test[s:s + 16, None, :])
                               for s in range(0, len(x_test), 16)])
    truth = [e.model for e in test]

    rows = []
    for seed in seeds:
        row = {"seed": int(seed)}
        for attention in (True, False):
            head, _, _ = _train_level("ADMR", attention, int(seed), config.admr, cache, index,
                                      entries, log)
            probs = np.concatenate([head.proba_from_prefix(pre_test[s:s + 16])
                                    for s in range(0, len(pre_test), 16)])
            m = compute_metrics([(t, decide(p, head.vocabulary, 0.0))
                                 for t, p in zip(truth, probs)], head.vocabulary, "off")
            row["with_attention" if attention else "without_attention"] = float(m.macro.f1)
        row["difference"] = row["without_attention"] - row["with_attention"]
        log(f"seed {seed}: with {row['with_attention']:.4f} "
            f"without {row['without_attention']:.4f}")
        rows.append(row)
    result = {"metric": "ADMR test macro-F1, rejection off", "runs": rows,
              "max_difference": max(r["difference"] for r in rows)}
    _dump(result, run / "reports" / "ablation_seeds.json")
    return result
