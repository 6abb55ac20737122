"""Command-line interface.

Exit codes: 0 success, 1 validation or configuration error (including bad
flags), 2 I/O error, 3 internal invariant failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message)


def _level(s: str) -> str:
    up = s.upper()
    if up not in ("ADA", "ADMR"):
        raise argparse.ArgumentTypeError("level must be ada or admr")
    return up


def _json_arg(s: str):
    try:
        return json.loads(s)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc.msg}") from None


def _read_json(path) -> dict:
    from .training import ConfigError

    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


def _emit(obj, out) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- subcommands -----------------------------------------------------------

def cmd_synth_corpus(a) -> int:
    from .corpus import default_spec, synth_corpus

    spec = default_spec(a.train, a.val, a.test, a.real_test, a.unseen_test, a.seed)
    res = synth_corpus(spec, a.out)
    print(json.dumps({"manifest": str(res.manifest_path), "entries": len(res.entries),
                      "generalization": str(res.generalization_path),
                      "holdout": len(res.holdout)}))
    return EXIT_OK


def cmd_preprocess(a) -> int:
    from .corpus import load_entries, preprocess, read_manifest, select

    if bool(a.audio) == bool(a.manifest):
        raise ValueError("give exactly one of --audio or --manifest")
    if a.audio:
        x = preprocess(a.audio).samples[None]
    else:
        entries = read_manifest(a.manifest)
        if a.split:
            entries = select(entries, split=a.split)
        x = load_entries(entries, a.manifest)
    Path(a.out).parent.mkdir(parents=True, exist_ok=True)
    np.save(a.out, x.astype(np.float32))
    print(json.dumps({"out": a.out, "shape": list(x.shape)}))
    return EXIT_OK


def _train_cfg(path, seed):
    from .training import ConfigError, TrainConfig

    d = _read_json(path) if path else {}
    extra = {k: d.pop(k) for k in ("beta", "limit_train", "limit_val") if k in d}
    if seed is not None:
        d["seed"] = seed
    try:
        return TrainConfig(**d), extra
    except TypeError as exc:
        raise ConfigError(f"bad training config: {exc}") from None


def _history_writer(path):
    if not path:
        return None, lambda: None
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w")

    def on_epoch(rec):
        fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
        fh.flush()
    return on_epoch, fh.close


def cmd_train_ae(a) -> int:
    from .autoencoder import LossConfig, train_autoencoder
    from .checkpoint import save_autoencoder
    from .corpus import read_manifest

    cfg, extra = _train_cfg(a.config, a.seed)
    beta = float(extra.get("beta", 1e-4))
    limit = {"train": extra.get("limit_train"), "val": extra.get("limit_val")}
    entries = read_manifest(a.manifest)
    entries = [e for e in entries if e.split in ("train", "val")]
    on_epoch, close = _history_writer(a.history)
    try:
        model, res = train_autoencoder(entries, a.manifest, cfg, LossConfig(beta), limit,
                                       on_epoch)
    finally:
        close()
    save_autoencoder(model, a.out, beta, cfg.seed)
    print(json.dumps({"checkpoint": a.out, "best_epoch": res.best_epoch,
                      "epochs": len(res.history), "steps": res.steps}))
    return EXIT_OK


def _encoder(path):
    from .checkpoint import load_encoder

    model, meta = load_encoder(path)
    return model.encoder_store(), meta


def cmd_train_head(a) -> int:
    from .checkpoint import head_meta, save_head
    from .corpus import read_manifest
    from .heads import train_head

    cfg, extra = _train_cfg(a.config, a.seed)
    encoder, enc_meta = _encoder(a.encoder)
    beta = float(enc_meta.get("beta", extra.get("beta", 1e-4)))
    on_epoch, close = _history_writer(a.history)
    try:
        head, res = train_head(a.level, read_manifest(a.manifest), a.manifest, encoder, cfg,
                               attention=not a.no_attention, on_epoch=on_epoch)
    finally:
        close()
    save_head(head, a.out, head_meta(head, cfg.seed, beta))
    print(json.dumps({"checkpoint": a.out, "level": a.level,
                      "attention": head.spec.attention, "best_epoch": res.best_epoch,
                      "epochs": len(res.history)}))
    return EXIT_OK


def cmd_calibrate(a) -> int:
    from .checkpoint import load_head, save_head
    from .corpus import load_entries, read_manifest
    from .heads import head_entries, labelled
    from .rejection import calibrate_threshold, collect_confidences

    encoder, _ = _encoder(a.encoder)
    head, _, meta = load_head(a.head, encoder)
    if head.spec.level != a.level:
        raise ValueError(f"--level {a.level} does not match checkpoint level {head.spec.level}")
    chosen, y = labelled(head_entries(read_manifest(a.manifest), a.level, a.split), a.level,
                         head.vocabulary)
    if not chosen:
        raise ValueError(f"{a.level} {a.split} split is empty")
    x = load_entries(chosen, a.manifest)
    probs = np.concatenate([head.predict_proba(x[s:s + 16]) for s in range(0, len(x), 16)])
    th = calibrate_threshold(collect_confidences(probs, y), a.target_acc, a.level)
    meta = {**meta, "threshold": th.to_dict()}
    save_head(head, a.out or a.head, meta)
    print(f"tau_{a.level.lower()} = {th.tau_string()}")
    print(json.dumps(th.to_dict(), sort_keys=True))
    return EXIT_OK


def _pipeline(a):
    from .checkpoint import load_head
    from .pipeline import Pipeline

    encoder, _ = _encoder(a.encoder)
    ada, th_ada, _ = load_head(a.ada, encoder)
    admr, th_admr = None, None
    if a.admr:
        admr, th_admr, _ = load_head(a.admr, encoder)
    if ada.spec.level != "ADA" or (admr is not None and admr.spec.level != "ADMR"):
        raise ValueError("--ada and --admr must point at ADA and ADMR head checkpoints")

    def tau(override, th):
        if override is not None:
            return None if override == "reject-all" else float(override)
        return th.tau if th is not None else 0.0
    return Pipeline(ada, admr, tau(a.tau_ada, th_ada), tau(a.tau_admr, th_admr))


def cmd_infer(a) -> int:
    from .corpus import preprocess

    pipe = _pipeline(a)
    res = pipe.infer(preprocess(a.audio))
    sys.stdout.write(json.dumps(res.to_dict(), sort_keys=True) + "\n")
    return EXIT_OK


def cmd_eval(a) -> int:
    from .corpus import load_entries, read_manifest, select
    from .pipeline import compute_metrics, error_propagation_eval, generalization_eval
    from .pipeline.experiment import DEFAULT_EXPECTATION
    from .rejection import decide

    entries = read_manifest(a.manifest)
    if a.split:
        entries = select(entries, split=a.split)
    if not entries:
        raise ValueError("manifest selection is empty")
    pipe = _pipeline(a)
    if a.mode == "metrics":
        level = a.level or "ADA"
        head, tau = (pipe.ada, pipe.tau_ada) if level == "ADA" else (pipe.admr, pipe.tau_admr)
        if head is None:
            raise ValueError("metrics for ADMR need --admr")
        if level == "ADA":
            chosen = [e for e in entries if e.is_fake]
            truth = [e.technology for e in chosen]
        else:
            chosen = [e for e in entries if e.is_fake and e.model]
            truth = [e.model for e in chosen]
        if not chosen:
            raise ValueError(f"no labelled {level} entries to score")
        x = load_entries(chosen, a.manifest)
        probs = np.concatenate([head.predict_proba(x[s:s + 16]) for s in range(0, len(x), 16)])
        pairs = [(t, decide(p, head.vocabulary, tau)) for t, p in zip(truth, probs)]
        report = compute_metrics(pairs, head.vocabulary, a.rejection).to_dict()
        report["level"] = level
    else:
        x = load_entries(entries, a.manifest)
        if a.mode == "error-prop":
            report = error_propagation_eval(entries, x, pipe)
        else:
            report = generalization_eval(entries, x, pipe, a.expect or DEFAULT_EXPECTATION)
    _emit(report, a.out)
    return EXIT_OK


def cmd_run_experiment(a) -> int:
    from .pipeline import ExperimentConfig, run_experiment

    cfg = ExperimentConfig.load(a.config)
    summary = run_experiment(cfg, a.out, verbose=not a.quiet)
    _emit(summary, None)
    return EXIT_OK


def cmd_gradcheck(a) -> int:
    from .autoencoder import DECODER_SPECS, ENCODER_SPECS
    from .kernel import Sequential, grad_check

    results, ok = {}, True
    for name, specs in (("encoder", ENCODER_SPECS), ("decoder", DECODER_SPECS)):
        net = Sequential(specs, name)
        store = net.init(a.seed, dtype=np.float64)
        ch = specs[0].in_channels
        length = a.length if name == "encoder" else a.length // 16
        x = np.random.default_rng(a.seed).standard_normal((2, ch, length))
        for mode in ("train", "eval"):
            rep = grad_check(net, store, x, train=mode == "train", seed=a.seed)
            ok &= rep.passed(a.tol)
            results[f"{name}.{mode}"] = {"max_error": rep.max_error,
                                         "passed": rep.passed(a.tol),
                                         "checked": rep.checked, "skipped": rep.skipped}
    _emit({"tolerance": a.tol, "passed": bool(ok), "results": results}, a.out)
    return EXIT_OK if ok else EXIT_INTERNAL


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lava", description="Hierarchical audio deepfake attribution.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth-corpus", help="write the synthetic desk corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--train", type=int, default=300)
    s.add_argument("--val", type=int, default=100)
    s.add_argument("--test", type=int, default=100)
    s.add_argument("--real-test", type=int, default=100)
    s.add_argument("--unseen-test", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth_corpus)

    s = sub.add_parser("preprocess", help="resample, normalize and fix length to .npy")
    s.add_argument("--audio")
    s.add_argument("--manifest")
    s.add_argument("--split", choices=("train", "val", "test"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("train-ae", help="train the autoencoder on fake audio")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="JSON training config")
    s.add_argument("--history", help="JSON-Lines history output")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_train_ae)

    s = sub.add_parser("train-head", help="train an ADA or ADMR head")
    s.add_argument("--level", type=_level, required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--encoder", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--no-attention", action="store_true")
    s.add_argument("--config")
    s.add_argument("--history")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_train_head)

    s = sub.add_parser("calibrate", help="fit a rejection threshold on training confidences")
    s.add_argument("--level", type=_level, required=True)
    s.add_argument("--target-acc", type=float, default=0.85)
    s.add_argument("--manifest", required=True)
    s.add_argument("--encoder", required=True)
    s.add_argument("--head", required=True)
    s.add_argument("--split", default="train", choices=("train", "val", "test"))
    s.add_argument("--out", help="output checkpoint (default: update --head in place)")
    s.set_defaults(func=cmd_calibrate)

    def models(s):
        s.add_argument("--encoder", required=True)
        s.add_argument("--ada", required=True)
        s.add_argument("--admr")
        s.add_argument("--tau-ada", help="override threshold (decimal or reject-all)")
        s.add_argument("--tau-admr")

    s = sub.add_parser("infer", help="attribute one audio file")
    s.add_argument("--audio", required=True)
    models(s)
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="metrics, error-propagation or generalization report")
    s.add_argument("--mode", required=True, choices=("metrics", "error-prop", "generalization"))
    s.add_argument("--manifest", required=True)
    s.add_argument("--split", choices=("train", "val", "test"))
    s.add_argument("--level", type=_level)
    s.add_argument("--rejection", default="off", choices=("off", "as-error"))
    s.add_argument("--expect", type=_json_arg, help='e.g. {"ada": ["unknown", "Codec"]}')
    s.add_argument("--out")
    models(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("run-experiment", help="full pipeline from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_run_experiment)

    s = sub.add_parser("gradcheck", help="finite-difference check of encoder and decoder")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--length", type=int, default=64)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--out")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    from .checkpoint import CheckpointError
    from .corpus import ManifestError, WavFormatError
    from .kernel import ShapeError
    from .training import ConfigError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_INVALID
    except SystemExit as exc:      # --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, ManifestError, WavFormatError, CheckpointError, ShapeError,
            ValueError, KeyError) as exc:
        print(f"lava {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"lava {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:       # invariant failures and bugs
        print(f"lava {args.command}: internal error: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
