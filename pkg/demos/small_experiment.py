"""A small end-to-end run, then single-file attribution from the saved checkpoints.

Takes about a minute on one core. With 60 training clips per class the heads
are far from converged, so expect modest scores and the odd wrong attribution;
the default config (`lava run-experiment`) is the desk-scale run used for the
accuracy targets.

    python demos/small_experiment.py [out_dir]
"""

import json
import sys
from pathlib import Path

from lava.checkpoint import load_encoder, load_head
from lava.corpus import preprocess, read_manifest
from lava.pipeline import ExperimentConfig, Pipeline, run_experiment

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_run")
config = ExperimentConfig.from_dict({
    "corpus": {"train": 60, "val": 30, "test": 30, "real_test": 20, "unseen_test": 20},
    "autoencoder": {"max_epochs": 1, "limit_train": 16, "limit_val": 4},
    "ada": {"max_epochs": 8},
    "admr": {"max_epochs": 12},
})
summary = run_experiment(config, out, verbose=True)
print(json.dumps(summary, indent=2))

ep = json.loads((out / "reports" / "error_propagation.json").read_text())
print(f"ADA error rate {ep['ada_error_rate']:.3f}; {ep['forwarded']} samples forwarded to ADMR, "
      f"ADMR misclassification {ep['admr_misclassification_rate']:.3f}")
gen = json.loads((out / "reports" / "generalization.json").read_text())
print("unseen codec, ADA distribution:", gen["ada_distribution"])

# attribute one test file with the calibrated heads; infer sees the whole 3 s clip,
# while the heads were trained on centred windows
model, _ = load_encoder(out / "checkpoints" / "autoencoder.lava")
enc = model.encoder_store()
ada, th_ada, _ = load_head(out / "checkpoints" / "ada.lava", enc)
admr, th_admr, _ = load_head(out / "checkpoints" / "admr.lava", enc)
pipe = Pipeline(ada, admr, th_ada.tau, th_admr.tau)
entry = next(e for e in read_manifest(out / "corpus" / "manifest.jsonl")
             if e.split == "test" and e.model == "F02")
print(entry.path, "->", pipe.infer(preprocess(out / "corpus" / entry.path)).to_dict()["attribution"])
