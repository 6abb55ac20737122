import json

import pytest

from lava.pipeline import DECISIONS, ExperimentConfig, run_experiment
from lava.training import ConfigError

TINY = {
    "corpus": {"train": 6, "val": 3, "test": 3, "real_test": 2, "unseen_test": 2},
    "autoencoder": {"max_epochs": 1, "batch_size": 4, "limit_train": 4, "limit_val": 2},
    "ada": {"max_epochs": 1, "batch_size": 8},
    "admr": {"max_epochs": 1, "batch_size": 8},
    "window": 2048,
    "ablation": True,
}


def _outputs(root):
    """Every deterministic output file, keyed by relative path."""
    files = {}
    for sub in ("reports", "checkpoints", "history"):
        for p in sorted((root / sub).rglob("*")):
            if p.is_file():
                files[p.relative_to(root).as_posix()] = p.read_bytes()
    return files


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    cfg = ExperimentConfig.from_dict(TINY)
    a, b = tmp_path_factory.mktemp("run_a"), tmp_path_factory.mktemp("run_b")
    return run_experiment(cfg, a, verbose=False), a, b, run_experiment(cfg, b, verbose=False)


def test_report_files_present(runs):
    summary, a, _, _ = runs
    names = {p.name for p in (a / "reports").iterdir()}
    assert {"metrics_ada.json", "metrics_admr.json", "error_propagation.json",
            "generalization.json", "calibration.json", "summary.json",
            "metrics_admr_no_attention.json"} <= names
    for ck in ("autoencoder", "ada", "admr", "admr_no_attention"):
        assert (a / "checkpoints" / f"{ck}.lava").is_file()
    assert 0.0 <= summary["ada_macro_f1"] <= 1.0
    assert "admr_no_attention_macro_f1" in summary


def test_run_manifest_contents(runs):
    _, a, _, _ = runs
    man = json.loads((a / "run_manifest.json").read_text())
    assert man["decisions"] == DECISIONS
    assert set(man["seeds"]) == {"corpus", "autoencoder", "ada", "admr"}
    assert {"lava", "numpy", "python"} <= set(man["versions"])
    assert all(isinstance(v, str) for v in man["thresholds"].values())
    assert man["config"]["window"] == 2048


def test_reruns_are_byte_identical(runs):
    _, a, b, _ = runs
    fa, fb = _outputs(a), _outputs(b)
    assert fa.keys() == fb.keys() and len(fa) > 10
    for name in fa:
        assert fa[name] == fb[name], name


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"nope": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"window": 10})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"ada": 3})
    p = tmp_path / "c.json"
    p.write_text("[1,")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(p)
    assert ExperimentConfig.from_dict({"ada": {"lr": 0.01}}).ada["max_epochs"] == 16
