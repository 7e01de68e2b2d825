import math

import numpy as np
import pytest

from synthattr.classical import Standardizer
from synthattr.errors import ConfigInvalid, EmptySplit
from synthattr.pipeline import (
    DESK,
    ConfusionMatrix,
    DatasetManifest,
    ExperimentConfig,
    ManifestEntry,
    evaluate,
    load_config,
    load_predictor,
    predict_unlabeled,
    read_log,
    read_manifest,
    save_config,
    train_model,
    write_manifest,
)
from synthattr.pipeline.cli import main
from synthattr.pipeline.data import batches, feature_matrix, select_entries
from synthattr.pipeline.evaluate import collect_embeddings

TINY_NET = dict(clip_seconds=0.25, batch_size=4, branch_channels=2, num_blocks=2, stage_channels=(4, 8))


def _config(tmp_path, **kw):
    base = dict(TINY_NET, epochs=1, runs_dir=str(tmp_path / "runs"))
    base.update(kw)
    return ExperimentConfig(**base)


# ------------------------------------------------------------------ config


def test_config_text_roundtrip(tmp_path):
    cfg = DESK.replace(model="res-tssd", seed=7, augment=True, lr0=0.002)
    back = load_config(save_config(cfg, tmp_path / "c.txt"))
    assert back == cfg


def test_config_overrides_and_comments(tmp_path):
    (tmp_path / "c.txt").write_text("# experiment\nepochs = 3  # short\nmodel = svm\n")
    cfg = load_config(tmp_path / "c.txt", {"seed": "5"}, profile="desk")
    assert (cfg.epochs, cfg.seed, cfg.model, cfg.feature) == (3, 5, "svm", "MFCC")
    assert cfg.clip_seconds == DESK.clip_seconds


@pytest.mark.parametrize("text", ["epochs = many\n", "colour = red\n", "just words\n", "model = svm\nfeature = RW\n"])
def test_config_errors(tmp_path, text):
    (tmp_path / "c.txt").write_text(text)
    with pytest.raises(ConfigInvalid):
        load_config(tmp_path / "c.txt")


def test_paper_defaults():
    cfg = ExperimentConfig()
    assert (cfg.epochs, cfg.batch_size, cfg.lr0, cfg.gamma, cfg.clip_seconds) == (200, 128, 1e-3, 0.95, 6.0)


# ------------------------------------------------------------------ batching


def test_batches_cover_everything():
    rng = np.random.default_rng(0)
    got = np.concatenate(list(batches(21, 4, rng)))
    assert sorted(got.tolist()) == list(range(21))
    sizes = [len(b) for b in batches(9, 4, np.random.default_rng(0))]
    assert sizes == [4, 5]  # a trailing single example joins the previous batch


# ------------------------------------------------------------------ training


def test_one_epoch_smoke(tmp_path, tiny_corpus):
    result = train_model(_config(tmp_path, model="inc-tssd"), tiny_corpus)
    assert result.checkpoint.is_file() and (result.run_dir / "checkpoint_last.bin").is_file()
    rows = read_log(result.run_dir / "log.csv")
    assert len(rows) == 1 and math.isfinite(rows[0]["train_loss"])
    assert (result.run_dir / "config.snapshot").is_file()


def test_logged_learning_rates(tmp_path, tiny_corpus):
    result = train_model(_config(tmp_path, model="res-tssd", epochs=3, lr0=2e-3), tiny_corpus)
    assert [r["lr"] for r in read_log(result.run_dir / "log.csv")] == [2e-3 * 0.95**e for e in range(3)]


def test_float64_runs_identical(tmp_path, tiny_corpus):
    logs = []
    for name in ("a", "b"):
        r = train_model(_config(tmp_path, model="inc-tssd", epochs=2, dtype="float64"), tiny_corpus, tmp_path / name)
        logs.append((r.run_dir / "log.csv").read_bytes())
    assert logs[0] == logs[1]
    assert (tmp_path / "a" / "checkpoint.bin").read_bytes() == (tmp_path / "b" / "checkpoint.bin").read_bytes()


def test_overfits_small_set(tmp_path):
    from synthattr.pipeline import generate_fixture_corpus, scaled_durations

    root = tmp_path / "c"
    m = generate_fixture_corpus(per_class=6, seed=11, out_dir=root, durations=scaled_durations(0.05))
    entries = [ManifestEntry(e.relative_path, e.label, "train" if i < 32 else "val") for i, e in enumerate(m.entries)]
    manifest = DatasetManifest(entries, root)
    cfg = _config(tmp_path, model="inc-tssd", epochs=200, batch_size=8, lr0=3e-3, gamma=0.99)
    result = train_model(cfg, manifest)
    assert result.rows[-1]["train_accuracy"] == 1.0


def test_empty_val_split(tmp_path, tiny_corpus):
    entries = [e for e in tiny_corpus.entries if e.split != "val"]
    with pytest.raises(EmptySplit):
        train_model(_config(tmp_path, model="inc-tssd"), tiny_corpus.with_entries(entries))


def test_classical_standardizer_uses_train_only(tmp_path, tiny_corpus):
    cfg = _config(tmp_path, model="svm", feature="MFCC", svm_epochs=5)
    result = train_model(cfg, tiny_corpus)
    pred = load_predictor(result.run_dir)
    x_train, _ = feature_matrix(tiny_corpus, select_entries(tiny_corpus, "train", False), "MFCC", 16000, cfg.clip_seconds)
    expected = Standardizer.fit(x_train)
    assert np.array_equal(pred.standardizer.mean, expected.mean)
    assert np.array_equal(pred.standardizer.scale, expected.scale)
    all_x, _ = feature_matrix(tiny_corpus, tiny_corpus.entries, "MFCC", 16000, cfg.clip_seconds)
    assert not np.allclose(Standardizer.fit(all_x).mean, expected.mean)
    assert (result.run_dir / "svm_weights.csv").is_file()


def test_gmm_run(tmp_path, tiny_corpus):
    result = train_model(_config(tmp_path, model="gmm", feature="MFCC", gmm_components=1), tiny_corpus)
    res = evaluate(load_predictor(result.run_dir), tiny_corpus, "test")
    assert res.confusion.total == len(tiny_corpus.subset("test"))


# ------------------------------------------------------------------ evaluation


def test_confusion_perfect():
    y = np.repeat(np.arange(6), 5)
    cm = ConfusionMatrix.from_predictions(y, y, 6)
    assert cm.accuracy == 1.0 and np.array_equal(cm.counts, np.diag(np.full(6, 5)))


def test_confusion_random_predictor():
    rng = np.random.default_rng(0)
    y = np.repeat(np.arange(6), 200)
    cm = ConfusionMatrix.from_predictions(y, rng.integers(0, 6, len(y)), 6)
    sigma = math.sqrt(len(y) * (1 / 6) * (5 / 6)) / len(y)
    assert abs(cm.accuracy - 1 / 6) < 3 * sigma


def test_confusion_arithmetic():
    y = np.repeat(np.arange(6), 200)
    pred = y.copy()
    pred[:48] = (pred[:48] + 1) % 6
    cm = ConfusionMatrix.from_predictions(y, pred, 6)
    assert cm.accuracy == 0.96 and cm.total == 1200
    assert f"{cm.accuracy:.2f}" == "0.96"


def test_confusion_outputs():
    cm = ConfusionMatrix.from_predictions([0, 1, 1], [0, 1, 0], 2)
    assert cm.to_csv().splitlines() == ["true\\pred,0,1", "0,1,0", "1,1,1"]
    assert cm.to_svg().startswith("<svg")


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory, tiny_corpus):
    runs = tmp_path_factory.mktemp("runs")
    return train_model(ExperimentConfig(model="inc-tssd", epochs=1, runs_dir=str(runs), **TINY_NET), tiny_corpus)


def test_evaluate_writes_outputs(trained_run, tiny_corpus, tmp_path):
    res = evaluate(load_predictor(trained_run.run_dir), tiny_corpus, "test", tmp_path)
    assert res.confusion.total == len(tiny_corpus.subset("test"))
    assert (tmp_path / "confusion.csv").is_file() and (tmp_path / "confusion.svg").is_file()
    with pytest.raises(EmptySplit):
        evaluate(load_predictor(trained_run.run_dir), tiny_corpus, "eval")


def _with_eval(manifest, n):
    picked = manifest.entries[:n]
    return manifest.with_entries([ManifestEntry(e.relative_path, None, "eval") for e in picked])


def test_predict_rows(trained_run, tiny_corpus, tmp_path):
    pred = load_predictor(trained_run.run_dir)
    m = _with_eval(tiny_corpus, 5)
    rows = predict_unlabeled(pred, m, tmp_path / "a.csv")
    assert [r[0] for r in rows] == [e.relative_path for e in m.entries]
    predict_unlabeled(pred, m, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert len((tmp_path / "a.csv").read_text().splitlines()) == 6


def test_predict_empty(trained_run, tiny_corpus, tmp_path):
    rows = predict_unlabeled(load_predictor(trained_run.run_dir), _with_eval(tiny_corpus, 0), tmp_path / "p.csv")
    assert rows == [] and (tmp_path / "p.csv").read_text() == "relative_path,predicted_label\n"


def test_predict_marks_missing_file(trained_run, tiny_corpus, tmp_path):
    m = _with_eval(tiny_corpus, 3)
    entries = list(m.entries) + [ManifestEntry("nowhere/ghost.wav", None, "eval")]
    rows = predict_unlabeled(load_predictor(trained_run.run_dir), m.with_entries(entries), tmp_path / "p.csv")
    assert len(rows) == 4 and rows[-1] == ("nowhere/ghost.wav", "failed")
    assert all(r[1] != "failed" for r in rows[:3])


def test_embeddings(trained_run, tiny_corpus):
    vecs, labels = collect_embeddings(load_predictor(trained_run.run_dir), tiny_corpus, "test")
    assert vecs.shape == (len(labels), 32) and np.all(vecs >= 0)
    mf, _ = collect_embeddings(None, tiny_corpus, "test", clip_seconds=0.25)
    assert mf.shape == (len(labels), 40)


# ------------------------------------------------------------------ CLI


def test_cli_end_to_end(tmp_path, capsys):
    data = tmp_path / "data"
    assert main(["fixture", "--out", str(data), "--per-class", "13", "--duration-scale", "0.05", "--seed", "2"]) == 0
    manifest = str(data / "manifest.csv")
    assert main(["split", "--manifest", manifest]) == 0
    assert read_manifest(manifest).counts() == {"train": 60, "val": 6, "test": 12}
    assert main(["augment", "--manifest", manifest, "--out", str(data / "aug.csv")]) == 0
    assert len(read_manifest(data / "aug.csv")) == 4 * 78
    assert main(["features", "--manifest", manifest, "--out", str(tmp_path / "f"), "--split", "val", "--clip-seconds", "0.25"]) == 0
    assert len(list((tmp_path / "f").iterdir())) == 6
    run_args = ["train", "--profile", "desk", "--manifest", manifest, "--runs_dir", str(tmp_path / "runs"), "--run_id", "r"]
    tiny = ["--clip_seconds", "0.25", "--epochs", "1", "--branch_channels", "2"]
    assert main(run_args + tiny) == 0
    run = str(tmp_path / "runs" / "r")
    assert main(["evaluate", "--run", run]) == 0
    assert main(["embed", "--run", run, "--perplexity", "3", "--iterations", "50"]) == 0
    assert main(["predict", "--run", run, "--split", "test"]) == 0
    out = capsys.readouterr().out
    assert "accuracy" in out and "silhouette" in out
    assert (tmp_path / "runs" / "r" / "tsne.svg").is_file()


def test_cli_exit_codes(tmp_path, tiny_corpus):
    manifest = str(tmp_path / "m.csv")
    write_manifest(tiny_corpus, manifest)
    assert main(["train", "--manifest", manifest, "--model", "svm", "--feature", "RW"]) == 2
    assert main(["split", "--manifest", str(tmp_path / "missing.csv")]) == 3
    assert main(["evaluate", "--run", str(tmp_path / "no_run")]) == 3
    assert main(["split", "--manifest", manifest, "--fractions", "0.5,0.5"]) == 2
