import numpy as np
import pytest

from motifhead.cli import main
from motifhead.manifest import load_manifest
from motifhead.store import open_embedding_store


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "data"
    code = run_cli("gen-synth", "--classes", 5, "--dim", 8, "--per-class", 10,
                   "--noise", "0.05", "--seed", 1, "--test-fraction", "0.25",
                   "--out", out)
    assert code == 0
    return out


def train_config_file(tmp_path, synth_dir, epochs=4):
    cfg = tmp_path / "run.toml"
    cfg.write_text(f"""
[data]
manifest = "{synth_dir / 'manifest.txt'}"
store = "{synth_dir / 'embeddings.mhed'}"

[train]
seed = 1
epochs = {epochs}
batch_size = 16

[head]
input_dim = 8
hidden_dims = [16]
output_dim = 5
""")
    return cfg


def test_gen_synth_writes_expected_files(synth_dir):
    assert (synth_dir / "manifest.txt").exists()
    assert (synth_dir / "embeddings.mhed").exists()
    manifest = load_manifest(synth_dir / "manifest.txt")
    assert len(manifest.records) == 50
    assert manifest.ids_for("test")
    with open_embedding_store(synth_dir / "embeddings.mhed") as store:
        assert (store.count, store.dim) == (50, 8)


def test_gen_synth_is_byte_deterministic(tmp_path):
    for name in ("one", "two"):
        assert run_cli("gen-synth", "--classes", 3, "--dim", 8, "--per-class", 5,
                       "--seed", 9, "--out", tmp_path / name) == 0
    for f in ("manifest.txt", "embeddings.mhed"):
        assert (tmp_path / "one" / f).read_bytes() == \
            (tmp_path / "two" / f).read_bytes()


def test_extract_check_ok_and_coverage(synth_dir, capsys):
    code = run_cli("extract-check", "--store", synth_dir / "embeddings.mhed",
                   "--manifest", synth_dir / "manifest.txt")
    out = capsys.readouterr().out
    assert code == 0
    assert "OK, count=50, dim=8" in out
    assert "coverage OK" in out


def test_extract_check_rejects_corrupt_store(tmp_path, capsys):
    bad = tmp_path / "bad.mhed"
    bad.write_bytes(b"WRONGMAGIC0000000000")
    assert run_cli("extract-check", "--store", bad) == 3
    assert "magic" in capsys.readouterr().out


def test_train_eval_predict_cycle(tmp_path, synth_dir, capsys):
    cfg = train_config_file(tmp_path, synth_dir)
    run_dir = tmp_path / "run"
    assert run_cli("train", "--config", cfg, "--out", run_dir) == 0
    for name in ("checkpoint.mhck", "config.toml", "loss_log.tsv",
                 "metrics.tsv", "split_manifest.txt"):
        assert (run_dir / name).exists(), name
    capsys.readouterr()

    code = run_cli("eval", "--checkpoint", run_dir / "checkpoint.mhck",
                   "--manifest", run_dir / "split_manifest.txt",
                   "--store", synth_dir / "embeddings.mhed")
    out = capsys.readouterr().out
    assert code == 0
    assert "slice: all" in out
    assert "slice: red_flag" in out
    assert "f1_with_sm" in out

    table = tmp_path / "probs.tsv"
    ids = "img_00000,img_00001"
    assert run_cli("predict", "--checkpoint", run_dir / "checkpoint.mhck",
                   "--store", synth_dir / "embeddings.mhed", "--ids", ids,
                   "--out", table) == 0
    lines = table.read_text().splitlines()
    assert lines[0].startswith("image_id\tp0")
    assert len(lines) == 3
    probs = [float(v) for v in lines[1].split("\t")[1:]]
    assert all(0.0 < v < 1.0 for v in probs)


def test_train_twice_same_seed_byte_identical(tmp_path, synth_dir):
    cfg = train_config_file(tmp_path, synth_dir)
    for name in ("r1", "r2"):
        assert run_cli("train", "--config", cfg, "--out", tmp_path / name) == 0
    for f in ("checkpoint.mhck", "loss_log.tsv", "metrics.tsv", "config.toml",
              "split_manifest.txt"):
        assert (tmp_path / "r1" / f).read_bytes() == \
            (tmp_path / "r2" / f).read_bytes(), f


def test_flag_overrides_beat_config(tmp_path, synth_dir):
    cfg = train_config_file(tmp_path, synth_dir, epochs=4)
    run_dir = tmp_path / "run"
    assert run_cli("train", "--config", cfg, "--out", run_dir,
                   "--epochs", 2, "--smt", "0.25") == 0
    snapshot = (run_dir / "config.toml").read_text()
    assert "epochs = 2" in snapshot
    assert "smt = 0.25" in snapshot


def test_exit_codes(tmp_path, synth_dir, capsys):
    cfg = train_config_file(tmp_path, synth_dir)
    # Config error: smt out of range.
    assert run_cli("train", "--config", cfg, "--out", tmp_path / "x",
                   "--smt", "1.5") == 2
    assert "smt" in capsys.readouterr().err
    # Config error: no seed anywhere.
    nocfg = tmp_path / "noseed.toml"
    nocfg.write_text("[train]\nepochs = 1\n")
    assert run_cli("train", "--config", nocfg, "--manifest",
                   synth_dir / "manifest.txt", "--store",
                   synth_dir / "embeddings.mhed",
                   "--out", tmp_path / "y") == 2
    capsys.readouterr()
    # Config error: epochs 0.
    assert run_cli("train", "--config", cfg, "--out", tmp_path / "z",
                   "--epochs", 0) == 2
    capsys.readouterr()
    # Data error: missing store file, path named in the message.
    missing = tmp_path / "nowhere.mhed"
    assert run_cli("train", "--config", cfg, "--store", missing,
                   "--out", tmp_path / "w") == 3
    assert "nowhere.mhed" in capsys.readouterr().err
    # Data error: unknown id at predict time.
    run_dir = tmp_path / "run"
    assert run_cli("train", "--config", cfg, "--out", run_dir) == 0
    capsys.readouterr()
    assert run_cli("predict", "--checkpoint", run_dir / "checkpoint.mhck",
                   "--store", synth_dir / "embeddings.mhed",
                   "--ids", "ghost") == 3
    capsys.readouterr()


def test_unknown_config_key_rejected(tmp_path, synth_dir):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[train]\nseed = 1\nepochz = 5\n")
    assert run_cli("train", "--config", cfg, "--manifest",
                   synth_dir / "manifest.txt", "--store",
                   synth_dir / "embeddings.mhed", "--out", tmp_path / "x") == 2


def test_eval_threshold_changes_prediction_sets(tmp_path, synth_dir, capsys):
    cfg = train_config_file(tmp_path, synth_dir, epochs=80)
    run_dir = tmp_path / "run"
    assert run_cli("train", "--config", cfg, "--out", run_dir, "--lr", "0.01") == 0
    capsys.readouterr()
    outputs = {}
    for thr in ("0.5", "0.999999"):
        assert run_cli("eval", "--checkpoint", run_dir / "checkpoint.mhck",
                       "--manifest", run_dir / "split_manifest.txt",
                       "--store", synth_dir / "embeddings.mhed",
                       "--threshold", thr) == 0
        outputs[thr] = capsys.readouterr().out
    assert outputs["0.5"] != outputs["0.999999"]
    assert "empty_predictions: 0" in outputs["0.5"]


def test_sweep_cli(tmp_path, synth_dir, capsys):
    spec = tmp_path / "sweep.toml"
    spec.write_text(f"""
[data]
manifest = "{synth_dir / 'manifest.txt'}"
store = "{synth_dir / 'embeddings.mhed'}"

[axes]
"loss.smt" = [0.0, 1.0]

[train]
seed = 2
epochs = 2
batch_size = 16

[head]
input_dim = 8
hidden_dims = [8]
output_dim = 5
""")
    out = tmp_path / "sweep_out"
    assert run_cli("sweep", "--spec", spec, "--out", out) == 0
    printed = capsys.readouterr().out
    assert "2 grid points" in printed
    table = (out / "sweep.tsv").read_text().splitlines()
    assert len(table) == 3
    assert (out / "points" / "smt=0" / "checkpoint.mhck").exists()


def test_cluster_cli(tmp_path, synth_dir, capsys):
    out = tmp_path / "clusters"
    assert run_cli("cluster", "--manifest", synth_dir / "manifest.txt",
                   "--store", synth_dir / "embeddings.mhed",
                   "--k", 5, "--seed", 3, "--out", out) == 0
    printed = capsys.readouterr().out
    assert "purity=" in printed
    assignment = (out / "assignment.tsv").read_text().splitlines()
    assert assignment[0] == "image_id\tcluster"
    assert len(assignment) == 51
    contingency = (out / "contingency.tsv").read_text().splitlines()
    assert contingency[0].startswith("cluster\t")
    # Well-separated synthetic anchors: clustering recovers the motifs.
    assert "purity=1.0000" in printed


def test_cluster_cli_deterministic(tmp_path, synth_dir):
    for name in ("c1", "c2"):
        assert run_cli("cluster", "--manifest", synth_dir / "manifest.txt",
                       "--store", synth_dir / "embeddings.mhed",
                       "--k", 4, "--seed", 3, "--out", tmp_path / name) == 0
    for f in ("assignment.tsv", "contingency.tsv"):
        assert (tmp_path / "c1" / f).read_bytes() == \
            (tmp_path / "c2" / f).read_bytes()


def test_help_documents_defaults(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("train", "--help")
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for needle in ("default 200", "default 256", "default 0.001", "default 0.5",
                   "default 2.0"):
        assert needle in text
    with pytest.raises(SystemExit):
        run_cli("gen-synth", "--help")
    text = capsys.readouterr().out
    assert "default 0.015" in text and "default 0.056" in text \
        and "default 0.108" in text