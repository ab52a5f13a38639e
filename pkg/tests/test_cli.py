import os
import struct

import numpy as np
import pytest

from gamc import io as gio
from gamc.cli import main
from gamc.siggen import MOD_CLASSES


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A tiny but complete pipeline run shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    frames = root / "all.gamc"
    rc = main([
        "gen", "--classes", "BPSK,QPSK,QAM16,FM,OOK", "--snrs", "4,14",
        "--frames-per-cell", "60", "--seed", "3", "--out", str(frames),
    ])
    assert rc == 0
    fs = gio.read_frames(frames)
    train, test = gio.split_train_test(fs, 0.8, seed=0)
    gio.write_frames(root / "train.gamc", train)
    gio.write_frames(root / "test.gamc", test)
    rc = main([
        "train", "--frames", str(root / "train.gamc"),
        "--model-out", str(root / "model.gamc"),
        "--top-k", "150", "--rounds", "20",
        "--dict-frames", "200", "--dict-iterations", "5", "--seed", "0",
    ])
    assert rc == 0
    return root


def test_gen_counts(workdir):
    fs = gio.read_frames(workdir / "all.gamc")
    assert len(fs) == 5 * 2 * 60
    assert set(np.unique(fs.snr_db)) == {4.0, 14.0}


def test_eval_writes_reports(workdir):
    out = workdir / "report"
    rc = main(["eval", "--model", str(workdir / "model.gamc"),
               "--frames", str(workdir / "test.gamc"), "--out-dir", str(out)])
    assert rc == 0
    text = (out / "report.txt").read_text()
    assert "Coarse" in text
    assert "config_hash=" in text and "model_version=1" in text
    csv = (out / "report.csv").read_text()
    assert csv.splitlines()[1].startswith("snr_db")
    assert (out / "confusion_snr+4.csv").exists()
    assert (out / "confusion_snr+14.csv").exists()
    conf = np.loadtxt(out / "confusion_snr+14.csv", delimiter=",")
    assert conf.shape == (24, 24)


def test_eval_reports_reproducible(workdir):
    out1 = workdir / "rep1"
    out2 = workdir / "rep2"
    for out in (out1, out2):
        rc = main(["eval", "--model", str(workdir / "model.gamc"),
                   "--frames", str(workdir / "test.gamc"), "--out-dir", str(out)])
        assert rc == 0
    assert (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()
    assert (out1 / "report.txt").read_bytes() == (out2 / "report.txt").read_bytes()


def test_train_model_file_reproducible(workdir, tmp_path):
    rc = main([
        "train", "--frames", str(workdir / "train.gamc"),
        "--model-out", str(tmp_path / "model2.gamc"),
        "--top-k", "150", "--rounds", "20",
        "--dict-frames", "200", "--dict-iterations", "5", "--seed", "0",
    ])
    assert rc == 0
    assert (tmp_path / "model2.gamc").read_bytes() == (workdir / "model.gamc").read_bytes()


def test_classify_output(workdir, tmp_path, capsys):
    out = tmp_path / "pred.csv"
    rc = main(["classify", "--model", str(workdir / "model.gamc"),
               "--frames", str(workdir / "test.gamc"), "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "index,label_id,label"
    fs = gio.read_frames(workdir / "test.gamc")
    assert len(lines) == 1 + len(fs)
    names = {m.value for m in MOD_CLASSES}
    assert all(line.split(",")[2] in names for line in lines[1:])


def test_classify_accuracy_high_snr(workdir, tmp_path):
    out = tmp_path / "pred.csv"
    main(["classify", "--model", str(workdir / "model.gamc"),
          "--frames", str(workdir / "test.gamc"), "--out", str(out)])
    fs = gio.read_frames(workdir / "test.gamc")
    pred = np.array([int(l.split(",")[1]) for l in out.read_text().splitlines()[1:]])
    high = fs.snr_db == 14.0
    assert np.mean(pred[high] == fs.labels[high]) >= 0.8


def test_flops_report(workdir, capsys):
    rc = main(["flops", "--model", str(workdir / "model.gamc")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "model parameters:" in out
    assert "classifier-only FLOPs:" in out
    assert "pipeline-total FLOPs:" in out


def test_dump_features_and_layout(workdir, tmp_path, capsys):
    rc = main(["dump-features", "--layout-only"])
    assert rc == 0
    table = capsys.readouterr().out
    assert "sparse_global" in table and "1730" in table
    out = tmp_path / "features.npz"
    rc = main(["dump-features", "--frames", str(workdir / "test.gamc"),
               "--out", str(out), "--dict-frames", "120", "--dict-iterations", "3"])
    assert rc == 0
    data = np.load(out)
    fs = gio.read_frames(workdir / "test.gamc")
    assert data["features"].shape == (len(fs), 1730)


def test_select_subcommand(workdir, tmp_path):
    out = tmp_path / "scores.csv"
    rc = main(["select", "--frames", str(workdir / "test.gamc"), "--out", str(out),
               "--top-k", "50", "--dict-frames", "120", "--dict-iterations", "3"])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "rank,feature_index,block,loss_bits"
    assert len(lines) == 51


def test_missing_input_exit_2(tmp_path):
    rc = main(["train", "--frames", str(tmp_path / "nope.gamc"),
               "--model-out", str(tmp_path / "m.gamc")])
    assert rc == 2
    rc = main(["eval", "--model", str(tmp_path / "nope.gamc"),
               "--frames", str(tmp_path / "nope2.gamc"), "--out-dir", str(tmp_path)])
    assert rc == 2


def test_layout_hash_mismatch_exit_2(workdir, tmp_path):
    bundle = gio.load_model(workdir / "model.gamc")
    bundle.layout_hash = "0000000000000000"
    tampered = tmp_path / "tampered.gamc"
    gio.save_model(tampered, bundle)
    rc = main(["classify", "--model", str(tampered),
               "--frames", str(workdir / "test.gamc"), "--out", str(tmp_path / "p.csv")])
    assert rc == 2


def test_config_file_defaults_and_flag_override(workdir, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("classes = BPSK,QPSK\nsnrs = 0\nframes-per-cell = 4\nseed = 9\n")
    out = tmp_path / "cfg.gamc"
    rc = main(["gen", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    fs = gio.read_frames(out)
    assert len(fs) == 8
    # explicit flag beats the config file
    out2 = tmp_path / "cfg2.gamc"
    rc = main(["gen", "--config", str(cfg), "--frames-per-cell", "2", "--out", str(out2)])
    assert rc == 0
    assert len(gio.read_frames(out2)) == 4


def test_unknown_config_key_exit_2(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus_key = 1\n")
    rc = main(["gen", "--config", str(cfg), "--out", str(tmp_path / "x.gamc")])
    assert rc == 2


def test_internal_invariant_breach_exit_3(workdir, tmp_path, monkeypatch):
    import gamc.cli as cli

    def boom(*args, **kwargs):
        raise AssertionError("synthetic invariant breach")

    monkeypatch.setattr(cli, "evaluate", boom)
    rc = main(["eval", "--model", str(workdir / "model.gamc"),
               "--frames", str(workdir / "test.gamc"),
               "--out-dir", str(tmp_path / "rep")])
    assert rc == 3


def test_threads_env_does_not_change_output(workdir, tmp_path, monkeypatch):
    from gamc.cli import extract_matrix, features_for_model
    bundle = gio.load_model(workdir / "model.gamc")
    fs = gio.read_frames(workdir / "test.gamc").subset(np.arange(20))
    serial = features_for_model(bundle, fs, threads=1)
    threaded = features_for_model(bundle, fs, threads=3)
    np.testing.assert_array_equal(serial, threaded)
