import json

import numpy as np
import pytest
from click.testing import CliRunner

from coopad.cli import main
from coopad.data import RawSeries
from coopad.synth import gen_periodic, write_ucr_file


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """Small labeled series on disk (UCR naming) plus a manifest."""
    root = tmp_path_factory.mktemp("data")
    values, labels = gen_periodic(1600, 20, 0.05,
                                  [("uniform_replacement", 1200, 1239)],
                                  seed=0)
    series = RawSeries(values=values, name="demo", split=800, labels=labels)
    path = write_ucr_file(str(root), series, stem="demo")
    manifest = root / "manifest.txt"
    manifest.write_text("# tiny corpus\n" + path + "\n")
    return {"path": path, "manifest": str(manifest), "root": root}


def run_cli(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


def train_args(dataset, out, extra=()):
    return ["train", "--data", dataset["path"], "--out", out,
            "--epochs", "2", "--batch", "4", "--hidden", "4", "--layers", "1",
            "--seed", "0", *extra]


class TestTrain:
    def test_writes_run_dir(self, dataset, tmp_path):
        out = tmp_path / "run"
        r = run_cli(train_args(dataset, str(out)))
        assert r.exit_code == 0, r.output
        assert (out / "model.ckpt").exists()
        assert (out / "train.csv").exists()
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["model"]["H"] == 4
        assert cfg["data"]["split"] == 800
        assert cfg["data"]["period"] == 20
        assert "period=20" in r.output
        lines = (out / "train.csv").read_text().splitlines()
        assert lines[0] == "epoch,bce,mse,total,seconds"
        assert len(lines) == 3

    def test_exclude_kind_echoed(self, dataset, tmp_path):
        r = run_cli(train_args(dataset, str(tmp_path / "run"),
                               ["--exclude-kind", "mirror_flip"]))
        assert r.exit_code == 0
        assert "active_kinds=3" in r.output
        assert "mirror_flip" not in r.output.split("active_kinds")[1]

    def test_missing_data_usage_error(self, tmp_path):
        r = CliRunner().invoke(main, ["train", "--data", "/nope.txt",
                                      "--out", str(tmp_path / "x")])
        assert r.exit_code == 2

    def test_bad_filename_data_error(self, tmp_path):
        bad = tmp_path / "plain.txt"
        bad.write_text("1.0\n2.0\n")
        r = CliRunner().invoke(main, ["train", "--data", str(bad),
                                      "--out", str(tmp_path / "x")])
        assert r.exit_code == 3


@pytest.fixture(scope="module")
def run_dir(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    r = run_cli(train_args(dataset, str(out)))
    assert r.exit_code == 0
    return str(out)


class TestDetectEval:
    def test_detect_and_eval(self, dataset, run_dir, tmp_path):
        scores = tmp_path / "demo.scores.csv"
        r = run_cli(["detect", "--run", run_dir, "--data", dataset["path"],
                     "--out", str(scores)])
        assert r.exit_code == 0, r.output
        lines = scores.read_text().splitlines()
        assert lines[0] == "index,score,smoothed"
        assert len(lines) == 801  # header + test region

        report = tmp_path / "report.json"
        r = run_cli(["eval", "--scores", str(scores),
                     "--data", dataset["path"], "--out", str(report)])
        assert r.exit_code == 0, r.output
        payload = json.loads(report.read_text())
        for key in ("f1", "auc_pr", "r_auc_pr", "vus_pr", "top1", "top3",
                    "top5", "dataset"):
            assert key in payload
        assert 0.0 <= payload["auc_pr"] <= 1.0

    def test_eval_aggregate(self, dataset, run_dir, tmp_path):
        stem = dataset["path"].rsplit("/", 1)[-1].rsplit(".", 1)[0]
        scores = tmp_path / (stem + ".scores.csv")
        run_cli(["detect", "--run", run_dir, "--data", dataset["path"],
                 "--out", str(scores)])
        r = run_cli(["eval", "--aggregate", dataset["manifest"],
                     "--scores-dir", str(tmp_path)])
        assert r.exit_code == 0, r.output
        payload = json.loads(r.output[r.output.index("{"):])
        assert payload["mean"]["datasets"] == 1
        assert len(payload["per_dataset"]) == 1
        assert set(payload["mean"]) >= {"datasets", "f1", "auc_pr",
                                        "r_auc_pr", "vus_pr"}

    def test_eval_requires_inputs(self):
        r = CliRunner().invoke(main, ["eval"])
        assert r.exit_code == 2

    def test_detect_missing_run(self, dataset, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        r = CliRunner().invoke(
            main, ["detect", "--run", str(empty), "--data", dataset["path"],
                   "--out", str(tmp_path / "s.csv")])
        assert r.exit_code == 3

    def test_detect_determinism(self, dataset, run_dir, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            run_cli(["detect", "--run", run_dir, "--data", dataset["path"],
                     "--out", str(out)])
        assert a.read_bytes() == b.read_bytes()


class TestInject:
    def test_replaces_anomaly(self, dataset, tmp_path):
        out = tmp_path / "inj"
        r = run_cli(["inject", "--data", dataset["path"], "--out", str(out),
                     "--test-kind", "jittering", "--seed", "1"])
        assert r.exit_code == 0, r.output
        files = sorted(p.name for p in out.iterdir())
        assert any(f.endswith(".labels.txt") for f in files)
        written = [f for f in files if "jittering" in f and f.endswith(".txt")
                   and "labels" not in f]
        assert len(written) == 1
        orig = np.loadtxt(dataset["path"])
        new = np.loadtxt(str(out / written[0]))
        labels = np.loadtxt(str(out / [f for f in files
                                       if f.endswith(".labels.txt")][0]))
        inside = labels == 1
        assert not np.allclose(orig[inside], new[inside])
        assert np.allclose(orig[~inside], new[~inside], rtol=1e-9)

    def test_no_labels_fails(self, tmp_path):
        p = tmp_path / "nolabel.csv"
        p.write_text("value\n" + "\n".join("1.0" for _ in range(20)))
        r = CliRunner().invoke(main, ["inject", "--data", str(p),
                                      "--out", str(tmp_path / "o"),
                                      "--test-kind", "jittering"])
        assert r.exit_code == 3


class TestBench:
    def test_small_bench(self):
        r = run_cli(["bench", "--points", "2000", "--period", "20"])
        assert r.exit_code == 0, r.output
        assert "params=" in r.output
        assert "points/s" in r.output
