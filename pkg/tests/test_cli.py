"""Command-line behavior: exit codes, artifacts, and worked fusion examples."""

import json

import numpy as np
import pytest

from apln.cli import EXIT_CONFIG, EXIT_DATA, EXIT_DOMAIN, EXIT_OK, main
from apln.data import load_dataset


def run_cli(*argv):
    return main(list(argv))


def tiny_train_config(tmp_path, out_dir, seed=0):
    cfg = {
        "seed": seed,
        "output_dir": str(out_dir),
        "test_fraction": 0.25,
        "dataset": {"synthetic": {"n": 60, "views": 3, "classes": 3, "dim": 4,
                                  "separation": 3.0, "seed": seed}},
        "corruption": {"eta": 0.3, "conflict_fraction": 0.2, "seed": seed},
        "train": {"epochs_f": 2, "epochs_v": 2, "epochs_j": 2, "batch_size": 32,
                  "d_f": 8, "d_z": 4, "hidden": 16},
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    return path


class TestExitCodes:
    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            run_cli("--help")
        assert exc.value.code == 0

    def test_missing_config_file(self):
        assert run_cli("train", "/nonexistent/config.toml") == EXIT_CONFIG

    def test_malformed_config(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run_cli("train", str(bad)) == EXIT_CONFIG

    def test_config_without_dataset(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"seed": 0}))
        assert run_cli("train", str(cfg)) == EXIT_CONFIG

    def test_corrupt_missing_dataset(self, tmp_path):
        assert run_cli("corrupt", str(tmp_path / "nope"), "--out",
                       str(tmp_path / "out")) == EXIT_DATA

    def test_infeasible_eta_is_domain_error(self, tmp_path):
        run_cli("synth", "--n", "20", "--views", "2", "--classes", "2",
                "--dim", "3", "--out", str(tmp_path / "ds"))
        assert run_cli("corrupt", str(tmp_path / "ds"), "--eta", "0.9",
                       "--out", str(tmp_path / "out")) == EXIT_DOMAIN

    def test_export_missing_run_dir(self, tmp_path):
        assert run_cli("export", str(tmp_path / "norun")) == EXIT_DATA


class TestSynthAndCorrupt:
    def test_synth_writes_loadable_dataset(self, tmp_path):
        out = tmp_path / "ds"
        assert run_cli("synth", "--n", "40", "--views", "3", "--classes", "4",
                       "--dim", "5", "--seed", "7", "--out", str(out)) == EXIT_OK
        ds = load_dataset(out)
        assert ds.n_samples == 40 and ds.n_views == 3 and ds.n_classes == 4

    def test_corrupt_counts(self, tmp_path):
        src, dst = tmp_path / "src", tmp_path / "dst"
        run_cli("synth", "--n", "50", "--views", "4", "--classes", "5",
                "--dim", "3", "--out", str(src))
        assert run_cli("corrupt", str(src), "--eta", "0.25",
                       "--conflict-fraction", "0.4", "--seed", "1",
                       "--out", str(dst)) == EXIT_OK
        ds = load_dataset(dst)
        assert (ds.mask == 0).sum() == round(0.25 * 4 * 50)
        assert np.all(ds.mask.sum(axis=1) >= 1)
        log = [json.loads(line) for line in
               (dst / "conflict_log.jsonl").read_text().splitlines()]
        assert len(log) == round(0.4 * 50)
        src_ds = load_dataset(src)
        for rec in log:
            assert src_ds.labels[rec["donor"]] != src_ds.labels[rec["row"]]


class TestFuse:
    def _write(self, tmp_path, records):
        path = tmp_path / "opinions.json"
        path.write_text(json.dumps(records))
        return path

    def _opinion(self, e):
        e = np.asarray(e, dtype=float)
        s = e.sum() + len(e)
        return {"belief": (e / s).tolist(), "uncertainty": len(e) / s,
                "base_rate": [1.0 / len(e)] * len(e)}

    def test_three_view_example(self, tmp_path, capsys):
        path = self._write(tmp_path, [self._opinion([4, 0]), self._opinion([0, 4]),
                                      self._opinion([0, 4])])
        assert run_cli("fuse", str(path)) == EXIT_OK
        out = json.loads(capsys.readouterr().out)
        fused = out["fused"]
        # mean evidence (4/3, 8/3): S = 6, b = (2/9, 4/9), u = 1/3
        assert fused["belief"] == pytest.approx([2.0 / 9.0, 4.0 / 9.0], abs=1e-12)
        assert fused["uncertainty"] == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert out["projected_probability"] == pytest.approx(
            [2.0 / 9.0 + 1.0 / 6.0, 4.0 / 9.0 + 1.0 / 6.0], abs=1e-12)
        mat = np.asarray(out["conflict_matrix"])
        assert mat.shape == (3, 3) and np.allclose(np.diag(mat), 1.0)

    def test_sequential_mode(self, tmp_path, capsys):
        path = self._write(tmp_path, [self._opinion([4, 0]), self._opinion([0, 4]),
                                      self._opinion([0, 4])])
        assert run_cli("fuse", str(path), "--mode", "sequential") == EXIT_OK
        fused = json.loads(capsys.readouterr().out)["fused"]
        # folded evidence (1, 3): S = 6, b = (1/6, 1/2), u = 1/3
        assert fused["belief"] == pytest.approx([1.0 / 6.0, 0.5], abs=1e-12)

    def test_single_opinion_echo(self, tmp_path, capsys):
        path = self._write(tmp_path, self._opinion([2, 2, 2]))
        assert run_cli("fuse", str(path)) == EXIT_OK
        out = json.loads(capsys.readouterr().out)
        assert "conflict_matrix" not in out

    def test_mixed_frames_domain_error(self, tmp_path):
        path = self._write(tmp_path, [self._opinion([1, 2]), self._opinion([1, 2, 3])])
        assert run_cli("fuse", str(path)) == EXIT_DOMAIN

    def test_malformed_opinions(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('[{"belief": [0.5]}]')
        assert run_cli("fuse", str(path)) == EXIT_CONFIG


class TestTrainAndExport:
    def test_train_writes_artifacts(self, tmp_path):
        out_dir = tmp_path / "run"
        cfg = tiny_train_config(tmp_path, out_dir)
        assert run_cli("train", str(cfg)) == EXIT_OK
        for phase in ("umae_f", "umae_v", "umae_j"):
            assert (out_dir / f"phase_{phase}.jsonl").exists()
            assert (out_dir / f"checkpoint_{phase}.npz").exists()
            assert (out_dir / f"eval_{phase}.npz").exists()
        metrics = json.loads((out_dir / "metrics.json").read_text())
        assert 0.0 <= metrics["accuracy"] <= 1.0

    def test_export_each_kind(self, tmp_path):
        out_dir = tmp_path / "run"
        cfg = tiny_train_config(tmp_path, out_dir)
        run_cli("train", str(cfg))
        for what, prefix in (("uncertainty", "uncertainty"), ("conflict", "conflict"),
                             ("evidence", "evidence")):
            assert run_cli("export", str(out_dir), "--what", what) == EXIT_OK
            for phase in ("umae_f", "umae_v", "umae_j"):
                csv = out_dir / f"{prefix}_{phase}.csv"
                assert csv.exists() and csv.stat().st_size > 0
        u = np.loadtxt(out_dir / "uncertainty_umae_j.csv", delimiter=",")
        assert u.shape == (15,)  # 25% of 60 samples
