"""CLI tests: each subcommand end to end against the embedded service."""

import json

import pytest

from mixadapt.cli import main
from mixadapt.data import load_labeled_array


@pytest.fixture()
def run_root(tmp_path, monkeypatch):
    monkeypatch.setenv("MIXADAPT_RUN_ROOT", str(tmp_path / "runs"))
    return tmp_path


class TestGenData:
    def test_writes_datasets_and_manifest(self, run_root):
        out = run_root / "d"
        code = main(["gen-data", "--preset", "rotated-blobs-small", "--seed", "7",
                     "--out", str(out)])
        assert code == 0
        src = load_labeled_array(out / "source.csv")
        tgt = load_labeled_array(out / "target.csv", domain="target")
        assert len(src) == 180 and len(tgt) == 180
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 7
        assert manifest["files"] == {"source": "source.csv", "target": "target.csv"}

    def test_determinism(self, run_root):
        a = run_root / "a"
        b = run_root / "b"
        main(["gen-data", "--preset", "rotated-blobs-small", "--seed", "3", "--out", str(a)])
        main(["gen-data", "--preset", "rotated-blobs-small", "--seed", "3", "--out", str(b)])
        assert (a / "source.csv").read_bytes() == (b / "source.csv").read_bytes()
        assert (a / "target.csv").read_bytes() == (b / "target.csv").read_bytes()

    def test_default_run_root_env(self, run_root):
        code = main(["gen-data", "--preset", "rotated-blobs-small", "--seed", "1"])
        assert code == 0
        assert (run_root / "runs" / "gen-data" / "source.csv").exists()


class TestErrorPaths:
    def test_adapt_without_checkpoint_names_missing_input(self, run_root, capsys):
        code = main(["adapt", "--checkpoint", "missing.ckpt", "--source", "s.csv",
                     "--target", "t.csv"])
        assert code == 1
        err = capsys.readouterr().err
        assert "missing.ckpt" in err

    def test_unknown_flag_exits_nonzero(self):
        with pytest.raises(SystemExit) as exc:
            main(["gen-data", "--warp", "9"])
        assert exc.value.code != 0

    def test_unknown_config_key_in_set(self, run_root, capsys):
        code = main(["gen-data", "--set", "warp=9"])
        assert code == 1
        assert "warp" in capsys.readouterr().err

    def test_missing_config_file(self, run_root, capsys):
        code = main(["train-source", "--source", "x.csv", "--config", "nope.cfg"])
        assert code == 1
        assert "nope.cfg" in capsys.readouterr().err

    def test_bad_shots_list(self, run_root, capsys):
        code = main(["shots-curve", "--source", "s.csv", "--target", "t.csv",
                     "--shots", "0,banana"])
        assert code == 1
        assert "banana" in capsys.readouterr().err

    def test_export_embeddings_missing_checkpoint(self, run_root, capsys):
        code = main(["export-embeddings", "--checkpoint", "ghost.ckpt",
                     "--data", "t.csv"])
        assert code == 1
        assert "ghost.ckpt" in capsys.readouterr().err

    def test_train_source_missing_dataset(self, run_root, capsys):
        code = main(["train-source", "--source", "ghost.csv"])
        assert code == 1
        assert "ghost.csv" in capsys.readouterr().err


def _small_overrides(extra=()):
    base = ["--set", "n_per_class=60", "--set", "source_epochs=8",
            "--set", "batch_size=32", "--set", "adaptation_epochs=3",
            "--set", "translation=2.2,-1.8"]
    for item in extra:
        base += ["--set", item]
    return base


class TestFullPipeline:
    def test_train_adapt_curve_and_export(self, tmp_path):
        data_dir = tmp_path / "data"
        assert main(["gen-data", "--preset", "rotated-blobs-small", "--seed", "7",
                     "--out", str(data_dir)]) == 0

        train_dir = tmp_path / "train"
        assert main(["train-source", "--source", str(data_dir / "source.csv"),
                     "--out", str(train_dir)] + _small_overrides(["seed=7"])) == 0
        report = json.loads((train_dir / "report.json").read_text())
        assert len(report["source_epochs"]) == 8
        ckpt = train_dir / "source.ckpt"
        assert ckpt.exists()

        adapt_dir = tmp_path / "adapt"
        assert main(["adapt", "--checkpoint", str(ckpt),
                     "--source", str(data_dir / "source.csv"),
                     "--target", str(data_dir / "target.csv"),
                     "--shots", "1", "--out", str(adapt_dir)]
                    + _small_overrides(["seed=7"])) == 0
        adapt_report = json.loads((adapt_dir / "report.json").read_text())
        assert len(adapt_report["adaptation_epochs"]) == 3
        assert (adapt_dir / "adapted.ckpt").exists()

        emb_path = tmp_path / "emb.csv"
        assert main(["export-embeddings", "--checkpoint", str(adapt_dir / "adapted.ckpt"),
                     "--data", str(data_dir / "target.csv"), "--out", str(emb_path)]) == 0
        header = emb_path.read_text().splitlines()[0]
        assert header.split(",")[-2:] == ["label", "domain"]

        curve_dir = tmp_path / "curve"
        assert main(["shots-curve", "--source", str(data_dir / "source.csv"),
                     "--target", str(data_dir / "target.csv"),
                     "--shots", "0,1", "--seeds", "1", "--out", str(curve_dir)]
                    + _small_overrides(["seed=7"])) == 0
        lines = (curve_dir / "curve.csv").read_text().splitlines()
        assert len(lines) == 3

    def test_shots_curve_byte_determinism(self, tmp_path):
        data_dir = tmp_path / "data"
        main(["gen-data", "--preset", "rotated-blobs-small", "--seed", "2",
              "--out", str(data_dir)])
        outs = []
        for name in ("c1", "c2"):
            out = tmp_path / name
            assert main(["shots-curve", "--source", str(data_dir / "source.csv"),
                         "--target", str(data_dir / "target.csv"),
                         "--shots", "0,1", "--seeds", "2", "--out", str(out)]
                        + _small_overrides(["seed=2"])) == 0
            outs.append((out / "curve.csv").read_bytes())
        assert outs[0] == outs[1]
