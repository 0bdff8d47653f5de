import csv
import json

import numpy as np
import pytest

from incdiag.cli import (EXIT_CONFIG, EXIT_DATA, ExperimentConfig, config_to_toml,
                         load_experiment_config, main)
from incdiag.datasets import load_csv_dataset

FAST_SYNTH = """
preset = "custom"
seed = 5
base_classes = [0, 1]
novel_per_session = 2
sessions = 2
normal_train_count = 30
fault_train_count = 8
test_per_class = 10
memory_k = 8
synth_classes = 4
synth_dim = 6
synth_means_scale = 4.0
synth_noise_sigma = 0.8
hidden_dims = [16]
embed_dim = 8
epochs = 5
batch_size = 64
n_trees = 20
"""


def write_config(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestConfigLoading:
    def test_defaults_round_trip(self, tmp_path):
        path = write_config(tmp_path, config_to_toml(ExperimentConfig()))
        cfg = load_experiment_config(path)
        assert cfg == ExperimentConfig()

    def test_zero_temperature_names_the_field(self, tmp_path):
        path = write_config(tmp_path, 'temperature = 0.0\n')
        with pytest.raises(Exception, match="temperature"):
            load_experiment_config(path)

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, 'tempratur = 0.1\n')
        with pytest.raises(Exception, match="tempratur"):
            load_experiment_config(path)

    def test_type_mismatch_rejected(self, tmp_path):
        path = write_config(tmp_path, 'epochs = "many"\n')
        with pytest.raises(Exception, match="epochs"):
            load_experiment_config(path)

    def test_bad_enum_rejected(self, tmp_path):
        path = write_config(tmp_path, 'selection = "newest"\n')
        with pytest.raises(Exception, match="selection"):
            load_experiment_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(Exception, match="config"):
            load_experiment_config(tmp_path / "nope.toml")


class TestRunCommand:
    def test_happy_path_writes_reports(self, tmp_path, capsys):
        config = write_config(tmp_path, FAST_SYNTH)
        out = tmp_path / "out"
        code = main(["run", "--config", config, "--out", str(out)])
        assert code == 0
        assert (out / "report.json").is_file()
        assert (out / "report.csv").is_file()
        assert (out / "config.toml").is_file()
        doc = json.loads((out / "report.json").read_text())
        assert len(doc["sessions"]) == 2
        assert doc["seed"] == 5
        assert "average accuracy" in capsys.readouterr().out

    def test_report_csv_shape(self, tmp_path):
        config = write_config(tmp_path, FAST_SYNTH)
        out = tmp_path / "out"
        assert main(["run", "--config", config, "--out", str(out)]) == 0
        with open(out / "report.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["session", "accuracy", "average"]
        assert len(rows) == 3
        assert rows[1][0] == "1"

    def test_config_error_exit_code(self, tmp_path):
        config = write_config(tmp_path, FAST_SYNTH + 'temperature = 0.0\n')
        assert main(["run", "--config", config]) == EXIT_CONFIG

    def test_data_error_exit_code(self, tmp_path):
        bad_csv = tmp_path / "bad.csv"
        bad_csv.write_text("f1,f2,label\n1.0,NaN,0\n", encoding="utf-8")
        config = write_config(tmp_path, FAST_SYNTH + f'csv = "{bad_csv}"\n')
        assert main(["run", "--config", config, "--out", str(tmp_path / "o")]) == EXIT_DATA

    def test_byte_identical_reports_for_same_seed(self, tmp_path):
        config = write_config(tmp_path, FAST_SYNTH)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", config, "--out", str(out_a)]) == 0
        assert main(["run", "--config", config, "--out", str(out_b)]) == 0
        assert (out_a / "report.csv").read_bytes() == (out_b / "report.csv").read_bytes()

    def test_seed_override_changes_report(self, tmp_path):
        config = write_config(tmp_path, FAST_SYNTH)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", config, "--out", str(out_a)]) == 0
        assert main(["run", "--config", config, "--out", str(out_b),
                     "--seed", "99"]) == 0
        doc_b = json.loads((out_b / "report.json").read_text())
        assert doc_b["seed"] == 99

    def test_embedding_dump(self, tmp_path):
        config = write_config(tmp_path, FAST_SYNTH)
        out = tmp_path / "out"
        assert main(["run", "--config", config, "--out", str(out),
                     "--dump-embeddings"]) == 0
        with open(out / "embeddings.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:3] == ["session", "class", "split"]
        splits = {r[2] for r in rows[1:]}
        assert splits == {"exemplar", "test"}
        assert len(rows[0]) == 3 + 8  # embed_dim columns


FASTER_SYNTH = FAST_SYNTH.replace("epochs = 5", "epochs = 2").replace(
    "n_trees = 20", "n_trees = 5") + "fcc_epochs = 20\n"


class TestAblateCommand:
    def test_selection_axis_runs_four_variants(self, tmp_path):
        config = write_config(tmp_path, FASTER_SYNTH)
        out = tmp_path / "out"
        code = main(["ablate", "--config", config, "--axes", "selection",
                     "--out", str(out)])
        assert code == 0
        with open(out / "ablation.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["loss", "selection", "classifier", "acc_s1", "acc_s2",
                           "average"]
        assert len(rows) == 1 + 4
        assert sorted(r[1] for r in rows[1:]) == ["herding", "mes", "mixed", "random"]

    def test_two_axis_product(self, tmp_path):
        config = write_config(tmp_path, FASTER_SYNTH)
        out = tmp_path / "out"
        assert main(["ablate", "--config", config, "--axes", "loss,classifier",
                     "--out", str(out)]) == 0
        with open(out / "ablation.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 1 + 4  # 2 losses x 1 selection x 2 classifiers

    def test_unknown_axis_rejected(self, tmp_path):
        config = write_config(tmp_path, FAST_SYNTH)
        assert main(["ablate", "--config", config, "--axes", "widgets"]) == EXIT_CONFIG


class TestGenSynthCommand:
    def test_round_trips_through_loader(self, tmp_path):
        out = tmp_path / "synth.csv"
        code = main(["gen-synth", "--out", str(out), "--classes", "3", "--dim", "5",
                     "--count", "12", "--seed", "3"])
        assert code == 0
        ds = load_csv_dataset(out)
        assert ds.class_count == 3
        assert ds.dim == 5
        assert len(ds) == 36
        from incdiag.datasets import synth_fault_stream
        direct = synth_fault_stream(3, 5, 4.0, 3.0, 0.7, 12, seed=3)
        assert np.array_equal(ds.features, direct.features)

    def test_isotropic_kind_matches_generator(self, tmp_path):
        out = tmp_path / "iso.csv"
        assert main(["gen-synth", "--out", str(out), "--kind", "isotropic",
                     "--classes", "3", "--dim", "5", "--means-scale", "3.0",
                     "--noise-sigma", "1.0", "--count", "12", "--seed", "3"]) == 0
        ds = load_csv_dataset(out)
        from incdiag.datasets import synth_gaussian_stream
        direct = synth_gaussian_stream(3, 5, 3.0, 1.0, 12, seed=3)
        assert np.array_equal(ds.features, direct.features)

    def test_same_seed_same_bytes(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["gen-synth", "--classes", "3", "--dim", "4", "--count", "6",
                "--seed", "9"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_header_shape_for_24_channels(self, tmp_path):
        out = tmp_path / "mff.csv"
        assert main(["gen-synth", "--out", str(out), "--classes", "5", "--dim", "24",
                     "--count", "4"]) == 0
        header = out.read_text().splitlines()[0].split(",")
        assert len(header) == 25
        assert header[-1] == "label"

    def test_per_class_counts(self, tmp_path):
        out = tmp_path / "s.csv"
        assert main(["gen-synth", "--out", str(out), "--classes", "3", "--dim", "4",
                     "--counts", "10,2,2"]) == 0
        ds = load_csv_dataset(out)
        assert np.sum(ds.labels == 0) == 10
        assert np.sum(ds.labels == 1) == 2


class TestDefaultsCommand:
    def test_prints_loadable_defaults(self, tmp_path, capsys):
        assert main(["defaults"]) == 0
        text = capsys.readouterr().out
        path = write_config(tmp_path, text)
        assert load_experiment_config(path) == ExperimentConfig()

    def test_mentions_every_key(self, capsys):
        assert main(["defaults"]) == 0
        text = capsys.readouterr().out
        for key in ("preset", "seed", "temperature", "selection", "classifier",
                    "epochs", "memory_k"):
            assert f"{key} = " in text
