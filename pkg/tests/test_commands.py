"""
Tests for the command-line surface: argument parsing, outputs and exit codes.
"""

import numpy as np
import pytest

from api.commands import (EXIT_ACCEPTANCE, EXIT_FORMAT, EXIT_OK, EXIT_USAGE, CliConfig, cmd_analyze, cmd_eval,
                          cmd_gradcheck, cmd_ofam, cmd_train, run_command)
from run import build_parser
from errors import NumericalError
from models.ofam import ObjectFeatures
from services.container_service import TensorRecord, object_feature_records, read_container, write_container

SMALL_TRAIN = ["--synthetic", "default", "--seed", "7", "--channels", "16", "--objects", "30", "--classes", "3",
               "--c-out", "8", "--n-train", "30", "--n-eval", "12", "--epochs", "2", "--batch-size", "8"]


def run(command, argv):
    return run_command(command, build_parser().parse_args(argv))


class TestAnalyze:
    def test_single_block(self, capsys):
        assert run(cmd_analyze, ["analyze", "--oab", "1024:2", "--n", "150"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "0.4" in out and "70.5" in out

    def test_fractional_alpha(self, capsys):
        assert run(cmd_analyze, ["analyze", "--oab", "512:1/2", "--format", "csv"]) == EXIT_OK
        assert "786432" in capsys.readouterr().out

    def test_non_integral_alpha(self, capsys):
        assert run(cmd_analyze, ["analyze", "--oab", "1024:3"]) == EXIT_USAGE
        assert "1024" in capsys.readouterr().err

    def test_reference_preset(self, capsys):
        assert run(cmd_analyze, ["analyze", "--preset", "paper", "--format", "csv"]) == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 16
        assert any(line.endswith(",1.1,180.3") for line in lines)

    def test_layer_flags(self, capsys):
        argv = ["analyze", "--self-attention", "1:1:1:1", "--nonlocal", "2:1:2", "--n", "1", "--format", "csv"]
        assert run(cmd_analyze, argv) == EXIT_OK
        rows = capsys.readouterr().out.strip().splitlines()[1:]
        assert rows[0].split(",")[2:4] == ["4", "6"]
        assert rows[1].split(",")[2:4] == ["8", "10"]

    def test_nothing_to_analyze(self):
        assert run(cmd_analyze, ["analyze"]) == EXIT_USAGE

    def test_malformed_layer_flag(self):
        assert run(cmd_analyze, ["analyze", "--gram", "1024:150"]) == EXIT_USAGE


class TestOfam:
    @pytest.fixture
    def pairs_path(self, rng, tmp_path):
        records = []
        for i in range(10):
            records.append(TensorRecord(f"{i}.F", rng.standard_normal((6, 20))))
            records.append(TensorRecord(f"{i}.S", rng.uniform(size=(5, 20))))
            records.append(TensorRecord(f"{i}.y", np.array([[i % 2]], dtype=np.float64)))
        path = tmp_path / "pairs.otsf"
        write_container(path, records)
        return path

    def test_writes_object_features(self, pairs_path, tmp_path, capsys):
        out = tmp_path / "objects.otsf"
        assert run(cmd_ofam, ["ofam", str(pairs_path), str(out)]) == EXIT_OK
        names = [r.name for r in read_container(out)]
        assert sum(name.endswith(".X") for name in names) == 10
        assert "10 samples" in capsys.readouterr().out

    def test_truncated_input(self, pairs_path, tmp_path, capsys):
        truncated = tmp_path / "short.otsf"
        truncated.write_bytes(pairs_path.read_bytes()[:100])
        assert run(cmd_ofam, ["ofam", str(truncated), str(tmp_path / "o.otsf")]) == EXIT_FORMAT
        assert "offset" in capsys.readouterr().err

    def test_missing_input(self, tmp_path):
        assert run(cmd_ofam, ["ofam", str(tmp_path / "none.otsf"), str(tmp_path / "o.otsf")]) == EXIT_FORMAT


class TestTrainAndEval:
    def test_same_seed_gives_identical_reports(self, tmp_path):
        for name in ("a", "b"):
            assert run(cmd_train, ["train", *SMALL_TRAIN, "--out", str(tmp_path / name)]) == EXIT_OK
        for report in ("train_report.csv", "train_report.txt"):
            assert (tmp_path / "a" / report).read_bytes() == (tmp_path / "b" / report).read_bytes()
        assert (tmp_path / "a" / "model.otsf").read_bytes() == (tmp_path / "b" / "model.otsf").read_bytes()

    def test_eval_prints_per_class_table(self, tmp_path, capsys):
        run(cmd_train, ["train", *SMALL_TRAIN, "--out", str(tmp_path)])
        capsys.readouterr()
        argv = ["eval", str(tmp_path / "model.otsf"), "--synthetic", "default", "--n-train", "30", "--n-eval", "12",
                "--min-accuracy", "0.0"]
        assert run(cmd_eval, argv) == EXIT_OK
        out = capsys.readouterr().out
        assert "Avg. Acc. (%)" in out and "Overall Acc. (%)" in out
        assert "class_0" in out

    def test_eval_below_threshold(self, tmp_path):
        run(cmd_train, ["train", *SMALL_TRAIN, "--out", str(tmp_path)])
        argv = ["eval", str(tmp_path / "model.otsf"), "--synthetic", "default", "--n-train", "30", "--n-eval", "12",
                "--min-accuracy", "1.01"]
        assert run(cmd_eval, argv) == EXIT_ACCEPTANCE

    def test_eval_rejects_fewer_class_names_than_model_classes(self, tmp_path, rng, capsys):
        run(cmd_train, ["train", *SMALL_TRAIN, "--out", str(tmp_path)])
        samples = [(ObjectFeatures(rng.standard_normal((16, 30)), np.ones(30, dtype=bool)), k % 2) for k in range(6)]
        write_container(tmp_path / "objects.otsf", object_feature_records(samples))
        capsys.readouterr()
        argv = ["eval", str(tmp_path / "model.otsf"), "--data", str(tmp_path / "objects.otsf"), "--class-names", "a,b"]
        assert run(cmd_eval, argv) == EXIT_USAGE
        assert "model predicts 3" in capsys.readouterr().err

    def test_diverging_run_is_a_numerical_failure(self, tmp_path, capsys):
        assert run(cmd_train, ["train", *SMALL_TRAIN, "--lr", "1e200", "--out", str(tmp_path)]) == EXIT_ACCEPTANCE
        assert "numerical failure" in capsys.readouterr().err

    def test_numerical_error_maps_to_acceptance_exit(self):
        def failing(args):
            raise NumericalError("matmul produced non-finite entries")

        assert run_command(failing, build_parser().parse_args(["analyze"])) == EXIT_ACCEPTANCE

    @pytest.mark.parametrize("attention", ["self-attention", "nonlocal"])
    def test_relation_block_checkpoint_round_trip(self, tmp_path, attention):
        argv = ["train", *SMALL_TRAIN, "--attention", attention, "--depth", "1", "--out", str(tmp_path)]
        assert run(cmd_train, argv) == EXIT_OK
        argv = ["eval", str(tmp_path / "model.otsf"), "--synthetic", "default", "--n-train", "30", "--n-eval", "12"]
        assert run(cmd_eval, argv) == EXIT_OK

    def test_missing_dataset(self, tmp_path):
        assert run(cmd_train, ["train", "--out", str(tmp_path)]) == EXIT_USAGE
        assert run(cmd_train, ["train", "--data", str(tmp_path / "none.otsf"), "--out", str(tmp_path)]) == EXIT_USAGE

    def test_missing_checkpoint(self, tmp_path):
        assert run(cmd_eval, ["eval", str(tmp_path / "none.otsf"), "--synthetic", "default"]) == EXIT_USAGE

    def test_aggregators_are_mutually_exclusive(self):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(["train", "--gram", "--fc"])
        assert info.value.code == 2

    def test_cli_config_parses_alphas(self):
        args = build_parser().parse_args(["train", "--alphas", "2,1/2", "--pool"])
        cli = CliConfig.from_args(args)
        assert [str(a) for a in cli.alphas] == ["2", "1/2"]
        assert cli.to_model_config().aggregator == "pool"

    def test_cli_config_relation_blocks(self):
        cli = CliConfig.from_args(build_parser().parse_args(["train", "--attention", "nonlocal", "--depth", "3"]))
        config = cli.to_model_config()
        assert (config.attention, config.attention_depth) == ("nonlocal", 3)

    def test_cli_config_empty_stack(self):
        cli = CliConfig.from_args(build_parser().parse_args(["train", "--alphas", ""]))
        assert cli.alphas == ()


class TestGradcheck:
    def test_default_desk_configuration(self, capsys):
        assert run(cmd_gradcheck, ["gradcheck"]) == EXIT_OK
        assert "max relative error" in capsys.readouterr().out

    def test_bad_alpha(self):
        assert run(cmd_gradcheck, ["gradcheck", "--alphas", "3"]) == EXIT_USAGE

    def test_biased_configuration(self):
        assert run(cmd_gradcheck, ["gradcheck", "--bias"]) == EXIT_OK

    @pytest.mark.parametrize("attention", ["self-attention", "nonlocal"])
    def test_relation_blocks(self, attention):
        assert run(cmd_gradcheck, ["gradcheck", "--attention", attention, "--depth", "2", "--bias"]) == EXIT_OK
