import json
from pathlib import Path

import pytest

from pooldispatch.cli import (
    EXIT_OK,
    EXIT_SOLVER_ABORT,
    EXIT_USAGE,
    build_parser,
    main,
)
from pooldispatch.core import DispatchInstance

EXEMPLAR_JSON = Path(__file__).parents[1] / "fixtures" / "exemplar.json"
MOCK_ROUNDS = Path(__file__).parent / "fixtures" / "mock_rounds"

SUBCOMMANDS = ("generate", "simulate", "solve", "prompt", "run", "ablate")


class TestParser:
    @pytest.mark.parametrize("command", SUBCOMMANDS)
    def test_help_exits_zero(self, command, capsys):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args([command, "--help"])
        assert exc.value.code == 0
        assert "--seed" in capsys.readouterr().out

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args([])
        assert exc.value.code == 2

    def test_version_flag(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["--version"])
        assert exc.value.code == 0


class TestGenerate:
    def test_count_and_manifest(self, tmp_path):
        out = tmp_path / "gen"
        assert main(["generate", "--out", str(out), "--seed", "3",
                     "--count", "7", "--size", "2"]) == EXIT_OK
        lines = (out / "instances.jsonl").read_text().strip().splitlines()
        assert len(lines) == 7
        inst = DispatchInstance.from_json(lines[0])
        assert (inst.m, inst.n, inst.p) == (2, 2, 2)
        assert inst.instance_id == "inst-3-00000"
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["outcome"] == "ok"
        assert manifest["seed"] == 3

    def test_deterministic(self, tmp_path):
        for name in ("a", "b"):
            main(["generate", "--out", str(tmp_path / name), "--seed", "5",
                  "--count", "4"])
        assert (tmp_path / "a" / "instances.jsonl").read_bytes() == \
            (tmp_path / "b" / "instances.jsonl").read_bytes()


class TestSolve:
    def test_exemplar_optimal(self, tmp_path, capsys):
        out = tmp_path / "solve"
        assert main(["solve", "--out", str(out), "--in", str(EXEMPLAR_JSON)]) == EXIT_OK
        docs = list(out.glob("solve_*.json"))
        assert len(docs) == 1
        doc = json.loads(docs[0].read_text())
        assert doc["status"] == "optimal"
        assert doc["optimal"]["objective"] == pytest.approx(9.55, abs=1e-9)
        assert "1 optimal" in capsys.readouterr().out

    def test_missing_input_is_usage_error(self, tmp_path):
        out = tmp_path / "solve"
        code = main(["solve", "--out", str(out), "--in", str(tmp_path / "nope.json")])
        assert code == EXIT_USAGE
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["outcome"] == "missing-input"

    def test_node_limit_abort_exit_code(self, tmp_path):
        gen = tmp_path / "gen"
        main(["generate", "--out", str(gen), "--seed", "1", "--count", "1",
              "--size", "5"])
        code = main(["solve", "--out", str(tmp_path / "solve"),
                     "--in", str(gen / "instances.jsonl"), "--max-nodes", "2"])
        assert code == EXIT_SOLVER_ABORT

    def test_parallel_jobs_match_serial(self, tmp_path):
        gen = tmp_path / "gen"
        main(["generate", "--out", str(gen), "--seed", "2", "--count", "4",
              "--size", "2"])
        for name, jobs in (("serial", "1"), ("parallel", "3")):
            main(["solve", "--out", str(tmp_path / name),
                  "--in", str(gen / "instances.jsonl"), "--jobs", jobs])
        serial = sorted((tmp_path / "serial").glob("solve_*.json"))
        parallel = sorted((tmp_path / "parallel").glob("solve_*.json"))
        assert [p.read_bytes() for p in serial] == [p.read_bytes() for p in parallel]


class TestPrompt:
    def test_exemplar_prompt_with_incumbent(self, tmp_path):
        out = tmp_path / "prompt"
        assert main(["prompt", "--out", str(out), "--in", str(EXEMPLAR_JSON),
                     "--exemplars", "1"]) == EXIT_OK
        texts = list(out.glob("prompt_*.txt"))
        sidecars = list(out.glob("prompt_*.json"))
        assert len(texts) == 1 and len(sidecars) == 1
        body = texts[0].read_text()
        assert "one of solutions starts" in body
        assert json.loads(sidecars[0].read_text())["exemplars"]

    def test_no_exemplars(self, tmp_path):
        out = tmp_path / "prompt0"
        main(["prompt", "--out", str(out), "--in", str(EXEMPLAR_JSON)])
        body = next(out.glob("prompt_*.txt")).read_text()
        assert "one of solutions starts" not in body


class TestRun:
    def test_mock_proposer_best(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(["run", "--out", str(out), "--in", str(EXEMPLAR_JSON),
                     "--schedule", "fall", "--proposer", "mock",
                     "--mock-fixtures", str(MOCK_ROUNDS)])
        assert code == EXIT_OK
        assert "best=9.55" in capsys.readouterr().out
        doc = json.loads(next(out.glob("run_*.json")).read_text())
        assert doc["best"]["objective"] == pytest.approx(9.55, abs=1e-9)

    def test_mock_requires_fixture_dir(self, tmp_path):
        code = main(["run", "--out", str(tmp_path / "r"), "--in",
                     str(EXEMPLAR_JSON), "--proposer", "mock"])
        assert code == EXIT_USAGE

    def test_stochastic_deterministic(self, tmp_path):
        def artifact(name):
            out = tmp_path / name
            main(["run", "--out", str(out), "--in", str(EXEMPLAR_JSON),
                  "--proposer", "stochastic", "--seed", "9"])
            return next(out.glob("run_*.json")).read_bytes()
        assert artifact("x") == artifact("y")


class TestAblate:
    def test_small_run_and_determinism(self, tmp_path, capsys):
        def run_dir(name):
            out = tmp_path / name
            code = main(["ablate", "--out", str(out), "--proposer", "stochastic",
                         "--seed", "7", "--count", "5", "--size", "3"])
            assert code == EXIT_OK
            return out

        first, second = run_dir("first"), run_dir("second")
        for artifact in ("ablation.csv", "scale_gaps.csv", "summary.json",
                         "table.txt"):
            assert (first / artifact).read_bytes() == (second / artifact).read_bytes()
        assert "strategy" in capsys.readouterr().out

    def test_reads_instance_file(self, tmp_path):
        gen = tmp_path / "gen"
        main(["generate", "--out", str(gen), "--seed", "4", "--count", "3",
              "--size", "3"])
        out = tmp_path / "abl"
        code = main(["ablate", "--out", str(out), "--in",
                     str(gen / "instances.jsonl"), "--seed", "4"])
        assert code == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["instances"] == 3


class TestSimulate:
    def test_summary_and_snapshots(self, tmp_path, capsys):
        out = tmp_path / "sim"
        code = main(["simulate", "--out", str(out), "--seed", "2",
                     "--vehicles", "6", "--orders", "15", "--grid-width", "10",
                     "--grid-height", "10", "--time-span", "120"])
        assert code == EXIT_OK
        summary = json.loads((out / "sim_summary.json").read_text())
        assert summary["matched_orders"] == summary["completed_orders"]
        assert (out / "snapshots.jsonl").exists()
        printed = json.loads(capsys.readouterr().out)
        assert printed == summary

    def test_toml_config_overridden_by_flags(self, tmp_path):
        cfg = tmp_path / "sim.toml"
        cfg.write_text("batch_window = 10.0\nvehicle_speed = 2.0\n")
        out = tmp_path / "sim2"
        code = main(["simulate", "--out", str(out), "--seed", "2",
                     "--vehicles", "4", "--orders", "8", "--grid-width", "8",
                     "--grid-height", "8", "--time-span", "60",
                     "--config", str(cfg), "--batch-window", "20"])
        assert code == EXIT_OK
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["config"]["batch_window"] == 20.0
