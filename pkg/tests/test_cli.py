"""Command-line interface: subcommands, exit codes, output shape."""

from __future__ import annotations

import json

import pytest

from noisegate.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_STAGE, main

from .conftest import MINI_DIR

FAST_FLAGS = [
    "--min-activity", "5",
    "--nf3-k", "10",
    "--nf3-significance-cap", "10",
    "--rf-trees", "15",
    "--rf-max-depth", "6",
    "--gbt-rounds", "15",
    "--gbt-depth", "2",
    "--ressel-bags", "6",
    "--ressel-max-rounds", "3",
    "--eif-trees", "30",
    "--eif-sample-size", "64",
    "--mf-factors", "8",
    "--mf-epochs", "8",
    "--clusters-k", "5",
    "--top-k", "5",
    "--seed", "7",
]


def _run_args(out_dir, run_id):
    return [
        "--ratings-path", str(MINI_DIR / "ratings.csv"),
        "--movies-path", str(MINI_DIR / "movies.csv"),
        "--out-dir", str(out_dir),
        "--run-id", run_id,
        *FAST_FLAGS,
    ]


@pytest.fixture(scope="module")
def cli_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    code = main(["run", *_run_args(out, "cli-full")])
    assert code == EXIT_OK
    return out / "cli-full"


def test_run_prints_summary_json(cli_run, capsys, tmp_path):
    code = main(["run", *_run_args(tmp_path, "again")])
    assert code == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert "report" in payload and "percent_positive" in payload
    assert set(payload["percent_positive"]) == {
        "serendipity-ndcg", "serendipity-precision", "serendipity-recall", "serendipity-f1",
    }


def test_report_subcommand(cli_run, capsys):
    code = main(["report", str(cli_run / "report.json")])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "consensus:" in out
    assert "per-detector noisy:" in out
    assert "critical groups:" in out


def test_staged_subcommands_exit_zero(tmp_path, capsys):
    args = _run_args(tmp_path, "staged")
    for command in ("ingest", "detect", "ensemble", "signature", "evaluate"):
        capsys.readouterr()
        assert main([command, *args]) == EXIT_OK, command
    payload = json.loads(capsys.readouterr().out)
    assert "percent_positive" in payload
    assert (tmp_path / "staged" / "report.json").exists()


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(
        json.dumps(
            {
                "ratings_path": str(MINI_DIR / "ratings.csv"),
                "out_dir": str(tmp_path / "from-file"),
                "min_activity": 5,
                "seed": 7,
            }
        )
    )
    code = main(
        ["ingest", "--config", str(cfg_file), "--out-dir", str(tmp_path / "override"),
         "--run-id", "cfg"]
    )
    assert code == EXIT_OK
    assert (tmp_path / "override" / "cfg" / "splits" / "train.csv").exists()
    assert not (tmp_path / "from-file").exists()
    counts = json.loads(capsys.readouterr().out)
    assert counts["users"] == 60


def test_bad_config_exits_2(tmp_path, capsys):
    code = main(
        ["run", "--ratings-path", str(MINI_DIR / "ratings.csv"),
         "--out-dir", str(tmp_path), "--min-activity", "0"]
    )
    assert code == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_missing_data_exits_3(tmp_path, capsys):
    code = main(
        ["run", "--ratings-path", str(tmp_path / "absent.csv"), "--out-dir", str(tmp_path)]
    )
    assert code == EXIT_DATA
    assert "data error" in capsys.readouterr().err


def test_stage_failure_exits_4(tmp_path, capsys, monkeypatch):
    def _boom(*args, **kwargs):
        raise RuntimeError("synthetic stage crash")

    monkeypatch.setattr("noisegate.pipeline.stage_board", _boom)
    code = main(["run", *_run_args(tmp_path, "crash")])
    assert code == EXIT_STAGE
    err = capsys.readouterr().err
    assert "stage error" in err and "board" in err


def test_missing_artifacts_exit_3(tmp_path, capsys):
    code = main(["ensemble", *_run_args(tmp_path, "cold")])
    assert code == EXIT_DATA
    assert "run the detect stage first" in capsys.readouterr().err


def test_inject_noise_subcommand(tmp_path, capsys):
    out_ratings = tmp_path / "noisy.csv"
    out_mask = tmp_path / "mask.json"
    code = main(
        ["inject-noise",
         "--ratings", str(MINI_DIR / "ratings.csv"),
         "--rate", "0.1",
         "--kind", "uniform",
         "--seed", "3",
         "--out-ratings", str(out_ratings),
         "--out-mask", str(out_mask)]
    )
    assert code == EXIT_OK
    assert out_ratings.exists() and out_mask.exists()
    payload = json.loads(capsys.readouterr().out)
    assert payload["perturbed"] == round(0.1 * payload["total"])
    assert payload["kind"] == "uniform"


def test_inject_noise_missing_input_exits_3(tmp_path, capsys):
    code = main(
        ["inject-noise", "--ratings", str(tmp_path / "none.csv"), "--rate", "0.1",
         "--kind", "flip", "--out-ratings", str(tmp_path / "o.csv"),
         "--out-mask", str(tmp_path / "m.json")]
    )
    assert code == EXIT_DATA


def test_report_on_missing_file_exits_3(tmp_path):
    assert main(["report", str(tmp_path / "nothing.json")]) == EXIT_DATA
