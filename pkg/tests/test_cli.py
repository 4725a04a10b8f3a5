import json
import shutil

import pytest

from atomic.cli import (
    EXIT_INPUT, EXIT_MISMATCH, EXIT_OK, PipelineOptions, evaluate_soa, main, parse_stages, run_pipeline,
)
from helpers import config_path

FAST = ["--deviation-max", "0.1", "--deviation-step", "0.1", "--test-mode"]


def _run(tmp_path, *extra, name="serial_full_adder"):
    return main(["pipeline", "--config-file", str(config_path(name)), "--out-dir", str(tmp_path), *FAST, *extra])


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    code = main(["pipeline", "--config-file", str(config_path("serial_full_adder")), "--out-dir", str(out), *FAST])
    return code, out / "serial_full_adder"


def test_full_pipeline_tree(full_run):
    code, out = full_run
    assert code == EXIT_OK
    for rel in ["State_History.txt", "PWM_output/a.csv", "PWM_output/gnd0.csv", "Waveforms/comb0.csv",
                "Waveforms/energy.csv", "netlists/comb7.net", "deviation_results/sum_0.csv",
                "deviation_results/cout_0.1.csv", "deviation_range.txt", "Images/range.svg",
                "Images/scatter_sum.svg", "Images/waveform_cout.svg", "run.log", "tmp/algorithm.txt",
                "summary.json"]:
        assert (out / rel).is_file(), rel


def test_summary_and_log(full_run):
    _, out = full_run
    summary = json.loads((out / "summary.json").read_text())
    assert summary["functional_pass"] and summary["circuit_pass"]
    assert summary["energy_J"]["mean"] > 0
    assert summary["deviation"]["runs"] == 8 + 64
    log = (out / "run.log").read_text()
    for stage in ("validate", "control", "simulate", "deviate", "plot"):
        assert f"START {stage}" in log and f"END {stage} status=0" in log
    assert "0000-00-00T00:00:00" in log


def test_negative_config_exits_with_mismatch(tmp_path, negative_config, capsys):
    code = main(["pipeline", "--config-file", str(negative_config), "--out-dir", str(tmp_path), "--stages", "v"])
    assert code == EXIT_MISMATCH
    err = capsys.readouterr().err
    assert "sum combination 5" in err


def test_missing_config(tmp_path):
    assert main(["pipeline", "--config-file", str(tmp_path / "nope.json"), "--out-dir", str(tmp_path)]) == EXIT_INPUT


def test_malformed_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["pipeline", "--config-file", str(bad), "--out-dir", str(tmp_path)]) == EXIT_INPUT


@pytest.mark.parametrize("spelling", [
    ["--", "config_file={}"], ["config_file={}"], ["--config_file", "{}"], ["--config_file={}"],
])
def test_config_flag_spellings(tmp_path, spelling):
    path = str(config_path("serial_full_adder"))
    argv = ["pipeline", *[s.format(path) for s in spelling], "--out-dir", str(tmp_path), "--stages", "v"]
    assert main(argv) == EXIT_OK


def test_parse_stages():
    assert parse_stages("v,s") == ("validate", "simulate")
    assert parse_stages("control,plot") == ("control", "plot")
    with pytest.raises(ValueError):
        parse_stages("v,x")


def test_bad_figure_size(tmp_path):
    assert _run(tmp_path, "--figure-size", "huge", "--stages", "v") == EXIT_INPUT


def test_stages_run_independently(tmp_path):
    assert _run(tmp_path, "--stages", "v,c") == EXIT_OK
    assert _run(tmp_path, "--stages", "s") == EXIT_OK
    assert _run(tmp_path, "--stages", "d") == EXIT_OK
    assert _run(tmp_path, "--stages", "p") == EXIT_OK
    assert (tmp_path / "serial_full_adder" / "Images" / "range.svg").is_file()


def test_stage_without_prerequisites(tmp_path):
    assert _run(tmp_path, "--stages", "s") == EXIT_INPUT
    assert _run(tmp_path, "--stages", "p") == EXIT_INPUT


def test_run_pipeline_api(tmp_path):
    res = run_pipeline(PipelineOptions(config_path("approx_full_adder"), tmp_path, stages=("validate",),
                                       test_mode=True))
    assert res.code == EXIT_OK
    assert res.out_dir == tmp_path / "approx_full_adder"


def test_evaluate_soa_reports_failures(tmp_path, negative_config):
    cfgs = tmp_path / "cfgs"
    cfgs.mkdir()
    shutil.copy(negative_config, cfgs / negative_config.name)
    rows, n = evaluate_soa(tmp_path / "out", cfgs, test_mode=True, stages=("validate",))
    assert n == 1
    assert rows[0]["status"] == f"fail({EXIT_MISMATCH})"


def test_evaluate_soa_cli_empty_dir(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["evaluate-soa", "--configs-dir", str(empty), "--out-dir", str(tmp_path / "o")]) == EXIT_OK
    assert "no configs" in capsys.readouterr().err
    assert (tmp_path / "o" / "soa_summary.csv").read_text().startswith("algorithm,")
