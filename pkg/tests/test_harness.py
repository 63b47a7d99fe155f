import json
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from priorreg import cli
from priorreg.config import ExperimentConfig, SearchConfig, load_config, save_config
from priorreg.errors import ConfigError, ContractError, ExperimentError
from priorreg.experiment import repeatability_run, run_experiment, search_space
from priorreg.oracles import GridSpec, OracleSpec, oracle_field
from priorreg.presets import CASES, preset, preset_names
from priorreg.report import (
    REPORT_COLUMNS,
    ReportRow,
    aggregate,
    emit_heatmap,
    pgm_bytes,
    read_heatmap_csv,
    read_pgm,
    read_report,
    write_report,
)


def smoke(name="reaction-case1-prior15"):
    return preset(name, "smoke")


# -- presets and config -----------------------------------------------------


def test_preset_names_resolve_at_every_scale():
    names = preset_names()
    assert len(names) == 5 * len(CASES) + 2
    for name in names:
        for scale in ("desk", "paper", "smoke"):
            assert preset(name, scale).name == name


def test_desk_preset_shape():
    c = preset("reaction-case2-prior15")
    assert (c.train.hidden_layers, c.train.width, c.search.budget) == (4, 64, 15)
    assert c.oracle.coeffs == {"rho": 20.0} and c.priors[0].coeffs == {"rho": 15.0}
    multi = preset("reaction-case2-multi")
    assert [p.coeffs["rho"] for p in multi.priors] == [15.0, 25.0]
    coef = preset("convection-case2-coef45")
    assert coef.priors[0].tunable == {"beta"}


def test_unknown_preset_and_scale():
    with pytest.raises(ConfigError):
        preset("reaction-case9-prior1")
    with pytest.raises(ConfigError):
        preset("reaction-case1-prior7")
    with pytest.raises(ConfigError):
        preset("reaction-case1-prior5", "huge")


def test_config_roundtrip(tmp_path):
    for name in ("rd-case1-multi", "hnn-spring"):
        c = preset(name)
        assert load_config(save_config(c, tmp_path / f"{name}.json")) == c


def test_config_rejects_unknown_keys(tmp_path):
    doc = preset("reaction-case1-prior5").to_dict()
    doc["train"]["momentum"] = 0.9
    with pytest.raises(ConfigError, match="momentum"):
        ExperimentConfig.from_dict(doc)
    doc = preset("reaction-case1-prior5").to_dict()
    doc["colour"] = "blue"
    with pytest.raises(ConfigError, match="colour"):
        ExperimentConfig.from_dict(doc)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_config_validation():
    c = smoke()
    with pytest.raises(ConfigError):
        replace(c, priors=[])
    with pytest.raises(ConfigError):
        replace(c, val_fraction=1.0)
    with pytest.raises(ConfigError):
        SearchConfig(n_init=5, budget=3)
    with pytest.raises(ConfigError):
        replace(c, search=SearchConfig(fixed_lambdas=[1.0, 2.0]))


def test_search_space_dims():
    space, decode = search_space(preset("reaction-case2-coef15"))
    assert space.names == ["lambda", "rho"]
    assert (space.dims[1].lower, space.dims[1].upper) == (7.5, 22.5)
    lams, priors, theta = decode([0.1, 19.0])
    assert lams == [0.1] and priors[0].coeffs["rho"] == 19.0 and theta == {"rho": 19.0}
    space, _ = search_space(preset("reaction-case2-multi"))
    assert space.names == ["lambda1", "lambda2"]


# -- report -----------------------------------------------------------------


def _row(seed, base, tuned):
    return ReportRow("c", "p", [seed], baseline_mse=base, tuned_mse=tuned, lambda_opt=f"{seed}.0")


def test_report_roundtrip(tmp_path):
    path = write_report([_row(0, 1.0, 0.5)], tmp_path / "r.csv")
    [row] = read_report(path)
    assert tuple(row) == REPORT_COLUMNS
    assert float(row["baseline_mse"]) == 1.0 and row["weight_decay_mse"] == ""
    bad = tmp_path / "bad.csv"
    bad.write_text("case,mse\nx,1\n")
    with pytest.raises(ContractError):
        read_report(bad)


def test_aggregate_mean_std_and_flags():
    agg = aggregate([_row(0, 1.0, 0.1), _row(1, 3.0, 0.3), _row(2, 2.0, 0.2)], [0, 1, 2])
    assert agg.baseline_mse == pytest.approx(2.0) and agg.std["baseline_mse"] == pytest.approx(1.0)
    assert agg.lambda_opt == "0.0|1.0|2.0" and "single_seed" not in agg.flags
    dup = aggregate([_row(4, 1.5, 0.2)], [4, 4])
    assert dup.std["baseline_mse"] == 0.0
    single = aggregate([_row(4, 1.5, 0.2)], [4])
    assert "baseline_mse" not in single.std and "single_seed" in single.flags
    assert single.cells()[REPORT_COLUMNS.index("baseline_std")] == ""
    failed = aggregate([_row(0, 1.0, 0.1)], [0], failed=[1])
    assert "failed_seeds=1" in failed.flags


def test_heatmap_files(tmp_path):
    grid = GridSpec()
    field = oracle_field(OracleSpec("reaction", {"rho": 10.0}), grid)
    csv_a, pgm_a = emit_heatmap(field, grid, tmp_path / "a")
    csv_b, pgm_b = emit_heatmap(field, grid, tmp_path / "b")
    assert read_heatmap_csv(csv_a).shape == (256, 100)
    assert np.array_equal(read_heatmap_csv(csv_a), field)
    assert read_pgm(pgm_a).shape == (256, 100)
    assert csv_a.read_bytes() == csv_b.read_bytes() and pgm_a.read_bytes() == pgm_b.read_bytes()


def test_constant_field_pgm_is_black():
    data = pgm_bytes(np.full((3, 4), 2.5))
    assert data.startswith(b"P5\n4 3\n255\n") and set(data[len(b"P5\n4 3\n255\n"):]) == {0}
    with pytest.raises(ContractError):
        pgm_bytes(np.array([[np.nan, 1.0]]))


# -- experiment driver ------------------------------------------------------


def test_run_experiment_row_layout(tmp_path):
    row = run_experiment(smoke(), tmp_path)
    assert row.baseline_mse > 0 and row.weight_decay_mse > 0 and row.tuned_mse > 0
    assert row.lambda_opt and row.best_decay == "0.0001"
    [csv_row] = read_report(tmp_path / "report.csv")
    assert csv_row["case"] == "reaction-case1-prior15"
    for name in ("oracle", "baseline", "weight_decay", "tuned"):
        assert (tmp_path / "heatmaps" / f"{name}.pgm").exists()


def test_fixed_zero_lambda_matches_baseline(tmp_path):
    c = replace(smoke(), search=SearchConfig(enabled=False, fixed_lambdas=[0.0]))
    row = run_experiment(c, tmp_path)
    assert row.tuned_mse == row.baseline_mse
    assert "search_disabled" in row.flags


def test_rerun_is_byte_identical(tmp_path):
    run_experiment(smoke(), tmp_path / "a")
    run_experiment(smoke(), tmp_path / "b")
    for rel in ("report.csv", "heatmaps/tuned.csv", "heatmaps/tuned.pgm", "heatmaps/baseline.pgm"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_repeatability_duplicate_seeds(tmp_path):
    row = repeatability_run(smoke(), [3, 3], tmp_path)
    assert row.std["tuned_mse"] == 0.0 and row.seeds == [3, 3]
    assert sorted(p.name for p in tmp_path.iterdir()) == ["report.csv", "seed-3"]


def test_hnn_smoke_run(tmp_path):
    row = run_experiment(preset("hnn-spring", "smoke"), tmp_path)
    assert row.baseline_energy >= 0 and row.tuned_energy >= 0 and row.lambda_opt


def test_failing_stage_writes_manifest(tmp_path):
    c = replace(smoke(), n_train=10**6)
    with pytest.raises(ExperimentError) as info:
        run_experiment(c, tmp_path)
    assert info.value.stage == "dataset"
    doc = json.loads((tmp_path / "error.json").read_text())
    assert doc["stage"] == "dataset" and doc["error_type"] == "ContractError"


# -- CLI --------------------------------------------------------------------


def test_cli_seed_resolution(monkeypatch):
    monkeypatch.delenv("PRIORREG_SEED", raising=False)
    assert cli.default_seed() == 0
    monkeypatch.setenv("PRIORREG_SEED", "17")
    assert cli.default_seed() == 17
    args = cli.build_parser().parse_args(["tune", "reaction-case1-prior5"])
    assert cli._config(args).seed == 17
    args = cli.build_parser().parse_args(["tune", "reaction-case1-prior5", "--seed", "4"])
    assert cli._config(args).seed == 4
    monkeypatch.setenv("PRIORREG_SEED", "x")
    with pytest.raises(ConfigError):
        cli.default_seed()


def test_cli_commands(tmp_path, capsys):
    out = str(tmp_path / "run")
    assert cli.main(["generate-data", "reaction-case1-prior5", "--scale", "smoke", "--out", out]) == 0
    assert (tmp_path / "run" / "dataset.json").exists()
    assert cli.main(["train", "reaction-case1-prior5", "--scale", "smoke", "--out", out, "--lambda", "0.1"]) == 0
    assert "test_mse=" in capsys.readouterr().out
    assert cli.main(["tune", str(tmp_path / "run" / "config.json"), "--out", out]) == 0
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["lambdas"]
    assert cli.main(["reproduce", "reaction-case1-prior5", "--scale", "smoke", "--out", str(tmp_path / "rep")]) == 0
    capsys.readouterr()
    assert cli.main(["report", str(tmp_path / "rep")]) == 0
    assert "reaction-case1-prior5" in capsys.readouterr().out


def test_cli_errors(tmp_path, capsys):
    assert cli.main(["tune", "no-such-preset"]) == 2
    assert "error:" in capsys.readouterr().err
    assert cli.main(["train", "reaction-case1-multi", "--scale", "smoke", "--lambda", "1", "--out", str(tmp_path)]) == 2
    assert cli.main(["report", str(tmp_path / "missing")]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "priorreg", "presets"], capture_output=True, text=True, check=True)
    assert "hnn-pendulum" in proc.stdout.split()
