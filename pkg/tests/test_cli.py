import json

import pytest

from regfreq.cli import main

ROCOF_SWEEP = """
[sweep]
target = "rocof"
p_loss_values = [1800.0]
h_splits = [0.3, 0.5]
r_splits = [0.6]
band = [0.98, 1.1, 1.2]
[sweep.sim]
dt = 0.002
"""

NADIR_SWEEP = """
[sweep]
target = "nadir"
p_loss_values = [1800.0]
h_totals = [90000.0]
h_splits = [0.3, 0.5]
r_splits = [0.6]
r_increment = 250.0
band = [0.98, 1.1]
"""


def run(tmp_path, *argv, config=None, name="c.toml"):
    args = list(argv)
    if config is not None:
        (tmp_path / name).write_text(config)
        args += ["--config", str(tmp_path / name)]
    return main(args)


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main([]) == 1
    assert main(["teleport"]) == 1
    assert main(["schedule", "--seed", "abc"]) == 1
    assert main(["simulate", "--config", str(tmp_path / "missing.toml")]) == 1
    assert run(tmp_path, "sweep", "--out", str(tmp_path)) == 1  # no sweep section
    assert "missing config section 'sweep'" in capsys.readouterr().err
    assert run(tmp_path, "simulate", "--out", str(tmp_path),
               config="[simulate.point]\nh1 = 1.0\nwobble = 2\n") == 1
    assert "wobble" in capsys.readouterr().err
    assert run(tmp_path, "gen-profiles", "--days", "0", "--out", str(tmp_path)) == 1


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert "simulate" in capsys.readouterr().out


def test_simulate_writes_trace_and_stats(tmp_path):
    cfg = ("[simulate.point]\nh1 = 60000.0\nh2 = 20000.0\nr1 = 2000.0\nr2 = 800.0\n"
           "p_loss = 1800.0\n")
    assert run(tmp_path, "simulate", "--out", str(tmp_path / "o"), config=cfg) == 0
    stats = json.loads((tmp_path / "o" / "stats.json").read_text())["stats"]
    assert stats["max_rocof_1"] > 0 and (tmp_path / "o" / "trace.csv").is_file()


def test_gen_profiles(tmp_path):
    assert main(["gen-profiles", "--days", "2", "--seed", "4", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "profiles.csv").read_text().splitlines()
    assert lines[0] == "hour,demand_mw_r1,demand_mw_r2,wind_mw_r1,wind_mw_r2"
    assert len(lines) == 49


def test_sweep_fit_pack_pipeline(tmp_path):
    for name, cfg in (("rocof", ROCOF_SWEEP), ("nadir", NADIR_SWEEP)):
        assert run(tmp_path, "sweep", "--out", str(tmp_path / name), config=cfg,
                   name=f"{name}.toml") == 0
        assert run(tmp_path, "fit", str(tmp_path / name / "samples.csv"),
                   "--out", str(tmp_path / "models")) == 0
    models = sorted((tmp_path / "models").glob("model_*.json"))
    assert len(models) == 4
    assert sum("rocof" in m.name for m in models) == 2
    assert sum("region1" in m.name for m in models) == 2
    for m in models:
        d = json.loads(m.read_text())
        assert len(d["theta"]) == 8 and d["training_stats"]["min_overestimation"] >= -1e-9
    cfg = "[pack]\np_loss = 1800.0\nfaulted_region = 1\ndpd1 = 135.0\ndpd2 = 15.0\n"
    assert run(tmp_path, "pack", *map(str, models), "--out", str(tmp_path / "pack"),
               config=cfg, name="pack.toml") == 0
    pack = json.loads((tmp_path / "pack" / "pack.json").read_text())
    assert len(pack["rows"]) == 6 and len(pack["models"]) == 4


def test_fit_runtime_error_exits_2(tmp_path, capsys):
    assert run(tmp_path, "sweep", "--out", str(tmp_path), config=ROCOF_SWEEP) == 0
    csv = tmp_path / "samples.csv"
    lines = csv.read_text().splitlines()
    csv.write_text("\n".join([lines[0]] + [x for x in lines[1:] if x.startswith("1,")]) + "\n")
    assert main(["fit", str(csv), "--out", str(tmp_path)]) == 2
    assert "fit failed" in capsys.readouterr().err
    assert main(["fit", str(tmp_path / "nowhere.csv"), "--out", str(tmp_path)]) == 1


def _coi_pack_file(path):
    # a COI-only floor is not enough for the regions: the audit has to fail
    params = dict(p_loss=1800.0, faulted_region=1, rocof_max=1.0, df_max=0.8, df_ss_max=0.5,
                  f0=50.0, h_loss=0.0)
    rows = [dict(name="coi_rocof", coeff_h1=1.0, coeff_h2=1.0, coeff_r1=0.0, coeff_r2=0.0,
                 rhs=45_000.0),
            dict(name="qss", coeff_h1=0.0, coeff_h2=0.0, coeff_r1=1.0, coeff_r2=1.0,
                 rhs=1_700.0)]
    path.write_text(json.dumps({"params": params, "rows": rows, "mode": "regional",
                                "dpd": [0.0, 0.0], "models": []}))


SCHEDULE = """
[schedule]
hours = 2
lookahead = 2
{extra}
"""


def test_schedule_without_frequency_rows_buys_no_response(tmp_path):
    assert run(tmp_path, "schedule", "--no-frequency", "--out", str(tmp_path / "o"),
               config=SCHEDULE.format(extra="")) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["avg_r_total"] == 0.0 and summary["frequency_rows"] is False
    assert len((tmp_path / "o" / "decisions.csv").read_text().splitlines()) == 3


def test_schedule_verify_failure_exits_3(tmp_path, capsys):
    _coi_pack_file(tmp_path / "pack.json")
    cfg = SCHEDULE.format(extra='pack = "pack.json"')
    assert run(tmp_path, "schedule", "--verify", "--out", str(tmp_path / "o"), config=cfg) == 3
    assert "audit failed" in capsys.readouterr().err
    audit = json.loads((tmp_path / "o" / "security_audit.json").read_text())
    assert len(audit) == 2 and not all(c["passed"] for c in audit)


def test_schedule_option_errors(tmp_path):
    cfg = SCHEDULE.format(extra="[schedule.options]\nspeed = 3\n")
    assert run(tmp_path, "schedule", "--no-frequency", "--out", str(tmp_path), config=cfg) == 1
    cfg = SCHEDULE.format(extra="[schedule.options]\ncorridor_limit = -5.0\n")
    assert run(tmp_path, "schedule", "--no-frequency", "--out", str(tmp_path), config=cfg) == 1
    cfg = SCHEDULE.format(extra='profiles = "none.csv"')
    assert run(tmp_path, "schedule", "--no-frequency", "--out", str(tmp_path), config=cfg) == 1


def test_casestudy_config_errors(tmp_path):
    assert run(tmp_path, "casestudy", "--out", str(tmp_path), config="[casestudy]\n") == 1
    assert run(tmp_path, "casestudy", "--study", "fault_location", "--out", str(tmp_path),
               config="[casestudy]\nsize = 3\n") == 1
    assert main(["casestudy", "--study", "annual"]) == 1


@pytest.mark.parametrize("cmd", ["pack", "fit"])
def test_missing_inputs_are_usage_errors(tmp_path, cmd):
    assert main([cmd, "--out", str(tmp_path)]) == 1
