import numpy as np
import pytest

from regfreq import casestudy as cs
from regfreq.constraints import ConstraintRow, SecurityConstraintSet, SecurityParams


def test_profiles_respect_the_dataset_ranges(gb):
    demand, wind = cs.dataset_profiles(gb, seed=3, days=14)
    assert demand.shape == wind.shape == (14 * 24, 2)
    total = demand.sum(axis=1)
    assert total.min() >= 20_000.0 - 1e-6 and total.max() <= 60_000.0 + 1e-6
    np.testing.assert_allclose(demand[:, 0] / total, 0.9)
    assert wind.min() >= 0.0 and wind.max() <= 30_000.0 + 1e-6
    # a daily cycle: the afternoon is busier than the small hours
    days = total.reshape(14, 24)
    assert np.all(days[:, 16] > days[:, 4])


def test_profiles_are_deterministic_per_seed():
    a = cs.gen_profiles(7, 3)
    b = cs.gen_profiles(7, 3)
    c = cs.gen_profiles(8, 3)
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[1], c[1])
    np.testing.assert_array_equal(a[0], c[0])  # demand has no noise term
    with pytest.raises(ValueError):
        cs.gen_profiles(0, 0)


def test_profile_file_round_trip(tmp_path):
    from regfreq.scheduler import load_profiles_csv
    d, w = cs.gen_profiles(1, 2)
    cs.write_profiles_csv(tmp_path / "p.csv", d, w)
    d2, w2 = load_profiles_csv(tmp_path / "p.csv")
    np.testing.assert_array_equal(d, d2)
    np.testing.assert_array_equal(w, w2)


def test_bundled_dataset(gb):
    nuclear = [c for c in gb.classes if c.name.lower().startswith("nuclear")]
    assert nuclear and all(c.must_run for c in nuclear)
    assert {c.region for c in gb.classes} == {1, 2}
    eng, sco = gb.loss("england"), gb.loss("scotland")
    assert (eng.p_loss, eng.region) == (1_800.0, 1) and (sco.p_loss, sco.region) == (800.0, 2)
    assert gb.scheduler_options().corridor_limit == 7_500.0
    assert gb.security_params(eng).rocof_max == 1.0
    with pytest.raises(cs.ConfigError, match="losses.wales"):
        gb.loss("wales")


def test_config_loading_and_errors(tmp_path):
    (tmp_path / "a.toml").write_text("[x]\ny = 1\n")
    (tmp_path / "a.json").write_text('{"x": {"y": 2}}')
    (tmp_path / "bad.toml").write_text("[x\n")
    assert cs.need(cs.load_config(tmp_path / "a.toml"), "x.y") == 1
    assert cs.need(cs.load_config(tmp_path / "a.json"), "x.y", float) == 2.0
    with pytest.raises(cs.ConfigError, match="cannot parse"):
        cs.load_config(tmp_path / "bad.toml")
    with pytest.raises(FileNotFoundError):
        cs.load_config(tmp_path / "missing.toml")
    with pytest.raises(cs.ConfigError, match="'x.z'"):
        cs.need({"x": {}}, "x.z")
    with pytest.raises(cs.ConfigError, match="x.y"):
        cs.need({"x": {"y": "abc"}}, "x.y", float)


def test_user_dataset_needs_its_fleet(tmp_path):
    (tmp_path / "d.toml").write_text('fleet = "nope.csv"\n')
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        cs.gb_dataset(tmp_path / "d.toml")


def test_study_config_validation():
    assert cs.StudyConfig.from_dict({"study": "fault_location", "loss": "scotland"}).hours == 24
    with pytest.raises(cs.ConfigError, match="unknown"):
        cs.StudyConfig.from_dict({"study": "fault_location", "colour": "red"})
    with pytest.raises(cs.ConfigError, match="casestudy.study"):
        cs.StudyConfig.from_dict({})
    with pytest.raises(cs.ConfigError, match="one of"):
        cs.StudyConfig(study="annual")
    with pytest.raises(cs.ConfigError, match="hours"):
        cs.StudyConfig(study="cost_sensitivity", hours=0)
    with pytest.raises(cs.ConfigError, match="pack mode"):
        cs.train_pack(cs.gb_dataset(), cs.gb_dataset().loss("england"), "nodal")


def test_audit_of_a_hand_written_coi_pack():
    # the COI RoCoF floor alone cannot secure the regions; the audit must notice
    params = SecurityParams(p_loss=1_800.0, faulted_region=1)
    h_coi = 50.0 * 1_800.0 / 2.0
    pack = SecurityConstraintSet([ConstraintRow("coi", 1.0, 1.0, 0.0, 0.0, h_coi),
                                  ConstraintRow("qss", 0.0, 0.0, 1.0, 1.0, 1_650.0)], params)
    checks = cs.pack_audit(pack, (27_000.0, 3_000.0), n_points=10, seed=1)
    assert len(checks) == 10
    assert not all(c.passed for c in checks)


def test_trained_pack_shape_and_audit(england_pack):
    names = sorted(r.name for r in england_pack.rows)
    assert len(england_pack.rows) == 6 and len(england_pack.models) == 4
    assert any("qss" in n for n in names) and any("coi" in n for n in names)
    checks = cs.pack_audit(england_pack, (27_000.0, 3_000.0), n_points=40, seed=0)
    assert len(checks) >= 10
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]


def test_security_audit_of_hand_made_decisions(gb):
    from types import SimpleNamespace as NS
    params = gb.security_params(gb.loss("england"))
    demand = np.array([[27_000.0, 3_000.0]])
    recs = [NS(hour=0, decision=NS(h1=150_000.0, h2=0.0, r1=3_000.0, r2=0.0)),
            NS(hour=1, decision=NS(h1=200_000.0, h2=40_000.0, r1=4_000.0, r2=1_000.0)),
            NS(hour=2, decision=NS(h1=30_000.0, h2=5_000.0, r1=500.0, r2=0.0))]
    checks = cs.security_audit(recs, demand, params, gb.damping, gb.config["network"])
    assert [c.passed for c in checks] == [False, True, False]
    assert checks[0].note == "region without inertia"
    assert max(checks[2].max_rocof) > 1.0
