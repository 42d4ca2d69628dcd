import csv

import numpy as np
import pytest

from oracles import coi_closed_form, two_area_reference
from regfreq.dynamics import (OperatingPoint, SimParams, SimulationError, analyze,
                              coi_nadir_threshold, coi_rocof, simulate, write_trace_csv)


def point(**kw):
    base = dict(h1=60_000.0, h2=20_000.0, r1=2_000.0, r2=800.0, p_loss=1_800.0)
    base.update(kw)
    return OperatingPoint(**base)


@pytest.mark.parametrize("faulted", [1, 2])
def test_trace_matches_adaptive_reference(faulted):
    pt = point(faulted_region=faulted)
    tr = simulate(pt)
    t, f1, f2 = two_area_reference(pt.h1, pt.h2, pt.r1, pt.r2, pt.p_loss, faulted, pt.dpd1,
                                   pt.dpd2, pt.sync_coefficient)
    assert np.allclose(tr.times, t)
    assert np.max(np.abs(tr.df1 - f1)) < 1e-6
    assert np.max(np.abs(tr.df2 - f2)) < 1e-6


def test_halving_the_step_changes_little():
    pt = point()
    coarse = analyze(simulate(pt, SimParams(dt=2e-3)), pt)
    fine = analyze(simulate(pt, SimParams(dt=1e-3)), pt)
    assert abs(coarse.nadir_1 - fine.nadir_1) < 1e-6
    assert abs(coarse.nadir_2 - fine.nadir_2) < 1e-6
    # RoCoF is a first difference, so it converges at first order only
    assert abs(coarse.max_rocof_2 - fine.max_rocof_2) < 2e-3


def test_uniform_mode_is_the_single_bus_solution():
    pt = point(d1=0.0, d2=0.0)
    tr = simulate(pt, uniform=True)
    exact = coi_closed_form(tr.times, pt.h_total, pt.r_total, pt.p_loss)
    assert np.max(np.abs(tr.df1 - exact)) < 1e-9
    assert np.array_equal(tr.df1, tr.df2)
    assert not tr.tie_flow.any()


def test_undamped_nadir_matches_threshold_formula():
    # choose R so that H * R equals k*: the nadir then sits exactly at df_max
    h = 45_000.0
    k_star = coi_nadir_threshold(1_800.0, 50.0, 10.0, 0.8)
    assert k_star == pytest.approx(5.0625e8)
    pt = point(h1=h / 2, h2=h / 2, r1=k_star / h / 2, r2=k_star / h / 2, d1=0.0, d2=0.0)
    st = analyze(simulate(pt, uniform=True), pt)
    assert st.nadir_1 == pytest.approx(0.8, abs=1e-6)
    assert k_star / h == pytest.approx(11_250.0)


def test_initial_rocof_identities():
    pt = point()
    tr = simulate(pt)
    dt = tr.times[1]
    assert abs(tr.df1[1] / dt) == pytest.approx(pt.p_loss * pt.f0 / (2 * pt.h1), rel=1e-3)
    st = analyze(tr, pt)
    assert st.coi_rocof_0 == pytest.approx(coi_rocof(pt), rel=1e-3)
    assert coi_rocof(point(h1=30_000.0, h2=15_000.0)) == pytest.approx(1.0)


def test_labels_are_max_rocof_minus_coi_term():
    pt = point()
    st = analyze(simulate(pt), pt)
    for region in (1, 2):
        assert st.osc_label(region) == pytest.approx(st.max_rocof(region) - coi_rocof(pt))


def test_more_inertia_and_response_never_hurts():
    base = analyze(simulate(point()), point())
    more_h = point(h1=66_000.0, h2=22_000.0)
    more_r = point(r1=2_400.0, r2=960.0)
    for pt in (more_h, more_r):
        st = analyze(simulate(pt), pt)
        assert st.nadir_1 <= base.nadir_1 + 1e-9
        assert st.nadir_2 <= base.nadir_2 + 1e-9
    st = analyze(simulate(more_h), more_h)
    assert max(st.max_rocof_1, st.max_rocof_2) <= max(base.max_rocof_1, base.max_rocof_2)


def test_no_loss_means_no_deviation():
    pt = point(p_loss=0.0)
    tr = simulate(pt)
    # response still ramps in, so frequency rises; it never falls
    assert tr.df1.min() >= 0.0 and tr.df2.min() >= 0.0


def test_tie_flow_carries_support_towards_the_fault():
    tr = simulate(point(faulted_region=1))
    assert tr.tie_flow[200] < 0  # flow positive from 1 to 2, so help arrives as negative
    tr = simulate(point(faulted_region=2))
    assert tr.tie_flow[200] > 0


def test_determinism():
    a = simulate(point())
    b = simulate(point())
    assert np.array_equal(a.df1, b.df1) and np.array_equal(a.tie_flow, b.tie_flow)


@pytest.mark.parametrize("bad", [dict(h1=0.0), dict(r2=-1.0), dict(p_loss=-5.0),
                                 dict(faulted_region=3), dict(x12=0.0), dict(d1=0.5)])
def test_invalid_points_rejected(bad):
    with pytest.raises(ValueError):
        point(**bad)


def test_sim_params_validation():
    with pytest.raises(ValueError):
        SimParams(dt=0.0)
    with pytest.raises(ValueError):
        SimParams(horizon=5.0, t_del=10.0)
    with pytest.raises(ValueError):
        SimParams(dt=0.7, horizon=30.0)


def test_divergence_is_reported():
    # an absurd step makes explicit RK4 blow up
    pt = point(h1=1e-3, h2=1e-3)
    with pytest.raises(SimulationError, match="non-finite"):
        simulate(pt, SimParams(dt=0.5, horizon=30.0))


def test_trace_csv_round_trip(tmp_path):
    tr = simulate(point(), SimParams(dt=0.01, horizon=1.0, t_del=0.5))
    path = tmp_path / "trace.csv"
    write_trace_csv(tr, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "df1", "df2", "tie_flow", "df_coi"]
    assert len(rows) == len(tr) + 1
    assert float(rows[-1][1]) == tr.df1[-1]


def test_threshold_rejects_bad_input():
    with pytest.raises(ValueError):
        coi_nadir_threshold(1_800.0, 50.0, 10.0, 0.0)
