import numpy as np
import pytest

from regfreq.dynamics import SimParams, analyze, coi_nadir_threshold, simulate
from regfreq.sampler import (BoundaryError, SampleSet, Sample, SweepSpec, initial_point, metric,
                             qss_floor, run_sweep, walk_to_boundary)

GB_LIKE = dict(p_loss_values=(1_800.0,), h_splits=(0.3,), r_splits=(0.6,), pd_total=30_000.0)


def worst(point, target):
    st = analyze(simulate(point), point)
    if target == "rocof":
        return max(st.max_rocof_1, st.max_rocof_2)
    return max(st.nadir_1, st.nadir_2)


def test_initial_point_totals():
    spec = SweepSpec(**GB_LIKE)
    p = initial_point(1_800.0, spec)
    assert p.h_total == pytest.approx(45_000.0)
    k_star = coi_nadir_threshold(1_800.0, 50.0, 10.0, 0.8)
    assert p.r_total == pytest.approx(k_star / 45_000.0)
    assert p.r_total == pytest.approx(11_250.0)
    assert p.h1 == pytest.approx(0.3 * 45_000.0)
    assert p.r1 == pytest.approx(0.6 * 11_250.0)


def test_qss_floor_value_and_raise():
    spec = SweepSpec(**GB_LIKE)
    assert qss_floor(1_800.0, spec) == pytest.approx(1_725.0)
    # with a large explicit inertia the nadir-derived response drops below the floor
    p = initial_point(1_800.0, spec, h_total=400_000.0)
    assert 5.0625e8 / 400_000.0 < 1_725.0
    assert p.r_total == pytest.approx(1_725.0)


def test_initial_point_damping_split():
    spec = SweepSpec(**{**GB_LIKE, "d_splits": (0.7,)})
    p = initial_point(1_800.0, spec)
    assert p.dpd1 + p.dpd2 == pytest.approx(0.005 * 30_000.0)
    assert p.dpd1 == pytest.approx(0.7 * 150.0)


def test_degenerate_parameters_rejected():
    spec = SweepSpec(**GB_LIKE)
    with pytest.raises(BoundaryError, match="degenerate"):
        initial_point(0.0, spec)
    with pytest.raises(BoundaryError, match="without inertia"):
        initial_point(1_800.0, spec, h_split=1.0)


@pytest.mark.parametrize("bad", [dict(p_loss_values=()), dict(h_splits=(1.2,)),
                                 dict(boundary_tol=0.0), dict(h_increment=-1.0),
                                 dict(target="oscillation"), dict(band=(1.0,))])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        SweepSpec(**{**GB_LIKE, **bad})


def test_walk_from_a_violating_point_lands_on_the_boundary():
    spec = SweepSpec(**GB_LIKE, boundary_tol=0.005)
    p0 = initial_point(1_800.0, spec)
    assert worst(p0, "rocof") > 1.2  # the non-faulted share is small, so it binds hard
    trail = []
    pb = walk_to_boundary(p0, spec, trail=trail)
    m = worst(pb, "rocof")
    assert 1.0 - spec.boundary_tol <= m <= 1.0
    assert pb.h1 / pb.h_total == pytest.approx(0.3)
    # the coarse walk only ever adds inertia, and the metric falls as it does
    coarse = [(t, v) for t, v in trail if v > 1.0]
    assert all(b[0] > a[0] and b[1] <= a[1] for a, b in zip(coarse, coarse[1:]))


def test_walk_with_one_percent_increment():
    spec = SweepSpec(**{**GB_LIKE, "h_splits": (0.5,)}, boundary_tol=0.002)
    pb = walk_to_boundary(initial_point(1_800.0, spec), spec)
    # shed inertia from the boundary until the point violates by roughly 0.3 Hz/s
    scale = 1.0
    while worst(pb.with_(h1=pb.h1 * scale, h2=pb.h2 * scale), "rocof") < 1.25:
        scale -= 0.01
    p0 = pb.with_(h1=pb.h1 * scale, h2=pb.h2 * scale)
    assert 1.25 <= worst(p0, "rocof") < 1.5
    spec = SweepSpec(**{**GB_LIKE, "h_splits": (0.5,)}, boundary_tol=0.002,
                     h_increment=0.01 * p0.h_total)
    pb2 = walk_to_boundary(p0, spec)
    assert 1.0 - 0.002 <= worst(pb2, "rocof") <= 1.0


def test_point_already_on_the_boundary_is_returned_unchanged():
    spec = SweepSpec(**GB_LIKE)
    pb = walk_to_boundary(initial_point(1_800.0, spec), spec)
    trail = []
    again = walk_to_boundary(pb, spec, trail=trail)
    assert again == pb and len(trail) == 1


def test_walk_from_the_secure_side_and_for_nadir():
    spec = SweepSpec(**GB_LIKE, target="nadir", h_totals=(90_000.0,), r_increment=250.0)
    p0 = initial_point(1_800.0, spec, h_total=90_000.0, r_total=9_000.0)
    assert worst(p0, "nadir") < 0.7
    pb = walk_to_boundary(p0, spec)
    assert 0.8 - spec.boundary_tol <= worst(pb, "nadir") <= 0.8
    assert pb.h_total == pytest.approx(90_000.0)


def test_unreachable_boundary_is_an_error():
    # so much inertia that even the quasi-steady-state floor keeps the nadir low
    spec = SweepSpec(**GB_LIKE, target="nadir")
    p0 = initial_point(1_800.0, spec, h_total=900_000.0, r_total=3_000.0)
    with pytest.raises(BoundaryError, match="unreachable"):
        walk_to_boundary(p0, spec)


def test_iteration_cap():
    spec = SweepSpec(**GB_LIKE, h_increment=1.0, max_iter=5)
    with pytest.raises(BoundaryError, match="iteration cap"):
        walk_to_boundary(initial_point(1_800.0, spec), spec)


def test_single_point_sweep_gives_one_sample_per_region():
    spec = SweepSpec(**GB_LIKE)
    ss = run_sweep(spec)
    assert len(ss) == 2 and sorted(s.region for s in ss.samples) == [1, 2]
    assert not ss.failures


def test_sweep_counts_boundary_membership_and_band():
    spec = SweepSpec(p_loss_values=(1_200.0, 1_800.0), h_splits=(0.25, 0.4), r_splits=(0.5,),
                     pd_totals=(20_000.0, 45_000.0), band=(0.98, 1.05))
    ss = run_sweep(spec)
    assert len(ss.points) == 8 and not ss.failures
    assert len(ss) == 8 * 3 * 2  # boundary point plus two band points, per region
    assert len(ss.for_region(1, boundary_only=True)) == 8
    for p in ss.points:
        m, _ = metric(p, spec, ss.params)
        assert spec.limit - spec.boundary_tol <= m <= spec.limit
    for s in ss.samples:
        assert s.features.shape == (8,) and s.features[-1] == 1.0 and s.label >= 0
    # the feature grid spans every requested split
    shares = {round(p.h1 / p.h_total, 9) for p in ss.points}
    assert shares == {0.25, 0.4}


def test_rocof_labels_are_oscillation_terms():
    ss = run_sweep(SweepSpec(**GB_LIKE))
    p = ss.points[0]
    st = analyze(simulate(p), p)
    coi = p.p_loss * p.f0 / (2 * p.h_total)
    labels = {s.region: s.label for s in ss.samples}
    assert labels[1] == pytest.approx(max(0.0, st.max_rocof_1 - coi))
    assert labels[2] == pytest.approx(st.max_rocof_2 - coi)


def test_failures_are_reported_not_fatal():
    spec = SweepSpec(p_loss_values=(1_800.0,), target="nadir", h_totals=(90_000.0, 900_000.0),
                     r_totals=(3_000.0,), h_splits=(0.5,), r_splits=(0.5,))
    ss = run_sweep(spec)
    assert len(ss.points) == 1
    assert len(ss.failures) == 1 and ss.failures[0]["h_total"] == 900_000.0
    assert "unreachable" in ss.failures[0]["error"]


def test_determinism_and_round_trip(tmp_path):
    spec = SweepSpec(p_loss_values=(1_500.0,), h_splits=(0.3, 0.5), r_splits=(0.4,))
    a = run_sweep(spec, SimParams(dt=2e-3))
    b = run_sweep(spec, SimParams(dt=2e-3))
    a.write(tmp_path / "a.csv")
    b.write(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == "region,h1,h2,p_loss,dpd1,dpd2,r1,r2,label"
    back = SampleSet.read(tmp_path / "a.csv")
    X, y = back.matrix(2)
    X0, y0 = a.matrix(2)
    np.testing.assert_array_equal(X, X0)
    np.testing.assert_array_equal(y, y0)
    assert back.spec == spec and back.params == SimParams(dt=2e-3)
    assert back.points == a.points


def test_sample_validation():
    with pytest.raises(ValueError):
        Sample(np.ones(7), 0.1, 1)
    with pytest.raises(ValueError):
        Sample(np.r_[np.ones(7), 0.0], 0.1, 1)
    with pytest.raises(ValueError):
        Sample(np.ones(8), -0.1, 1)


def test_parallel_sweep_matches_serial():
    spec = SweepSpec(p_loss_values=(1_500.0, 1_800.0), h_splits=(0.3,), r_splits=(0.5,))
    serial = run_sweep(spec)
    parallel = run_sweep(spec, workers=2)
    np.testing.assert_array_equal(serial.matrix(1)[0], parallel.matrix(1)[0])
    np.testing.assert_array_equal(serial.matrix(1)[1], parallel.matrix(1)[1])
