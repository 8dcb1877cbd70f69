import numpy as np
import pytest

from cavcool import dynamics, model, photodetect as pd, traceio
from cavcool.dynamics import NoiseConfig, SimConfig


@pytest.fixture(scope="module")
def trajectory():
    cfg = SimConfig(dt=10e-9, duration=5e-6, record_stride=2)
    return dynamics.simulate_ensemble(cfg, model.reference_physics(), NoiseConfig(), seeds=[11])[0]


def test_trajectory_round_trip(tmp_path, trajectory):
    path = traceio.write_trajectory(tmp_path / "t.bin", trajectory, config_hash="abc")
    back = traceio.read_trajectory(path)
    for k, v in trajectory.columns.items():
        np.testing.assert_array_equal(getattr(back, k) if k != "vacuum_counts" else back.vacuum_counts, v)
    assert back.seed == trajectory.seed
    assert back.sample_period == trajectory.sample_period
    assert back.zero_point == trajectory.zero_point
    header, _ = traceio.read_header(path)
    assert header["config_hash"] == "abc"


def test_photocurrent_round_trip(tmp_path, trajectory):
    trace = pd.detect(trajectory, pd.DetectorConfig(bin_width=100e-9))
    back = traceio.read_photocurrent(traceio.write_photocurrent(tmp_path / "p.bin", trace))
    np.testing.assert_array_equal(back.counts, trace.counts)
    np.testing.assert_array_equal(back.t, trace.t)
    assert (back.bin_width, back.mode, back.seed) == (trace.bin_width, trace.mode, trace.seed)


def test_kind_mismatch(tmp_path, trajectory):
    path = traceio.write_trajectory(tmp_path / "t.bin", trajectory)
    with pytest.raises(traceio.TraceFormatError):
        traceio.read_photocurrent(path)


def test_not_a_trace_file(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"hello world, not a trace")
    with pytest.raises(traceio.TraceFormatError):
        traceio.read_header(p)


def test_truncated_data(tmp_path, trajectory):
    path = traceio.write_trajectory(tmp_path / "t.bin", trajectory)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(traceio.TraceFormatError):
        traceio.read_trajectory(path)


def test_csv_round_trip(tmp_path):
    cols = {"a": np.array([1.0, 2.5, 1e-300]), "b": np.array([np.pi, -0.0, 3e8])}
    back = traceio.read_csv(traceio.write_csv(tmp_path / "c.csv", cols))
    for k in cols:
        np.testing.assert_array_equal(back[k], cols[k])


def test_records(tmp_path):
    path = traceio.write_records(tmp_path / "r.csv", [{"x": 1.5, "y": None}, {"x": 2.0, "z": [1, 2]}])
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,z"
    assert lines[2] == '2.0,,"[1, 2]"'
