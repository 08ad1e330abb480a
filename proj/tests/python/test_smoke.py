import json

import numpy as np
import pytest

import treeradar as tr


def test_transform_round_trip():
    rng = np.random.default_rng(0)
    spec = rng.normal(size=701) + 1j * rng.normal(size=701)
    x = tr.band_to_time(spec)
    assert x.shape == (6400,)
    back = tr.time_to_band(x, dt=1.0 / (2 * 4e9 * 4))
    assert np.max(np.abs(back - spec)) <= 1e-9 * np.max(np.abs(spec))


def test_simulate_process_scnr_staging():
    scenes = tr.sample_scenes(2, 0.0, 0)
    tid, scene = scenes[0]
    raw, ref, truth = tr.simulate(scene)
    assert raw.n_traces == 51
    assert truth["label"] == "healthy"
    out, report = tr.process(raw, ref, truth=truth)
    s = report["scnr_db"]
    assert s["raw"] < s["fsr"] < s["gated"] <= s["fir"]
    assert not report["gate_fallback"]
    assert out.data.shape == raw.data.shape


def test_bscan_bytes_round_trip(tmp_path):
    data = np.arange(12, dtype=float).reshape(4, 3)
    b = tr.BScan(data, dt=1e-11)
    again = tr.BScan.from_bytes(b.to_bytes())
    assert again.to_bytes() == b.to_bytes()
    np.testing.assert_array_equal(again.data, data)
    tr.write_bscan(str(tmp_path / "x.bscn"), b)
    assert tr.read_bscan(str(tmp_path / "x.bscn")).to_bytes() == b.to_bytes()
    with pytest.raises(tr.FormatError):
        tr.BScan.from_bytes(b"BSCN1\n\x00")


def test_metrics_example():
    m = tr.metrics([[144, 0], [9, 135]])
    assert [round(100 * m[k], 2) for k in ("acc", "prec", "rec", "f1")] == [96.88, 97.06, 96.88, 96.87]


def test_net_forward_and_state(tmp_path):
    cfg = {"in_channels": 2, "input_hw": [16, 16], "width_scale": 1 / 32, "cam_reduction": 2}
    net = tr.MLFFNet(cfg, seed=1)
    x = np.random.default_rng(1).normal(size=(3, 2, 16, 16))
    logits = net.forward(x)
    assert logits.shape == (3, 1)
    p = net.predict_proba(x)
    assert np.allclose(p, 1 / (1 + np.exp(-logits[:, 0])))
    net.save(tmp_path / "w.mlfw")
    other = tr.MLFFNet(cfg, seed=2)
    other.load(tmp_path / "w.mlfw")
    assert np.allclose(other.forward(x), logits, atol=1e-5)
    with pytest.raises(tr.InvalidArgument):
        net.forward(np.zeros((1, 3, 16, 16)))


def test_cli_in_process(tmp_path):
    code, out, _ = tr.run_cli("simulate", "--out", tmp_path / "ds", "--n", "2")
    assert code == 0 and json.loads(out)["scans"] == 2
    code, _, err = tr.run_cli("process", "--input", tmp_path / "missing.bscn", "--skip-fsr")
    assert code == 1 and err
