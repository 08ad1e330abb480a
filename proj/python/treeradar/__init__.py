"""Stand-off radar trunk inspection: simulation, clutter suppression and
defect classification. Thin wrapper over the compiled ``_treeradar`` core."""

import json

import numpy as np

from . import _treeradar as _core
from ._treeradar import (
    BScan,
    DegenerateInput,
    Error,
    FormatError,
    InvalidArgument,
    NoSurfaceClutter,
    NonFiniteError,
    NonHyperbolicCluster,
    read_bscan,
    write_bscan,
)

DEFAULT_GRID = {"f_lo_hz": 0.5e9, "f_hi_hz": 4.0e9, "n_points": 701}


def _dump(obj):
    return "" if obj is None else json.dumps(obj)


def band_to_time(values, grid=None, oversample=4):
    """Real A-scan of a sweep sampled on ``grid`` (default 0.5-4 GHz, 701 points)."""
    return np.asarray(_core.band_to_time(list(np.asarray(values, dtype=complex)), _dump(grid), oversample))


def time_to_band(trace, dt, t0=0.0, grid=None):
    return np.asarray(_core.time_to_band(np.asarray(trace, dtype=float), dt, t0, _dump(grid)))


def sample_scenes(n_trunks, defective_fraction=0.5, seed=0):
    return [(tid, json.loads(s)) for tid, s in _core.sample_scenes(n_trunks, defective_fraction, seed)]


def simulate(scene, spec=None):
    """Returns (raw BScan, reference trace, ground truth dict)."""
    raw, reference, truth = _core.simulate(json.dumps(scene), _dump(spec))
    return raw, np.asarray(reference), json.loads(truth)


def process(raw, reference, grid=None, config=None, truth=None):
    """Runs the pipeline; returns (processed BScan, report dict)."""
    out, report = _core.process(raw, np.asarray(reference, dtype=float), _dump(grid), _dump(config), _dump(truth))
    return out, json.loads(report)


def metrics(counts):
    """Macro metrics of a 2x2 confusion matrix, rows actual, columns predicted, healthy first."""
    return json.loads(_core.metrics([[int(v) for v in row] for row in counts]))


class MLFFNet:
    def __init__(self, config=None, seed=0):
        self._net = _core.MLFFNet(_dump(config), seed)

    @property
    def config(self):
        return json.loads(self._net.config_json())

    def forward(self, x):
        """Logits [N, 1] for a batch [N, C, H, W] in inference mode."""
        return self._net.forward(np.asarray(x, dtype=float))

    def predict_proba(self, x):
        return np.asarray(self._net.predict_proba(np.asarray(x, dtype=float)))

    def state(self):
        return dict(self._net.state())

    def load_state(self, state):
        self._net.load_state(list(state.items()))

    def save(self, path):
        self._net.save(str(path))

    def load(self, path):
        self._net.load(str(path))


def run_cli(*args):
    """Runs a ``treeradar`` subcommand in-process; returns (exit code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])


__all__ = [
    "BScan", "MLFFNet", "band_to_time", "time_to_band", "sample_scenes", "simulate", "process", "metrics",
    "read_bscan", "write_bscan", "run_cli", "Error", "InvalidArgument", "FormatError", "DegenerateInput",
    "NoSurfaceClutter", "NonHyperbolicCluster", "NonFiniteError",
]
