"""Cross-checks between the compiled and pure-numpy kernel flavors."""

import os
import subprocess
import sys

import numpy as np

from stormpred import kernels


def layer_inputs(seed, steps=12, n_in=6, nh=5):
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-1.0, 1.0, size=(steps, n_in))
    u = rng.normal(0.0, 0.3, size=(4 * nh, n_in))
    w = rng.normal(0.0, 0.3, size=(4 * nh, nh))
    b = rng.normal(0.0, 0.1, size=4 * nh)
    sm_in = (rng.random(n_in) >= 0.2) / 0.8
    sm_rec = (rng.random(nh) >= 0.1) / 0.9
    return xs, u, w, b, sm_in, sm_rec


def test_forward_paths_agree():
    for seed in (0, 1, 2):
        args = layer_inputs(seed)
        active = kernels.lstm_layer_forward(*args)
        plain = kernels.lstm_layer_forward_numpy(*args)
        for a, b in zip(active, plain):
            assert a.shape == b.shape
            assert np.max(np.abs(a - b)) < 1e-12


def test_backward_paths_agree():
    for seed in (3, 4, 5):
        xs, u, w, b, sm_in, sm_rec = layer_inputs(seed)
        hs, cs, acts, xms, hms = kernels.lstm_layer_forward_numpy(
            xs, u, w, b, sm_in, sm_rec)
        dhs = np.random.default_rng(seed + 100).normal(size=hs.shape)
        active = kernels.lstm_layer_backward(dhs, u, w, acts, cs, xms, hms,
                                             sm_in, sm_rec)
        plain = kernels.lstm_layer_backward_numpy(dhs, u, w, acts, cs, xms, hms,
                                                  sm_in, sm_rec)
        for a, b in zip(active, plain):
            assert np.max(np.abs(a - b)) < 1e-12


def test_env_flag_forces_numpy_path():
    env = dict(os.environ, STORMPRED_NO_NUMBA="1")
    code = ("from stormpred import kernels; "
            "assert not kernels.USING_NUMBA; "
            "assert kernels.lstm_layer_forward is kernels.lstm_layer_forward_numpy; "
            "assert kernels.lstm_layer_backward is kernels.lstm_layer_backward_numpy; "
            "print('numpy path ok')")
    result = subprocess.run([sys.executable, "-c", code], env=env,
                            capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    assert "numpy path ok" in result.stdout


def test_compiled_flag_reports_numba_when_enabled():
    # in this environment numba is installed, so the default path compiles
    if os.environ.get("STORMPRED_NO_NUMBA"):
        assert not kernels.USING_NUMBA
    else:
        assert kernels.USING_NUMBA
