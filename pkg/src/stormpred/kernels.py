"""Hot numeric kernels: the per-sequence LSTM recurrence and its backward pass.

Every kernel is written once as a plain numpy function and, when numba is
available, compiled with ``@njit``. The compiled flavor is bound to the
public name; the uncompiled original stays importable with a ``_numpy``
suffix so the two paths can be benchmarked and cross-checked against each
other. Set ``STORMPRED_NO_NUMBA=1`` in the environment to skip compilation
and run the pure numpy path everywhere.

Layout conventions shared by both paths:
  - gate weights are stacked row-wise in the order (input, forget, cell,
    output), so ``u`` is [4H x n_in], ``w`` is [4H x H], ``b`` is [4H];
  - ``sm_in`` / ``sm_rec`` are dropout keep-masks already scaled by
    1/(1 - p), applied to the layer input and the previous hidden state at
    every timestep of the sequence (the masks never change within a pass).
"""

import os

import numpy as np

_ENV_FLAG = "STORMPRED_NO_NUMBA"


def _numba_disabled() -> bool:
    return os.environ.get(_ENV_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


def _lstm_layer_forward(xs, u, w, b, sm_in, sm_rec):
    """Run one LSTM layer over a full sequence with fixed dropout masks.

    xs: [T x n_in] inputs. Returns (hs, cs, acts, xms, hms) where hs/cs are
    the [T x H] hidden and cell states, acts the [T x 4H] post-activation
    gates, and xms/hms the masked inputs and masked previous hidden states
    that the backward pass needs.
    """
    steps = xs.shape[0]
    n_in = xs.shape[1]
    nh = w.shape[1]
    hs = np.zeros((steps, nh))
    cs = np.zeros((steps, nh))
    acts = np.zeros((steps, 4 * nh))
    xms = np.zeros((steps, n_in))
    hms = np.zeros((steps, nh))
    h = np.zeros(nh)
    c = np.zeros(nh)
    for t in range(steps):
        xm = xs[t] * sm_in
        hm = h * sm_rec
        z = u @ xm + w @ hm + b
        gi = 1.0 / (1.0 + np.exp(-z[:nh]))
        gf = 1.0 / (1.0 + np.exp(-z[nh:2 * nh]))
        gg = np.tanh(z[2 * nh:3 * nh])
        go = 1.0 / (1.0 + np.exp(-z[3 * nh:]))
        c = gf * c + gi * gg
        h = go * np.tanh(c)
        xms[t] = xm
        hms[t] = hm
        acts[t, :nh] = gi
        acts[t, nh:2 * nh] = gf
        acts[t, 2 * nh:3 * nh] = gg
        acts[t, 3 * nh:] = go
        cs[t] = c
        hs[t] = h
    return hs, cs, acts, xms, hms


def _lstm_layer_backward(dhs, u, w, acts, cs, xms, hms, sm_in, sm_rec):
    """Backpropagate through one LSTM layer over the whole sequence.

    dhs: [T x H] loss gradient arriving at each h_t from outside the layer's
    own recurrence (output head and/or the layer above). Returns
    (du, dw, db, dxs) with dxs the [T x n_in] gradient w.r.t. the raw
    (pre-mask) layer inputs.
    """
    steps = dhs.shape[0]
    n_in = u.shape[1]
    nh = w.shape[1]
    du = np.zeros((4 * nh, n_in))
    dw = np.zeros((4 * nh, nh))
    db = np.zeros(4 * nh)
    dxs = np.zeros((steps, n_in))
    ut = np.ascontiguousarray(u.T)
    wt = np.ascontiguousarray(w.T)
    dh = np.zeros(nh)
    dc = np.zeros(nh)
    dz = np.zeros(4 * nh)
    for t in range(steps - 1, -1, -1):
        dht = dhs[t] + dh
        gi = acts[t, :nh]
        gf = acts[t, nh:2 * nh]
        gg = acts[t, 2 * nh:3 * nh]
        go = acts[t, 3 * nh:]
        tc = np.tanh(cs[t])
        dgo = dht * tc
        dc = dc + dht * go * (1.0 - tc * tc)
        if t > 0:
            cprev = cs[t - 1]
        else:
            cprev = np.zeros(nh)
        dgf = dc * cprev
        dgi = dc * gg
        dgg = dc * gi
        dz[:nh] = dgi * gi * (1.0 - gi)
        dz[nh:2 * nh] = dgf * gf * (1.0 - gf)
        dz[2 * nh:3 * nh] = dgg * (1.0 - gg * gg)
        dz[3 * nh:] = dgo * go * (1.0 - go)
        du += np.outer(dz, xms[t])
        dw += np.outer(dz, hms[t])
        db += dz
        dxs[t] = (ut @ dz) * sm_in
        dh = (wt @ dz) * sm_rec
        dc = dc * gf
    return du, dw, db, dxs


lstm_layer_forward_numpy = _lstm_layer_forward
lstm_layer_backward_numpy = _lstm_layer_backward

if _numba_disabled():
    USING_NUMBA = False
else:
    try:
        from numba import njit

        USING_NUMBA = True
    except ImportError:
        USING_NUMBA = False

if USING_NUMBA:
    lstm_layer_forward = njit(cache=True)(_lstm_layer_forward)
    lstm_layer_backward = njit(cache=True)(_lstm_layer_backward)
else:
    lstm_layer_forward = _lstm_layer_forward
    lstm_layer_backward = _lstm_layer_backward
