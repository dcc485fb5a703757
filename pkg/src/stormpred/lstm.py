"""Stacked LSTM with per-sequence variational dropout and exact BPTT.

Two LSTM layers feed a linear head that regresses normalized (lat, lon).
Dropout uses one Bernoulli keep-mask per sequence pass for each layer's
input connections and another for its recurrent connections; the same
vectors are applied at every timestep. Retained units are scaled by
1/(1 - p) (inverted dropout), so p = 0 with all-ones masks is exactly the
undropped network.

Cell equations, with x~ the masked input and h~ the masked previous hidden
state:

    z = U x~ + W h~ + b           (gates stacked as i, f, g, o)
    i = sigmoid(z_i)   f = sigmoid(z_f)
    g = tanh(z_g)      o = sigmoid(z_o)
    c' = f * c + i * g
    h' = o * tanh(c')

The sequence-level loops live in :mod:`stormpred.kernels`; this module owns
parameter containers, mask sampling, the output head, and the analytic
gradients' finite-difference check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ValidationError


@dataclass
class LayerParams:
    """Weights of one LSTM layer; gate rows stacked in i, f, g, o order."""

    u: np.ndarray  # input weights, [4H x n_in]
    w: np.ndarray  # recurrent weights, [4H x H]
    b: np.ndarray  # bias, [4H]

    @property
    def n_in(self) -> int:
        return self.u.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.w.shape[1]


@dataclass
class ModelParams:
    layer1: LayerParams
    layer2: LayerParams
    v: np.ndarray      # output head weights, [n_y x n_h2]
    b_out: np.ndarray  # output head bias, [n_y]

    @property
    def n_x(self) -> int:
        return self.layer1.n_in

    @property
    def n_y(self) -> int:
        return self.v.shape[0]


@dataclass
class Gradients:
    """Loss gradients, shape-congruent with ModelParams."""

    layer1: LayerParams
    layer2: LayerParams
    v: np.ndarray
    b_out: np.ndarray


def param_blocks(p: ModelParams | Gradients) -> list[tuple[str, np.ndarray]]:
    """Named parameter arrays in a fixed order shared by params and grads."""
    return [
        ("layer1.u", p.layer1.u),
        ("layer1.w", p.layer1.w),
        ("layer1.b", p.layer1.b),
        ("layer2.u", p.layer2.u),
        ("layer2.w", p.layer2.w),
        ("layer2.b", p.layer2.b),
        ("v", p.v),
        ("b_out", p.b_out),
    ]


def params_from_blocks(blocks: dict[str, np.ndarray]) -> ModelParams:
    """Rebuild a ModelParams from the named arrays of :func:`param_blocks`."""
    return ModelParams(
        layer1=LayerParams(blocks["layer1.u"], blocks["layer1.w"], blocks["layer1.b"]),
        layer2=LayerParams(blocks["layer2.u"], blocks["layer2.w"], blocks["layer2.b"]),
        v=blocks["v"], b_out=blocks["b_out"])


def zero_gradients(params: ModelParams) -> Gradients:
    return Gradients(
        layer1=LayerParams(np.zeros_like(params.layer1.u),
                           np.zeros_like(params.layer1.w),
                           np.zeros_like(params.layer1.b)),
        layer2=LayerParams(np.zeros_like(params.layer2.u),
                           np.zeros_like(params.layer2.w),
                           np.zeros_like(params.layer2.b)),
        v=np.zeros_like(params.v), b_out=np.zeros_like(params.b_out))


@dataclass
class LayerMasks:
    """Per-sequence keep-masks (0/1) for one layer, constant across timesteps."""

    input_keep: np.ndarray      # [n_in]
    recurrent_keep: np.ndarray  # [H]
    p_input: float
    p_recurrent: float

    def scaled(self) -> tuple[np.ndarray, np.ndarray]:
        """Masks pre-divided by the keep probability (inverted dropout)."""
        return (self.input_keep / (1.0 - self.p_input),
                self.recurrent_keep / (1.0 - self.p_recurrent))


@dataclass
class DropoutMasks:
    layer1: LayerMasks
    layer2: LayerMasks

    @property
    def p_input(self) -> float:
        return self.layer1.p_input

    @property
    def p_recurrent(self) -> float:
        return self.layer1.p_recurrent


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, n_hidden: int) -> "CellState":
        return cls(h=np.zeros(n_hidden), c=np.zeros(n_hidden))


def init_params(seed: int, n_x: int = 6, n_h1: int = 32, n_h2: int = 16,
                n_y: int = 2) -> ModelParams:
    """Deterministic Glorot-uniform init; forget-gate biases start at 1.0.

    Each matrix is drawn uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)),
    fan_in the column count and fan_out the row count. All other biases are 0.
    """
    rng = np.random.default_rng(seed)

    def glorot(rows, cols):
        a = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-a, a, size=(rows, cols))

    def layer(n_in, nh):
        b = np.zeros(4 * nh)
        b[nh:2 * nh] = 1.0
        return LayerParams(u=glorot(4 * nh, n_in), w=glorot(4 * nh, nh), b=b)

    l1 = layer(n_x, n_h1)
    l2 = layer(n_h1, n_h2)
    v = glorot(n_y, n_h2)
    return ModelParams(layer1=l1, layer2=l2, v=v, b_out=np.zeros(n_y))


def sample_masks(rng: np.random.Generator, p_input: float, p_recurrent: float,
                 params: ModelParams) -> DropoutMasks:
    """Draw fresh Bernoulli keep-masks for one sequence pass.

    Each entry is independently 1 with probability 1 - p. Raises for p
    outside [0, 1): p = 1 would zero out the whole network.
    """
    for name, p in (("p_input", p_input), ("p_recurrent", p_recurrent)):
        if not 0.0 <= p < 1.0:
            raise ValidationError(f"{name} must be in [0, 1), got {p}")

    def draw(n, p):
        return (rng.random(n) >= p).astype(np.float64)

    l1 = LayerMasks(input_keep=draw(params.layer1.n_in, p_input),
                    recurrent_keep=draw(params.layer1.n_hidden, p_recurrent),
                    p_input=p_input, p_recurrent=p_recurrent)
    l2 = LayerMasks(input_keep=draw(params.layer2.n_in, p_input),
                    recurrent_keep=draw(params.layer2.n_hidden, p_recurrent),
                    p_input=p_input, p_recurrent=p_recurrent)
    return DropoutMasks(layer1=l1, layer2=l2)


def ones_masks(params: ModelParams) -> DropoutMasks:
    """All-ones masks with p = 0: dropout switched off."""
    def ones(n_in, nh):
        return LayerMasks(input_keep=np.ones(n_in), recurrent_keep=np.ones(nh),
                          p_input=0.0, p_recurrent=0.0)
    return DropoutMasks(layer1=ones(params.layer1.n_in, params.layer1.n_hidden),
                        layer2=ones(params.layer2.n_in, params.layer2.n_hidden))


def lstm_cell_forward(x: np.ndarray, state: CellState, params: LayerParams,
                      masks: LayerMasks) -> CellState:
    """One timestep of one layer; the straight-line form of the cell equations."""
    sm_in, sm_rec = masks.scaled()
    xm = x * sm_in
    hm = state.h * sm_rec
    nh = params.n_hidden
    z = params.u @ xm + params.w @ hm + params.b
    gi = 1.0 / (1.0 + np.exp(-z[:nh]))
    gf = 1.0 / (1.0 + np.exp(-z[nh:2 * nh]))
    gg = np.tanh(z[2 * nh:3 * nh])
    go = 1.0 / (1.0 + np.exp(-z[3 * nh:]))
    c = gf * state.c + gi * gg
    h = go * np.tanh(c)
    return CellState(h=h, c=c)


def _as_input_matrix(sample) -> np.ndarray:
    """Accept a Sample or a raw [T x n_x] array."""
    xs = getattr(sample, "input", sample)
    return np.ascontiguousarray(np.asarray(xs, dtype=np.float64))


def forward(sample, params: ModelParams, masks: DropoutMasks) -> np.ndarray:
    """Run both layers over the whole sequence; linear head on the last h."""
    xs = _as_input_matrix(sample)
    sm1i, sm1r = masks.layer1.scaled()
    sm2i, sm2r = masks.layer2.scaled()
    hs1 = kernels.lstm_layer_forward(xs, params.layer1.u, params.layer1.w,
                                     params.layer1.b, sm1i, sm1r)[0]
    hs2 = kernels.lstm_layer_forward(hs1, params.layer2.u, params.layer2.w,
                                     params.layer2.b, sm2i, sm2r)[0]
    h_last = hs2[-1] if hs2.shape[0] > 0 else np.zeros(params.layer2.n_hidden)
    return params.v @ h_last + params.b_out


def forward_instrumented(sample, params: ModelParams, masks: DropoutMasks):
    """Stepwise reference forward that snapshots the masks applied at each t.

    Returns (yhat, record) where record maps mask names to per-timestep
    copies taken at the moment of application. Used to verify that one
    sequence pass applies identical mask vectors at every timestep.
    """
    xs = _as_input_matrix(sample)
    record = {"layer1_input": [], "layer1_recurrent": [],
              "layer2_input": [], "layer2_recurrent": []}
    s1 = CellState.zeros(params.layer1.n_hidden)
    s2 = CellState.zeros(params.layer2.n_hidden)
    for t in range(xs.shape[0]):
        record["layer1_input"].append(masks.layer1.input_keep.copy())
        record["layer1_recurrent"].append(masks.layer1.recurrent_keep.copy())
        s1 = lstm_cell_forward(xs[t], s1, params.layer1, masks.layer1)
        record["layer2_input"].append(masks.layer2.input_keep.copy())
        record["layer2_recurrent"].append(masks.layer2.recurrent_keep.copy())
        s2 = lstm_cell_forward(s1.h, s2, params.layer2, masks.layer2)
    yhat = params.v @ s2.h + params.b_out
    return yhat, record


def backward(sample, label, params: ModelParams,
             masks: DropoutMasks) -> tuple[float, Gradients]:
    """Loss and exact gradients for one sample, masks held fixed.

    Loss is the mean over output components of the squared error, so
    dL/dyhat = 2 (yhat - y) / n_y.
    """
    xs = _as_input_matrix(sample)
    y = np.asarray(label, dtype=np.float64)
    sm1i, sm1r = masks.layer1.scaled()
    sm2i, sm2r = masks.layer2.scaled()
    p1, p2 = params.layer1, params.layer2

    hs1, cs1, acts1, xms1, hms1 = kernels.lstm_layer_forward(
        xs, p1.u, p1.w, p1.b, sm1i, sm1r)
    hs2, cs2, acts2, xms2, hms2 = kernels.lstm_layer_forward(
        hs1, p2.u, p2.w, p2.b, sm2i, sm2r)

    steps = xs.shape[0]
    h_last = hs2[-1] if steps > 0 else np.zeros(p2.n_hidden)
    yhat = params.v @ h_last + params.b_out
    r = yhat - y
    loss = float(np.mean(r * r))
    dy = 2.0 * r / params.n_y

    dv = np.outer(dy, h_last)
    db_out = dy.copy()
    if steps == 0:
        zero1 = LayerParams(np.zeros_like(p1.u), np.zeros_like(p1.w), np.zeros_like(p1.b))
        zero2 = LayerParams(np.zeros_like(p2.u), np.zeros_like(p2.w), np.zeros_like(p2.b))
        return loss, Gradients(zero1, zero2, dv, db_out)

    dhs2 = np.zeros_like(hs2)
    dhs2[-1] = params.v.T @ dy
    du2, dw2, db2, dh1s = kernels.lstm_layer_backward(
        dhs2, p2.u, p2.w, acts2, cs2, xms2, hms2, sm2i, sm2r)
    du1, dw1, db1, _ = kernels.lstm_layer_backward(
        dh1s, p1.u, p1.w, acts1, cs1, xms1, hms1, sm1i, sm1r)

    grads = Gradients(layer1=LayerParams(du1, dw1, db1),
                      layer2=LayerParams(du2, dw2, db2),
                      v=dv, b_out=db_out)
    return loss, grads


@dataclass
class GradCheckReport:
    block_errors: dict[str, float]
    worst: float
    tolerance: float
    passed: bool


def grad_check(seed: int, tolerance: float = 1e-4, p_input: float = 0.0,
               p_recurrent: float = 0.0, eps: float = 1e-5) -> GradCheckReport:
    """Compare analytic BPTT with central finite differences on a tiny net.

    Builds a 2-feature network with hidden sizes 3 and 2, a length-4 random
    sequence, and fixed masks sampled at the given dropout rates. Relative
    error per component uses a 1e-4 denominator floor so near-zero gradients
    compare on an absolute scale.
    """
    rng = np.random.default_rng(seed)
    params = init_params(seed, n_x=2, n_h1=3, n_h2=2, n_y=2)
    masks = sample_masks(rng, p_input, p_recurrent, params)
    xs = rng.uniform(0.0, 1.0, size=(4, 2))
    label = rng.uniform(0.0, 1.0, size=2)

    _, grads = backward(xs, label, params, masks)

    def loss_at() -> float:
        yhat = forward(xs, params, masks)
        r = yhat - label
        return float(np.mean(r * r))

    block_errors: dict[str, float] = {}
    for (name, theta), (_, g) in zip(param_blocks(params), param_blocks(grads)):
        worst = 0.0
        flat_theta = theta.reshape(-1)
        flat_g = g.reshape(-1)
        for k in range(flat_theta.size):
            orig = flat_theta[k]
            flat_theta[k] = orig + eps
            lp = loss_at()
            flat_theta[k] = orig - eps
            lm = loss_at()
            flat_theta[k] = orig
            fd = (lp - lm) / (2.0 * eps)
            denom = max(abs(flat_g[k]), abs(fd), 1e-4)
            worst = max(worst, abs(flat_g[k] - fd) / denom)
        block_errors[name] = worst
    worst_overall = max(block_errors.values())
    return GradCheckReport(block_errors=block_errors, worst=worst_overall,
                           tolerance=tolerance, passed=worst_overall <= tolerance)
