"""From-scratch neural core: projection, LSTM cell, regression head.

Float64 throughout. The network is, per timestep j:

    embed_j = relu(Wp @ z_j + bp)            (optionally dropped out)
    gates   = Wx @ embed_j + Wh @ h_{j-1} + b
    i, f, g, o = sigmoid/tanh blocks of the gate vector (order: i, f, g, o)
    c_j = f * c_{j-1} + i * g
    h_j = o * tanh(c_j)
    act_j = relu(Wm @ h_j + bm)              (optionally dropped out)
    yhat_j = Wo @ act_j + bo                 (raw real, no squashing)

Initial state h_0 = c_0 = 0. Dropout uses inverted scaling (kept activations
divided by ``1 - rate``) and is applied only at the two marked sites, never
inside the recurrence. ``backward`` computes exact reverse-mode gradients of
the mean-squared per-step loss via backpropagation through time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatchError, TraceMismatchError
from .util import seeded_rng

PARAM_ORDER = (
    "projection_w",
    "projection_b",
    "lstm_input_w",
    "lstm_recurrent_w",
    "lstm_b",
    "head_hidden_w",
    "head_hidden_b",
    "head_out_w",
    "head_out_b",
)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign to avoid overflow in exp.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(eq=False)
class LinearLayer:
    """Dense layer parameters: ``weight`` is (out, in), ``bias`` is (out,)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimMismatchError("linear layer weight/bias shapes disagree")

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    def copy(self) -> "LinearLayer":
        return LinearLayer(self.weight.copy(), self.bias.copy())


@dataclass(eq=False)
class LstmCell:
    """Single LSTM cell; gate blocks stacked in (i, f, g, o) row order."""

    input_weights: np.ndarray
    recurrent_weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.input_weights = np.asarray(self.input_weights, dtype=np.float64)
        self.recurrent_weights = np.asarray(self.recurrent_weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        four_h = self.input_weights.shape[0]
        if four_h % 4 != 0:
            raise DimMismatchError("LSTM weight rows must stack 4 gate blocks")
        h = four_h // 4
        if self.recurrent_weights.shape != (four_h, h) or self.bias.shape != (four_h,):
            raise DimMismatchError("LSTM parameter shapes disagree")

    @property
    def hidden_dim(self) -> int:
        return self.input_weights.shape[0] // 4

    @property
    def in_dim(self) -> int:
        return self.input_weights.shape[1]

    def copy(self) -> "LstmCell":
        return LstmCell(
            self.input_weights.copy(),
            self.recurrent_weights.copy(),
            self.bias.copy(),
        )


@dataclass(eq=False)
class Model:
    """Projection -> LSTM -> two-layer regression head."""

    projection: LinearLayer
    lstm: LstmCell
    head_hidden: LinearLayer
    head_out: LinearLayer

    def __post_init__(self):
        if self.lstm.in_dim != self.projection.out_dim:
            raise DimMismatchError("projection output does not feed the LSTM input")
        if self.head_hidden.in_dim != self.lstm.hidden_dim:
            raise DimMismatchError("LSTM hidden does not feed the head")
        if self.head_out.in_dim != self.head_hidden.out_dim:
            raise DimMismatchError("head layers disagree")
        if self.head_out.out_dim != 1:
            raise DimMismatchError("output layer must produce a scalar")

    @property
    def input_dim(self) -> int:
        return self.projection.in_dim

    @property
    def embed_dim(self) -> int:
        return self.projection.out_dim

    @property
    def hidden_dim(self) -> int:
        return self.lstm.hidden_dim

    @property
    def head_dim(self) -> int:
        return self.head_hidden.out_dim

    def param_dict(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed by canonical name, in PARAM_ORDER."""
        return {
            "projection_w": self.projection.weight,
            "projection_b": self.projection.bias,
            "lstm_input_w": self.lstm.input_weights,
            "lstm_recurrent_w": self.lstm.recurrent_weights,
            "lstm_b": self.lstm.bias,
            "head_hidden_w": self.head_hidden.weight,
            "head_hidden_b": self.head_hidden.bias,
            "head_out_w": self.head_out.weight,
            "head_out_b": self.head_out.bias,
        }

    def copy(self) -> "Model":
        return Model(
            self.projection.copy(),
            self.lstm.copy(),
            self.head_hidden.copy(),
            self.head_out.copy(),
        )

    @classmethod
    def from_param_dict(cls, params: dict[str, np.ndarray]) -> "Model":
        return cls(
            projection=LinearLayer(params["projection_w"], params["projection_b"]),
            lstm=LstmCell(
                params["lstm_input_w"], params["lstm_recurrent_w"], params["lstm_b"]
            ),
            head_hidden=LinearLayer(params["head_hidden_w"], params["head_hidden_b"]),
            head_out=LinearLayer(params["head_out_w"], params["head_out_b"]),
        )


@dataclass(eq=False)
class Gradients:
    """d(loss)/d(parameter) for every tensor in a Model."""

    projection_w: np.ndarray
    projection_b: np.ndarray
    lstm_input_w: np.ndarray
    lstm_recurrent_w: np.ndarray
    lstm_b: np.ndarray
    head_hidden_w: np.ndarray
    head_hidden_b: np.ndarray
    head_out_w: np.ndarray
    head_out_b: np.ndarray

    def param_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_ORDER}


@dataclass(eq=False)
class ForwardTrace:
    """Every per-step intermediate needed to rerun the backward pass."""

    inputs: np.ndarray  # (t, D) fused features
    proj_pre: np.ndarray  # (t, e) projection pre-activation
    embed: np.ndarray  # (t, e) after relu and embedding dropout
    gate_pre: np.ndarray  # (t, 4h) stacked gate pre-activations
    gate_i: np.ndarray  # (t, h)
    gate_f: np.ndarray  # (t, h)
    gate_g: np.ndarray  # (t, h)
    gate_o: np.ndarray  # (t, h)
    cell: np.ndarray  # (t, h) c_j
    hidden: np.ndarray  # (t, h) h_j
    head_pre: np.ndarray  # (t, m) head hidden pre-activation
    head_act: np.ndarray  # (t, m) after relu and head dropout
    predictions: np.ndarray  # (t,)
    mask_embed: np.ndarray | None  # (t, e) keep mask, None when dropout is off
    mask_head: np.ndarray | None  # (t, m)
    dropout_rate: float

    @property
    def n_steps(self) -> int:
        return self.predictions.shape[0]


def init_model(seed: int, dims: dict[str, int]) -> Model:
    """Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per tensor.

    ``dims`` holds D (input), e (embedding), h (hidden), m (head). The
    forget-gate bias block is set to 1.0 after the draw; everything else
    keeps its uniform sample. Same seed, same dims -> identical model.
    """
    D, e, h, m = dims["D"], dims["e"], dims["h"], dims["m"]
    for key, value in zip("Dehm", (D, e, h, m)):
        if value < 1:
            raise DimMismatchError(f"dim {key} must be >= 1, got {value}")
    rng = seeded_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    projection = LinearLayer(uniform((e, D), D), uniform((e,), D))
    lstm = LstmCell(
        uniform((4 * h, e), e), uniform((4 * h, h), h), uniform((4 * h,), h)
    )
    lstm.bias[h : 2 * h] = 1.0
    head_hidden = LinearLayer(uniform((m, h), h), uniform((m,), h))
    head_out = LinearLayer(uniform((1, m), m), uniform((1,), m))
    return Model(projection, lstm, head_hidden, head_out)


def linear_relu(layer: LinearLayer, x: np.ndarray) -> np.ndarray:
    """max(0, W @ x + b)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (layer.in_dim,):
        raise DimMismatchError(
            f"input has shape {x.shape}, layer expects ({layer.in_dim},)"
        )
    return np.maximum(0.0, layer.weight @ x + layer.bias)


def lstm_step(
    cell: LstmCell, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One recurrence step; returns (h, c). Pure function of its inputs."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    h = cell.hidden_dim
    if x.shape != (cell.in_dim,) or h_prev.shape != (h,) or c_prev.shape != (h,):
        raise DimMismatchError("lstm_step input shapes disagree with the cell")
    pre = cell.input_weights @ x + cell.recurrent_weights @ h_prev + cell.bias
    i = _sigmoid(pre[0:h])
    f = _sigmoid(pre[h : 2 * h])
    g = np.tanh(pre[2 * h : 3 * h])
    o = _sigmoid(pre[3 * h : 4 * h])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def forward(
    model: Model,
    inputs: np.ndarray,
    dropout_rate: float = 0.0,
    mask_seed: int | None = None,
) -> ForwardTrace:
    """Run the full network over a (t, D) input matrix, recording the trace.

    Dropout is active only when ``mask_seed`` is given and the rate is
    positive; evaluation mode never touches a random generator. Masks are
    drawn once per call from the seeded generator (embedding mask first,
    then head mask) so a given (model, inputs, mask_seed) is deterministic.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != model.input_dim:
        raise DimMismatchError(
            f"inputs have shape {inputs.shape}, model expects (t, {model.input_dim})"
        )
    if not 0.0 <= dropout_rate < 1.0:
        raise DimMismatchError("dropout_rate must lie in [0, 1)")
    t = inputs.shape[0]
    e, h, m = model.embed_dim, model.hidden_dim, model.head_dim

    mask_embed = mask_head = None
    if mask_seed is not None and dropout_rate > 0.0:
        rng = seeded_rng(mask_seed)
        mask_embed = rng.random((t, e)) >= dropout_rate
        mask_head = rng.random((t, m)) >= dropout_rate
    keep_scale = 1.0 / (1.0 - dropout_rate) if mask_embed is not None else 1.0

    proj_pre = np.empty((t, e))
    embed = np.empty((t, e))
    gate_pre = np.empty((t, 4 * h))
    gate_i = np.empty((t, h))
    gate_f = np.empty((t, h))
    gate_g = np.empty((t, h))
    gate_o = np.empty((t, h))
    cell = np.empty((t, h))
    hidden = np.empty((t, h))
    head_pre = np.empty((t, m))
    head_act = np.empty((t, m))
    predictions = np.empty(t)

    Wp, bp = model.projection.weight, model.projection.bias
    Wx, Wh, b = model.lstm.input_weights, model.lstm.recurrent_weights, model.lstm.bias
    Wm, bm = model.head_hidden.weight, model.head_hidden.bias
    Wo, bo = model.head_out.weight, model.head_out.bias

    h_prev = np.zeros(h)
    c_prev = np.zeros(h)
    for j in range(t):
        proj_pre[j] = Wp @ inputs[j] + bp
        z = np.maximum(0.0, proj_pre[j])
        if mask_embed is not None:
            z = z * mask_embed[j] * keep_scale
        embed[j] = z

        pre = Wx @ z + Wh @ h_prev + b
        gate_pre[j] = pre
        gate_i[j] = _sigmoid(pre[0:h])
        gate_f[j] = _sigmoid(pre[h : 2 * h])
        gate_g[j] = np.tanh(pre[2 * h : 3 * h])
        gate_o[j] = _sigmoid(pre[3 * h : 4 * h])
        cell[j] = gate_f[j] * c_prev + gate_i[j] * gate_g[j]
        hidden[j] = gate_o[j] * np.tanh(cell[j])
        h_prev, c_prev = hidden[j], cell[j]

        head_pre[j] = Wm @ hidden[j] + bm
        act = np.maximum(0.0, head_pre[j])
        if mask_head is not None:
            act = act * mask_head[j] * keep_scale
        head_act[j] = act
        predictions[j] = Wo[0] @ act + bo[0]

    return ForwardTrace(
        inputs=inputs,
        proj_pre=proj_pre,
        embed=embed,
        gate_pre=gate_pre,
        gate_i=gate_i,
        gate_f=gate_f,
        gate_g=gate_g,
        gate_o=gate_o,
        cell=cell,
        hidden=hidden,
        head_pre=head_pre,
        head_act=head_act,
        predictions=predictions,
        mask_embed=mask_embed,
        mask_head=mask_head,
        dropout_rate=dropout_rate if mask_embed is not None else 0.0,
    )


def backward(model: Model, trace: ForwardTrace, labels: np.ndarray) -> Gradients:
    """Exact gradients of mean((y - yhat)^2) through the recorded trace.

    Reuses the trace's dropout masks, so gradients match finite differences
    of a forward pass run with the same mask seed.
    """
    labels = np.asarray(labels, dtype=np.float64)
    t = trace.n_steps
    e, h, m = model.embed_dim, model.hidden_dim, model.head_dim
    if labels.shape != (t,):
        raise TraceMismatchError(f"labels have shape {labels.shape}, trace has t={t}")
    if (
        trace.inputs.shape[1] != model.input_dim
        or trace.embed.shape[1] != e
        or trace.hidden.shape[1] != h
        or trace.head_act.shape[1] != m
    ):
        raise TraceMismatchError("trace shapes do not match this model")

    Wx, Wh = model.lstm.input_weights, model.lstm.recurrent_weights
    Wm, Wo = model.head_hidden.weight, model.head_out.weight
    keep_scale = (
        1.0 / (1.0 - trace.dropout_rate) if trace.mask_embed is not None else 1.0
    )

    d_pred = 2.0 * (trace.predictions - labels) / t

    g_proj_w = np.zeros_like(model.projection.weight)
    g_proj_b = np.zeros_like(model.projection.bias)
    g_wx = np.zeros_like(Wx)
    g_wh = np.zeros_like(Wh)
    g_b = np.zeros_like(model.lstm.bias)
    g_hid_w = np.zeros_like(Wm)
    g_hid_b = np.zeros_like(model.head_hidden.bias)
    g_out_w = np.zeros_like(Wo)
    g_out_b = np.zeros_like(model.head_out.bias)

    # Head layers and the per-step hidden-state gradient from the head path.
    d_hidden_head = np.empty((t, h))
    for j in range(t):
        g_out_w[0] += d_pred[j] * trace.head_act[j]
        g_out_b[0] += d_pred[j]
        d_act = Wo[0] * d_pred[j]
        if trace.mask_head is not None:
            d_act = d_act * trace.mask_head[j] * keep_scale
        d_head_pre = d_act * (trace.head_pre[j] > 0.0)
        g_hid_w += np.outer(d_head_pre, trace.hidden[j])
        g_hid_b += d_head_pre
        d_hidden_head[j] = Wm.T @ d_head_pre

    # Backpropagation through time.
    dh_next = np.zeros(h)
    dc_next = np.zeros(h)
    for j in range(t - 1, -1, -1):
        i, f = trace.gate_i[j], trace.gate_f[j]
        g, o = trace.gate_g[j], trace.gate_o[j]
        c_prev = trace.cell[j - 1] if j > 0 else np.zeros(h)
        h_prev = trace.hidden[j - 1] if j > 0 else np.zeros(h)
        tanh_c = np.tanh(trace.cell[j])

        dh = d_hidden_head[j] + dh_next
        do = dh * tanh_c
        dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
        di = dc * g
        df = dc * c_prev
        dg = dc * i

        d_gate = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ]
        )
        g_wx += np.outer(d_gate, trace.embed[j])
        g_wh += np.outer(d_gate, h_prev)
        g_b += d_gate
        dh_next = Wh.T @ d_gate
        dc_next = dc * f

        d_embed = Wx.T @ d_gate
        if trace.mask_embed is not None:
            d_embed = d_embed * trace.mask_embed[j] * keep_scale
        d_proj_pre = d_embed * (trace.proj_pre[j] > 0.0)
        g_proj_w += np.outer(d_proj_pre, trace.inputs[j])
        g_proj_b += d_proj_pre

    return Gradients(
        projection_w=g_proj_w,
        projection_b=g_proj_b,
        lstm_input_w=g_wx,
        lstm_recurrent_w=g_wh,
        lstm_b=g_b,
        head_hidden_w=g_hid_w,
        head_hidden_b=g_hid_b,
        head_out_w=g_out_w,
        head_out_b=g_out_b,
    )
