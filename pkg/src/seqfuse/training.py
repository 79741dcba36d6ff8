"""Training loop: per-step MSE, sequence chunking, Adam, model selection.

Checkpoint file format (version 1)
----------------------------------
``SQF1`` magic, a little-endian uint32 header length, a UTF-8 JSON header
(config, dims, track order with per-track dims, best devel CCC, best epoch,
and per-parameter byte offsets), then raw little-endian float64 parameter
blocks in this fixed order: projection W, projection b, lstm input W, lstm
recurrent W, lstm b, head_hidden W, head_hidden b, head_out W, head_out b.
Save/load round-trips parameters bit for bit.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    CorruptCheckpointError,
    DegenerateInputError,
    DimMismatchError,
    EmptyDatasetError,
    EmptySequenceError,
    LengthMismatchError,
    ShapeMismatchError,
    TargetMissingError,
    VersionMismatchError,
)
from .featureio import FusedSequence
from .metrics import ccc
from .nn import PARAM_ORDER, Gradients, Model, backward, forward, init_model
from .util import fmt_float, seeded_rng

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SQF1"
CHECKPOINT_VERSION = 1

# Salts separating the training loop's derived random streams.
_SHUFFLE_SALT = 1
_MASK_SALT = 2
_UINT64_MASK = (1 << 64) - 1


@dataclass
class TrainConfig:
    """All run hyperparameters; one model per target."""

    target: str
    embed_dim: int
    hidden_units: int
    head_hidden: int
    epochs: int
    seed: int
    track_order: list[str]
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    dropout_rate: float = 0.5
    max_time_step: int = 100
    patience: int = 10

    def __post_init__(self):
        if not self.target:
            raise ConfigError("target must be a nonempty name")
        for name in ("embed_dim", "hidden_units", "head_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.max_time_step < 1:
            raise ConfigError("max_time_step must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if not self.track_order:
            raise ConfigError("track_order must be nonempty")


@dataclass(eq=False)
class AdamState:
    """First/second moment accumulators mirroring the model's parameters."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_adam_state(model: Model) -> AdamState:
    params = model.param_dict()
    return AdamState(
        m={name: np.zeros_like(p) for name, p in params.items()},
        v={name: np.zeros_like(p) for name, p in params.items()},
        step=0,
    )


def mse_loss(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Mean over timesteps of the squared per-step error."""
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predictions.shape != labels.shape:
        raise LengthMismatchError(
            f"predictions {predictions.shape} vs labels {labels.shape}"
        )
    if predictions.size == 0:
        raise EmptySequenceError("mse_loss needs at least one step")
    diff = labels - predictions
    return float(np.mean(diff * diff))


def chunk(
    sequence: FusedSequence, max_time_step: int, target: str
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split one sequence into consecutive (features, labels) windows.

    Non-overlapping windows of ``max_time_step`` rows, last one possibly
    shorter, in temporal order; concatenating them reconstructs the sequence.
    """
    if max_time_step < 1:
        raise ConfigError("max_time_step must be >= 1")
    if sequence.n_frames < 1:
        raise EmptySequenceError(f"{sequence.video_id}: empty sequence")
    if target not in sequence.labels:
        raise TargetMissingError(
            f"{sequence.video_id}: no labels for target {target!r}"
        )
    labels = sequence.labels[target]
    return [
        (sequence.data[lo : lo + max_time_step], labels[lo : lo + max_time_step])
        for lo in range(0, sequence.n_frames, max_time_step)
    ]


def adam_step(
    model: Model, grads: Gradients, state: AdamState, config: TrainConfig
) -> tuple[Model, AdamState]:
    """One bias-corrected Adam update; returns a new model and state."""
    b1, b2, eps, lr = (
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
        config.learning_rate,
    )
    step = state.step + 1
    grad_dict = grads.param_dict()
    new_params, new_m, new_v = {}, {}, {}
    for name, p in model.param_dict().items():
        g = grad_dict[name]
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise ShapeMismatchError(f"gradient/state shape mismatch for {name}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**step)
        v_hat = v / (1.0 - b2**step)
        new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return Model.from_param_dict(new_params), AdamState(new_m, new_v, step)


@dataclass(eq=False)
class Checkpoint:
    """Best model parameters plus everything needed to rerun inference."""

    model: Model
    config: TrainConfig
    track_dims: tuple[tuple[str, int], ...]
    best_ccc: float
    best_epoch: int


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    devel_ccc: float


def _mask_seed(seed: int, epoch: int, chunk_index: int) -> int:
    ss = np.random.SeedSequence([seed & _UINT64_MASK, _MASK_SALT, epoch, chunk_index])
    return int(ss.generate_state(1)[0])


def _concat_ccc(model: Model, dataset: list[FusedSequence], target: str) -> float:
    """Evaluation-mode CCC over all sequences concatenated in order."""
    preds, labs = [], []
    for seq in dataset:
        trace = forward(model, seq.data)
        preds.append(trace.predictions)
        labs.append(seq.labels[target])
    try:
        return ccc(np.concatenate(preds), np.concatenate(labs))
    except DegenerateInputError:
        logger.warning("devel CCC undefined (constant equal sequences); using 0.0")
        return 0.0


def _validate_dataset(
    dataset: list[FusedSequence], target: str, input_dim: int, what: str
) -> None:
    if not dataset:
        raise EmptyDatasetError(f"{what} set is empty")
    for seq in dataset:
        if target not in seq.labels:
            raise TargetMissingError(
                f"{what} video {seq.video_id!r} lacks target {target!r}"
            )
        if seq.dim != input_dim:
            raise DimMismatchError(
                f"{what} video {seq.video_id!r} has D={seq.dim}, expected {input_dim}"
            )


def train(
    train_set: list[FusedSequence],
    devel_set: list[FusedSequence],
    config: TrainConfig,
) -> tuple[Checkpoint, list[EpochStats]]:
    """Full training run with validation-CCC model selection.

    Each epoch shuffles videos with a generator seeded from ``config.seed``,
    splits every sequence at ``max_time_step`` (LSTM state resets at chunk
    boundaries), and applies one Adam update per chunk with a fresh dropout
    mask seed derived from (seed, epoch, chunk index). After each epoch the
    devel set is scored with concatenated CCC in evaluation mode; the best
    epoch's parameters are kept. Training stops early after ``patience``
    epochs without improvement. The fresh (epoch 0) model is the initial
    best candidate, so ``epochs=0`` returns it with an empty history.
    """
    if not train_set or not devel_set:
        raise EmptyDatasetError("train and devel sets must be nonempty")
    input_dim = train_set[0].dim
    _validate_dataset(train_set, config.target, input_dim, "train")
    _validate_dataset(devel_set, config.target, input_dim, "devel")

    track_dims = train_set[0].track_dims
    if track_dims is not None:
        names = [name for name, _ in track_dims]
        if names != list(config.track_order):
            raise ConfigError(
                f"fused track order {names} does not match configured "
                f"{list(config.track_order)}"
            )
    else:
        track_dims = (("fused", input_dim),)

    model = init_model(
        config.seed,
        {
            "D": input_dim,
            "e": config.embed_dim,
            "h": config.hidden_units,
            "m": config.head_hidden,
        },
    )
    state = init_adam_state(model)
    shuffle_rng = seeded_rng(config.seed, _SHUFFLE_SALT)

    best_ccc = _concat_ccc(model, devel_set, config.target)
    best_model = model.copy()
    best_epoch = 0
    bad_epochs = 0
    history: list[EpochStats] = []

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_set))
        chunk_index = 0
        losses = []
        for vi in order:
            seq = train_set[int(vi)]
            for features, labels in chunk(seq, config.max_time_step, config.target):
                trace = forward(
                    model,
                    features,
                    dropout_rate=config.dropout_rate,
                    mask_seed=_mask_seed(config.seed, epoch, chunk_index),
                )
                losses.append(mse_loss(trace.predictions, labels))
                grads = backward(model, trace, labels)
                model, state = adam_step(model, grads, state, config)
                chunk_index += 1
        devel_ccc = _concat_ccc(model, devel_set, config.target)
        history.append(EpochStats(epoch, float(np.mean(losses)), devel_ccc))
        if devel_ccc > best_ccc:
            best_ccc = devel_ccc
            best_model = model.copy()
            best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                logger.info(
                    "early stop at epoch %d (no improvement for %d epochs)",
                    epoch,
                    config.patience,
                )
                break

    ckpt = Checkpoint(best_model, config, track_dims, best_ccc, best_epoch)
    return ckpt, history


def write_history_csv(history: list[EpochStats], path: str | Path) -> None:
    rows = ["epoch,train_loss,devel_ccc"]
    rows += [
        f"{st.epoch},{fmt_float(st.train_loss)},{fmt_float(st.devel_ccc)}"
        for st in history
    ]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# Checkpoint persistence
# ---------------------------------------------------------------------------


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Write the versioned binary checkpoint described in the module docstring."""
    params = ckpt.model.param_dict()
    specs = []
    blocks = []
    offset = 0
    for name in PARAM_ORDER:
        arr = params[name]
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        specs.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        blocks.append(raw)
        offset += len(raw)
    header = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(ckpt.config),
        "dims": {
            "D": ckpt.model.input_dim,
            "e": ckpt.model.embed_dim,
            "h": ckpt.model.hidden_dim,
            "m": ckpt.model.head_dim,
        },
        "track_dims": [[name, dim] for name, dim in ckpt.track_dims],
        "best_ccc": ckpt.best_ccc,
        "best_epoch": ckpt.best_epoch,
        "params": specs,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(b"".join(blocks))


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read and validate a checkpoint; inverse of :func:`save_checkpoint`."""
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise CorruptCheckpointError(f"{path}: file too short")
    magic = data[:4]
    if magic != CHECKPOINT_MAGIC:
        if magic[:3] == CHECKPOINT_MAGIC[:3]:
            raise VersionMismatchError(
                f"{path}: unsupported format tag {magic!r}, expected "
                f"{CHECKPOINT_MAGIC!r}"
            )
        raise CorruptCheckpointError(f"{path}: bad magic {magic!r}")
    (header_len,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + header_len:
        raise CorruptCheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpointError(f"{path}: unreadable header: {exc}") from exc
    if header.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"{path}: version {header.get('version')!r}, expected {CHECKPOINT_VERSION}"
        )

    payload = data[8 + header_len :]
    try:
        specs = header["params"]
        config = TrainConfig(**header["config"])
        track_dims = tuple((str(n), int(d)) for n, d in header["track_dims"])
        best_ccc = float(header["best_ccc"])
        best_epoch = int(header["best_epoch"])
    except (KeyError, TypeError, ValueError, ConfigError) as exc:
        raise CorruptCheckpointError(f"{path}: bad header fields: {exc}") from exc

    if [spec.get("name") for spec in specs] != list(PARAM_ORDER):
        raise CorruptCheckpointError(f"{path}: unexpected parameter list")
    params = {}
    total = 0
    for spec in specs:
        shape = tuple(int(s) for s in spec["shape"])
        offset, nbytes = int(spec["offset"]), int(spec["nbytes"])
        count = int(np.prod(shape)) if shape else 1
        if nbytes != count * 8 or offset + nbytes > len(payload):
            raise CorruptCheckpointError(f"{path}: block {spec['name']} out of bounds")
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        params[spec["name"]] = arr.reshape(shape).copy()
        total += nbytes
    if total != len(payload):
        raise CorruptCheckpointError(
            f"{path}: payload has {len(payload)} bytes, header describes {total}"
        )
    try:
        model = Model.from_param_dict(params)
    except DimMismatchError as exc:
        raise CorruptCheckpointError(f"{path}: inconsistent parameter shapes") from exc
    dims = header.get("dims", {})
    if (
        dims.get("D") != model.input_dim
        or dims.get("e") != model.embed_dim
        or dims.get("h") != model.hidden_dim
        or dims.get("m") != model.head_dim
    ):
        raise CorruptCheckpointError(f"{path}: header dims disagree with parameters")
    return Checkpoint(model, config, track_dims, best_ccc, best_epoch)
