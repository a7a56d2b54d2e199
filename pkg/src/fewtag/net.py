"""Two-layer feed-forward mapping network with hand-written backprop.

forward computes y = w2^T . relu(dropout(w1^T x + b1)) + b2 with inverted
dropout (kept units scaled by 1/(1-rate), train mode only). Math runs in
float64 regardless of parameter storage dtype; real runs store float32 and
gradient tests use float64 copies. Learnable per-way-slot margins live next
to the weights so inner and outer updates treat them uniformly; effective
margins are floored at MARGIN_FLOOR.

Checkpoint layout (little-endian): magic "MTN1\\0" (5 bytes), u32 dim_in,
u32 hidden1, u32 hidden2, u32 n_margins, then w1, b1, w2, b2, margins as
flat row-major f32.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Union

import numpy as np

from .errors import CheckpointError, NonFiniteError, TraceMismatchError, ValidationError

MARGIN_FLOOR = 1e-3
DEFAULT_HIDDEN1 = 1024
DEFAULT_HIDDEN2 = 512

_CKPT_MAGIC = b"MTN1\x00"
_CKPT_HEADER = struct.Struct("<5sIIII")


@dataclass
class TripletNetParams:
    """Weights, biases, and raw per-slot margins of the mapping network."""

    w1: np.ndarray  # (dim_in, hidden1)
    b1: np.ndarray  # (hidden1,)
    w2: np.ndarray  # (hidden1, hidden2)
    b2: np.ndarray  # (hidden2,)
    margins: np.ndarray  # (n_margins,) raw values; effective = max(raw, floor)

    def __post_init__(self):
        d, h1 = self.w1.shape
        h1b, h2 = self.w2.shape
        if h1 != h1b or self.b1.shape != (h1,) or self.b2.shape != (h2,):
            raise ValidationError("parameter shapes are inconsistent")
        if self.margins.ndim != 1 or self.margins.shape[0] < 1:
            raise ValidationError("margins must be a non-empty vector")
        for name in ("w1", "b1", "w2", "b2", "margins"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NonFiniteError(f"non-finite values in parameter {name}")

    @property
    def dim_in(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden1(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden2(self) -> int:
        return self.w2.shape[1]

    @property
    def n_margins(self) -> int:
        return self.margins.shape[0]

    def copy(self) -> "TripletNetParams":
        return TripletNetParams(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), self.margins.copy()
        )

    def astype(self, dtype) -> "TripletNetParams":
        return TripletNetParams(
            self.w1.astype(dtype), self.b1.astype(dtype),
            self.w2.astype(dtype), self.b2.astype(dtype), self.margins.astype(dtype),
        )

    def effective_margins(self) -> np.ndarray:
        """Margins as used everywhere: floored, float64."""
        return np.maximum(self.margins.astype(np.float64), MARGIN_FLOOR)


def init_params(
    dim_in: int,
    n_ways: int,
    seed: int,
    hidden1: int = DEFAULT_HIDDEN1,
    hidden2: int = DEFAULT_HIDDEN2,
    dtype=np.float32,
) -> TripletNetParams:
    """He-initialized parameters: N(0, 2/fan_in) weights, zero biases,
    raw margins at 1.0."""
    if dim_in < 1:
        raise ValidationError(f"dim_in must be >= 1, got {dim_in}")
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / dim_in), size=(dim_in, hidden1))
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden1), size=(hidden1, hidden2))
    return TripletNetParams(
        w1.astype(dtype),
        np.zeros(hidden1, dtype=dtype),
        w2.astype(dtype),
        np.zeros(hidden2, dtype=dtype),
        np.ones(n_ways, dtype=dtype),
    )


@dataclass
class ForwardTrace:
    """Cached intermediates of one forward call, consumed by backward."""

    inputs: np.ndarray  # (n, dim_in) float64
    pre_act: np.ndarray  # (n, hidden1) pre-activation
    hidden: np.ndarray  # (n, hidden1) post relu and dropout
    drop_scale: np.ndarray | None  # (n, hidden1) mask/(1-rate), None in eval mode
    params_ref: TripletNetParams


@dataclass
class Grads:
    """Gradients matching TripletNetParams; margins is None when the
    producing operation does not touch margins (plain backward)."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    margins: np.ndarray | None = None

    @classmethod
    def zeros_like(cls, params: TripletNetParams, with_margins: bool = True) -> "Grads":
        return cls(
            np.zeros(params.w1.shape),
            np.zeros(params.b1.shape),
            np.zeros(params.w2.shape),
            np.zeros(params.b2.shape),
            np.zeros(params.margins.shape) if with_margins else None,
        )

    def add_(self, other: "Grads") -> None:
        self.w1 += other.w1
        self.b1 += other.b1
        self.w2 += other.w2
        self.b2 += other.b2
        if self.margins is not None and other.margins is not None:
            self.margins += other.margins

    def scale_(self, factor: float) -> None:
        self.w1 *= factor
        self.b1 *= factor
        self.w2 *= factor
        self.b2 *= factor
        if self.margins is not None:
            self.margins *= factor


def forward_batch(
    params: TripletNetParams,
    x: np.ndarray,
    train_mode: bool = False,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    """Map a batch of input vectors, shape (n, dim_in) -> (n, hidden2).

    Dropout is applied only in train mode; eval mode is deterministic.
    Output and trace are float64.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.dim_in:
        raise ValidationError(f"input dim {x.shape[1]} != network dim {params.dim_in}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("non-finite network input")
    z1 = x @ params.w1 + params.b1
    a1 = np.maximum(z1, 0.0)
    drop_scale = None
    if train_mode and dropout_rate > 0.0:
        if rng is None:
            raise ValidationError("dropout requires an rng in train mode")
        keep = rng.random(z1.shape) >= dropout_rate
        drop_scale = keep.astype(np.float64) / (1.0 - dropout_rate)
        hidden = a1 * drop_scale
    else:
        hidden = a1
    y = hidden @ params.w2 + params.b2
    return y, ForwardTrace(x, z1, hidden, drop_scale, params)


def forward(
    params: TripletNetParams,
    x: np.ndarray,
    train_mode: bool = False,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    """Single-vector forward; returns an (hidden2,) output."""
    y, trace = forward_batch(params, np.asarray(x)[None, :], train_mode, dropout_rate, rng)
    return y[0], trace


def backward_batch(
    params: TripletNetParams, trace: ForwardTrace, grad_out: np.ndarray
) -> Grads:
    """Exact reverse-mode gradient of forward for the realized dropout mask.

    grad_out has shape (n, hidden2); returns weight and bias gradients
    (margins are not part of the forward map).
    """
    if trace.params_ref is not params:
        raise TraceMismatchError("trace was produced by different parameters")
    grad_out = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
    if grad_out.shape != (trace.inputs.shape[0], params.hidden2):
        raise ValidationError(
            f"grad_out shape {grad_out.shape} does not match trace/output shape"
        )
    gb2 = grad_out.sum(axis=0)
    gw2 = trace.hidden.T @ grad_out
    g_hidden = grad_out @ params.w2.astype(np.float64).T
    if trace.drop_scale is not None:
        g_hidden = g_hidden * trace.drop_scale
    g_z1 = g_hidden * (trace.pre_act > 0.0)
    gb1 = g_z1.sum(axis=0)
    gw1 = trace.inputs.T @ g_z1
    return Grads(gw1, gb1, gw2, gb2)


def backward(params: TripletNetParams, trace: ForwardTrace, grad_out: np.ndarray) -> Grads:
    """Single-vector backward counterpart of forward."""
    return backward_batch(params, trace, np.asarray(grad_out)[None, :])


def save_checkpoint(params: TripletNetParams, sink: Union[str, BinaryIO, None] = None) -> bytes | None:
    """Write parameters as MTN1 bytes (to a path, stream, or returned blob)."""
    buf = io.BytesIO()
    buf.write(
        _CKPT_HEADER.pack(
            _CKPT_MAGIC, params.dim_in, params.hidden1, params.hidden2, params.n_margins
        )
    )
    for tensor in (params.w1, params.b1, params.w2, params.b2, params.margins):
        buf.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    data = buf.getvalue()
    if sink is None:
        return data
    if isinstance(sink, str):
        try:
            with open(sink, "wb") as fh:
                fh.write(data)
        except OSError as exc:
            raise CheckpointError(f"cannot write checkpoint {sink}: {exc}") from exc
    else:
        sink.write(data)
    return None


def load_checkpoint(source: Union[str, bytes, BinaryIO]) -> TripletNetParams:
    """Read an MTN1 checkpoint back into float32 parameters."""
    if isinstance(source, str):
        try:
            with open(source, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise CheckpointError(f"cannot read checkpoint {source}: {exc}") from exc
    elif isinstance(source, bytes):
        data = source
    else:
        data = source.read()
    if len(data) < _CKPT_HEADER.size:
        raise CheckpointError("truncated checkpoint: header incomplete")
    magic, d, h1, h2, nm = _CKPT_HEADER.unpack_from(data, 0)
    if magic != _CKPT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic: {magic!r}")
    counts = (d * h1, h1, h1 * h2, h2, nm)
    expected = _CKPT_HEADER.size + 4 * sum(counts)
    if len(data) != expected:
        raise CheckpointError(
            f"truncated checkpoint: expected {expected} bytes, got {len(data)}"
        )
    flat = np.frombuffer(data, dtype="<f4", offset=_CKPT_HEADER.size)
    pieces = []
    offset = 0
    for count in counts:
        pieces.append(np.array(flat[offset : offset + count], dtype=np.float32))
        offset += count
    return TripletNetParams(
        pieces[0].reshape(d, h1), pieces[1], pieces[2].reshape(h1, h2), pieces[3], pieces[4]
    )
