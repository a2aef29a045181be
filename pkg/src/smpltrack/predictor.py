"""Masked-token sequence model over track histories.

A small bidirectional transformer encoder reads one token per time slot
(pose 6D blocks plus 3D location = 147 payload values).  Unobserved slots
and queried future slots enter as a learned mask token carrying only the
positional encoding, so outputs at masked positions depend on observed
payloads and positions alone.  A deterministic hold/extrapolate baseline
is provided for tracking without trained weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jsonutil
from .errors import DimensionMismatch, ParseError
from .rotation import rot6d_to_rotmat_batch, rotmat_to_rot6d_batch

PAYLOAD_DIM = 147  # 24 pose blocks * 6 + 3 location values
N_POSE_BLOCKS = 24
T_MAX_DEFAULT = 12
MAX_HORIZON = 4


@dataclass(frozen=True)
class TrackSlot:
    """One time step of a track: frame index, pose blocks, location, observed flag."""

    frame: int
    pose6d: np.ndarray  # (24, 6)
    location: np.ndarray  # (3,)
    observed: bool = True

    def __post_init__(self):
        pose6d = np.asarray(self.pose6d, dtype=float)
        location = np.asarray(self.location, dtype=float)
        if pose6d.shape != (N_POSE_BLOCKS, 6):
            raise DimensionMismatch(f"pose6d must be ({N_POSE_BLOCKS}, 6), got {pose6d.shape}")
        if location.shape != (3,):
            raise DimensionMismatch(f"location must be (3,), got {location.shape}")
        object.__setattr__(self, "pose6d", pose6d)
        object.__setattr__(self, "location", location)

    @property
    def payload(self) -> np.ndarray:
        return np.concatenate([self.pose6d.reshape(-1), self.location])


@dataclass
class TrackHistory:
    """Bounded, strictly frame-ordered sequence of track slots."""

    slots: list[TrackSlot] = field(default_factory=list)
    t_max: int = T_MAX_DEFAULT

    def __post_init__(self):
        if len(self.slots) > self.t_max:
            raise ValueError(f"history holds {len(self.slots)} slots, limit is {self.t_max}")
        frames = [s.frame for s in self.slots]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("slot frames must be strictly increasing")

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def last_frame(self) -> int:
        return self.slots[-1].frame

    def append(self, slot: TrackSlot) -> None:
        if self.slots and slot.frame <= self.slots[-1].frame:
            raise ValueError("appended slot must advance the frame index")
        self.slots.append(slot)
        if len(self.slots) > self.t_max:
            del self.slots[0]

    def observed_slots(self) -> list[TrackSlot]:
        return [s for s in self.slots if s.observed]


@dataclass(frozen=True)
class Prediction:
    """Decoded model output: one pose/location per requested frame."""

    frames: np.ndarray    # (h,) int
    poses: np.ndarray     # (h, 24, 3, 3) valid rotations
    locations: np.ndarray  # (h, 3)

    def pose6d(self, i: int) -> np.ndarray:
        return rotmat_to_rot6d_batch(self.poses[i])


def sinusoidal_encoding(positions: np.ndarray, d_model: int, base: float = 10000.0) -> np.ndarray:
    """Standard interleaved sin/cos encoding of integer positions, (n, d_model)."""
    positions = np.asarray(positions, dtype=float)
    n_sin = (d_model + 1) // 2
    freqs = base ** (-np.arange(n_sin) / n_sin)
    angles = positions[:, None] * freqs[None, :]
    enc = np.zeros((positions.shape[0], d_model))
    enc[:, 0::2] = np.sin(angles)
    enc[:, 1::2] = np.cos(angles[:, : d_model // 2])
    return enc


@dataclass
class LayerWeights:
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray
    ff1_w: np.ndarray
    ff1_b: np.ndarray
    ff2_w: np.ndarray
    ff2_b: np.ndarray


@dataclass
class PredictorWeights:
    """All parameters of the masked-token encoder.

    The blocks are pre-norm residual (x + Attn(LN(x)), x + FFN(LN(x))) with
    no final normalization, so zeroed attention/feed-forward weights leave
    the residual stream untouched.
    """

    d_model: int
    n_heads: int
    d_ff: int
    pe_base: float
    embed_w: np.ndarray   # (PAYLOAD_DIM, d_model)
    embed_b: np.ndarray   # (d_model,)
    mask_token: np.ndarray  # (d_model,)
    layers: list[LayerWeights]
    readout_w: np.ndarray  # (d_model, PAYLOAD_DIM)
    readout_b: np.ndarray  # (PAYLOAD_DIM,)

    def __post_init__(self):
        d = self.d_model
        if d % self.n_heads != 0:
            raise DimensionMismatch("d_model must be divisible by n_heads")
        checks = [
            (self.embed_w, (PAYLOAD_DIM, d), "embed_w"),
            (self.embed_b, (d,), "embed_b"),
            (self.mask_token, (d,), "mask_token"),
            (self.readout_w, (d, PAYLOAD_DIM), "readout_w"),
            (self.readout_b, (PAYLOAD_DIM,), "readout_b"),
        ]
        for layer in self.layers:
            checks += [
                (layer.ln1_gain, (d,), "ln1_gain"), (layer.ln1_bias, (d,), "ln1_bias"),
                (layer.wq, (d, d), "wq"), (layer.bq, (d,), "bq"),
                (layer.wk, (d, d), "wk"), (layer.bk, (d,), "bk"),
                (layer.wv, (d, d), "wv"), (layer.bv, (d,), "bv"),
                (layer.wo, (d, d), "wo"), (layer.bo, (d,), "bo"),
                (layer.ln2_gain, (d,), "ln2_gain"), (layer.ln2_bias, (d,), "ln2_bias"),
                (layer.ff1_w, (d, self.d_ff), "ff1_w"), (layer.ff1_b, (self.d_ff,), "ff1_b"),
                (layer.ff2_w, (self.d_ff, d), "ff2_w"), (layer.ff2_b, (d,), "ff2_b"),
            ]
        for arr, shape, name in checks:
            arr = np.asarray(arr, dtype=float)
            if arr.shape != shape:
                raise DimensionMismatch(f"{name} must have shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise DimensionMismatch(f"{name} contains non-finite values")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @classmethod
    def random(cls, seed: int, d_model: int = 128, n_layers: int = 2,
               n_heads: int = 4, d_ff: int | None = None,
               pe_base: float = 10000.0, scale: float = 0.05) -> "PredictorWeights":
        """Structurally valid random weights for tests and demos (untrained)."""
        d_ff = d_ff or 4 * d_model
        rng = np.random.default_rng(seed)

        def mat(rows, cols):
            return rng.normal(scale=scale, size=(rows, cols))

        layers = [
            LayerWeights(
                ln1_gain=np.ones(d_model), ln1_bias=np.zeros(d_model),
                wq=mat(d_model, d_model), bq=np.zeros(d_model),
                wk=mat(d_model, d_model), bk=np.zeros(d_model),
                wv=mat(d_model, d_model), bv=np.zeros(d_model),
                wo=mat(d_model, d_model), bo=np.zeros(d_model),
                ln2_gain=np.ones(d_model), ln2_bias=np.zeros(d_model),
                ff1_w=mat(d_model, d_ff), ff1_b=np.zeros(d_ff),
                ff2_w=mat(d_ff, d_model), ff2_b=np.zeros(d_model),
            )
            for _ in range(n_layers)
        ]
        return cls(d_model=d_model, n_heads=n_heads, d_ff=d_ff, pe_base=pe_base,
                   embed_w=mat(PAYLOAD_DIM, d_model), embed_b=np.zeros(d_model),
                   mask_token=rng.normal(scale=scale, size=d_model), layers=layers,
                   readout_w=mat(d_model, PAYLOAD_DIM), readout_b=np.zeros(PAYLOAD_DIM))


_LAYER_FIELDS = ("ln1_gain", "ln1_bias", "wq", "bq", "wk", "bk", "wv", "bv",
                 "wo", "bo", "ln2_gain", "ln2_bias", "ff1_w", "ff1_b", "ff2_w", "ff2_b")
_TOP_FIELDS = ("embed_w", "embed_b", "mask_token", "readout_w", "readout_b")


def save_weights(weights: PredictorWeights, path) -> None:
    """JSON file with a dims header and named flat arrays."""
    doc = {
        "dims": {
            "d_model": weights.d_model,
            "n_layers": weights.n_layers,
            "n_heads": weights.n_heads,
            "d_ff": weights.d_ff,
            "payload": PAYLOAD_DIM,
            "pe_base": float(weights.pe_base),
        }
    }
    for name in _TOP_FIELDS:
        doc[name] = np.asarray(getattr(weights, name)).reshape(-1)
    for i, layer in enumerate(weights.layers):
        for name in _LAYER_FIELDS:
            doc[f"layer{i}.{name}"] = np.asarray(getattr(layer, name)).reshape(-1)
    with open(path, "w", encoding="utf-8") as f:
        f.write(jsonutil.dumps(doc))
        f.write("\n")


def load_weights(path) -> PredictorWeights:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = jsonutil.loads(f.read())
        dims = doc["dims"]
        d_model = int(dims["d_model"])
        n_layers = int(dims["n_layers"])
        n_heads = int(dims["n_heads"])
        d_ff = int(dims["d_ff"])
        pe_base = float(dims.get("pe_base", 10000.0))
        if int(dims["payload"]) != PAYLOAD_DIM:
            raise ParseError(f"weights expect payload {dims['payload']}, this build uses {PAYLOAD_DIM}")

        def arr(name, shape):
            flat = np.asarray(doc[name], dtype=float)
            if flat.size != int(np.prod(shape)):
                raise ParseError(f"array '{name}' has {flat.size} values, expected {np.prod(shape)}")
            return flat.reshape(shape)

        layers = []
        for i in range(n_layers):
            layers.append(LayerWeights(
                ln1_gain=arr(f"layer{i}.ln1_gain", (d_model,)),
                ln1_bias=arr(f"layer{i}.ln1_bias", (d_model,)),
                wq=arr(f"layer{i}.wq", (d_model, d_model)), bq=arr(f"layer{i}.bq", (d_model,)),
                wk=arr(f"layer{i}.wk", (d_model, d_model)), bk=arr(f"layer{i}.bk", (d_model,)),
                wv=arr(f"layer{i}.wv", (d_model, d_model)), bv=arr(f"layer{i}.bv", (d_model,)),
                wo=arr(f"layer{i}.wo", (d_model, d_model)), bo=arr(f"layer{i}.bo", (d_model,)),
                ln2_gain=arr(f"layer{i}.ln2_gain", (d_model,)),
                ln2_bias=arr(f"layer{i}.ln2_bias", (d_model,)),
                ff1_w=arr(f"layer{i}.ff1_w", (d_model, d_ff)), ff1_b=arr(f"layer{i}.ff1_b", (d_ff,)),
                ff2_w=arr(f"layer{i}.ff2_w", (d_ff, d_model)), ff2_b=arr(f"layer{i}.ff2_b", (d_model,)),
            ))
        return PredictorWeights(
            d_model=d_model, n_heads=n_heads, d_ff=d_ff, pe_base=pe_base,
            embed_w=arr("embed_w", (PAYLOAD_DIM, d_model)), embed_b=arr("embed_b", (d_model,)),
            mask_token=arr("mask_token", (d_model,)), layers=layers,
            readout_w=arr("readout_w", (d_model, PAYLOAD_DIM)),
            readout_b=arr("readout_b", (PAYLOAD_DIM,)))
    except ParseError:
        raise
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"cannot read weights file: {exc}") from exc


def _layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return gain * (x - mean) / np.sqrt(var + eps) + bias


def _attention(x: np.ndarray, layer: LayerWeights, n_heads: int) -> np.ndarray:
    n, d = x.shape
    dh = d // n_heads
    q = (x @ layer.wq + layer.bq).reshape(n, n_heads, dh).transpose(1, 0, 2)
    k = (x @ layer.wk + layer.bk).reshape(n, n_heads, dh).transpose(1, 0, 2)
    v = (x @ layer.wv + layer.bv).reshape(n, n_heads, dh).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(dh)
    scores -= scores.max(axis=-1, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=-1, keepdims=True)
    assert np.all(np.abs(attn.sum(axis=-1) - 1.0) < 1e-6), "attention rows must be simplex vectors"
    out = (attn @ v).transpose(1, 0, 2).reshape(n, d)
    return out @ layer.wo + layer.bo


def _encoder_forward(tokens: np.ndarray, weights: PredictorWeights) -> np.ndarray:
    x = tokens
    for layer in weights.layers:
        x = x + _attention(_layer_norm(x, layer.ln1_gain, layer.ln1_bias), layer, weights.n_heads)
        hidden = np.maximum(_layer_norm(x, layer.ln2_gain, layer.ln2_bias) @ layer.ff1_w + layer.ff1_b, 0.0)
        x = x + hidden @ layer.ff2_w + layer.ff2_b
    return x


def _decode_payload(payload: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split (h, 147) readouts into valid rotations (h, 24, 3, 3) and locations (h, 3)."""
    h = payload.shape[0]
    blocks = payload[:, : 6 * N_POSE_BLOCKS].reshape(h * N_POSE_BLOCKS, 6)
    rotmats = rot6d_to_rotmat_batch(blocks, degenerate_to_identity=True)
    return rotmats.reshape(h, N_POSE_BLOCKS, 3, 3), payload[:, 6 * N_POSE_BLOCKS:]


def _run_masked(history: TrackHistory, weights: PredictorWeights,
                query_frames: list[int]) -> np.ndarray:
    """Embed the window, mask unobserved and queried slots, return (q, 147) readouts."""
    base = history.slots[0].frame if history.slots else (query_frames[0] if query_frames else 0)
    frames = [s.frame for s in history.slots] + list(query_frames)
    positions = np.asarray(frames, dtype=float) - base
    enc = sinusoidal_encoding(positions, weights.d_model, weights.pe_base)

    n = len(frames)
    tokens = np.empty((n, weights.d_model))
    for i, slot in enumerate(history.slots):
        if slot.observed:
            tokens[i] = slot.payload @ weights.embed_w + weights.embed_b
        else:
            tokens[i] = weights.mask_token
    tokens[len(history.slots):] = weights.mask_token
    tokens = tokens + enc

    encoded = _encoder_forward(tokens, weights)
    out = encoded @ weights.readout_w + weights.readout_b
    mask_rows = [i for i, s in enumerate(history.slots) if not s.observed]
    mask_rows += list(range(len(history.slots), n))
    return out[mask_rows]


def predict(history: TrackHistory, weights: PredictorWeights, horizon: int) -> Prediction:
    """Query the encoder with mask tokens for the next `horizon` frames."""
    if not history.slots:
        raise ValueError("history must be non-empty")
    if not 1 <= horizon <= MAX_HORIZON:
        raise ValueError(f"horizon must be in [1, {MAX_HORIZON}]")
    last = history.last_frame
    future = [last + j for j in range(1, horizon + 1)]
    readout = _run_masked(history, weights, future)
    # Rows for interior unobserved slots come first; keep only the future queries.
    readout = readout[-horizon:]
    poses, locations = _decode_payload(readout)
    return Prediction(frames=np.asarray(future, dtype=int), poses=poses, locations=locations)


def impute(history: TrackHistory, weights: PredictorWeights) -> Prediction:
    """Fill every unobserved interior slot from the observed ones."""
    unobserved = [s.frame for s in history.slots if not s.observed]
    if not unobserved:
        return Prediction(frames=np.zeros(0, dtype=int),
                          poses=np.zeros((0, N_POSE_BLOCKS, 3, 3)), locations=np.zeros((0, 3)))
    readout = _run_masked(history, weights, [])
    poses, locations = _decode_payload(readout)
    return Prediction(frames=np.asarray(unobserved, dtype=int), poses=poses, locations=locations)


def baseline_predict(history: TrackHistory, horizon: int) -> Prediction:
    """Hold the last observed pose; extrapolate location linearly from the
    last two observed slots (held when only one exists)."""
    observed = history.observed_slots()
    if not observed:
        raise ValueError("baseline_predict needs at least one observed slot")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    last = observed[-1]
    frames = np.array([history.last_frame + j for j in range(1, horizon + 1)], dtype=int)
    pose = rot6d_to_rotmat_batch(last.pose6d)
    poses = np.tile(pose, (horizon, 1, 1, 1))
    locations = np.empty((horizon, 3))
    if len(observed) >= 2:
        prev = observed[-2]
        velocity = (last.location - prev.location) / (last.frame - prev.frame)
    else:
        velocity = np.zeros(3)
    for i, frame in enumerate(frames):
        locations[i] = last.location + velocity * (frame - last.frame)
    return Prediction(frames=frames, poses=poses, locations=locations)
