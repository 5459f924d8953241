"""Network pieces: residual volume encoder, LSTM, ReLU RNN, classification head, losses.

Parameters live in plain dicts of ``Tensor`` keyed by name; every network
function takes its parameter dict first.  Initialization draws each parameter
from its own named stream, so adding a parameter never shifts the others.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .seeding import stream
from .tensor import ShapeError, Tensor

CLINICAL_DIM = 20
SUBTYPE_DIM = 8


@dataclass(frozen=True)
class EncoderConfig:
    channels_in: int = 3
    stage_widths: tuple = (8, 16, 32)
    blocks_per_stage: int = 2
    latent_dim: int = 64
    stem_kernel: int = 3
    stem_stride: int = 1

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if not self.stage_widths:
            raise ValueError("stage_widths must be nonempty")
        object.__setattr__(self, "stage_widths", tuple(int(w) for w in self.stage_widths))

    @classmethod
    def resnet18(cls) -> "EncoderConfig":
        """Full-size preset: four stages of two basic blocks, 512-d latent."""
        return cls(stage_widths=(64, 128, 256, 512), blocks_per_stage=2,
                   latent_dim=512, stem_kernel=7, stem_stride=2)


@dataclass(frozen=True)
class SequenceHeadConfig:
    lstm_layers: int = 2
    lstm_hidden: int = 64
    rnn_layers: int = 2


@dataclass(frozen=True)
class HeadConfig:
    clinical_dim: int = CLINICAL_DIM
    subtype_dim: int = SUBTYPE_DIM
    dropout_rate: float = 0.5
    hidden: int = 32
    use_clinical: bool = True
    use_subtype: bool = True


@dataclass(frozen=True)
class NetworkConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    sequence: SequenceHeadConfig = field(default_factory=SequenceHeadConfig)
    head: HeadConfig = field(default_factory=HeadConfig)


# ---------------------------------------------------------------------------
# initialization


def _uniform(seed: int, name: str, shape: tuple, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(stream(seed, "init", name).uniform(-bound, bound, size=shape),
                  requires_grad=True, name=name)


def _const(name: str, shape: tuple, value: float = 0.0) -> Tensor:
    return Tensor(np.full(shape, value), requires_grad=True, name=name)


def _block_names(cfg: EncoderConfig):
    c_in = cfg.stage_widths[0]
    for s, width in enumerate(cfg.stage_widths):
        for b in range(cfg.blocks_per_stage):
            stride = 2 if (s > 0 and b == 0) else 1
            yield f"s{s}.b{b}", c_in, width, stride
            c_in = width


def init_encoder(cfg: EncoderConfig, seed: int, prefix: str = "encoder") -> dict:
    k = cfg.stem_kernel
    w0 = cfg.stage_widths[0]
    p = {
        "stem.w": _uniform(seed, f"{prefix}.stem.w", (w0, cfg.channels_in, k, k, k),
                           cfg.channels_in * k ** 3),
        "stem.b": _const(f"{prefix}.stem.b", (w0,)),
    }
    for name, c_in, c_out, stride in _block_names(cfg):
        p[f"{name}.conv1"] = _uniform(seed, f"{prefix}.{name}.conv1", (c_out, c_in, 3, 3, 3),
                                      c_in * 27)
        p[f"{name}.norm1.g"] = _const(f"{prefix}.{name}.norm1.g", (c_out,), 1.0)
        p[f"{name}.norm1.b"] = _const(f"{prefix}.{name}.norm1.b", (c_out,))
        p[f"{name}.conv2"] = _uniform(seed, f"{prefix}.{name}.conv2", (c_out, c_out, 3, 3, 3),
                                      c_out * 27)
        p[f"{name}.norm2.g"] = _const(f"{prefix}.{name}.norm2.g", (c_out,), 1.0)
        p[f"{name}.norm2.b"] = _const(f"{prefix}.{name}.norm2.b", (c_out,))
        if stride != 1 or c_in != c_out:
            p[f"{name}.proj"] = _uniform(seed, f"{prefix}.{name}.proj", (c_out, c_in, 1, 1, 1),
                                         c_in)
    wl = cfg.stage_widths[-1]
    p["fc.w"] = _uniform(seed, f"{prefix}.fc.w", (cfg.latent_dim, wl), wl)
    p["fc.b"] = _const(f"{prefix}.fc.b", (cfg.latent_dim,))
    return p


def init_lstm(input_dim: int, hidden: int, layers: int, seed: int,
              prefix: str = "lstm") -> dict:
    p = {}
    for layer in range(layers):
        n_in = input_dim if layer == 0 else hidden
        p[f"l{layer}.w_ih"] = _uniform(seed, f"{prefix}.l{layer}.w_ih", (4 * hidden, n_in), n_in)
        p[f"l{layer}.w_hh"] = _uniform(seed, f"{prefix}.l{layer}.w_hh", (4 * hidden, hidden), hidden)
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0  # forget gate
        p[f"l{layer}.b"] = Tensor(bias, requires_grad=True, name=f"{prefix}.l{layer}.b")
    return p


def init_rnn(latent_dim: int, layers: int, seed: int, prefix: str = "rnn") -> dict:
    p = {}
    for layer in range(layers):
        p[f"l{layer}.w_x"] = _uniform(seed, f"{prefix}.l{layer}.w_x", (latent_dim, latent_dim),
                                      latent_dim)
        p[f"l{layer}.w_h"] = _uniform(seed, f"{prefix}.l{layer}.w_h", (latent_dim, latent_dim),
                                      latent_dim)
        p[f"l{layer}.b"] = _const(f"{prefix}.l{layer}.b", (latent_dim,))
    p["proj.w"] = _uniform(seed, f"{prefix}.proj.w", (latent_dim, latent_dim), latent_dim)
    p["proj.b"] = _const(f"{prefix}.proj.b", (latent_dim,))
    return p


def head_input_dim(cfg: HeadConfig, feature_dim: int) -> int:
    return (feature_dim + (cfg.clinical_dim if cfg.use_clinical else 0)
            + (cfg.subtype_dim if cfg.use_subtype else 0))


def init_head(cfg: HeadConfig, feature_dim: int, seed: int, prefix: str = "head") -> dict:
    n_in = head_input_dim(cfg, feature_dim)
    return {
        "fc1.w": _uniform(seed, f"{prefix}.fc1.w", (cfg.hidden, n_in), n_in),
        "fc1.b": _const(f"{prefix}.fc1.b", (cfg.hidden,)),
        "fc2.w": _uniform(seed, f"{prefix}.fc2.w", (1, cfg.hidden), cfg.hidden),
        "fc2.b": _const(f"{prefix}.fc2.b", (1,)),
    }


def parameter_count(params: dict) -> int:
    return int(np.sum([p.size for p in params.values()]))


# ---------------------------------------------------------------------------
# forward passes


def residual_block(p: dict, name: str, x: Tensor, stride: int = 1) -> Tensor:
    """Basic block: two 3x3x3 convs with instance norm, identity or projection shortcut."""
    h = T.conv3d(x, p[f"{name}.conv1"], stride=stride, padding=1)
    h = T.relu(T.instance_norm(h, p[f"{name}.norm1.g"], p[f"{name}.norm1.b"]))
    h = T.conv3d(h, p[f"{name}.conv2"], stride=1, padding=1)
    h = T.instance_norm(h, p[f"{name}.norm2.g"], p[f"{name}.norm2.b"])
    if f"{name}.proj" in p:
        shortcut = T.conv3d(x, p[f"{name}.proj"], stride=stride, padding=0)
    else:
        shortcut = x
    return T.relu(T.add(h, shortcut))


def encode_volume(params: dict, cfg: EncoderConfig, volume) -> Tensor:
    """Map a [3,D,H,W] volume (or a [N,3,D,H,W] stack) to its latent vector(s)."""
    volume = T.as_tensor(volume)
    if volume.ndim not in (4, 5) or volume.shape[-4] != cfg.channels_in:
        raise ShapeError(f"encode_volume: expected {cfg.channels_in} channels, got {volume.shape}")
    h = T.conv3d(volume, params["stem.w"], params["stem.b"], stride=cfg.stem_stride,
                 padding=cfg.stem_kernel // 2)
    h = T.relu(h)
    for name, _, _, stride in _block_names(cfg):
        h = residual_block(params, name, h, stride)
    spatial = (1, 2, 3) if h.ndim == 4 else (2, 3, 4)
    pooled = T.mean(h, axis=spatial)
    return T.linear(pooled, params["fc.w"], params["fc.b"])


def _zeros_like_batch(x: Tensor, width: int) -> Tensor:
    return Tensor(np.zeros(x.shape[:-1] + (width,)))


def lstm_init_state(params: dict, x: Tensor) -> list:
    layers = len([k for k in params if k.endswith(".w_ih")])
    hidden = params["l0.w_hh"].shape[1]
    return [(_zeros_like_batch(x, hidden), _zeros_like_batch(x, hidden)) for _ in range(layers)]


def lstm_step(params: dict, x, state: list | None = None) -> tuple:
    """Advance every layer one timestep; returns (top hidden state, new state)."""
    x = T.as_tensor(x)
    if state is None:
        state = lstm_init_state(params, x)
    hidden = params["l0.w_hh"].shape[1]
    new_state = []
    inp = x
    for layer, (h, c) in enumerate(state):
        gates = T.add(T.linear(inp, params[f"l{layer}.w_ih"], params[f"l{layer}.b"]),
                      T.linear(h, params[f"l{layer}.w_hh"]))
        i = T.sigmoid(gates[..., 0:hidden])
        f = T.sigmoid(gates[..., hidden:2 * hidden])
        g = T.tanh(gates[..., 2 * hidden:3 * hidden])
        o = T.sigmoid(gates[..., 3 * hidden:4 * hidden])
        c = T.add(T.mul(f, c), T.mul(i, g))
        h = T.mul(o, T.tanh(c))
        new_state.append((h, c))
        inp = h
    return inp, new_state


def lstm_forward(params: dict, sequence) -> Tensor:
    """Run the stacked LSTM over a sequence; returns the last top-layer hidden state.

    Sequences of any length >= 1 share the same parameters.
    """
    if len(sequence) == 0:
        raise ShapeError("lstm_forward: empty sequence")
    state = None
    out = None
    for x in sequence:
        out, state = lstm_step(params, x, state)
    return out


def rnn_predict_t2(params: dict, inputs, expected_len: int = 2) -> Tensor:
    """Predict the follow-up latent from earlier latents with a ReLU RNN + affine projection."""
    if len(inputs) != expected_len:
        raise ShapeError(f"rnn_predict_t2: expected {expected_len} inputs, got {len(inputs)}")
    layers = len([k for k in params if k.endswith(".w_x")])
    width = params["l0.w_h"].shape[0]
    hs = [None] * layers
    for x in inputs:
        inp = T.as_tensor(x)
        for layer in range(layers):
            h_prev = hs[layer] if hs[layer] is not None else _zeros_like_batch(inp, width)
            pre = T.add(T.linear(inp, params[f"l{layer}.w_x"], params[f"l{layer}.b"]),
                        T.linear(h_prev, params[f"l{layer}.w_h"]))
            hs[layer] = T.relu(pre)
            inp = hs[layer]
    return T.linear(hs[-1], params["proj.w"], params["proj.b"])


def dropout_mask(shape: tuple, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability ``rate``, else 1/(1-rate)."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"dropout rate must be in [0, 1], got {rate}")
    if rate == 1.0:
        return np.zeros(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def classify_head(params: dict, cfg: HeadConfig, image_feature, clinical=None, subtype=None,
                  dropout_rng: np.random.Generator | None = None) -> Tensor:
    """Concatenate image feature with the enabled tabular blocks and emit one logit per sample."""
    image_feature = T.as_tensor(image_feature)
    blocks = [image_feature]
    if cfg.use_clinical:
        clinical = T.as_tensor(clinical)
        if clinical.shape[-1] != cfg.clinical_dim:
            raise ShapeError(f"classify_head: clinical dim {clinical.shape} != {cfg.clinical_dim}")
        blocks.append(clinical)
    if cfg.use_subtype:
        subtype = T.as_tensor(subtype)
        if subtype.shape[-1] != cfg.subtype_dim:
            raise ShapeError(f"classify_head: subtype dim {subtype.shape} != {cfg.subtype_dim}")
        blocks.append(subtype)
    if any(b.shape[:-1] != image_feature.shape[:-1] for b in blocks):
        raise ShapeError("classify_head: batch shapes differ: "
                         + ", ".join(str(b.shape) for b in blocks))
    if dropout_rng is not None and cfg.dropout_rate > 0:
        blocks = [T.mul(b, dropout_mask(b.shape, cfg.dropout_rate, dropout_rng)) for b in blocks]
    x = T.concat(blocks, axis=-1)
    expected = params["fc1.w"].shape[1]
    if x.shape[-1] != expected:
        raise ShapeError(f"classify_head: input dim {x.shape[-1]} != {expected}")
    h = T.relu(T.linear(x, params["fc1.w"], params["fc1.b"]))
    logit = T.linear(h, params["fc2.w"], params["fc2.b"])
    return T.reshape(logit, logit.shape[:-1])


def bce_with_logits(logit, label) -> Tensor:
    y = np.asarray(label, dtype=np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError(f"bce_with_logits: labels must be 0 or 1, got {np.unique(y)}")
    return T.bce_with_logits(logit, y)


def mse(a, b) -> Tensor:
    a, b = T.as_tensor(a), T.as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse: incompatible shapes {a.shape} and {b.shape}")
    d = T.sub(a, b)
    return T.mean(T.mul(d, d))
