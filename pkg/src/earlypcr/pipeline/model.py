"""Network assembly for the single-task (Stage-1 / conventional) and dual-task models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import nn
from .. import tensor as T
from ..tensor import Tensor

SINGLE = "single"
DUAL = "dual"


@dataclass
class Network:
    """Parameters grouped by component; ``kind`` is ``"single"`` or ``"dual"``.

    single: encoder -> LSTM over [z_t ...] -> head
    dual:   encoder -> ReLU RNN predicts z2 from [z_t ...] -> LSTM over [z_t ..., z2_hat] -> head
    """

    kind: str
    config: nn.NetworkConfig
    params: dict

    def flat(self) -> dict:
        return {f"{comp}.{name}": p for comp, group in self.params.items()
                for name, p in group.items()}

    def arrays(self) -> dict:
        return {name: p.data.copy() for name, p in self.flat().items()}

    def load_arrays(self, arrays: dict) -> None:
        flat = self.flat()
        if set(flat) != set(arrays):
            missing = sorted(set(flat) ^ set(arrays))
            raise ValueError(f"parameter names differ: {missing[:5]}")
        for name, p in flat.items():
            if p.data.shape != arrays[name].shape:
                raise ValueError(f"{name}: shape {arrays[name].shape} != {p.data.shape}")
            p.data = np.array(arrays[name], dtype=np.float64)


def init_network(kind: str, config: nn.NetworkConfig, seed: int) -> Network:
    if kind not in (SINGLE, DUAL):
        raise ValueError(f"unknown network kind {kind!r}")
    latent = config.encoder.latent_dim
    seq = config.sequence
    params = {
        "encoder": nn.init_encoder(config.encoder, seed, "encoder"),
        "lstm": nn.init_lstm(latent, seq.lstm_hidden, seq.lstm_layers, seed, "lstm"),
        "head": nn.init_head(config.head, seq.lstm_hidden, seed, "head"),
    }
    if kind == DUAL:
        params["rnn"] = nn.init_rnn(latent, seq.rnn_layers, seed, "rnn")
    return Network(kind, config, params)


def encode_series(net: Network, volumes: list) -> list:
    """Encode ``[N,3,D,H,W]`` arrays (one per timepoint) in a single batched pass."""
    n = volumes[0].shape[0]
    stacked = np.concatenate(volumes, axis=0) if len(volumes) > 1 else volumes[0]
    z = nn.encode_volume(net.params["encoder"], net.config.encoder, Tensor(stacked))
    return [T.getitem(z, slice(t * n, (t + 1) * n)) for t in range(len(volumes))]


def forward(net: Network, volumes: list, clinical, subtype,
            dropout_rng: np.random.Generator | None = None) -> tuple:
    """Logits ``[N]`` and, for the dual network, the predicted T2 latents ``[N, latent]``.

    ``volumes`` lists the input timepoints in temporal order.
    """
    zs = encode_series(net, volumes)
    z2_hat = None
    if net.kind == DUAL:
        z2_hat = nn.rnn_predict_t2(net.params["rnn"], zs, expected_len=len(zs))
        zs = zs + [z2_hat]
    feature = nn.lstm_forward(net.params["lstm"], zs)
    logits = nn.classify_head(net.params["head"], net.config.head, feature, clinical, subtype,
                              dropout_rng=dropout_rng)
    return logits, z2_hat


def encode_t2(net: Network, volumes: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Latents of raw (unaugmented) volumes ``[N,3,D,H,W]`` under the network's encoder."""
    out = []
    for i in range(0, volumes.shape[0], chunk):
        z = nn.encode_volume(net.params["encoder"], net.config.encoder, Tensor(volumes[i:i + chunk]))
        out.append(z.data)
    return np.concatenate(out, axis=0)
