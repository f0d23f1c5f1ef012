"""Recurrent complex-mask estimator and its checkpoint format.

Three stacked LSTM layers (hidden width 512 by default) read the ``6F``
feature frames; an affine layer maps each hidden state to ``2F`` values
that become the real and imaginary mask after ``K * tanh(z / K)`` with
``K = 10``.

Each LSTM layer uses the standard gates (torch ``nn.LSTM``)::

    i = sigmoid(W_ii x + b_ii + W_hi h + b_hi)
    f = sigmoid(W_if x + b_if + W_hf h + b_hf)
    g = tanh(W_ig x + b_ig + W_hg h + b_hg)
    o = sigmoid(W_io x + b_io + W_ho h + b_ho)
    c' = f * c + i * g
    h' = o * tanh(c')
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..errors import FormatError, ShapeError
from ..features import FeatureTensor
from .masks import MASK_BOUND, ComplexMask

_CKPT_MAGIC = b"FFCRM\x00\x00\x00"
_CKPT_VERSION = 1


class MaskEstimator(nn.Module):
    def __init__(self, n_bins: int = 257, hidden: int = 512, layers: int = 3, bound: float = MASK_BOUND,
                 seed: int | None = 0, identity_init: bool = True):
        super().__init__()
        self.n_bins = n_bins
        self.hidden = hidden
        self.layers = layers
        self.bound = float(bound)
        gen_state = torch.random.get_rng_state()
        if seed is not None:
            torch.manual_seed(seed)
        self.lstm = nn.LSTM(6 * n_bins, hidden, num_layers=layers, batch_first=True)
        self.proj = nn.Linear(hidden, 2 * n_bins)
        if identity_init:
            # start from the pass-through mask M = 1 + 0j
            with torch.no_grad():
                self.proj.weight.mul_(0.1)
                self.proj.bias.zero_()
                self.proj.bias[:n_bins] = self.bound * math.atanh(1.0 / self.bound)
        if seed is not None:
            torch.random.set_rng_state(gen_state)

    @property
    def input_size(self) -> int:
        return 6 * self.n_bins

    def squash(self, z: torch.Tensor) -> torch.Tensor:
        return self.bound * torch.tanh(z / self.bound)

    def _split(self, z: torch.Tensor):
        z = self.squash(z)
        return z[..., : self.n_bins], z[..., self.n_bins:]

    def forward(self, features: torch.Tensor, state=None):
        """``features`` is ``(B, T, 6F)``; returns mask parts ``(B, T, F)`` and state."""
        if features.shape[-1] != self.input_size:
            raise ShapeError(f"feature width {features.shape[-1]} != {self.input_size}")
        out, state = self.lstm(features, state)
        mr, mi = self._split(self.proj(out))
        return mr, mi, state

    def step(self, frame: torch.Tensor, state=None):
        """One causal step on ``(B, 6F)``; returns ``(B, F)`` mask parts and state.

        Evaluates the gate equations directly: a length-1 call into the
        fused LSTM kernel costs several times more on CPU.
        """
        if frame.shape[-1] != self.input_size:
            raise ShapeError(f"feature width {frame.shape[-1]} != {self.input_size}")
        if state is None:
            zeros = frame.new_zeros(self.layers, frame.shape[0], self.hidden)
            state = (zeros, zeros)
        h, c = state
        hs, cs = [], []
        x = frame
        for k in range(self.layers):
            gates = torch.addmm(getattr(self.lstm, f"bias_ih_l{k}") + getattr(self.lstm, f"bias_hh_l{k}"),
                                x, getattr(self.lstm, f"weight_ih_l{k}").t())
            gates = gates + h[k] @ getattr(self.lstm, f"weight_hh_l{k}").t()
            i, f, g, o = gates.chunk(4, dim=1)
            c_k = torch.sigmoid(f) * c[k] + torch.sigmoid(i) * torch.tanh(g)
            x = torch.sigmoid(o) * torch.tanh(c_k)
            hs.append(x)
            cs.append(c_k)
        mr, mi = self._split(self.proj(x))
        return mr, mi, (torch.stack(hs), torch.stack(cs))

    def describe(self) -> dict:
        return {"n_bins": self.n_bins, "hidden": self.hidden, "layers": self.layers, "bound": self.bound}


def _as_tensor(features, model: MaskEstimator) -> torch.Tensor:
    values = features.values if isinstance(features, FeatureTensor) else np.asarray(features)
    if values.ndim != 2 or values.shape[0] != model.input_size:
        raise ShapeError(f"features {values.shape} do not match model input {model.input_size} x T")
    dtype = next(model.parameters()).dtype
    return torch.as_tensor(values.T, dtype=dtype)


@torch.no_grad()
def estimate_mask(model: MaskEstimator, features, mode: str = "offline") -> ComplexMask:
    """Mask ``F x T`` for one utterance.

    ``streaming`` feeds one frame at a time through the recurrent state, so
    frame ``t`` of the output depends on feature frames ``0..t`` only.
    """
    x = _as_tensor(features, model)
    if mode == "offline":
        mr, mi, _ = model(x[None])
        mr, mi = mr[0], mi[0]
    elif mode == "streaming":
        state = None
        parts_r, parts_i = [], []
        for t in range(x.shape[0]):
            r, i, state = model.step(x[t:t + 1], state)
            parts_r.append(r[0])
            parts_i.append(i[0])
        mr, mi = torch.stack(parts_r), torch.stack(parts_i)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return ComplexMask(mr.T.double().numpy(), mi.T.double().numpy())


# -------------------------------------------------------------- checkpoints

def save_checkpoint(model: MaskEstimator, path, train_config: dict | None = None) -> None:
    """Binary checkpoint plus a JSON sidecar (``<path>.json``).

    Layout: 8-byte magic, then little-endian uint32 version, n_bins, hidden,
    layers, float32 bound, uint64 parameter count, then every parameter in
    ``state_dict`` order as little-endian float32.
    """
    path = Path(path)
    state = model.state_dict()
    blob = np.concatenate([t.detach().cpu().numpy().astype("<f4").ravel() for t in state.values()])
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<IIIIfQ", _CKPT_VERSION, model.n_bins, model.hidden, model.layers, model.bound, blob.size))
        fh.write(blob.tobytes())
    sidecar = {"model": model.describe(), "train_config": train_config or {}}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_checkpoint(path) -> MaskEstimator:
    with open(path, "rb") as fh:
        if fh.read(8) != _CKPT_MAGIC:
            raise FormatError(f"{path}: not a mask-estimator checkpoint")
        version, n_bins, hidden, layers, bound, count = struct.unpack("<IIIIfQ", fh.read(28))
        if version != _CKPT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        blob = np.frombuffer(fh.read(), dtype="<f4")
    if blob.size != count:
        raise FormatError(f"{path}: expected {count} parameters, found {blob.size}")
    model = MaskEstimator(n_bins, hidden, layers, bound, seed=None, identity_init=False)
    state = model.state_dict()
    offset = 0
    for name, tensor in state.items():
        n = tensor.numel()
        state[name] = torch.from_numpy(blob[offset:offset + n].astype(np.float32).reshape(tensor.shape))
        offset += n
    if offset != blob.size:
        raise FormatError(f"{path}: parameter count does not match model shape")
    model.load_state_dict(state)
    model.eval()
    return model
