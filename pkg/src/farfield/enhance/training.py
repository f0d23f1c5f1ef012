"""Training loop for the mask estimator."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from ..errors import InputError, TrainingError
from ..features import PairSelection, assemble_features, default_pairs
from ..jsonl import read_jsonl
from ..mixer import load_clip
from ..spectral import StftConfig, is_cola, ola_envelope, stft, window
from .estimator import MaskEstimator
from .masks import ideal_crm

LOSSES = ("neg_sisnr", "mask_mse")


@dataclass
class TrainConfig:
    lr: float = 1e-3
    patience: int = 2
    epochs: int = 18
    batch_size: int = 4
    loss: str = "neg_sisnr"
    seed: int = 0
    grad_clip: float = 5.0
    segment_seconds: float | None = None
    max_clips: int | None = None

    def validate(self) -> None:
        if self.lr <= 0:
            raise InputError("lr must be positive")
        if self.patience < 1:
            raise InputError("patience must be >= 1")
        if self.loss not in LOSSES:
            raise InputError(f"loss must be one of {LOSSES}")
        if self.epochs < 1 or self.batch_size < 1:
            raise InputError("epochs and batch_size must be >= 1")


class LrHalving:
    """Halve the learning rate after ``patience`` epochs without improvement."""

    def __init__(self, optimizer, patience: int = 2, factor: float = 0.5):
        self.optimizer = optimizer
        self.patience = patience
        self.factor = factor
        self.best = math.inf
        self.bad_epochs = 0

    @property
    def lr(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    def step(self, dev_loss: float) -> bool:
        """Record one epoch; returns True if the rate was just halved."""
        if dev_loss < self.best:
            self.best = dev_loss
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            for group in self.optimizer.param_groups:
                group["lr"] *= self.factor
            self.bad_epochs = 0
            return True
        return False


# ------------------------------------------------------------------ losses

class TorchIstft:
    """Differentiable copy of :func:`farfield.spectral.istft` (batched)."""

    def __init__(self, config: StftConfig, n_frames: int, dtype=torch.float32):
        if not is_cola(config):
            raise InputError("STFT config is not COLA")
        self.config = config
        self.window = torch.as_tensor(window(config), dtype=dtype)
        env = ola_envelope(config, n_frames)
        self.inv_env = torch.as_tensor(np.where(env > 1e-10, 1.0 / np.maximum(env, 1e-10), 0.0), dtype=dtype)
        self.total = env.size
        self.left = config.frame_length // 2 if config.padding == "center" else config.frame_length - config.hop_length

    def __call__(self, real: torch.Tensor, imag: torch.Tensor, length: int) -> torch.Tensor:
        # real/imag: (B, T, F)
        cfg = self.config
        frames = torch.fft.irfft(torch.complex(real, imag), n=cfg.fft_size, dim=-1)[..., : cfg.frame_length]
        frames = frames * self.window
        out = torch.nn.functional.fold(
            frames.transpose(1, 2), output_size=(1, self.total), kernel_size=(1, cfg.frame_length),
            stride=(1, cfg.hop_length),
        )[:, 0, 0, :]
        out = out * self.inv_env
        return out[:, self.left:self.left + length]


def torch_sisnr(estimate: torch.Tensor, reference: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """Per-row Si-SNR in dB for ``(B, N)`` tensors."""
    estimate = estimate - estimate.mean(dim=-1, keepdim=True)
    reference = reference - reference.mean(dim=-1, keepdim=True)
    scale = (estimate * reference).sum(-1, keepdim=True) / (reference.pow(2).sum(-1, keepdim=True) + eps)
    target = scale * reference
    noise = estimate - target
    return 10 * torch.log10((target.pow(2).sum(-1) + eps) / (noise.pow(2).sum(-1) + eps))


@dataclass
class Batch:
    features: torch.Tensor  # (B, T, 6F)
    x0_real: torch.Tensor  # (B, T, F)
    x0_imag: torch.Tensor
    reference: torch.Tensor  # (B, N)
    target_real: torch.Tensor  # ideal mask, (B, T, F)
    target_imag: torch.Tensor


def batch_loss(model: MaskEstimator, batch: Batch, loss: str, istft_op: TorchIstft | None = None) -> torch.Tensor:
    mr, mi, _ = model(batch.features)
    if loss == "mask_mse":
        return ((mr - batch.target_real) ** 2 + (mi - batch.target_imag) ** 2).mean()
    yr = mr * batch.x0_real - mi * batch.x0_imag
    yi = mr * batch.x0_imag + mi * batch.x0_real
    y = istft_op(yr, yi, batch.reference.shape[-1])
    return -torch_sisnr(y, batch.reference).mean()


# -------------------------------------------------------------------- data

def make_example(mixture: np.ndarray, reference: np.ndarray, selection: PairSelection, config: StftConfig):
    """Arrays for one training clip: features (T, 6F), x0 and ideal mask (T, F), reference (N,)."""
    feats = assemble_features(mixture, selection, config).values.T
    x0 = stft(mixture[selection.reference], config).bins
    s = stft(reference, config).bins
    mask = ideal_crm(s, x0)
    return {
        "features": feats.astype(np.float32),
        "x0": x0.T.astype(np.complex64),
        "mask_r": mask.real.T.astype(np.float32),
        "mask_i": mask.imag.T.astype(np.float32),
        "reference": np.asarray(reference, dtype=np.float32),
    }


def collate(examples, config: StftConfig, segment: int | None = None, rng=None) -> Batch:
    """Stack examples, cropping all to a common frame-aligned length."""
    hop = config.hop_length
    n = min(e["reference"].size for e in examples)
    if segment is not None and segment < n:
        n = segment
    n = max(hop, (n // hop) * hop)
    t = n // hop + 1 if config.padding == "center" else None
    feats, xr, xi, ref, mr, mi = [], [], [], [], [], []
    for e in examples:
        total_frames = e["features"].shape[0]
        start = 0
        if segment is not None and rng is not None and e["reference"].size > n:
            start = int(rng.integers(0, (e["reference"].size - n) // hop + 1)) * hop
        f0 = start // hop
        frames = t if t is not None else total_frames
        sl = slice(f0, f0 + frames)
        feats.append(e["features"][sl])
        xr.append(e["x0"][sl].real)
        xi.append(e["x0"][sl].imag)
        mr.append(e["mask_r"][sl])
        mi.append(e["mask_i"][sl])
        ref.append(e["reference"][start:start + n])
    return Batch(
        torch.from_numpy(np.stack(feats)), torch.from_numpy(np.stack(xr)), torch.from_numpy(np.stack(xi)),
        torch.from_numpy(np.stack(ref)), torch.from_numpy(np.stack(mr)), torch.from_numpy(np.stack(mi)),
    )


class ManifestDataset:
    """Lazily loads dataset-manifest clips as training examples."""

    def __init__(self, manifest, stft_config: StftConfig, selection: PairSelection | None = None,
                 max_clips: int | None = None):
        self.path = Path(manifest)
        self.rows = read_jsonl(self.path)
        if max_clips is not None:
            self.rows = self.rows[:max_clips]
        if not self.rows:
            raise InputError(f"{manifest}: dataset is empty")
        self.config = stft_config
        self.selection = selection or default_pairs(self.rows[0].get("topology") or "linear_uniform8")

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, i: int) -> dict:
        clip, ref = load_clip(self.rows[i], self.path)
        return make_example(clip.samples, ref, self.selection, self.config)


# ---------------------------------------------------------------- training

def _to_dtype(batch: Batch, dtype) -> Batch:
    return Batch(*(getattr(batch, f).to(dtype) for f in Batch.__dataclass_fields__))


def _run_epoch(model, dataset, config: TrainConfig, stft_config, optimizer=None, rng=None) -> float:
    order = np.arange(len(dataset)) if rng is None else rng.permutation(len(dataset))
    dtype = next(model.parameters()).dtype
    segment = None if config.segment_seconds is None else int(config.segment_seconds * stft_config.sample_rate)
    total, count = 0.0, 0
    for start in range(0, len(order), config.batch_size):
        examples = [dataset[int(i)] for i in order[start:start + config.batch_size]]
        batch = _to_dtype(collate(examples, stft_config, segment, rng), dtype)
        istft_op = TorchIstft(stft_config, batch.features.shape[1], dtype)
        if optimizer is None:
            with torch.no_grad():
                loss = batch_loss(model, batch, config.loss, istft_op)
        else:
            optimizer.zero_grad()
            loss = batch_loss(model, batch, config.loss, istft_op)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite training loss {loss.item()} at batch {start // config.batch_size}")
            loss.backward()
            if config.grad_clip:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            optimizer.step()
        value = float(loss.item())
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss {value}")
        total += value * len(examples)
        count += len(examples)
    return total / count


def train(model: MaskEstimator, train_set, dev_set, config: TrainConfig | None = None,
          stft_config: StftConfig | None = None, log_path=None, progress=None):
    """Adam training with dev-loss learning-rate halving.

    ``train_set``/``dev_set`` are dataset manifests (paths) or dataset
    objects. Returns the model loaded with its best-dev-loss weights and
    the per-epoch log (also written as JSON Lines to ``log_path``).
    """
    config = config or TrainConfig()
    config.validate()
    stft_config = stft_config or StftConfig()
    if not isinstance(train_set, (ManifestDataset, list)):
        train_set = ManifestDataset(train_set, stft_config, max_clips=config.max_clips)
    if not isinstance(dev_set, (ManifestDataset, list)):
        dev_set = ManifestDataset(dev_set, stft_config)
    if len(train_set) == 0 or len(dev_set) == 0:
        raise InputError("training and dev sets must be non-empty")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    scheduler = LrHalving(optimizer, config.patience)
    best_state, best_loss = copy.deepcopy(model.state_dict()), math.inf
    log = []
    fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            model.train()
            train_loss = _run_epoch(model, train_set, config, stft_config, optimizer, rng)
            model.eval()
            dev_loss = _run_epoch(model, dev_set, config, stft_config)
            lr_used = scheduler.lr
            halved = scheduler.step(dev_loss)
            improved = dev_loss < best_loss
            if improved:
                best_loss = dev_loss
                best_state = copy.deepcopy(model.state_dict())
            row = {"epoch": epoch, "train_loss": train_loss, "dev_loss": dev_loss, "lr": lr_used,
                   "next_lr": scheduler.lr, "lr_halved": halved, "best": improved}
            log.append(row)
            if fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
                fh.flush()
            if progress:
                progress(row)
    finally:
        if fh:
            fh.close()
    model.load_state_dict(best_state)
    model.eval()
    return model, log


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)


def fit_batch(model: MaskEstimator, batch: Batch, steps: int, lr: float = 1e-3, loss: str = "mask_mse",
              stft_config: StftConfig | None = None, grad_clip: float = 5.0) -> list[float]:
    """Repeated Adam steps on one fixed batch; returns the loss per step."""
    stft_config = stft_config or StftConfig()
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    istft_op = TorchIstft(stft_config, batch.features.shape[1], next(model.parameters()).dtype)
    history = []
    model.train()
    for step in range(steps):
        optimizer.zero_grad()
        value = batch_loss(model, batch, loss, istft_op)
        if not torch.isfinite(value):
            raise TrainingError(f"non-finite loss at step {step}")
        value.backward()
        if grad_clip:
            torch.nn.utils.clip_grad_norm_(model.parameters(), grad_clip)
        optimizer.step()
        history.append(float(value.item()))
    model.eval()
    return history
