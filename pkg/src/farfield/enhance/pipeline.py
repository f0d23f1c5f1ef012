"""End-to-end enhancement of a multichannel clip to a mono signal."""

from __future__ import annotations

import numpy as np
import torch

from ..errors import ShapeError
from ..features import PairSelection, assemble_features, select_channels, stack_features
from ..spectral import StftConfig, StreamingIstft, StreamingStft, istft, stft
from .estimator import MaskEstimator, estimate_mask
from .masks import MASK_BOUND, ComplexMask, apply_mask, ideal_crm


def _samples(clip) -> np.ndarray:
    return np.asarray(getattr(clip, "samples", clip), dtype=float)


def enhance_with_mask(clip, mask_fn, selection: PairSelection, stft_config: StftConfig | None = None) -> np.ndarray:
    """Run STFT, ``mask_fn(x0_spectrogram) -> ComplexMask``, mask application and iSTFT."""
    stft_config = stft_config or StftConfig()
    samples = _samples(clip)
    x0 = stft(samples[selection.reference], stft_config)
    return istft(apply_mask(mask_fn(x0), x0))


def enhance_ideal(clip, clean_ref: np.ndarray, selection: PairSelection, stft_config: StftConfig | None = None,
                  clamp: float = MASK_BOUND) -> np.ndarray:
    """Upper bound: enhance with the oracle mask computed from the clean target."""
    stft_config = stft_config or StftConfig()
    clean = stft(np.asarray(clean_ref, dtype=float), stft_config)
    return enhance_with_mask(clip, lambda x0: ideal_crm(clean, x0, clamp), selection, stft_config)


def enhance_clip(clip, model: MaskEstimator, selection: PairSelection, stft_config: StftConfig | None = None,
                 mode: str = "offline") -> np.ndarray:
    """Enhanced mono signal, same length as the input clip.

    ``offline`` uses centred framing and runs the network over the whole
    utterance. ``streaming`` uses causal framing and processes one hop at a
    time through :class:`StreamingEnhancer`.
    """
    stft_config = stft_config or StftConfig()
    samples = _samples(clip)
    if mode == "streaming":
        return StreamingEnhancer(model, selection, stft_config).run(samples)
    if mode != "offline":
        raise ValueError(f"unknown mode {mode!r}")
    feats = assemble_features(samples, selection, stft_config)
    if feats.values.shape[0] != model.input_size:
        raise ShapeError(f"features have {feats.values.shape[0]} rows, model expects {model.input_size}")
    mask = estimate_mask(model, feats, "offline")
    x0 = stft(samples[selection.reference], stft_config)
    return istft(apply_mask(mask, x0))


class StreamingEnhancer:
    """Frame-synchronous causal enhancement.

    Owns the STFT buffers and recurrent state of one stream; feed it
    ``(channels, n)`` chunks of any size with :meth:`process` and call
    :meth:`flush` at the end. Output sample ``k`` corresponds to input
    sample ``k``; the algorithmic latency is one frame.
    """

    def __init__(self, model: MaskEstimator, selection: PairSelection, stft_config: StftConfig | None = None):
        self.model = model
        self.selection = selection
        self.config = (stft_config or StftConfig()).with_padding("causal")
        if self.config.n_bins != model.n_bins:
            raise ShapeError(f"STFT gives {self.config.n_bins} bins, model expects {model.n_bins}")
        self._stft = StreamingStft(self.config, channels=len(selection.channel_subset))
        self._istft = StreamingIstft(self.config)
        self._state = None
        self._dtype = next(model.parameters()).dtype

    @torch.no_grad()
    def _frames(self, spectra: np.ndarray) -> np.ndarray:
        # spectra: (channels, k, F)
        out = []
        for t in range(spectra.shape[1]):
            frame = spectra[:, t, :]
            feats = torch.as_tensor(stack_features(frame, self.selection.pairs)[None, :], dtype=self._dtype)
            mr, mi, self._state = self.model.step(feats, self._state)
            mask = ComplexMask(mr[0].double().numpy(), mi[0].double().numpy())
            out.append(apply_mask(mask, frame[0]))
        if not out:
            return np.zeros(0)
        return self._istft.process(np.stack(out))

    def process(self, chunk: np.ndarray) -> np.ndarray:
        chunk = select_channels(np.atleast_2d(chunk), self.selection)
        return self._frames(self._stft.process(chunk))

    def flush(self) -> np.ndarray:
        return self._frames(self._stft.flush())

    def run(self, samples: np.ndarray, chunk: int | None = None) -> np.ndarray:
        """Stream a whole clip through in ``chunk``-sample blocks (default one hop)."""
        n = samples.shape[-1]
        step = chunk or self.config.hop_length
        parts = [self.process(samples[:, i:i + step]) for i in range(0, n, step)]
        parts.append(self.flush())
        out = np.concatenate(parts)
        return out[:n]


def offline_causal(clip, model: MaskEstimator, selection: PairSelection, stft_config: StftConfig | None = None) -> np.ndarray:
    """Causal framing processed as one block; equals the streaming output."""
    config = (stft_config or StftConfig()).with_padding("causal")
    samples = _samples(clip)
    feats = assemble_features(samples, selection, config)
    mask = estimate_mask(model, feats, "offline")
    x0 = stft(samples[selection.reference], config)
    return istft(apply_mask(mask, x0))
