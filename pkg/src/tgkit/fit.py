"""Direct-parameter overfitting harness.

Stands in for a learned encoder: every record gets free per-clip logits,
offsets, and embeddings (the sentence embedding stays fixed), optimised by
plain gradient descent with step-halving backtracking so the loss
trajectory never increases.  Useful for verifying that the objective can
actually drive predictions onto their labels.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import GroundTruthRecord, PredictionSet, _frozen, _set
from .losses import LossWeights, _total_loss_arrays, _cosine_with_grads, sample_positive

_MIN_STEP = 1e-18


@dataclass(frozen=True, eq=False)
class OverfitResult:
    """Final predictions plus the accepted loss value after every step."""

    predictions: tuple
    trajectory: np.ndarray
    positives: np.ndarray

    def __post_init__(self):
        _set(self, "predictions", tuple(self.predictions))
        _set(self, "trajectory", _frozen(np.array(self.trajectory, dtype=np.float64)))
        _set(self, "positives", _frozen(np.array(self.positives, dtype=np.int64)))


def overfit(
    records: Sequence[GroundTruthRecord],
    weights: LossWeights = LossWeights(),
    steps: int = 500,
    learning_rate: float = 0.5,
    rng_seed: int = 0,
    embed_dim: int = 8,
    aggregation: str = "per_video",
) -> OverfitResult:
    """Fit free per-record parameters to the records' own labels.

    Each accepted step must not increase the loss; when a proposed step
    does, the step size is halved until it fits (or the step is dropped).
    Contrastive positives are sampled once up front so the objective stays
    fixed across the whole run.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to fit")
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if not learning_rate > 0:
        raise ValueError(f"learning_rate must be positive, got {learning_rate}")
    if embed_dim < 2:
        raise ValueError(f"embed_dim must be >= 2, got {embed_dim}")
    n = records[0].timeline.num_clips
    if any(r.timeline.num_clips != n for r in records):
        raise ValueError("all records must share the same clip count")
    labels = [r.label for r in records]
    timelines = [r.timeline for r in records]
    b = len(records)

    rng = np.random.default_rng(rng_seed)
    positives = np.array([sample_positive(lab, rng) for lab in labels], dtype=np.int64)

    logits = np.zeros((b, n))
    offsets = np.stack([np.full((n, 2), r.timeline.clip_len) for r in records])
    clip_emb = rng.normal(0.0, 0.5, (b, n, embed_dim))
    sent_emb = rng.normal(size=(b, embed_dim))
    sent_emb /= np.linalg.norm(sent_emb, axis=-1, keepdims=True)

    def evaluate(lg, off, emb):
        return _total_loss_arrays(
            lg, off, emb, sent_emb, labels, timelines, weights, positives, aggregation
        )

    value, grads, _ = evaluate(logits, offsets, clip_emb)
    if not np.isfinite(value):
        raise RuntimeError(f"objective is not finite at initialisation: {value}")
    trajectory = [value]
    step_size = learning_rate
    for step in range(steps):
        g_logits = grads["foreground_logits"]
        g_offsets = grads["offsets"]
        g_clip = grads["clip_embeddings"]
        if not all(np.isfinite(g).all() for g in (g_logits, g_offsets, g_clip)):
            raise RuntimeError(f"gradients diverged at step {step}")
        trial = step_size
        while True:
            cand = (logits - trial * g_logits, offsets - trial * g_offsets,
                    clip_emb - trial * g_clip)
            cand_value, cand_grads, _ = evaluate(*cand)
            if np.isfinite(cand_value) and cand_value <= value:
                logits, offsets, clip_emb = cand
                value, grads = cand_value, cand_grads
                step_size = min(trial * 2.0, learning_rate)
                break
            trial *= 0.5
            if trial < _MIN_STEP:
                # no improving step exists at representable sizes; hold still
                break
        trajectory.append(value)

    saliency = np.clip(
        _cosine_with_grads(clip_emb, sent_emb[:, None, :])[0], -1.0, 1.0
    )
    predictions = tuple(
        PredictionSet(logits[v], offsets[v], saliency[v]) for v in range(b)
    )
    return OverfitResult(predictions, np.array(trajectory), positives)
