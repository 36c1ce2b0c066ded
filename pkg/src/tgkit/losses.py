"""Training objectives with closed-form gradients.

Four families: a weighted binary cross-entropy on foreground indicators, a
boundary regression mixing smooth-L1 and 1-D generalised IoU, and two
temperature-scaled contrastive saliency terms (within one video and across
a batch).  Everything is plain numpy with hand-derived gradients; a central
finite-difference checker validates them at random non-kink points.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    ClipTimeline,
    GroundingWarning,
    Interval,
    PredictionSet,
    UnifiedLabel,
    _frozen,
    _set,
)

DEFAULT_TAU = 0.07
DEFAULT_NEG_WEIGHT = 0.1

# Points closer than this to a non-differentiable set are resampled or
# flagged as skipped by the gradient checker.
_KINK_MARGIN = 1e-3
_REL_FLOOR = 1e-6


@dataclass(frozen=True)
class LossWeights:
    """Scalar knobs shared by the loss family."""

    lambda_f: float = 1.0
    lambda_l1: float = 1.0
    lambda_iou: float = 1.0
    lambda_inter: float = 1.0
    lambda_intra: float = 1.0
    tau: float = DEFAULT_TAU
    neg_weight: float = DEFAULT_NEG_WEIGHT
    smooth_l1_beta: float = 1.0

    def __post_init__(self):
        for name in ("lambda_f", "lambda_l1", "lambda_iou", "lambda_inter", "lambda_intra"):
            v = float(getattr(self, name))
            _set(self, name, v)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        _set(self, "tau", float(self.tau))
        _set(self, "neg_weight", float(self.neg_weight))
        _set(self, "smooth_l1_beta", float(self.smooth_l1_beta))
        if not 0 < self.tau:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0 <= self.neg_weight <= 1:
            raise ValueError(f"neg_weight must lie in [0, 1], got {self.neg_weight}")
        if not 0 < self.smooth_l1_beta:
            raise ValueError(f"smooth_l1_beta must be positive, got {self.smooth_l1_beta}")


@dataclass(frozen=True, eq=False)
class LossReport:
    """Scalar loss plus gradients keyed by input name."""

    value: float
    gradients: dict
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        _set(self, "value", float(self.value))
        _set(self, "gradients", {k: _frozen(np.array(v, dtype=np.float64))
                                 for k, v in self.gradients.items()})

    def grad(self, name: str) -> np.ndarray:
        return self.gradients[name]


@dataclass(frozen=True, eq=False)
class EmbeddingBatch:
    """Clip and sentence embeddings for a batch of (video, query) pairs."""

    clip_embeddings: np.ndarray  # (B, L, D)
    sentence_embeddings: np.ndarray  # (B, D)

    def __post_init__(self):
        v = np.array(self.clip_embeddings, dtype=np.float64)
        s = np.array(self.sentence_embeddings, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"clip embeddings must be (B, L, D), got shape {v.shape}")
        b, l, d = v.shape
        if s.shape != (b, d):
            raise ValueError(f"sentence embeddings shape {s.shape} does not match ({b}, {d})")
        if not (np.isfinite(v).all() and np.isfinite(s).all()):
            raise ValueError("embeddings must be finite")
        if (np.linalg.norm(v, axis=-1) == 0).any() or (np.linalg.norm(s, axis=-1) == 0).any():
            raise ValueError("zero-norm embeddings have no cosine")
        _set(self, "clip_embeddings", _frozen(v))
        _set(self, "sentence_embeddings", _frozen(s))

    @property
    def batch_size(self) -> int:
        return self.clip_embeddings.shape[0]

    @property
    def num_clips(self) -> int:
        return self.clip_embeddings.shape[1]

    @property
    def dim(self) -> int:
        return self.clip_embeddings.shape[2]


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softplus(x):
    # log(1 + e^x) without overflow
    return np.logaddexp(0.0, x)


def _logsumexp(z):
    m = z.max()
    return m + np.log(np.sum(np.exp(z - m)))


def foreground_loss(logits, targets, weights: LossWeights = LossWeights()) -> LossReport:
    """Mean per-clip binary cross-entropy from logits.

    Background terms are down-weighted by ``weights.neg_weight`` so the
    scarce foreground class is not drowned out; the whole term is scaled by
    ``weights.lambda_f``.
    """
    x = np.asarray(logits, dtype=np.float64)
    f = np.asarray(targets, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 1:
        raise ValueError(f"logits must be non-empty 1-D, got shape {x.shape}")
    if f.shape != x.shape:
        raise ValueError(f"target shape {f.shape} does not match logits {x.shape}")
    if not np.isin(f, (0.0, 1.0)).all():
        raise ValueError("targets must be 0 or 1")
    if not np.isfinite(x).all():
        raise ValueError("logits must be finite")
    n = x.shape[0]
    w = weights
    per_clip = w.lambda_f * (f * _softplus(-x) + w.neg_weight * (1.0 - f) * _softplus(x))
    grad = w.lambda_f * (-f * sigmoid(-x) + w.neg_weight * (1.0 - f) * sigmoid(x)) / n
    return LossReport(float(per_clip.mean()), {"logits": grad})


def smooth_l1(x, beta: float = 1.0):
    """Huber-style penalty and its derivative, elementwise.

    Quadratic inside |x| < beta, linear outside; the two branches meet with
    matching slope so only the curvature jumps at the seam.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    x = np.asarray(x, dtype=np.float64)
    inner = np.abs(x) < beta
    value = np.where(inner, 0.5 * x * x / beta, np.abs(x) - 0.5 * beta)
    deriv = np.where(inner, x / beta, np.sign(x))
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


def _giou_endpoints(a_lo, a_hi, b_lo, b_hi):
    """Generalised IoU of ordered 1-D intervals plus partials, vectorised.

    Returns (value, d/da_lo, d/da_hi, d/db_lo, d/db_hi).  Uses right-hand
    derivatives at ties; callers that need verified gradients must stay off
    the tie set.
    """
    a_lo, a_hi, b_lo, b_hi = np.broadcast_arrays(
        *(np.asarray(v, dtype=np.float64) for v in (a_lo, a_hi, b_lo, b_hi))
    )
    inter_raw = np.minimum(a_hi, b_hi) - np.maximum(a_lo, b_lo)
    inter = np.maximum(0.0, inter_raw)
    union = (a_hi - a_lo) + (b_hi - b_lo) - inter
    hull = np.maximum(a_hi, b_hi) - np.minimum(a_lo, b_lo)

    live = inter_raw > 0
    # d min(x, y)/dx = [x < y]; d max(x, y)/dx = [x >= y] (right-hand rules)
    di_ahi = np.where(live & (a_hi < b_hi), 1.0, 0.0)
    di_bhi = np.where(live & (b_hi < a_hi), 1.0, 0.0)
    di_alo = np.where(live & (a_lo >= b_lo), -1.0, 0.0)
    di_blo = np.where(live & (b_lo >= a_lo), -1.0, 0.0)

    du_alo = -1.0 - di_alo
    du_ahi = 1.0 - di_ahi
    du_blo = -1.0 - di_blo
    du_bhi = 1.0 - di_bhi

    dh_ahi = np.where(a_hi >= b_hi, 1.0, 0.0)
    dh_bhi = np.where(b_hi >= a_hi, 1.0, 0.0)
    dh_alo = np.where(a_lo < b_lo, -1.0, 0.0)
    dh_blo = np.where(b_lo < a_lo, -1.0, 0.0)

    value = np.empty_like(hull)
    grads = [np.zeros_like(hull) for _ in range(4)]

    degenerate = hull <= 0  # both intervals collapse to the same point
    apart = (~degenerate) & (union <= 0)  # two distinct degenerate points
    regular = (~degenerate) & (~apart)

    value[degenerate] = 1.0
    value[apart] = -1.0

    if regular.any():
        i_, u_, h_ = inter[regular], union[regular], hull[regular]
        value[regular] = i_ / u_ - (h_ - u_) / h_
        for g, di, du, dh in zip(
            grads,
            (di_alo, di_ahi, di_blo, di_bhi),
            (du_alo, du_ahi, du_blo, du_bhi),
            (dh_alo, dh_ahi, dh_blo, dh_bhi),
        ):
            di_, du_, dh_ = di[regular], du[regular], dh[regular]
            g[regular] = (di_ * u_ - i_ * du_) / u_**2 + (du_ * h_ - u_ * dh_) / h_**2
    return value, grads[0], grads[1], grads[2], grads[3]


def giou_1d(a: Interval, b: Interval) -> LossReport:
    """Generalised IoU of two intervals with endpoint gradients.

    Equals plain IoU minus the fraction of the covering hull not filled by
    the union; two identical zero-length intervals score 1.
    """
    value, d_alo, d_ahi, d_blo, d_bhi = _giou_endpoints(a.start, a.end, b.start, b.end)
    return LossReport(
        float(value),
        {"a": np.array([d_alo, d_ahi]), "b": np.array([d_blo, d_bhi])},
    )


def boundary_loss(
    pred_offsets,
    label: UnifiedLabel,
    timeline: ClipTimeline,
    weights: LossWeights = LossWeights(),
) -> LossReport:
    """Boundary regression over foreground clips.

    Per foreground clip: smooth-L1 on both offset residuals plus
    (1 - gIoU) between the reconstructed and target intervals, averaged
    over the foreground count.  Background rows receive zero gradient.
    Predicted intervals that come out inverted are re-ordered before the
    gIoU term so the loss stays defined for any real offsets.
    """
    d_hat = np.asarray(pred_offsets, dtype=np.float64)
    n = timeline.num_clips
    if d_hat.shape != (n, 2):
        raise ValueError(f"predicted offsets shape {d_hat.shape} does not match ({n}, 2)")
    if len(label) != n:
        raise ValueError(f"label covers {len(label)} clips but timeline has {n}")
    if not np.isfinite(d_hat).all():
        raise ValueError("predicted offsets must be finite")
    w = weights
    grad = np.zeros((n, 2), dtype=np.float64)
    fg = np.flatnonzero(label.foreground == 1)
    if fg.size == 0:
        warnings.warn("no foreground clips; boundary loss is vacuously 0", GroundingWarning)
        return LossReport(0.0, {"offsets": grad}, {"foreground_count": 0})

    t = timeline.timestamps()[fg]
    gt = label.offsets[fg]
    residual = d_hat[fg] - gt
    l1_val, l1_der = smooth_l1(residual, w.smooth_l1_beta)

    pr_s = t - d_hat[fg, 0]
    pr_e = t + d_hat[fg, 1]
    lo = np.minimum(pr_s, pr_e)
    hi = np.maximum(pr_s, pr_e)
    g_val, dg_lo, dg_hi, _, _ = _giou_endpoints(lo, hi, t - gt[:, 0], t + gt[:, 1])

    # chain through the ordering: lo/hi pick one of (pr_s, pr_e) each
    dlo_s = np.where(pr_s < pr_e, 1.0, 0.0)
    dlo_e = np.where(pr_e < pr_s, 1.0, 0.0)
    dhi_s = np.where(pr_s >= pr_e, 1.0, 0.0)
    dhi_e = np.where(pr_e >= pr_s, 1.0, 0.0)
    dg_d0 = (dg_lo * dlo_s + dg_hi * dhi_s) * -1.0  # pr_s = t - d0
    dg_d1 = dg_lo * dlo_e + dg_hi * dhi_e  # pr_e = t + d1

    per_clip = w.lambda_l1 * l1_val.sum(axis=1) + w.lambda_iou * (1.0 - g_val)
    value = float(per_clip.mean())
    grad[fg, 0] = (w.lambda_l1 * l1_der[:, 0] - w.lambda_iou * dg_d0) / fg.size
    grad[fg, 1] = (w.lambda_l1 * l1_der[:, 1] - w.lambda_iou * dg_d1) / fg.size
    return LossReport(value, {"offsets": grad}, {"foreground_count": int(fg.size)})


def _cosine_with_grads(v, s):
    """cos(v, s) over the last axis plus partials w.r.t. both vectors."""
    nv = np.linalg.norm(v, axis=-1, keepdims=True)
    ns = np.linalg.norm(s, axis=-1, keepdims=True)
    c = np.sum(v * s, axis=-1, keepdims=True) / (nv * ns)
    dv = s / (nv * ns) - c * v / nv**2
    ds = v / (nv * ns) - c * s / ns**2
    return c[..., 0], dv, ds


def saliency_cosines(emb: EmbeddingBatch) -> np.ndarray:
    """Cosine of every clip embedding against its own sentence, shape (B, L)."""
    c, _, _ = _cosine_with_grads(emb.clip_embeddings, emb.sentence_embeddings[:, None, :])
    return c


def cross_saliency_cosines(emb: EmbeddingBatch, positives) -> np.ndarray:
    """Pairing matrix: positive clip of each item against every sentence.

    Entry (b, k) is the cosine between item b's positive clip embedding and
    item k's sentence embedding; the diagonal holds the matched pairs.
    """
    positives = np.asarray(positives, dtype=np.int64)
    b, l = emb.batch_size, emb.num_clips
    if positives.shape != (b,):
        raise ValueError(f"positives shape {positives.shape} does not match ({b},)")
    if (positives < 0).any() or (positives >= l).any():
        raise ValueError("positive clip indices out of range")
    pos = emb.clip_embeddings[np.arange(b), positives]  # (B, D)
    c, _, _ = _cosine_with_grads(pos[:, None, :], emb.sentence_embeddings[None, :, :])
    return c


def sample_positive(label: UnifiedLabel, rng: np.random.Generator) -> int:
    """Uniformly pick a foreground clip with positive saliency."""
    eligible = np.flatnonzero((label.foreground == 1) & (label.saliency > 0))
    if eligible.size == 0:
        raise ValueError("no clip with foreground=1 and saliency>0 to serve as positive")
    return int(rng.choice(eligible))


def saliency_intra_loss(
    cosines,
    label: UnifiedLabel,
    rng_seed: int = 0,
    weights: LossWeights = LossWeights(),
    positive: int | None = None,
) -> LossReport:
    """Within-video contrastive saliency.

    A random foreground clip acts as the positive; every clip with strictly
    lower labelled saliency is a negative.  The loss is the softmax
    cross-entropy of the positive over {positive} + negatives at
    temperature ``weights.tau``.  With no negatives the term is 0.
    """
    c = np.asarray(cosines, dtype=np.float64)
    if c.ndim != 1 or c.shape[0] != len(label):
        raise ValueError(f"cosines shape {c.shape} does not match label length {len(label)}")
    if not np.isfinite(c).all():
        raise ValueError("cosines must be finite")
    if positive is None:
        positive = sample_positive(label, np.random.default_rng(rng_seed))
    elif not (label.foreground[positive] == 1 and label.saliency[positive] > 0):
        raise ValueError(f"clip {positive} is not an eligible positive")
    grad = np.zeros_like(c)
    omega = np.flatnonzero(label.saliency < label.saliency[positive])
    if omega.size == 0:
        warnings.warn(
            "no clip has strictly lower saliency than the positive; intra loss is 0",
            GroundingWarning,
        )
        return LossReport(0.0, {"cosines": grad}, {"positive": positive, "num_negatives": 0})
    pool = np.concatenate(([positive], omega))
    z = c[pool] / weights.tau
    value = float(_logsumexp(z) - z[0])
    q = np.exp(z - _logsumexp(z))
    grad[pool] = q / weights.tau
    grad[positive] -= 1.0 / weights.tau
    return LossReport(
        value, {"cosines": grad}, {"positive": positive, "num_negatives": int(omega.size)}
    )


def saliency_inter_loss(pair_cosines, weights: LossWeights = LossWeights()) -> LossReport:
    """Cross-batch contrastive saliency on the positive-vs-sentence matrix.

    Row b is scored as softmax cross-entropy of the matched sentence
    (diagonal) against all sentences in the batch; the result is the mean
    over rows.  A single-item batch has nothing to contrast and scores 0.
    """
    m = np.asarray(pair_cosines, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"pairing matrix must be square and non-empty, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("pairing cosines must be finite")
    b = m.shape[0]
    z = m / weights.tau
    value = 0.0
    grad = np.zeros_like(m)
    for row in range(b):
        lse = _logsumexp(z[row])
        value += lse - z[row, row]
        q = np.exp(z[row] - lse)
        grad[row] = q / weights.tau
        grad[row, row] -= 1.0 / weights.tau
    return LossReport(value / b, {"pair_cosines": grad / b})


def _total_loss_arrays(
    logits: np.ndarray,
    offsets: np.ndarray,
    clip_emb: np.ndarray,
    sent_emb: np.ndarray,
    labels: Sequence[UnifiedLabel],
    timelines: Sequence[ClipTimeline],
    weights: LossWeights,
    positives: np.ndarray,
    aggregation: str,
):
    """Combined objective on raw arrays; returns (value, grads, components)."""
    b, l = logits.shape
    emb = EmbeddingBatch(clip_emb, sent_emb)
    w = weights

    g_logits = np.zeros_like(logits)
    g_offsets = np.zeros_like(offsets)
    g_clip = np.zeros_like(clip_emb)
    g_sent = np.zeros_like(sent_emb)

    if aggregation == "per_video":
        video_weight = np.full(b, 1.0 / b)
        clip_scale = np.ones(b)
        fg_scale = np.ones(b)
    elif aggregation == "per_clip":
        # weight each video's mean terms back into per-clip sums over the batch
        total_clips = float(b * l)
        video_weight = np.full(b, 1.0 / total_clips)
        clip_scale = np.full(b, float(l))
        fg_scale = np.array([float(max(1, lab.foreground.sum())) for lab in labels])
    else:
        raise ValueError(f"unknown aggregation {aggregation!r}")

    parts = {"foreground": 0.0, "boundary": 0.0, "intra": 0.0, "inter": 0.0}
    value = 0.0

    cos_all, dcos_v, dcos_s = _cosine_with_grads(clip_emb, sent_emb[:, None, :])
    for v in range(b):
        lf = foreground_loss(logits[v], labels[v].foreground, w)
        lb = boundary_loss(offsets[v], labels[v], timelines[v], w)
        li = saliency_intra_loss(cos_all[v], labels[v], weights=w, positive=int(positives[v]))
        scale_f = video_weight[v] * clip_scale[v]
        scale_b = video_weight[v] * fg_scale[v]
        scale_c = video_weight[v] if aggregation == "per_video" else 1.0 / (b * l)
        value += scale_f * lf.value + scale_b * lb.value + w.lambda_intra * scale_c * li.value
        parts["foreground"] += scale_f * lf.value
        parts["boundary"] += scale_b * lb.value
        parts["intra"] += w.lambda_intra * scale_c * li.value
        g_logits[v] = scale_f * lf.grad("logits")
        g_offsets[v] = scale_b * lb.grad("offsets")
        gc = w.lambda_intra * scale_c * li.grad("cosines")  # (L,)
        g_clip[v] += gc[:, None] * dcos_v[v]
        g_sent[v] += (gc[:, None] * dcos_s[v]).sum(axis=0)

    pos_emb = clip_emb[np.arange(b), positives]  # (B, D)
    pair, dpair_v, dpair_s = _cosine_with_grads(pos_emb[:, None, :], sent_emb[None, :, :])
    inter = saliency_inter_loss(pair, w)
    scale_inter = w.lambda_inter if aggregation == "per_video" else w.lambda_inter * b / (b * l)
    value += scale_inter * inter.value
    parts["inter"] = scale_inter * inter.value
    gp = scale_inter * inter.grad("pair_cosines")  # (B, B)
    for v in range(b):
        g_clip[v, positives[v]] += (gp[v][:, None] * dpair_v[v]).sum(axis=0)
    g_sent += (gp[:, :, None] * dpair_s).sum(axis=0)

    grads = {
        "foreground_logits": g_logits,
        "offsets": g_offsets,
        "clip_embeddings": g_clip,
        "sentence_embeddings": g_sent,
    }
    return value, grads, parts


def total_loss(
    preds: Sequence[PredictionSet],
    emb: EmbeddingBatch,
    labels: Sequence[UnifiedLabel],
    timelines: Sequence[ClipTimeline],
    weights: LossWeights = LossWeights(),
    rng_seed: int = 0,
    aggregation: str = "per_video",
) -> LossReport:
    """Full objective over a batch of (video, query) records.

    Combines the foreground, boundary, and both contrastive terms.  With
    ``aggregation="per_video"`` each video contributes the mean of its own
    terms and videos are averaged; ``"per_clip"`` pools every clip across
    the batch with equal weight instead.  The same seed always selects the
    same contrastive positives.
    """
    b = len(preds)
    if not (b == len(labels) == len(timelines) == emb.batch_size):
        raise ValueError("preds, labels, timelines, and embeddings must agree on batch size")
    if b == 0:
        raise ValueError("empty batch")
    l = emb.num_clips
    for p, lab, tl in zip(preds, labels, timelines):
        if not (len(p) == len(lab) == tl.num_clips == l):
            raise ValueError("all records must share the embedding clip count")
    rng = np.random.default_rng(rng_seed)
    positives = np.array([sample_positive(lab, rng) for lab in labels], dtype=np.int64)
    logits = np.stack([p.foreground_logits for p in preds])
    offsets = np.stack([p.offsets for p in preds])
    value, grads, parts = _total_loss_arrays(
        logits,
        offsets,
        np.asarray(emb.clip_embeddings, dtype=np.float64),
        np.asarray(emb.sentence_embeddings, dtype=np.float64),
        labels,
        timelines,
        weights,
        positives,
        aggregation,
    )
    return LossReport(
        value,
        grads,
        {"positives": positives, "components": parts, "aggregation": aggregation},
    )
