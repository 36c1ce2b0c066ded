"""Central finite-difference verification of the analytic loss gradients.

Each registered loss comes with a sampler that draws a random, well-posed
evaluation point away from the loss's non-differentiable sets (interval
endpoint ties, smooth-L1 seams).  The checker perturbs every scalar input
by +-epsilon and compares the secant slope against the analytic gradient.

The relative-error denominator is floored at max(1, |loss|) * 2 * epsilon:
a central difference carries roundoff of order |loss| * ulp / epsilon, so
gradient entries below that noise floor cannot be certified in relative
terms and are compared against the floor instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ClipTimeline, Interval, UnifiedLabel
from .losses import (
    LossWeights,
    _total_loss_arrays,
    boundary_loss,
    foreground_loss,
    giou_1d,
    saliency_inter_loss,
    saliency_intra_loss,
    sample_positive,
    smooth_l1,
)

_KINK_MARGIN = 1e-3
_MAX_RESAMPLES = 200


@dataclass(frozen=True)
class GradCheckResult:
    loss_name: str
    points_checked: int
    points_skipped: int
    max_rel_error: float
    per_input: dict
    epsilon: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "loss_name": self.loss_name,
            "points_checked": self.points_checked,
            "points_skipped": self.points_skipped,
            "max_rel_error": self.max_rel_error,
            "per_input": dict(self.per_input),
            "epsilon": self.epsilon,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def _random_label(rng: np.random.Generator, n: int) -> UnifiedLabel:
    """Label with at least one foreground and one background clip."""
    while True:
        fg = rng.random(n) < 0.5
        if 0 < fg.sum() < n:
            break
    d = np.zeros((n, 2))
    d[fg] = rng.uniform(0.05, 3.0, (int(fg.sum()), 2))
    s = np.zeros(n)
    s[fg] = rng.uniform(0.1, 1.0, int(fg.sum()))
    return UnifiedLabel(fg.astype(int), d, s)


def _make_foreground(rng):
    n = 6
    targets = (rng.random(n) < 0.5).astype(float)
    w = LossWeights(lambda_f=float(rng.uniform(0.5, 2.0)))
    inputs = {"logits": rng.uniform(-4.0, 4.0, n)}

    def evaluate(ins):
        rep = foreground_loss(ins["logits"], targets, w)
        return rep.value, {"logits": rep.grad("logits")}

    return inputs, evaluate, lambda ins: math.inf


def _boundary_kink_distance(ins, label, timeline, w):
    """Distance to the nearest smooth-L1 seam or interval ordering/tie set."""
    d_hat = ins["offsets"]
    fg = np.flatnonzero(label.foreground == 1)
    t = timeline.timestamps()[fg]
    gt = label.offsets[fg]
    dist = math.inf
    residual = d_hat[fg] - gt
    if w.lambda_l1 > 0:
        dist = min(dist, float(np.min(np.abs(np.abs(residual) - w.smooth_l1_beta))))
    if w.lambda_iou > 0:
        pr_s = t - d_hat[fg, 0]
        pr_e = t + d_hat[fg, 1]
        lo = np.minimum(pr_s, pr_e)
        hi = np.maximum(pr_s, pr_e)
        gt_lo = t - gt[:, 0]
        gt_hi = t + gt[:, 1]
        inter_raw = np.minimum(hi, gt_hi) - np.maximum(lo, gt_lo)
        for gap in (pr_s - pr_e, lo - gt_lo, hi - gt_hi, inter_raw):
            dist = min(dist, float(np.min(np.abs(gap))))
    return dist


def _make_boundary(l1: bool):
    def make(rng):
        n = 6
        timeline = ClipTimeline(n, float(rng.uniform(0.5, 2.0)))
        label = _random_label(rng, n)
        if l1:
            w = LossWeights(lambda_l1=float(rng.uniform(0.5, 2.0)), lambda_iou=0.0)
        else:
            w = LossWeights(lambda_l1=0.0, lambda_iou=float(rng.uniform(0.5, 2.0)))
        offsets = label.offsets + rng.uniform(-2.0, 2.0, (n, 2))
        inputs = {"offsets": offsets}

        def evaluate(ins):
            rep = boundary_loss(ins["offsets"], label, timeline, w)
            return rep.value, {"offsets": rep.grad("offsets")}

        return inputs, evaluate, lambda ins: _boundary_kink_distance(ins, label, timeline, w)

    return make


def _make_intra(rng):
    n = 8
    label = _random_label(rng, n)
    w = LossWeights(tau=float(rng.uniform(0.05, 0.2)))
    positive = sample_positive(label, rng)
    inputs = {"cosines": rng.uniform(-1.0, 1.0, n)}

    def evaluate(ins):
        rep = saliency_intra_loss(ins["cosines"], label, weights=w, positive=positive)
        return rep.value, {"cosines": rep.grad("cosines")}

    return inputs, evaluate, lambda ins: math.inf


def _make_inter(rng):
    b = 4
    w = LossWeights(tau=float(rng.uniform(0.05, 0.2)))
    inputs = {"pair_cosines": rng.uniform(-1.0, 1.0, (b, b))}

    def evaluate(ins):
        rep = saliency_inter_loss(ins["pair_cosines"], w)
        return rep.value, {"pair_cosines": rep.grad("pair_cosines")}

    return inputs, evaluate, lambda ins: math.inf


def _make_giou(rng):
    def interval(center):
        half = rng.uniform(0.3, 4.0)
        return np.array([center - half, center + half])

    inputs = {"a": interval(rng.uniform(-3, 3)), "b": interval(rng.uniform(-3, 3))}

    def evaluate(ins):
        rep = giou_1d(Interval(*ins["a"]), Interval(*ins["b"]))
        return rep.value, {"a": rep.grad("a"), "b": rep.grad("b")}

    def kink(ins):
        (a_lo, a_hi), (b_lo, b_hi) = ins["a"], ins["b"]
        inter_raw = min(a_hi, b_hi) - max(a_lo, b_lo)
        return min(abs(a_hi - b_hi), abs(a_lo - b_lo), abs(inter_raw),
                   a_hi - a_lo, b_hi - b_lo)

    return inputs, evaluate, kink


def _make_smooth_l1(rng):
    beta = 1.0
    inputs = {"x": rng.uniform(-3.0, 3.0, 5)}

    def evaluate(ins):
        value, deriv = smooth_l1(ins["x"], beta)
        return float(np.sum(value)), {"x": deriv}

    def kink(ins):
        return float(np.min(np.abs(np.abs(ins["x"]) - beta)))

    return inputs, evaluate, kink


def _make_total(rng):
    b, n, dim = 2, 5, 3
    timelines = [ClipTimeline(n, 1.0) for _ in range(b)]
    labels = [_random_label(rng, n) for _ in range(b)]
    positives = np.array([sample_positive(lab, rng) for lab in labels])
    w = LossWeights(
        lambda_f=float(rng.uniform(0.5, 1.5)),
        lambda_l1=float(rng.uniform(0.5, 1.5)),
        lambda_iou=float(rng.uniform(0.5, 1.5)),
        lambda_inter=float(rng.uniform(0.5, 1.5)),
        lambda_intra=float(rng.uniform(0.5, 1.5)),
        tau=float(rng.uniform(0.07, 0.2)),
    )
    aggregation = "per_video" if rng.random() < 0.5 else "per_clip"

    def unit_rows(shape):
        m = rng.normal(size=shape)
        norms = np.linalg.norm(m, axis=-1, keepdims=True)
        return m / np.maximum(norms, 0.3)

    inputs = {
        "foreground_logits": rng.uniform(-3.0, 3.0, (b, n)),
        "offsets": np.stack([lab.offsets for lab in labels]) + rng.uniform(-1.5, 1.5, (b, n, 2)),
        "clip_embeddings": unit_rows((b, n, dim)),
        "sentence_embeddings": unit_rows((b, dim)),
    }

    def evaluate(ins):
        value, grads, _ = _total_loss_arrays(
            ins["foreground_logits"],
            ins["offsets"],
            ins["clip_embeddings"],
            ins["sentence_embeddings"],
            labels,
            timelines,
            w,
            positives,
            aggregation,
        )
        return value, grads

    def kink(ins):
        dist = math.inf
        for v in range(b):
            dist = min(
                dist,
                _boundary_kink_distance({"offsets": ins["offsets"][v]}, labels[v], timelines[v], w),
            )
        return dist

    return inputs, evaluate, kink


_REGISTRY: dict[str, Callable] = {
    "foreground": _make_foreground,
    "boundary_smooth_l1": _make_boundary(l1=True),
    "boundary_giou": _make_boundary(l1=False),
    "saliency_intra": _make_intra,
    "saliency_inter": _make_inter,
    "giou_1d": _make_giou,
    "smooth_l1": _make_smooth_l1,
    "total": _make_total,
}

REGISTERED_LOSSES = tuple(_REGISTRY)


def _central_difference(evaluate, inputs, epsilon):
    numeric = {}
    work = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    for key in inputs:
        flat = work[key].ravel()
        g = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up, _ = evaluate(work)
            flat[i] = orig - epsilon
            down, _ = evaluate(work)
            flat[i] = orig
            g[i] = (up - down) / (2.0 * epsilon)
        numeric[key] = g.reshape(work[key].shape)
    return numeric


def _relative_error(analytic, numeric, noise_floor):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), noise_floor)
    return np.abs(analytic - numeric) / denom


def grad_check(
    loss_name: str,
    inputs: dict | None = None,
    epsilon: float = 1e-5,
    tolerance: float = 1e-5,
    seed: int = 0,
    num_points: int = 100,
) -> GradCheckResult:
    """Compare analytic gradients against central differences.

    Without explicit ``inputs``, ``num_points`` random well-posed points are
    drawn from the loss's sampler (resampling away from kinks).  With
    explicit inputs a single point is checked; if it sits within the kink
    margin it is recorded as skipped instead of judged.
    """
    if loss_name not in _REGISTRY:
        raise ValueError(f"unknown loss {loss_name!r}; registered: {REGISTERED_LOSSES}")
    if epsilon <= 0 or tolerance <= 0:
        raise ValueError("epsilon and tolerance must be positive")
    rng = np.random.default_rng(seed)
    factory = _REGISTRY[loss_name]

    max_rel = 0.0
    per_input: dict[str, float] = {}
    checked = 0
    skipped = 0

    def run_point(point_inputs, evaluate):
        nonlocal max_rel, checked
        value, analytic = evaluate(point_inputs)
        numeric = _central_difference(evaluate, point_inputs, epsilon)
        noise_floor = max(1.0, abs(value)) * 2.0 * epsilon
        for key in point_inputs:
            err = float(np.max(_relative_error(analytic[key], numeric[key], noise_floor)))
            per_input[key] = max(per_input.get(key, 0.0), err)
            max_rel = max(max_rel, err)
        checked += 1

    if inputs is not None:
        default_inputs, evaluate, kink_distance = factory(rng)
        given = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
        if set(given) != set(default_inputs):
            raise ValueError(
                f"inputs must provide exactly {sorted(default_inputs)}, got {sorted(given)}"
            )
        if kink_distance(given) < _KINK_MARGIN:
            skipped += 1
        else:
            run_point(given, evaluate)
    else:
        for _ in range(num_points):
            for _ in range(_MAX_RESAMPLES):
                point_inputs, evaluate, kink_distance = factory(rng)
                if kink_distance(point_inputs) >= _KINK_MARGIN:
                    break
            else:
                raise RuntimeError(f"could not sample a non-kink point for {loss_name}")
            run_point(point_inputs, evaluate)

    return GradCheckResult(
        loss_name=loss_name,
        points_checked=checked,
        points_skipped=skipped,
        max_rel_error=max_rel,
        per_input=per_input,
        epsilon=epsilon,
        tolerance=tolerance,
        passed=(max_rel < tolerance),
    )
