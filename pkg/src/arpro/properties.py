"""Repair-quality losses, guidance gradients, metrics, and conformal thresholds.

Four losses grade a candidate repair of an anomalous input against the
detector that flagged it: the repaired total score, the distance to the
original over the untouched region, and hinge penalties for degrading the
anomalous / non-anomalous regions. The same four quantities double as the
evaluation metrics. A split-conformal quantile of training scores gives the
acceptance threshold used for true-negative-rate reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detector import as_mask, _check_input
from .tensor import Array, Tensor

# Smoothing inside the masked-distance gradient so guidance stays defined at
# the distance minimum; loss *values* use the raw Euclidean norm.
L2_SMOOTH_EPS = 1e-12


@dataclass(frozen=True)
class PropertyWeights:
    """Nonnegative weights for the four loss terms."""

    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 1.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class Tolerances:
    """Slack for the constraint checks: delta2 bounds the masked distance,
    delta4 is the allowed score degradation off-region, delta the failure
    probability budget."""

    delta2: float = 1.0
    delta4: float = 0.0
    delta: float = 0.2

    def __post_init__(self):
        if self.delta2 <= 0.0:
            raise ValueError("delta2 must be positive")
        if self.delta4 < 0.0:
            raise ValueError("delta4 must be nonnegative")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class LossBreakdown:
    l1: float
    l2: float
    l3: float
    l4: float
    total: float

    def as_dict(self) -> dict:
        return {"l1": self.l1, "l2": self.l2, "l3": self.l3, "l4": self.l4, "total": self.total}


@dataclass(frozen=True)
class MetricsRecord:
    m_s: float
    m_d: float
    m_omega: float
    m_omega_bar: float

    def as_dict(self) -> dict:
        return {
            "m_s": self.m_s,
            "m_d": self.m_d,
            "m_omega": self.m_omega,
            "m_omega_bar": self.m_omega_bar,
        }


def _regions(detector, x_bad: Array, omega: Array):
    omega_bar = 1.0 - omega
    s_om_bad = detector.region_score(x_bad, omega)
    s_ob_bad = detector.region_score(x_bad, omega_bar)
    return omega_bar, s_om_bad, s_ob_bad


def loss_breakdown(detector, x_bad, x_fix, omega, tol: Tolerances, weights: PropertyWeights) -> LossBreakdown:
    """Evaluate the four losses of a repair and their weighted total."""
    x_bad = _check_input(x_bad, detector.n)
    x_fix = _check_input(x_fix, detector.n)
    omega = as_mask(omega, detector.n)
    omega_bar, s_om_bad, s_ob_bad = _regions(detector, x_bad, omega)

    l1 = detector.score(x_fix).total
    l2 = float(np.linalg.norm(omega_bar * (x_fix - x_bad)))
    l3 = max(0.0, detector.region_score(x_fix, omega) - s_om_bad)
    l4 = max(0.0, detector.region_score(x_fix, omega_bar) - s_ob_bad - tol.delta4)
    total = weights.lambda1 * l1 + weights.lambda2 * l2 + weights.lambda3 * l3 + weights.lambda4 * l4
    return LossBreakdown(l1=l1, l2=l2, l3=l3, l4=l4, total=float(total))


def guidance_loss_graph(detector, x_bad, x_fix: Tensor, omega, tol: Tolerances, weights: PropertyWeights) -> Tensor:
    """Tape graph of the weighted loss, differentiable in the repair iterate.

    The masked distance uses a smoothed norm sqrt(sum(..)^2 + eps) so its
    gradient exists at zero distance; hinge terms use relu, whose subgradient
    at the kink is zero.
    """
    x_bad = _check_input(x_bad, detector.n)
    omega = as_mask(omega, detector.n)
    omega_bar = 1.0 - omega
    s_om_bad = detector.region_score(x_bad, omega)
    s_ob_bad = detector.region_score(x_bad, omega_bar)
    beta_fix = detector.beta_value(x_fix.data)

    alpha_fix = detector.alpha_graph(x_fix)
    l1 = alpha_fix.sum() + beta_fix
    masked = (x_fix - Tensor(x_bad)) * Tensor(omega_bar)
    l2 = (masked.square().sum() + L2_SMOOTH_EPS).sqrt()
    l3 = ((alpha_fix * Tensor(omega)).sum() + beta_fix - s_om_bad).relu()
    l4 = ((alpha_fix * Tensor(omega_bar)).sum() + beta_fix - s_ob_bad - tol.delta4).relu()
    return (
        weights.lambda1 * l1
        + weights.lambda2 * l2
        + weights.lambda3 * l3
        + weights.lambda4 * l4
    )


def grad_guidance(detector, x_bad, x_fix, omega, tol: Tolerances, weights: PropertyWeights) -> Array:
    """Gradient of the weighted loss with respect to the repair iterate."""
    leaf = Tensor(_check_input(x_fix, detector.n), requires_grad=True)
    guidance_loss_graph(detector, x_bad, leaf, omega, tol, weights).backward()
    return leaf.gradient()


def metrics(detector, x_bad, x_fix, omega) -> MetricsRecord:
    """The four evaluation metrics of a repair (all lower is better)."""
    x_bad = _check_input(x_bad, detector.n)
    x_fix = _check_input(x_fix, detector.n)
    omega = as_mask(omega, detector.n)
    omega_bar, s_om_bad, s_ob_bad = _regions(detector, x_bad, omega)
    return MetricsRecord(
        m_s=detector.score(x_fix).total,
        m_d=float(np.linalg.norm(omega_bar * (x_fix - x_bad))),
        m_omega=detector.region_score(x_fix, omega) - s_om_bad,
        m_omega_bar=detector.region_score(x_fix, omega_bar) - s_ob_bad,
    )


def satisfaction_rate(breakdowns, tol: Tolerances) -> float:
    """Fraction of repairs meeting the distance and non-degradation constraints."""
    breakdowns = list(breakdowns)
    if not breakdowns:
        raise ValueError("satisfaction rate of an empty list")
    good = sum(1 for b in breakdowns if b.l2 <= tol.delta2 and b.l3 <= 0.0 and b.l4 <= 0.0)
    return good / len(breakdowns)


def conformal_threshold(train_scores, confidence: float) -> float:
    """Finite-sample split-conformal quantile of training scores.

    Returns the ceil((n+1)*confidence)-th smallest score, or +inf when that
    rank exceeds the sample size.
    """
    scores = np.asarray(list(train_scores), dtype=np.float64)
    if scores.size == 0:
        raise ValueError("conformal threshold of an empty sample")
    if not (0.0 < confidence < 1.0):
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    n = scores.size
    # Round before ceil so float residue in (n+1)*confidence cannot bump the rank.
    rank = math.ceil(round((n + 1) * confidence, 9))
    if rank > n:
        return float("inf")
    return float(np.sort(scores)[rank - 1])


def tnr(scores, threshold: float) -> float:
    """Fraction of scores at or below the threshold."""
    scores = np.asarray(list(scores), dtype=np.float64)
    if scores.size == 0:
        raise ValueError("TNR of an empty list")
    return float(np.mean(scores <= threshold))
