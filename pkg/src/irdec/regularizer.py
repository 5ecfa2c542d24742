"""Adaptive behaviour-cloning regularization.

A Gaussian kernel density model fitted once over the demo (familiar) states
scores each online batch; the behaviour-cloning weight lambda_reg moves with
the difference between consecutive batch scores, normalized by the running
maximum score, and is clipped to a fixed range. The BC loss itself is the
negative log-density of demonstrated actions under the actor's squashed
Gaussian.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

BANDWIDTH_FLOOR = 1e-3


@dataclass
class KdeModel:
    """Product-Gaussian-kernel density over a fixed reference point set."""

    reference_points: np.ndarray  # (n, d)
    bandwidth: np.ndarray  # (d,) per-dimension
    log_norm: float  # log of the per-point kernel normalization

    def __post_init__(self):
        # Bandwidth-scaled copies let the exponent expand into a single
        # matrix product instead of a (query, ref, dim) broadcast.
        self._scaled_ref = self.reference_points / self.bandwidth
        self._scaled_sq = 0.5 * np.sum(self._scaled_ref ** 2, axis=1)

    @property
    def dim(self):
        return self.reference_points.shape[1]


def fit_kde(states) -> KdeModel:
    """Fit with Scott's rule: h_d = n**(-1/(d+4)) * std_d, floored at 1e-3."""
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[0] < 2:
        raise ValueError("need at least two reference states")
    n, d = states.shape
    std = states.std(axis=0)
    if np.all(std == 0.0):
        warnings.warn("all KDE reference points identical; bandwidth floored")
    bandwidth = np.maximum(n ** (-1.0 / (d + 4)) * std, BANDWIDTH_FLOOR)
    log_norm = float(-0.5 * d * np.log(2.0 * np.pi) - np.log(bandwidth).sum())
    return KdeModel(states.copy(), bandwidth, log_norm)


def log_density(kde: KdeModel, points) -> np.ndarray:
    """Log KDE density at each query point, via a stable log-sum-exp."""
    points = np.asarray(points, dtype=np.float64)
    single = points.ndim == 1
    if single:
        points = points[None, :]
    scaled = points / kde.bandwidth
    # -0.5 * ||p - r||^2 expanded so the cross term is one matrix product.
    expo = (scaled @ kde._scaled_ref.T
            - 0.5 * np.sum(scaled ** 2, axis=1)[:, None]
            - kde._scaled_sq[None, :])  # (n_query, n_ref)
    peak = expo.max(axis=1, keepdims=True)
    log_sum = peak[:, 0] + np.log(np.exp(expo - peak).sum(axis=1))
    out = log_sum - np.log(kde.reference_points.shape[0]) + kde.log_norm
    return out[0] if single else out


def density(kde: KdeModel, points) -> np.ndarray:
    return np.exp(log_density(kde, points))


def batch_score(kde: KdeModel, states) -> float:
    """Geometric-mean density of the batch: exp of the mean log-density."""
    states = np.asarray(states, dtype=np.float64)
    if states.size == 0:
        raise ValueError("empty batch")
    return float(np.exp(log_density(kde, states).mean()))


@dataclass
class RegSchedule:
    lambda_reg: float
    lambda_min: float
    lambda_max: float
    rate: float
    prev_score: float = None
    max_score: float = 0.0

    def __post_init__(self):
        if not self.lambda_min <= self.lambda_reg <= self.lambda_max:
            raise ValueError("lambda_reg must start within its clip bounds")


def init_schedule(lambda_0=0.01, lambda_min=0.001, lambda_max=1.0,
                  rate=0.05) -> RegSchedule:
    return RegSchedule(float(lambda_0), float(lambda_min), float(lambda_max),
                       float(rate))


def update_lambda(sched: RegSchedule, m_curr: float) -> float:
    """Move lambda_reg by rate * (score delta / running max), clipped.

    The first observed score only seeds the comparison; the running maximum
    is refreshed before the division, so the ratio never exceeds 1 in
    magnitude for the current batch. A zero running maximum skips the
    increment entirely.
    """
    m_curr = float(m_curr)
    if sched.prev_score is None:
        sched.prev_score = m_curr
        sched.max_score = max(sched.max_score, m_curr)
        return sched.lambda_reg
    sched.max_score = max(sched.max_score, m_curr)
    if sched.max_score > 0.0:
        increment = (m_curr - sched.prev_score) / sched.max_score * sched.rate
        sched.lambda_reg = float(
            np.clip(sched.lambda_reg + increment, sched.lambda_min, sched.lambda_max)
        )
    sched.prev_score = m_curr
    return sched.lambda_reg


def bc_loss(policy, demo_states, demo_actions) -> float:
    """Mean negative log-likelihood of demonstrated actions under the actor."""
    demo_states = np.asarray(demo_states, dtype=np.float64)
    demo_actions = np.asarray(demo_actions, dtype=np.float64)
    if demo_states.shape[0] == 0:
        raise ValueError("empty demo batch")
    return float(-policy.log_prob(demo_states, demo_actions).mean())
