"""Preference-distribution losses and their gradients.

Implements the pairwise (Bradley-Terry style) negative log-likelihood with a
target reward margin, its listwise (Plackett-Luce style) generalization with
a rank-scaled margin, the log-probability reward, and the direct preference
cost objective used as a degenerate baseline. Everything is computed in the
log domain with log-sum-exp stabilization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .collision_geometry import RepellerParams, mode_repeller_cost, repeller_cost_grad
from .mode_aggregation import log_softmax, softmax
from .scene_model import JointModeSet

DEFAULT_BETA = 2.0
DEFAULT_GAMMA = 5.0


@dataclass(frozen=True)
class SimPOConfig:
    beta: float = DEFAULT_BETA
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


def simpo_reward(scene_prob: float, beta: float = DEFAULT_BETA) -> float:
    """Reward of a mode: beta * log of its predicted probability."""
    if scene_prob <= 0:
        raise ValueError("scene probability must be positive")
    return beta * float(np.log(scene_prob))


def _log_sigmoid(x: float) -> float:
    # stable -softplus(-x)
    if x >= 0:
        return -np.log1p(np.exp(-x))
    return x - np.log1p(np.exp(x))


def bt_nll(reward_w: float, reward_l: float, gamma: float = 0.0) -> float:
    """Pairwise margin loss: -log sigmoid(reward_w - reward_l - gamma)."""
    return -_log_sigmoid(reward_w - reward_l - gamma)


def _check_permutation(ranking: np.ndarray, k: int) -> np.ndarray:
    tau = np.asarray(ranking, dtype=np.int64)
    if tau.shape != (k,) or not np.array_equal(np.sort(tau), np.arange(k)):
        raise ValueError(f"ranking must be a permutation of 0..{k - 1}")
    return tau


def pl_nll(rewards: np.ndarray, ranking: np.ndarray, gamma: float = 0.0) -> float:
    """Listwise ranking loss with rank-scaled target margin.

    rewards[i] is the reward of mode i; ranking lists mode indices best
    first. Stage k (1-based) compares reward[tau(k)] + k*gamma against
    log-sum-exp over j >= k of reward[tau(j)] + j*gamma.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    k = rewards.shape[0]
    tau = _check_permutation(ranking, k)
    scores = rewards[tau] + gamma * np.arange(1, k + 1)
    loss = 0.0
    for i in range(k):
        tail = scores[i:]
        m = tail.max()
        loss += m + np.log(np.sum(np.exp(tail - m))) - scores[i]
    return float(loss)


def pl_nll_from_logits(scene_logits: np.ndarray, ranking: np.ndarray,
                       config: SimPOConfig) -> float:
    """pl_nll composed with rewards = beta * log_softmax(scene_logits)."""
    rewards = config.beta * log_softmax(scene_logits)
    return pl_nll(rewards, ranking, config.gamma)


def pl_nll_grad(scene_logits: np.ndarray, ranking: np.ndarray,
                config: SimPOConfig) -> np.ndarray:
    """Analytic gradient of pl_nll_from_logits with respect to scene logits."""
    z = np.asarray(scene_logits, dtype=np.float64)
    k = z.shape[0]
    tau = _check_permutation(ranking, k)
    rewards = config.beta * log_softmax(z)
    scores = rewards[tau] + config.gamma * np.arange(1, k + 1)
    # dL/dscores, in ranking order
    d_scores = np.zeros(k)
    for i in range(k):
        tail = scores[i:]
        m = tail.max()
        w = np.exp(tail - m)
        d_scores[i:] += w / w.sum()
        d_scores[i] -= 1.0
    d_rewards = np.zeros(k)
    d_rewards[tau] = d_scores
    # rewards = beta * (z - logsumexp(z)); Jacobian is beta * (I - 1 p^T)
    p = softmax(z)
    return config.beta * (d_rewards - d_rewards.sum() * p)


def direct_cost_loss(joint: JointModeSet, ground_truth: np.ndarray,
                     lam: float, repeller_params: RepellerParams | None = None
                     ) -> tuple[float, np.ndarray]:
    """Mean preference cost over modes plus its gradient w.r.t. positions.

    Returns (loss, grad) with grad shaped like joint.modes. The endpoint
    displacement term is non-differentiable at exact hits; its gradient is
    taken as 0 there, matching the hinge convention of the repeller.
    """
    params = repeller_params or RepellerParams()
    modes = joint.modes
    gt = np.asarray(ground_truth, dtype=np.float64)
    k, a = modes.shape[0], modes.shape[1]
    loss = 0.0
    grad = np.zeros_like(modes)
    for m in range(k):
        end_err = modes[m, :, -1, :] - gt[:, -1, :]          # (A, 2)
        dist = np.linalg.norm(end_err, axis=-1)
        loss += float(dist.mean()) + lam * mode_repeller_cost(modes[m], params)
        safe = np.where(dist > 0, dist, 1.0)
        grad[m, :, -1, :] += np.where(dist[:, None] > 0,
                                      end_err / safe[:, None], 0.0) / a
        grad[m] += lam * repeller_cost_grad(modes[m], params)
    loss /= k
    grad /= k
    return loss, grad
