"""GRPO and SFT over a toy per-prompt softmax policy.

The policy holds one logit per (prompt, candidate response), so every
log-probability is exact and the clipped surrogate, k3 KL penalty and their
gradients can be checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import log_softmax, softmax


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 8
    clip_eps: float = 0.2
    kl_coef: float = 0.001
    std_floor: float = 1e-8
    population_std: bool = True
    learning_rate: float = 1.0
    iterations: int = 500
    seed: int = 42

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if self.clip_eps <= 0 or self.kl_coef < 0 or self.std_floor <= 0:
            raise ValueError("clip_eps > 0, kl_coef >= 0 and std_floor > 0 required")


@dataclass
class PolicyParams:
    """Logits, shape ``(n_prompts, n_candidates)``."""

    logits: np.ndarray

    def __post_init__(self):
        self.logits = np.array(self.logits, dtype=float)
        if self.logits.ndim != 2 or not np.all(np.isfinite(self.logits)):
            raise ValueError("logits must be a finite 2-D array")

    @classmethod
    def uniform(cls, n_prompts: int, n_candidates: int) -> "PolicyParams":
        return cls(np.zeros((n_prompts, n_candidates)))

    def log_probs(self) -> np.ndarray:
        return log_softmax(self.logits, axis=1)

    def probs(self) -> np.ndarray:
        return softmax(self.logits, axis=1)

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.logits.copy())


@dataclass
class GroupRollout:
    prompt_id: int
    responses: list
    rewards: np.ndarray
    advantages: np.ndarray
    logp_new: np.ndarray
    logp_old: np.ndarray
    logp_ref: np.ndarray
    samples: Optional[np.ndarray] = None  # candidate indices, toy policy only

    def __post_init__(self):
        g = len(self.responses)
        for name in ("rewards", "advantages", "logp_new", "logp_old", "logp_ref"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (g,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({g},)")
            setattr(self, name, arr)


@dataclass(frozen=True)
class SftExample:
    prompt_id: int
    target: int


def compute_advantages(rewards: Sequence[float], std_floor: float = 1e-8,
                       population: bool = True) -> np.ndarray:
    """Group-normalized advantages ``(r - mean) / std``.

    A group whose std falls below ``std_floor`` gets all-zero advantages.
    """
    r = np.asarray(rewards, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("need a group of at least 2 rewards")
    std = r.std(ddof=0 if population else 1)
    if std < std_floor:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def kl_estimate(logp_new, logp_ref):
    """k3 estimator ``rho - log(rho) - 1`` with ``rho = pi_ref / pi_new``."""
    d = np.asarray(logp_ref, dtype=float) - np.asarray(logp_new, dtype=float)
    out = np.expm1(d) - d
    return float(out) if out.ndim == 0 else out


def surrogate_terms(logp_new, logp_old, advantages, clip_eps: float):
    """Per-sample clipped surrogate and a mask of samples where the clip binds."""
    ratio = np.exp(np.asarray(logp_new) - np.asarray(logp_old))
    adv = np.asarray(advantages)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - clip_eps, 1 + clip_eps) * adv
    return np.minimum(unclipped, clipped), clipped < unclipped


def grpo_objective(rollout: GroupRollout, cfg: GrpoConfig) -> float:
    """Mean over the group of clipped surrogate minus ``beta`` times k3 KL (to maximize)."""
    surr, _ = surrogate_terms(rollout.logp_new, rollout.logp_old, rollout.advantages, cfg.clip_eps)
    kl = kl_estimate(rollout.logp_new, rollout.logp_ref)
    return float(np.mean(surr - cfg.kl_coef * kl))


def grpo_gradient(logits: np.ndarray, rollouts: Sequence[GroupRollout], cfg: GrpoConfig) -> np.ndarray:
    """Gradient w.r.t. the toy logits of the mean over rollouts of ``grpo_objective``.

    ``logp_new`` is recomputed from ``logits``; the rollouts supply samples,
    advantages and the old/reference log-probabilities.
    """
    logp = log_softmax(logits, axis=1)
    probs = np.exp(logp)
    grad = np.zeros_like(logits)
    for ro in rollouts:
        p, idx = ro.prompt_id, ro.samples
        lp_new = logp[p, idx]
        ratio = np.exp(lp_new - ro.logp_old)
        _, clip_active = surrogate_terms(lp_new, ro.logp_old, ro.advantages, cfg.clip_eps)
        # d/dlogp of each per-sample term; clipped terms are flat in theta
        coef = np.where(clip_active, 0.0, ratio * ro.advantages)
        coef -= cfg.kl_coef * (1.0 - np.exp(ro.logp_ref - lp_new))
        coef /= len(idx)
        # d logp(c) / d logits = onehot(c) - probs
        np.add.at(grad[p], idx, coef)
        grad[p] -= coef.sum() * probs[p]
    return grad / len(rollouts)


def grpo_loss_value(logits: np.ndarray, rollouts: Sequence[GroupRollout], cfg: GrpoConfig) -> float:
    """``grpo_objective`` averaged over rollouts with ``logp_new`` taken from ``logits``."""
    logp = log_softmax(logits, axis=1)
    vals = [grpo_objective(replace(ro, logp_new=logp[ro.prompt_id, ro.samples]), cfg) for ro in rollouts]
    return float(np.mean(vals))


@dataclass
class StepDiagnostics:
    mean_reward: float
    mean_kl: float
    clip_fraction: float
    expected_reward: float
    objective: float


RewardFn = Callable[[int, int], float]


def expected_reward(policy: PolicyParams, reward_table: np.ndarray) -> float:
    """Mean over prompts of the exact expected reward under ``policy``."""
    return float(np.mean(np.sum(policy.probs() * reward_table, axis=1)))


def grpo_step(policy: PolicyParams, ref: PolicyParams, prompts: Sequence[int],
              reward_fn: RewardFn, cfg: GrpoConfig, rng: np.random.Generator,
              candidates: Optional[Sequence[Sequence[str]]] = None,
              reward_table: Optional[np.ndarray] = None) -> tuple[PolicyParams, StepDiagnostics]:
    """One GRPO update: sample groups from a frozen snapshot, score, ascend.

    ``reward_fn(prompt_id, candidate_index)`` returns the scalar reward.
    """
    old = policy.copy()
    logp_old = old.log_probs()
    probs_old = np.exp(logp_old)
    logp_ref = ref.log_probs()

    rollouts = []
    for p in prompts:
        idx = rng.choice(probs_old.shape[1], size=cfg.group_size, p=probs_old[p])
        rewards = np.array([reward_fn(p, int(c)) for c in idx], dtype=float)
        adv = compute_advantages(rewards, cfg.std_floor, cfg.population_std)
        responses = [candidates[p][c] for c in idx] if candidates is not None else idx.tolist()
        rollouts.append(GroupRollout(
            prompt_id=p, responses=responses, rewards=rewards, advantages=adv,
            logp_new=logp_old[p, idx], logp_old=logp_old[p, idx], logp_ref=logp_ref[p, idx],
            samples=idx,
        ))

    grad = grpo_gradient(old.logits, rollouts, cfg)
    objective = grpo_loss_value(old.logits, rollouts, cfg)
    new = PolicyParams(old.logits + cfg.learning_rate * grad)

    clip_hits = [surrogate_terms(ro.logp_new, ro.logp_old, ro.advantages, cfg.clip_eps)[1] for ro in rollouts]
    diag = StepDiagnostics(
        mean_reward=float(np.mean([ro.rewards.mean() for ro in rollouts])),
        mean_kl=float(np.mean([kl_estimate(ro.logp_new, ro.logp_ref).mean() for ro in rollouts])),
        clip_fraction=float(np.mean(np.concatenate(clip_hits))),
        expected_reward=expected_reward(new, reward_table) if reward_table is not None else float("nan"),
        objective=objective,
    )
    return new, diag


def sft_loss(logits: np.ndarray, batch: Sequence[SftExample]) -> float:
    """Mean negative log-likelihood of the batch targets."""
    if not batch:
        raise ValueError("empty SFT batch")
    logp = log_softmax(logits, axis=1)
    n_cand = logits.shape[1]
    for ex in batch:
        if not 0 <= ex.target < n_cand:
            raise ValueError(f"target {ex.target} outside the {n_cand}-candidate set")
    return float(-np.mean([logp[ex.prompt_id, ex.target] for ex in batch]))


def sft_gradient(logits: np.ndarray, batch: Sequence[SftExample]) -> np.ndarray:
    probs = softmax(logits, axis=1)
    grad = np.zeros_like(logits)
    for ex in batch:
        grad[ex.prompt_id] += probs[ex.prompt_id]
        grad[ex.prompt_id, ex.target] -= 1.0
    return grad / len(batch)


def sft_step(policy: PolicyParams, batch: Sequence[SftExample],
             learning_rate: float) -> tuple[PolicyParams, float]:
    """One gradient-descent step on the cross-entropy; returns the pre-step loss."""
    loss = sft_loss(policy.logits, batch)
    grad = sft_gradient(policy.logits, batch)
    return PolicyParams(policy.logits - learning_rate * grad), loss
