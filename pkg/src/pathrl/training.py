"""Desk-scale SFT-then-GRPO runs on the toy softmax policy.

Config files are JSON with these keys (all but ``prompts`` optional)::

    seed, group_size, clip_eps, kl_coef, std_floor, learning_rate,
    iterations, sft_learning_rate, sft_iterations, lambda,
    prompts: [{"prompt": str, "task": "cls"|..., "gt": {...wire gt...},
               "candidates": [str, ...], "sft_target": int}, ...]
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import grpo
from .parsing import parse_prompt_options
from .rewards import RewardConfig, score
from .wire import gt_from_wire

DEFAULT_CONFIG = Path(__file__).parent / "data" / "mcq_toy.json"


@dataclass
class ToyTask:
    prompts: list[str]
    tasks: list[str]
    candidates: list[list[str]]
    reward_table: np.ndarray  # (n_prompts, n_candidates) composite totals
    sft_targets: list[Optional[int]]


@dataclass
class ToyRunConfig:
    grpo: grpo.GrpoConfig
    reward: RewardConfig
    sft_learning_rate: float
    sft_iterations: int
    task: ToyTask


def load_config(path=DEFAULT_CONFIG) -> ToyRunConfig:
    with open(path) as fh:
        raw = json.load(fh)
    gcfg = grpo.GrpoConfig(
        group_size=int(raw.get("group_size", 8)),
        clip_eps=float(raw.get("clip_eps", 0.2)),
        kl_coef=float(raw.get("kl_coef", 0.001)),
        std_floor=float(raw.get("std_floor", 1e-8)),
        learning_rate=float(raw.get("learning_rate", 1.0)),
        iterations=int(raw.get("iterations", 500)),
        seed=int(raw.get("seed", 42)),
    )
    rcfg = RewardConfig(lam=float(raw.get("lambda", 1.0)))
    return ToyRunConfig(
        grpo=gcfg,
        reward=rcfg,
        sft_learning_rate=float(raw.get("sft_learning_rate", 1.0)),
        sft_iterations=int(raw.get("sft_iterations", 0)),
        task=build_task(raw["prompts"], rcfg),
    )


def build_task(entries: list[dict], cfg: RewardConfig) -> ToyTask:
    if not entries:
        raise ValueError("config has no prompts")
    n_cand = {len(e["candidates"]) for e in entries}
    if len(n_cand) != 1:
        raise ValueError("every prompt needs the same number of candidates")
    table = np.zeros((len(entries), n_cand.pop()))
    for i, e in enumerate(entries):
        gt = gt_from_wire(e["task"], e["gt"])
        options = parse_prompt_options(e["prompt"]) or None
        for j, cand in enumerate(e["candidates"]):
            table[i, j] = score(e["task"], cand, gt, cfg, options=options).total
    return ToyTask(
        prompts=[e["prompt"] for e in entries],
        tasks=[e["task"] for e in entries],
        candidates=[list(e["candidates"]) for e in entries],
        reward_table=table,
        sft_targets=[e.get("sft_target") for e in entries],
    )


def run(cfg: ToyRunConfig) -> list[dict]:
    """SFT from a uniform policy, then GRPO; returns one row per step."""
    task = cfg.task
    table = task.reward_table
    policy = grpo.PolicyParams.uniform(*table.shape)
    rows = []

    batch = [grpo.SftExample(i, t) for i, t in enumerate(task.sft_targets) if t is not None]
    if batch and cfg.sft_iterations > 0:
        for step in range(cfg.sft_iterations):
            policy, loss = grpo.sft_step(policy, batch, cfg.sft_learning_rate)
            rows.append({"phase": "sft", "step": step, "loss": loss,
                         "expected_reward": grpo.expected_reward(policy, table)})
        rows.append({"phase": "sft", "step": cfg.sft_iterations,
                     "loss": grpo.sft_loss(policy.logits, batch),
                     "expected_reward": grpo.expected_reward(policy, table)})

    ref = policy.copy()
    rng = np.random.default_rng(cfg.grpo.seed)
    prompts = list(range(table.shape[0]))
    reward_fn = lambda p, c: table[p, c]
    for step in range(cfg.grpo.iterations):
        policy, diag = grpo.grpo_step(policy, ref, prompts, reward_fn, cfg.grpo, rng,
                                      candidates=task.candidates, reward_table=table)
        rows.append({"phase": "grpo", "step": step, "mean_reward": diag.mean_reward,
                     "expected_reward": diag.expected_reward, "mean_kl": diag.mean_kl,
                     "clip_fraction": diag.clip_fraction, "objective": diag.objective})
    return rows
