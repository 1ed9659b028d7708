"""Desk-scale group-relative policy optimisation of a parametric buyer.

The buyer is a handful of categorical heads over exactly the behaviours the
metrics observe:

* ``anchor``  -- opening offer as a fraction of the budget
* ``step``    -- per-round increase of the offer, as a fraction of the budget
* ``quit``    -- per-round walk-away decision

Offers are *not* capped at the budget; the boundary penalty is what teaches
the policy to stay under it. The buyer accepts a standing seller offer once
it is no higher than the offer it was about to make.

Episodes run through the full text protocol and engine, so rewards are the
same verifiable terminal rewards used everywhere else.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Literal, Sequence

import numpy as np

from .agents.prompts import parse_context
from .agents.scripted import ScriptedAgent, ScriptedPolicy, history_actions
from .catalog import Scenario
from .engine import EngineConfig, EpisodeRecord, derive_seed, run_episode
from .metrics import MetricsSummary, aggregate, outcome_row
from .money import format_money, round_to_tick
from .protocol import Buy, Deal, Grammar, Quit, Sell, TurnMessage, serialize_turn

log = logging.getLogger(__name__)

ANCHOR_BINS = tuple(round(0.1 * i, 1) for i in range(1, 11))
STEP_BINS = (0.0, 0.05, 0.10, 0.15, 0.20, 0.30)
ADVANTAGE_EPS = 1e-8

Head = Literal["anchor", "step", "quit"]


def group_advantages(rewards: Sequence[float], epsilon: float = ADVANTAGE_EPS) -> list[float]:
    """(R - mean) / (population sd + epsilon); constant groups map to zeros."""
    if len(rewards) == 0:
        raise ValueError("group_advantages of an empty group")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    r = np.asarray(rewards, dtype=float)
    if np.all(r == r[0]):
        return [0.0] * len(r)
    sd = float(np.sqrt(np.mean((r - r.mean()) ** 2)))
    return list((r - r.mean()) / (sd + epsilon))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class Choice:
    head: Head
    row: int
    index: int


@dataclass(frozen=True)
class ToyBuyerPolicy:
    """Categorical heads over the anchor/step grids plus a per-round quit head.

    Grid heads are ordinal: each row holds ``(centre, log_precision)`` and the
    logit of bin ``k`` is ``-exp(log_precision) * (k - centre) ** 2``, so mass
    far from the preferred bin dies off quadratically in logit space once the
    precision grows. The quit head keeps free ``(continue, quit)`` logits.
    """

    anchor: np.ndarray  # (1, 2): centre, log-precision over ANCHOR_BINS
    step: np.ndarray  # (max_turns - 1, 2); row r is round r + 2
    quit_logits: np.ndarray  # (max_turns, 2)

    @classmethod
    def initial(cls, max_turns: int = 6, quit_bias: float = -2.0, log_precision: float = -4.0) -> "ToyBuyerPolicy":
        quit = np.zeros((max_turns, 2))
        quit[:, 1] = quit_bias
        anchor = np.array([[(len(ANCHOR_BINS) - 1) / 2, log_precision]])
        step = np.tile([(len(STEP_BINS) - 1) / 2, log_precision], (max(max_turns - 1, 1), 1))
        return cls(anchor, step, quit)

    def params(self, head: Head) -> np.ndarray:
        return {"anchor": self.anchor, "step": self.step, "quit": self.quit_logits}[head]

    def logits(self, head: Head) -> np.ndarray:
        if head == "quit":
            return self.quit_logits
        p = self.params(head)
        k = np.arange(len(ANCHOR_BINS if head == "anchor" else STEP_BINS))
        return -np.exp(p[:, 1:2]) * (k[None, :] - p[:, 0:1]) ** 2

    def logit_jacobian(self, head: Head, row: int) -> np.ndarray:
        """d logits[row] / d params[row], shape (bins, n_params)."""
        if head == "quit":
            return np.eye(2)
        centre, rho = self.params(head)[row]
        k = np.arange(len(ANCHOR_BINS if head == "anchor" else STEP_BINS))
        prec = np.exp(rho)
        return np.stack([2 * prec * (k - centre), -prec * (k - centre) ** 2], axis=1)

    def probs(self, head: Head) -> np.ndarray:
        return _softmax(self.logits(head))

    def sample(self, head: Head, row: int, rng: np.random.Generator) -> Choice:
        p = self.probs(head)[row]
        return Choice(head, row, int(rng.choice(len(p), p=p)))

    def log_prob(self, choices: Sequence[Choice]) -> float:
        return float(sum(np.log(self.probs(c.head)[c.row, c.index]) for c in choices))

    def as_table(self) -> list[tuple[str, float]]:
        rows = [("anchor.centre_bin", float(self.anchor[0, 0])), ("anchor.log_precision", float(self.anchor[0, 1]))]
        for r, (c, rho) in enumerate(self.step):
            rows += [(f"step[round={r + 2}].centre_bin", float(c)), (f"step[round={r + 2}].log_precision", float(rho))]
        for r, (cont, quit) in enumerate(self.quit_logits):
            rows += [(f"quit[round={r + 1}].continue", float(cont)), (f"quit[round={r + 1}].quit", float(quit))]
        return rows


class ToyBuyerAgent:
    """Plays one episode with a fixed policy, recording every sampled choice."""

    grammar = Grammar.LABELED
    role = "buyer"

    def __init__(self, policy: ToyBuyerPolicy):
        self.policy = policy
        self.choices: list[Choice] = []

    def _sample(self, head: Head, row: int, rng) -> int:
        c = self.policy.sample(head, row, rng)
        self.choices.append(c)
        return c.index

    def next_turn(self, visible_history: Sequence[str], side_context: str, rng_seed: int) -> str:
        facts = parse_context(side_context)
        actions = history_actions(visible_history, facts.codename)
        rng = np.random.default_rng(rng_seed)
        budget = float(facts.limit)
        k = len(actions) // 2 + 1
        own = [a for r, a in actions if r == "buyer" and isinstance(a, Buy)]
        if not own:
            offer = round_to_tick(budget * ANCHOR_BINS[self._sample("anchor", 0, rng)])
        else:
            row = min(k - 2, len(self.policy.step) - 1)
            offer = round_to_tick(float(own[-1].amount) + budget * STEP_BINS[self._sample("step", row, rng)])
        offer = max(offer, Decimal("0.01"))
        standing = actions[-1][1] if actions else None
        if isinstance(standing, Sell) and standing.amount <= offer:
            turn = TurnMessage("buyer", f"{format_money(standing.amount)} is within my plan.",
                               "Fine, that works.", Deal(standing.amount, standing.quantity, standing.codename))
        elif self._sample("quit", min(k - 1, len(self.policy.quit_logits) - 1), rng) == 1:
            turn = TurnMessage("buyer", "Not worth continuing.", "I'll pass on this one.", Quit())
        else:
            turn = TurnMessage("buyer", f"Planned offer {format_money(offer)}.",
                               f"Would you take {format_money(offer)}?", Buy(offer, facts.quantity, facts.codename))
        return serialize_turn(turn, self.grammar, facts.codename)


@dataclass(frozen=True)
class GroupBatch:
    scenario: Scenario
    rewards: list[float]
    advantages: list[float]
    trajectories: list[EpisodeRecord]
    choices: list[list[Choice]] = field(default_factory=list)


def rollout_group(
    policy: ToyBuyerPolicy,
    seller: ScriptedPolicy,
    scenario: Scenario,
    group_size: int,
    seed: int,
    engine_config: EngineConfig = EngineConfig(),
) -> GroupBatch:
    if group_size < 1:
        raise ValueError("group_size must be >= 1")
    seller_agent = ScriptedAgent(seller)
    records, choices = [], []
    for g in range(group_size):
        agent = ToyBuyerAgent(policy)
        records.append(run_episode(agent, seller_agent, scenario, engine_config, derive_seed(seed, "member", g)))
        choices.append(agent.choices)
    rewards = [r.reward for r in records]
    return GroupBatch(scenario, rewards, group_advantages(rewards), records, choices)


def policy_update(policy: ToyBuyerPolicy, batches: Sequence[GroupBatch], learning_rate: float) -> ToyBuyerPolicy:
    """One ascent step on the advantage-weighted log-likelihood of the taken choices,
    averaged over every trajectory in ``batches``."""
    if not batches:
        raise ValueError("policy_update needs at least one batch")
    heads: tuple[Head, ...] = ("anchor", "step", "quit")
    grads = {h: np.zeros_like(policy.params(h)) for h in heads}
    probs = {h: policy.probs(h) for h in heads}
    n = 0
    for batch in batches:
        for adv, picks in zip(batch.advantages, batch.choices):
            n += 1
            if adv == 0.0:
                continue
            for c in picks:
                score = -probs[c.head][c.row]
                score[c.index] += 1.0
                grads[c.head][c.row] += adv * (policy.logit_jacobian(c.head, c.row).T @ score)
    for h, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in head {h!r}")
    if n == 0 or learning_rate == 0.0 or not any(np.any(g) for g in grads.values()):
        return policy
    scale = learning_rate / n
    return ToyBuyerPolicy(
        policy.anchor + scale * grads["anchor"],
        policy.step + scale * grads["step"],
        policy.quit_logits + scale * grads["quit"],
    )


def batch_normalize(batches: Sequence[GroupBatch], epsilon: float = ADVANTAGE_EPS) -> list[GroupBatch]:
    """Replace per-group advantages with advantages normalised over the whole batch."""
    flat = [r for b in batches for r in b.rewards]
    adv = group_advantages(flat, epsilon)
    out, i = [], 0
    for b in batches:
        out.append(replace(b, advantages=adv[i : i + len(b.rewards)]))
        i += len(b.rewards)
    return out


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    group_size: int = 8
    iterations: int = 60
    learning_rate: float = 3e-5
    seed: int = 0
    max_turns: int = 6
    advantage_norm: Literal["group", "batch"] = "group"
    quit_bias: float = -2.0

    def __post_init__(self):
        for name in ("batch_size", "group_size", "max_turns"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.iterations < 0 or self.learning_rate < 0:
            raise ValueError("iterations and learning_rate must be non-negative")
        if self.advantage_norm not in ("group", "batch"):
            raise ValueError("advantage_norm must be 'group' or 'batch'")


@dataclass
class TrainResult:
    summaries: list[MetricsSummary]
    policy: ToyBuyerPolicy
    episodes: int = 0


def train_policy(config: TrainConfig, scenarios: Sequence[Scenario], seller: ScriptedPolicy,
                 policy: ToyBuyerPolicy | None = None) -> TrainResult:
    if not scenarios:
        raise ValueError("train needs at least one scenario")
    policy = policy or ToyBuyerPolicy.initial(config.max_turns, config.quit_bias)
    pick = random.Random(config.seed)
    pool = [replace(s, max_turns=config.max_turns) for s in scenarios]
    result = TrainResult([], policy)
    for it in range(config.iterations):
        batches = [
            rollout_group(policy, seller, pool[pick.randrange(len(pool))], config.group_size,
                          derive_seed(config.seed, "iter", it, b))
            for b in range(config.batch_size)
        ]
        if config.advantage_norm == "batch":
            batches = batch_normalize(batches)
        rows = [outcome_row(r) for b in batches for r in b.trajectories]
        summary = aggregate(rows)
        result.summaries.append(summary)
        result.episodes += len(rows)
        policy = policy_update(policy, batches, config.learning_rate)
        log.info("iter %d reward %.4f overshoot %.4f", it, summary.reward.mean, summary.overshoot_rate.mean)
    result.policy = policy
    return result


def train(config: TrainConfig, scenarios: Sequence[Scenario], seller: ScriptedPolicy) -> list[MetricsSummary]:
    return train_policy(config, scenarios, seller).summaries


def default_training_seller() -> ScriptedPolicy:
    # opens at list price and gives up a tenth of it per round, never below cost
    return ScriptedPolicy("seller", opening_ratio=1.0, concession_step=0.1)
