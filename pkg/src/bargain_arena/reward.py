"""Terminal surplus reward and scenario classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from decimal import Decimal
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .engine import Outcome

DEADLOCK_REWARD = 0.0
BOUNDARY_PENALTY = -1.0


class ScenarioClass(enum.Enum):
    MI = "MI"  # mutual interest, budget > cost
    CI = "CI"  # conflict of interest, budget < cost


def classify(budget: Decimal, cost: Decimal) -> ScenarioClass:
    if budget == cost:
        raise ValueError("budget equals cost; scenario class undefined")
    return ScenarioClass.MI if budget > cost else ScenarioClass.CI


def surplus_reward(budget: Decimal, cost: Decimal, price_final: Decimal) -> float:
    """Buyer savings normalised by the bargaining gap, clipped to [-1, 1]."""
    if budget == cost:
        raise ValueError("budget equals cost; reward undefined")
    r = float(budget - price_final) / float(abs(budget - cost))
    return min(1.0, max(-1.0, r))


@dataclass(frozen=True)
class RewardInputs:
    budget: Decimal
    cost: Decimal
    outcome: "Outcome"


def terminal_reward(inputs: RewardInputs) -> float:
    kind = inputs.outcome.kind
    if kind == "deal":
        return surplus_reward(inputs.budget, inputs.cost, inputs.outcome.price_final)
    if kind in ("deadlock_turn_limit", "quit"):
        return DEADLOCK_REWARD
    if kind == "buyer_boundary_violation":
        return BOUNDARY_PENALTY
    raise ValueError(f"unknown outcome kind {kind!r}")
