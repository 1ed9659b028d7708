"""Deterministic rule-based negotiators used as opponents and test doubles."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Sequence

from ..money import CENT, format_money, round_to_tick, to_money
from ..protocol import (
    Action,
    Buy,
    Deal,
    Grammar,
    Role,
    Sell,
    TurnMessage,
    extract_action,
    serialize_turn,
)
from .prompts import ContextFacts, parse_context


@dataclass(frozen=True)
class ScriptedPolicy:
    """Linear-concession negotiator.

    Buyer prices are fractions of the budget, seller prices fractions of the
    list price. ``respect_limit=False`` lets a policy cross its own private
    limit, which only test harnesses should want. ``offset`` is added to
    every proposed price after rounding.
    """

    role: Role
    opening_ratio: float
    concession_step: float = 0.0
    stubbornness: int = 0
    accept_threshold: float | None = None
    respect_limit: bool = True
    offset: Decimal = Decimal("0.00")
    tick: Decimal = CENT

    def __post_init__(self):
        if self.role not in ("buyer", "seller"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.opening_ratio <= 0 or self.concession_step < 0 or self.stubbornness < 0:
            raise ValueError("opening_ratio must be > 0; concession_step and stubbornness >= 0")
        if self.tick <= 0:
            raise ValueError("tick must be positive")


@dataclass(frozen=True)
class StateView:
    """Everything a scripted policy may look at: public actions plus its own economics."""

    facts: ContextFacts
    actions: tuple[tuple[Role, Action], ...] = ()

    @property
    def round(self) -> int:
        return len(self.actions) // 2 + 1

    def last(self, role: Role) -> Action | None:
        for r, a in reversed(self.actions):
            if r == role:
                return a
        return None


def _concessions(policy: ScriptedPolicy, round_: int) -> int:
    return max(0, round_ - 1 - policy.stubbornness)


def buyer_willingness(policy: ScriptedPolicy, facts: ContextFacts, round_: int) -> Decimal:
    ratio = policy.opening_ratio + policy.concession_step * _concessions(policy, round_)
    price = round_to_tick(float(facts.limit) * ratio, policy.tick)
    if policy.respect_limit:
        price = min(price, facts.limit)
    return max(to_money(price + policy.offset), CENT)


def seller_ask(policy: ScriptedPolicy, facts: ContextFacts, round_: int) -> Decimal:
    ratio = policy.opening_ratio - policy.concession_step * _concessions(policy, round_)
    price = round_to_tick(float(facts.list_price) * ratio, policy.tick)
    if policy.respect_limit:
        price = max(price, facts.limit)
    return max(to_money(price + policy.offset), CENT)


def scripted_next_turn(policy: ScriptedPolicy, view: StateView) -> TurnMessage:
    facts, k = view.facts, view.round
    code, qty = facts.codename, facts.quantity
    if policy.role == "buyer":
        offer = buyer_willingness(policy, facts, k)
        seller_move = view.last("seller")
        if isinstance(seller_move, Sell):
            ceiling = offer
            if policy.accept_threshold is not None:
                ceiling = max(ceiling, round_to_tick(float(facts.limit) * policy.accept_threshold, policy.tick))
            if policy.respect_limit:
                ceiling = min(ceiling, facts.limit)
            if seller_move.amount <= ceiling:
                return TurnMessage(
                    "buyer",
                    f"{format_money(seller_move.amount)} fits my limit of {format_money(facts.limit)}; take it.",
                    f"Alright, {format_money(seller_move.amount)} works for me.",
                    Deal(seller_move.amount, seller_move.quantity, seller_move.codename),
                )
        return TurnMessage(
            "buyer",
            f"Round {k}: my limit is {format_money(facts.limit)}, offering {format_money(offer)}.",
            f"I can pay {format_money(offer)} for it.",
            Buy(offer, qty, code),
        )

    ask = seller_ask(policy, facts, k)
    buyer_move = view.last("buyer")
    if isinstance(buyer_move, Buy):
        floor = ask
        if policy.accept_threshold is not None:
            floor = min(floor, round_to_tick(float(facts.list_price) * policy.accept_threshold, policy.tick))
        # an unconstrained seller takes any bid, even below its cost
        acceptable = not policy.respect_limit or (
            buyer_move.amount >= floor and buyer_move.amount >= facts.limit
        )
        if acceptable:
            return TurnMessage(
                "seller",
                f"{format_money(buyer_move.amount)} against my cost of {format_money(facts.limit)} is acceptable.",
                f"Deal at {format_money(buyer_move.amount)}.",
                Deal(buyer_move.amount, buyer_move.quantity, buyer_move.codename),
            )
    return TurnMessage(
        "seller",
        f"Round {k}: cost is {format_money(facts.limit)}, asking {format_money(ask)}.",
        f"The best I can do is {format_money(ask)}.",
        Sell(ask, qty, code),
    )


def history_actions(visible_history: Sequence[str], default_codename: str = "") -> tuple[tuple[Role, Action], ...]:
    """Public turn texts -> (role, action), buyer first."""
    out = []
    for i, text in enumerate(visible_history):
        role: Role = "buyer" if i % 2 == 0 else "seller"
        out.append((role, extract_action(text, default_codename)))
    return tuple(out)


@dataclass
class ScriptedAgent:
    policy: ScriptedPolicy
    grammar: Grammar = Grammar.LABELED

    @property
    def role(self) -> Role:
        return self.policy.role

    def next_turn(self, visible_history: Sequence[str], side_context: str, rng_seed: int) -> str:
        facts = parse_context(side_context)
        view = StateView(facts, history_actions(visible_history, facts.codename))
        turn = scripted_next_turn(self.policy, view)
        return serialize_turn(turn, self.grammar, facts.codename)


@dataclass
class SequenceAgent:
    """Emits a fixed list of raw replies in order (replay and test double)."""

    role: Role
    replies: Sequence[str]
    grammar: Grammar = Grammar.LABELED
    calls: int = field(default=0)

    def next_turn(self, visible_history: Sequence[str], side_context: str, rng_seed: int) -> str:
        if self.calls >= len(self.replies):
            raise IndexError(f"{self.role} replay exhausted after {self.calls} replies")
        reply = self.replies[self.calls]
        self.calls += 1
        return reply
