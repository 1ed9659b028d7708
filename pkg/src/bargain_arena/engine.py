"""Negotiation MDP: alternating turns, seller regulation, buyer boundary rules.

A *round* is one buyer message followed by the seller's reply. ``turn_index``
counts completed rounds, so a terminal buyer action in round ``k`` ends the
episode with ``turns_used = k - 1``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Callable, Literal, Sequence, Union

from .agents.prompts import Persona, assemble_buyer_prompt, assemble_seller_prompt
from .catalog import Product, Scenario
from .errors import InfrastructureError, UsageError
from .money import format_money, to_money
from .protocol import (
    Buy,
    Deal,
    FormatViolation,
    Grammar,
    PricedAction,
    ProtocolViolation,
    Quit,
    Reject,
    Role,
    Sell,
    TurnMessage,
    format_action,
    parse_turn,
    render_public,
    serialize_turn,
    validate_sequence,
)
from .reward import RewardInputs, classify, terminal_reward

OutcomeKind = Literal["deal", "deadlock_turn_limit", "quit", "buyer_boundary_violation"]

REFUSAL_DIALOGUE = "I can't agree to that. Make me another offer."


class EpisodeAborted(InfrastructureError):
    def __init__(self, seed: int, cause: Exception):
        super().__init__(f"episode seed={seed} aborted: {cause}")
        self.seed = seed
        self.cause = cause


@dataclass(frozen=True)
class Outcome:
    kind: OutcomeKind
    turns_used: int
    price_final: Decimal | None = None
    by: Role | None = None
    reason: Literal["format", "over_budget"] | None = None
    detail: str = ""


@dataclass(frozen=True)
class EngineConfig:
    seller_max_attempts: int = 3
    # >1 resamples malformed buyer output; evaluation-only toggle
    buyer_max_attempts: int = 1
    description_chars: int | None = 600

    def __post_init__(self):
        if self.seller_max_attempts < 1 or self.buyer_max_attempts < 1:
            raise ValueError("max attempts must be >= 1")


@dataclass(frozen=True)
class EpisodeState:
    scenario: Scenario
    history: tuple[TurnMessage, ...] = ()
    turn_index: int = 0
    last_buyer_offer: Buy | None = None
    last_seller_offer: Sell | None = None
    outcome: Outcome | None = None
    violation_raw: str = ""

    @property
    def running(self) -> bool:
        return self.outcome is None

    @property
    def to_move(self) -> Role:
        return "buyer" if len(self.history) % 2 == 0 else "seller"


@dataclass(frozen=True)
class EpisodeRecord:
    scenario: Scenario
    outcome: Outcome
    reward: float
    first_buyer_offer: Decimal | None
    overshoot: bool
    transcript: tuple[TurnMessage, ...]
    seed: int
    violation_raw: str = ""
    grammars: tuple[Grammar, Grammar] = (Grammar.LABELED, Grammar.LABELED)

    @property
    def price_final(self) -> Decimal | None:
        return self.outcome.price_final

    @property
    def dealt(self) -> bool:
        return self.outcome.kind == "deal"


def _done(state: EpisodeState, **kw) -> EpisodeState:
    return replace(state, outcome=Outcome(turns_used=state.turn_index, **kw))


def step_buyer(state: EpisodeState, turn: TurnMessage | FormatViolation) -> EpisodeState:
    if not state.running or state.to_move != "buyer":
        raise UsageError("step_buyer called out of turn")
    sc = state.scenario
    if isinstance(turn, FormatViolation):
        return replace(_done(state, kind="buyer_boundary_violation", reason="format", detail=str(turn)),
                       violation_raw=turn.raw)
    history = state.history + (turn,)
    after = replace(state, history=history)
    try:
        validate_sequence(state.history, turn, sc.codename)
    except ProtocolViolation as exc:
        return _done(after, kind="buyer_boundary_violation", reason="format", detail=str(exc))
    action = turn.action
    if isinstance(action, Buy):
        if action.amount > sc.budget:
            return _done(after, kind="buyer_boundary_violation", reason="over_budget",
                         detail=f"offered {format_money(action.amount)} over budget {format_money(sc.budget)}")
        return replace(after, last_buyer_offer=action)
    if isinstance(action, Deal):
        return _done(after, kind="deal", price_final=action.amount, by="buyer")
    if isinstance(action, Quit):
        return _done(after, kind="quit", by="buyer")
    return after


SellerAttempt = Callable[[], Union[TurnMessage, FormatViolation]]


def _seller_fault(turn: TurnMessage | FormatViolation, cost: Decimal,
                  history: Sequence[TurnMessage] | None, codename: str | None) -> str | None:
    if isinstance(turn, FormatViolation):
        return f"format: {turn}"
    if history is not None:
        try:
            validate_sequence(history, turn, codename)
        except ProtocolViolation as exc:
            return f"sequence: {exc}"
    if isinstance(turn.action, (Sell, Deal)) and turn.action.amount < cost:
        return f"below cost: {format_money(turn.action.amount)} < {format_money(cost)}"
    return None


def substituted_reject() -> TurnMessage:
    return TurnMessage("seller", "", REFUSAL_DIALOGUE, Reject(), regulated=True, substituted=True)


def regulate_seller(
    attempt: SellerAttempt,
    cost: Decimal,
    max_attempts: int = 3,
    history: Sequence[TurnMessage] | None = None,
    codename: str | None = None,
) -> TurnMessage:
    """First attempt that is well formed and never prices below ``cost``.

    After ``max_attempts`` failures a canonical Reject is substituted. Turns
    accepted after at least one interception carry ``regulated=True``.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    for i in range(max_attempts):
        turn = attempt()
        if _seller_fault(turn, cost, history, codename) is None:
            return replace(turn, regulated=True) if i else turn
    return substituted_reject()


def step_seller(state: EpisodeState, produce: SellerAttempt, max_attempts: int = 3) -> EpisodeState:
    if not state.running or state.to_move != "seller":
        raise UsageError("step_seller called out of turn")
    sc = state.scenario
    turn = regulate_seller(produce, sc.cost, max_attempts, state.history, sc.codename)
    nxt = replace(state, history=state.history + (turn,), turn_index=state.turn_index + 1)
    action = turn.action
    if isinstance(action, Deal):
        return _done(nxt, kind="deal", price_final=action.amount, by="seller")
    if isinstance(action, Quit):
        return _done(nxt, kind="quit", by="seller")
    if isinstance(action, Sell):
        nxt = replace(nxt, last_seller_offer=action)
    if nxt.turn_index >= sc.max_turns:
        return _done(nxt, kind="deadlock_turn_limit")
    return nxt


def derive_seed(seed: int, *parts) -> int:
    h = hashlib.blake2b(repr((seed, *parts)).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "big") >> 1


def _parse(raw: str, role: Role, grammar: Grammar, codename: str) -> TurnMessage | FormatViolation:
    try:
        return parse_turn(raw, role, grammar, codename)
    except FormatViolation as exc:
        exc.raw = raw
        return exc


def finalize(state: EpisodeState, seed: int, grammars=(Grammar.LABELED, Grammar.LABELED)) -> EpisodeRecord:
    if state.running:
        raise UsageError("episode still running")
    sc = state.scenario
    buyer_turns = [t for t in state.history if t.role == "buyer"]
    first = buyer_turns[0].action if buyer_turns else None
    overshoot = any(
        isinstance(t.action, PricedAction) and t.action.amount > sc.budget for t in buyer_turns
    )
    reward = terminal_reward(RewardInputs(sc.budget, sc.cost, state.outcome))
    return EpisodeRecord(
        scenario=sc,
        outcome=state.outcome,
        reward=reward,
        first_buyer_offer=first.amount if isinstance(first, Buy) else None,
        overshoot=overshoot,
        transcript=state.history,
        seed=seed,
        violation_raw=state.violation_raw,
        grammars=tuple(grammars),
    )


def run_episode(buyer, seller, scenario: Scenario, config: EngineConfig = EngineConfig(), seed: int = 0) -> EpisodeRecord:
    code = scenario.codename
    _, buyer_ctx = assemble_buyer_prompt(scenario, config.description_chars)
    _, seller_ctx = assemble_seller_prompt(scenario, Persona.DEFAULT, config.description_chars)
    public: list[str] = []
    state = EpisodeState(scenario)
    bg, sg = buyer.grammar, seller.grammar
    try:
        while state.running:
            k = state.turn_index + 1
            parsed: TurnMessage | FormatViolation | None = None
            for attempt in range(config.buyer_max_attempts):
                raw = buyer.next_turn(tuple(public), buyer_ctx, derive_seed(seed, "buyer", k, attempt))
                parsed = _parse(raw, "buyer", bg, code)
                if isinstance(parsed, FormatViolation):
                    continue
                try:
                    validate_sequence(state.history, parsed, code)
                except ProtocolViolation:
                    continue
                break
            state = step_buyer(state, parsed)
            if isinstance(parsed, TurnMessage) and state.history and state.history[-1] is parsed:
                public.append(render_public(parsed, bg, code))
            if not state.running:
                break

            attempts = iter(range(config.seller_max_attempts))

            def produce() -> TurnMessage | FormatViolation:
                a = next(attempts)
                raw = seller.next_turn(tuple(public), seller_ctx, derive_seed(seed, "seller", k, a))
                return _parse(raw, "seller", sg, code)

            state = step_seller(state, produce, config.seller_max_attempts)
            turn = state.history[-1]
            if turn.substituted:
                turn = replace(turn, raw=serialize_turn(turn, sg, code))
                state = replace(state, history=state.history[:-1] + (turn,))
            public.append(render_public(turn, sg, code))
    except InfrastructureError as exc:
        raise EpisodeAborted(seed, exc) from exc
    return finalize(state, seed, (bg, sg))


# ---------------------------------------------------------------------------
# transcript log (one JSON object per episode)


def _num(d: Decimal | None):
    return None if d is None else float(d)


def scenario_to_json(sc: Scenario) -> dict:
    p = sc.product
    return {
        "codename": p.codename,
        "title": p.title,
        "category": p.category,
        "description": p.description,
        "list_price": _num(p.list_price),
        "budget": _num(sc.budget),
        "cost": _num(sc.cost),
        "quantity": sc.quantity,
        "max_turns": sc.max_turns,
        "class": classify(sc.budget, sc.cost).value,
    }


def scenario_from_json(d: dict) -> Scenario:
    product = Product(
        codename=d["codename"],
        title=d.get("title", d["codename"]),
        category=d.get("category", ""),
        list_price=to_money(d["list_price"]),
        description=d.get("description", ""),
    )
    return Scenario(product, to_money(d["budget"]), to_money(d["cost"]),
                    int(d.get("quantity", 1)), int(d.get("max_turns", 6)))


def record_to_json(rec: EpisodeRecord) -> dict:
    code = rec.scenario.codename
    bg, sg = rec.grammars
    turns = []
    for t in rec.transcript:
        g = bg if t.role == "buyer" else sg
        turns.append({
            "role": t.role,
            "reasoning": t.reasoning,
            "dialogue": t.dialogue,
            "action": format_action(t.action, Grammar.LABELED),
            "raw": t.raw or serialize_turn(t, g, code),
            "regulated": t.regulated,
            "substituted": t.substituted,
        })
    o = rec.outcome
    return {
        "seed": rec.seed,
        "scenario": scenario_to_json(rec.scenario),
        "grammars": {"buyer": bg.value, "seller": sg.value},
        "turns": turns,
        "violation": {"role": "buyer", "raw": rec.violation_raw} if rec.violation_raw else None,
        "outcome": o.kind,
        "outcome_by": o.by,
        "outcome_reason": o.reason,
        "outcome_detail": o.detail,
        "price_final": _num(o.price_final),
        "reward": rec.reward,
        "turns_used": o.turns_used,
        "overshoot": rec.overshoot,
        "first_buyer_offer": _num(rec.first_buyer_offer),
    }


def write_transcripts(records: Sequence[EpisodeRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_json(rec), ensure_ascii=False, sort_keys=True) + "\n")
