"""Turn grammar: tripartite messages and the five-move action language.

Two surface grammars are supported:

* ``LABELED`` -- ``Thought:`` / ``Talk:`` / ``Action:`` lines (default)
* ``TAGGED``  -- ``<REASONING>`` / ``<DIALOGUE>`` / ``<ACTION>`` blocks

Actions read ``VERB [$amount] [(Nx codename)]``; the verb may be bracketed
(``[BUY]``) and is case-insensitive. A missing quantity/codename suffix is
filled with ``1`` and the scenario's product codename.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Literal, Sequence, Union

from .money import MoneyError, format_money, parse_amount

Role = Literal["buyer", "seller"]


class Grammar(enum.Enum):
    LABELED = "labeled"
    TAGGED = "tagged"


class FormatViolation(ValueError):
    """Raw agent output that does not follow the turn grammar."""

    def __init__(self, message: str, segment: str = "", raw: str = ""):
        super().__init__(message)
        self.segment = segment
        self.raw = raw


class ProtocolViolation(ValueError):
    """A well-formed turn that breaks a sequencing rule."""

    def __init__(self, rule: str, message: str):
        super().__init__(f"{rule}: {message}")
        self.rule = rule


@dataclass(frozen=True)
class Buy:
    amount: Decimal
    quantity: int = 1
    codename: str = ""


@dataclass(frozen=True)
class Sell:
    amount: Decimal
    quantity: int = 1
    codename: str = ""


@dataclass(frozen=True)
class Deal:
    amount: Decimal
    quantity: int = 1
    codename: str = ""


@dataclass(frozen=True)
class Reject:
    pass


@dataclass(frozen=True)
class Quit:
    pass


Action = Union[Buy, Sell, Deal, Reject, Quit]
PricedAction = (Buy, Sell, Deal)

_VERBS = {"BUY": Buy, "SELL": Sell, "DEAL": Deal, "REJECT": Reject, "QUIT": Quit}
_VERB_OF = {cls: verb for verb, cls in _VERBS.items()}


@dataclass(frozen=True)
class TurnMessage:
    role: Role
    reasoning: str
    dialogue: str
    action: Action
    # provenance, excluded from equality
    raw: str = field(default="", compare=False)
    action_text: str = field(default="", compare=False)
    regulated: bool = field(default=False, compare=False)
    substituted: bool = field(default=False, compare=False)


_ACTION_RE = re.compile(
    r"""^\[?(?P<verb>[A-Za-z]+)\]?
        (?:\s+(?P<amount>\$?\s*[0-9][0-9,]*(?:\.[0-9]+)?))?
        (?:\s*\(\s*(?P<qty>[0-9]+)\s*[xX]?\s+(?P<code>[^\s()]+)\s*\))?
        \s*$""",
    re.VERBOSE,
)


def parse_action(text: str, default_codename: str = "") -> Action:
    text = text.strip()
    m = _ACTION_RE.match(text)
    if not m:
        raise FormatViolation(f"unparseable action {text!r}", "action", text)
    verb = m.group("verb").upper()
    cls = _VERBS.get(verb)
    if cls is None:
        raise FormatViolation(f"unknown verb {m.group('verb')!r}", "action", text)
    amount, qty, code = m.group("amount"), m.group("qty"), m.group("code")
    if cls in (Reject, Quit):
        if amount or qty:
            raise FormatViolation(f"{verb} takes no price", "action", text)
        return cls()
    if amount is None:
        raise FormatViolation(f"{verb} requires an amount", "action", text)
    try:
        value = parse_amount(amount)
    except MoneyError as exc:
        raise FormatViolation(str(exc), "action", text) from exc
    if value <= 0:
        raise FormatViolation("amount must be positive", "action", text)
    quantity = int(qty) if qty else 1
    if quantity < 1:
        raise FormatViolation("quantity must be >= 1", "action", text)
    return cls(value, quantity, code if code else default_codename)


def format_action(action: Action, grammar: Grammar = Grammar.LABELED, default_codename: str | None = None) -> str:
    """Canonical action text.

    The tagged form omits the ``(Nx codename)`` suffix when it equals the
    defaults (quantity 1, ``default_codename``).
    """
    verb = _VERB_OF[type(action)]
    head = f"[{verb}]" if grammar is Grammar.TAGGED else verb
    if not isinstance(action, PricedAction):
        return head
    out = f"{head} {format_money(action.amount)}"
    implied = (
        grammar is Grammar.TAGGED
        and action.quantity == 1
        and default_codename is not None
        and action.codename == default_codename
    )
    if action.codename and not implied:
        out += f" ({action.quantity}x {action.codename})"
    elif not action.codename and action.quantity != 1:
        raise ValueError("quantity without codename cannot be serialized")
    return out


_LABELS = ("Thought:", "Talk:", "Action:")


def _parse_labeled(raw: str) -> tuple[str, str, str]:
    lines = raw.strip().splitlines()
    starts: dict[str, int] = {}
    for i, line in enumerate(lines):
        s = line.lstrip()
        for label in _LABELS:
            if s.startswith(label) and label not in starts:
                # the first Action line wins; later labels are ignored
                if "Action:" in starts:
                    break
                starts[label] = i
    for label in _LABELS:
        if label not in starts:
            raise FormatViolation(f"missing {label!r} segment", label.rstrip(":").lower(), raw)
    t, d, a = starts["Thought:"], starts["Talk:"], starts["Action:"]
    if not t < d < a:
        raise FormatViolation("segments must appear as Thought, Talk, Action", "order", raw)

    def body(start: int, stop: int, label: str) -> str:
        first = lines[start].lstrip()[len(label):]
        return "\n".join([first, *lines[start + 1 : stop]]).strip()

    return body(t, d, "Thought:"), body(d, a, "Talk:"), lines[a].lstrip()[len("Action:"):].strip()


_TAG_RE = {
    name: re.compile(rf"<{name}>(.*?)</{name}>", re.DOTALL)
    for name in ("REASONING", "DIALOGUE", "ACTION")
}


def _parse_tagged(raw: str) -> tuple[str, str, str]:
    parts = []
    for name in ("REASONING", "DIALOGUE", "ACTION"):
        m = _TAG_RE[name].search(raw)
        if not m:
            raise FormatViolation(f"missing <{name}> block", name.lower(), raw)
        parts.append(m.group(1).strip())
    return parts[0], parts[1], parts[2]


def parse_turn(raw: str, role: Role, grammar: Grammar = Grammar.LABELED, default_codename: str = "") -> TurnMessage:
    if grammar is Grammar.TAGGED:
        reasoning, dialogue, action_text = _parse_tagged(raw)
    else:
        reasoning, dialogue, action_text = _parse_labeled(raw)
    action = parse_action(action_text, default_codename)
    return TurnMessage(role, reasoning, dialogue, action, raw=raw, action_text=action_text)


def serialize_turn(turn: TurnMessage, grammar: Grammar = Grammar.LABELED, default_codename: str | None = None) -> str:
    action = format_action(turn.action, grammar, default_codename)
    if grammar is Grammar.TAGGED:
        return (
            f"<REASONING>{turn.reasoning}</REASONING>\n"
            f"<DIALOGUE>{turn.dialogue}</DIALOGUE>\n"
            f"<ACTION>{action}</ACTION>"
        )
    return f"Thought: {turn.reasoning}\nTalk: {turn.dialogue}\nAction: {action}"


def render_public(turn: TurnMessage, grammar: Grammar = Grammar.LABELED, default_codename: str | None = None) -> str:
    """What the opponent sees: dialogue and action, reasoning trimmed.

    A parsed turn keeps its original action wording; constructed turns use
    the canonical form.
    """
    action = turn.action_text or format_action(turn.action, grammar, default_codename)
    if grammar is Grammar.TAGGED:
        return f"<DIALOGUE>{turn.dialogue}</DIALOGUE>\n<ACTION>{action}</ACTION>"
    return f"Talk: {turn.dialogue}\nAction: {action}"


def extract_action(public_text: str, default_codename: str = "") -> Action:
    """Recover the action from a public (or full) turn in either grammar."""
    m = _TAG_RE["ACTION"].search(public_text)
    if m:
        return parse_action(m.group(1), default_codename)
    for line in public_text.splitlines():
        s = line.lstrip()
        if s.startswith("Action:"):
            return parse_action(s[len("Action:"):], default_codename)
    raise FormatViolation("no action found", "action", public_text)


_ROLE_VERBS = {
    "buyer": (Buy, Deal, Reject, Quit),
    "seller": (Sell, Deal, Reject, Quit),
}


def _last_offer(history: Sequence[TurnMessage], role: Role, kind: type) -> Action | None:
    for turn in reversed(history):
        if turn.role == role and isinstance(turn.action, kind):
            return turn.action
    return None


def validate_sequence(history: Sequence[TurnMessage], next_turn: TurnMessage, codename: str | None = None) -> None:
    """Raise :class:`ProtocolViolation` if ``next_turn`` may not follow ``history``."""
    role, action = next_turn.role, next_turn.action
    expected = "buyer" if len(history) % 2 == 0 else "seller"
    if role != expected:
        raise ProtocolViolation("turn-order", f"expected a {expected} turn, got {role}")
    if not isinstance(action, _ROLE_VERBS[role]):
        raise ProtocolViolation("role-verb", f"{role} may not use {_VERB_OF[type(action)]}")
    if codename is not None and isinstance(action, PricedAction) and action.codename != codename:
        raise ProtocolViolation("unknown-product", f"codename {action.codename!r} is not {codename!r}")
    if role == "buyer" and not history and isinstance(action, Deal):
        raise ProtocolViolation("first-action", "buyer must open with BUY or REJECT")
    if isinstance(action, Deal):
        other: Role = "seller" if role == "buyer" else "buyer"
        offer = _last_offer(history, other, Sell if role == "buyer" else Buy)
        if offer is None:
            raise ProtocolViolation("deal-without-offer", f"no prior {other} offer to accept")
        if (offer.amount, offer.quantity, offer.codename) != (action.amount, action.quantity, action.codename):
            raise ProtocolViolation(
                "deal-copy",
                f"DEAL {format_money(action.amount)} does not copy the {other}'s offer "
                f"{format_money(offer.amount)} ({offer.quantity}x {offer.codename})",
            )
