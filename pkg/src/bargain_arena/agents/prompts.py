"""Prompt assembly for buyer and seller, with seller persona injection."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from decimal import Decimal
from functools import lru_cache
from importlib import resources

from ..catalog import Scenario
from ..money import format_money, parse_amount

PERSONA_PLACEHOLDER = "{persona_block}"
DEFAULT_DESCRIPTION_CHARS = 600


class Persona(enum.Enum):
    DEFAULT = "default"
    BEGGING = "begging"
    INSULTING = "insulting"
    UNYIELDING = "unyielding"


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files(__package__).joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")


@dataclass(frozen=True)
class PersonaSpec:
    kind: Persona
    block_text: str

    @classmethod
    def of(cls, kind: Persona | str) -> "PersonaSpec":
        kind = Persona(kind)
        if kind is Persona.DEFAULT:
            return cls(kind, "")
        return cls(kind, load_template(f"persona_{kind.value}").strip())


def _truncate(text: str, limit: int | None) -> str:
    if limit is None or len(text) <= limit:
        return text
    return text[:limit].rstrip() + " ..."


def _list_price_text(price: Decimal) -> str:
    # catalog listings print the float form, e.g. "$70.0"
    return f"${float(price)}"


def buyer_system_prompt() -> str:
    return load_template("buyer_system").rstrip("\n")


def seller_system_prompt(persona: PersonaSpec | Persona | str = Persona.DEFAULT) -> str:
    if not isinstance(persona, PersonaSpec):
        persona = PersonaSpec.of(persona)
    template = load_template("seller_system").rstrip("\n")
    assert template.count(PERSONA_PLACEHOLDER) == 1
    return template.replace(PERSONA_PLACEHOLDER, persona.block_text, 1)


def assemble_buyer_prompt(scenario: Scenario, description_chars: int | None = DEFAULT_DESCRIPTION_CHARS) -> tuple[str, str]:
    p = scenario.product
    context = load_template("buyer_context").format(
        codename=p.codename,
        title=p.title,
        description=_truncate(p.description, description_chars),
        list_price=_list_price_text(p.list_price),
        quantity=scenario.quantity,
        budget=format_money(scenario.budget),
        max_turns=scenario.max_turns,
    ).rstrip("\n")
    return buyer_system_prompt(), context


def assemble_seller_prompt(
    scenario: Scenario,
    persona: PersonaSpec | Persona | str = Persona.DEFAULT,
    description_chars: int | None = DEFAULT_DESCRIPTION_CHARS,
) -> tuple[str, str]:
    p = scenario.product
    context = load_template("seller_context").format(
        codename=p.codename,
        title=p.title,
        description=_truncate(p.description, description_chars),
        list_price=_list_price_text(p.list_price),
        cost=format_money(scenario.cost),
        max_turns=scenario.max_turns,
    ).rstrip("\n")
    return seller_system_prompt(persona), context


@dataclass(frozen=True)
class ContextFacts:
    """Economics a programmatic agent can read back out of its own context."""

    codename: str
    list_price: Decimal
    limit: Decimal  # budget for the buyer, cost for the seller
    quantity: int
    max_turns: int


_CTX = {
    "codename": re.compile(r"^Codename:\s*(\S+)", re.M),
    "list_price": re.compile(r"^List Price:\s*(\$[0-9.,]+)", re.M),
    "budget": re.compile(r"^budget:\s*(\$[0-9.,]+)", re.M),
    "cost": re.compile(r"^Cost:\s*(\$[0-9.,]+)", re.M),
    "quantity": re.compile(r"^quantity:\s*(\d+)", re.M),
    "max_turns": re.compile(r"negotiate based on the Inventory List in (\d+) turns"),
}


def parse_context(context: str) -> ContextFacts:
    def grab(key: str) -> str | None:
        m = _CTX[key].search(context)
        return m.group(1) if m else None

    limit = grab("budget") or grab("cost")
    codename, list_price = grab("codename"), grab("list_price")
    if limit is None or codename is None or list_price is None:
        raise ValueError("context lacks codename, list price or private limit")
    return ContextFacts(
        codename=codename,
        list_price=parse_amount(list_price),
        limit=parse_amount(limit),
        quantity=int(grab("quantity") or 1),
        max_turns=int(grab("max_turns") or 6),
    )
