"""Exact two-decimal money values.

Every price in the package is a :class:`decimal.Decimal` quantized to cents.
Ratios and rewards are computed in floating point only at the reward boundary.
"""

from __future__ import annotations

import re
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation

CENT = Decimal("0.01")

# "$1,234.5", "1234", "$10" ... at most two decimals
_AMOUNT_RE = re.compile(r"^\$?\s*((?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d{1,2})?)$")
_STRICT_RE = re.compile(r"^\$(\d+\.\d{2})$")


class MoneyError(ValueError):
    pass


def to_money(value) -> Decimal:
    """Coerce str/int/float/Decimal into a cent-quantized Decimal."""
    if isinstance(value, Decimal):
        d = value
    elif isinstance(value, float):
        d = Decimal(repr(value))
    elif isinstance(value, (int, str)):
        try:
            d = Decimal(value)
        except InvalidOperation as exc:
            raise MoneyError(f"not a money value: {value!r}") from exc
    else:
        raise MoneyError(f"not a money value: {value!r}")
    if not d.is_finite():
        raise MoneyError(f"not a money value: {value!r}")
    return d.quantize(CENT, rounding=ROUND_HALF_UP)


def parse_amount(text: str) -> Decimal:
    """Parse an action amount: optional "$", optional thousands commas."""
    m = _AMOUNT_RE.match(text.strip())
    if not m:
        raise MoneyError(f"malformed amount: {text!r}")
    return to_money(m.group(1).replace(",", ""))


def parse_dollar_text(text: str) -> Decimal:
    """Parse catalog money text of the exact form ``$<digits>.<2 digits>``."""
    m = _STRICT_RE.match(text.strip())
    if not m:
        raise MoneyError(f"expected '$<digits>.<2 digits>', got {text!r}")
    return Decimal(m.group(1))


def format_money(amount: Decimal) -> str:
    return f"${to_money(amount):.2f}"


def round_to_tick(value: float | Decimal, tick: Decimal = CENT) -> Decimal:
    """Round a real-valued price to a multiple of ``tick`` (half-up)."""
    d = Decimal(repr(value)) if isinstance(value, float) else Decimal(value)
    steps = (d / tick).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    return to_money(steps * tick)
