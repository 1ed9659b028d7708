"""Product catalog ingestion, scenario construction and deterministic splits."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import date, datetime
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .money import MoneyError, format_money, parse_dollar_text, round_to_tick, to_money


class CatalogError(ValueError):
    pass


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class PriceHistory:
    current: Decimal | None = None
    average: Decimal | None = None
    lowest: Decimal | None = None
    highest: Decimal | None = None
    current_date: date | None = None
    lowest_date: date | None = None
    highest_date: date | None = None


@dataclass(frozen=True)
class Product:
    codename: str
    title: str
    category: str
    list_price: Decimal
    description: str = ""
    features: str = ""
    price_history: PriceHistory | None = None
    # private economics, only when the source record carries them
    budget: Decimal | None = None
    cost: Decimal | None = None

    def __post_init__(self):
        if not self.codename:
            raise CatalogError("codename must be non-empty")
        if self.list_price <= 0:
            raise CatalogError(f"{self.codename}: list_price must be positive")


@dataclass(frozen=True)
class Scenario:
    product: Product
    budget: Decimal
    cost: Decimal
    quantity: int = 1
    max_turns: int = 6

    def __post_init__(self):
        if self.budget <= 0 or self.cost <= 0:
            raise ScenarioError("budget and cost must be positive")
        if self.budget == self.cost:
            raise ScenarioError(f"budget equals cost ({self.budget}); reward undefined")
        if self.quantity < 1:
            raise ScenarioError("quantity must be >= 1")
        if self.max_turns < 1:
            raise ScenarioError("max_turns must be >= 1")

    @property
    def codename(self) -> str:
        return self.product.codename

    @property
    def is_mutual_interest(self) -> bool:
        return self.budget > self.cost


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    train_count: int
    test_count: int


# canonical name -> record key
DEFAULT_FIELD_MAP: dict[str, str] = {
    "codename": "codename",
    "title": "title",
    "category": "category",
    "list_price": "list_price",
    "current_price": "current_price",
    "average_price": "average_price",
    "lowest_price": "lowest_price",
    "highest_price": "highest_price",
    "current_price_date": "current_price_date",
    "lowest_price_date": "lowest_price_date",
    "highest_price_date": "highest_price_date",
    "description": "description",
    "features": "features",
    "budget": "buyer_budget",
    "cost": "seller_cost",
}

_REQUIRED = ("title", "category", "list_price")
_DATE_FORMAT = "%b %d, %Y"


def _read_records(path: Path) -> list:
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return []
    stripped = text.lstrip()
    if stripped.startswith("["):
        data = json.loads(text)
        if not isinstance(data, list):
            raise CatalogError(f"{path}: expected a JSON array")
        return data
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise CatalogError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
    return records


def _money_field(rec: Mapping, key: str, index: int, name: str) -> Decimal | None:
    raw = rec.get(key)
    if raw is None or raw == "":
        return None
    if not isinstance(raw, str):
        raise CatalogError(f"record {index}: field {name!r} must be text, got {raw!r}")
    try:
        return parse_dollar_text(raw)
    except MoneyError as exc:
        raise CatalogError(f"record {index}: field {name!r}: {exc}") from exc


def _date_field(rec: Mapping, key: str, index: int, name: str) -> date | None:
    raw = rec.get(key)
    if not raw:
        return None
    try:
        return datetime.strptime(raw.strip(), _DATE_FORMAT).date()
    except (ValueError, AttributeError) as exc:
        raise CatalogError(f"record {index}: field {name!r}: bad date {raw!r}") from exc


def _auto_codename(category: str, counters: dict[str, int]) -> str:
    stem = category.strip().lower().replace("-", "_").replace(" ", "_") or "item"
    counters[stem] = counters.get(stem, 0) + 1
    return f"{stem}_{counters[stem]}"


def load_catalog(path: str | Path, field_map: Mapping[str, str] | None = None) -> list[Product]:
    """Load products from a JSON array or JSON-lines file.

    ``field_map`` overrides entries of :data:`DEFAULT_FIELD_MAP`. Records without
    a codename get ``<category>_<n>`` numbered per category in file order.
    """
    fmap = dict(DEFAULT_FIELD_MAP)
    if field_map:
        fmap.update(field_map)
    path = Path(path)
    products: list[Product] = []
    seen: set[str] = set()
    counters: dict[str, int] = {}
    for index, rec in enumerate(_read_records(path)):
        if not isinstance(rec, dict):
            raise CatalogError(f"record {index}: expected an object")
        for name in _REQUIRED:
            if rec.get(fmap[name]) in (None, ""):
                raise CatalogError(f"record {index}: missing field {fmap[name]!r}")
        list_price = _money_field(rec, fmap["list_price"], index, fmap["list_price"])
        if list_price <= 0:
            raise CatalogError(f"record {index}: field {fmap['list_price']!r} must be positive")
        history = PriceHistory(
            current=_money_field(rec, fmap["current_price"], index, "current_price"),
            average=_money_field(rec, fmap["average_price"], index, "average_price"),
            lowest=_money_field(rec, fmap["lowest_price"], index, "lowest_price"),
            highest=_money_field(rec, fmap["highest_price"], index, "highest_price"),
            current_date=_date_field(rec, fmap["current_price_date"], index, "current_price_date"),
            lowest_date=_date_field(rec, fmap["lowest_price_date"], index, "lowest_price_date"),
            highest_date=_date_field(rec, fmap["highest_price_date"], index, "highest_price_date"),
        )
        if history == PriceHistory():
            history = None
        category = str(rec[fmap["category"]])
        codename = rec.get(fmap["codename"]) or _auto_codename(category, counters)
        if codename in seen:
            raise CatalogError(f"record {index}: duplicate codename {codename!r}")
        seen.add(codename)
        products.append(
            Product(
                codename=codename,
                title=str(rec[fmap["title"]]),
                category=category,
                list_price=list_price,
                description=str(rec.get(fmap["description"]) or ""),
                features=str(rec.get(fmap["features"]) or ""),
                price_history=history,
                budget=_money_field(rec, fmap["budget"], index, fmap["budget"]),
                cost=_money_field(rec, fmap["cost"], index, fmap["cost"]),
            )
        )
    return products


def product_to_record(product: Product) -> dict:
    """Inverse of ingestion under the default field names."""
    rec: dict = {
        "codename": product.codename,
        "title": product.title,
        "category": product.category,
        "list_price": format_money(product.list_price),
    }
    h = product.price_history
    if h is not None:
        for key, val in (("current_price", h.current), ("average_price", h.average),
                         ("lowest_price", h.lowest), ("highest_price", h.highest)):
            if val is not None:
                rec[key] = format_money(val)
        for key, val in (("lowest_price_date", h.lowest_date), ("highest_price_date", h.highest_date),
                         ("current_price_date", h.current_date)):
            if val is not None:
                rec[key] = val.strftime(_DATE_FORMAT)
    rec["description"] = product.description
    rec["features"] = product.features
    if product.budget is not None:
        rec["buyer_budget"] = format_money(product.budget)
    if product.cost is not None:
        rec["seller_cost"] = format_money(product.cost)
    return rec


def dump_catalog(products: Iterable[Product], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps([product_to_record(p) for p in products], indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def build_scenario(product: Product, budget, cost, quantity: int = 1, max_turns: int = 6) -> Scenario:
    return Scenario(product, to_money(budget), to_money(cost), quantity, max_turns)


def split(catalog: Sequence[Product], spec: SplitSpec) -> tuple[list[Product], list[Product]]:
    """Seeded, disjoint train/test partition."""
    if spec.train_count < 0 or spec.test_count < 0:
        raise ValueError("split counts must be non-negative")
    if spec.train_count + spec.test_count > len(catalog):
        raise ValueError(
            f"split wants {spec.train_count}+{spec.test_count} products, catalog has {len(catalog)}"
        )
    order = list(range(len(catalog)))
    random.Random(spec.seed).shuffle(order)
    test = [catalog[i] for i in order[: spec.test_count]]
    train = [catalog[i] for i in order[spec.test_count : spec.test_count + spec.train_count]]
    return train, test


def write_split_manifest(train: Sequence[Product], test: Sequence[Product], path: str | Path) -> None:
    lines = ["[train]", *(p.codename for p in train), "[test]", *(p.codename for p in test)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_split_manifest(path: str | Path) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    current = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = out.setdefault(line[1:-1], [])
        elif current is None:
            raise ValueError(f"{path}: codename before any [split] header")
        else:
            current.append(line)
    return out


# fractions of list price for synthetic economics
_LOW_BAND = (0.30, 0.60)
_HIGH_BAND = (0.65, 0.95)


def _draw_economics(rng: random.Random, list_price: Decimal, conflict: bool) -> tuple[Decimal, Decimal]:
    low = round_to_tick(float(list_price) * rng.uniform(*_LOW_BAND))
    high = round_to_tick(float(list_price) * rng.uniform(*_HIGH_BAND))
    low = max(low, Decimal("0.01"))
    if high <= low:
        high = low + Decimal("0.01")
    # MI: budget high, cost low; CI: the reverse
    return (low, high) if conflict else (high, low)


def _conflict_mask(rng: random.Random, count: int, ci_fraction: float) -> list[bool]:
    if not 0.0 <= ci_fraction <= 1.0:
        raise ValueError("ci_fraction must lie in [0, 1]")
    n_ci = round(count * ci_fraction)
    mask = [True] * n_ci + [False] * (count - n_ci)
    rng.shuffle(mask)
    return mask


def synth_scenarios(
    seed: int,
    count: int,
    price_range: tuple[float, float] = (10.0, 100.0),
    ci_fraction: float = 0.0,
    quantity: int = 1,
    max_turns: int = 6,
) -> list[Scenario]:
    """Generate synthetic products with private economics.

    Exactly ``round(count * ci_fraction)`` scenarios have budget < cost.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    lo, hi = float(price_range[0]), float(price_range[1])
    if not (0 < lo < hi):
        raise ValueError(f"degenerate price range {price_range!r}")
    rng = random.Random(seed)
    mask = _conflict_mask(rng, count, ci_fraction)
    out = []
    for i, conflict in enumerate(mask):
        list_price = round_to_tick(rng.uniform(lo, hi))
        product = Product(
            codename=f"synth_{i}",
            title=f"Synthetic product {i}",
            category="synthetic",
            list_price=list_price,
            description="A generated listing used for scripted negotiation runs.",
        )
        budget, cost = _draw_economics(rng, list_price, conflict)
        out.append(Scenario(product, budget, cost, quantity, max_turns))
    return out


def scenarios_from_products(
    products: Sequence[Product],
    seed: int,
    ci_fraction: float = 0.0,
    quantity: int = 1,
    max_turns: int = 6,
) -> list[Scenario]:
    """Use record economics where present, otherwise draw them deterministically."""
    rng = random.Random(seed)
    mask = _conflict_mask(rng, len(products), ci_fraction)
    out = []
    for product, conflict in zip(products, mask):
        if product.budget is not None and product.cost is not None:
            budget, cost = product.budget, product.cost
        else:
            budget, cost = _draw_economics(rng, product.list_price, conflict)
        out.append(Scenario(product, budget, cost, quantity, max_turns))
    return out
