"""Episode metrics: reward, deal rates, bargained ratio, first-offer ratio,
overshoot and episode length, with mean and standard error per metric."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Literal, Sequence

from .engine import EpisodeRecord
from .reward import ScenarioClass, classify


@dataclass(frozen=True)
class OutcomeRow:
    scenario_class: ScenarioClass
    reward: float
    dealt: bool
    price_final: Decimal | None
    bargained_ratio: float | None
    first_offer_ratio: float | None
    overshoot: bool
    turns_used: int


def bargained_ratio(budget: Decimal, cost: Decimal, price_final: Decimal | None) -> float:
    """Share of the bargaining gap captured on a completed deal (signed, unclipped)."""
    if price_final is None:
        raise ValueError("bargained ratio is only defined for completed deals")
    if budget == cost:
        raise ValueError("budget equals cost")
    return float(budget - price_final) / float(budget - cost)


def first_offer_ratio(record: EpisodeRecord) -> float | None:
    if record.first_buyer_offer is None:
        return None
    return float(record.first_buyer_offer) / float(record.scenario.budget)


def outcome_row(record: EpisodeRecord) -> OutcomeRow:
    sc = record.scenario
    dealt = record.dealt
    return OutcomeRow(
        scenario_class=classify(sc.budget, sc.cost),
        reward=record.reward,
        dealt=dealt,
        price_final=record.price_final,
        bargained_ratio=bargained_ratio(sc.budget, sc.cost, record.price_final) if dealt else None,
        first_offer_ratio=first_offer_ratio(record),
        overshoot=record.overshoot,
        turns_used=record.outcome.turns_used,
    )


def deal_rate(rows: Sequence[OutcomeRow], mode: Literal["all", "mi_only"] = "all") -> float:
    pop = [r for r in rows if mode == "all" or r.scenario_class is ScenarioClass.MI]
    if not pop:
        raise ValueError(f"no rows in population for deal_rate(mode={mode!r})")
    return sum(r.dealt for r in pop) / len(pop)


def overshoot_rate(rows: Sequence[OutcomeRow]) -> float:
    if not rows:
        raise ValueError("overshoot_rate of an empty population")
    return sum(r.overshoot for r in rows) / len(rows)


@dataclass(frozen=True)
class MetricStat:
    mean: float
    standard_error: float
    count: int

    @classmethod
    def of(cls, values: Sequence[float]) -> "MetricStat | None":
        n = len(values)
        if n == 0:
            return None
        mean = math.fsum(values) / n
        if n < 2:
            return cls(mean, 0.0, n)
        var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
        return cls(mean, math.sqrt(var) / math.sqrt(n), n)


METRIC_NAMES = (
    "reward",
    "deal_rate",
    "deal_rate_mi",
    "bargained_ratio",
    "first_offer_ratio",
    "overshoot_rate",
    "episode_length",
)


@dataclass(frozen=True)
class MetricsSummary:
    reward: MetricStat | None
    deal_rate: MetricStat | None
    deal_rate_mi: MetricStat | None
    bargained_ratio: MetricStat | None
    first_offer_ratio: MetricStat | None
    overshoot_rate: MetricStat | None
    episode_length: MetricStat | None
    count: int
    aborted: int = 0
    by_class: dict = field(default_factory=dict, compare=False)

    def get(self, name: str) -> MetricStat | None:
        return getattr(self, name)


def _summarize(rows: Sequence[OutcomeRow], aborted: int = 0) -> MetricsSummary:
    mi = [r for r in rows if r.scenario_class is ScenarioClass.MI]
    return MetricsSummary(
        reward=MetricStat.of([r.reward for r in rows]),
        deal_rate=MetricStat.of([float(r.dealt) for r in rows]),
        deal_rate_mi=MetricStat.of([float(r.dealt) for r in mi]),
        bargained_ratio=MetricStat.of([r.bargained_ratio for r in rows if r.bargained_ratio is not None]),
        first_offer_ratio=MetricStat.of([r.first_offer_ratio for r in rows if r.first_offer_ratio is not None]),
        overshoot_rate=MetricStat.of([float(r.overshoot) for r in rows]),
        episode_length=MetricStat.of([float(r.turns_used) for r in rows]),
        count=len(rows),
        aborted=aborted,
    )


def aggregate(rows: Sequence[OutcomeRow], aborted: int = 0) -> MetricsSummary:
    """Means and standard errors over the applicable subpopulations, plus MI/CI splits.

    ``aborted`` counts infrastructure failures; they never enter a denominator.
    """
    if not rows:
        raise ValueError("aggregate of an empty population")
    summary = _summarize(rows, aborted)
    for cls in ScenarioClass:
        part = [r for r in rows if r.scenario_class is cls]
        if part:
            summary.by_class[cls.value] = _summarize(part)
    return summary


# ---------------------------------------------------------------------------
# curve and report files


def _stat_cells(stat: MetricStat | None) -> tuple[str, str]:
    if stat is None:
        return "", ""
    return repr(stat.mean), repr(stat.standard_error)


def _split_metrics(suffix: str) -> list[str]:
    # the MI deal rate already has its own top-level column
    skip = {"deal_rate_mi", "deal_rate"} if suffix == "mi" else {"deal_rate_mi"}
    return [n for n in METRIC_NAMES[1:] if n not in skip]


def curve_columns(split: bool = False) -> list[str]:
    cols = ["iteration", "episodes", "reward_mean", "reward_se"]
    for name in METRIC_NAMES[1:]:
        cols += [name, f"{name}_se"]
    if split:
        for suffix in ("mi", "ci"):
            cols += [f"reward_mean_{suffix}", f"reward_se_{suffix}"]
            for name in _split_metrics(suffix):
                cols += [f"{name}_{suffix}", f"{name}_se_{suffix}"]
    return cols


def _curve_row(i: int, s: MetricsSummary, split: bool) -> list[str]:
    row = [str(i), str(s.count), *_stat_cells(s.reward)]
    for name in METRIC_NAMES[1:]:
        row += _stat_cells(s.get(name))
    if split:
        for suffix in ("MI", "CI"):
            part = s.by_class.get(suffix)
            row += _stat_cells(part.reward if part else None)
            for name in _split_metrics(suffix.lower()):
                row += _stat_cells(part.get(name) if part else None)
    return row


def export_curves(summaries: Sequence[MetricsSummary], path: str | Path | None = None, split: bool = False) -> str:
    """One CSV row per iteration. Returns the CSV text and writes it if ``path`` is given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(curve_columns(split))
    for i, s in enumerate(summaries):
        w.writerow(_curve_row(i, s, split))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


REPORT_COLUMNS = ("Model", "Episodes", "Reward", "Deal Rate", "Deal Rate (MI)", "Bargained Ratio", "Price Overshoot Rate")


def _pm(stat: MetricStat | None, percent: bool = False) -> str:
    if stat is None:
        return "n/a"
    if percent:
        return f"{100 * stat.mean:.2f}% ± {100 * stat.standard_error:.2f}%"
    return f"{stat.mean:.4f} ± {stat.standard_error:.4f}"


def report_rows(named: Iterable[tuple[str, MetricsSummary]]) -> list[list[str]]:
    rows = []
    for name, s in named:
        rows.append([
            name,
            str(s.count),
            _pm(s.reward),
            _pm(s.deal_rate, percent=True),
            _pm(s.deal_rate_mi, percent=True),
            _pm(s.bargained_ratio),
            _pm(s.overshoot_rate, percent=True),
        ])
    return rows


def write_report(named: Sequence[tuple[str, MetricsSummary]], csv_path=None, md_path=None) -> str:
    rows = report_rows(named)
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            w.writerows(rows)
    md = ["| " + " | ".join(REPORT_COLUMNS) + " |", "|" + "---|" * len(REPORT_COLUMNS)]
    md += ["| " + " | ".join(r) + " |" for r in rows]
    text = "\n".join(md) + "\n"
    if md_path is not None:
        Path(md_path).write_text(text, encoding="utf-8")
    return text
