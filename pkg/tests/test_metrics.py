import csv
import io
import math
import random
import statistics
from decimal import Decimal

import pytest
from hypothesis import given, settings, strategies as st

from bargain_arena.metrics import (
    MetricStat,
    OutcomeRow,
    aggregate,
    bargained_ratio,
    curve_columns,
    deal_rate,
    export_curves,
    overshoot_rate,
    write_report,
)
from bargain_arena.reward import ScenarioClass

D = Decimal
MI, CI = ScenarioClass.MI, ScenarioClass.CI


def row(cls=MI, reward=0.0, dealt=False, br=None, fo=None, over=False, turns=1):
    return OutcomeRow(cls, reward, dealt, D("1") if dealt else None, br, fo, over, turns)


def test_bargained_ratio_examples():
    assert bargained_ratio(D("56.00"), D("23.24"), D("30.00")) == pytest.approx(0.7936507936507937, abs=1e-12)
    assert bargained_ratio(D("56.00"), D("23.24"), D("56.00")) == 0.0
    assert bargained_ratio(D("56.00"), D("23.24"), D("23.24")) == 1.0
    with pytest.raises(ValueError):
        bargained_ratio(D("56.00"), D("23.24"), None)


def test_deal_rate_modes():
    rows = [row(dealt=True)] * 3 + [row()] + [row(CI, dealt=True)]
    assert deal_rate(rows, "mi_only") == 0.75
    assert deal_rate(rows, "all") == 0.8
    with pytest.raises(ValueError):
        deal_rate([row(CI)], "mi_only")


def test_overshoot_rate():
    assert overshoot_rate([row()] * 4) == 0.0
    assert overshoot_rate([row(over=True)] + [row()] * 3) == 0.25


def test_se_examples():
    s = aggregate([row(reward=1.0), row(reward=0.0)])
    assert s.reward.mean == 0.5 and s.reward.standard_error == 0.5
    assert aggregate([row(reward=0.3)]).reward.standard_error == 0.0
    assert aggregate([row(reward=0.3)] * 5).reward.standard_error == 0.0


def test_subpopulations():
    rows = [row(dealt=True, br=0.5, fo=0.2), row(fo=0.4), row(CI, reward=-1.0, over=True)]
    s = aggregate(rows, aborted=2)
    assert s.count == 3 and s.aborted == 2
    assert s.bargained_ratio.count == 1 and s.first_offer_ratio.count == 2
    assert s.deal_rate_mi.mean == 0.5
    assert set(s.by_class) == {"MI", "CI"} and s.by_class["CI"].count == 1
    with pytest.raises(ValueError):
        aggregate([])


def _brute(values):
    n = len(values)
    mean = sum(values) / n
    se = 0.0 if n < 2 else statistics.stdev(values) / math.sqrt(n)
    return mean, se


def test_aggregate_oracle_random_sets():
    rng = random.Random(3)
    for _ in range(200):
        vals = [rng.uniform(-1, 1) for _ in range(rng.randint(1, 40))]
        s = MetricStat.of(vals)
        m, se = _brute(vals)
        assert abs(s.mean - m) < 1e-12 and abs(s.standard_error - se) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=30))
def test_mean_within_range(vals):
    s = MetricStat.of(vals)
    assert min(vals) - 1e-12 <= s.mean <= max(vals) + 1e-12
    assert s.standard_error >= 0


def test_export_curves(tmp_path):
    assert export_curves([]).strip() == ",".join(curve_columns())
    s = aggregate([row(reward=1.0), row(CI)])
    text = export_curves([s] * 60, tmp_path / "c.csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert len(rows) == 61 and (tmp_path / "c.csv").read_text() == text
    split = list(csv.reader(io.StringIO(export_curves([s], split=True))))
    assert len(split[0]) > len(rows[0]) and len(set(split[0])) == len(split[0])
    assert "reward_mean_mi" in split[0] and "reward_mean_ci" in split[0]
    assert len(split[1]) == len(split[0])


def test_report(tmp_path):
    s = aggregate([row(reward=1.0, dealt=True, br=1.0), row()])
    md = write_report([("toy", s)], tmp_path / "s.csv", tmp_path / "s.md")
    assert "| toy | 2 | 0.5000 ± 0.5000 | 50.00% ± 50.00%" in md
    assert (tmp_path / "s.csv").read_text().splitlines()[0].startswith("Model,Episodes,Reward")
