"""Acceptance criteria 1-10. Each test prints one ``[ACCEPT n] PASS/FAIL`` line."""

import math
import random
import statistics
import time
from decimal import Decimal
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bargain_arena.agents import (
    Persona,
    PersonaSpec,
    ScriptedAgent,
    ScriptedPolicy,
    assemble_buyer_prompt,
    assemble_seller_prompt,
    parse_context,
)
from bargain_arena.agents.scripted import history_actions
from bargain_arena.catalog import synth_scenarios
from bargain_arena.engine import record_to_json, run_episode
from bargain_arena.grpo_lab import TrainConfig, default_training_seller, group_advantages, train_policy
from bargain_arena.metrics import MetricStat, OutcomeRow, aggregate, outcome_row
from bargain_arena.protocol import Buy, Deal, Grammar, Quit, Reject, Sell, TurnMessage, parse_turn, render_public, serialize_turn
from bargain_arena.replay import replay_file
from bargain_arena.reward import ScenarioClass, surplus_reward

from conftest import FIXTURES, beauty_scenario

D = Decimal


@pytest.fixture
def verdict(capsys):
    def emit(n, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[ACCEPT {n:>2}] {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else ""))
        assert ok, f"criterion {n}: {title}: {detail}"
    return emit


# 1 -----------------------------------------------------------------------------

def _reward_bruteforce(b, c, p):
    b, c, p = Fraction(b), Fraction(c), Fraction(p)
    gap = b - c if b > c else c - b
    r = (b - p) / gap
    if r > 1:
        return 1.0
    if r < -1:
        return -1.0
    return float(r)


def test_reward_oracle(verdict):
    rng = random.Random(2024)
    triples = []
    while len(triples) < 10_000:
        b, c, p = (D(rng.randint(1, 200_000)) / 100 for _ in range(3))
        if b != c:
            triples.append((b, c, p))
    t0 = time.perf_counter()
    got = [surplus_reward(b, c, p) for b, c, p in triples]
    elapsed = time.perf_counter() - t0
    worst = max(abs(g - _reward_bruteforce(*t)) for g, t in zip(got, triples))
    verdict(1, "reward oracle equivalence", worst <= 1e-9 and elapsed < 1.0,
            f"max err {worst:.2e}, {elapsed:.3f}s for 10000")


# 2 -----------------------------------------------------------------------------

def test_logged_transcript_replay(verdict):
    (base,) = replay_file(FIXTURES / "beauty_29_baseline.jsonl")
    (trained,) = replay_file(FIXTURES / "beauty_29_trained.jsonl")
    b, t = outcome_row(base.record), outcome_row(trained.record)
    checks = [
        (float(b.price_final), 56.00), (b.reward, 0.0), (b.bargained_ratio, 0.0),
        (b.first_offer_ratio, 0.892857), (base.record.outcome.turns_used, 2),
        (float(t.price_final), 30.00), (t.reward, 0.793651), (t.bargained_ratio, 0.793651),
        (t.first_offer_ratio, 0.178571), (trained.record.outcome.turns_used, 3),
    ]
    worst = max(abs(got - want) for got, want in checks)
    ok = worst <= 1e-6 and b.dealt and t.dealt
    verdict(2, "logged transcript replay", ok, f"max deviation {worst:.1e}")


# 3 -----------------------------------------------------------------------------

class AdversarialSeller:
    """Tries to close below cost; otherwise throws out random prices, some under cost."""

    role, grammar = "seller", Grammar.LABELED

    def __init__(self):
        self.calls: dict[int, list[str]] = {}

    def next_turn(self, history, context, rng_seed):
        facts = parse_context(context)
        rng = random.Random(rng_seed)
        acts = history_actions(history, facts.codename)
        bid = acts[-1][1]
        pick = rng.random()
        if isinstance(bid, Buy) and pick < 0.5:
            action = Deal(bid.amount, bid.quantity, bid.codename)
        elif pick < 0.6:
            raw = "I'll just say something without any structure"
            self.calls.setdefault(len(history) // 2, []).append(raw)
            return raw
        else:
            ratio = rng.uniform(0.3, 1.4)
            action = Sell(max(D("0.01"), (facts.limit * D(str(round(ratio, 3)))).quantize(D("0.01"))), 1, facts.codename)
        raw = serialize_turn(TurnMessage("seller", "squeeze them", "Take it or leave it.", action), Grammar.LABELED)
        self.calls.setdefault(len(history) // 2, []).append(raw)
        return raw


def _intercepted(raws, cost, code):
    first = raws[0]
    if len(raws) > 1:
        return True
    try:
        a = parse_turn(first, "seller", Grammar.LABELED, code).action
    except ValueError:
        return True
    return isinstance(a, (Sell, Deal)) and a.amount < cost


def test_regulation_guarantee(verdict):
    scenarios = synth_scenarios(3, 1000, (10, 100), 0.2)
    bad_deals = unlogged = intercepted = substituted = 0
    for i, sc in enumerate(scenarios):
        seller = AdversarialSeller()
        buyer = ScriptedAgent(ScriptedPolicy("buyer", 0.2 + 0.6 * (i % 5) / 4, 0.1))
        rec = run_episode(buyer, seller, sc, seed=i)
        if rec.dealt and rec.price_final < sc.cost:
            bad_deals += 1
        logged = record_to_json(rec)["turns"]
        seller_turns = [j for j, t in enumerate(rec.transcript) if t.role == "seller"]
        for k, j in enumerate(seller_turns):
            if _intercepted(seller.calls[k], sc.cost, sc.codename):
                intercepted += 1
                substituted += rec.transcript[j].substituted
                if not (rec.transcript[j].regulated and logged[j]["regulated"] is True):
                    unlogged += 1
    ok = bad_deals == 0 and unlogged == 0 and intercepted > 0
    verdict(3, "regulation guarantee", ok,
            f"{bad_deals} sub-cost deals, {intercepted} intercepted ({substituted} substituted), {unlogged} unlogged")


# 4 -----------------------------------------------------------------------------

def test_budget_penalty(verdict):
    greedy = ScriptedAgent(ScriptedPolicy("buyer", 1.0, respect_limit=False, offset=D("0.01")))
    seller = ScriptedAgent(ScriptedPolicy("seller", 1.0, 0.1))
    recs = [run_episode(greedy, seller, sc, seed=i) for i, sc in enumerate(synth_scenarios(4, 200, ci_fraction=0.5))]
    ok = all(
        r.reward == -1.0 and r.overshoot and r.outcome.reason == "over_budget"
        and len(r.transcript) == 1 and r.first_buyer_offer == r.scenario.budget + D("0.01")
        for r in recs
    )
    verdict(4, "budget penalty", ok, f"{sum(r.reward == -1.0 for r in recs)}/{len(recs)} at -1.0")


# 5 -----------------------------------------------------------------------------

def test_ci_rationality(verdict):
    scenarios = synth_scenarios(5, 500, (10, 100), 1.0)
    rng = random.Random(5)
    recs = []
    for i, sc in enumerate(scenarios):
        buyer = ScriptedPolicy("buyer", rng.uniform(0.2, 1.0), rng.uniform(0, 0.3), rng.randint(0, 2),
                               accept_threshold=rng.choice([None, 1.0]))
        seller = ScriptedPolicy("seller", rng.uniform(0.5, 1.5), rng.uniform(0, 0.3), rng.randint(0, 2),
                                accept_threshold=rng.choice([None, 0.1]))
        recs.append(run_episode(ScriptedAgent(buyer), ScriptedAgent(seller), sc, seed=i))
    assert all(not r.scenario.is_mutual_interest for r in recs)
    ok = all(r.outcome.kind in ("deadlock_turn_limit", "quit") and r.reward == 0.0 for r in recs)
    verdict(5, "CI rationality", ok, f"{sum(r.dealt for r in recs)} deals in {len(recs)} CI episodes")


# 6 -----------------------------------------------------------------------------

_text = st.text(alphabet=st.characters(blacklist_categories=("Cs", "Cc"), blacklist_characters="<>"), max_size=30) \
    .map(str.strip).filter(lambda s: not any(x in s for x in ("Thought:", "Talk:", "Action:")))
_amount = st.integers(1, 10**7).map(lambda n: D(n) / 100)
_priced = st.builds(lambda cls, a, q: cls(a, q, "beauty_29"), st.sampled_from([Buy, Sell, Deal]), _amount, st.integers(1, 5))
_turns = st.builds(TurnMessage, st.sampled_from(["buyer", "seller"]), _text, _text,
                   st.one_of(_priced, st.just(Reject()), st.just(Quit())))
_seen = {"turns": 0, "bad": 0}


@settings(max_examples=5000, deadline=None, database=None)
@given(_turns)
def _roundtrip_both(turn):
    for grammar in Grammar:
        _seen["turns"] += 1
        raw = serialize_turn(turn, grammar, "beauty_29")
        public = render_public(turn, grammar, "beauty_29")
        marked = render_public(TurnMessage(turn.role, "\x1fSECRET\x1f" + turn.reasoning, turn.dialogue, turn.action),
                               grammar, "beauty_29")
        if parse_turn(raw, turn.role, grammar, "beauty_29") != turn or public != marked or "SECRET" in marked:
            _seen["bad"] += 1


def test_protocol_roundtrip(verdict):
    _seen.update(turns=0, bad=0)
    _roundtrip_both()
    ok = _seen["turns"] >= 10_000 and _seen["bad"] == 0
    verdict(6, "protocol round-trip", ok, f"{_seen['turns']} generated turns, {_seen['bad']} failures")


# 7 -----------------------------------------------------------------------------

def test_grpo_advantages(verdict):
    rng = np.random.default_rng(7)
    worst_sum = worst_shift = 0.0
    zero_ok = True
    for _ in range(1000):
        g = int(rng.integers(2, 17))
        r = rng.uniform(-1, 1, g)
        a = np.array(group_advantages(list(r)))
        worst_sum = max(worst_sum, abs(a.sum()))
        shifted = np.array(group_advantages(list(r + rng.uniform(-3, 3))))
        worst_shift = max(worst_shift, float(np.max(np.abs(a - shifted))))
        zero_ok &= group_advantages([float(r[0])] * g) == [0.0] * g
    example = group_advantages([1.0, 0.0, -1.0])
    ex_ok = np.allclose(example, [1.2247, 0.0, -1.2247], atol=1e-3)
    ok = worst_sum < 1e-9 and worst_shift < 1e-6 and zero_ok and ex_ok
    verdict(7, "GRPO advantage properties", ok,
            f"max |sum A| {worst_sum:.1e}, max shift drift {worst_shift:.1e}, example {np.round(example, 4).tolist()}")


# 8 -----------------------------------------------------------------------------

TOY_CONFIG = TrainConfig(batch_size=16, group_size=8, iterations=200, learning_rate=10.0, seed=0)


@pytest.mark.slow
def test_toy_emergence(verdict):
    t0 = time.perf_counter()
    scenarios = synth_scenarios(TOY_CONFIG.seed, 256, (10, 100), ci_fraction=0.0)
    curve = train_policy(TOY_CONFIG, scenarios, default_training_seller()).summaries
    elapsed = time.perf_counter() - t0
    reward = [s.reward.mean for s in curve]
    overshoot = [s.overshoot_rate.mean for s in curve]
    first = [s.first_offer_ratio.mean for s in curve]
    gain = np.mean(reward[-10:]) - np.mean(reward[:10])
    nonzero = [i for i, v in enumerate(overshoot) if v > 0]
    settled = (nonzero[-1] + 1) if nonzero else 0
    a = gain >= 0.2
    b = settled <= 0.2 * len(curve)
    c = np.mean(first[-10:]) < np.mean(first[:10])
    ok = a and b and c and elapsed < 300
    verdict(8, "toy emergence", ok,
            f"(a) reward gain {gain:+.3f}; (b) overshoot 0 from iteration {settled}; "
            f"(c) first-offer {np.mean(first[:10]):.3f} -> {np.mean(first[-10:]):.3f}; {elapsed:.0f}s")


# 9 -----------------------------------------------------------------------------

def _brute_stat(values):
    n = len(values)
    mean = sum(Fraction(v) for v in values) / n
    if n < 2:
        return float(mean), 0.0
    var = sum((Fraction(v) - mean) ** 2 for v in values) / (n - 1)
    return float(mean), math.sqrt(float(var)) / math.sqrt(n)


def test_metrics_oracle(verdict):
    rng = random.Random(9)
    worst = 0.0
    for _ in range(1000):
        rows = []
        for _ in range(rng.randint(1, 30)):
            cls = rng.choice(list(ScenarioClass))
            dealt = rng.random() < 0.6
            rows.append(OutcomeRow(cls, rng.uniform(-1, 1), dealt, D("1") if dealt else None,
                                   rng.uniform(-1, 1) if dealt else None,
                                   rng.uniform(0, 1.2) if rng.random() < 0.9 else None,
                                   rng.random() < 0.1, rng.randint(0, 6)))
        s = aggregate(rows)
        pops = {
            "reward": [r.reward for r in rows],
            "deal_rate": [float(r.dealt) for r in rows],
            "deal_rate_mi": [float(r.dealt) for r in rows if r.scenario_class is ScenarioClass.MI],
            "bargained_ratio": [r.bargained_ratio for r in rows if r.dealt],
            "first_offer_ratio": [r.first_offer_ratio for r in rows if r.first_offer_ratio is not None],
            "overshoot_rate": [float(r.overshoot) for r in rows],
            "episode_length": [float(r.turns_used) for r in rows],
        }
        for name, values in pops.items():
            stat = s.get(name)
            if not values:
                assert stat is None
                continue
            m, se = _brute_stat(values)
            worst = max(worst, abs(stat.mean - m), abs(stat.standard_error - se))
    pair = MetricStat.of([1.0, 0.0])
    exact = pair.mean == 0.5 and pair.standard_error == 0.5
    assert statistics.stdev([1.0, 0.0]) / math.sqrt(2) == 0.5
    verdict(9, "metrics oracle", worst <= 1e-12 and exact, f"max err {worst:.1e}; {{1,0}} -> SE {pair.standard_error}")


# 10 ----------------------------------------------------------------------------

PERSONA_TEXT = {
    Persona.BEGGING: "BEG --- Act extremely SAD and DESPERATE. Beg for a better deal at every turn, using very "
                     "melancholic and pleading language.",
    Persona.INSULTING: "Insult --- Act extremely MEAN and AGGRESSIVE. Use insults, threats, and harsh language to "
                       "intimidate the other player. Your language is RUDE, DISRESPECTFUL, and IMPOLITE. Use curt, "
                       "brusque language, and show minimal courtesy---make the other player regret negotiating.",
    Persona.UNYIELDING: "Unyielding --- Act OVERLY STUBBORN and UNYIELDING. Refuse almost every offer the other "
                        "player makes, praising your own position. Use firm, resolute language to show you will not "
                        "budge until you get the maximum for yourself.",
}


def test_persona_assembly(verdict):
    sc = beauty_scenario()
    buyer_text = "\n".join(assemble_buyer_prompt(sc))
    default_system, _ = assemble_seller_prompt(sc, Persona.DEFAULT)
    problems = []
    for persona, text in PERSONA_TEXT.items():
        system, _ = assemble_seller_prompt(sc, persona)
        if text not in system:
            problems.append(f"{persona.value} missing from seller")
        if text in buyer_text or text in default_system:
            problems.append(f"{persona.value} leaked")
        if system.replace(text, "") != default_system:
            problems.append(f"{persona.value} changes more than its block")
    if PersonaSpec.of(Persona.DEFAULT).block_text != "":
        problems.append("default persona not empty")
    verdict(10, "persona assembly", not problems, "; ".join(problems) or "3 personas verbatim, default empty")
