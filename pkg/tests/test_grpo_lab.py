import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bargain_arena.catalog import synth_scenarios
from bargain_arena.grpo_lab import (
    ANCHOR_BINS,
    Choice,
    GroupBatch,
    ToyBuyerPolicy,
    TrainConfig,
    batch_normalize,
    default_training_seller,
    group_advantages,
    policy_update,
    rollout_group,
    train,
)

from conftest import beauty_scenario


def test_advantage_examples():
    assert group_advantages([1, 0, -1]) == pytest.approx([1.2247, 0, -1.2247], abs=1e-3)
    assert group_advantages([0.5, 0.5, 0.5]) == [0.0, 0.0, 0.0]
    assert group_advantages([0.3]) == [0.0]
    with pytest.raises(ValueError):
        group_advantages([])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=2, max_size=16), st.floats(-5, 5))
def test_advantage_properties(rewards, shift):
    a = np.array(group_advantages(rewards))
    assert abs(a.sum()) < 1e-9
    b = np.array(group_advantages([r + shift for r in rewards]))
    assert np.allclose(a, b, atol=1e-6)


def test_rollout_group_shape_and_determinism():
    sc, seller = beauty_scenario(), default_training_seller()
    pol = ToyBuyerPolicy.initial()
    g = rollout_group(pol, seller, sc, 8, seed=5)
    assert len(g.trajectories) == 8 and {r.scenario.codename for r in g.trajectories} == {"beauty_29"}
    again = rollout_group(pol, seller, sc, 8, seed=5)
    assert g.rewards == again.rewards and g.choices == again.choices
    assert rollout_group(pol, seller, sc, 1, seed=5).advantages == [0.0]


def test_policy_rows_are_distributions():
    pol = ToyBuyerPolicy.initial()
    for head in ("anchor", "step", "quit"):
        assert np.allclose(pol.probs(head).sum(axis=-1), 1.0, atol=1e-9)


def _batch(pol, adv, k):
    sc = beauty_scenario()
    return GroupBatch(sc, [0.0], [adv], [], [[Choice("anchor", 0, k)]])


@pytest.mark.parametrize("k", range(len(ANCHOR_BINS)))
def test_positive_advantage_raises_taken_bin(k):
    pol = ToyBuyerPolicy.initial()
    new = policy_update(pol, [_batch(pol, 1.0, k)], 0.5)
    assert new.probs("anchor")[0, k] > pol.probs("anchor")[0, k]


def test_update_noops():
    pol = ToyBuyerPolicy.initial()
    assert policy_update(pol, [_batch(pol, 0.0, 3)], 1.0) is pol
    assert policy_update(pol, [_batch(pol, 1.0, 3)], 0.0) is pol
    with pytest.raises(ValueError):
        policy_update(pol, [], 1.0)


def test_batch_normalize_centres_whole_batch():
    sc = beauty_scenario()
    bs = [GroupBatch(sc, [1.0, 1.0], [0.0, 0.0], []), GroupBatch(sc, [0.0, 0.0], [0.0, 0.0], [])]
    out = batch_normalize(bs)
    assert out[0].advantages == pytest.approx([1.0, 1.0]) and out[1].advantages == pytest.approx([-1.0, -1.0])


def test_train_counts():
    scs = synth_scenarios(0, 8)
    seller = default_training_seller()
    assert train(TrainConfig(iterations=0), scs, seller) == []
    (s,) = train(TrainConfig(batch_size=2, group_size=2, iterations=1, learning_rate=1.0), scs, seller)
    assert s.count == 4


def test_train_config_defaults():
    c = TrainConfig()
    assert (c.batch_size, c.group_size, c.learning_rate, c.max_turns) == (64, 8, 3e-5, 6)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
