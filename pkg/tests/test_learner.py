import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rapidlearn import learner
from rapidlearn.learner import (
    ActionSpaceMismatch,
    DimensionMismatch,
    EmptyBiasSet,
    EmptyBuffer,
    EpisodeBuffer,
    ExplorationState,
    PolicyParams,
    bias_uab,
    bias_ucb,
    decayed,
    dump_params,
    load_params,
    log_prob_gradient,
    objective,
    policy_probs,
    select_action,
    update_network,
)


def test_zero_params_uniform():
    p = policy_probs(PolicyParams.zeros(7, 5), np.arange(7.0))
    assert np.allclose(p, 0.2)


def test_probs_normalized_and_deterministic():
    rng = np.random.default_rng(0)
    params = PolicyParams.init(11, 6, np.random.default_rng(3))
    for _ in range(50):
        p = policy_probs(params, rng.normal(size=11))
        assert abs(p.sum() - 1) < 1e-9 and (p >= 0).all()
    x = np.linspace(0, 1, 11)
    again = PolicyParams.init(11, 6, np.random.default_rng(3))
    assert np.array_equal(policy_probs(params, x), policy_probs(again, x))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        policy_probs(PolicyParams.zeros(4, 2), np.zeros(5))


def test_ucb_example():
    out = bias_ucb([0.5, 0.5], {0}, [1, 1], 3, 0.0005)
    assert out == pytest.approx([0.500524, 0.499476], abs=1e-6)


def test_ucb_t1_is_identity():
    assert np.array_equal(bias_ucb([0.3, 0.7], {0}, [1, 1], 1, 0.5), [0.3, 0.7])


def test_ucb_uniform_prefers_bias_set():
    for k in range(2, 8):
        out = bias_ucb(np.full(k, 1 / k), {k - 1}, np.ones(k), 5, 0.0005)
        assert int(np.argmax(out)) == k - 1


def test_uab_examples():
    assert bias_uab([0.5, 0.5], {0}, 2) == pytest.approx([0.75, 0.25])
    assert bias_uab([0.2, 0.3, 0.5], {2}, 2) == pytest.approx([0.1, 0.15, 0.75])
    assert bias_uab([0.2, 0.3, 0.5], {0, 1, 2}, 2) == pytest.approx([0.2, 0.3, 0.5])


def test_uab_empty_mass():
    with pytest.raises(EmptyBiasSet):
        bias_uab([0.0, 1.0], {0}, 2)
    with pytest.raises(EmptyBiasSet):
        bias_uab([0.5, 0.5], set(), 2)


def test_uab_normalization_on_random_distributions():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        k = int(rng.integers(2, 30))
        p = rng.dirichlet(np.ones(k))
        delta = set(rng.choice(k, size=int(rng.integers(1, k + 1)), replace=False).tolist())
        assert abs(bias_uab(p, delta, float(rng.uniform(1, 5))).sum() - 1) < 1e-9


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=12), st.data(), st.floats(1.0, 10.0))
def test_uab_normalization_property(weights, data, mu):
    p = np.asarray(weights) / sum(weights)
    delta = data.draw(st.sets(st.integers(0, len(p) - 1), min_size=1))
    assert abs(bias_uab(p, delta, mu).sum() - 1) < 1e-9


def test_select_greedy():
    expl = ExplorationState("EG", (0,), 2, epsilon=0.0)
    rng = np.random.default_rng(0)
    assert all(select_action([0.1, 0.9], expl, rng) == 1 for _ in range(20))
    assert expl.counts.tolist() == [1, 21] and expl.t == 21


def test_select_uab_always_explores_toward_bias():
    expl = ExplorationState("KGE-UAB", (0,), 2, epsilon=1.0)
    rng = np.random.default_rng(0)
    assert all(select_action([0.5, 0.5], expl, rng) == 0 for _ in range(20))


def test_select_uab_sampling_follows_biased_distribution():
    expl = ExplorationState("KGE-UAB", (0,), 2, epsilon=1.0)
    rng = np.random.default_rng(1)
    draws = np.bincount([select_action([0.5, 0.5], expl, rng, sample=True) for _ in range(10_000)], minlength=2)
    assert np.allclose(draws / 10_000, [0.75, 0.25], atol=0.02)


def test_select_eg_uniform():
    expl = ExplorationState("EG", (0,), 4, epsilon=1.0)
    rng = np.random.default_rng(42)
    draws = np.bincount([select_action([0.7, 0.1, 0.1, 0.1], expl, rng) for _ in range(10_000)], minlength=4)
    assert np.allclose(draws / 10_000, 0.25, atol=0.02)
    assert stats.chisquare(draws).pvalue > 0.001


def test_select_sampling_follows_policy():
    expl = ExplorationState("EG", (0,), 3, epsilon=0.0)
    rng = np.random.default_rng(5)
    draws = np.bincount([select_action([0.2, 0.3, 0.5], expl, rng, sample=True) for _ in range(10_000)], minlength=3)
    assert np.allclose(draws / 10_000, [0.2, 0.3, 0.5], atol=0.02)


def test_select_is_deterministic_in_rng_stream():
    def run():
        expl = ExplorationState("KGE-UCB", (1,), 3, epsilon=0.5)
        rng = np.random.default_rng(9)
        return [select_action([0.4, 0.3, 0.3], expl, rng, sample=True) for _ in range(200)]

    assert run() == run()


def test_strategy_names():
    assert learner.normalize_strategy("kge-ucb") == "KGE-UCB"
    with pytest.raises(ValueError):
        learner.normalize_strategy("ppo")


def test_decay_schedule():
    assert decayed(0, 0.3, 0.05) == pytest.approx(0.3)
    assert decayed(2000, 0.3, 0.05) == pytest.approx(0.05 + 0.25 * 0.01)
    vals = [decayed(n, 0.3, 0.05) for n in range(0, 20_000, 100)]
    assert all(a >= b for a, b in zip(vals, vals[1:])) and min(vals) >= 0.05


def test_returns_reset_at_episode_end():
    buf = EpisodeBuffer()
    for r, d in [(1, False), (1, True), (2, False), (3, True)]:
        buf.append(np.zeros(2), 0, r, d)
    assert buf.returns(0.5).tolist() == [1.5, 1.0, 3.5, 3.0]


def test_step_index():
    buf = EpisodeBuffer()
    for d in [False, False, True, False, True]:
        buf.append(np.zeros(2), 0, -1.0, d)
    assert buf.step_index().tolist() == [0, 1, 2, 0, 1]


def _failures(n_episodes=3, length=5, n_in=3):
    buf = EpisodeBuffer()
    rng = np.random.default_rng(0)
    for _ in range(n_episodes):
        for t in range(length):
            buf.append(rng.normal(size=n_in), int(rng.integers(4)), -1.0, t == length - 1)
    return buf


def test_time_baseline_ignores_identical_failures():
    params = PolicyParams.init(3, 4, np.random.default_rng(1))
    new = update_network(params, _failures(), baseline="time")
    assert np.allclose(new.flat(), params.flat())
    moved = update_network(params, _failures(), baseline="batch")
    assert not np.allclose(moved.flat(), params.flat())


def test_time_baseline_favours_the_success():
    x = np.array([0.3, -0.2, 0.5])
    params = PolicyParams.init(3, 2, np.random.default_rng(4))
    buf = EpisodeBuffer()
    buf.append(x, 0, 1000.0, True)
    buf.append(x, 1, -1.0, True)
    new = update_network(params, buf)
    assert policy_probs(new, x)[0] > policy_probs(params, x)[0]
    with pytest.raises(ValueError):
        update_network(params, _failures(), baseline="median")


def test_update_requires_data():
    with pytest.raises(EmptyBuffer):
        update_network(PolicyParams.zeros(2, 2), EpisodeBuffer())


def test_zero_return_leaves_params():
    params = PolicyParams.init(3, 2, np.random.default_rng(0))
    buf = EpisodeBuffer()
    buf.append(np.ones(3), 1, 0.0, True)
    new = update_network(params, buf, normalize=False)
    assert np.array_equal(new.flat(), params.flat())
    assert len(buf) == 0


@pytest.mark.parametrize("optimizer", ["sgd", "rmsprop"])
def test_positive_return_raises_log_prob(optimizer):
    params = PolicyParams.init(3, 4, np.random.default_rng(1), optimizer=optimizer)
    x = np.array([0.2, -0.5, 1.0])
    buf = EpisodeBuffer()
    buf.append(x, 2, 5.0, True)
    new = update_network(params, buf, normalize=False)
    assert math.log(policy_probs(new, x)[2]) > math.log(policy_probs(params, x)[2])


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        n_in, n_out, T = int(rng.integers(2, 8)), int(rng.integers(2, 6)), int(rng.integers(1, 12))
        params = PolicyParams.init(n_in, n_out, rng, hidden=int(rng.integers(2, 10)))
        params = params.with_flat(rng.normal(scale=0.5, size=params.flat().size))
        states = rng.normal(size=(T, n_in))
        actions = rng.integers(n_out, size=T)
        weights = rng.normal(size=T)
        analytic = np.concatenate([g.ravel() for g in log_prob_gradient(params, states, actions, weights)])
        theta = params.flat()
        numeric = np.empty_like(theta)
        h = 1e-6
        for i in range(theta.size):
            up, down = theta.copy(), theta.copy()
            up[i] += h
            down[i] -= h
            numeric[i] = (objective(params.with_flat(up), states, actions, weights)
                          - objective(params.with_flat(down), states, actions, weights)) / (2 * h)
        rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
        assert rel < 1e-4


def test_serialization_round_trip():
    params = PolicyParams.init(5, 3, np.random.default_rng(0))
    blob = dump_params(params, ["a", "b", "c"], ["x", "y"])
    back, header = load_params(blob, ["a", "b", "c"], ["x", "y"])
    assert np.array_equal(back.flat(), params.flat())
    assert header["shapes"] == params.shapes
    with pytest.raises(ActionSpaceMismatch):
        load_params(blob, ["a", "b"])
    with pytest.raises(ActionSpaceMismatch):
        load_params(blob, entities=["x"])


def test_with_flat_size_check():
    with pytest.raises(DimensionMismatch):
        PolicyParams.zeros(2, 2).with_flat(np.zeros(3))
