import numpy as np
import pytest

from freewaylab.replay import PrioritizedMemory, Transition


def make_transition(i):
    return Transition(s=np.full(4, float(i)), a=i % 7, r=-float(i),
                      s_next=np.full(4, float(i + 1)), done=False,
                      next_mask=np.ones(7, dtype=bool))


def test_push_into_empty_seeds_priority_one():
    mem = PrioritizedMemory(capacity=10)
    mem.push(make_transition(0))
    assert len(mem) == 1
    assert mem._priorities[0] == 1.0


def test_capacity_and_fifo_eviction():
    mem = PrioritizedMemory(capacity=2000)
    for i in range(2001):
        mem.push(make_transition(i))
    assert len(mem) == 2000
    stored = {int(tr.s[0]) for tr in mem._data}
    assert 0 not in stored
    assert 2000 in stored


def test_new_tuple_sampling_probability_at_least_max():
    mem = PrioritizedMemory(capacity=10)
    for i in range(5):
        mem.push(make_transition(i))
    mem.update_priorities([0, 1, 2, 3, 4], [0.0, 0.2, 0.5, 0.1, 0.3])
    mem.push(make_transition(5))
    probs = mem.probabilities()
    assert probs[5] >= probs.max() - 1e-15


def test_compute_priority_alpha_zero_uniform():
    mem = PrioritizedMemory(alpha=0.0)
    for d in (0.0, 0.5, 100.0):
        assert mem.compute_priority(d) == 1.0


def test_compute_priority_zero_difference_positive():
    mem = PrioritizedMemory(alpha=0.6, eps_per=0.01)
    assert mem.compute_priority(0.0) == pytest.approx(0.01 ** 0.6)
    assert mem.compute_priority(0.0) > 0


def test_compute_priority_direct_value():
    mem = PrioritizedMemory(alpha=1.0, eps_per=0.01)
    assert mem.compute_priority(0.99) == pytest.approx(1.0)


def test_sample_empty_memory_raises():
    mem = PrioritizedMemory()
    with pytest.raises(ValueError):
        mem.sample(4, np.random.default_rng(0))


def test_sample_single_element_always_index_zero():
    mem = PrioritizedMemory()
    mem.push(make_transition(0))
    idx, batch = mem.sample(16, np.random.default_rng(0))
    assert np.all(idx == 0)
    assert all(tr is mem._data[0] for tr in batch)


def test_probabilities_follow_priorities():
    mem = PrioritizedMemory(capacity=4, alpha=1.0)
    mem.push(make_transition(0))
    mem.push(make_transition(1))
    mem._priorities[0] = 1.0
    mem._priorities[1] = 3.0
    assert np.allclose(mem.probabilities(), [0.25, 0.75])


def test_probabilities_sum_to_one_through_operations():
    rng = np.random.default_rng(0)
    mem = PrioritizedMemory(capacity=50)
    for i in range(120):
        mem.push(make_transition(i))
        if i % 3 == 0 and len(mem) > 4:
            idx, _ = mem.sample(4, rng)
            mem.update_priorities(idx, rng.uniform(0, 2, size=4))
        assert abs(mem.probabilities().sum() - 1.0) < 1e-12


def test_empirical_frequencies_match_probabilities():
    rng = np.random.default_rng(42)
    mem = PrioritizedMemory(capacity=16, alpha=0.6)
    for i in range(8):
        mem.push(make_transition(i))
    mem.update_priorities(range(8), np.linspace(0.0, 2.0, 8))
    probs = mem.probabilities()
    idx, _ = mem.sample(100_000, rng)
    freq = np.bincount(idx, minlength=8) / 100_000
    assert np.max(np.abs(freq - probs)) < 0.01


def test_uniform_priorities_uniform_frequencies():
    rng = np.random.default_rng(7)
    mem = PrioritizedMemory(capacity=8)
    for i in range(8):
        mem.push(make_transition(i))
    idx, _ = mem.sample(100_000, rng)
    freq = np.bincount(idx, minlength=8) / 100_000
    assert np.max(np.abs(freq - 0.125)) < 0.01


def test_update_priorities_touches_only_given_indices():
    mem = PrioritizedMemory(capacity=8, alpha=0.6, eps_per=0.01)
    for i in range(4):
        mem.push(make_transition(i))
    before = mem._priorities[:4].copy()
    mem.update_priorities([2], [0.0])
    assert mem._priorities[2] == pytest.approx(0.01 ** 0.6)
    assert mem._priorities[0] == before[0]
    assert mem._priorities[1] == before[1]
    assert mem._priorities[3] == before[3]


def test_update_priorities_shifts_sampling_toward_raised_index():
    rng = np.random.default_rng(9)
    mem = PrioritizedMemory(capacity=8, alpha=1.0)
    for i in range(8):
        mem.push(make_transition(i))
    mem.update_priorities(range(8), [0.0] * 8)
    mem.update_priorities([5], [10.0])
    idx, _ = mem.sample(50_000, rng)
    freq = np.bincount(idx, minlength=8) / 50_000
    assert freq[5] > 0.9
