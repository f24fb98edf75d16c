import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from remsample.sampling import (CLAMPED, DEGENERATE, OK, DyadStream, SampleConfig, draw_stratum,
                                sample_controls, sample_events)


@pytest.mark.parametrize("kwargs", [dict(p=0), dict(p=1.5), dict(m=0), dict(m=2.5), dict(seed=-1),
                                    dict(seed=2**64), dict(rng_algorithm="mt19937")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SampleConfig(**kwargs)


def test_p_one_includes_everything():
    assert sample_events(1000, SampleConfig(p=1.0)).all()


def test_event_sampling_is_deterministic():
    cfg = SampleConfig(p=0.3, seed=42)
    a, b = sample_events(50_000, cfg), sample_events(50_000, cfg)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_events(50_000, SampleConfig(p=0.3, seed=43)))


def test_binomial_count_interval():
    lo, hi = stats.binom.ppf([0.0005, 0.9995], 10**6, 1e-4)
    n = int(sample_events(10**6, SampleConfig(p=1e-4, seed=1)).sum())
    assert lo <= n <= hi
    assert 45 <= n <= 163


def test_samples_nest_across_p():
    small = sample_events(20_000, SampleConfig(p=0.1, seed=9))
    large = sample_events(20_000, SampleConfig(p=0.4, seed=9))
    assert np.all(large[small])


def test_degenerate_and_clamped():
    controls, status = sample_controls(1, 1, (0, 0), 5, DyadStream(0, 0))
    assert controls == [] and status == DEGENERATE
    controls, status = sample_controls(2, 1, (0, 0), 5, DyadStream(0, 0))
    assert controls == [(1, 0)] and status == CLAMPED
    controls, status = sample_controls(2, 2, (0, 0), 3, DyadStream(0, 0))
    assert sorted(controls) == [(0, 1), (1, 0), (1, 1)] and status == OK
    with pytest.raises(ValueError):
        sample_controls(2, 2, (2, 0), 1, DyadStream(0, 0))


def test_draw_stratum_records_risk_set():
    s = draw_stratum(7, (1, 1), 3, 4, SampleConfig(m=5, seed=3))
    assert s.event_seq == 7 and s.risk_set_size == 12 and len(s.controls) == 5 and s.status == OK
    assert s == draw_stratum(7, (1, 1), 3, 4, SampleConfig(m=5, seed=3))


def test_below_is_in_range_and_covers():
    rng = DyadStream(1, 2)
    draws = [rng.below(7) for _ in range(2000)]
    assert set(draws) == set(range(7))


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 30), st.integers(0, 2**64 - 1),
       st.integers(0, 10**6), st.data())
def test_controls_distinct_non_case_in_range(nu, na, m, seed, seq, data):
    case = (data.draw(st.integers(0, nu - 1)), data.draw(st.integers(0, na - 1)))
    controls, status = sample_controls(nu, na, case, m, DyadStream(seed, seq))
    assert len(set(controls)) == len(controls)
    assert case not in controls
    assert all(0 <= u < nu and 0 <= a < na for u, a in controls)
    assert len(controls) == min(m, nu * na - 1)
    again, _ = sample_controls(nu, na, case, m, DyadStream(seed, seq))
    assert again == controls


@pytest.mark.parametrize("nu,na,m", [(4, 5, 3), (3, 3, 6)])
def test_uniformity_chi_square(nu, na, m):
    # (4, 5, 3) uses rejection sampling, (3, 3, 6) the dense shuffle
    case = (1, 2)
    counts = np.zeros(nu * na)
    n = 100_000 // m
    for seq in range(n):
        controls, _ = sample_controls(nu, na, case, m, DyadStream(5, seq))
        for u, a in controls:
            counts[u * na + a] += 1
    counts = np.delete(counts, case[0] * na + case[1])
    _, pvalue = stats.chisquare(counts)
    assert pvalue > 0.001


def test_each_dyad_frequency_matches_exact_probability():
    nu = na = 100
    case = (3, 4)
    reps = 10_000
    hits = np.zeros(nu * na)
    for seq in range(reps):
        controls, _ = sample_controls(nu, na, case, 5, DyadStream(11, seq))
        for u, a in controls:
            hits[u * na + a] += 1
    hits = np.delete(hits, case[0] * na + case[1])
    prob = 5 / 9999
    sigma = np.sqrt(reps * prob * (1 - prob))
    # count outside 3 sigma should be consistent with a normal tail
    outside = np.mean(np.abs(hits - reps * prob) > 3 * sigma + 0.5)
    assert outside < 0.01
    assert abs(hits.sum() - 5 * reps) == 0
