import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fogtrust import ParameterError, StreamDemand, admit, dbf, load, max_load
from fogtrust._schedulability import (
    DELTA_MAX_CAP,
    candidate_deltas,
    default_delta_max,
    scale_bounds,
)


def d(c, t, dl):
    return StreamDemand(c, t, dl)


@pytest.mark.parametrize(
    "demand, delta, expected",
    [
        (d(2, 10, 12), 1, 0),
        (d(2, 10, 10), 10, 2),
        (d(1, 5, 8), 20, 4),
        (d(2, 10, 10), 0, 0),
        (d(2, 10, 10), 20, 4),
        (d(2, 10, 10), 25, 6),
        (d(3, 4, 2), 0, 3),
        (d(3, 4, 2), 2, 3),
        (d(3, 4, 2), 6, 6),
        (d(1, 1, 1), 7, 7),
        (d(5, 10, 30), 10, 0),
        (d(5, 10, 30), 25, 5),
        (d(0.5, 2, 2), 3, 1.0),
        # around the point where the count leaves zero
        (d(2, 10, 12), 2, 0),
        (d(2, 10, 12), 2.5, 2),
        (d(5, 10, 30), 0, 0),
        (d(5, 10, 30), 19, 0),
        (d(5, 10, 30), 20, 0),
        (d(5, 10, 30), 20.5, 5),
        (d(4, 5, 5), 5, 4),
        (d(4, 5, 5), 5.5, 8),
        (d(1, 3, 2), 1, 1),
    ],
)
def test_dbf(demand, delta, expected):
    assert dbf(demand, delta) == expected


@pytest.mark.parametrize(
    "demands, delta, expected",
    [
        ([d(2, 10, 10)], 20, 0.2),
        ([d(2, 10, 10), d(1, 5, 5)], 10, 0.4),
        ([], 10, 0.0),
        ([d(1, 5, 8)], 20, 0.2),
        ([d(5, 10, 30)], 20, 0.0),
        ([d(2, 10, 12), d(3, 4, 2)], 2, 1.5),
    ],
)
def test_load(demands, delta, expected):
    assert load(demands, delta) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(
    "demands, delta_max, expected",
    [
        ([d(2, 10, 10)], 40, (0.2, 10)),
        ([d(6, 10, 10)], 40, (0.6, 10)),
        ([], 40, (0.0, 40)),
        ([d(3, 4, 2)], 8, (1.5, 2)),
    ],
)
def test_max_load(demands, delta_max, expected):
    peak, at = max_load(demands, delta_max)
    assert peak == pytest.approx(expected[0], abs=1e-15)
    assert at == expected[1]


@pytest.mark.parametrize(
    "node, candidate, delta_max, expected",
    [
        ([], d(2, 10, 10), 40, True),
        ([d(9, 10, 10)], d(2, 10, 10), 40, False),
        ([], d(5, 5, 5), 20, True),
        ([d(5, 10, 10)], d(5, 10, 10), 40, True),
        ([d(5, 10, 10)], d(6, 10, 10), 40, False),
    ],
)
def test_admit(node, candidate, delta_max, expected):
    assert admit(node, candidate, delta_max) is expected


def test_candidate_deltas():
    assert candidate_deltas([d(2, 10, 10)], 40) == [10, 20, 30, 40]
    assert candidate_deltas([d(3, 4, 2), d(1, 5, 5)], 12) == [2, 5, 6, 10, 12]


@pytest.mark.parametrize(
    "args, expected",
    [
        ((5.0, 3.0, 1.0, 1.0), (5.0, 3.0)),
        ((10.0, 4.0, 0.5, 0.25), (5.0, 1.0)),
    ],
)
def test_scale_bounds(args, expected):
    bounds = scale_bounds(*args)
    assert (bounds.c_gen_fog, bounds.c_val_fog) == expected


@pytest.mark.parametrize(
    "args", [(10.0, 4.0, 0.0, 1.0), (10.0, 4.0, 1.0, -1.0), (0.0, 4.0, 1.0, 1.0)]
)
def test_scale_bounds_rejects_non_positive(args):
    with pytest.raises(ParameterError):
        scale_bounds(*args)


def test_preconditions():
    with pytest.raises(ParameterError):
        dbf(d(1, 1, 1), -0.5)
    with pytest.raises(ParameterError):
        load([d(1, 1, 1)], 0)
    with pytest.raises(ParameterError):
        max_load([d(1, 1, 1)], 0)
    with pytest.raises(ParameterError):
        StreamDemand(0, 1, 1)


@pytest.mark.parametrize(
    "periods, expected",
    [
        ([4.0, 5.0], 40.0),
        ([0.5, 0.75], 3.0),
        ([10.0], 20.0),
        ([6000.0], DELTA_MAX_CAP),
        ([math.pi], DELTA_MAX_CAP),
        ([], DELTA_MAX_CAP),
    ],
)
def test_default_delta_max(periods, expected):
    assert default_delta_max([d(1.0, t, t) for t in periods]) == expected


def _brute_force_demand(demand: StreamDemand, delta: Fraction) -> Fraction:
    """Work of synchronously released jobs whose absolute deadline lies in [0, delta]."""
    total, k = Fraction(0), 0
    while k * demand.period + demand.deadline <= delta:
        total += demand.exec_time
        k += 1
    return total


def test_dbf_bounds_the_exact_demand():
    rng = np.random.default_rng(2024)
    streams = [
        StreamDemand(
            Fraction(int(rng.integers(1, 20)), 4),
            Fraction(int(rng.integers(1, 40)), 2),
            Fraction(int(rng.integers(1, 60)), 2),
        )
        for _ in range(10)
    ]
    grid = [Fraction(k, 10) for k in range(1000)]

    for s in streams:
        demands = [dbf(s, delta) for delta in grid]
        assert all(a <= b for a, b in zip(demands, demands[1:]))
        for delta, value in zip(grid, demands):
            assert value >= _brute_force_demand(s, delta)

        # at absolute deadlines both counts agree
        for k in range(5):
            point = k * s.period + s.deadline
            assert dbf(s, point) == _brute_force_demand(s, point)


fractions = st.fractions(min_value=Fraction(1, 4), max_value=10, max_denominator=4)
demands = st.builds(StreamDemand, fractions, fractions, fractions)


@given(st.lists(demands, max_size=6), fractions)
def test_load_times_delta_is_the_total_demand(ds, delta):
    assert load(ds, delta) * delta == sum(dbf(x, delta) for x in ds)


@given(demands, fractions, st.integers(min_value=1, max_value=5))
def test_dbf_is_linear_in_execution_time(x, delta, k):
    scaled = StreamDemand(x.exec_time * k, x.period, x.deadline)
    assert dbf(scaled, delta) == k * dbf(x, delta)


@given(st.lists(demands, min_size=1, max_size=5), demands, st.data())
def test_admit_is_monotone(node, candidate, data):
    delta_max = Fraction(20)
    if not admit(node, candidate, delta_max):
        return
    drop = data.draw(st.integers(min_value=0, max_value=len(node) - 1))
    smaller = node[:drop] + node[drop + 1 :]
    assert admit(smaller, candidate, delta_max)
