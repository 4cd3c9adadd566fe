import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lorain.errors import ConfigError
from lorain.link import (
    Arrival,
    LinkModel,
    coherent_power,
    group_arrivals,
    keyed_normal,
    keyed_uniform,
    resolve_arrivals,
    sensitivity_dbm,
)

COH = 1 / 125_000
NOISE = 1e-12


def arr(i, frame=b"a", p=1.0, start=0.0, ok=True):
    return Arrival(i, frame, p, start, start + 0.1, COH, ok)


def test_single_perfect_link_delivered():
    r = resolve_arrivals([arr(0)], NOISE, 1.0)
    assert r.outcome == {0: "delivered"}


def test_coherent_pair_beats_equal_interferer():
    r = resolve_arrivals([arr(0), arr(1), arr(2, frame=b"b")], NOISE, 1.0)
    assert r.group_power_mw[0] == pytest.approx(4.0)
    assert r.outcome == {0: "delivered", 1: "delivered", 2: "collided"}


def test_equal_different_frames_collide():
    r = resolve_arrivals([arr(0), arr(1, frame=b"b")], NOISE, 1.0)
    assert set(r.outcome.values()) == {"collided"}


def test_offset_beyond_one_chip_breaks_grouping():
    r = resolve_arrivals([arr(0), arr(1, start=1.5 * COH)], NOISE, 1.0)
    assert len(r.groups) == 2
    assert set(r.outcome.values()) == {"collided"}


def test_weak_signal_lost_on_noise():
    r = resolve_arrivals([arr(0, p=1e-13)], NOISE, 1.0)
    assert r.outcome == {0: "lost"}


def test_link_bernoulli_any_member_suffices():
    assert resolve_arrivals([arr(0, ok=False), arr(1)], NOISE, 1.0).outcome[0] == "delivered"
    assert resolve_arrivals([arr(0, ok=False)], NOISE, 1.0).outcome[0] == "lost"


@given(st.lists(st.floats(0.0, 3 * COH), min_size=1, max_size=8))
def test_groups_stay_inside_one_window(starts):
    groups = group_arrivals([arr(i, start=s) for i, s in enumerate(starts)])
    assert sum(len(g) for g in groups) == len(starts)
    for g in groups:
        ss = [a.start for a in g]
        assert max(ss) - min(ss) < COH


@given(st.lists(st.floats(1e-6, 10.0), min_size=1, max_size=6))
def test_coherent_power_at_least_incoherent(ps):
    assert coherent_power(ps) >= sum(ps) * (1 - 1e-12)


def test_keyed_draws_are_stable_and_distinct():
    assert keyed_uniform(1, "x", 2) == keyed_uniform(1, "x", 2)
    assert keyed_uniform(1, "x", 2) != keyed_uniform(1, "x", 3)
    assert 0 < keyed_uniform(5, "y") < 1
    assert math.isfinite(keyed_normal(5, "z"))


def test_link_model_validation():
    with pytest.raises(ConfigError):
        LinkModel(base_delivery_prob=1.5)
    with pytest.raises(ConfigError):
        LinkModel(capture_threshold_db=-1)


def test_sensitivity_drops_with_sf():
    assert sensitivity_dbm(12, 125_000, 6) < sensitivity_dbm(7, 125_000, 6)
