import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import kl_bernoulli_hp, presence_log_bound_hp, state1_log_bound_hp
from slicewm.core import FACTORS, build_layout
from slicewm.theory import (
    ChannelParams,
    FactorChannel,
    kl_bernoulli,
    thm1_factor_bounds,
    thm1_global_bounds,
    thm2_presence_bound,
    thm2_state1_bound,
    threshold_window,
)

SUB, ENV, ACT, DET = FACTORS


@pytest.mark.parametrize(
    "a,b,expected",
    [(0.3, 0.3, 0.0), (0.5, 0.25, 0.143841), (0.3, 0.2, 0.028168), (0.3, 0.1, 0.153664), (0.5, 0.2, 0.223144)],
)
def test_kl_spot_values(a, b, expected):
    assert kl_bernoulli(a, b) == pytest.approx(expected, abs=1e-6)
    assert kl_bernoulli(a, b) == pytest.approx(float(kl_bernoulli_hp(a, b)), rel=1e-13, abs=1e-15)


def test_kl_edges():
    assert kl_bernoulli(0.0, 0.5) == pytest.approx(math.log(2))
    assert kl_bernoulli(1.0, 0.5) == pytest.approx(math.log(2))
    assert kl_bernoulli(0.3, 0.0) == math.inf
    assert kl_bernoulli(0.3, 1.0) == math.inf
    assert kl_bernoulli(1.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        kl_bernoulli(1.2, 0.5)


def test_kl_grid_nonnegative():
    grid = [i / 11 for i in range(1, 11)]
    pairs = [(a, b) for a in grid for b in grid]
    assert len(pairs) == 100
    for a, b in pairs:
        v = kl_bernoulli(a, b)
        assert v >= 0
        assert (v == 0) == (a == b)
        assert v == pytest.approx(float(kl_bernoulli_hp(a, b)), rel=1e-12, abs=1e-15)


def test_thm1_factor_bounds():
    p = ChannelParams.uniform(beta=0.05, gamma=0.05)
    b = thm1_factor_bounds(p, SUB)
    assert b.kind == "lower" and b.value == pytest.approx(0.90)
    p = ChannelParams.uniform(tampered=["act"], beta=0.05, rho=0.9)
    b = thm1_factor_bounds(p, ACT)
    assert b.kind == "upper" and b.value == pytest.approx(0.15)
    p = ChannelParams.uniform(tampered=["act"], beta=0.3, rho=0.1)
    assert thm1_factor_bounds(p, ACT).value == 1.0
    p = ChannelParams.uniform(beta=0.7, gamma=0.6)
    assert thm1_factor_bounds(p, SUB).value == 0.0


def test_thm1_global_bounds():
    layout = build_layout(8, 8)
    p = ChannelParams.uniform(tampered=["act"], beta=0.05, gamma=0.05, rho=0.9)
    lo, hi = thm1_global_bounds(p, layout)
    assert lo == pytest.approx(0.675) and hi == pytest.approx(0.7875)
    assert thm1_global_bounds(ChannelParams.uniform(), layout) == (1.0, 1.0)
    assert thm1_global_bounds(ChannelParams.uniform(tampered=FACTORS, rho=1.0), layout) == (0.0, 0.0)


unit = st.floats(0, 1)


@settings(max_examples=200, deadline=None)
@given(
    chans=st.lists(st.tuples(unit, unit, unit), min_size=4, max_size=4),
    tampered=st.sets(st.sampled_from(FACTORS)),
    h=st.integers(2, 9),
    w=st.integers(2, 9),
)
def test_global_bounds_ordered(chans, tampered, h, w):
    params = ChannelParams({k: FactorChannel(beta=b, gamma=g, rho=r) for k, (b, g, r) in zip(FACTORS, chans)}, tampered)
    lo, hi = thm1_global_bounds(params, build_layout(h, w))
    assert 0.0 <= lo <= hi <= 1.0


def test_threshold_windows():
    p = ChannelParams.uniform(epsilon=0.3, delta=0.2, Delta=2.0)
    w = threshold_window(p, SUB, "both")
    assert (w.lo, w.hi) == pytest.approx((0.5, 1.7))
    assert 0.5 in w and 1.0 in w and 1.7 not in w and 0.49 not in w
    assert threshold_window(ChannelParams.uniform(epsilon=1.0, delta=1.0, Delta=1.5), SUB, "both") is None
    w = threshold_window(ChannelParams.uniform(), SUB)
    assert w.lo == 0.0 and w.hi == math.inf and 1e9 in w
    p = ChannelParams.uniform(tampered=["act"], epsilon=0.3, Delta=2.0)
    w = threshold_window(p, ACT)
    assert w.lo == 0.0 and w.hi == pytest.approx(1.7)
    assert threshold_window(ChannelParams.uniform(tampered=["act"], epsilon=2.0, Delta=2.0), ACT) is None


def test_presence_bound_values():
    b = thm2_presence_bound(0.2, 0.3, 64)
    assert b.applicable
    assert b.bound == pytest.approx(0.16490, abs=1e-4)
    assert b.log_bound == pytest.approx(float(presence_log_bound_hp(0.2, 0.3, 64)), rel=1e-12)
    assert b.log_bound == pytest.approx(-1.8027, abs=1e-4)
    b = thm2_presence_bound(0.3, 0.3, 1000)
    assert b.bound == 1.0 and not b.applicable
    b = thm2_presence_bound(0.1, 0.3, 4096)
    assert b.log_bound == pytest.approx(-629.406, abs=1e-3)
    assert b.log_bound == pytest.approx(float(presence_log_bound_hp(0.1, 0.3, 4096)), rel=1e-12)
    assert b.bound < 1e-270


def test_state1_bound_values():
    sizes = {k: 16 for k in FACTORS}
    b = thm2_state1_bound(0.2, {k: 0.3 for k in FACTORS}, sizes)
    assert b.bound == pytest.approx(thm2_presence_bound(0.2, 0.3, 64).bound, rel=1e-12)
    b = thm2_state1_bound(0.2, {k: 0.2 for k in FACTORS}, sizes)
    assert b.bound == 1.0 and b.inapplicable_factors == FACTORS
    taus = {SUB: 0.5, ENV: 0.3, ACT: 0.3, DET: 0.3}
    b = thm2_state1_bound(0.2, taus, sizes)
    expected = float(state1_log_bound_hp(0.2, [0.5, 0.3, 0.3, 0.3], [16] * 4))
    assert b.log_bound == pytest.approx(expected, rel=1e-12)
    assert b.log_bound == pytest.approx(-4.9223, abs=1e-4)
    assert b.bound == pytest.approx(0.0072821, abs=1e-7)


def test_state1_partial_applicability():
    sizes = {k: 16 for k in FACTORS}
    b = thm2_state1_bound(0.25, {SUB: 0.2, ENV: 0.3, ACT: 0.3, DET: 0.3}, sizes)
    assert not b.applicable and b.inapplicable_factors == (SUB,)
    assert b.log_bound == pytest.approx(-48 * kl_bernoulli(0.3, 0.25))


probs = st.floats(0.01, 0.95)


@settings(max_examples=200, deadline=None)
@given(q=probs, tau=st.floats(0.02, 1.0), hw=st.integers(1, 5000), extra=st.integers(0, 5000), dtau=st.floats(0, 0.5))
def test_presence_monotone(q, tau, hw, extra, dtau):
    b1 = thm2_presence_bound(q, tau, hw)
    assert thm2_presence_bound(q, tau, hw + extra).bound <= b1.bound
    tau2 = min(1.0, tau + dtau)
    if tau > q:
        assert thm2_presence_bound(q, tau2, hw).log_bound <= b1.log_bound
    if b1.bound > 1e-300:
        assert math.exp(b1.log_bound) == pytest.approx(b1.bound, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(q=probs, taus=st.lists(st.floats(0.02, 1.0), min_size=4, max_size=4), sizes=st.lists(st.integers(1, 300), min_size=4, max_size=4), k=st.sampled_from(FACTORS))
def test_state1_monotone_in_region_size(q, taus, sizes, k):
    t = dict(zip(FACTORS, taus))
    s = dict(zip(FACTORS, sizes))
    b1 = thm2_state1_bound(q, t, s)
    s2 = dict(s)
    s2[k] += 10
    assert thm2_state1_bound(q, t, s2).bound <= b1.bound
    if b1.bound > 1e-300:
        assert math.exp(b1.log_bound) == pytest.approx(b1.bound, rel=1e-12)


def test_channel_validation():
    with pytest.raises(ValueError):
        FactorChannel(beta=1.5)
    with pytest.raises(ValueError):
        FactorChannel(epsilon=-1)
    with pytest.raises(ValueError, match="missing"):
        ChannelParams({SUB: FactorChannel()})


def test_params_dict_roundtrip():
    p = ChannelParams.uniform(tampered=["act", "sub"], beta=0.1, epsilon=0.2, Delta=3.0)
    assert ChannelParams.from_dict(p.to_dict()) == p
    q = ChannelParams.from_dict({"channels": {"*": {"beta": 0.1}}, "tampered": []})
    assert q[DET].beta == 0.1
