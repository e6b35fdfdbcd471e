"""Closed-form localization and false-accept bounds."""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from slicewm.core import FACTORS, FactorKey, PartitionLayout


@dataclass(frozen=True)
class FactorChannel:
    """Channel quality for one factor.

    beta/epsilon: inversion-failure mass and inversion error bound.
    gamma/delta: re-extraction drift mass and drift bound (untampered factors).
    rho/Delta: corrupted mass and separation margin (tampered factors).
    """

    beta: float = 0.0
    epsilon: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0
    rho: float = 0.0
    Delta: float = 0.0

    def __post_init__(self) -> None:
        for name in ("beta", "gamma", "rho"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for name in ("epsilon", "delta", "Delta"):
            v = getattr(self, name)
            if not (v >= 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class ChannelParams:
    channels: Mapping[FactorKey, FactorChannel]
    tampered: frozenset[FactorKey] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        channels = {FactorKey.parse(k): v for k, v in self.channels.items()}
        missing = [k.value for k in FACTORS if k not in channels]
        if missing:
            raise ValueError(f"channel params missing factor(s): {', '.join(missing)}")
        object.__setattr__(self, "channels", {k: channels[k] for k in FACTORS})
        object.__setattr__(self, "tampered", frozenset(FactorKey.parse(k) for k in self.tampered))

    @classmethod
    def uniform(cls, tampered: Iterable[FactorKey | str] = (), **kwargs: float) -> ChannelParams:
        ch = FactorChannel(**kwargs)
        return cls({k: ch for k in FACTORS}, frozenset(FactorKey.parse(k) for k in tampered))

    def __getitem__(self, k: FactorKey | str) -> FactorChannel:
        return self.channels[FactorKey.parse(k)]

    def to_dict(self) -> dict:
        return {
            "channels": {k.value: vars(self.channels[k]).copy() for k in FACTORS},
            "tampered": [k.value for k in FACTORS if k in self.tampered],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> ChannelParams:
        chans = data["channels"]
        if set(chans) == {"*"}:
            chans = {k.value: chans["*"] for k in FACTORS}
        return cls(
            {FactorKey.parse(k): FactorChannel(**v) for k, v in chans.items()},
            frozenset(FactorKey.parse(k) for k in data.get("tampered", ())),
        )


def _pos(x: float) -> float:
    return max(x, 0.0)


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def kl_bernoulli(a: float, b: float) -> float:
    """KL divergence between Bernoulli(a) and Bernoulli(b), with 0 ln 0 = 0.

    Returns ``math.inf`` when the divergence is unbounded (b in {0, 1} and a != b).
    """
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    if a == b:
        return 0.0
    if b in (0.0, 1.0):
        return math.inf
    total = 0.0
    if a > 0.0:
        total += a * math.log(a / b)
    if a < 1.0:
        total += (1.0 - a) * math.log((1.0 - a) / (1.0 - b))
    return max(total, 0.0)


@dataclass(frozen=True)
class FactorBound:
    kind: str  # "lower" for untampered, "upper" for tampered
    value: float

    def holds(self, m: float, slack: float = 1e-12) -> bool:
        if self.kind == "lower":
            return m >= self.value - slack
        return m <= self.value + slack


def thm1_factor_bounds(params: ChannelParams, k: FactorKey | str) -> FactorBound:
    k = FactorKey.parse(k)
    ch = params[k]
    if k in params.tampered:
        return FactorBound("upper", _clamp01(1.0 - _pos(ch.rho - ch.beta)))
    return FactorBound("lower", _clamp01(1.0 - ch.beta - ch.gamma))


def thm1_global_bounds(params: ChannelParams, layout: PartitionLayout) -> tuple[float, float]:
    sizes = layout.region_sizes
    hw = layout.hw
    lower = upper = 0.0
    for k in FACTORS:
        share = sizes[k] / hw
        ch = params[k]
        if k in params.tampered:
            upper += share * (1.0 - _pos(ch.rho - ch.beta))
        else:
            lower += share * (1.0 - ch.beta - ch.gamma)
            upper += share
    lower, upper = _clamp01(lower), _clamp01(upper)
    return min(lower, upper), upper


@dataclass(frozen=True)
class ThresholdWindow:
    """Half-open interval [lo, hi) of admissible distance thresholds."""

    lo: float
    hi: float = math.inf

    def __contains__(self, tau: float) -> bool:
        return self.lo <= tau < self.hi


def threshold_window(
    params: ChannelParams, k: FactorKey | str, role: str | None = None
) -> ThresholdWindow | None:
    """Distance thresholds under which the localization bounds are guaranteed.

    ``role`` is ``"untampered"``, ``"tampered"`` or ``"both"`` (for planning a threshold
    that works whether or not the factor is attacked); by default it follows the
    factor's membership in the tampered set. Returns None when infeasible.
    """
    k = FactorKey.parse(k)
    ch = params[k]
    if role is None:
        role = "tampered" if k in params.tampered else "untampered"
    if role == "untampered":
        return ThresholdWindow(ch.epsilon + ch.delta)
    if role == "tampered":
        hi = ch.Delta - ch.epsilon
        return ThresholdWindow(0.0, hi) if hi > 0.0 else None
    if role == "both":
        lo, hi = ch.epsilon + ch.delta, ch.Delta - ch.epsilon
        return ThresholdWindow(lo, hi) if lo < hi else None
    raise ValueError(f"unknown role {role!r}")


@dataclass(frozen=True)
class ChernoffBound:
    bound: float
    log_bound: float
    applicable: bool
    inapplicable_factors: tuple[FactorKey, ...] = ()


def thm2_presence_bound(q: float, tau_g: float, hw: int) -> ChernoffBound:
    """Bound on P(m_g >= tau_g) when each position matches independently w.p. <= q."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0, 1)")
    if not 0.0 < tau_g <= 1.0:
        raise ValueError("tau_g must be in (0, 1]")
    if hw < 1:
        raise ValueError("hw must be >= 1")
    if q >= tau_g:
        return ChernoffBound(1.0, 0.0, False)
    log_bound = -hw * kl_bernoulli(tau_g, q)
    return ChernoffBound(_clamp01(math.exp(log_bound)), log_bound, True)


def thm2_state1_bound(
    q: float, tau_local: Mapping[FactorKey, float], region_sizes: Mapping[FactorKey, int]
) -> ChernoffBound:
    """Bound on P(every m_k >= tau_k); factors with q >= tau_k contribute nothing."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0, 1)")
    exponent = 0.0
    inapplicable = []
    for k in FACTORS:
        tau = float(tau_local[k])
        if not 0.0 < tau <= 1.0:
            raise ValueError("local ratio thresholds must be in (0, 1]")
        if q >= tau:
            inapplicable.append(k)
            continue
        exponent += region_sizes[k] * kl_bernoulli(tau, q)
    log_bound = -exponent
    return ChernoffBound(_clamp01(math.exp(log_bound)), log_bound, not inapplicable, tuple(inapplicable))
