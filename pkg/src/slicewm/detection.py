"""Pointwise matching, match ratios and the three-state verdict."""

from __future__ import annotations

import enum
import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from slicewm.core import FACTORS, DescriptorSet, FactorKey, LatentGrid, PartitionLayout, Position, SecretKey
from slicewm.synthesis import synthesize_latent

DEFAULT_TAU_LOCAL = 1.0
DEFAULT_TAU_GLOBAL = 0.6
DEFAULT_LOCAL_RATIO = 0.5


class State(enum.Enum):
    INTACT = "I"
    TAMPERED = "II"
    ABSENT = "III"

    @property
    def exit_code(self) -> int:
        return {State.INTACT: 0, State.TAMPERED: 2, State.ABSENT: 3}[self]


def _per_factor(value: float | Mapping, name: str) -> dict[FactorKey, float]:
    if isinstance(value, Mapping):
        out = {FactorKey.parse(k): float(v) for k, v in value.items()}
        missing = [k.value for k in FACTORS if k not in out]
        if missing:
            raise ValueError(f"{name} missing factor(s): {', '.join(missing)}")
        return {k: out[k] for k in FACTORS}
    return {k: float(value) for k in FACTORS}


@dataclass(frozen=True)
class ThresholdSet:
    """Verification thresholds.

    ``tau_local`` holds per-factor L2 distance thresholds; ``local_ratio`` holds the
    per-factor match-ratio each region needs to pass; ``tau_global`` is the global
    match-ratio threshold.
    """

    tau_global: float = DEFAULT_TAU_GLOBAL
    tau_local: Mapping[FactorKey, float] = field(default_factory=lambda: DEFAULT_TAU_LOCAL)  # type: ignore[assignment]
    local_ratio: Mapping[FactorKey, float] = field(default_factory=lambda: DEFAULT_LOCAL_RATIO)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        tau_local = _per_factor(self.tau_local, "tau_local")
        local_ratio = _per_factor(self.local_ratio, "local_ratio")
        if not 0.0 <= self.tau_global <= 1.0:
            raise ValueError("tau_global must be in [0, 1]")
        if any(v < 0 for v in tau_local.values()):
            raise ValueError("distance thresholds must be >= 0")
        if any(not 0.0 <= v <= 1.0 for v in local_ratio.values()):
            raise ValueError("local ratio thresholds must be in [0, 1]")
        object.__setattr__(self, "tau_global", float(self.tau_global))
        object.__setattr__(self, "tau_local", tau_local)
        object.__setattr__(self, "local_ratio", local_ratio)

    @classmethod
    def from_counts(
        cls, counts: Mapping[FactorKey | str, int], layout: PartitionLayout, **kwargs
    ) -> ThresholdSet:
        """Convert per-region match-count thresholds into ratio thresholds."""
        sizes = layout.region_sizes
        ratio = {FactorKey.parse(k): min(1.0, n / sizes[FactorKey.parse(k)]) for k, n in counts.items()}
        return cls(local_ratio=ratio, **kwargs)

    def to_dict(self) -> dict:
        return {
            "tau_global": self.tau_global,
            "tau_local": {k.value: self.tau_local[k] for k in FACTORS},
            "local_ratio": {k.value: self.local_ratio[k] for k in FACTORS},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> ThresholdSet:
        return cls(
            tau_global=data.get("tau_global", DEFAULT_TAU_GLOBAL),
            tau_local=data.get("tau_local", DEFAULT_TAU_LOCAL),
            local_ratio=data.get("local_ratio", DEFAULT_LOCAL_RATIO),
        )


def _check_dims(a: LatentGrid, b: LatentGrid) -> None:
    if a.shape != b.shape:
        raise ValueError(f"latent dims differ: {a.shape} vs {b.shape}")


def pointwise_distance(a: LatentGrid, b: LatentGrid, p: Position | tuple[int, int]) -> float:
    _check_dims(a, b)
    return float(np.linalg.norm(a.at(p) - b.at(p)))


def distance_map(a: LatentGrid, b: LatentGrid) -> np.ndarray:
    _check_dims(a, b)
    return np.linalg.norm(a.values - b.values, axis=2)


def match_map(z_inv: LatentGrid, z_ref: LatentGrid, layout: PartitionLayout, th: ThresholdSet) -> np.ndarray:
    """Boolean h x w map, True where the distance is within the region's threshold."""
    _check_dims(z_inv, z_ref)
    if (layout.h, layout.w) != z_inv.shape[:2]:
        raise ValueError(f"layout is {layout.h}x{layout.w} but latents are {z_inv.h}x{z_inv.w}")
    tau = np.zeros((layout.h, layout.w))
    for k in FACTORS:
        tau[layout.mask(k)] = th.tau_local[k]
    return distance_map(z_inv, z_ref) <= tau


@dataclass(frozen=True)
class MatchStats:
    counts: dict[FactorKey, int]
    sizes: dict[FactorKey, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def hw(self) -> int:
        return sum(self.sizes.values())

    @property
    def m_global(self) -> float:
        return self.total / self.hw

    @property
    def m_local(self) -> dict[FactorKey, float]:
        return {k: self.counts[k] / self.sizes[k] for k in FACTORS}

    def exact_global(self) -> Fraction:
        return Fraction(self.total, self.hw)

    def exact_local(self) -> dict[FactorKey, Fraction]:
        return {k: Fraction(self.counts[k], self.sizes[k]) for k in FACTORS}


def match_stats(matches: np.ndarray, layout: PartitionLayout) -> MatchStats:
    matches = np.asarray(matches, dtype=bool)
    if matches.shape != (layout.h, layout.w):
        raise ValueError(f"match map is {matches.shape}, layout is {(layout.h, layout.w)}")
    counts = {k: int(matches[layout.mask(k)].sum()) for k in FACTORS}
    return MatchStats(counts, layout.region_sizes)


def match_ratios(matches: np.ndarray, layout: PartitionLayout) -> tuple[float, dict[FactorKey, float]]:
    stats = match_stats(matches, layout)
    return stats.m_global, stats.m_local


@dataclass(frozen=True)
class VerificationReport:
    state: State
    m_global: float
    m_local: dict[FactorKey, float]
    failed_factors: tuple[FactorKey, ...]
    thresholds: ThresholdSet
    counts: dict[FactorKey, int] | None = None
    region_sizes: dict[FactorKey, int] | None = None

    def to_dict(self) -> dict:
        out = {
            "state": self.state.value,
            "m_global": round(self.m_global, 6),
            "m_local": {k.value: round(self.m_local[k], 6) for k in FACTORS},
            "failed_factors": [k.value for k in self.failed_factors],
            "thresholds": self.thresholds.to_dict(),
        }
        if self.counts is not None:
            out["counts"] = {k.value: self.counts[k] for k in FACTORS}
        if self.region_sizes is not None:
            out["region_sizes"] = {k.value: self.region_sizes[k] for k in FACTORS}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping) -> VerificationReport:
        def per_factor(d, cast):
            return None if d is None else {FactorKey.parse(k): cast(v) for k, v in d.items()}

        return cls(
            state=State(data["state"]),
            m_global=float(data["m_global"]),
            m_local=per_factor(data["m_local"], float),
            failed_factors=tuple(sorted(FactorKey.parse(k) for k in data["failed_factors"])),
            thresholds=ThresholdSet.from_dict(data["thresholds"]),
            counts=per_factor(data.get("counts"), int),
            region_sizes=per_factor(data.get("region_sizes"), int),
        )

    @classmethod
    def from_json(cls, text: str) -> VerificationReport:
        return cls.from_dict(json.loads(text))


def classify(
    m_global: float,
    m_local: Mapping[FactorKey, float],
    th: ThresholdSet,
    *,
    stats: MatchStats | None = None,
) -> VerificationReport:
    failed = tuple(k for k in FACTORS if m_local[k] < th.local_ratio[k])
    if m_global < th.tau_global:
        state = State.ABSENT
    elif failed:
        state = State.TAMPERED
    else:
        state = State.INTACT
    return VerificationReport(
        state=state,
        m_global=m_global,
        m_local={k: m_local[k] for k in FACTORS},
        failed_factors=failed,
        thresholds=th,
        counts=None if stats is None else dict(stats.counts),
        region_sizes=None if stats is None else dict(stats.sizes),
    )


def verify(
    z_inv: LatentGrid,
    suspect_descriptors: DescriptorSet,
    layout: PartitionLayout,
    key: SecretKey,
    th: ThresholdSet | None = None,
) -> VerificationReport:
    """Reconstruct the reference latent from suspect descriptors and classify."""
    th = th or ThresholdSet()
    z_ref = synthesize_latent(suspect_descriptors, layout, z_inv.d, key)
    stats = match_stats(match_map(z_inv, z_ref, layout, th), layout)
    return classify(stats.m_global, stats.m_local, th, stats=stats)
