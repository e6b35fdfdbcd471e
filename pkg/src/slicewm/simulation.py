"""Monte-Carlo validation of the localization and false-accept bounds.

Channels are constructed so that the set-size and magnitude conditions on the
inversion and re-extraction errors hold exactly; the localization bounds are
then deterministic guarantees and any violation is a bug.

Every trial draws from its own substream, seeded from ``(master_seed, trial)``,
so results do not depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from slicewm.core import FACTORS, DescriptorSet, FactorKey, LatentGrid, PartitionLayout, SecretKey, resolve_layout
from slicewm.detection import State, ThresholdSet, classify, match_map, match_stats
from slicewm.synthesis import synthesize_latent
from slicewm.theory import (
    ChannelParams,
    thm1_factor_bounds,
    thm1_global_bounds,
    thm2_presence_bound,
    thm2_state1_bound,
    threshold_window,
)

DEFAULT_GROSS = (10.0, 20.0)
PLACEMENTS = ("random", "adversarial")
_BOUND_SLACK = 1e-12  # float rounding in count/size ratios vs real-valued bounds


class ConfigError(ValueError):
    pass


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(trial,)))


def experiment_key(master_seed: int) -> SecretKey:
    return SecretKey(hashlib.sha256(b"slicewm.sim.key" + master_seed.to_bytes(8, "little")).digest())


_WORDS = (
    "red", "quiet", "young", "old", "bright", "misty", "wooden", "silver", "boy", "girl", "dog",
    "field", "street", "forest", "beach", "running", "sitting", "jumping", "reading", "hat",
    "scarf", "bicycle", "lamp", "river", "night", "morning", "rain", "garden", "window", "cat",
)


def random_descriptors(rng: np.random.Generator) -> DescriptorSet:
    texts = []
    for _ in FACTORS:
        words = rng.choice(_WORDS, size=3)
        texts.append(" ".join(words) + f" {int(rng.integers(1 << 32))}")
    return DescriptorSet(tuple(texts))  # type: ignore[arg-type]


def set_size(fraction: float, n: int) -> int:
    """Smallest count >= fraction * n (guaranteed-size sets)."""
    return min(n, max(0, math.ceil(fraction * n - 1e-9)))


def _error_vectors(rng: np.random.Generator, norms: np.ndarray, d: int) -> np.ndarray:
    g = rng.standard_normal((len(norms), d))
    lengths = np.linalg.norm(g, axis=1)
    while np.any(lengths == 0.0):  # pragma: no cover - probability zero
        bad = lengths == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        lengths = np.linalg.norm(g, axis=1)
    return g / lengths[:, None] * norms[:, None]


def _unit_open_closed(rng: np.random.Generator, n: int) -> np.ndarray:
    return 1.0 - rng.random(n)  # (0, 1]


def _pick(rng: np.random.Generator, idx: np.ndarray, n_take: int, prefer: np.ndarray | None = None) -> np.ndarray:
    """Boolean selector over ``idx`` choosing ``n_take`` entries, drawing from ``prefer`` first."""
    chosen = np.zeros(len(idx), dtype=bool)
    if prefer is None:
        chosen[rng.permutation(len(idx))[:n_take]] = True
        return chosen
    first = np.flatnonzero(prefer)
    rest = np.flatnonzero(~prefer)
    order = np.concatenate([rng.permutation(first), rng.permutation(rest)])
    chosen[order[:n_take]] = True
    return chosen


@dataclass(frozen=True)
class ChannelDraw:
    latent: LatentGrid
    in_set: np.ndarray  # h x w, True inside A_k / B_k / C_k


def inversion_channel(
    z_T: LatentGrid,
    params: ChannelParams,
    layout: PartitionLayout,
    rng: np.random.Generator,
    gross: tuple[float, float] = DEFAULT_GROSS,
) -> ChannelDraw:
    h, w, d = z_T.shape
    err = np.zeros((h * w, d))
    in_set = np.zeros(h * w, dtype=bool)
    for k in FACTORS:
        ch = params[k]
        idx = np.flatnonzero(layout.mask(k))
        good = _pick(rng, idx, set_size(1.0 - ch.beta, len(idx)))
        norms = np.empty(len(idx))
        norms[good] = ch.epsilon * _unit_open_closed(rng, int(good.sum()))
        norms[~good] = rng.uniform(gross[0], gross[1], int((~good).sum()))
        err[idx] = _error_vectors(rng, norms, d)
        in_set[idx] = good
    z_inv = LatentGrid(z_T.values + err.reshape(h, w, d))
    return ChannelDraw(z_inv, in_set.reshape(h, w))


def reextraction_channel(
    z_T: LatentGrid,
    params: ChannelParams,
    layout: PartitionLayout,
    rng: np.random.Generator,
    gross: tuple[float, float] = DEFAULT_GROSS,
    *,
    placement: str = "random",
    inversion_in_set: np.ndarray | None = None,
) -> ChannelDraw:
    """Perturb z_T the way a reconstruction from re-extracted descriptors would be.

    With ``placement="adversarial"`` the drifted positions of untampered factors are
    kept disjoint from the inversion failures (which makes the lower bound tight), and
    corrupted positions of tampered factors cover the inversion failures first.
    """
    if placement not in PLACEMENTS:
        raise ValueError(f"placement must be one of {PLACEMENTS}")
    if placement == "adversarial" and inversion_in_set is None:
        raise ValueError("adversarial placement needs the inversion in-set mask")
    h, w, d = z_T.shape
    err = np.zeros((h * w, d))
    in_set = np.zeros(h * w, dtype=bool)
    inv_flat = None if inversion_in_set is None else np.asarray(inversion_in_set, dtype=bool).ravel()
    for k in FACTORS:
        ch = params[k]
        idx = np.flatnonzero(layout.mask(k))
        n = len(idx)
        norms = np.empty(n)
        if k in params.tampered:
            prefer = None if placement == "random" else ~inv_flat[idx]
            chosen = _pick(rng, idx, set_size(ch.rho, n), prefer)
            m = int(chosen.sum())
            norms[chosen] = ch.Delta * (1.0 + rng.random(m))
            norms[~chosen] = rng.uniform(0.0, gross[1], n - m)
        else:
            n_drift = n - set_size(1.0 - ch.gamma, n)
            prefer = None if placement == "random" else inv_flat[idx]
            drifted = _pick(rng, idx, n_drift, prefer)
            chosen = ~drifted
            m = int(chosen.sum())
            norms[chosen] = ch.delta * _unit_open_closed(rng, m)
            norms[~chosen] = rng.uniform(gross[0], gross[1], n - m)
        err[idx] = _error_vectors(rng, norms, d)
        in_set[idx] = chosen
    return ChannelDraw(LatentGrid(z_T.values + err.reshape(h, w, d)), in_set.reshape(h, w))


def simulate_inversion(z_T, params, layout, rng, gross=DEFAULT_GROSS) -> LatentGrid:
    return inversion_channel(z_T, params, layout, rng, gross).latent


def simulate_reextraction(z_T, params, layout, rng, gross=DEFAULT_GROSS) -> LatentGrid:
    return reextraction_channel(z_T, params, layout, rng, gross).latent


def inversion_compliance(z_T: LatentGrid, z_inv: LatentGrid, params: ChannelParams, layout: PartitionLayout) -> dict[FactorKey, bool]:
    """Whether each region has at least (1 - beta) of its positions within epsilon."""
    dist = np.linalg.norm(z_inv.values - z_T.values, axis=2)
    out = {}
    for k in FACTORS:
        ch = params[k]
        region = dist[layout.mask(k)]
        out[k] = int((region <= ch.epsilon + _BOUND_SLACK).sum()) >= (1.0 - ch.beta) * len(region) - 1e-9
    return out


# ---------------------------------------------------------------------------
# Localization experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    h: int = 64
    w: int = 64
    d: int = 4
    layout: str = "quadrant"
    params: ChannelParams = field(
        default_factory=lambda: ChannelParams.uniform(
            tampered=("act",), beta=0.05, gamma=0.05, epsilon=0.3, delta=0.3, Delta=2.0, rho=0.9
        )
    )
    thresholds: ThresholdSet = field(default_factory=ThresholdSet)
    trials: int = 1000
    master_seed: int = 0
    gross: tuple[float, float] = DEFAULT_GROSS
    placement: str = "random"

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        lo, hi = (float(x) for x in self.gross)
        if not 0.0 < lo <= hi:
            raise ConfigError("gross error range must satisfy 0 < M_lo <= M_hi")
        object.__setattr__(self, "gross", (lo, hi))
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"placement must be one of {PLACEMENTS}")

    def build_layout(self) -> PartitionLayout:
        return resolve_layout(self.h, self.w, self.layout)

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "w": self.w,
            "d": self.d,
            "layout": self.layout,
            "params": self.params.to_dict(),
            "thresholds": self.thresholds.to_dict(),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "gross": list(self.gross),
            "placement": self.placement,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> ExperimentConfig:
        kwargs = dict(data)
        if "params" in kwargs:
            kwargs["params"] = ChannelParams.from_dict(kwargs["params"])
        if "thresholds" in kwargs:
            kwargs["thresholds"] = ThresholdSet.from_dict(kwargs["thresholds"])
        if "gross" in kwargs:
            kwargs["gross"] = tuple(kwargs["gross"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        return cls.from_dict(json.loads(text))


def check_localization_config(config: ExperimentConfig) -> None:
    """Refuse configurations whose thresholds fall outside the guaranteed windows."""
    problems = []
    params, th = config.params, config.thresholds
    for k in FACTORS:
        window = threshold_window(params, k)
        tau = th.tau_local[k]
        role = "tampered" if k in params.tampered else "untampered"
        if window is None:
            ch = params[k]
            problems.append(f"{k.value} ({role}): no feasible threshold, Delta={ch.Delta} <= epsilon={ch.epsilon}")
        elif tau not in window:
            problems.append(f"{k.value} ({role}): tau={tau} outside [{window.lo}, {window.hi})")
    max_tau = max(th.tau_local.values())
    max_small = max(max(params[k].epsilon, params[k].delta) for k in FACTORS)
    if config.gross[0] <= max_tau + max_small:
        problems.append(
            f"gross error floor M_lo={config.gross[0]} must exceed max tau + max(epsilon, delta) = {max_tau + max_small}"
        )
    if problems:
        raise ConfigError("infeasible localization config: " + "; ".join(problems))


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    m_local: dict[FactorKey, float]
    m_global: float
    state: State
    violations: tuple[str, ...] = ()


CSV_FIELDS = ["trial", *(f"m_{k.value}" for k in FACTORS), "m_global", "state", "violations"]


def _fmt(x: float) -> str:
    return repr(float(x))


def records_to_csv(records: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in records:
        writer.writerow(
            [r.trial, *(_fmt(r.m_local[k]) for k in FACTORS), _fmt(r.m_global), r.state.value, ";".join(r.violations)]
        )
    return buf.getvalue()


def records_from_csv(text: str) -> list[TrialRecord]:
    rows = csv.DictReader(io.StringIO(text))
    out = []
    for row in rows:
        out.append(
            TrialRecord(
                trial=int(row["trial"]),
                m_local={k: float(row[f"m_{k.value}"]) for k in FACTORS},
                m_global=float(row["m_global"]),
                state=State(row["state"]),
                violations=tuple(v for v in row["violations"].split(";") if v),
            )
        )
    return out


def _localization_trial(config: ExperimentConfig, layout: PartitionLayout, key: SecretKey, trial: int) -> TrialRecord:
    rng = trial_rng(config.master_seed, trial)
    params = config.params
    z_T = synthesize_latent(random_descriptors(rng), layout, config.d, key)
    inv = inversion_channel(z_T, params, layout, rng, config.gross)
    reext = reextraction_channel(
        z_T, params, layout, rng, config.gross, placement=config.placement, inversion_in_set=inv.in_set
    )
    stats = match_stats(match_map(inv.latent, reext.latent, layout, config.thresholds), layout)
    report = classify(stats.m_global, stats.m_local, config.thresholds, stats=stats)

    violations = []
    for k in FACTORS:
        if not thm1_factor_bounds(params, k).holds(stats.m_local[k], _BOUND_SLACK):
            violations.append(k.value)
    lo, hi = thm1_global_bounds(params, layout)
    if not lo - _BOUND_SLACK <= stats.m_global <= hi + _BOUND_SLACK:
        violations.append("global")
    return TrialRecord(trial, stats.m_local, stats.m_global, report.state, tuple(violations))


def _localization_chunk(args: tuple[ExperimentConfig, Sequence[int]]) -> list[TrialRecord]:
    config, trials = args
    layout = config.build_layout()
    key = experiment_key(config.master_seed)
    return [_localization_trial(config, layout, key, t) for t in trials]


def _chunks(n: int, workers: int) -> list[range]:
    size = max(1, math.ceil(n / max(1, workers * 4)))
    return [range(s, min(n, s + size)) for s in range(0, n, size)]


def _run_chunks(fn, config, n: int, workers: int) -> list:
    parts = [(config, r) for r in _chunks(n, workers)]
    if workers <= 1:
        results = [fn(p) for p in parts]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, parts))
    return [rec for chunk in results for rec in chunk]


@dataclass(frozen=True)
class LocalizationReport:
    config: ExperimentConfig
    records: list[TrialRecord]

    @property
    def violation_count(self) -> int:
        return sum(1 for r in self.records if r.violations)

    def summary(self) -> dict:
        params = self.config.params
        layout = self.config.build_layout()
        per_factor = {}
        for k in FACTORS:
            vals = np.array([r.m_local[k] for r in self.records])
            b = thm1_factor_bounds(params, k)
            per_factor[k.value] = {
                "min": float(vals.min()),
                "max": float(vals.max()),
                "mean": float(vals.mean()),
                "bound_kind": b.kind,
                "bound": b.value,
                "violations": sum(1 for r in self.records if k.value in r.violations),
            }
        g = np.array([r.m_global for r in self.records])
        lo, hi = thm1_global_bounds(params, layout)
        states = {s.value: sum(1 for r in self.records if r.state is s) for s in State}
        return {
            "experiment": "localization",
            "trials": len(self.records),
            "master_seed": self.config.master_seed,
            "placement": self.config.placement,
            "note": "channel parameters are illustrative simulation settings, not measured values",
            "factors": per_factor,
            "global": {
                "min": float(g.min()),
                "max": float(g.max()),
                "mean": float(g.mean()),
                "bound_lower": lo,
                "bound_upper": hi,
                "violations": sum(1 for r in self.records if "global" in r.violations),
            },
            "trials_with_violations": self.violation_count,
            "states": states,
            "config": self.config.to_dict(),
        }

    def to_csv(self) -> str:
        return records_to_csv(self.records)


def run_localization_experiment(config: ExperimentConfig, workers: int = 1) -> LocalizationReport:
    check_localization_config(config)
    records = _run_chunks(_localization_chunk, config, config.trials, workers)
    return LocalizationReport(config, records)


# ---------------------------------------------------------------------------
# Keyless forgery experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ForgeryConfig:
    q: float
    layout: PartitionLayout
    thresholds: ThresholdSet
    trials: int
    master_seed: int = 0
    keep_records: bool = False


def _forgery_chunk(args: tuple[ForgeryConfig, Sequence[int]]):
    cfg, trials = args
    layout, th = cfg.layout, cfg.thresholds
    fm = layout.factor_map.ravel()
    onehot = np.stack([fm == k.index for k in FACTORS], axis=1).astype(np.int64)
    sizes = onehot.sum(axis=0)
    hw = layout.hw
    draws = np.empty((len(trials), hw), dtype=bool)
    for row, t in enumerate(trials):
        draws[row] = trial_rng(cfg.master_seed, t).random(hw) < cfg.q
    counts = draws.astype(np.int64) @ onehot
    m_local = counts / sizes
    m_global = counts.sum(axis=1) / hw
    ratio = np.array([th.local_ratio[k] for k in FACTORS])
    present = m_global >= th.tau_global
    intact = present & np.all(m_local >= ratio, axis=1)
    records = []
    if cfg.keep_records:
        for row, t in enumerate(trials):
            state = State.INTACT if intact[row] else State.TAMPERED if present[row] else State.ABSENT
            records.append(TrialRecord(t, {k: float(m_local[row, k.index]) for k in FACTORS}, float(m_global[row]), state))
    return [(int(present.sum()), int(intact.sum()), records)]


def acceptance_slack(bound: float, trials: int) -> float:
    return 3.0 * math.sqrt(bound * (1.0 - bound) / trials) + 1.0 / trials


@dataclass(frozen=True)
class ForgeryReport:
    q: float
    tau_global: float
    local_ratio: dict[FactorKey, float]
    trials: int
    presence_hits: int
    intact_hits: int
    presence_bound: object
    state1_bound: object
    records: list[TrialRecord] = field(default_factory=list)

    @property
    def p_presence(self) -> float:
        return self.presence_hits / self.trials

    @property
    def p_intact(self) -> float:
        return self.intact_hits / self.trials

    @property
    def presence_pass(self) -> bool:
        b = self.presence_bound.bound
        return self.p_presence <= b + acceptance_slack(b, self.trials)

    @property
    def intact_pass(self) -> bool:
        b = self.state1_bound.bound
        return self.p_intact <= b + acceptance_slack(b, self.trials)

    def summary(self) -> dict:
        return {
            "experiment": "forgery",
            "q": self.q,
            "tau_global": self.tau_global,
            "local_ratio": {k.value: self.local_ratio[k] for k in FACTORS},
            "trials": self.trials,
            "p_presence": self.p_presence,
            "p_intact": self.p_intact,
            "presence_bound": self.presence_bound.bound,
            "presence_log_bound": self.presence_bound.log_bound,
            "presence_applicable": self.presence_bound.applicable,
            "state1_bound": self.state1_bound.bound,
            "state1_log_bound": self.state1_bound.log_bound,
            "state1_applicable": self.state1_bound.applicable,
            "presence_pass": self.presence_pass,
            "intact_pass": self.intact_pass,
        }


def run_forgery_experiment(
    q: float,
    layout: PartitionLayout,
    thresholds: ThresholdSet,
    trials: int,
    master_seed: int = 0,
    *,
    workers: int = 1,
    keep_records: bool = False,
) -> ForgeryReport:
    """Sample independent Bernoulli(q) match maps and count false acceptances."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0, 1)")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cfg = ForgeryConfig(q, layout, thresholds, trials, master_seed, keep_records)
    parts = _run_chunks(_forgery_chunk, cfg, trials, workers)
    presence = sum(p[0] for p in parts)
    intact = sum(p[1] for p in parts)
    records = [r for p in parts for r in p[2]]
    return ForgeryReport(
        q=q,
        tau_global=thresholds.tau_global,
        local_ratio=dict(thresholds.local_ratio),
        trials=trials,
        presence_hits=presence,
        intact_hits=intact,
        presence_bound=thm2_presence_bound(q, thresholds.tau_global, layout.hw),
        state1_bound=thm2_state1_bound(q, thresholds.local_ratio, layout.region_sizes),
        records=records,
    )


def run_forgery_sweep(
    qs: Iterable[float],
    taus: Iterable[float],
    layout: PartitionLayout,
    trials: int,
    master_seed: int = 0,
    *,
    workers: int = 1,
) -> list[ForgeryReport]:
    """Grid over (q, tau) with tau used for both the global and every local ratio threshold."""
    reports = []
    for n, (q, tau) in enumerate((q, t) for q in qs for t in taus):
        th = ThresholdSet(tau_global=tau, local_ratio=tau)
        reports.append(run_forgery_experiment(q, layout, th, trials, (master_seed + n) % 2**64, workers=workers))
    return reports
