"""Acceptance criteria for the watermark build.

Each test prints a single ``PASS`` or ``FAIL`` line and then asserts. Run with
``pytest tests/test_acceptance.py -s`` or ``python3 tests/test_acceptance.py``.
"""

import json
import time

import numpy as np
import pytest
from scipy import stats

import oracles
from slicewm import slce
from slicewm.cli import main as cli_main
from slicewm.core import FACTORS, DescriptorSet, LatentGrid, SecretKey, build_layout
from slicewm.detection import State, ThresholdSet, verify
from slicewm.pipeline import StubDiffusionBackend, embed_pipeline, verify_pipeline
from slicewm.simulation import (
    ExperimentConfig,
    acceptance_slack,
    random_descriptors,
    run_forgery_experiment,
    run_forgery_sweep,
    run_localization_experiment,
    trial_rng,
)
from slicewm.synthesis import synthesize_latent
from slicewm.theory import kl_bernoulli, thm1_factor_bounds, thm2_presence_bound

SEEDS = range(20)


def report(name, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    print(line, flush=True)
    assert ok, line


def test_localization_compliance():
    config = ExperimentConfig()
    assert config.trials == 1000 and (config.h, config.w, config.d) == (64, 64, 4)
    t0 = time.perf_counter()
    rep = run_localization_experiment(config)
    elapsed = time.perf_counter() - t0
    s = rep.summary()
    untampered_min = min(s["factors"][k.value]["min"] for k in FACTORS if k.value != "act")
    act_max = s["factors"]["act"]["max"]
    g = s["global"]
    ok = (
        rep.violation_count == 0
        and untampered_min >= 0.90
        and act_max <= 0.15
        and g["min"] >= 0.675
        and g["max"] <= 0.7875
        and elapsed < 60.0
    )
    report(
        "localization bounds, 1000 trials",
        ok,
        f"violations={rep.violation_count} min_untampered={untampered_min:.4f} max_act={act_max:.4f} "
        f"m_g=[{g['min']:.4f}, {g['max']:.4f}] {elapsed:.1f}s",
    )


def test_localization_tightness():
    config = ExperimentConfig(placement="adversarial", trials=50)
    rep = run_localization_experiment(config)
    layout = config.build_layout()
    gaps = []
    for k in FACTORS:
        if k in config.params.tampered:
            continue
        bound = thm1_factor_bounds(config.params, k).value
        worst = min(r.m_local[k] for r in rep.records)
        gaps.append((worst - bound) * layout.region_sizes[k])
    ok = rep.violation_count == 0 and all(0.0 <= gap <= 1.0 for gap in gaps)
    report("localization lower bound tight within one position", ok, f"gap in positions: {max(gaps):.3f}")


def test_forgery_sweep():
    layout = build_layout(8, 8, "quadrant")
    trials = 100_000
    t0 = time.perf_counter()
    reports = run_forgery_sweep((0.1, 0.2, 0.25), (0.3, 0.35, 0.4), layout, trials, master_seed=2024)
    elapsed = time.perf_counter() - t0
    worst = []
    for r in reports:
        for p, b in ((r.p_presence, r.presence_bound.bound), (r.p_intact, r.state1_bound.bound)):
            slack = 3.0 * np.sqrt(b * (1 - b) / trials) + 1e-5
            assert abs(acceptance_slack(b, trials) - slack) < 1e-15
            worst.append(p - b - slack)
    ok = len(reports) == 9 and max(worst) <= 0.0 and elapsed < 120.0
    report("false-accept rates under Chernoff bounds, 3x3 sweep", ok, f"max excess={max(worst):.5f} {elapsed:.1f}s")


def test_bound_spot_values():
    kl = kl_bernoulli(0.5, 0.25)
    pres = thm2_presence_bound(0.2, 0.3, 64).bound
    kl_ref = float(oracles.kl_bernoulli_hp(0.5, 0.25))
    pres_ref = float(oracles.mp.exp(oracles.presence_log_bound_hp(0.2, 0.3, 64)))
    ok = (
        abs(kl - 0.143841) <= 1e-6
        and abs(pres - 0.16490) <= 1e-4
        and abs(kl - kl_ref) <= 1e-12
        and abs(pres - pres_ref) <= 1e-12
    )
    report("bound calculator spot values", ok, f"kl={kl:.7f} presence={pres:.6f}")


def _other(descriptors, k, rng):
    while True:
        text = random_descriptors(rng)[k]
        if text != descriptors[k]:
            return descriptors.replace(k, text)


def test_closed_loop_states():
    layout = build_layout(32, 32, "quadrant")
    d = 4
    failures = []
    for seed in SEEDS:
        rng = trial_rng(99, seed)
        key = SecretKey(rng.bytes(32))
        wrong = SecretKey(rng.bytes(32))
        desc = random_descriptors(rng)
        backend = StubDiffusionBackend(noise_sigma=0.1, seed=seed)
        bundle, _ = embed_pipeline(desc, "a prompt", layout, d, key, backend)

        r = verify_pipeline(bundle, layout, d, key, backend=backend)
        if r.state is not State.INTACT or r.m_global != 1.0:
            failures.append((seed, "pristine", r.state))
        for k in FACTORS:
            r = verify_pipeline(bundle.with_descriptors(_other(desc, k, rng)), layout, d, key, backend=backend)
            if r.state is not State.TAMPERED or r.failed_factors != (k,):
                failures.append((seed, k.value, r.state, r.failed_factors))
        r = verify_pipeline(bundle, layout, d, wrong, backend=backend)
        if r.state is not State.ABSENT:
            failures.append((seed, "wrong key", r.state))
        noise = LatentGrid(rng.standard_normal((32, 32, d)))
        r = verify(noise, desc, layout, key)
        if r.state is not State.ABSENT:
            failures.append((seed, "random latent", r.state))
    total = len(SEEDS) * 7
    report("closed-loop three-state classification", not failures, f"{total - len(failures)}/{total} correct")


def test_synthesis_statistics():
    key = SecretKey(bytes(range(32)))
    rng = np.random.default_rng(5)
    desc = random_descriptors(rng)
    layout = build_layout(64, 64, "quadrant")
    z = synthesize_latent(desc, layout, 4, key)
    values = z.values.ravel()
    ks = stats.kstest(values, "norm").statistic
    variances = [float(z.values[layout.mask(k)].var()) for k in FACTORS]

    locality_ok = 0
    specs = ("quadrant", "row-stripes", "block-interleave:2", "block-interleave:3")
    for case in range(50):
        r = np.random.default_rng(1000 + case)
        h, w = (int(x) for x in r.integers(4, 20, size=2))
        lay = build_layout(h, w, specs[case % len(specs)])
        d = int(r.integers(1, 5))
        k = FACTORS[int(r.integers(4))]
        key_c = SecretKey(r.bytes(32))
        base = random_descriptors(r)
        z0 = synthesize_latent(base, lay, d, key_c)
        z1 = synthesize_latent(_other(base, k, r), lay, d, key_c)
        mask = lay.mask(k)
        if np.array_equal(z0.values[~mask], z1.values[~mask]) and np.all(z0.values[mask] != z1.values[mask]):
            locality_ok += 1
    ok = ks <= 0.016 and all(0.95 <= v <= 1.05 for v in variances) and locality_ok == 50
    report(
        "synthesis statistics and locality",
        ok,
        f"KS={ks:.4f} var=[{min(variances):.3f}, {max(variances):.3f}] locality={locality_ok}/50",
    )


def test_determinism(tmp_path):
    key = SecretKey(bytes(range(32)))
    layout = build_layout(64, 64, "quadrant")
    desc = DescriptorSet.from_mapping({"sub": "a", "env": "b", "act": "c", "det": "d"})
    payloads = {slce.dumps(synthesize_latent(desc, layout, 4, key)) for _ in range(2)}

    desc_path = tmp_path / "desc.json"
    desc_path.write_text(json.dumps(desc.to_dict()))
    key_path = tmp_path / "key.bin"
    key.save(key_path)
    for name in ("b1", "b2"):
        cli_main(["embed", "--descriptors", str(desc_path), "--key", str(key_path), "--out", str(tmp_path / name)])
    payloads |= {(tmp_path / n / "payload.slce").read_bytes() for n in ("b1", "b2")}

    config = ExperimentConfig(trials=24, master_seed=11)
    loc = {run_localization_experiment(config, workers=w).to_csv() for w in (1, 3)}
    small = build_layout(8, 8, "quadrant")
    th = ThresholdSet(tau_global=0.3, local_ratio=0.3)
    forg = {
        "".join(
            f"{r.trial},{r.m_global!r}\n"
            for r in run_forgery_experiment(0.2, small, th, 500, 3, workers=w, keep_records=True).records
        )
        for w in (1, 2)
    }
    ok = len(payloads) == 1 and len(loc) == 1 and len(forg) == 1
    report("byte-identical outputs across runs and worker counts", ok)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
