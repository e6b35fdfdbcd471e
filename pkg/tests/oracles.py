"""Independent reference computations used to freeze expected values.

Nothing here imports the package under test.
"""

from __future__ import annotations

import itertools
import math

from mpmath import gamma, log, mp, mpf, sqrt

mp.dps = 50


def kl_bernoulli_hp(a, b):
    a, b = mpf(a), mpf(b)
    first = mpf(0) if a == 0 else a * log(a / b)
    second = mpf(0) if a == 1 else (1 - a) * log((1 - a) / (1 - b))
    return first + second


def presence_log_bound_hp(q, tau_g, hw):
    return -hw * kl_bernoulli_hp(tau_g, q)


def state1_log_bound_hp(q, taus, sizes):
    return -sum(n * kl_bernoulli_hp(t, q) for t, n in zip(taus, sizes))


def expected_gaussian_norm(d: int):
    """E||N(0, I_d)|| = sqrt(2) Gamma((d+1)/2) / Gamma(d/2)."""
    return sqrt(2) * gamma(mpf(d + 1) / 2) / gamma(mpf(d) / 2)


def quadrant_sizes_brute(h: int, w: int) -> dict[str, int]:
    """Count cells per quadrant by enumerating every cell under the ceil-split rule."""
    top, left = math.ceil(h / 2), math.ceil(w / 2)
    sizes = {"sub": 0, "env": 0, "act": 0, "det": 0}
    for i, j in itertools.product(range(h), range(w)):
        if i < top:
            sizes["sub" if j < left else "env"] += 1
        else:
            sizes["act" if j < left else "det"] += 1
    return sizes


def binomial_upper_tail(n: int, p: float, k_min: int) -> float:
    """Exact P(Binomial(n, p) >= k_min)."""
    return float(sum(mp.binomial(n, k) * mpf(p) ** k * (1 - mpf(p)) ** (n - k) for k in range(k_min, n + 1)))
