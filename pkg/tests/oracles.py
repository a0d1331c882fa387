"""Independent reference implementations used only by the tests.

They favour obviousness over speed: plain loops, Python floats and math.
"""

from __future__ import annotations

import math
from collections import defaultdict

import mpmath


def two_pass_stats(values):
    """dict of the eight statistics via textbook two-pass formulas."""
    xs = sorted(float(v) for v in values)
    n = len(xs)
    mean = math.fsum(xs) / n
    mid = n // 2
    median = xs[mid] if n % 2 else (xs[mid - 1] + xs[mid]) / 2
    out = {"min": xs[0], "max": xs[-1], "median": median, "average": mean, "count": float(n)}
    m2 = math.fsum((x - mean) ** 2 for x in xs) / n
    m3 = math.fsum((x - mean) ** 3 for x in xs) / n
    m4 = math.fsum((x - mean) ** 4 for x in xs) / n
    out["std"] = math.sqrt(m2 * n / (n - 1)) if n >= 2 else None
    const = xs[0] == xs[-1]
    if n >= 3:
        out["skew"] = 0.0 if const else (m3 / m2**1.5) * math.sqrt(n * (n - 1)) / (n - 2)
    else:
        out["skew"] = None
    if n >= 4:
        if const:
            out["kurt"] = 0.0
        else:
            g2 = m4 / m2**2 - 3.0
            out["kurt"] = ((n + 1) * g2 + 6) * (n - 1) / ((n - 2) * (n - 3))
    else:
        out["kurt"] = None
    return out


def brute_aggregate(records, interval=300):
    """{(interval_start, key_tuple, stat): value} by grouping in a dict."""
    groups = defaultdict(list)
    for r in records:
        k = r.key
        t = r.timestamp - r.timestamp % interval
        groups[(t, (k.location, k.kind, k.host, k.method, k.statusCode, k.endpoint))].append(r.response_time)
    out = {}
    for (t, key), vals in groups.items():
        for stat, v in two_pass_stats(vals).items():
            if v is not None:
                out[(t, key, stat)] = v
    return out


def q_highprec(x: float) -> float:
    """Gaussian upper tail by numerical integration of the density."""
    mpmath.mp.dps = 40
    f = lambda t: mpmath.exp(-t * t / 2) / mpmath.sqrt(2 * mpmath.pi)  # noqa: E731
    return float(mpmath.quad(f, [x, mpmath.inf]))


def naive_matmul(a, b):
    n, k, m = len(a), len(b), len(b[0])
    return [[math.fsum(a[i][p] * b[p][j] for p in range(k)) for j in range(m)] for i in range(n)]


def naive_dense_chain(x, weights):
    """Apply a chain of linear layers given as (W, b) nested lists."""
    h = [list(map(float, x))]
    for w, b in weights:
        h = naive_matmul(h, w)
        h = [[v + bb for v, bb in zip(h[0], b)]]
    return h[0]


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def gru_step_direct(W, U, b, x, h, act="relu"):
    """One gated recurrent step written element by element."""
    u = len(h)
    n_in = len(x)
    f = (lambda a: max(a, 0.0)) if act == "relu" else math.tanh
    z, r = [], []
    for j in range(u):
        az = b[j] + sum(x[i] * W[i][j] for i in range(n_in)) + sum(h[i] * U[i][j] for i in range(u))
        ar = b[u + j] + sum(x[i] * W[i][u + j] for i in range(n_in)) + sum(h[i] * U[i][u + j] for i in range(u))
        z.append(_sig(az))
        r.append(_sig(ar))
    rh = [r[i] * h[i] for i in range(u)]
    out = []
    for j in range(u):
        a = b[2 * u + j] + sum(x[i] * W[i][2 * u + j] for i in range(n_in)) + sum(
            rh[i] * U[i][2 * u + j] for i in range(u)
        )
        out.append((1 - z[j]) * h[j] + z[j] * f(a))
    return out
