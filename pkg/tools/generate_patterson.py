"""Regenerate ``src/adasgo/data/patterson.json``.

Each level extends the previous node set by the degree-(n+1) polynomial that
is orthogonal to every polynomial of degree <= n under the weight given by the
node polynomial of the current set.  The new roots interlace the old nodes,
so each is bracketed and polished with bisection + secant in mpmath.
Weights are interpolatory, obtained from the Legendre moment system.

Run: python tools/generate_patterson.py   (takes a few minutes)
"""

from __future__ import annotations

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 80
MAX_LEVEL = 8
OUT = Path(__file__).resolve().parents[1] / "src" / "adasgo" / "data" / "patterson.json"


def legendre_all(n, x):
    """P_0..P_n at x via the three-term recurrence."""
    p = [mp.mpf(1), x]
    for k in range(1, n):
        p.append(((2 * k + 1) * x * p[k] - k * p[k - 1]) / (k + 1))
    return p[: n + 1]


def gauss_legendre(m):
    nodes, weights = [], []
    for i in range(1, m + 1):
        x = mp.cos(mp.pi * (i - mp.mpf(1) / 4) / (m + mp.mpf(1) / 2))
        for _ in range(100):
            p = legendre_all(m, x)
            dp = m * (x * p[m] - p[m - 1]) / (x * x - 1)
            dx = p[m] / dp
            x -= dx
            if abs(dx) < mp.mpf(10) ** (-mp.mp.dps + 5):
                break
        p = legendre_all(m, x)
        dp = m * (x * p[m] - p[m - 1]) / (x * x - 1)
        nodes.append(x)
        weights.append(2 / ((1 - x * x) * dp * dp))
    return nodes, weights


def extend(nodes):
    n = len(nodes)
    m = (3 * n + 4) // 2 + 2
    gx, gw = gauss_legendre(m)
    pi_vals = []
    for x in gx:
        v = mp.mpf(1)
        for t in nodes:
            v *= x - t
        pi_vals.append(v)
    leg = [legendre_all(n + 1, x) for x in gx]
    # G = P_{n+1} + sum_{j<=n} a_j P_j, orthogonal to P_k (k<=n) under pi.
    A = mp.matrix(n + 1, n + 1)
    b = mp.matrix(n + 1, 1)
    for k in range(n + 1):
        for j in range(n + 1):
            A[k, j] = mp.fsum(gw[s] * pi_vals[s] * leg[s][j] * leg[s][k] for s in range(m))
        b[k] = -mp.fsum(gw[s] * pi_vals[s] * leg[s][n + 1] * leg[s][k] for s in range(m))
    a = mp.lu_solve(A, b)

    def G(x):
        p = legendre_all(n + 1, x)
        return p[n + 1] + mp.fsum(a[j] * p[j] for j in range(n + 1))

    edges = [mp.mpf(-1)] + sorted(nodes) + [mp.mpf(1)]
    roots = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        flo, fhi = G(lo), G(hi)
        if flo * fhi > 0:
            raise RuntimeError("root not bracketed")
        for _ in range(60):
            mid = (lo + hi) / 2
            fm = G(mid)
            if flo * fm <= 0:
                hi, fhi = mid, fm
            else:
                lo, flo = mid, fm
        roots.append(mp.findroot(G, (lo, hi), solver="anderson"))
    return sorted(list(nodes) + roots)


def interpolatory_weights(nodes):
    n = len(nodes)
    A = mp.matrix(n, n)
    for j, x in enumerate(nodes):
        p = legendre_all(n - 1, x)
        for k in range(n):
            A[k, j] = p[k]
    b = mp.matrix(n, 1)
    b[0] = 2
    return list(mp.lu_solve(A, b))


def main():
    nodes = [mp.mpf(0)]
    levels = {1: {"nodes": ["0"], "weights": ["2"]}}
    for level in range(2, MAX_LEVEL + 1):
        nodes = extend(nodes)
        nodes = [(x - y) / 2 for x, y in zip(nodes, reversed(nodes))]  # exact symmetry
        w = interpolatory_weights(nodes)
        w = [(x + y) / 2 for x, y in zip(w, reversed(w))]
        levels[level] = {
            "nodes": [mp.nstr(x, 40, min_fixed=-1, max_fixed=1) for x in nodes],
            "weights": [mp.nstr(x, 40) for x in w],
        }
        print(level, len(nodes), flush=True)
    OUT.write_text(json.dumps({"max_level": MAX_LEVEL, "levels": levels}, indent=1))


if __name__ == "__main__":
    main()
