"""Slow reference implementations used as test oracles."""

import numpy as np


def brute_force_match(Z, d, y, estimand="ATT"):
    """Exhaustive scan: each unit's closest opposite-status row, lowest index on ties."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    units = [i for i in range(len(d)) if d[i] == (1 if estimand == "ATT" else 0)]
    pool = [j for j in range(len(d)) if d[j] != d[units[0]]]
    matches, effects = [], []
    for i in units:
        best, best_j = np.inf, -1
        for j in pool:
            s = 0.0
            for c in range(Z.shape[1]):
                diff = Z[i, c] - Z[j, c]
                s += diff * diff
            if s < best:
                best, best_j = s, j
        matches.append(best_j)
        eff = y[i] - y[best_j]
        effects.append(eff if estimand == "ATT" else -eff)
    return np.array(units), np.array(matches), float(np.mean(effects))


def brute_force_ai_variance(Z, d, y, matches, units, estimate, estimand="ATT", J=2):
    """Abadie-Imbens variance by explicit loops."""
    Z = np.asarray(Z, dtype=float)
    n = len(d)
    sigma2 = np.zeros(n)
    for i in range(n):
        same = [j for j in range(n) if j != i and d[j] == d[i]]
        dist = [float(np.sum((Z[i] - Z[j]) ** 2)) for j in same]
        order = np.argsort(dist, kind="stable")[:J]
        ybar = np.mean([y[same[o]] for o in order])
        sigma2[i] = J / (J + 1) * (y[i] - ybar) ** 2
    sign = 1.0 if estimand == "ATT" else -1.0
    het = sum((sign * (y[u] - y[m]) - estimate) ** 2 for u, m in zip(units, matches))
    counts = {}
    for m in matches:
        counts[m] = counts.get(m, 0) + 1
    reuse = sum(c * (c - 1) * sigma2[j] for j, c in counts.items())
    return (het + reuse) / len(units) ** 2
