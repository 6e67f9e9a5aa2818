"""Independent brute-force oracles; no code shared with the package."""

import math


def qwk_bruteforce(truth, pred, min_score, max_score):
    """Quadratic weighted kappa with explicit O/E/w loops."""
    r = max_score - min_score + 1
    n = len(truth)
    observed = [[0.0] * r for _ in range(r)]
    for a, b in zip(truth, pred):
        observed[a - min_score][b - min_score] += 1.0 / n
    hist_truth = [0.0] * r
    hist_pred = [0.0] * r
    for a in truth:
        hist_truth[a - min_score] += 1.0 / n
    for b in pred:
        hist_pred[b - min_score] += 1.0 / n
    numer = 0.0
    denom = 0.0
    for i in range(r):
        for j in range(r):
            w = (i - j) ** 2 / (r - 1) ** 2
            numer += w * observed[i][j]
            denom += w * hist_truth[i] * hist_pred[j]
    if denom == 0.0:
        return 0.0
    return 1.0 - numer / denom


def mse_loops(truth, pred):
    return sum((p - t) ** 2 for t, p in zip(truth, pred)) / len(truth)


def mae_loops(truth, pred):
    return sum(abs(p - t) for t, p in zip(truth, pred)) / len(truth)


def r2_loops(truth, pred):
    mean_truth = sum(truth) / len(truth)
    ss_res = sum((t - p) ** 2 for t, p in zip(truth, pred))
    ss_tot = sum((t - mean_truth) ** 2 for t in truth)
    return 1.0 - ss_res / ss_tot


def sample_std_loops(values):
    n = len(values)
    m = sum(values) / n
    return math.sqrt(sum((v - m) ** 2 for v in values) / (n - 1))
