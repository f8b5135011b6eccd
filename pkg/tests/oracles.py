"""Independent reference implementations used only by the tests.

Nothing here imports the package's numerical helpers; each oracle recomputes
its quantity the slow, obvious way.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np


# -- scheduler --


def allocation_oracle(weights: Sequence[float], n_tot: int, eps: float = 1e-9) -> list[int]:
    """Floor + largest-fractional-part remainder, written with plain loops."""
    total = 0.0
    for w in weights:
        total += w
    shares = [n_tot * w / (total + eps) for w in weights]
    n = [math.floor(s) for s in shares]
    rem = n_tot - sum(n)
    cand = [(-(shares[k] - n[k]), k) for k in range(len(weights)) if weights[k] > 0]
    cand.sort()
    i = 0
    while rem > 0:
        n[cand[i % len(cand)][1]] += 1
        rem -= 1
        i += 1
    return n


def max_packing(lengths: Sequence[int], capacities: Sequence[int]) -> int:
    """Exhaustive maximum of total packed length (small instances only)."""
    lengths = list(lengths)
    caps = list(capacities)
    best = 0

    def rec(i: int, total: int) -> None:
        nonlocal best
        if total + sum(lengths[i:]) <= best:
            return
        if i == len(lengths):
            best = max(best, total)
            return
        for k in range(len(caps)):
            if caps[k] >= lengths[i]:
                caps[k] -= lengths[i]
                rec(i + 1, total + lengths[i])
                caps[k] += lengths[i]
        rec(i + 1, total)

    rec(0, 0)
    return best


def check_schedule(assignment: dict, lengths: dict, budgets: Sequence[int], usable: Sequence[bool], used) -> list[str]:
    """Constraint violations of a block schedule; empty when feasible."""
    problems = []
    loads = [0] * len(budgets)
    for bid, k in assignment.items():
        if bid not in lengths:
            problems.append(f"unknown block {bid}")
            continue
        if k is None:
            continue
        if not 0 <= k < len(budgets):
            problems.append(f"block {bid} in slot {k} outside horizon")
            continue
        if not usable[k]:
            problems.append(f"block {bid} in predicted-outage slot {k}")
        loads[k] += lengths[bid]
    if set(assignment) != set(lengths):
        problems.append("assignment does not cover every block exactly once")
    for k in range(len(budgets)):
        if loads[k] > budgets[k]:
            problems.append(f"slot {k} load {loads[k]} exceeds budget {budgets[k]}")
        if loads[k] != int(used[k]):
            problems.append(f"slot {k} bookkeeping {int(used[k])} != {loads[k]}")
        if not usable[k] and budgets[k] != 0:
            problems.append(f"predicted-outage slot {k} has budget {budgets[k]}")
    return problems


# -- transforms --


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix from the cosine definition."""
    m = np.empty((n, n))
    for k in range(n):
        a = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        for i in range(n):
            m[k, i] = a * math.cos(math.pi * (2 * i + 1) * k / (2 * n))
    return m


JPEG_ZIGZAG_8 = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
]


# -- metrics --


def psnr_ref(x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    s = 0.0
    for a, b in zip(x.tolist(), y.tolist()):
        s += (a - b) * (a - b)
    m = s / x.size
    return math.inf if m == 0 else 10.0 * math.log10(1.0 / m)


def ssim_ref(x, y, win: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03, L: float = 1.0) -> float:
    """Direct-summation SSIM: explicit 2-D Gaussian weights at every valid window position."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    h = win // 2
    w2 = np.empty((win, win))
    for i in range(win):
        for j in range(win):
            w2[i, j] = math.exp(-((i - h) ** 2 + (j - h) ** 2) / (2 * sigma * sigma))
    w2 /= w2.sum()
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    per_channel = []
    H, W = x.shape[:2]
    for c in range(x.shape[2]):
        vals = []
        for r in range(H - win + 1):
            for q in range(W - win + 1):
                px = x[r : r + win, q : q + win, c]
                py = y[r : r + win, q : q + win, c]
                mx = float(np.sum(w2 * px))
                my = float(np.sum(w2 * py))
                vx = float(np.sum(w2 * (px - mx) ** 2))
                vy = float(np.sum(w2 * (py - my) ** 2))
                cxy = float(np.sum(w2 * (px - mx) * (py - my)))
                vals.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
        per_channel.append(sum(vals) / len(vals))
    return sum(per_channel) / len(per_channel)


# -- statistics --


def lag1_autocorr(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=float) - np.mean(a)
    return float(np.dot(a[:-1], a[1:]) / np.dot(a, a))
