"""Brute-force reference computations, deliberately independent of pathrl.

Nothing here imports pathrl's metric or statistics code.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def raster(box, size):
    """Integer box -> boolean grid; cell (r, c) covered iff x0 <= c < x1 and y0 <= r < y1."""
    x0, y0, x1, y1 = (int(v) for v in box)
    grid = np.zeros((size, size), dtype=bool)
    grid[y0:y1, x0:x1] = True
    return grid


def raster_iou(a, b, size=64) -> Fraction:
    ga, gb = raster(a, size), raster(b, size)
    inter = int(np.count_nonzero(ga & gb))
    union = int(np.count_nonzero(ga | gb))
    return Fraction(inter, union)


def pixel_dice(x, y) -> Fraction:
    xs = [bool(v) for v in np.asarray(x).ravel()]
    ys = [bool(v) for v in np.asarray(y).ravel()]
    both = sum(1 for a, b in zip(xs, ys) if a and b)
    total = sum(xs) + sum(ys)
    return Fraction(1) if total == 0 else Fraction(2 * both, total)


def greedy_flags(preds, gts, threshold, size=64):
    """Pure-python greedy matching on rasterized IoU; returns TP flags."""
    taken = [False] * len(gts)
    flags = []
    t = Fraction(threshold)
    for p in preds:
        best, best_j = Fraction(-1), None
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            v = raster_iou(p, g, size)
            if v > best:
                best, best_j = v, j
        if best_j is not None and best >= t:
            taken[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def exhaustive_ap(flags, n_gt) -> Fraction:
    """Enumerate every rank prefix; each TP adds 1/n_gt recall at the best precision reachable later."""
    if n_gt == 0:
        return Fraction(1) if not flags else Fraction(0)
    prefix_precision = []
    tp = 0
    for k, f in enumerate(flags, start=1):
        tp += f
        prefix_precision.append(Fraction(tp, k))
    total = Fraction(0)
    for k, f in enumerate(flags):
        if f:
            total += Fraction(1, n_gt) * max(prefix_precision[k:])
    return total


def naive_bleu4(cand, ref) -> float:
    def grams(toks, n):
        return [tuple(toks[i:i + n]) for i in range(len(toks) - n + 1)]

    precisions = []
    for n in range(1, 5):
        cg, rg = grams(cand, n), grams(ref, n)
        if not cg:
            precisions.append(0.0)
            continue
        clipped = 0
        for g in set(cg):
            clipped += min(cg.count(g), rg.count(g))
        precisions.append(clipped / len(cg))
    c, r = len(cand), len(ref)
    if c == 0 or min(precisions) == 0:
        return 0.0
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(sum(0.25 * math.log(p) for p in precisions))


def resize_search(h, w, m, p):
    """All patch-multiple pairs within budget and within the isotropic scale; max-area set."""
    # h' <= H*s  <=>  h'^2 * W <= H * M * P^2 when s < 1, else h' <= H
    shrink = m * p * p < h * w
    best, winners = -1, []
    for k in range(1, m + 1):
        for l in range(1, m // k + 1):
            hh, ww = k * p, l * p
            if shrink:
                ok = hh * hh * w <= h * m * p * p and ww * ww * h <= w * m * p * p
            else:
                ok = hh <= h and ww <= w
            if not ok:
                continue
            area = hh * ww
            if area > best:
                best, winners = area, [(hh, ww)]
            elif area == best:
                winners.append((hh, ww))
    return winners


def brute_wilcoxon(diffs) -> float:
    """Two-sided p by listing all 2^n sign flips of the average-ranked |d|."""
    d = [x for x in diffs if x != 0]
    mags = sorted(abs(x) for x in d)
    ranks = {}
    i = 0
    while i < len(mags):
        j = i
        while j < len(mags) and mags[j] == mags[i]:
            j += 1
        ranks[mags[i]] = Fraction(i + 1 + j, 2)
        i = j
    r = [ranks[abs(x)] for x in d]
    observed = sum(rk for rk, x in zip(r, d) if x > 0)
    lower = upper = 0
    for signs in itertools.product((0, 1), repeat=len(r)):
        s = sum(rk for rk, sg in zip(r, signs) if sg)
        lower += s <= observed
        upper += s >= observed
    return min(1.0, 2 * min(lower, upper) / 2 ** len(r))


def central_difference(f, x, h=1e-5):
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (f(xp) - f(xm)) / (2 * h)
    return grad


def relative_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)
