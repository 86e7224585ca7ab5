"""Straight-line reference implementations used as test oracles.

They share no code with the package: plain loops, math module, explicit
formulas. Bin-ordering conventions are re-derived here from their
definitions, so agreement checks the vectorised code paths.
"""

import functools
import math
from fractions import Fraction

import numpy as np


# --- grids / patches -------------------------------------------------------

def clipped_patch(x, y, s, w, h):
    x0 = x - s // 2
    y0 = y - s // 2
    return max(x0, 0), min(x0 + s, w), max(y0, 0), min(y0 + s, h)


def grid_oracle(mask, step, scales, threshold):
    h, w = mask.shape
    out = []
    for y in range(0, h, step):
        for x in range(0, w, step):
            for si, s in enumerate(scales):
                x0, x1, y0, y1 = clipped_patch(x, y, s, w, h)
                area = (x1 - x0) * (y1 - y0)
                fg = 0
                for yy in range(y0, y1):
                    for xx in range(x0, x1):
                        fg += bool(mask[yy, xx])
                if area > 0 and Fraction(fg) >= Fraction(threshold) * area:
                    out.append((x, y, si))
    return out


def patch_mean_oracle(rgb, x, y, s):
    h, w = rgb.shape[:2]
    x0, x1, y0, y1 = clipped_patch(x, y, s, w, h)
    acc = [0, 0, 0]
    n = 0
    for yy in range(y0, y1):
        for xx in range(x0, x1):
            for c in range(3):
                acc[c] += int(rgb[yy, xx, c])
            n += 1
    return [a / n for a in acc]


# --- LBP -------------------------------------------------------------------

def transitions(code, P):
    bits = [(code >> k) & 1 for k in range(P)]
    return sum(bits[k] != bits[(k + 1) % P] for k in range(P))


@functools.lru_cache(maxsize=None)
def mapping_oracle(P, kind):
    """code -> bin list and bin count, by direct enumeration."""
    n = 1 << P
    if kind == "u2":
        uniform = [c for c in range(n) if transitions(c, P) <= 2]
        index = {c: i for i, c in enumerate(uniform)}
        return [index.get(c, len(uniform)) for c in range(n)], len(uniform) + 1
    if kind == "riu2":
        table = [bin(c).count("1") if transitions(c, P) <= 2 else P + 1 for c in range(n)]
        return table, P + 2
    mask = n - 1
    mins = []
    for c in range(n):
        best = c
        r = c
        for _ in range(P):
            r = ((r >> 1) | ((r & 1) << (P - 1))) & mask
            best = min(best, r)
        mins.append(best)
    reps = sorted(set(mins))
    index = {r: i for i, r in enumerate(reps)}
    return [index[m] for m in mins], len(reps)


def necklaces(P):
    """Burnside: number of binary necklaces of length P."""
    return sum(_phi(d) * 2 ** (P // d) for d in range(1, P + 1) if P % d == 0) // P


def _phi(n):
    return sum(1 for k in range(1, n + 1) if math.gcd(k, n) == 1)


def _bilinear(img, x, y):
    x0 = math.floor(x)
    y0 = math.floor(y)
    fx = x - x0
    fy = y - y0
    if fx == 0 and fy == 0:
        return img[y0][x0]
    v = 0.0
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            if wx * wy:
                v += wx * wy * img[y0 + dy][x0 + dx]
    return v


def lbp_code_oracle(img, x, y, P, R):
    centre = img[y][x]
    code = 0
    for k in range(P):
        a = 2 * math.pi * k / P
        sx = x + R * math.cos(a)
        sy = y - R * math.sin(a)
        # axis-aligned samples sit on pixel centres
        if abs(sx - round(sx)) < 1e-9:
            sx = round(sx)
        if abs(sy - round(sy)) < 1e-9:
            sy = round(sy)
        if _bilinear(img, sx, sy) >= centre:
            code += 2 ** k
    return code


def code_map_oracle(img, P, R):
    h, w = len(img), len(img[0])
    return {(x, y): lbp_code_oracle(img, x, y, P, R)
            for y in range(R, h - R) for x in range(R, w - R)}


def lbp_hist_oracle(img, mask, P, R, kind, codes=None):
    table, bins = mapping_oracle(P, kind)
    counts = [0] * bins
    if codes is None:
        codes = code_map_oracle(img, P, R)
    for (x, y), code in codes.items():
        if mask[y][x]:
            counts[table[code]] += 1
    total = sum(counts)
    return np.array(counts, dtype=float) / total if total else np.zeros(bins)


def prico_oracle(img, mask, offsets=(2, 4), codes=None):
    h, w = len(img), len(img[0])
    if codes is None:
        codes = code_map_oracle(img, 8, 1)
    u2, _ = mapping_oracle(8, "u2")
    riu2, _ = mapping_oracle(8, "riu2")
    hists = []
    for d in offsets:
        counts = [0] * 590
        for (x, y), code in codes.items():
            if not mask[y][x]:
                continue
            gx = (img[y][x + 1] - img[y][x - 1]) / 2 if 0 < x < w - 1 else 0.0
            gy = (img[y + 1][x] - img[y - 1][x]) / 2 if 0 < y < h - 1 else 0.0
            theta = math.atan2(gy, gx) if math.hypot(gx, gy) >= 1e-6 else 0.0
            q = (x + round(d * math.cos(theta)), y + round(d * math.sin(theta)))
            if q in codes:
                counts[u2[codes[q]] * 10 + riu2[code]] += 1
        total = sum(counts)
        hists.append(np.array(counts, dtype=float) / total if total else np.zeros(590))
    return np.concatenate(hists)


# --- SIFT ------------------------------------------------------------------

def sift_oracle(img, cx, cy, s):
    """Scalar pooling: per pixel, trilinear votes times the Gaussian window."""
    img = np.asarray(img, dtype=float)
    h, w = img.shape
    hist = [[[0.0] * 8 for _ in range(4)] for _ in range(4)]
    width = s / 4
    sigma = s / 2
    top, left = cy - s // 2, cx - s // 2
    for v in range(s):
        for u in range(s):
            x, y = left + u, top + v
            if not (0 <= x < w and 0 <= y < h):
                continue
            gx = (img[y, x + 1] - img[y, x - 1]) / 2 if 0 < x < w - 1 else 0.0
            gy = (img[y + 1, x] - img[y - 1, x]) / 2 if 0 < y < h - 1 else 0.0
            mag = math.sqrt(gx * gx + gy * gy)
            if mag == 0:
                continue
            ang = math.atan2(gy, gx) % (2 * math.pi)
            o = ang / (math.pi / 4)
            o0 = math.floor(o)
            fo = o - o0
            c = (s - 1) / 2
            g = math.exp(-((u - c) ** 2 + (v - c) ** 2) / (2 * sigma * sigma))
            bu = (u + 0.5) / width - 0.5
            bv = (v + 0.5) / width - 0.5
            for j in range(4):
                wy = max(0.0, 1 - abs(bv - j))
                for i in range(4):
                    wx = max(0.0, 1 - abs(bu - i))
                    if wx * wy == 0:
                        continue
                    hist[j][i][o0 % 8] += mag * g * wx * wy * (1 - fo)
                    hist[j][i][(o0 + 1) % 8] += mag * g * wx * wy * fo
    vec = np.array([hist[j][i][o] for j in range(4) for i in range(4) for o in range(8)])
    n = math.sqrt(sum(t * t for t in vec))
    if n == 0:
        return vec
    vec = np.minimum(vec / n, 0.2)
    return vec / math.sqrt(sum(t * t for t in vec))


# --- encoders --------------------------------------------------------------

def nearest_oracle(x, centers):
    best, best_d = 0, None
    for k, c in enumerate(centers):
        d = sum((float(a) - float(b)) ** 2 for a, b in zip(x, c))
        if best_d is None or d < best_d:
            best, best_d = k, d
    return best


def bow_oracle(X, centers):
    counts = [0] * len(centers)
    for x in X:
        counts[nearest_oracle(x, centers)] += 1
    return counts


def rcc_oracle(X, positions, centers, cell, radius):
    K = len(centers)
    words = [nearest_oracle(x, centers) for x in X]
    pairs = {}
    for a in range(len(X)):
        for b in range(a + 1, len(X)):
            pa, pb = positions[a], positions[b]
            same_cell = (pa[0] // cell == pb[0] // cell) and (pa[1] // cell == pb[1] // cell)
            close = (pa[0] - pb[0]) ** 2 + (pa[1] - pb[1]) ** 2 <= radius * radius
            if same_cell and close:
                key = (min(words[a], words[b]), max(words[a], words[b]))
                pairs[key] = pairs.get(key, 0) + 1
    unary = [words.count(k) for k in range(K)]
    flat = [pairs.get((i, j), 0) for i in range(K) for j in range(i, K)]
    return unary, flat


def naive_kmeans_best(X, K, restarts, seed=0, iters=100):
    """Best inertia over random-sample-initialised Lloyd runs."""
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(restarts):
        C = X[rng.choice(len(X), K, replace=False)].copy()
        prev = np.inf
        for _ in range(iters):
            d = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
            lab = d.argmin(axis=1)
            inertia = d[np.arange(len(X)), lab].sum()
            if prev - inertia <= 1e-12 * max(prev, 1):
                break
            prev = inertia
            for k in range(K):
                if np.any(lab == k):
                    C[k] = X[lab == k].mean(axis=0)
        best = min(best, inertia)
    return best
