#!/usr/bin/env python3
"""Independent numpy oracles for the golden files under crates/core/tests/golden.

Instances are generated with SplitMix64 so the Rust tests can rebuild them
bit-for-bit. Run from the repository root.
"""
import json
import os

import numpy as np

OUT = os.path.join("crates", "core", "tests", "golden")
MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK64

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self):
        return (self.next_u64() >> 11) * 2.0**-53


def integer_ratings(n_rows, n_cols, absent, seed):
    """Ratings in 1..=5, each cell absent with probability `absent`."""
    rng = SplitMix64(seed)
    vals = np.zeros((n_rows, n_cols))
    mask = np.zeros((n_rows, n_cols), dtype=bool)
    for i in range(n_rows):
        for j in range(n_cols):
            r = 1 + min(int(rng.uniform() * 5), 4)
            if rng.uniform() >= absent:
                vals[i, j] = r
                mask[i, j] = True
    return vals, mask


def item_mean_fill(vals, mask):
    glob = vals[mask].mean()
    out = np.empty_like(vals)
    for j in range(vals.shape[1]):
        col = mask[:, j]
        out[:, j] = vals[col, j].mean() if col.any() else glob
    out[mask] = vals[mask]
    return out


def rank_k(a, k):
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return (u[:, :k] * s[:k]) @ vt[:k]


def svd_blackbox(dense, mask, k, refine_iters):
    pred = rank_k(dense, k)
    work = dense.copy()
    for _ in range(refine_iters):
        change = np.abs(pred - work)[~mask].max(initial=0.0)
        work[~mask] = pred[~mask]
        if change < 1e-6:
            break
        pred = rank_k(work, k)
    return pred


def refine_golden():
    vals, mask = integer_ratings(20, 20, 0.3, 2024)
    dense = item_mean_fill(vals, mask)
    single = svd_blackbox(dense, mask, 5, 0)
    refined = svd_blackbox(dense, mask, 5, 10)
    with open(os.path.join(OUT, "refine_20x20.csv"), "w") as f:
        f.write("row,col,single,refined\n")
        for i, j in zip(*np.nonzero(~mask)):
            f.write(f"{int(i)},{int(j)},{float(single[i, j])!r},{float(refined[i, j])!r}\n")


def plain_attack_golden():
    vals, mask = integer_ratings(30, 30, 0.4, 77)
    k, user, alpha = 3, 0, 2.0
    before = svd_blackbox(item_mean_fill(vals, mask), mask, k, 0)
    attacked = vals.copy()
    attacked[user][mask[user]] *= alpha
    after = svd_blackbox(item_mean_fill(attacked, mask), mask, k, 0)
    delta = np.abs(after - before)
    delta[user] = 0.0
    with open(os.path.join(OUT, "plain_attack_30x30.json"), "w") as f:
        json.dump({"seed": 77, "k": k, "user": user, "scale": alpha,
                   "max_abs_delta_others": float(delta.max())}, f, indent=2)
        f.write("\n")


def sc_2x3_golden():
    # observed (0,0)=1 (0,1)=3 (1,1)=2 (1,2)=4
    # unknowns u0 u1 v0 v1 v2; rows and columns of M + u + v sum to zero, sum(v) = 0
    obs = [(0, 0, 1.0), (0, 1, 3.0), (1, 1, 2.0), (1, 2, 4.0)]
    a, b = [], []
    for i in range(2):
        row = np.zeros(5)
        rhs = 0.0
        for (r, c, x) in obs:
            if r == i:
                row[i] += 1
                row[2 + c] += 1
                rhs -= x
        a.append(row)
        b.append(rhs)
    for j in range(3):
        row = np.zeros(5)
        rhs = 0.0
        for (r, c, x) in obs:
            if c == j:
                row[r] += 1
                row[2 + j] += 1
                rhs -= x
        a.append(row)
        b.append(rhs)
    a.append(np.array([0, 0, 1, 1, 1.0]))
    b.append(0.0)
    x, *_ = np.linalg.lstsq(np.array(a), np.array(b), rcond=None)
    u, v = x[:2], x[2:]
    canon = [[0.0] * 3 for _ in range(2)]
    for (r, c, val) in obs:
        canon[r][c] = val + u[r] + v[c]
    with open(os.path.join(OUT, "sc_2x3.json"), "w") as f:
        json.dump({"u": [float(t) for t in u], "v": [float(t) for t in v], "canonical": canon}, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    refine_golden()
    plain_attack_golden()
    sc_2x3_golden()
