"""Numpy implementation of the single-column split search.

Keep the arithmetic in lockstep with _split.pyx: identical expression
trees evaluated in float64, candidates scanned in the order given, and
the maximum taken with a strict comparison so ties resolve to the
earliest candidate. Any drift between the two breaks the bit-identical
model guarantee.
"""

import numpy as np


def best_split(X, y, idx, cols, min_samples_leaf):
    """Best binary split of the rows in idx over candidate columns.

    X is the dense one-hot matrix (uint8), y the binary labels. Rows
    with the column active go to the right child. Returns
    (position_in_cols, gain); position is -1 when no candidate leaves
    min_samples_leaf rows on both sides.
    """
    idx = np.asarray(idx, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    yi = y[idx].astype(np.int64)
    Xi = X[idx][:, cols].astype(np.int64)

    n = idx.shape[0]
    pos = int(yi.sum())
    fn = float(n)
    fp = float(pos)
    fq = fn - fp
    a = fp * fp
    b = fq * fq
    c = fn * fn
    gp = 1.0 - (a + b) / c

    n1 = Xi.sum(axis=0)
    p1 = yi @ Xi
    n0 = n - n1
    p0 = pos - p1
    valid = (n1 >= min_samples_leaf) & (n0 >= min_samples_leaf)

    fn1 = n1.astype(np.float64)
    fp1 = p1.astype(np.float64)
    fn0 = n0.astype(np.float64)
    fp0 = p0.astype(np.float64)
    fq1 = fn1 - fp1
    fq0 = fn0 - fp0
    with np.errstate(divide="ignore", invalid="ignore"):
        a1 = fp1 * fp1
        b1 = fq1 * fq1
        c1 = fn1 * fn1
        g1 = 1.0 - (a1 + b1) / c1
        a0 = fp0 * fp0
        b0 = fq0 * fq0
        c0 = fn0 * fn0
        g0 = 1.0 - (a0 + b0) / c0
        w = (fn0 * g0 + fn1 * g1) / fn
    gain = gp - w
    gain[~valid] = -np.inf

    if gain.size == 0 or not np.isfinite(gain.max()):
        return -1, 0.0
    best = int(np.argmax(gain))  # first occurrence wins, like strict > scan
    return best, float(gain[best])
