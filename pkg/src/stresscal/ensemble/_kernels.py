"""Compiled tree-growing and tree-traversal kernels.

Randomness comes from a SplitMix64 stream whose 64-bit key is derived per
tree, so a tree depends only on (data, hyperparameters, key) and never on
which thread grows it.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def _next_u64(state):
    state[0] = state[0] + _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def _uniform(state):
    return float(_next_u64(state) >> _S11) * _TWO53


@njit(cache=True, nogil=True)
def _randbelow(state, n):
    k = int(_uniform(state) * n)
    return k if k < n else n - 1


@njit(cache=True, nogil=True)
def uniform_stream(key, n):
    """First ``n`` uniforms of the stream for ``key`` (used by tests)."""
    state = np.empty(1, dtype=np.uint64)
    state[0] = key
    out = np.empty(n)
    for i in range(n):
        out[i] = _uniform(state)
    return out


@njit(cache=True, nogil=True)
def _node_stats(y, idx, start, end, n_classes, counts):
    """Return (value, weighted impurity n*G, is_pure)."""
    m = end - start
    if n_classes > 0:
        counts[:] = 0
        for i in range(start, end):
            counts[int(y[idx[i]])] += 1
        best = 0
        sq = 0.0
        nonzero = 0
        for c in range(n_classes):
            if counts[c] > counts[best]:
                best = c
            sq += counts[c] * counts[c]
            if counts[c] > 0:
                nonzero += 1
        return float(best), m - sq / m, nonzero <= 1
    mean = 0.0
    lo = y[idx[start]]
    hi = lo
    for i in range(start, end):
        v = y[idx[i]]
        mean += v
        if v < lo:
            lo = v
        if v > hi:
            hi = v
    mean /= m
    if mean < lo:
        mean = lo
    if mean > hi:
        mean = hi
    sse = 0.0
    for i in range(start, end):
        d = y[idx[i]] - mean
        sse += d * d
    return mean, sse, lo == hi


@njit(cache=True, nogil=True)
def _best_threshold_presorted(X, y, f, order, node_w, n_classes, node_mean, cl, cr, total_counts, m):
    """Exhaustive midpoint search on feature ``f``.

    ``order`` is the global ascending order of column ``f``; ``node_w``
    holds each row's multiplicity in the current node (0 for absent rows).
    Returns (weighted children impurity, threshold, ok).
    """
    best = np.inf
    best_t = 0.0
    found = False
    have_prev = False
    prev = 0.0
    nl = 0
    if n_classes > 0:
        cl[:] = 0
        sql = 0.0
        sqr = 0.0
        for c in range(n_classes):
            cr[c] = total_counts[c]
            sqr += total_counts[c] * total_counts[c]
        for r in order:
            w = node_w[r]
            if w == 0:
                continue
            v = X[r, f]
            if have_prev and v > prev:
                nr = m - nl
                imp = (nl - sql / nl) + (nr - sqr / nr)
                if imp < best:
                    best = imp
                    t = 0.5 * (prev + v)
                    best_t = t if t < v else prev
                    found = True
            c = int(y[r])
            sql += (2.0 * cl[c] + w) * w
            cl[c] += w
            sqr -= (2.0 * cr[c] - w) * w
            cr[c] -= w
            nl += w
            prev = v
            have_prev = True
    else:
        tot = 0.0
        totsq = 0.0
        for r in order:
            w = node_w[r]
            if w == 0:
                continue
            d = y[r] - node_mean
            tot += w * d
            totsq += w * d * d
        sl = 0.0
        ql = 0.0
        for r in order:
            w = node_w[r]
            if w == 0:
                continue
            v = X[r, f]
            if have_prev and v > prev:
                nr = m - nl
                sr = tot - sl
                qr = totsq - ql
                imp = (ql - sl * sl / nl) + (qr - sr * sr / nr)
                if imp < best:
                    best = imp
                    t = 0.5 * (prev + v)
                    best_t = t if t < v else prev
                    found = True
            d = y[r] - node_mean
            sl += w * d
            ql += w * d * d
            nl += w
            prev = v
            have_prev = True
    return best, best_t, found


@njit(cache=True, nogil=True)
def _random_threshold(vals, ys, lo, hi, state, n_classes, node_mean, cl, cr):
    """One uniform threshold in [lo, hi); returns (children impurity, threshold)."""
    t = lo + _uniform(state) * (hi - lo)
    if not (t >= lo and t < hi):
        t = 0.5 * (lo + hi)
        if t >= hi:
            t = lo
    m = vals.size
    if n_classes > 0:
        cl[:] = 0
        cr[:] = 0
        nl = 0
        for i in range(m):
            c = int(ys[i])
            if vals[i] <= t:
                cl[c] += 1
                nl += 1
            else:
                cr[c] += 1
        nr = m - nl
        sql = 0.0
        sqr = 0.0
        for c in range(n_classes):
            sql += cl[c] * cl[c]
            sqr += cr[c] * cr[c]
        return (nl - sql / nl) + (nr - sqr / nr), t
    sl = 0.0
    ql = 0.0
    sr = 0.0
    qr = 0.0
    nl = 0
    for i in range(m):
        d = ys[i] - node_mean
        if vals[i] <= t:
            sl += d
            ql += d * d
            nl += 1
        else:
            sr += d
            qr += d * d
    nr = m - nl
    return (ql - sl * sl / nl) + (qr - sr * sr / nr), t


@njit(cache=True, nogil=True)
def grow_tree(X, y, n_classes, max_depth, max_features, extra, bootstrap, key, sample_idx, presorted):
    """Grow one CART tree.

    ``n_classes`` > 0 selects Gini classification on integer-coded ``y``;
    0 selects variance regression. ``sample_idx`` (if non-empty) overrides
    the row sample; otherwise rows are bootstrapped when ``bootstrap`` is
    set, else all rows are used. ``presorted`` holds the ascending row
    order of every column (needed unless ``extra``).

    Returns ``(feature, threshold, left, right, value, n_node, importance)``
    where ``importance[f]`` sums the node-fraction-weighted impurity
    decreases of splits on ``f``.
    """
    n_rows, p = X.shape
    state = np.empty(1, dtype=np.uint64)
    state[0] = key

    if sample_idx.size > 0:
        idx = sample_idx.copy()
    elif bootstrap:
        idx = np.empty(n_rows, dtype=np.int64)
        for i in range(n_rows):
            idx[i] = _randbelow(state, n_rows)
    else:
        idx = np.arange(n_rows)
    n = idx.size

    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    n_node = np.zeros(cap, dtype=np.int64)
    importance = np.zeros(p)

    k = max(n_classes, 1)
    counts = np.zeros(k, dtype=np.int64)
    cl = np.zeros(k, dtype=np.int64)
    cr = np.zeros(k, dtype=np.int64)
    perm = np.arange(p)
    vals = np.empty(n)
    ys = np.empty(n)
    node_w = np.zeros(n_rows, dtype=np.int64)

    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 0
    top = 1
    node_count = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        m = end - start
        val, imp_node, pure = _node_stats(y, idx, start, end, n_classes, counts)
        value[node] = val
        n_node[node] = m
        if depth >= max_depth or m < 2 or pure:
            continue

        total_counts = counts.copy()
        if extra:
            for i in range(m):
                ys[i] = y[idx[start + i]]
        else:
            for i in range(start, end):
                node_w[idx[i]] += 1
        best_imp = np.inf
        best_f = -1
        best_t = 0.0
        visited = 0
        for j in range(p):
            if visited >= max_features:
                break
            r = j + _randbelow(state, p - j)
            tmp = perm[j]
            perm[j] = perm[r]
            perm[r] = tmp
            f = perm[j]
            lo = np.inf
            hi = -np.inf
            for i in range(m):
                v = X[idx[start + i], f]
                vals[i] = v
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if not lo < hi:
                continue
            visited += 1
            if extra:
                imp, t = _random_threshold(vals[:m], ys[:m], lo, hi, state, n_classes, val, cl, cr)
                ok = True
            else:
                imp, t, ok = _best_threshold_presorted(
                    X, y, f, presorted[:, f], node_w, n_classes, val, cl, cr, total_counts, m
                )
            if ok and imp < best_imp:
                best_imp = imp
                best_f = f
                best_t = t

        if not extra:
            for i in range(start, end):
                node_w[idx[i]] = 0
        if best_f < 0:
            continue

        # partition rows: x <= t to the left
        i = start
        jj = end - 1
        while i <= jj:
            if X[idx[i], best_f] <= best_t:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[jj]
                idx[jj] = tmp
                jj -= 1
        mid = i

        decrease = imp_node - best_imp
        if decrease < 0.0:
            decrease = 0.0
        importance[best_f] += decrease / n
        feature[node] = best_f
        threshold[node] = best_t
        lnode = node_count
        rnode = node_count + 1
        node_count += 2
        left[node] = lnode
        right[node] = rnode
        # right pushed first so the left subtree is grown first
        st_node[top] = rnode
        st_start[top] = mid
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lnode
        st_start[top] = start
        st_end[top] = mid
        st_depth[top] = depth + 1
        top += 1

    return (
        feature[:node_count].copy(),
        threshold[:node_count].copy(),
        left[:node_count].copy(),
        right[:node_count].copy(),
        value[:node_count].copy(),
        n_node[:node_count].copy(),
        importance,
    )


@njit(cache=True, nogil=True)
def leaf_values(X, offsets, feature, threshold, left, right, value, out):
    """``out[t, i]`` = leaf value of tree ``t`` for row ``i``."""
    n_trees = offsets.size - 1
    for i in range(X.shape[0]):
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0:
                if X[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            out[t, i] = value[base + node]


@njit(cache=True, nogil=True)
def aggregate_predictions(X, offsets, feature, threshold, left, right, value, n_classes, out):
    """Majority vote (ties -> lowest class code) or tree-order mean of leaf values."""
    n_trees = offsets.size - 1
    votes = np.zeros(max(n_classes, 1), dtype=np.int64)
    for i in range(X.shape[0]):
        votes[:] = 0
        acc = 0.0
        for t in range(n_trees):
            base = offsets[t]
            node = 0
            while feature[base + node] >= 0:
                if X[i, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            v = value[base + node]
            if n_classes > 0:
                votes[int(v)] += 1
            else:
                acc += v
        if n_classes > 0:
            best = 0
            for c in range(n_classes):
                if votes[c] > votes[best]:
                    best = c
            out[i] = best
        else:
            out[i] = acc / n_trees
