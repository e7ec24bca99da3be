"""Hot numeric loops, in numba and pure-numpy variants.

Every public function dispatches on :func:`coldstart.backend.active_backend`.
Both variants implement the same arithmetic; the numpy path exists as a
dependency-free fallback and as a cross-check for the compiled one.

Array conventions: node rating data is passed as a CSR triple over the node's
users (``indptr``, ``cols``, ``vals``) plus the matching CSC triple
(``c_indptr``, ``c_rows``, ``c_vals``) and a ``rows`` array giving the user
row of each CSR entry. Item/user indices are local positions, not raw ids.
"""

import numpy as np

from .backend import HAVE_NUMBA, active_backend

if HAVE_NUMBA:
    from numba import njit
else:  # pragma: no cover - exercised only when numba is absent
    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


# ---------------------------------------------------------------------------
# three-way split error
#
# For a candidate item j, node users are split into raters with value >=
# threshold, raters below it, and non-raters. The returned error is the sum
# over branches and items of the within-branch squared deviation from the
# branch item mean, computed via sum / sum-of-squares statistics:
#   sum_i (ssq - sum^2 / count).
# Non-rater branch statistics are obtained by subtracting both rater branches
# from the node totals, so each candidate costs O(ratings of j's raters).


@njit(cache=True)
def _split_errors_nb(indptr, cols, vals, c_indptr, c_rows, c_vals, cands, n_items, thr):
    cnt_t = np.zeros(n_items, np.int64)
    sum_t = np.zeros(n_items, np.float64)
    ssq_t = np.zeros(n_items, np.float64)
    for p in range(cols.shape[0]):
        i = cols[p]
        v = vals[p]
        cnt_t[i] += 1
        sum_t[i] += v
        ssq_t[i] += v * v
    term_t = np.zeros(n_items, np.float64)
    node_err = 0.0
    for i in range(n_items):
        if cnt_t[i] > 0:
            t = ssq_t[i] - sum_t[i] * sum_t[i] / cnt_t[i]
            if t < 0.0:
                t = 0.0
            term_t[i] = t
            node_err += t

    out = np.empty(cands.shape[0], np.float64)
    cnt_b = np.zeros((2, n_items), np.int64)
    sum_b = np.zeros((2, n_items), np.float64)
    ssq_b = np.zeros((2, n_items), np.float64)
    touched = np.empty(n_items, np.int64)
    for ci in range(cands.shape[0]):
        j = cands[ci]
        n_touched = 0
        for p in range(c_indptr[j], c_indptr[j + 1]):
            u = c_rows[p]
            b = 0 if c_vals[p] >= thr else 1
            for q in range(indptr[u], indptr[u + 1]):
                i = cols[q]
                v = vals[q]
                if cnt_b[0, i] == 0 and cnt_b[1, i] == 0:
                    touched[n_touched] = i
                    n_touched += 1
                cnt_b[b, i] += 1
                sum_b[b, i] += v
                ssq_b[b, i] += v * v
        e = node_err
        for k in range(n_touched):
            i = touched[k]
            corr = -term_t[i]
            cu = cnt_t[i]
            su = sum_t[i]
            qu = ssq_t[i]
            for b in range(2):
                c = cnt_b[b, i]
                if c > 0:
                    s = sum_b[b, i]
                    q2 = ssq_b[b, i]
                    t = q2 - s * s / c
                    if t < 0.0:
                        t = 0.0
                    corr += t
                    cu -= c
                    su -= s
                    qu -= q2
                cnt_b[b, i] = 0
                sum_b[b, i] = 0.0
                ssq_b[b, i] = 0.0
            if cu > 0:
                t = qu - su * su / cu
                if t < 0.0:
                    t = 0.0
                corr += t
            e += corr
        out[ci] = e
    return out


def _split_errors_np(indptr, rows, cols, vals, c_indptr, c_rows, c_vals, cands, n_items, thr):
    n_users = indptr.shape[0] - 1
    vsq = vals * vals
    branch = np.full(n_users, 2, np.int64)
    out = np.empty(len(cands), np.float64)
    for ci, j in enumerate(cands):
        lo, hi = c_indptr[j], c_indptr[j + 1]
        raters = c_rows[lo:hi]
        branch[raters] = np.where(c_vals[lo:hi] >= thr, 0, 1)
        key = branch[rows] * n_items + cols
        cnt = np.bincount(key, minlength=3 * n_items)
        s = np.bincount(key, weights=vals, minlength=3 * n_items)
        q = np.bincount(key, weights=vsq, minlength=3 * n_items)
        nz = cnt > 0
        terms = q[nz] - s[nz] * s[nz] / cnt[nz]
        out[ci] = np.maximum(terms, 0.0).sum()
        branch[raters] = 2
    return out


def split_errors(indptr, rows, cols, vals, c_indptr, c_rows, c_vals, cands, n_items, thr):
    """Three-way split error of every candidate item, as one array."""
    if active_backend() == "numba":
        return _split_errors_nb(
            indptr, cols, vals, c_indptr, c_rows, c_vals, cands, np.int64(n_items), thr
        )
    return _split_errors_np(
        indptr, rows, cols, vals, c_indptr, c_rows, c_vals, cands, n_items, thr
    )


# ---------------------------------------------------------------------------
# squared error of an arbitrary 3-way user partition


@njit(cache=True)
def _partition_error_nb(rows, cols, vals, branch, n_items):
    cnt = np.zeros((3, n_items), np.int64)
    s = np.zeros((3, n_items), np.float64)
    q = np.zeros((3, n_items), np.float64)
    for p in range(rows.shape[0]):
        b = branch[rows[p]]
        i = cols[p]
        v = vals[p]
        cnt[b, i] += 1
        s[b, i] += v
        q[b, i] += v * v
    e = 0.0
    for b in range(3):
        for i in range(n_items):
            c = cnt[b, i]
            if c > 0:
                t = q[b, i] - s[b, i] * s[b, i] / c
                if t < 0.0:
                    t = 0.0
                e += t
    return e


def _partition_error_np(rows, cols, vals, branch, n_items):
    key = branch[rows] * n_items + cols
    cnt = np.bincount(key, minlength=3 * n_items)
    s = np.bincount(key, weights=vals, minlength=3 * n_items)
    q = np.bincount(key, weights=vals * vals, minlength=3 * n_items)
    nz = cnt > 0
    terms = q[nz] - s[nz] * s[nz] / cnt[nz]
    return float(np.maximum(terms, 0.0).sum())


def partition_error(rows, cols, vals, branch, n_items):
    """Total within-branch squared error for a given 3-way branch assignment."""
    if active_backend() == "numba":
        return float(_partition_error_nb(rows, cols, vals, branch, np.int64(n_items)))
    return _partition_error_np(rows, cols, vals, branch, n_items)


# ---------------------------------------------------------------------------
# one SGD epoch of biased matrix factorization
#
# In-place update of factors/biases, visiting ratings in the given order.
# Both variants apply identical update equations in identical order so a run
# is reproducible under either backend.


@njit(cache=True)
def _sgd_epoch_nb(u_idx, i_idx, r, order, pu, qi, bu, bi, mu, lr, reg):
    f = pu.shape[1]
    for k in range(order.shape[0]):
        t = order[k]
        u = u_idx[t]
        i = i_idx[t]
        dot = 0.0
        for d in range(f):
            dot += pu[u, d] * qi[i, d]
        e = r[t] - (mu + bu[u] + bi[i] + dot)
        bu[u] += lr * (e - reg * bu[u])
        bi[i] += lr * (e - reg * bi[i])
        for d in range(f):
            pud = pu[u, d]
            pu[u, d] = pud + lr * (e * qi[i, d] - reg * pud)
            qi[i, d] = qi[i, d] + lr * (e * pud - reg * qi[i, d])


def _sgd_epoch_np(u_idx, i_idx, r, order, pu, qi, bu, bi, mu, lr, reg):
    for t in order:
        u = u_idx[t]
        i = i_idx[t]
        dot = 0.0
        for d in range(pu.shape[1]):
            dot += pu[u, d] * qi[i, d]
        e = r[t] - (mu + bu[u] + bi[i] + dot)
        bu[u] += lr * (e - reg * bu[u])
        bi[i] += lr * (e - reg * bi[i])
        for d in range(pu.shape[1]):
            pud = pu[u, d]
            pu[u, d] = pud + lr * (e * qi[i, d] - reg * pud)
            qi[i, d] = qi[i, d] + lr * (e * pud - reg * qi[i, d])


def sgd_epoch(u_idx, i_idx, r, order, pu, qi, bu, bi, mu, lr, reg):
    """Run one epoch of SGD over the ratings, updating parameters in place."""
    if active_backend() == "numba":
        _sgd_epoch_nb(u_idx, i_idx, r, order, pu, qi, bu, bi, mu, lr, reg)
    else:
        _sgd_epoch_np(u_idx, i_idx, r, order, pu, qi, bu, bi, mu, lr, reg)


def warm_up():
    """Trigger JIT compilation of all kernels on tiny inputs."""
    indptr = np.array([0, 1, 2], np.int64)
    rows = np.array([0, 1], np.int64)
    cols = np.array([0, 0], np.int64)
    vals = np.array([1.0, 2.0])
    split_errors(indptr, rows, cols, vals, indptr, rows, vals, np.array([0], np.int64), 1, 1.5)
    partition_error(rows, cols, vals, np.array([0, 1], np.int64), 1)
    sgd_epoch(
        rows,
        cols,
        vals,
        np.array([0, 1], np.int64),
        np.zeros((2, 2)),
        np.zeros((1, 2)),
        np.zeros(2),
        np.zeros(1),
        1.5,
        0.01,
        0.0,
    )
