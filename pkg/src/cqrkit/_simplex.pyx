# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled check-loss simplex kernel.

Same algorithm, variable order and tie-breaking as ``_simplex_py``; see the
module docstring there for the LP layout.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY
from libc.stdint cimport int64_t
from libc.string cimport memcpy

cnp.import_array()

cdef double TIE_TOL = 1e-11

cdef enum:
    OPTIMAL = 0
    UNBOUNDED = 1
    ITERATION_LIMIT = 2
    SINGULAR = 3


cdef inline double _coarsen(double t) noexcept nogil:
    """Drop the low 16 mantissa bits of nonnegative ``t`` (ordering key only)."""
    cdef int64_t bits
    memcpy(&bits, &t, 8)
    bits = bits & ~(<int64_t>0xFFFF)
    memcpy(&t, &bits, 8)
    return t


cdef inline bint _before(double ta, Py_ssize_t va, double tb, Py_ssize_t vb) noexcept nogil:
    return ta < tb or (ta == tb and va < vb)


cdef void _sift_down(double* t, Py_ssize_t* var, Py_ssize_t* slot, Py_ssize_t n, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t child, best, tmp
    while True:
        child = 2 * i + 1
        if child >= n:
            return
        best = child
        if child + 1 < n and _before(t[slot[child + 1]], var[slot[child + 1]], t[slot[child]], var[slot[child]]):
            best = child + 1
        if _before(t[slot[best]], var[slot[best]], t[slot[i]], var[slot[i]]):
            tmp = slot[i]
            slot[i] = slot[best]
            slot[best] = tmp
            i = best
        else:
            return


cdef bint _invert(double* a, double* inv, Py_ssize_t s) noexcept nogil:
    """Gauss-Jordan with partial pivoting; ``a`` is destroyed."""
    cdef Py_ssize_t i, j, k, piv
    cdef double big, f, tmp, scale = 0.0
    for i in range(s * s):
        if fabs(a[i]) > scale:
            scale = fabs(a[i])
        inv[i] = 0.0
    for i in range(s):
        inv[i * s + i] = 1.0
    for k in range(s):
        piv = k
        big = fabs(a[k * s + k])
        for i in range(k + 1, s):
            if fabs(a[i * s + k]) > big:
                big = fabs(a[i * s + k])
                piv = i
        if big == 0.0 or big <= 1e-14 * scale:
            return False
        if piv != k:
            for j in range(s):
                tmp = a[k * s + j]; a[k * s + j] = a[piv * s + j]; a[piv * s + j] = tmp
                tmp = inv[k * s + j]; inv[k * s + j] = inv[piv * s + j]; inv[piv * s + j] = tmp
        f = 1.0 / a[k * s + k]
        for j in range(s):
            a[k * s + j] *= f
            inv[k * s + j] *= f
        for i in range(s):
            if i != k:
                f = a[i * s + k]
                if f != 0.0:
                    for j in range(s):
                        a[i * s + j] -= f * a[k * s + j]
                        inv[i * s + j] -= f * inv[k * s + j]
    return True


cdef inline double _dval(const double[:, ::1] X, Py_ssize_t n, Py_ssize_t K,
                         Py_ssize_t r, Py_ssize_t c) noexcept nogil:
    if c < K:
        return 1.0 if r // n == c else 0.0
    return X[r % n, c - K]


cdef inline double _reduced_cost(Py_ssize_t k, Py_ssize_t s, Py_ssize_t P, Py_ssize_t m, Py_ssize_t n,
                                 Py_ssize_t* rows, char* is_basic, const double[::1] tk, double[::1] pi,
                                 const double[::1] pv, double[::1] g, Py_ssize_t* var) noexcept nogil:
    """Reduced cost of pricing candidate ``k``; +inf for basic parameters."""
    cdef Py_ssize_t a, j
    if k < s:
        var[0] = rows[k]
        return tk[rows[k] // n] - pi[rows[k]]
    if k < 2 * s:
        a = k - s
        var[0] = m + rows[a]
        return (1.0 - tk[rows[a] // n]) + pi[rows[a]]
    if k < 2 * s + P:
        j = k - 2 * s
        var[0] = 2 * m + j
        return INFINITY if is_basic[j] else pv[j] - g[j]
    j = k - 2 * s - P
    var[0] = 2 * m + P + j
    return INFINITY if is_basic[j] else pv[j] + g[j]


def check_loss_simplex(X, y, taus, pen, Py_ssize_t max_iter=100000, bint bland=False,
                       double tol_opt=1e-9, double tol_piv=1e-10):
    """Solve the composite check-loss LP; see ``_simplex_py.check_loss_simplex``."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] tk = np.ascontiguousarray(taus, dtype=np.float64)
    cdef const double[::1] pv = np.ascontiguousarray(pen, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], p = Xv.shape[1], K = tk.shape[0]
    cdef Py_ssize_t P = K + p, m = n * K
    if yv.shape[0] != n or pv.shape[0] != P:
        raise ValueError("dimension mismatch")

    theta_a = np.zeros(P)
    e_a = np.zeros(m)
    pi_a = np.zeros(m)
    cdef double[::1] theta = theta_a, e = e_a, pi = pi_a
    cdef double[::1] sigma = np.empty(m)
    cdef double[::1] g = np.zeros(P), d = np.zeros(m), step = np.zeros(P)
    cdef double[::1] fit = np.zeros(n), pisum = np.zeros(n)
    cdef double[::1] bp_t = np.zeros(m + P), bp_key = np.zeros(m + P), bp_inc = np.zeros(m + P)
    cdef Py_ssize_t[::1] bp_var = np.zeros(m + P, dtype=np.intp)
    cdef Py_ssize_t[::1] bp_ref = np.zeros(m + P, dtype=np.intp)
    cdef Py_ssize_t[::1] heap = np.zeros(m + P, dtype=np.intp)
    cdef char[::1] in_I = np.zeros(m, dtype=np.int8)
    cdef char[::1] is_basic = np.zeros(P, dtype=np.int8)
    cdef Py_ssize_t[::1] rows = np.zeros(P + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] cols = np.zeros(P + 1, dtype=np.intp)
    cdef double[::1] signs = np.zeros(P + 1)
    cdef double[::1] zbuf = np.zeros((P + 1) * (P + 1)), zinv = np.zeros((P + 1) * (P + 1))
    cdef double[::1] th_s = np.zeros(P + 1), d_s = np.zeros(P + 1), rhs = np.zeros(P + 1)

    cdef Py_ssize_t s = 0, it = 0, status = ITERATION_LIMIT
    cdef Py_ssize_t r, i, j, a, b, k, q_var, q_kind, q_idx, nb, L, ref, pos, o
    cdef double acc, q_rc, rcv, sg, slope, val, tau_r, cut
    cdef bint use_bland = bland, found, enter_slack

    cdef double zero_tol = 0.0
    for i in range(n):
        if fabs(yv[i]) > zero_tol:
            zero_tol = fabs(yv[i])
    # residuals this small count as exact zeros in the ratio test
    zero_tol = 1e-12 * (1.0 + zero_tol)
    for k in range(K):
        for i in range(n):
            sigma[k * n + i] = 1.0 if yv[i] >= 0.0 else -1.0

    with nogil:
        while True:
            # basic solution ------------------------------------------
            for j in range(P):
                theta[j] = 0.0
            if s > 0:
                for a in range(s):
                    for b in range(s):
                        zbuf[a * s + b] = signs[b] * _dval(Xv, n, K, rows[a], cols[b])
                if not _invert(&zbuf[0], &zinv[0], s):
                    status = SINGULAR
                    break
                for a in range(s):
                    acc = 0.0
                    for b in range(s):
                        acc = acc + zinv[a * s + b] * yv[rows[b] % n]
                    th_s[a] = acc
                    theta[cols[a]] = signs[a] * acc
            for i in range(n):
                acc = 0.0
                for j in range(p):
                    acc = acc + Xv[i, j] * theta[K + j]
                fit[i] = acc
            for k in range(K):
                for i in range(n):
                    e[k * n + i] = yv[i] - theta[k] - fit[i]

            # duals ---------------------------------------------------
            for i in range(n):
                pisum[i] = 0.0
            for k in range(K):
                acc = 0.0
                tau_r = tk[k]
                for i in range(n):
                    r = k * n + i
                    if in_I[r]:
                        pi[r] = 0.0
                    else:
                        val = tau_r if sigma[r] > 0.0 else tau_r - 1.0
                        pi[r] = val
                        acc = acc + val
                        pisum[i] = pisum[i] + val
                g[k] = acc
            for j in range(p):
                acc = 0.0
                for i in range(n):
                    acc = acc + Xv[i, j] * pisum[i]
                g[K + j] = acc
            if s > 0:
                for b in range(s):
                    rhs[b] = pv[cols[b]] - signs[b] * g[cols[b]]
                for a in range(s):
                    acc = 0.0
                    for b in range(s):
                        acc = acc + zinv[b * s + a] * rhs[b]
                    pi[rows[a]] = acc
                for a in range(s):
                    val = pi[rows[a]]
                    r = rows[a]
                    g[r // n] = g[r // n] + val
                    for j in range(p):
                        g[K + j] = g[K + j] + val * Xv[r % n, j]

            # pricing -------------------------------------------------
            found = False
            q_rc = 0.0
            q_var = 0
            q_kind = 0
            # pass 1: best reduced cost (Dantzig) or smallest index (Bland)
            for k in range(2 * s + 2 * P):
                rcv = _reduced_cost(k, s, P, m, n, &rows[0], &is_basic[0], tk, pi, pv, g, &o)
                if rcv >= -tol_opt:
                    continue
                if not found or (use_bland and o < q_var) or (not use_bland and rcv < q_rc):
                    found = True
                    q_rc = rcv
                    q_var = o
                    q_kind = k
            if found and not use_bland:
                # pass 2: smallest index among near-ties of the best
                cut = q_rc + TIE_TOL * (1.0 - q_rc)
                for k in range(2 * s + 2 * P):
                    rcv = _reduced_cost(k, s, P, m, n, &rows[0], &is_basic[0], tk, pi, pv, g, &o)
                    if rcv >= -tol_opt or rcv > cut:
                        continue
                    if o < q_var:
                        q_var = o
                        q_kind = k
                        q_rc = rcv
            if not found:
                status = OPTIMAL
                break
            if it >= max_iter:
                status = ITERATION_LIMIT
                break
            it += 1

            # direction -----------------------------------------------
            enter_slack = q_kind < 2 * s
            if enter_slack:
                q_idx = q_kind % s
                sg = 1.0 if q_kind < s else -1.0
                for a in range(s):
                    d_s[a] = zinv[a * s + q_idx] * sg
            else:
                k = q_kind - 2 * s
                q_idx = k % P
                sg = 1.0 if k < P else -1.0
                for a in range(s):
                    acc = 0.0
                    for b in range(s):
                        acc = acc + zinv[a * s + b] * sg * _dval(Xv, n, K, rows[b], q_idx)
                    d_s[a] = acc
            for j in range(P):
                step[j] = 0.0
            for a in range(s):
                step[cols[a]] = signs[a] * d_s[a]
            for i in range(n):
                acc = 0.0
                for j in range(p):
                    acc = acc + Xv[i, j] * step[K + j]
                fit[i] = acc
            for k in range(K):
                for i in range(n):
                    r = k * n + i
                    if in_I[r]:
                        d[r] = 0.0
                    elif enter_slack:
                        d[r] = -sigma[r] * (step[k] + fit[i])
                    else:
                        d[r] = sigma[r] * (sg * _dval(Xv, n, K, r, q_idx) - (step[k] + fit[i]))

            # breakpoints ---------------------------------------------
            nb = 0
            for r in range(m):
                if d[r] > tol_piv:
                    val = sigma[r] * e[r]
                    if val <= zero_tol:
                        val = 0.0
                    bp_t[nb] = val / d[r]
                    bp_inc[nb] = d[r]
                    bp_var[nb] = r if sigma[r] > 0.0 else m + r
                    bp_ref[nb] = r
                    nb += 1
            for a in range(s):
                if d_s[a] > tol_piv:
                    val = th_s[a] if th_s[a] > zero_tol else 0.0
                    bp_t[nb] = val / d_s[a]
                    bp_inc[nb] = 2.0 * pv[cols[a]] * d_s[a]
                    bp_var[nb] = 2 * m + cols[a] if signs[a] > 0.0 else 2 * m + P + cols[a]
                    bp_ref[nb] = -1 - a
                    nb += 1
            for k in range(nb):
                heap[k] = k
                bp_key[k] = _coarsen(bp_t[k])
            k = nb // 2
            while k > 0:
                k -= 1
                _sift_down(&bp_key[0], &bp_var[0], &heap[0], nb, k)
            slope = q_rc
            L = -1
            if use_bland and nb > 0 and bp_t[heap[0]] <= 0.0:
                # degenerate Bland step: plain ratio test keeps anti-cycling
                L = heap[0]
                nb = 0
            while nb > 0:
                o = heap[0]
                slope = slope + bp_inc[o]
                if slope >= -tol_opt:
                    L = o
                    break
                ref = bp_ref[o]
                if ref >= 0:
                    sigma[ref] = -sigma[ref]
                else:
                    signs[-1 - ref] = -signs[-1 - ref]
                nb -= 1
                heap[0] = heap[nb]
                _sift_down(&bp_key[0], &bp_var[0], &heap[0], nb, 0)
            if L < 0:
                status = UNBOUNDED
                break
            ref = bp_ref[L]
            if not bland:
                use_bland = bp_t[L] <= 0.0

            # basis update --------------------------------------------
            if not enter_slack:
                if ref >= 0:
                    rows[s] = ref
                    cols[s] = q_idx
                    signs[s] = sg
                    in_I[ref] = 1
                    s += 1
                else:
                    pos = -1 - ref
                    is_basic[cols[pos]] = 0
                    cols[pos] = q_idx
                    signs[pos] = sg
                is_basic[q_idx] = 1
            else:
                r = rows[q_idx]
                sigma[r] = sg
                in_I[r] = 0
                if ref >= 0:
                    rows[q_idx] = ref
                    in_I[ref] = 1
                else:
                    pos = -1 - ref
                    is_basic[cols[pos]] = 0
                    # same list order as the Python reference (delete + shift)
                    for b in range(pos, s - 1):
                        cols[b] = cols[b + 1]
                        signs[b] = signs[b + 1]
                    for a in range(q_idx, s - 1):
                        rows[a] = rows[a + 1]
                    s -= 1

        for i in range(n):
            acc = 0.0
            for j in range(p):
                acc = acc + Xv[i, j] * theta[K + j]
            fit[i] = acc
        for k in range(K):
            for i in range(n):
                e[k * n + i] = yv[i] - theta[k] - fit[i]

    return (
        int(status),
        int(it),
        theta_a,
        e_a,
        pi_a,
        np.asarray(rows[:s]).copy(),
        np.asarray(cols[:s]).copy(),
        np.asarray(signs[:s]).copy(),
    )
