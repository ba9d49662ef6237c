"""Pure-Python (numpy) check-loss simplex kernel.

Reference implementation of the algorithm compiled in ``_simplex.pyx``;
used when the extension is unavailable or ``CQRKIT_PURE_PYTHON`` is set.

The LP solved is the composite check-loss problem

    min  sum_r tau_r u+_r + (1 - tau_r) u-_r + sum_j pen_j (t+_j + t-_j)
    s.t. b_k(r) + x_i(r) . beta + u+_r - u-_r = y_i(r)      for r = k n + i
         t = (b_1..b_K, beta_1..beta_p) = t+ - t-,  all variables >= 0

with variable order ``u+ (m) | u- (m) | t+ (P) | t- (P)``, ``m = nK`` and
``P = K + p``. The basis is held implicitly: each row outside the
interpolation set ``I`` keeps exactly one basic slack (sign ``sigma_r``),
and ``len(I)`` signed parameters are basic, so only the small matrix
``Z = D[I, S] * signs`` is ever inverted.

Pricing is Dantzig's rule, switching to Bland's smallest-index rule after
a degenerate step (or throughout when ``bland=True``). The ratio test is
long-step: the entering variable keeps increasing past residual sign
changes while the objective slope stays negative. A degenerate step taken
under Bland's rule stops at the first breakpoint instead, exactly like the
textbook ratio test, so cycling is impossible.
"""

from __future__ import annotations

import numpy as np

OPTIMAL, UNBOUNDED, ITERATION_LIMIT, SINGULAR = 0, 1, 2, 3
# reduced costs this close (relative) count as tied, so both kernels agree
# on the entering variable despite different summation order
TIE_TOL = 1e-11


def _coarsen(t):
    """Drop the low 16 mantissa bits of nonnegative ``t`` (ordering key only)."""
    return (np.ascontiguousarray(t, dtype=np.float64).view(np.int64) & ~np.int64(0xFFFF)).view(np.float64)


def _design_rows(X, rows, cols, n, K):
    """Entries ``D[rows, cols]`` of the implicit (nK) x (K + p) design."""
    k = rows // n
    i = rows % n
    out = np.empty((rows.size, cols.size))
    for b, c in enumerate(cols):
        out[:, b] = (k == c) if c < K else X[i, c - K]
    return out


def check_loss_simplex(X, y, taus, pen, max_iter=100_000, bland=False, tol_opt=1e-9, tol_piv=1e-10):
    """Solve the composite check-loss LP.

    Returns ``(status, iterations, theta, resid, duals, rows, cols, signs)``;
    ``theta`` stacks the K intercepts then the p slopes, ``resid`` and
    ``duals`` are indexed by LP row ``k n + i``, and ``rows``/``cols``/
    ``signs`` list the basic parameters and the rows they interpolate.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    taus = np.ascontiguousarray(taus, dtype=float)
    pen = np.ascontiguousarray(pen, dtype=float)
    n, p = X.shape
    K = taus.size
    P = K + p
    m = n * K
    if y.shape != (n,) or pen.shape != (P,):
        raise ValueError("dimension mismatch")
    ytile = np.tile(y, K)
    # residuals this small count as exact zeros in the ratio test
    zero_tol = 1e-12 * (1.0 + (np.abs(y).max() if n else 0.0))
    tau_r = np.repeat(taus, n)

    sigma = np.where(ytile >= 0.0, 1.0, -1.0)
    in_I = np.zeros(m, dtype=bool)
    rows: list[int] = []
    cols: list[int] = []
    signs: list[float] = []
    theta = np.zeros(P)
    use_bland = bool(bland)
    status = ITERATION_LIMIT
    it = 0
    zinv = np.zeros((0, 0))
    th_s = np.zeros(0)
    pi = np.zeros(m)
    idx_P = np.arange(P)

    while True:
        s = len(rows)
        rows_a = np.asarray(rows, dtype=np.intp)
        cols_a = np.asarray(cols, dtype=np.intp)
        signs_a = np.asarray(signs, dtype=float)
        theta[:] = 0.0
        if s:
            D_I = _design_rows(X, rows_a, np.arange(P), n, K)
            try:
                zinv = np.linalg.inv(D_I[:, cols_a] * signs_a)
            except np.linalg.LinAlgError:
                status = SINGULAR
                break
            th_s = zinv @ ytile[rows_a]
            theta[cols_a] = signs_a * th_s
        e = (y[None, :] - theta[:K, None] - (X @ theta[K:])[None, :]).ravel()

        pi = np.where(sigma > 0.0, tau_r, tau_r - 1.0)
        pi[in_I] = 0.0
        pi2 = pi.reshape(K, n)
        g = np.concatenate([pi2.sum(axis=1), X.T @ pi2.sum(axis=0)])
        if s:
            pi_i = zinv.T @ (pen[cols_a] - signs_a * g[cols_a])
            pi[rows_a] = pi_i
            g = g + D_I.T @ pi_i

        # pricing --------------------------------------------------------
        rc = np.concatenate([
            tau_r[rows_a] - pi[rows_a],
            (1.0 - tau_r[rows_a]) + pi[rows_a],
            pen - g,
            pen + g,
        ])
        var = np.concatenate([rows_a, m + rows_a, 2 * m + idx_P, 2 * m + P + idx_P])
        eligible = rc < -tol_opt
        if s:
            eligible[2 * s + cols_a] = False
            eligible[2 * s + P + cols_a] = False
        if not eligible.any():
            status = OPTIMAL
            break
        if it >= max_iter:
            status = ITERATION_LIMIT
            break
        cand = np.nonzero(eligible)[0]
        if use_bland:
            q = cand[np.argmin(var[cand])]
        else:
            best = rc[cand].min()
            ties = cand[rc[cand] <= best + TIE_TOL * (1.0 - best)]
            q = ties[np.argmin(var[ties])]
        it += 1
        rc_q = rc[q]

        # direction ------------------------------------------------------
        step_theta = np.zeros(P)
        if q < 2 * s:
            a0 = q % s
            sg = 1.0 if q < s else -1.0
            d_s = zinv[:, a0] * sg
            a_col = None
        else:
            k = q - 2 * s
            a0 = k % P
            sg = 1.0 if k < P else -1.0
            if a0 < K:
                a_col = np.zeros((K, n))
                a_col[a0] = sg
                a_col = a_col.ravel()
            else:
                a_col = np.tile(sg * X[:, a0 - K], K)
            d_s = zinv @ a_col[rows_a] if s else np.zeros(0)
        if s:
            step_theta[cols_a] = signs_a * d_s
        w = (step_theta[:K, None] + (X @ step_theta[K:])[None, :]).ravel()
        d = -sigma * w if a_col is None else sigma * (a_col - w)
        d[in_I] = 0.0

        # long-step ratio test over breakpoints -------------------------
        v = sigma * e
        v[v <= zero_tol] = 0.0
        br = np.nonzero(d > tol_piv)[0]
        bp_t = np.maximum(v[br], 0.0) / d[br]
        bp_inc = d[br]
        bp_var = np.where(sigma[br] > 0.0, br, m + br)
        bp_ref = br
        sp = np.nonzero(d_s > tol_piv)[0] if s else np.zeros(0, dtype=np.intp)
        if sp.size:
            bp_t = np.concatenate([bp_t, np.where(th_s[sp] > zero_tol, th_s[sp], 0.0) / d_s[sp]])
            bp_inc = np.concatenate([bp_inc, 2.0 * pen[cols_a[sp]] * d_s[sp]])
            bp_var = np.concatenate([bp_var, np.where(signs_a[sp] > 0, 2 * m + cols_a[sp], 2 * m + P + cols_a[sp])])
            bp_ref = np.concatenate([bp_ref, -1 - sp])
        order = np.lexsort((bp_var, _coarsen(bp_t)))
        if use_bland and order.size and bp_t[order[0]] <= 0.0:
            # degenerate Bland step: plain ratio test, no breakpoint crossing,
            # which keeps the anti-cycling guarantee
            L = 0
        else:
            slopes = rc_q + np.cumsum(bp_inc[order])
            stop = np.nonzero(slopes >= -tol_opt)[0]
            if stop.size == 0:
                status = UNBOUNDED
                break
            L = stop[0]
        for o in order[:L]:
            ref = bp_ref[o]
            if ref >= 0:
                sigma[ref] = -sigma[ref]
            else:
                signs[-1 - ref] = -signs[-1 - ref]
        ref = int(bp_ref[order[L]])
        if not bland:
            use_bland = bp_t[order[L]] <= 0.0

        # basis update ---------------------------------------------------
        if a_col is not None:
            if ref >= 0:
                rows.append(ref)
                cols.append(a0)
                signs.append(sg)
                in_I[ref] = True
            else:
                cols[-1 - ref] = a0
                signs[-1 - ref] = sg
        else:
            r0 = rows[a0]
            sigma[r0] = sg
            in_I[r0] = False
            if ref >= 0:
                rows[a0] = ref
                in_I[ref] = True
            else:
                del cols[-1 - ref], signs[-1 - ref]
                del rows[a0]

    e = (y[None, :] - theta[:K, None] - (X @ theta[K:])[None, :]).ravel()
    return (
        status,
        it,
        theta.copy(),
        e,
        pi,
        np.asarray(rows, dtype=np.intp),
        np.asarray(cols, dtype=np.intp),
        np.asarray(signs, dtype=float),
    )
