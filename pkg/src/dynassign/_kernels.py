"""Numba kernels: dense LAP solver and the simulation scan loops built on it.

Everything here works on plain float64/int64 arrays; id bookkeeping stays in
the wrapping modules. Kernels are cached to disk so the JIT cost is paid once
per environment.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True, nogil=True)
def jv_solve(cost, col_of_row, row_of_col, v):
    """Shortest-augmenting-path solve of the rectangular LAP (rows <= cols).

    One augmentation per row; column duals `v` are maintained so reduced costs
    stay nonnegative (row duals cancel out of every comparison and are not
    stored). Ties at every argmin scan break toward the lowest column index,
    which keeps the returned assignment deterministic.

    Fills col_of_row (len n_rows) and row_of_col (len n_cols, -1 for unused
    columns) and returns the optimal total cost.
    """
    n, m = cost.shape
    for i in range(n):
        col_of_row[i] = -1
    for j in range(m):
        row_of_col[j] = -1
        v[j] = 0.0
    dist = np.empty(m)
    pred = np.empty(m, np.int64)
    done = np.empty(m, np.bool_)
    for i in range(n):
        for j in range(m):
            dist[j] = cost[i, j] - v[j]
            pred[j] = i
            done[j] = False
        sink = -1
        while True:
            best = INF
            j0 = -1
            for j in range(m):
                if not done[j] and dist[j] < best:
                    best = dist[j]
                    j0 = j
            done[j0] = True
            if row_of_col[j0] < 0:
                sink = j0
                break
            i0 = row_of_col[j0]
            off = cost[i0, j0] - v[j0] - dist[j0]
            for j in range(m):
                if not done[j]:
                    nd = cost[i0, j] - v[j] - off
                    if nd < dist[j]:
                        dist[j] = nd
                        pred[j] = i0
        dsink = dist[sink]
        for j in range(m):
            if done[j] and j != sink:
                v[j] += dist[j] - dsink
        j0 = sink
        while True:
            i0 = pred[j0]
            row_of_col[j0] = i0
            j1 = col_of_row[i0]
            col_of_row[i0] = j0
            j0 = j1
            if i0 == i:
                break
    total = 0.0
    for i in range(n):
        total += cost[i, col_of_row[i]]
    return total


@njit(cache=True, nogil=True)
def lap_total(cost):
    """Optimal total of a rectangular LAP; scratch arrays allocated inside."""
    n, m = cost.shape
    col_of_row = np.empty(n, np.int64)
    row_of_col = np.empty(m, np.int64)
    v = np.empty(m)
    return jv_solve(cost, col_of_row, row_of_col, v)


@njit(cache=True, nogil=True)
def minrisk_sigma_scan(pool, idx, fixed, reduced_units, item_costs):
    """Per-draw conditional totals for the exact minimum-risk rule.

    pool          : (P, n_agents) historical cost vectors
    idx           : (n_draws, n_sim) pool row index per simulated future item
    fixed         : (n_fixed, n_agents) observed future vectors shared by all
                    draws (in-batch lookahead; empty outside batches)
    reduced_units : (n_cand, n_units - 1) agent column index of every residual
                    capacity unit once one unit of candidate agent a is spent
    item_costs    : (n_cand,) arrival's cost at each candidate agent

    Returns sigma (n_draws, n_cand): arrival cost at the candidate plus the
    optimal completion of the future items on the residual units.
    """
    n_draws, n_sim = idx.shape
    n_fixed = fixed.shape[0]
    n_future = n_fixed + n_sim
    n_cand, n_red = reduced_units.shape
    sigma = np.empty((n_draws, n_cand))
    fut = np.empty((n_future, pool.shape[1]))
    cmat = np.empty((n_future, n_red))
    col_of_row = np.empty(n_future, np.int64)
    row_of_col = np.empty(n_red, np.int64)
    v = np.empty(n_red)
    for r in range(n_draws):
        for w in range(n_fixed):
            for j in range(pool.shape[1]):
                fut[w, j] = fixed[w, j]
        for w in range(n_sim):
            row = idx[r, w]
            for j in range(pool.shape[1]):
                fut[n_fixed + w, j] = pool[row, j]
        for a in range(n_cand):
            for w in range(n_future):
                for u in range(n_red):
                    cmat[w, u] = fut[w, reduced_units[a, u]]
            total = jv_solve(cmat, col_of_row, row_of_col, v)
            sigma[r, a] = item_costs[a] + total
    return sigma


@njit(cache=True, nogil=True)
def approx_vote_scan(pool, idx, fixed, units, item_vec):
    """Per-draw winner for the modal-vote approximation.

    Solves one LAP per draw over the arrival (row 0) plus its future set on
    all residual units; records the agent column receiving row 0 and the
    optimal total.
    """
    n_draws, n_sim = idx.shape
    n_fixed = fixed.shape[0]
    n_rows = 1 + n_fixed + n_sim
    n_units = units.shape[0]
    winner = np.empty(n_draws, np.int64)
    totals = np.empty(n_draws)
    cmat = np.empty((n_rows, n_units))
    col_of_row = np.empty(n_rows, np.int64)
    row_of_col = np.empty(n_units, np.int64)
    v = np.empty(n_units)
    for r in range(n_draws):
        for u in range(n_units):
            cmat[0, u] = item_vec[units[u]]
        for w in range(n_fixed):
            for u in range(n_units):
                cmat[1 + w, u] = fixed[w, units[u]]
        for w in range(n_sim):
            row = idx[r, w]
            for u in range(n_units):
                cmat[1 + n_fixed + w, u] = pool[row, units[u]]
        totals[r] = jv_solve(cmat, col_of_row, row_of_col, v)
        winner[r] = units[col_of_row[0]]
    return winner, totals


@njit(cache=True, nogil=True)
def lap_totals_scan(pool, idx, fixed, units):
    """Optimal completion total per draw for a fixed residual unit set."""
    n_draws, n_sim = idx.shape
    n_fixed = fixed.shape[0]
    n_rows = n_fixed + n_sim
    n_units = units.shape[0]
    totals = np.empty(n_draws)
    cmat = np.empty((n_rows, n_units))
    col_of_row = np.empty(n_rows, np.int64)
    row_of_col = np.empty(n_units, np.int64)
    v = np.empty(n_units)
    for r in range(n_draws):
        for w in range(n_fixed):
            for u in range(n_units):
                cmat[w, u] = fixed[w, units[u]]
        for w in range(n_sim):
            row = idx[r, w]
            for u in range(n_units):
                cmat[n_fixed + w, u] = pool[row, units[u]]
        totals[r] = jv_solve(cmat, col_of_row, row_of_col, v)
    return totals


@njit(cache=True, nogil=True)
def _sigmoid(e):
    if e >= 0.0:
        return 1.0 / (1.0 + math.exp(-e))
    ex = math.exp(e)
    return ex / (1.0 + ex)


@njit(cache=True, nogil=True)
def lasso_logistic_cd(x, y, lam, w, intercept, max_cycles, tol):
    """Cyclic coordinate descent for l1-penalized logistic regression.

    x is expected standardized (intercept handled separately, unpenalized).
    Each coordinate takes a majorized Newton step with curvature bound
    mean(x_j^2)/4 followed by soft-thresholding at `lam`, so weights that the
    KKT conditions keep at zero stay exactly 0.0. `w` is updated in place
    (warm starts); returns (intercept, cycles_used); converged when the
    largest single-parameter move in a full cycle drops below `tol`.
    """
    n, p = x.shape
    xsq = np.empty(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += x[i, j] * x[i, j]
        xsq[j] = s / n
    eta = np.empty(n)
    for i in range(n):
        s = intercept
        for j in range(p):
            if w[j] != 0.0:
                s += x[i, j] * w[j]
        eta[i] = s
    cycles = 0
    for _cycle in range(max_cycles):
        cycles += 1
        max_delta = 0.0
        g0 = 0.0
        for i in range(n):
            g0 += _sigmoid(eta[i]) - y[i]
        g0 /= n
        d0 = -g0 / 0.25
        intercept += d0
        for i in range(n):
            eta[i] += d0
        if abs(d0) > max_delta:
            max_delta = abs(d0)
        for j in range(p):
            if xsq[j] == 0.0:
                continue
            gj = 0.0
            for i in range(n):
                gj += x[i, j] * (_sigmoid(eta[i]) - y[i])
            gj /= n
            hj = 0.25 * xsq[j]
            zj = hj * w[j] - gj
            if zj > lam:
                wj = (zj - lam) / hj
            elif zj < -lam:
                wj = (zj + lam) / hj
            else:
                wj = 0.0
            d = wj - w[j]
            if d != 0.0:
                for i in range(n):
                    eta[i] += d * x[i, j]
                w[j] = wj
                if abs(d) > max_delta:
                    max_delta = abs(d)
        if max_delta < tol:
            break
    return intercept, cycles


def warmup():
    """Trigger JIT compilation of every kernel on tiny inputs."""
    c = np.array([[1.0, 2.0], [2.0, 1.0]])
    lap_total(c)
    pool = np.array([[0.5, 0.25]])
    idx = np.zeros((2, 1), np.int64)
    fixed = np.empty((0, 2))
    minrisk_sigma_scan(pool, idx, fixed, np.array([[1], [0]], np.int64), np.array([0.5, 0.25]))
    approx_vote_scan(pool, idx, fixed, np.array([0, 1], np.int64), np.array([0.5, 0.25]))
    lap_totals_scan(pool, idx, fixed, np.array([0, 1], np.int64))
    x = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    y = np.array([1.0, 0.0, 1.0, 0.0])
    lasso_logistic_cd(x, y, 0.1, np.zeros(1), 0.0, 10, 1e-7)
