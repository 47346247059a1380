"""Compiled inner loops for the fixed-step simulator.

Plain loops over small dimensions; numba turns them into tight machine code
so a 10**6-step run takes about a second.
"""

import numba
import numpy as np

MODE_MODIFIED = 0
MODE_CLASSICAL = 1
MODE_OPEN_LOOP = 2


@numba.njit(cache=True)
def _matvec(M, v, out):
    for i in range(M.shape[0]):
        acc = 0.0
        for j in range(M.shape[1]):
            acc += M[i, j] * v[j]
        out[i] = acc


@numba.njit(cache=True)
def run_euler(A, B, K, L, expAD, x0, h, delay_steps, reset_steps, n_steps, mode, guard):
    """Integrate plant and controller; returns the recorded columns.

    Per step k: reset eps on the grid, read samples k - delay_steps (zero
    before t = 0), form zeta and u, record, then advance x, psi, eps with
    the pre-step values. Stops after recording a step whose state norm
    exceeds ``guard``.
    """
    n = A.shape[0]
    m = B.shape[1]
    rows = n_steps + 1
    X = np.zeros((rows, n))
    PSI = np.zeros((rows, n))
    EPS = np.zeros((rows, n))
    ZETA = np.zeros((rows, n))
    U = np.zeros((rows, m))

    x = x0.copy()
    psi = np.zeros(n)
    eps = np.zeros(n)
    v = np.zeros(n)
    zeta = np.zeros(n)
    u = np.zeros(m)
    u_del = np.zeros(m)
    tmp = np.zeros(n)
    ax = np.zeros(n)
    apsi = np.zeros(n)
    aeps = np.zeros(n)
    bu = np.zeros(n)
    bud = np.zeros(n)
    lz = np.zeros(n)
    guard2 = guard * guard
    d = delay_steps

    for k in range(rows):
        if mode != MODE_CLASSICAL:
            if k % reset_steps == 0:
                for i in range(n):
                    eps[i] = 0.0
            if k >= d:
                for i in range(n):
                    v[i] = x[i] - X[k - d, i] - PSI[k - d, i] + EPS[k - d, i]
            else:
                for i in range(n):
                    v[i] = x[i]
            _matvec(expAD, v, zeta)
            for i in range(n):
                zeta[i] -= eps[i]

        if mode == MODE_OPEN_LOOP:
            for j in range(m):
                u[j] = 0.0
        else:
            for i in range(n):
                tmp[i] = x[i] + psi[i]
            _matvec(K, tmp, u)

        norm2 = 0.0
        for i in range(n):
            X[k, i] = x[i]
            PSI[k, i] = psi[i]
            EPS[k, i] = eps[i]
            ZETA[k, i] = zeta[i]
            norm2 += x[i] * x[i] + psi[i] * psi[i] + eps[i] * eps[i]
        for j in range(m):
            U[k, j] = u[j]
        if not norm2 <= guard2:
            return X, U, PSI, EPS, ZETA, k + 1, True
        if k == rows - 1:
            break

        if k >= d:
            for j in range(m):
                u_del[j] = U[k - d, j]
        else:
            for j in range(m):
                u_del[j] = 0.0

        _matvec(A, x, ax)
        _matvec(A, psi, apsi)
        _matvec(B, u_del, bud)
        _matvec(B, u, bu)
        _matvec(L, zeta, lz)
        if mode != MODE_CLASSICAL:
            _matvec(A, eps, aeps)
        for i in range(n):
            x[i] = x[i] + h * (ax[i] + bud[i])
            psi[i] = psi[i] + h * (apsi[i] + bu[i] - bud[i] + lz[i])
            if mode != MODE_CLASSICAL:
                eps[i] = eps[i] + h * (aeps[i] + lz[i])

    return X, U, PSI, EPS, ZETA, rows, False


@numba.njit(cache=True)
def power_stack(E, count):
    """Return ``P`` with ``P[j] = E**j`` for ``j < count``."""
    n = E.shape[0]
    P = np.empty((count, n, n))
    for i in range(n):
        for j in range(n):
            P[0, i, j] = 1.0 if i == j else 0.0
    for s in range(1, count):
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for q in range(n):
                    acc += P[s - 1, i, q] * E[q, j]
                P[s, i, j] = acc
    return P
