# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled stepping kernel.

Bit-compatibility contract: every floating expression here mirrors
``_kernel_py.py`` per element in the same order of operations, and the
extension is compiled with -ffp-contract=off, so trajectories agree with the
pure-numpy fallback to the last bit.
"""

from libc.math cimport sqrt

import numpy as np


cdef inline void _fill_g(double[:, ::1] u, double[::1] alpha,
                         double[:, ::1] beta, double[:, ::1] gammac,
                         double[:, :, ::1] lam, double[:, ::1] G) noexcept:
    cdef Py_ssize_t K = u.shape[0], M = u.shape[1]
    cdef Py_ssize_t k, j, jp, l, lp, kl, ml, mlp
    cdef double acc
    for k in range(K):
        for j in range(M):
            jp = j + 1 if j + 1 < M else 0
            acc = alpha[k] * ((u[k, j] * u[k, j] + u[k, j] * u[k, jp]
                               + u[k, jp] * u[k, jp]) / 3.0)
            for l in range(1, K):
                kl = k + l if k + l < K else k + l - K
                ml = k - l if k - l >= 0 else k - l + K
                acc = acc + beta[k, l] * ((u[k, j] * u[kl, j]
                                           + u[k, jp] * u[kl, jp]) / 2.0)
                acc = acc + gammac[k, l] * (u[ml, j] * u[ml, jp])
            if K > 2:
                for l in range(1, K):
                    ml = k - l if k - l >= 0 else k - l + K
                    for lp in range(1, K):
                        if lp == l:
                            continue
                        mlp = k - lp if k - lp >= 0 else k - lp + K
                        acc = acc + lam[k, ml, mlp] * (
                            (2.0 * u[ml, j] * u[mlp, j]
                             + u[ml, j] * u[mlp, jp]
                             + u[ml, jp] * u[mlp, j]
                             + 2.0 * u[ml, jp] * u[mlp, jp]) / 6.0)
            G[k, j] = acc


def g_values(u, alpha, beta, gammac, lam):
    u_arr = np.ascontiguousarray(u, dtype=np.float64)
    G = np.empty_like(u_arr)
    _fill_g(u_arr,
            np.ascontiguousarray(alpha, dtype=np.float64),
            np.ascontiguousarray(beta, dtype=np.float64),
            np.ascontiguousarray(gammac, dtype=np.float64),
            np.ascontiguousarray(lam, dtype=np.float64),
            G)
    return G


def drift(u, alpha, beta, gammac, lam):
    G = g_values(u, alpha, beta, gammac, lam)
    cdef double[:, ::1] Gmv = G
    B = np.empty_like(G)
    cdef double[:, ::1] Bmv = B
    cdef Py_ssize_t K = Gmv.shape[0], M = Gmv.shape[1]
    cdef Py_ssize_t k, j, jm
    for k in range(K):
        for j in range(M):
            jm = j - 1 if j > 0 else M - 1
            Bmv[k, j] = Gmv[k, j] - Gmv[k, jm]
    return B


def em_block(u, alpha, beta, gammac, lam, double eps, double dt, noise):
    """Advance ``noise.shape[0]`` explicit Euler steps; returns the new state."""
    cdef double sqdt = sqrt(dt)
    src_arr = np.array(u, dtype=np.float64, copy=True, order="C")
    dst_arr = np.empty_like(src_arr)
    G_arr = np.empty_like(src_arr)
    cdef double[:, ::1] src = src_arr, dst = dst_arr, G = G_arr
    cdef double[::1] al = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef double[:, ::1] be = np.ascontiguousarray(beta, dtype=np.float64)
    cdef double[:, ::1] ga = np.ascontiguousarray(gammac, dtype=np.float64)
    cdef double[:, :, ::1] la = np.ascontiguousarray(lam, dtype=np.float64)
    cdef double[:, :, ::1] eta = np.ascontiguousarray(noise, dtype=np.float64)
    cdef Py_ssize_t K = src.shape[0], M = src.shape[1], S = eta.shape[0]
    cdef Py_ssize_t s, k, j, jp, jm
    cdef double lap, b

    for s in range(S):
        _fill_g(src, al, be, ga, la, G)
        for k in range(K):
            for j in range(M):
                jp = j + 1 if j + 1 < M else 0
                jm = j - 1 if j > 0 else M - 1
                b = G[k, j] - G[k, jm]
                lap = src[k, jp] + src[k, jm] - 2.0 * src[k, j]
                dst[k, j] = (src[k, j] + dt * (0.5 * lap + eps * b)
                             + sqdt * (eta[s, k, j] - eta[s, k, jm]))
        src_arr, dst_arr = dst_arr, src_arr
        src = src_arr
        dst = dst_arr
    return src_arr
