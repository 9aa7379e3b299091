"""Pure-numpy stepping kernel (fallback when the compiled extension is absent).

The compiled kernel in ``_kernel.pyx`` mirrors these expressions *per element
in the same order of operations*, and is compiled without FMA contraction, so
both backends produce bit-identical trajectories.  Any change to an
expression here must be mirrored there.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "python"


def g_values(u, alpha, beta, gammac, lam):
    """Drift current G (K, M): alpha, beta, gamma and lambda blocks in order."""
    K = u.shape[0]
    up = np.roll(u, -1, axis=1)
    G = alpha[:, None] * ((u * u + u * up + up * up) / 3.0)
    for l in range(1, K):
        ukl = np.roll(u, -l, axis=0)
        uklp = np.roll(up, -l, axis=0)
        uml = np.roll(u, l, axis=0)
        umlp = np.roll(up, l, axis=0)
        G += beta[:, l : l + 1] * ((u * ukl + up * uklp) / 2.0)
        G += gammac[:, l : l + 1] * (uml * umlp)
    if K > 2:
        ks = np.arange(K)
        for l in range(1, K):
            a = np.roll(u, l, axis=0)
            b = np.roll(up, l, axis=0)
            for lp in range(1, K):
                if lp == l:
                    continue
                c = np.roll(u, lp, axis=0)
                d = np.roll(up, lp, axis=0)
                lamv = lam[ks, (ks - l) % K, (ks - lp) % K][:, None]
                G += lamv * ((2.0 * a * c + a * d + b * c + 2.0 * b * d) / 6.0)
    return G


def drift(u, alpha, beta, gammac, lam):
    """Drift B = G - (G shifted one site back)."""
    G = g_values(u, alpha, beta, gammac, lam)
    return G - np.roll(G, 1, axis=1)


def em_block(u, alpha, beta, gammac, lam, eps, dt, noise):
    """Advance ``noise.shape[0]`` explicit Euler steps; returns the new state.

    The noise enters as a discrete gradient (one shared variable per bond),
    which is what conserves the per-component site sums exactly.
    """
    sqdt = math.sqrt(dt)
    for s in range(noise.shape[0]):
        B = drift(u, alpha, beta, gammac, lam)
        lap = np.roll(u, -1, axis=1) + np.roll(u, 1, axis=1) - 2.0 * u
        eta = noise[s]
        u = u + dt * (0.5 * lap + eps * B) + sqdt * (eta - np.roll(eta, 1, axis=1))
    return u
