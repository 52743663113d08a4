"""Compiled kernels for the discrete-velocity collision operator.

Velocities live on a cell-centred grid ``-L + (k + 1/2) h``; only nodes in
the ball ``|v| <= L`` are active. Post-collisional values come from
trilinear interpolation of the ratio ``R = f / M`` (M a Gaussian), and a
collision event is kept only when every interpolation corner is active.
"""
from __future__ import annotations

import numpy as np
from numba import config, njit, prange

# prefer OpenMP; an outdated system TBB otherwise triggers a warning at first launch
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@njit(cache=True, inline="always")
def _axis(t, n):
    """Cell index and fraction along one axis; points on a node plane get fraction 0."""
    i = int(np.floor(t))
    fr = t - i
    if fr > 1.0 - 1e-10:
        i += 1
        fr = 0.0
    elif fr < 1e-10:
        fr = 0.0
    if i < 0 or i >= n or (fr > 0.0 and i + 1 >= n):
        return -1, 0.0
    return i, fr


@njit(cache=True, inline="always")
def _stencil(px, py, pz, L, h, n, amap, idx, wts):
    """Fill the 8 corner indices/weights for point p; return False if a weighted corner is inactive.

    Corners with zero weight are not required to exist, so a point on a grid
    plane next to the boundary of the active ball is still accepted.
    """
    ix, fx = _axis((px + L) / h - 0.5, n)
    iy, fy = _axis((py + L) / h - 0.5, n)
    iz, fz = _axis((pz + L) / h - 0.5, n)
    if ix < 0 or iy < 0 or iz < 0:
        return False
    c = 0
    for a in range(2):
        wx = fx if a else 1.0 - fx
        for b in range(2):
            wy = fy if b else 1.0 - fy
            for d in range(2):
                wz = fz if d else 1.0 - fz
                w = wx * wy * wz
                if w == 0.0:
                    idx[c] = 0
                    wts[c] = 0.0
                else:
                    k = amap[(ix + a) * n * n + (iy + b) * n + (iz + d)]
                    if k < 0:
                        return False
                    idx[c] = k
                    wts[c] = w
                c += 1
    return True


@njit(cache=True, parallel=True)
def key_sums(centers, radii, sig, sw, L, h, n, amap, R, want_S):
    """Per (midpoint, |d|) key: ``K = sum w chi`` and ``S = sum w chi R(v') R(v'*)``."""
    nk = centers.shape[0]
    ns = sig.shape[0]
    K = np.zeros(nk)
    S = np.zeros(nk)
    for q in prange(nk):
        i1 = np.empty(8, np.int64)
        w1 = np.empty(8)
        i2 = np.empty(8, np.int64)
        w2 = np.empty(8)
        cx, cy, cz = centers[q, 0], centers[q, 1], centers[q, 2]
        hr = 0.5 * radii[q]
        kk = 0.0
        ss = 0.0
        for s in range(ns):
            dx = hr * sig[s, 0]
            dy = hr * sig[s, 1]
            dz = hr * sig[s, 2]
            if not _stencil(cx + dx, cy + dy, cz + dz, L, h, n, amap, i1, w1):
                continue
            if not _stencil(cx - dx, cy - dy, cz - dz, L, h, n, amap, i2, w2):
                continue
            kk += sw[s]
            if want_S:
                r1 = 0.0
                r2 = 0.0
                for c in range(8):
                    r1 += w1[c] * R[i1[c]]
                    r2 += w2[c] * R[i2[c]]
                ss += sw[s] * r1 * r2
        K[q] = kk
        S[q] = ss
    return K, S


@njit(cache=True, parallel=True)
def pair_sums(pair_key, phi_key, K, S, M, f, Ktot):
    """``Q_i = sum_j Phi (M_i M_j S - f_i f_j K)`` and the dropped loss rate per node."""
    na = f.shape[0]
    Q = np.zeros(na)
    loss = np.zeros(na)
    drop = np.zeros(na)
    for i in prange(na):
        g = 0.0
        l = 0.0
        dr = 0.0
        base = i * na
        for j in range(na):
            q = pair_key[base + j]
            p = phi_key[q]
            g += p * M[j] * S[q]
            l += p * f[j] * K[q]
            dr += p * f[j] * (Ktot - K[q])
        Q[i] = M[i] * g - f[i] * l
        loss[i] = l
        drop[i] = f[i] * dr
    return Q, loss, drop


@njit(cache=True, parallel=True)
def general_sums(vel, sig, sw, bvals_fn_table, cos_grid, L, h, n, amap, R, M, f, gamma, C_phi):
    """Per-pair path for angular kernels that depend on the deviation angle.

    ``b`` is supplied as a fine table on ``cos_grid`` and interpolated linearly.
    """
    na = f.shape[0]
    ns = sig.shape[0]
    Q = np.zeros(na)
    loss = np.zeros(na)
    drop = np.zeros(na)
    ng = cos_grid.shape[0]
    for i in prange(na):
        i1 = np.empty(8, np.int64)
        w1 = np.empty(8)
        i2 = np.empty(8, np.int64)
        w2 = np.empty(8)
        g = 0.0
        l = 0.0
        dr = 0.0
        for j in range(na):
            if j == i:
                continue
            ux = vel[i, 0] - vel[j, 0]
            uy = vel[i, 1] - vel[j, 1]
            uz = vel[i, 2] - vel[j, 2]
            r = np.sqrt(ux * ux + uy * uy + uz * uz)
            p = C_phi * r ** gamma
            cx = 0.5 * (vel[i, 0] + vel[j, 0])
            cy = 0.5 * (vel[i, 1] + vel[j, 1])
            cz = 0.5 * (vel[i, 2] + vel[j, 2])
            kk = 0.0
            kt = 0.0
            ss = 0.0
            for s in range(ns):
                ct = (sig[s, 0] * ux + sig[s, 1] * uy + sig[s, 2] * uz) / r
                t = (ct + 1.0) * 0.5 * (ng - 1)
                k0 = min(max(int(t), 0), ng - 2)
                ft = t - k0
                bw = sw[s] * ((1.0 - ft) * bvals_fn_table[k0] + ft * bvals_fn_table[k0 + 1])
                kt += bw
                dx = 0.5 * r * sig[s, 0]
                dy = 0.5 * r * sig[s, 1]
                dz = 0.5 * r * sig[s, 2]
                if not _stencil(cx + dx, cy + dy, cz + dz, L, h, n, amap, i1, w1):
                    continue
                if not _stencil(cx - dx, cy - dy, cz - dz, L, h, n, amap, i2, w2):
                    continue
                r1 = 0.0
                r2 = 0.0
                for c in range(8):
                    r1 += w1[c] * R[i1[c]]
                    r2 += w2[c] * R[i2[c]]
                kk += bw
                ss += bw * r1 * r2
            g += p * M[j] * ss
            l += p * f[j] * kk
            dr += p * f[j] * (kt - kk)
        Q[i] = M[i] * g - f[i] * l
        loss[i] = l
        drop[i] = f[i] * dr
    return Q, loss, drop
