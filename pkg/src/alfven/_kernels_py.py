"""Numpy reference implementations of the compiled kernels (same signatures)."""
from __future__ import annotations

import numpy as np


def _band(n: int, b: int) -> np.ndarray:
    i = np.arange(n)
    return (i <= b) | (i >= n - b)


def spectral_nonlinear(M, k1, k2, k3, b1, b2, b3, dzp, dzm, phat, zp, zm, b0, nonlinear):
    n1, n2, n3 = zp.shape[1:]
    mask = (_band(n1, b1)[:, None, None] & _band(n2, b2)[None, :, None]
            & (np.arange(n3) <= b3)[None, None, :])
    K = (k1[:, None, None], k2[None, :, None], k3[None, None, :])
    alf = 1j * b0 * K[2]
    if not nonlinear:
        for a in range(3):
            dzp[a] = np.where(mask, alf * zp[a], 0)
            dzm[a] = np.where(mask, -alf * zm[a], 0)
        return
    q = K[0] ** 2 + K[1] ** 2 + K[2] ** 2
    inv = np.zeros(q.shape)
    np.divide(1.0, q, out=inv, where=q > 0)
    S = [K[0] * M[a, 0] + K[1] * M[a, 1] + K[2] * M[a, 2] for a in range(3)]
    T = [K[0] * M[0, a] + K[1] * M[1, a] + K[2] * M[2, a] for a in range(3)]
    ks = (K[0] * S[0] + K[1] * S[1] + K[2] * S[2]) * inv
    kt = (K[0] * T[0] + K[1] * T[1] + K[2] * T[2]) * inv
    phat[...] = np.where(mask, -ks, 0)
    for a in range(3):
        dzp[a] = np.where(mask, -1j * (S[a] - K[a] * ks) + alf * zp[a], 0)
        dzm[a] = np.where(mask, -1j * (T[a] - K[a] * kt) - alf * zm[a], 0)


def lawson_stage(u, k, e1, e2, c, mode, out):
    if mode == 0:
        out[...] = e1 * (u + c * k)
    elif mode == 1:
        out[...] = e1 * u + c * k
    else:
        out[...] = e1 * u + c * (e2 * k)


def lawson_final(u, ka, kb, kc, kd, efull, ehalf, h, out):
    out[...] = efull * u + (h / 6.0) * (efull * ka + 2.0 * (ehalf * (kb + kc)) + kd)


def _weights(f):
    return np.stack([
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ])


def tricubic(fields, origin, spacing, pos, out):
    nf = fields.shape[0]
    dims = fields.shape[1:]
    ws, idx = [], []
    for ax in range(3):
        s = (pos[:, ax] - origin[ax]) / spacing[ax]
        base = np.floor(s)
        ws.append(_weights(s - base))
        idx.append((base.astype(np.int64)[None, :] + np.arange(-1, 3)[:, None]) % dims[ax])
    flat = fields.reshape(nf, -1)
    acc = np.zeros((nf, pos.shape[0]))
    for a in range(4):
        for b in range(4):
            wab = ws[0][a] * ws[1][b]
            for c in range(4):
                lin = (idx[0][a] * dims[1] + idx[1][b]) * dims[2] + idx[2][c]
                acc += (wab * ws[2][c]) * flat[:, lin]
    out[...] = acc


def _cubic_val(f, v):
    w = _weights(f)
    return np.sum(w * v, axis=0)


def _cubic_der(f, v):
    d = np.stack([
        -(3 * f * f - 6 * f + 2) / 6.0,
        (3 * f * f - 4 * f - 1) / 2.0,
        -(3 * f * f - 2 * f - 2) / 2.0,
        (3 * f * f - 1) / 6.0,
    ])
    return np.sum(d * v, axis=0)


def column_roots(u, period, levels, out):
    n1, n2, n3 = u.shape
    ext = np.concatenate([u, u[:, :, :1] + period], axis=2)
    mono = np.all(np.diff(ext, axis=2) > 0, axis=2)
    bad = int(np.count_nonzero(~mono))
    u0 = u[:, :, 0]
    for l, c0 in enumerate(levels):
        wraps = np.floor((c0 - u0) / period)
        c = c0 - wraps * period
        above = u[:, :, 1:] > c[:, :, None]
        k = np.where(above.any(axis=2), np.argmax(above, axis=2), n3 - 1)
        v = []
        for a in range(4):
            it = k - 1 + a
            shift = np.where(it < 0, -period, np.where(it >= n3, period, 0.0))
            it = it % n3
            v.append(np.take_along_axis(u, it[:, :, None], axis=2)[:, :, 0] + shift - c)
        v = np.stack(v)
        lo = np.zeros((n1, n2))
        hi = np.ones((n1, n2))
        with np.errstate(divide="ignore", invalid="ignore"):
            f = -v[1] / (v[2] - v[1])
        for _ in range(60):
            val = _cubic_val(f, v)
            hi = np.where(val > 0, f, hi)
            lo = np.where(val > 0, lo, f)
            der = _cubic_der(f, v)
            with np.errstate(divide="ignore", invalid="ignore"):
                fn = f - val / der
            bis = (der <= 0) | (fn <= lo) | (fn >= hi) | ~np.isfinite(fn)
            done = np.abs(val) < 1e-15 * (1.0 + np.abs(c))
            f = np.where(done, f, np.where(bis, 0.5 * (lo + hi), fn))
            if np.all(done | (hi - lo < 1e-15)):
                break
        res = k + f + wraps * n3
        out[l] = np.where(mono, res, np.nan)
    return bad
