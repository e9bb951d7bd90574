"""Pure numpy fallback for the compiled kernels in ``_kernels.pyx``.

Same signatures and the same quadrature (collision frame, clamped trilinear
stencil); results agree with the compiled path to rounding.  Vectorized per
row, so it is usable for grids up to roughly 8^3 nodes.
"""
from __future__ import annotations

import numpy as np


def _locate(x, a, uniform):
    n = len(a)
    if uniform:
        i0 = np.floor((x - a[0]) / (a[1] - a[0])).astype(np.int64)
        i0 = np.clip(i0, 0, n - 2)
    else:
        i0 = np.clip(np.searchsorted(a, x, side="right") - 1, 0, n - 2)
    t = (x - a[i0]) / (a[i0 + 1] - a[i0])
    low = x <= a[0]
    high = x >= a[-1]
    i0 = np.where(low, 0, np.where(high, n - 2, i0))
    t = np.where(low, 0.0, np.where(high, 1.0, t))
    return i0, t


def stencil(points, axes, uniform):
    """Clamped trilinear stencil: indices and weights of shape (..., 8)."""
    a0, a1, a2 = axes
    n1, n2 = len(a1), len(a2)
    i, tx = _locate(points[..., 0], a0, uniform)
    j, ty = _locate(points[..., 1], a1, uniform)
    k, tz = _locate(points[..., 2], a2, uniform)
    idx = []
    wt = []
    for di in (0, 1):
        wx = tx if di else 1.0 - tx
        for dj in (0, 1):
            wy = wx * (ty if dj else 1.0 - ty)
            for dk in (0, 1):
                idx.append(((i + di) * n1 + (j + dj)) * n2 + (k + dk))
                wt.append(wy * (tz if dk else 1.0 - tz))
    return np.stack(idx, axis=-1), np.stack(wt, axis=-1)


def frame(e):
    """Orthonormal (e1, e2) completing the unit vectors ``e`` (shape (..., 3))."""
    use_x = np.abs(e[..., 0]) < 0.9
    a = np.zeros_like(e)
    a[..., 0] = np.where(use_x, 1.0, 0.0)
    a[..., 1] = np.where(use_x, 0.0, 1.0)
    d = np.sum(a * e, axis=-1, keepdims=True)
    e1 = a - d * e
    e1 = e1 / np.sqrt(np.sum(e1 * e1, axis=-1, keepdims=True))
    e2 = np.empty_like(e)
    e2[..., 0] = e[..., 1] * e1[..., 2] - e[..., 2] * e1[..., 1]
    e2[..., 1] = e[..., 2] * e1[..., 0] - e[..., 0] * e1[..., 2]
    e2[..., 2] = e[..., 0] * e1[..., 1] - e[..., 1] * e1[..., 0]
    return e1, e2


def _rel_speed(r, gamma, rself_k):
    with np.errstate(divide="ignore"):
        if gamma == 0.0:
            R = np.ones_like(r)
        elif gamma == 1.0:
            R = r.copy()
        else:
            R = np.power(r, gamma)
    return np.where(r == 0.0, rself_k, R)


def _row_geometry(k, nodes, gamma, rself, cth, cphi, sphi):
    d = nodes[k] - nodes
    r = np.sqrt(np.sum(d * d, axis=-1))
    R = _rel_speed(r, gamma, rself[k])
    safe = np.where(r == 0.0, 1.0, r)
    e = d / safe[:, None]
    e[r == 0.0] = (0.0, 0.0, 1.0)
    e1, e2 = frame(e)
    sth = np.sqrt(1.0 - cth * cth)
    # omega[m, j, l, :]
    omega = (
        cth[None, :, None, None] * e[:, None, None, :]
        + sth[None, :, None, None]
        * (cphi[None, None, :, None] * e1[:, None, None, :] + sphi[None, None, :, None] * e2[:, None, None, :])
    )
    s = (r[:, None] * cth[None, :])[:, :, None, None]
    vp = nodes[k] - s * omega
    up = nodes[:, None, None, :] + s * omega
    return R, vp, up


def gain_matrix(a0, a1, a2, nodes, wmu, gamma, rself, cth, bth, cphi, sphi, uniform):
    axes = (np.asarray(a0), np.asarray(a1), np.asarray(a2))
    nodes = np.asarray(nodes)
    nv = nodes.shape[0]
    nph = len(cphi)
    out = np.zeros((nv, nv))
    bw = np.broadcast_to(np.asarray(bth)[:, None], (len(cth), nph))
    for k in range(nv):
        R, vp, up = _row_geometry(k, nodes, gamma, rself, cth, cphi, sphi)
        coef = (wmu * R)[:, None, None] * bw[None]
        iv, tv = stencil(vp, axes, uniform)
        iu, tu = stencil(up, axes, uniform)
        w = np.concatenate([(coef[..., None] * tv).ravel(), (coef[..., None] * tu).ravel()])
        idx = np.concatenate([iv.ravel(), iu.ravel()])
        out[k] = np.bincount(idx, weights=w, minlength=nv)
    return out


def gain_bilinear(a0, a1, a2, nodes, wmu, gamma, rself, cth, bth, cphi, sphi, uniform, hf, hg):
    axes = (np.asarray(a0), np.asarray(a1), np.asarray(a2))
    nodes = np.asarray(nodes)
    hf = np.asarray(hf)
    hg = np.asarray(hg)
    nv = nodes.shape[0]
    out = np.zeros((nv, hf.shape[1]))
    bw = np.asarray(bth)[:, None]
    for k in range(nv):
        R, vp, up = _row_geometry(k, nodes, gamma, rself, cth, cphi, sphi)
        coef = (wmu * R)[:, None, None] * bw[None]
        iv, tv = stencil(vp, axes, uniform)
        iu, tu = stencil(up, axes, uniform)
        fv = np.einsum("mjlc,mjlcp->mjlp", tv, hf[iv])
        gu = np.einsum("mjlc,mjlcp->mjlp", tu, hg[iu])
        out[k] = np.einsum("mjl,mjlp->p", coef, fv * gu)
    return out
