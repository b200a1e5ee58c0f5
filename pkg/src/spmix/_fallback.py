"""Pure numpy kernels; same signatures as the compiled ``_kernels`` module.

Used when the extension is not built or ``SPMIX_BACKEND=python`` is set.
``threads`` is accepted and ignored.
"""
import numpy as np

NAME = "python"


def stages_forward(zs, lo, hi, coef, unpaired, rscale, threads=1):
    for l in range(lo.shape[0]):
        zin, zout = zs[l], zs[l + 1]
        i, j = lo[l], hi[l]
        x1, x2 = zin[:, i], zin[:, j]
        a, b, c, d = coef[l].T
        zout[:, i] = a * x1 + b * x2
        zout[:, j] = c * x1 + d * x2
        u = unpaired[l]
        if u >= 0:
            zout[:, u] = rscale[l] * zin[:, u]


def stages_backward(zs, g, lo, hi, coef, unpaired, rscale, rotation, threads=1):
    L, P = lo.shape
    k = 1 if rotation else 4
    gblocks = np.zeros((L, P, k), dtype=np.float64)
    grs = np.zeros(L, dtype=np.float64)
    for l in range(L - 1, -1, -1):
        i, j = lo[l], hi[l]
        d1, d2 = g[:, i], g[:, j]
        x1, x2 = zs[l][:, i], zs[l][:, j]
        a, b, c, d = coef[l].T
        if rotation:
            cos, sin = a, c
            gblocks[l, :, 0] = (d1 * (-sin * x1 - cos * x2) + d2 * (cos * x1 - sin * x2)).sum(0, dtype=np.float64)
        else:
            gblocks[l, :, 0] = (d1 * x1).sum(0, dtype=np.float64)
            gblocks[l, :, 1] = (d1 * x2).sum(0, dtype=np.float64)
            gblocks[l, :, 2] = (d2 * x1).sum(0, dtype=np.float64)
            gblocks[l, :, 3] = (d2 * x2).sum(0, dtype=np.float64)
        g[:, i] = a * d1 + c * d2
        g[:, j] = b * d1 + d * d2
        u = unpaired[l]
        if u >= 0:
            grs[l] = (g[:, u] * zs[l][:, u]).sum(dtype=np.float64)
            g[:, u] = rscale[l] * g[:, u]
    return gblocks.astype(g.dtype), grs.astype(g.dtype)


def dense_forward(x, W, bias, threads=1):
    return x @ W.T + bias


def dense_backward(x, W, g, threads=1):
    return g.T @ x, g.sum(axis=0, dtype=np.float64).astype(g.dtype), g @ W
