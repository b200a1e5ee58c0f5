# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled hot loops: stage forward/backward and the plain dense baseline.

Same call signatures as :mod:`spmix._fallback`. Parameter-gradient
reductions are accumulated in double precision over a fixed partition of
the batch into at most ``MAX_CHUNKS`` contiguous row blocks, and the block
partials are summed in block order afterwards, so results do not depend on
the thread count.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()

ctypedef fused real:
    float
    double

cdef Py_ssize_t MAX_CHUNKS = 16

NAME = "compiled"


def _chunk_bounds(Py_ssize_t B):
    cdef Py_ssize_t nch = min(B, MAX_CHUNKS)
    if nch == 0:
        nch = 1
    return np.array([c * B // nch for c in range(nch + 1)], dtype=np.intp)


def stages_forward(real[:, :, ::1] zs, const int[:, ::1] lo, const int[:, ::1] hi,
                   const real[:, :, ::1] coef, const int[::1] unpaired,
                   const real[::1] rscale, int threads=1):
    """Fill zs[1..L] from zs[0]; coef[l, p] = (a, b, c, d) of each 2x2 block."""
    cdef Py_ssize_t L = lo.shape[0], P = lo.shape[1], B = zs.shape[1]
    cdef Py_ssize_t b, l, p
    cdef int i, j, u
    cdef real x1, x2
    for b in prange(B, nogil=True, num_threads=max(threads, 1), schedule="static"):
        for l in range(L):
            for p in range(P):
                i = lo[l, p]
                j = hi[l, p]
                x1 = zs[l, b, i]
                x2 = zs[l, b, j]
                zs[l + 1, b, i] = coef[l, p, 0] * x1 + coef[l, p, 1] * x2
                zs[l + 1, b, j] = coef[l, p, 2] * x1 + coef[l, p, 3] * x2
            u = unpaired[l]
            if u >= 0:
                zs[l + 1, b, u] = rscale[l] * zs[l, b, u]


def stages_backward(const real[:, :, ::1] zs, real[:, ::1] g, const int[:, ::1] lo,
                    const int[:, ::1] hi, const real[:, :, ::1] coef,
                    const int[::1] unpaired, const real[::1] rscale, bint rotation,
                    int threads=1):
    """Reverse sweep over the stages.

    On entry ``g`` holds the gradient w.r.t. z_L; on exit it holds the
    gradient w.r.t. z_0. Returns ``(gblocks, grscale)`` where gblocks has
    shape (L, P, 1) for rotation blocks and (L, P, 4) for general blocks.
    """
    cdef Py_ssize_t L = lo.shape[0], P = lo.shape[1], B = g.shape[0]
    cdef Py_ssize_t k = 1 if rotation else 4
    bounds_arr = _chunk_bounds(B)
    cdef Py_ssize_t[::1] bounds = bounds_arr
    cdef Py_ssize_t nch = bounds.shape[0] - 1
    part_arr = np.zeros((nch, L, P, k), dtype=np.float64)
    rpart_arr = np.zeros((nch, L), dtype=np.float64)
    cdef double[:, :, :, ::1] part = part_arr
    cdef double[:, ::1] rpart = rpart_arr
    cdef Py_ssize_t c, b, l, p, ll
    cdef int i, j, u
    cdef real x1, x2, d1, d2, ca, cb, cc, cd
    for c in prange(nch, nogil=True, num_threads=max(threads, 1), schedule="static"):
        for b in range(bounds[c], bounds[c + 1]):
            for ll in range(L):
                l = L - 1 - ll
                for p in range(P):
                    i = lo[l, p]
                    j = hi[l, p]
                    d1 = g[b, i]
                    d2 = g[b, j]
                    x1 = zs[l, b, i]
                    x2 = zs[l, b, j]
                    ca = coef[l, p, 0]
                    cb = coef[l, p, 1]
                    cc = coef[l, p, 2]
                    cd = coef[l, p, 3]
                    g[b, i] = ca * d1 + cc * d2
                    g[b, j] = cb * d1 + cd * d2
                    if rotation:
                        # ca = cos, cc = sin
                        part[c, l, p, 0] += (d1 * (-cc * x1 - ca * x2)
                                             + d2 * (ca * x1 - cc * x2))
                    else:
                        part[c, l, p, 0] += d1 * x1
                        part[c, l, p, 1] += d1 * x2
                        part[c, l, p, 2] += d2 * x1
                        part[c, l, p, 3] += d2 * x2
                u = unpaired[l]
                if u >= 0:
                    rpart[c, l] += g[b, u] * zs[l, b, u]
                    g[b, u] = rscale[l] * g[b, u]
    gblocks = part_arr[0].copy()
    grs = rpart_arr[0].copy()
    for c in range(1, nch):
        gblocks += part_arr[c]
        grs += rpart_arr[c]
    dt = np.float32 if real is float else np.float64
    return gblocks.astype(dt), grs.astype(dt)


def dense_forward(const real[:, ::1] x, const real[:, ::1] W, const real[::1] bias,
                  int threads=1):
    """y[b, o] = bias[o] + sum_i W[o, i] x[b, i] as a plain triple loop."""
    cdef Py_ssize_t B = x.shape[0], nin = x.shape[1], nout = W.shape[0]
    dt = np.float32 if real is float else np.float64
    y_arr = np.empty((B, nout), dtype=dt)
    cdef real[:, ::1] y = y_arr
    cdef Py_ssize_t o, b, i
    cdef real acc
    for o in prange(nout, nogil=True, num_threads=max(threads, 1), schedule="static"):
        for b in range(B):
            acc = 0
            for i in range(nin):
                acc = acc + W[o, i] * x[b, i]
            y[b, o] = acc + bias[o]
    return y_arr


def dense_backward(const real[:, ::1] x, const real[:, ::1] W, const real[:, ::1] g,
                   int threads=1):
    """Return (gW, gbias, gx) for y = W x + bias, summed over the batch."""
    cdef Py_ssize_t B = x.shape[0], nin = x.shape[1], nout = W.shape[0]
    dt = np.float32 if real is float else np.float64
    gW_arr = np.zeros((nout, nin), dtype=dt)
    gx_arr = np.zeros((B, nin), dtype=dt)
    cdef real[:, ::1] gW = gW_arr
    cdef real[:, ::1] gx = gx_arr
    cdef Py_ssize_t o, b, i
    cdef real s
    for o in prange(nout, nogil=True, num_threads=max(threads, 1), schedule="static"):
        for b in range(B):
            s = g[b, o]
            for i in range(nin):
                gW[o, i] += s * x[b, i]
    for b in prange(B, nogil=True, num_threads=max(threads, 1), schedule="static"):
        for o in range(nout):
            s = g[b, o]
            for i in range(nin):
                gx[b, i] += s * W[o, i]
    gb_arr = np.asarray(g).sum(axis=0, dtype=np.float64).astype(dt)
    return gW_arr, gb_arr, gx_arr
