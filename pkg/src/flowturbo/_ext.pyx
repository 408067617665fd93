# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the dense-net activations and the solver updates.

Matrix products stay in BLAS (numpy.matmul); what lives here is the elementwise
work numpy would spread over several passes and temporaries.  Every function
mirrors one in ``_kernels_py`` with the same signature and in-place contract.
"""
from libc.math cimport exp

ctypedef const double[:, ::1] cmat
ctypedef double[:, ::1] mat


cdef inline double _silu(double z) noexcept nogil:
    return z / (1.0 + exp(-z))


def affine_table_silu(cmat x, cmat W, cmat table, const long long[::1] y, mat out):
    """out = silu(x @ W + table[y]) for a narrow x (the state columns of layer one)."""
    cdef Py_ssize_t B = x.shape[0], K = x.shape[1], H = W.shape[1], r, k, j
    cdef double s
    with nogil:
        for r in range(B):
            for j in range(H):
                out[r, j] = table[y[r], j]
            for k in range(K):
                s = x[r, k]
                for j in range(H):
                    out[r, j] += s * W[k, j]
            for j in range(H):
                out[r, j] = _silu(out[r, j])


def affine_table(cmat x, cmat W, cmat table, const long long[::1] y, mat out):
    """out = x @ W + table[y] (pre-activation kept for backprop)."""
    cdef Py_ssize_t B = x.shape[0], K = x.shape[1], H = W.shape[1], r, k, j
    cdef double s
    with nogil:
        for r in range(B):
            for j in range(H):
                out[r, j] = table[y[r], j]
            for k in range(K):
                s = x[r, k]
                for j in range(H):
                    out[r, j] += s * W[k, j]


def bias_silu(mat z, const double[::1] b):
    """z <- silu(z + b), in place."""
    cdef Py_ssize_t B = z.shape[0], H = z.shape[1], r, j
    with nogil:
        for r in range(B):
            for j in range(H):
                z[r, j] = _silu(z[r, j] + b[j])


def bias_silu_keep(mat z, const double[::1] b, mat a):
    """z <- z + b; a <- silu(z)."""
    cdef Py_ssize_t B = z.shape[0], H = z.shape[1], r, j
    cdef double v
    with nogil:
        for r in range(B):
            for j in range(H):
                v = z[r, j] + b[j]
                z[r, j] = v
                a[r, j] = _silu(v)


def silu_into(cmat z, mat out):
    cdef Py_ssize_t B = z.shape[0], H = z.shape[1], r, j
    with nogil:
        for r in range(B):
            for j in range(H):
                out[r, j] = _silu(z[r, j])


def silu_backward(mat g, cmat z):
    """g <- g * silu'(z), in place."""
    cdef Py_ssize_t B = g.shape[0], H = g.shape[1], r, j
    cdef double s, v
    with nogil:
        for r in range(B):
            for j in range(H):
                v = z[r, j]
                s = 1.0 / (1.0 + exp(-v))
                g[r, j] *= s * (1.0 + v * (1.0 - s))


def cfg_combine(cmat uncond, cmat cond, double zeta, mat out):
    """out = (1 - zeta) * uncond + zeta * cond."""
    cdef Py_ssize_t B = out.shape[0], D = out.shape[1], r, j
    cdef double w = 1.0 - zeta
    with nogil:
        for r in range(B):
            for j in range(D):
                out[r, j] = w * uncond[r, j] + zeta * cond[r, j]


def euler_step(cmat x, cmat d, double dt, mat out):
    cdef Py_ssize_t B = out.shape[0], D = out.shape[1], r, j
    with nogil:
        for r in range(B):
            for j in range(D):
                out[r, j] = x[r, j] + dt * d[r, j]


def heun_step(cmat x, cmat d0, cmat d1, double half_dt, mat out):
    """out = x + half_dt * (d0 + d1)."""
    cdef Py_ssize_t B = out.shape[0], D = out.shape[1], r, j
    with nogil:
        for r in range(B):
            for j in range(D):
                out[r, j] = x[r, j] + half_dt * (d0[r, j] + d1[r, j])


def dense_narrow(cmat x, cmat W, mat out):
    """out = x @ W for a handful of output columns, one dot product per entry.

    BLAS switches kernels with the row count for narrow products, which breaks
    bitwise batch independence; here each entry's summation order depends on K only.
    """
    cdef Py_ssize_t B = x.shape[0], K = x.shape[1], H = W.shape[1], r, k, j
    cdef double s
    with nogil:
        for r in range(B):
            for j in range(H):
                s = 0.0
                for k in range(K):
                    s += x[r, k] * W[k, j]
                out[r, j] = s
