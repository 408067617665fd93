"""Pure-numpy versions of the compiled kernels (same signatures, same in-place contract)."""
import numpy as np


def _silu_(z, out):
    # out = z / (1 + exp(-z)); `out` may alias `z`
    t = np.negative(z)
    with np.errstate(over="ignore"):
        np.exp(t, out=t)
    t += 1.0
    np.divide(z, t, out=out)


def _affine_rows(x, W, table, y, out):
    # x has only a few columns; accumulate them one at a time so every row
    # sees the same operation order whatever the batch size
    np.take(table, y, axis=0, out=out)
    for k in range(x.shape[1]):
        out += x[:, k, None] * W[k]


def affine_table_silu(x, W, table, y, out):
    _affine_rows(x, W, table, y, out)
    _silu_(out, out)


def affine_table(x, W, table, y, out):
    _affine_rows(x, W, table, y, out)


def dense_narrow(x, W, out):
    # accumulate in k order so each entry's sum does not depend on the batch
    np.multiply(x[:, :1], W[0], out=out)
    for k in range(1, W.shape[0]):
        out += x[:, k, None] * W[k]


def bias_silu(z, b):
    z += b
    _silu_(z, z)


def bias_silu_keep(z, b, a):
    z += b
    _silu_(z, a)


def silu_into(z, out):
    _silu_(z, out)


def silu_backward(g, z):
    s = np.negative(z)
    with np.errstate(over="ignore"):
        np.exp(s, out=s)
    s += 1.0
    np.reciprocal(s, out=s)
    # silu'(z) = s * (1 + z * (1 - s))
    d = 1.0 - s
    d *= z
    d += 1.0
    d *= s
    g *= d


def cfg_combine(uncond, cond, zeta, out):
    np.multiply(uncond, 1.0 - zeta, out=out)
    out += zeta * cond


def euler_step(x, d, dt, out):
    np.multiply(d, dt, out=out)
    out += x


def heun_step(x, d0, d1, half_dt, out):
    np.add(d0, d1, out=out)
    out *= half_dt
    out += x
