"""Chebyshev collocation helpers (Gauss-Lobatto points)."""
import numpy as np


def cheb(n):
    """Differentiation matrix and points on [-1, 1], points descending from 1."""
    if n == 0:
        return np.zeros((1, 1)), np.array([1.0])
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    X = np.tile(x, (n + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return D, x


def cheb_interval(n, a, b):
    """Points (ascending from a to b) and first-derivative matrix on [a, b]."""
    D, x = cheb(n)
    x = x[::-1]
    D = D[::-1, ::-1]
    t = a + (b - a) * (x + 1) / 2
    return t, D * (2.0 / (b - a))


def clenshaw_curtis_weights(n, a, b):
    """Clenshaw-Curtis weights for the points returned by ``cheb_interval``."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n ** 2 - 1)
        for k in range(1, n // 2):
            v -= 2 * np.cos(2 * k * theta[1:-1]) / (4 * k ** 2 - 1)
        v -= np.cos(n * theta[1:-1]) / (n ** 2 - 1)
    else:
        w[0] = w[n] = 1.0 / n ** 2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * theta[1:-1]) / (4 * k ** 2 - 1)
    w[1:-1] = 2 * v / n
    return w[::-1] * (b - a) / 2


def bary_weights(n):
    w = (-1.0) ** np.arange(n + 1)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w[::-1] * (-1.0) ** n


def bary_eval(nodes, values, t, weights=None):
    """Barycentric interpolation from Chebyshev-Lobatto ``nodes`` (ascending).

    ``values`` has the node axis first; extra trailing axes are carried along.
    """
    nodes = np.asarray(nodes)
    values = np.asarray(values)
    n = len(nodes) - 1
    w = bary_weights(n) if weights is None else weights
    t = np.asarray(t, float)
    flat = t.reshape(-1)
    diff = flat[:, None] - nodes[None, :]
    exact = diff == 0
    diff[exact] = 1.0
    k = w[None, :] / diff
    vals = values.reshape(n + 1, -1)
    out = (k @ vals) / k.sum(axis=1)[:, None]
    rows, cols = np.nonzero(exact)
    out[rows] = vals[cols]
    return out.reshape(t.shape + values.shape[1:])
