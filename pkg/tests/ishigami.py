"""Ishigami benchmark and its closed-form variance decomposition."""

import math

import numpy as np

A, B = 7.0, 0.1


def ishigami(x, a=A, b=B):
    x = np.atleast_2d(x)
    return np.sin(x[:, 0]) + a * np.sin(x[:, 1]) ** 2 + b * x[:, 2] ** 4 * np.sin(x[:, 0])


def analytic(a=A, b=B):
    pi = math.pi
    v1 = 0.5 * (1 + b * pi ** 4 / 5) ** 2
    v2 = a ** 2 / 8
    v13 = b ** 2 * pi ** 8 * (1 / 18 - 1 / 50)
    v = v1 + v2 + v13
    s1 = (v1 / v, v2 / v, 0.0)
    st = ((v1 + v13) / v, v2 / v, v13 / v)
    return v, s1, st


def quadrature(a=A, b=B, nodes=64):
    """Partial variances by Gauss-Legendre quadrature over [-pi, pi]^3."""
    u, w = np.polynomial.legendre.leggauss(nodes)
    x = math.pi * u
    w = w / 2  # density 1/(2 pi) times the pi Jacobian
    X1, X2, X3 = np.meshgrid(x, x, x, indexing="ij")
    W = w[:, None, None] * w[None, :, None] * w[None, None, :]
    f = np.sin(X1) + a * np.sin(X2) ** 2 + b * X3 ** 4 * np.sin(X1)
    mean = (W * f).sum()
    var = (W * (f - mean) ** 2).sum()
    first = []
    for axis in range(3):
        others = tuple(k for k in range(3) if k != axis)
        cond = (W * f).sum(axis=others) / W.sum(axis=others)
        first.append((w * (cond - mean) ** 2).sum() / var)
    total = []
    for axis in range(3):
        cond = (W * f).sum(axis=axis, keepdims=True) / W.sum(axis=axis, keepdims=True)
        total.append((W * (f - cond) ** 2).sum() / var)
    return var, tuple(first), tuple(total)
