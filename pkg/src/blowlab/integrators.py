"""Explicit embedded Runge-Kutta pairs for the method-of-lines solver.

Each pair propagates the higher-order solution and uses the difference to
the embedded lower-order one as the local error estimate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tableau:
    name: str
    a: tuple
    b: tuple
    b_err: tuple  # b - b_hat
    c: tuple
    order: int
    fsal: bool


BS32 = Tableau(
    name="bs32",
    a=((),
       (1 / 2,),
       (0.0, 3 / 4),
       (2 / 9, 1 / 3, 4 / 9)),
    b=(2 / 9, 1 / 3, 4 / 9, 0.0),
    b_err=(2 / 9 - 7 / 24, 1 / 3 - 1 / 4, 4 / 9 - 1 / 3, -1 / 8),
    c=(0.0, 1 / 2, 3 / 4, 1.0),
    order=3,
    fsal=True,
)

DP54 = Tableau(
    name="dp54",
    a=((),
       (1 / 5,),
       (3 / 40, 9 / 40),
       (44 / 45, -56 / 15, 32 / 9),
       (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
       (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
       (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)),
    b=(35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0),
    b_err=(35 / 384 - 5179 / 57600, 0.0, 500 / 1113 - 7571 / 16695,
           125 / 192 - 393 / 640, -2187 / 6784 + 92097 / 339200,
           11 / 84 - 187 / 2100, -1 / 40),
    c=(0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0),
    order=5,
    fsal=True,
)

PAIRS = {"bs32": BS32, "dp54": DP54}


def attempt(tab: Tableau, f, t: float, y: np.ndarray, h: float, k0: np.ndarray):
    """One trial step. Returns ``(y_new, err_vec, k_last)``; ``k_last`` is
    ``f(t+h, y_new)`` for FSAL pairs."""
    ks = [k0]
    for i in range(1, len(tab.c)):
        acc = None
        for aij, kj in zip(tab.a[i], ks):
            if aij:
                if acc is None:
                    acc = aij * kj
                else:
                    acc += aij * kj
        acc *= h
        acc += y
        yi = acc
        ks.append(f(t + tab.c[i] * h, yi))
    if tab.fsal:
        y_new = yi
    else:
        y_new = y.copy()
        for bi, ki in zip(tab.b, ks):
            if bi:
                y_new += (h * bi) * ki
    err = None
    for ei, ki in zip(tab.b_err, ks):
        if ei:
            if err is None:
                err = ei * ki
            else:
                err += ei * ki
    err *= h
    return y_new, err, ks[-1]


def error_norm(err, y_old, y_new, rtol, atol) -> float:
    scale = np.maximum(np.abs(y_old), np.abs(y_new))
    scale *= rtol
    scale += atol
    np.abs(err, out=err)
    err /= scale
    return float(err.max())
