"""Dense numerics shared by synthesis and simulation."""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .errors import ValidationError

# Numerator coefficients of the [13/13] Pade approximant to exp; the
# denominator uses the same values with alternating signs.
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)

# Scale until ||M / 2^s||_1 <= this before applying the approximant.
SCALED_NORM_TARGET = 0.5


def _square(M, what="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"{what} must be square, got shape {M.shape}")
    return M


def matrix_exp(M) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a [13/13] Pade approximant.

    The scaling exponent ``s`` is the smallest non-negative integer with
    ``||M||_1 / 2**s <= 0.5``.
    """
    M = _square(M)
    n = M.shape[0]
    if not np.all(np.isfinite(M)):
        raise ValidationError("matrix_exp input has non-finite entries")
    ident = np.eye(n)
    if not M.any():
        return ident
    norm1 = np.abs(M).sum(axis=0).max()
    s = max(0, math.ceil(math.log2(norm1 / SCALED_NORM_TARGET)))
    X = M / 2.0**s
    b = _PADE13
    X2 = X @ X
    X4 = X2 @ X2
    X6 = X4 @ X2
    U = X @ (
        X6 @ (b[13] * X6 + b[11] * X4 + b[9] * X2)
        + b[7] * X6
        + b[5] * X4
        + b[3] * X2
        + b[1] * ident
    )
    V = (
        X6 @ (b[12] * X6 + b[10] * X4 + b[8] * X2)
        + b[6] * X6
        + b[4] * X4
        + b[2] * X2
        + b[0] * ident
    )
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R


def _check_gramian_args(F, G, horizon):
    F = _square(F, "F")
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = G.reshape(-1, 1)
    if G.shape[0] != F.shape[0]:
        raise ValidationError(f"G has {G.shape[0]} rows, F is {F.shape[0]}x{F.shape[0]}")
    if not horizon > 0:
        raise ValidationError("horizon must be positive")
    return F, G


def finite_gramian(F, G, horizon) -> np.ndarray:
    """``int_0^horizon e^{Ft} G G^T e^{F^T t} dt`` via one block exponential.

    With ``E = exp([[F, G G^T], [0, -F^T]] * horizon)`` the integral equals
    ``E12 @ E11.T``.
    """
    F, G = _check_gramian_args(F, G, horizon)
    n = F.shape[0]
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = F
    block[:n, n:] = G @ G.T
    block[n:, n:] = -F.T
    E = matrix_exp(block * horizon)
    W = E[:n, n:] @ E[:n, :n].T
    return 0.5 * (W + W.T)


def gramian_quadrature_oracle(F, G, horizon, steps=4096) -> np.ndarray:
    """Composite Simpson approximation of the same integral as :func:`finite_gramian`.

    Test oracle only. Node exponentials come from :func:`scipy.linalg.expm`
    so the check does not share code with the production path.
    """
    F, G = _check_gramian_args(F, G, horizon)
    if steps < 2 or steps % 2:
        raise ValidationError(f"Simpson rule needs an even step count >= 2, got {steps}")
    h = horizon / steps
    Q = G @ G.T
    total = np.zeros_like(F)
    for k in range(steps + 1):
        E = scipy.linalg.expm(F * (k * h))
        w = 1.0 if k in (0, steps) else (4.0 if k % 2 else 2.0)
        total += w * (E @ Q @ E.T)
    W = total * h / 3.0
    return 0.5 * (W + W.T)
