"""Small shared helpers: seed derivation and row-stable linear algebra."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Derive a 63-bit seed from a root seed and a path of stage names.

    Sub-stage seeds hang off the single run seed via stable string hashing,
    so they survive code refactors and are independent of execution order.
    """
    key = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def rng_for(*parts) -> np.random.Generator:
    """Seeded generator for a named sub-stage."""
    return np.random.default_rng(derive_seed(*parts))


def stable_matmul(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Matrix product accumulated column by column.

    BLAS sums in a shape-dependent order, so ``(X @ W)[i]`` is not bit
    identical to ``X[i:i+1] @ W``. Accumulating over input features with a
    fixed loop order makes each output row independent of how many rows are
    in the batch; inference paths use this so a single scored record
    reproduces its batch prediction exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    n, k = x.shape
    m = w.shape[1]
    out = np.zeros((n, m), dtype=np.float64)
    if bias is not None:
        out += bias
    tmp = np.empty((n, m), dtype=np.float64)
    for j in range(k):
        np.multiply(x[:, j : j + 1], w[j][None, :], out=tmp)
        out += tmp
    return out[0] if squeeze else out


def stable_matvec(x: np.ndarray, v: np.ndarray, bias: float = 0.0) -> np.ndarray:
    """Matrix-vector product accumulated term by term (see stable_matmul)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    out = np.full(x.shape[0], bias, dtype=np.float64)
    for j in range(x.shape[1]):
        out += v[j] * x[:, j]
    return float(out[0]) if squeeze else out


def stable_row_norms(x: np.ndarray) -> np.ndarray:
    """Per-row squared euclidean norm with fixed accumulation order."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros(x.shape[0], dtype=np.float64)
    for j in range(x.shape[1]):
        out += x[:, j] * x[:, j]
    return out


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
