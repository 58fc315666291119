"""Empirical reconstruction and masked losses, and the dictionary gradient.

Losses are means over the batch. The gradient treats the decoded code as a
constant (no differentiation through the pursuit), matching how the training
algorithms are defined; the unit-norm projection contributes no gradient and
is applied after the optimizer step instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decode import (
    Mask,
    SparseVector,
    exhaustive_losses_batch,
    omp_batch,
    omp_masked_batch,
)
from .errors import ContractError
from .linalg import as_matrix

DECODERS = ("omp", "exhaustive")


@dataclass
class LossReport:
    total: float
    per_sample: np.ndarray
    decoder_used: str

    def __post_init__(self):
        self.per_sample = np.asarray(self.per_sample, dtype=np.float64)
        if np.any(self.per_sample < 0):
            raise ContractError("negative per-sample loss")


def _as_batch(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[None, :]
    if Y.ndim != 2:
        raise ContractError("batch must be (n, d)")
    return Y


def recon_loss(Y, B, k, decoder: str = "omp", **decode_opts) -> LossReport:
    """Mean squared reconstruction error under k-sparse decoding.

    ``decoder`` selects OMP (greedy) or the exhaustive global optimum.
    """
    Y = _as_batch(Y)
    B = as_matrix(B, "B")
    if decoder == "omp":
        dec = omp_batch(Y, B, k, **decode_opts)
        resid = Y - dec.dense() @ B.T
        per = np.einsum("ij,ij->i", resid, resid)
    elif decoder == "exhaustive":
        per = exhaustive_losses_batch(Y, B, k, **decode_opts)
    else:
        raise ContractError(f"unknown decoder {decoder!r}")
    return LossReport(float(np.mean(per)), per, decoder)


def masked_loss(Y, B, k, mask: Mask, **decode_opts) -> LossReport:
    """Decode from the observed coordinates, score on the held-out complement."""
    Y = _as_batch(Y)
    B = as_matrix(B, "B")
    comp = mask.complement
    if comp.size == 0:
        raise ContractError("mask complement is empty; nothing to evaluate")
    if mask.size < k:
        raise ContractError(f"mask observes {mask.size} coordinates < k={k}")
    dec = omp_masked_batch(Y, B, k, mask, **decode_opts)
    resid = Y[:, comp] - dec.dense() @ B[comp, :].T
    per = np.einsum("ij,ij->i", resid, resid)
    return LossReport(float(np.mean(per)), per, "omp")


def loss_gradient(y, B, z_hat: SparseVector, eval_rows) -> np.ndarray:
    """Gradient of ||[y]_E - [B z]_E||^2 in B, holding z fixed.

    Rows outside ``eval_rows`` and columns outside supp(z) are exactly zero.
    """
    y = np.asarray(y, dtype=np.float64)
    B = as_matrix(B, "B")
    d, p = B.shape
    if z_hat.dim != p:
        raise ContractError(f"code dimension {z_hat.dim} != atom count {p}")
    if y.shape != (d,):
        raise ContractError(f"y has shape {y.shape}, expected ({d},)")
    E = np.asarray(eval_rows, dtype=np.int64)
    G = np.zeros((d, p))
    if E.size == 0 or z_hat.support.size == 0:
        return G
    sup = z_hat.support
    r = y[E] - B[np.ix_(E, sup)] @ z_hat.values
    G[np.ix_(E, sup)] = -2.0 * np.outer(r, z_hat.values)
    return G


def batch_loss_gradient(Y, B, dec, eval_rows) -> tuple[np.ndarray, np.ndarray]:
    """Mean loss gradient over a decoded batch, plus per-sample losses.

    Equivalent to averaging :func:`loss_gradient` over the batch; returns
    (gradient, per_sample_losses) with the loss measured on ``eval_rows``.
    """
    Y = _as_batch(Y)
    B = as_matrix(B, "B")
    E = np.asarray(eval_rows, dtype=np.int64)
    Z = dec.dense()
    resid = Y[:, E] - Z @ B[E, :].T
    per = np.einsum("ij,ij->i", resid, resid)
    G = np.zeros_like(B)
    G[E, :] = (-2.0 / Y.shape[0]) * resid.T @ Z
    return G, per
