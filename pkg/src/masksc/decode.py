"""Sparse decoders: orthogonal matching pursuit and exhaustive k-sparse search.

``omp`` is the greedy decoder used by training; ``omp_masked`` runs it on a
row-restricted problem but returns a code valid against the full dictionary;
``exhaustive_decode`` is the globally optimal reference for small instances.
``omp_batch`` is a vectorized OMP over a stack of measurements that selects
and refits exactly like ``omp`` and exists purely for speed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ContractError, DegenerateColumnError, NumericalError
from .linalg import as_matrix, column_norms, least_squares
from .rng import RngStream

RESIDUAL_TOL = 1e-10
EXHAUSTIVE_BUDGET = 10**6
_COLUMN_CHUNK = 8192


@dataclass
class SparseVector:
    """A k-sparse code: ambient dimension, sorted support, aligned values."""

    dim: int
    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.support.shape != self.values.shape or self.support.ndim != 1:
            raise ContractError("support and values must be aligned 1-D arrays")
        if self.support.size:
            if self.support[0] < 0 or self.support[-1] >= self.dim:
                raise ContractError("support index out of range")
            if np.any(np.diff(self.support) <= 0):
                raise ContractError("support must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ContractError("sparse values must be finite")

    def to_dense(self) -> np.ndarray:
        z = np.zeros(self.dim)
        z[self.support] = self.values
        return z


@dataclass
class Mask:
    """Observed coordinate subset M of [d]; the complement is evaluated."""

    dim: int
    observed: np.ndarray

    def __post_init__(self):
        self.observed = np.unique(np.asarray(self.observed, dtype=np.int64))
        if self.observed.size < 1 or self.observed.size > self.dim:
            raise ContractError("mask must observe at least one coordinate")
        if self.observed[0] < 0 or self.observed[-1] >= self.dim:
            raise ContractError("mask index out of range")

    @property
    def size(self) -> int:
        return int(self.observed.size)

    @property
    def is_full(self) -> bool:
        return self.observed.size == self.dim

    @property
    def complement(self) -> np.ndarray:
        comp = np.ones(self.dim, dtype=bool)
        comp[self.observed] = False
        return np.flatnonzero(comp)

    @classmethod
    def full(cls, dim: int) -> "Mask":
        return cls(dim, np.arange(dim))

    @classmethod
    def draw(cls, rng: RngStream, dim: int, size: int) -> "Mask":
        """Uniformly random observed subset of the given size."""
        if not 1 <= size <= dim:
            raise ContractError(f"mask size {size} out of range for dim {dim}")
        obs = rng.gen.choice(dim, size=size, replace=False)
        return cls(dim, np.sort(obs))


def _check_dictionary(B, k, m_needed):
    B = as_matrix(B, "B")
    m, p = B.shape
    norms = column_norms(B)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateColumnError(f"dictionary column {bad} has zero norm")
    if k < 0 or k > min(m_needed, p):
        raise ContractError(f"k={k} exceeds min(rows={m_needed}, atoms={p})")
    return B, norms


def omp(y, B, k, *, rescale_selection=True, force_k_steps=False) -> SparseVector:
    """Greedy k-sparse decode of y against dictionary B.

    At each step the unselected atom with the largest |correlation| against
    the residual is added (ties to the lowest index), then the coefficients
    are refit by least squares on all selected atoms. Selection correlations
    are computed against unit-rescaled columns so that high-norm columns of a
    row-restricted dictionary cannot dominate; the refit uses the raw columns.
    Stops early once the residual drops below RESIDUAL_TOL * ||y|| unless
    ``force_k_steps`` is set.
    """
    y = np.asarray(y, dtype=np.float64)
    B, norms = _check_dictionary(B, k, y.shape[0])
    if y.ndim != 1 or y.shape[0] != B.shape[0]:
        raise ContractError(f"shape mismatch: y is {y.shape}, B is {B.shape}")
    p = B.shape[1]

    ynorm = np.linalg.norm(y)
    resid = y.copy()
    rnorm = ynorm
    selected: list[int] = []
    coef = np.zeros(0)
    for _ in range(k):
        if not force_k_steps and rnorm <= RESIDUAL_TOL * ynorm:
            break
        corr = B.T @ resid
        score = np.abs(corr)
        if rescale_selection:
            score = score / norms
        if selected:
            score[selected] = -np.inf
        j = int(np.argmax(score))
        selected.append(j)
        coef = least_squares(B[:, selected], y)
        resid = y - B[:, selected] @ coef
        new_rnorm = np.linalg.norm(resid)
        if new_rnorm > rnorm * (1.0 + 1e-9) + 1e-300:
            raise NumericalError(
                f"OMP residual increased at step {len(selected)}: "
                f"{rnorm} -> {new_rnorm}"
            )
        rnorm = new_rnorm

    order = np.argsort(selected) if selected else np.zeros(0, dtype=np.int64)
    support = np.asarray(selected, dtype=np.int64)[order]
    return SparseVector(p, support, coef[order] if selected else np.zeros(0))


def omp_masked(y, B, k, mask: Mask, *, rescale_selection=True, force_k_steps=False) -> SparseVector:
    """OMP on the observed rows only; the returned code lives in R^{p'}.

    Equivalent to ``omp([y]_M, P_M B, k)``; with a full mask it is exactly
    ``omp(y, B, k)``.
    """
    y = np.asarray(y, dtype=np.float64)
    B = as_matrix(B, "B")
    if mask.dim != B.shape[0] or y.shape != (B.shape[0],):
        raise ContractError("mask/dictionary/measurement dimensions disagree")
    if mask.size < k:
        raise ContractError(f"mask observes {mask.size} coordinates < k={k}")
    obs = mask.observed
    z = omp(
        y[obs], B[obs, :], k,
        rescale_selection=rescale_selection, force_k_steps=force_k_steps,
    )
    return SparseVector(B.shape[1], z.support, z.values)


@dataclass
class BatchDecode:
    """Ragged result of a batched decode: per-sample supports and coefficients.

    ``supports[i, :lengths[i]]`` and ``values[i, :lengths[i]]`` hold sample
    i's selected atoms in selection order; unused slots are -1 / 0.
    """

    dim: int
    supports: np.ndarray
    values: np.ndarray
    lengths: np.ndarray

    def sparse_vectors(self) -> list[SparseVector]:
        out = []
        for i in range(self.supports.shape[0]):
            t = int(self.lengths[i])
            sup = self.supports[i, :t]
            val = self.values[i, :t]
            order = np.argsort(sup)
            out.append(SparseVector(self.dim, sup[order], val[order]))
        return out

    def dense(self) -> np.ndarray:
        """Scatter to a dense (n, dim) code matrix."""
        n = self.supports.shape[0]
        Z = np.zeros((n, self.dim))
        rows = np.repeat(np.arange(n), self.supports.shape[1])
        cols = self.supports.ravel().copy()
        vals = self.values.ravel()
        keep = cols >= 0
        np.add.at(Z, (rows[keep], cols[keep]), vals[keep])
        return Z


def omp_batch(Y, B, k, *, rescale_selection=True, force_k_steps=False) -> BatchDecode:
    """Vectorized OMP over a stack of measurements (rows of Y).

    Selection and refit follow ``omp`` exactly; the least-squares refits are
    done as batched thin-QR solves. Samples whose residual falls below the
    early-stopping threshold freeze their support and drop out of later steps.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ContractError("Y must be (n_samples, m)")
    n, m = Y.shape
    B, norms = _check_dictionary(B, k, m)
    if B.shape[0] != m:
        raise ContractError(f"shape mismatch: Y is {Y.shape}, B is {B.shape}")
    p = B.shape[1]

    supports = np.full((n, k), -1, dtype=np.int64)
    values = np.zeros((n, k))
    lengths = np.zeros(n, dtype=np.int64)
    if k == 0 or n == 0:
        return BatchDecode(p, supports, values, lengths)

    resid = Y.copy()
    ynorm = np.linalg.norm(Y, axis=1)
    rnorm = ynorm.copy()

    for step in range(k):
        active = np.full(n, True) if force_k_steps else rnorm > RESIDUAL_TOL * ynorm
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        score = np.abs(resid[idx] @ B)
        if rescale_selection:
            score /= norms
        if step > 0:
            prev = supports[idx, :step]
            np.put_along_axis(score, prev, -np.inf, axis=1)
        j = np.argmax(score, axis=1)
        supports[idx, step] = j
        lengths[idx] = step + 1

        T = supports[idx, : step + 1]
        # (n_active, m, step+1) stacks of selected columns
        sub = np.transpose(B[:, T], (1, 0, 2))
        q, r = np.linalg.qr(sub)
        qty = np.einsum("nmt,nm->nt", q, Y[idx])
        with np.errstate(all="ignore"):
            w = np.linalg.solve(r, qty[..., None])[..., 0]
        bad = ~np.all(np.isfinite(w), axis=1)
        if np.any(bad):
            # nearly dependent selections: redo those rows with the pivoted solver
            for row in np.flatnonzero(bad):
                w[row] = least_squares(sub[row], Y[idx[row]])
        values[idx, : step + 1] = w
        resid[idx] = Y[idx] - np.einsum("nmt,nt->nm", sub, w)
        rnorm[idx] = np.linalg.norm(resid[idx], axis=1)

    return BatchDecode(p, supports, values, lengths)


def omp_masked_batch(Y, B, k, mask: Mask, *, rescale_selection=True, force_k_steps=False) -> BatchDecode:
    """Batched ``omp_masked``: decode all rows of Y from the observed coordinates."""
    Y = np.asarray(Y, dtype=np.float64)
    B = as_matrix(B, "B")
    if mask.dim != B.shape[0]:
        raise ContractError("mask/dictionary dimensions disagree")
    if mask.size < k:
        raise ContractError(f"mask observes {mask.size} coordinates < k={k}")
    obs = mask.observed
    dec = omp_batch(
        Y[:, obs], B[obs, :], k,
        rescale_selection=rescale_selection, force_k_steps=force_k_steps,
    )
    return BatchDecode(B.shape[1], dec.supports, dec.values, dec.lengths)


def exhaustive_budget_check(p: int, k: int, budget: int) -> int:
    total = math.comb(p, k)
    if total > budget:
        raise BudgetError(
            f"exhaustive decode over C({p},{k})={total} supports exceeds "
            f"budget {budget}; shrink the instance",
            required=total,
        )
    return total


def exhaustive_decode(y, B, k, *, budget: int = EXHAUSTIVE_BUDGET) -> SparseVector:
    """Globally optimal k-sparse least-squares decode by support enumeration.

    Ties in residual are broken toward the lexicographically smallest support
    (supports are visited in lexicographic order and only strict improvements
    are kept), so the result is deterministic.
    """
    y = np.asarray(y, dtype=np.float64)
    B = as_matrix(B, "B")
    if y.ndim != 1 or y.shape[0] != B.shape[0]:
        raise ContractError(f"shape mismatch: y is {y.shape}, B is {B.shape}")
    p = B.shape[1]
    if k < 0 or k > p:
        raise ContractError(f"k={k} out of range for {p} atoms")
    exhaustive_budget_check(p, k, budget)
    if k == 0:
        return SparseVector(p, np.zeros(0, dtype=np.int64), np.zeros(0))

    if k == 1:
        scores, coefs = _best_single_atoms(y[None, :], B)
        j = int(np.argmax(scores[0]))
        return SparseVector(p, np.array([j]), np.array([coefs[0, j]]))

    best_res = np.inf
    best: tuple[tuple[int, ...], np.ndarray] | None = None
    for sup in itertools.combinations(range(p), k):
        cols = B[:, sup]
        coef = least_squares(cols, y)
        res = y - cols @ coef
        rss = float(res @ res)
        if rss < best_res:
            best_res = rss
            best = (sup, coef)
    assert best is not None
    sup, coef = best
    return SparseVector(p, np.asarray(sup, dtype=np.int64), coef)


def _best_single_atoms(Y, B):
    """Per-sample best 1-atom captured energy and coefficients, chunked over columns.

    Returns (scores, coefs): scores[i, j] = (<B_j, y_i> / ||B_j||)^2, the
    energy captured by atom j, and coefs[i, j] the optimal coefficient.
    """
    norms = column_norms(B)
    n = Y.shape[0]
    p = B.shape[1]
    scores = np.empty((n, p))
    coefs = np.empty((n, p))
    for lo in range(0, p, _COLUMN_CHUNK):
        hi = min(lo + _COLUMN_CHUNK, p)
        G = Y @ B[:, lo:hi]
        nn = norms[lo:hi]
        scores[:, lo:hi] = (G / nn) ** 2
        coefs[:, lo:hi] = G / nn**2
    return scores, coefs


def exhaustive_losses_batch(Y, B, k, *, budget: int = EXHAUSTIVE_BUDGET) -> np.ndarray:
    """Per-sample squared residuals of the exhaustive k-sparse decode.

    The k = 1 case is fully vectorized (residual = ||y||^2 minus the best
    captured energy) so that dictionaries with hundreds of thousands of atoms
    stay tractable; larger k falls back to per-sample enumeration.
    """
    Y = np.asarray(Y, dtype=np.float64)
    B = as_matrix(B, "B")
    p = B.shape[1]
    exhaustive_budget_check(p, k, budget)
    if k == 1:
        scores = np.empty(Y.shape[0])
        ynorm2 = np.einsum("ij,ij->i", Y, Y)
        best = np.full(Y.shape[0], -np.inf)
        norms = column_norms(B)
        for lo in range(0, p, _COLUMN_CHUNK):
            hi = min(lo + _COLUMN_CHUNK, p)
            G = Y @ B[:, lo:hi]
            np.maximum(best, ((G / norms[lo:hi]) ** 2).max(axis=1), out=best)
        scores = np.maximum(ynorm2 - best, 0.0)
        return scores
    out = np.empty(Y.shape[0])
    for i in range(Y.shape[0]):
        z = exhaustive_decode(Y[i], B, k, budget=budget)
        r = Y[i] - B[:, z.support] @ z.values
        out[i] = float(r @ r)
    return out
