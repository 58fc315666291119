"""Recovery error, incoherence, RIP estimation, and support-recovery diagnostics."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .decode import Mask, omp_batch, omp_masked_batch
from .errors import BudgetError, ContractError
from .linalg import as_matrix, column_norms
from .model import GroundTruthModel, draw_batch
from .rng import RngStream


@dataclass
class RecoveryReport:
    """Column-wise recovery error of B against ground truth A.

    ``d_r_euclidean`` averages, over atoms of A, the squared distance to the
    nearest column of B up to sign; ``d_r_cosine`` averages one minus the best
    absolute cosine similarity. For unit-norm B the two are related exactly by
    d_r_euclidean = 2 * d_r_cosine.
    """

    d_r_euclidean: float
    d_r_cosine: float
    per_atom_best_match: list[tuple[int, int, int]]


def recovery_error(A, B) -> RecoveryReport:
    """Average best-match distance from each atom of A to the columns of B.

    A must have unit-norm columns. B is typically unit-norm too (training
    output); arbitrary norms are accepted so constructed dictionaries can be
    scored, in which case the Euclidean form uses raw columns and the cosine
    form uses normalized ones.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[0] != B.shape[0]:
        raise ContractError(f"dimension mismatch: A is {A.shape}, B is {B.shape}")
    a_norms = column_norms(A)
    if np.max(np.abs(a_norms - 1.0)) > 1e-8:
        raise ContractError("A must have unit-norm columns")
    b_norms = column_norms(B)
    if np.any(b_norms == 0.0):
        raise ContractError("B has a zero column")

    G = A.T @ B                                   # (p, p')
    absG = np.abs(G)
    # ||A_i - c B_j||^2 minimized over c in {-1, 1}
    eucl = 1.0 + b_norms[None, :] ** 2 - 2.0 * absG
    best_j = np.argmin(eucl, axis=1)
    rows = np.arange(A.shape[1])
    d_r_euclidean = max(float(np.mean(eucl[rows, best_j])), 0.0)
    d_r_cosine = max(float(np.mean(1.0 - np.max(absG / b_norms[None, :], axis=1))), 0.0)
    matches = [
        (int(i), int(j), 1 if G[i, j] >= 0 else -1)
        for i, j in zip(rows, best_j)
    ]
    return RecoveryReport(d_r_euclidean, d_r_cosine, matches)


def mutual_coherence(A) -> float:
    """Largest |inner product| between distinct unit-norm columns."""
    A = as_matrix(A, "A")
    if A.shape[1] < 2:
        return 0.0
    norms = column_norms(A)
    if np.max(np.abs(norms - 1.0)) > 1e-8:
        raise ContractError("mutual coherence requires unit-norm columns")
    G = np.abs(A.T @ A)
    np.fill_diagonal(G, 0.0)
    return float(G.max())


def _delta_of_support(A, sup) -> float:
    sub = A[:, sup]
    lam = np.linalg.eigvalsh(sub.T @ sub)
    return max(float(lam[-1] - 1.0), float(1.0 - lam[0]))


def rip_delta(A, s, mode: str = "exact", budget: int = 100_000, rng: RngStream | None = None):
    """Estimate the restricted-isometry constant delta_s.

    Exact mode enumerates every size-s column subset (lexicographic order);
    sampled mode takes the max over ``budget`` random supports and flags the
    result as a lower bound. A sampled call whose budget covers all supports
    enumerates instead and is exact.

    Returns (delta_estimate, is_lower_bound).
    """
    A = as_matrix(A, "A")
    p = A.shape[1]
    if not 1 <= s <= p:
        raise ContractError(f"s={s} out of range for {p} columns")
    total = math.comb(p, s)
    if mode == "exact" and total > budget:
        raise BudgetError(
            f"exact RIP over C({p},{s})={total} supports exceeds budget {budget}",
            required=total,
        )
    if mode not in ("exact", "sampled"):
        raise ContractError(f"unknown mode {mode!r}")

    if mode == "exact" or total <= budget:
        delta = max(_delta_of_support(A, sup) for sup in itertools.combinations(range(p), s))
        return float(delta), False
    if rng is None:
        raise ContractError("sampled mode needs an rng")
    delta = 0.0
    for _ in range(budget):
        sup = rng.gen.choice(p, size=s, replace=False)
        delta = max(delta, _delta_of_support(A, sup))
    return float(delta), True


def omp_success_threshold(sigma: float, k: int, p: int, mu: float, eta: float = 0.0) -> float:
    """Entry magnitude above which OMP provably keeps selecting true atoms.

    2 sigma sqrt(k) sqrt(2 (1 + eta) log p) / (1 - (2k - 1) mu); infinite when
    the incoherence condition (2k - 1) mu < 1 fails.
    """
    denom = 1.0 - (2 * k - 1) * mu
    if denom <= 0:
        return math.inf
    return 2.0 * sigma * math.sqrt(k) * math.sqrt(2.0 * (1.0 + eta) * math.log(p)) / denom


def support_recovery_rate(
    model: GroundTruthModel,
    B,
    M: Mask | None,
    trials: int,
    rng: RngStream,
    eta: float = 0.0,
):
    """Fraction of fresh samples whose decoded support matches the truth exactly.

    Decoding runs a full k steps (no early stop) on the observed coordinates.
    Also returns the guarantee threshold evaluated at the given eta; a warning
    is issued when the dictionary is too coherent for it to be meaningful.

    Returns (rate, gamma_threshold).
    """
    B = as_matrix(B, "B")
    if trials < 1:
        raise ContractError("need at least one trial")
    restricted = B if M is None or M.is_full else B[M.observed, :]
    mu = mutual_coherence(restricted / column_norms(restricted))
    k = model.k
    if mu >= 1.0 / (2 * k - 1):
        warnings.warn(
            f"coherence {mu:.3f} >= 1/(2k-1)={1.0/(2*k-1):.3f}; "
            "the recovery threshold is not meaningful",
            stacklevel=2,
        )
    gamma = omp_success_threshold(math.sqrt(model.noise_var), k, B.shape[1], mu, eta)

    Y, supports, _, _ = draw_batch(rng, model, trials)
    if M is None or M.is_full:
        dec = omp_batch(Y, B, k, force_k_steps=True)
    else:
        dec = omp_masked_batch(Y, B, k, M, force_k_steps=True)
    hits = 0
    for i in range(trials):
        got = np.sort(dec.supports[i, : dec.lengths[i]])
        if got.size == k and np.array_equal(got, supports[i]):
            hits += 1
    return hits / trials, gamma
