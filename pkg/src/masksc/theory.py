"""Desk-scale empirical certification of the two main theoretical claims.

The overfitting claim: with noise, a dictionary built from epsilon-nets over
all one- and two-atom signal planes achieves a strictly smaller k-sparse
reconstruction loss than the ground truth while staying bounded away from it
in recovery error. The masking claim: the masked prediction risk of OMP with
the ground-truth dictionary approaches the support-oracle least-squares risk
as the signal scale grows, which itself approaches the Bayes (ridge) risk.

All Monte-Carlo comparisons share draws across the quantities being compared
(common random numbers), so dominance and monotonicity statements are
testable at modest trial counts.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .decode import Mask, omp_masked_batch
from .errors import BudgetError, ContractError, IncoherenceError
from .linalg import as_matrix, column_norms
from .metrics import mutual_coherence, recovery_error
from .model import GroundTruthModel, draw_batch, draw_codes
from .objectives import recon_loss
from .rng import RngStream

NET_COLUMN_BUDGET = 1_000_000
EXCLUSION_FACTOR = 2.0          # punch radius around ground-truth atoms, in units of epsilon
ORACLE_KINDS = ("ridge", "least_squares")
PREDICTORS = ("omp", "ls_oracle", "ridge_oracle")


def lambda_quantile(model: GroundTruthModel, trials: int, rng: RngStream) -> float:
    """Monte-Carlo (1 - 1/d) quantile of the code norm ||z||.

    This is the high-probability signal bound entering the adversarial net
    radius. With normalized codes it is exactly 1.
    """
    if trials < 100 * model.d:
        raise ContractError(f"need at least 100*d={100*model.d} trials")
    _, values = draw_codes(rng, model, trials)
    norms = np.sort(np.linalg.norm(values, axis=1))
    idx = min(int(math.ceil(trials * (1.0 - 1.0 / model.d))), trials - 1)
    return float(norms[idx])


@dataclass
class NetSpec:
    """Geometry of the adversarial dictionary's epsilon-nets."""

    epsilon: float
    radius: float
    gamma1: float
    gamma2: float
    supports: list[tuple[int, ...]]

    def __post_init__(self):
        if not 0 < self.epsilon < self.radius:
            raise ContractError("need 0 < epsilon < radius")


def _grid_axis(radius: float, h: float, offset: float) -> np.ndarray:
    n = int(math.floor((radius - offset) / h))
    pos = offset + h * np.arange(0, n + 1)
    return np.concatenate([-pos[::-1], pos])


def build_adversarial_dictionary(
    A,
    k: int,
    sigma: float,
    gamma1: float = 3.0,
    gamma2: float = 0.5,
    lambda_z: float = 1.0,
    *,
    column_budget: int = NET_COLUMN_BUDGET,
    exclusion_factor: float = EXCLUSION_FACTOR,
    epsilon_floor: float = 0.0,
):
    """Construct the loss-beating dictionary as a union of planar grids.

    For every single atom and pair of atoms of A, an orthonormal basis of
    their span is gridded (square grid, spacing epsilon/sqrt(2), offset by
    epsilon/2 so no grid point coincides with an atom) out to the signal
    radius gamma1 * max(sigma * sqrt(d), lambda_z); the grids are an
    epsilon-net of every such signal plane with epsilon = gamma2 * sigma^2.
    Columns closer than ``exclusion_factor * epsilon`` to any signed atom of
    A are removed, keeping the recovery error of the result bounded away from
    zero, and near-duplicates are collapsed.

    ``epsilon_floor`` keeps the net finite when sigma is zero or tiny (there
    is nothing to overfit then, but callers may still want the construction).

    Returns (B, NetSpec).
    """
    A = as_matrix(A, "A")
    d, p = A.shape
    if sigma < 0 or (sigma == 0 and epsilon_floor <= 0):
        raise ContractError("sigma must be positive (or provide an epsilon_floor)")
    if gamma1 <= 0 or gamma2 <= 0:
        raise ContractError("gamma constants must be positive")
    eps = max(gamma2 * sigma**2, epsilon_floor)
    radius = gamma1 * max(sigma * math.sqrt(d), lambda_z)
    if eps >= radius:
        raise ContractError(f"net resolution {eps} must be below radius {radius}")
    h = eps / math.sqrt(2.0)
    axis = _grid_axis(radius, h, eps / 2.0)

    supports: list[tuple[int, ...]] = [(i,) for i in range(p)]
    supports += [tuple(s) for s in itertools.combinations(range(p), 2)]

    # exact column count before materializing anything large
    inside_1d = int(np.count_nonzero(np.abs(axis) <= radius))
    per_pair = int(np.count_nonzero(
        axis[:, None] ** 2 + axis[None, :] ** 2 <= radius**2
    ))
    q_est = p * inside_1d + math.comb(p, 2) * per_pair
    if q_est > column_budget:
        raise BudgetError(
            f"net needs about {q_est} columns, over budget {column_budget}",
            required=q_est,
        )

    blocks = []
    for S in supports:
        Q, _ = np.linalg.qr(A[:, S])
        if S == (S[0],):
            coords = axis[np.abs(axis) <= radius][None, :]
        else:
            gx, gy = np.meshgrid(axis, axis, indexing="ij")
            keep = gx**2 + gy**2 <= radius**2
            coords = np.stack([gx[keep], gy[keep]])
        blocks.append(Q @ coords)
    B = np.concatenate(blocks, axis=1)

    # drop columns inside the punched balls around +-A_i
    best_align = np.max(np.abs(A.T @ B), axis=0)
    dist2 = np.einsum("ij,ij->j", B, B) + 1.0 - 2.0 * best_align
    B = B[:, dist2 >= (exclusion_factor * eps) ** 2]

    # collapse near-duplicates (cell hashing at eps/4 diameter keeps the net)
    cell = eps / (4.0 * math.sqrt(d))
    _, keep_idx = np.unique(np.round(B / cell).T, axis=0, return_index=True)
    B = B[:, np.sort(keep_idx)]

    return B, NetSpec(eps, radius, gamma1, gamma2, supports)


def net_cover_audit(A, B, spec: NetSpec, n_probe: int, rng: RngStream) -> dict:
    """Check the net property on random two-atom signals within the radius.

    Probes outside the punched neighborhoods of the signed atoms must be
    within epsilon of a column; probes inside them only within
    (exclusion + 1) * epsilon, since those columns were deliberately removed.
    """
    A = as_matrix(A, "A")
    pairs = [S for S in spec.supports if len(S) == 2]
    picks = rng.gen.integers(0, len(pairs), size=n_probe)
    r = spec.radius * np.sqrt(rng.gen.random(n_probe))
    theta = 2.0 * np.pi * rng.gen.random(n_probe)
    coords = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    probes = np.empty((n_probe, A.shape[0]))
    for i, s_idx in enumerate(picks):
        Q, _ = np.linalg.qr(A[:, pairs[s_idx]])
        probes[i] = Q @ coords[i]

    b_norm2 = np.einsum("ij,ij->j", B, B)
    p_norm2 = np.einsum("ij,ij->i", probes, probes)
    min_d2 = np.full(n_probe, np.inf)
    chunk = 8192
    for lo in range(0, B.shape[1], chunk):
        hi = min(lo + chunk, B.shape[1])
        d2 = p_norm2[:, None] + b_norm2[None, lo:hi] - 2.0 * probes @ B[:, lo:hi]
        np.minimum(min_d2, d2.min(axis=1), out=min_d2)
    min_dist = np.sqrt(np.maximum(min_d2, 0.0))

    atom_align = np.abs(probes @ A).max(axis=1)
    atom_dist = np.sqrt(np.maximum(p_norm2 + 1.0 - 2.0 * atom_align, 0.0))
    punched = atom_dist < EXCLUSION_FACTOR * spec.epsilon
    outside_ok = bool(np.all(min_dist[~punched] <= spec.epsilon))
    punched_ok = bool(np.all(min_dist <= (EXCLUSION_FACTOR + 1.0) * spec.epsilon))
    return {
        "n_probe": n_probe,
        "n_punched": int(np.count_nonzero(punched)),
        "max_dist_outside": float(min_dist[~punched].max()) if np.any(~punched) else 0.0,
        "max_dist": float(min_dist.max()),
        "epsilon": spec.epsilon,
        "pass": outside_ok and punched_ok,
    }


def verify_theorem_overfit(
    A,
    model: GroundTruthModel,
    n_eval: int = 2000,
    rng: RngStream | None = None,
    gamma1: float = 3.0,
    gamma2: float = 0.5,
    column_budget: int = NET_COLUMN_BUDGET,
) -> dict:
    """Estimate the loss gap between the ground truth and the adversarial net.

    Decodes ``n_eval`` fresh samples exhaustively against both dictionaries
    (shared draws) and reports the gap with its standard error along with the
    recovery error of the net, which must stay bounded away from zero.
    """
    if rng is None:
        raise ContractError("an rng is required")
    sigma = math.sqrt(model.noise_var)
    lam = lambda_quantile(model, max(100 * model.d, 10_000), rng.child("lambda"))
    # noiseless degenerate case: nothing to overfit; a coarse net suffices to
    # measure that the gap sits at the noise floor
    floor = 0.1 * gamma1 * max(sigma * math.sqrt(model.d), lam) if sigma == 0 else 0.0
    B, spec = build_adversarial_dictionary(
        model.A, model.k, sigma, gamma1, gamma2, lam,
        column_budget=column_budget, epsilon_floor=floor,
    )
    Y, _, _, _ = draw_batch(rng.child("eval"), model, n_eval)
    loss_A = recon_loss(Y, model.A, model.k, "exhaustive", budget=column_budget)
    loss_B = recon_loss(Y, B, model.k, "exhaustive", budget=column_budget)
    diff = loss_A.per_sample - loss_B.per_sample
    gap = float(np.mean(diff))
    gap_se = float(np.std(diff, ddof=1) / math.sqrt(n_eval))
    d_r = recovery_error(model.A, B)
    return {
        "q": int(B.shape[1]),
        "epsilon": spec.epsilon,
        "radius": spec.radius,
        "lambda_z": lam,
        "L_emp_A": loss_A.total,
        "L_emp_B": loss_B.total,
        "gap": gap,
        "gap_se": gap_se,
        "d_R_AB": d_r.d_r_euclidean,
        "d_r_cosine_AB": d_r.d_r_cosine,
        "n_eval": n_eval,
        "pass_gap": gap > 3.0 * gap_se,
        "pass_dr": d_r.d_r_euclidean > 0.001,
        "pass": gap > 3.0 * gap_se and d_r.d_r_euclidean > 0.001,
    }


@dataclass
class OracleEstimator:
    """Closed-form held-out predictor with access to the true support."""

    kind: str
    A: np.ndarray
    M: Mask
    sigma_z: float
    sigma: float

    def __post_init__(self):
        if self.kind not in ORACLE_KINDS:
            raise ContractError(f"unknown oracle kind {self.kind!r}")
        self.A = as_matrix(self.A, "A")
        if self.kind == "ridge" and self.sigma_z <= 0:
            raise ContractError("ridge oracle requires sigma_z > 0")


def oracle_predict(est: OracleEstimator, y_observed, s_star) -> np.ndarray:
    """Predict the held-out coordinates of the noiseless signal.

    The least-squares oracle projects through the pseudo-inverse of the
    observed sub-dictionary on the true support; the ridge oracle is the
    posterior mean under the Gaussian code prior, shrinking by
    sigma^2 / sigma_z^2 (it reduces to least squares as sigma_z grows and to
    zero as sigma_z vanishes).
    """
    y_observed = np.asarray(y_observed, dtype=np.float64)
    s_star = np.asarray(s_star, dtype=np.int64)
    obs, comp = est.M.observed, est.M.complement
    if y_observed.shape != (obs.size,):
        raise ContractError("observed measurement has wrong length")
    lam = est.A[np.ix_(obs, s_star)]
    head = est.A[np.ix_(comp, s_star)]
    if est.kind == "least_squares":
        g = lam.T @ lam
        rank = np.linalg.matrix_rank(lam)
        if rank < s_star.size:
            raise ContractError("observed sub-dictionary is rank deficient")
        w = np.linalg.solve(g, lam.T @ y_observed)
    else:
        ridge = (est.sigma**2) / (est.sigma_z**2)
        g = lam.T @ lam + ridge * np.eye(s_star.size)
        w = np.linalg.solve(g, lam.T @ y_observed)
    return head @ w


def _oracle_predict_batch(kind, A, mask, supports, Yobs, sigma, sigma_z):
    obs, comp = mask.observed, mask.complement
    lam = np.transpose(A[np.ix_(obs, supports.ravel())].reshape(obs.size, *supports.shape), (1, 0, 2))
    head = np.transpose(A[np.ix_(comp, supports.ravel())].reshape(comp.size, *supports.shape), (1, 0, 2))
    g = np.einsum("nmt,nms->nts", lam, lam)
    if kind == "ridge":
        g = g + (sigma**2 / sigma_z**2) * np.eye(supports.shape[1])
    rhs = np.einsum("nmt,nm->nt", lam, Yobs)
    w = np.linalg.solve(g, rhs[..., None])[..., 0]
    return np.einsum("nct,nt->nc", head, w)


def masked_risks(
    model: GroundTruthModel,
    predictors,
    M: Mask,
    trials: int,
    rng: RngStream,
) -> dict[str, np.ndarray]:
    """Per-trial held-out squared errors for several predictors on shared draws.

    Predictions use only the observed coordinates; the oracles additionally
    receive the true support from the stored latents. Returns a map from
    predictor name to the (trials,) array of errors.
    """
    if trials < 1000:
        raise ContractError("need at least 1000 trials for a stable risk estimate")
    for pred in predictors:
        if pred not in PREDICTORS:
            raise ContractError(f"unknown predictor {pred!r}")
    Y, supports, values, _ = draw_batch(rng, model, trials)
    signal_heldout = model.signal(supports, values)[:, M.complement]
    Yobs = Y[:, M.observed]
    out = {}
    for pred in predictors:
        if pred == "omp":
            dec = omp_masked_batch(Y, model.A, model.k, M, force_k_steps=True)
            pred_heldout = dec.dense() @ model.A[M.complement, :].T
        else:
            kind = "least_squares" if pred == "ls_oracle" else "ridge"
            pred_heldout = _oracle_predict_batch(
                kind, model.A, M, supports, Yobs,
                math.sqrt(model.noise_var), model.sigma_z,
            )
        resid = signal_heldout - pred_heldout
        out[pred] = np.einsum("ij,ij->i", resid, resid)
    return out


def masked_risk(
    model: GroundTruthModel,
    predictor: str,
    M: Mask,
    trials: int,
    rng: RngStream,
) -> float:
    """Monte-Carlo estimate of the held-out prediction risk of one predictor."""
    errs = masked_risks(model, [predictor], M, trials, rng)[predictor]
    return float(np.mean(errs))


def check_incoherence(A, M: Mask, k: int, strict: bool = False) -> dict:
    """Report the coherence of the observed sub-dictionary against 1/(2k-1)."""
    restricted = A[M.observed, :]
    mu = mutual_coherence(restricted / column_norms(restricted))
    threshold = 1.0 / (2 * k - 1)
    ok = mu < threshold
    if not ok:
        msg = (
            f"observed sub-dictionary coherence {mu:.4f} >= 1/(2k-1)={threshold:.4f}; "
            "the masking guarantee does not formally apply"
        )
        if strict:
            raise IncoherenceError(msg)
        warnings.warn(msg, stacklevel=3)
    return {"mu": mu, "mu_threshold": threshold, "incoherent": ok, "margin": threshold - mu}


def verify_theorem_masking(
    model_base: GroundTruthModel,
    M: Mask,
    sigma_z_grid,
    trials: int,
    rng: RngStream,
    strict: bool = False,
) -> dict:
    """Trace the OMP-vs-oracle risk gap along a signal-scale grid.

    For each sigma_z the OMP, least-squares-oracle, and ridge-oracle risks are
    estimated on shared draws (the same supports, unit-scale values, and noise
    are reused across the whole grid, with values rescaled by sigma_z), along
    with the exact-support recovery rate. Passing means the gap is
    non-increasing along the grid within twice its shared-draw standard error,
    the recovery rate is non-decreasing within twice its binomial standard
    error, and the ridge risk never exceeds the least-squares risk beyond
    Monte-Carlo noise.
    """
    grid = [float(s) for s in sigma_z_grid]
    if not grid:
        raise ContractError("sigma_z grid must be non-empty")
    if model_base.normalize_codes:
        raise ContractError("the masking theorem applies to unnormalized Gaussian codes")
    coher = check_incoherence(model_base.A, M, model_base.k, strict)

    # shared draws across the grid: scale-one model, values rescaled per point
    base = GroundTruthModel(
        A=model_base.A, k=model_base.k, sigma_z=1.0,
        normalize_codes=False, noise_var=model_base.noise_var,
    )
    if trials < 1000:
        raise ContractError("need at least 1000 trials for a stable risk estimate")
    Y1, supports, unit_values, eps = draw_batch(rng, base, trials)
    del Y1
    obs, comp = M.observed, M.complement

    rows = []
    for sz in grid:
        values = sz * unit_values
        signal = base.signal(supports, values)
        Y = signal + eps
        dec = omp_masked_batch(Y, base.A, base.k, M, force_k_steps=True)
        omp_pred = dec.dense() @ base.A[comp, :].T
        ls_pred = _oracle_predict_batch(
            "least_squares", base.A, M, supports, Y[:, obs],
            math.sqrt(base.noise_var), sz,
        )
        ridge_pred = _oracle_predict_batch(
            "ridge", base.A, M, supports, Y[:, obs],
            math.sqrt(base.noise_var), sz,
        )
        sh = signal[:, comp]
        errs = {
            "omp": np.einsum("ij,ij->i", sh - omp_pred, sh - omp_pred),
            "ls_oracle": np.einsum("ij,ij->i", sh - ls_pred, sh - ls_pred),
            "ridge_oracle": np.einsum("ij,ij->i", sh - ridge_pred, sh - ridge_pred),
        }
        hit = np.fromiter(
            (
                dec.lengths[i] == base.k
                and np.array_equal(np.sort(dec.supports[i, : base.k]), supports[i])
                for i in range(trials)
            ),
            dtype=bool, count=trials,
        )
        gap_per = errs["omp"] - errs["ls_oracle"]
        ridge_minus_ls = errs["ridge_oracle"] - errs["ls_oracle"]
        rate = float(np.mean(hit))
        rows.append({
            "sigma_z": sz,
            "omp_risk": float(np.mean(errs["omp"])),
            "ls_risk": float(np.mean(errs["ls_oracle"])),
            "ridge_risk": float(np.mean(errs["ridge_oracle"])),
            "gap": float(np.mean(gap_per)),
            "gap_se": float(np.std(gap_per, ddof=1) / math.sqrt(trials)),
            "ridge_minus_ls": float(np.mean(ridge_minus_ls)),
            "ridge_minus_ls_se": float(np.std(ridge_minus_ls, ddof=1) / math.sqrt(trials)),
            "recovery_rate": rate,
            "rate_se": math.sqrt(max(rate * (1.0 - rate), 1e-12) / trials),
        })

    gap_ok, rate_ok = True, True
    for a, b in zip(rows, rows[1:]):
        step_se = math.hypot(a["gap_se"], b["gap_se"])
        if b["gap"] > a["gap"] + 2.0 * step_se:
            gap_ok = False
        rate_slack = 2.0 * math.hypot(a["rate_se"], b["rate_se"])
        if b["recovery_rate"] < a["recovery_rate"] - rate_slack:
            rate_ok = False
    ridge_ok = all(
        r["ridge_minus_ls"] <= 2.0 * r["ridge_minus_ls_se"] for r in rows
    )
    return {
        "sigma_z_grid": grid,
        "trials": trials,
        "mask_size": M.size,
        "coherence": coher,
        "curve": rows,
        "gap_non_increasing": gap_ok,
        "rate_non_decreasing": rate_ok,
        "ridge_dominates": ridge_ok,
        "pass": gap_ok and rate_ok and ridge_ok,
    }
