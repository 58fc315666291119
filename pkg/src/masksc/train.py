"""Batched dictionary training: reconstruction or masked objective, Adam, projection.

Both algorithms share one iteration body: decode each batch sample from the
observed coordinates, take the mean loss gradient on the evaluated rows, apply
a bias-corrected Adam step, then project every column back to the unit sphere.
The baseline objective is the masked path with a full observed set and the
loss evaluated on all rows, so the two are consistent by construction.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .decode import Mask, omp_batch, omp_masked_batch
from .errors import ContractError, NumericalError
from .linalg import normalize_columns
from .metrics import recovery_error
from .model import Dataset, holdout_ys, train_ys
from .objectives import batch_loss_gradient
from .rng import RngStream

ALGORITHMS = ("baseline", "masked")
INITS = ("samples", "local")
MASK_SCOPES = ("per_batch", "per_sample")


@dataclass
class TrainConfig:
    k: int
    p_prime: int
    algorithm: str = "baseline"
    epochs: int = 500
    batch_size: int = 200
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    mask_size: int | None = None        # masked only; defaults to d - floor(d/10)
    init: str = "samples"
    seed: int = 0
    shuffle: bool = True
    mask_scope: str = "per_batch"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ContractError(f"unknown algorithm {self.algorithm!r}")
        if self.init not in INITS:
            raise ContractError(f"unknown init {self.init!r}")
        if self.mask_scope not in MASK_SCOPES:
            raise ContractError(f"unknown mask scope {self.mask_scope!r}")
        for name in ("epochs", "batch_size", "k", "p_prime"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")

    def resolved_mask_size(self, d: int) -> int:
        if self.mask_size is not None:
            return self.mask_size
        return d - d // 10

    def validate_against(self, ds: Dataset) -> None:
        d = ds.model.d
        if self.batch_size > ds.n:
            raise ContractError(f"batch_size {self.batch_size} > n {ds.n}")
        if self.k > self.p_prime:
            raise ContractError(f"k {self.k} > p_prime {self.p_prime}")
        if self.algorithm == "masked":
            m = self.resolved_mask_size(d)
            if not (self.k <= m < d):
                raise ContractError(
                    f"masked training needs k <= mask_size < d, got k={self.k}, "
                    f"mask_size={m}, d={d}"
                )


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, shape) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape), 0)


@dataclass
class RunResult:
    final_dictionary: np.ndarray
    d_r_cosine_history: list[float]
    d_r_euclidean_history: list[float]
    loss_history: list[float]
    config: TrainConfig

    @property
    def final_d_r_cosine(self) -> float:
        return self.d_r_cosine_history[-1]

    @property
    def final_d_r_euclidean(self) -> float:
        return self.d_r_euclidean_history[-1]

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1]

    def to_json_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "d_r_cosine_history": self.d_r_cosine_history,
            "d_r_euclidean_history": self.d_r_euclidean_history,
            "loss_history": self.loss_history,
            "final_dictionary": self.final_dictionary.tolist(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))


def init_dictionary(init: str, holdout: np.ndarray, A_opt, p_prime: int, rng=None) -> np.ndarray:
    """Build the initial dictionary.

    ``samples``: the first p' holdout measurements, normalized, in stored
    order. ``local``: the ground truth itself followed by p' - p normalized
    holdout measurements (a probe for overfitting, not a practical init).
    """
    holdout = np.asarray(holdout, dtype=np.float64)
    if init == "samples":
        if holdout.shape[0] < p_prime:
            raise ContractError(
                f"samples init needs {p_prime} holdout samples, have {holdout.shape[0]}"
            )
        return normalize_columns(holdout[:p_prime].T)
    if init == "local":
        if A_opt is None:
            raise ContractError("local init needs the ground-truth dictionary")
        A_opt = np.asarray(A_opt, dtype=np.float64)
        p = A_opt.shape[1]
        if p_prime < p:
            raise ContractError(f"local init needs p_prime >= p, got {p_prime} < {p}")
        extra = p_prime - p
        if holdout.shape[0] < extra:
            raise ContractError(
                f"local init needs {extra} holdout samples, have {holdout.shape[0]}"
            )
        if extra == 0:
            return A_opt.copy()
        return np.hstack([A_opt, normalize_columns(holdout[:extra].T)])
    raise ContractError(f"unknown init {init!r}")


def adam_step(state: AdamState, grad: np.ndarray, B: np.ndarray, cfg: TrainConfig):
    """One bias-corrected Adam update followed by column normalization.

    Moment state passes through the projection unchanged. Returns the new
    dictionary and state.
    """
    if grad.shape != B.shape:
        raise ContractError(f"gradient shape {grad.shape} != dictionary {B.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient entries; training aborted")
    t = state.step_count + 1
    m = cfg.beta1 * state.first_moment + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.second_moment + (1.0 - cfg.beta2) * grad**2
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    B_new = B - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return normalize_columns(B_new), AdamState(m, v, t)


def train(dataset: Dataset, cfg: TrainConfig, iteration_callback=None) -> RunResult:
    """Run the full training loop and record per-epoch recovery error and loss.

    Histories have ``epochs + 1`` entries; index 0 is the initialization point
    (its loss comes from a dry evaluation pass that performs no updates).
    Training touches only the measurements, never the stored latents.
    """
    cfg.validate_against(dataset)
    model = dataset.model
    d, n = model.d, dataset.n
    Y = train_ys(dataset)

    rng = RngStream(cfg.seed)
    shuffle_rng = rng.child("shuffle")
    mask_rng = rng.child("mask")
    eval_rng = rng.child("eval")

    B = init_dictionary(
        cfg.init, holdout_ys(dataset), model.A, cfg.p_prime,
    )
    state = AdamState.zeros(B.shape)

    masked = cfg.algorithm == "masked"
    mask_size = cfg.resolved_mask_size(d) if masked else d

    def batches(order):
        for lo in range(0, n, cfg.batch_size):
            yield order[lo : lo + cfg.batch_size]

    def decode_and_grad(Yb, B, mask_stream):
        """Decode a batch and return (grad, per-sample losses, mask used)."""
        if not masked:
            dec = omp_batch(Yb, B, cfg.k)
            grad, per = batch_loss_gradient(Yb, B, dec, np.arange(d))
            return grad, per, Mask.full(d)
        if cfg.mask_scope == "per_batch":
            mask = Mask.draw(mask_stream, d, mask_size)
            dec = omp_masked_batch(Yb, B, cfg.k, mask)
            grad, per = batch_loss_gradient(Yb, B, dec, mask.complement)
            return grad, per, mask
        # per_sample: each measurement gets its own mask; gradients averaged
        grad = np.zeros_like(B)
        per = np.empty(Yb.shape[0])
        last = None
        for i in range(Yb.shape[0]):
            last = Mask.draw(mask_stream, d, mask_size)
            dec = omp_masked_batch(Yb[i : i + 1], B, cfg.k, last)
            g, ell = batch_loss_gradient(Yb[i : i + 1], B, dec, last.complement)
            grad += g / Yb.shape[0]
            per[i] = ell[0]
        return grad, per, last

    def eval_epoch_loss(B, stream):
        total = 0.0
        for batch in batches(np.arange(n)):
            _, per, _ = decode_and_grad(Y[batch], B, stream)
            total += float(per.sum())
        return total / n

    rep0 = recovery_error(model.A, B)
    cos_hist = [rep0.d_r_cosine]
    euc_hist = [rep0.d_r_euclidean]
    loss_hist = [eval_epoch_loss(B, eval_rng)]

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.gen.permutation(n) if cfg.shuffle else np.arange(n)
        epoch_loss = 0.0
        for it, batch in enumerate(batches(order)):
            grad, per, mask = decode_and_grad(Y[batch], B, mask_rng)
            batch_loss = float(per.mean())
            if not np.isfinite(batch_loss):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, iteration {it}"
                )
            if iteration_callback is not None:
                iteration_callback(
                    epoch=epoch, iteration=it, mask=mask, grad=grad, loss=batch_loss
                )
            B, state = adam_step(state, grad, B, cfg)
            epoch_loss += float(per.sum())
        rep = recovery_error(model.A, B)
        cos_hist.append(rep.d_r_cosine)
        euc_hist.append(rep.d_r_euclidean)
        loss_hist.append(epoch_loss / n)

    return RunResult(B, cos_hist, euc_hist, loss_hist, cfg)
