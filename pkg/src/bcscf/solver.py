"""Dense-user / sparse-item matrix factorization by majorization-minimization.

The interaction matrix ``Y`` (ratings minus baseline, observed on ``Omega``)
is factored as ``Y ~ U V`` by minimizing::

    ||Y - A(UV)||^2 + lambda_u ||U||_F^2 + lambda_v ||vec(V)||_1

Each outer iteration majorizes the data term around the current product,
which for an entry-sampling operator (``beta = 1``) amounts to filling the
unobserved cells with the current prediction. ``U`` then has a closed-form
ridge update and ``V`` takes soft-thresholding (ISTA) steps with step size
``1 / alpha``, ``alpha = 1.01 * lambda_max(U^T U)``.

``variant="dense"`` swaps the l1 term for ``lambda_v ||V||_F^2`` and the ISTA
step for an exact ridge solve, giving the classical dense-dense model.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .baseline import BaselineModel, fit_baseline, interaction_residuals
from .errors import NumericalError, UnknownIdError
from .linalg import (
    SAMPLING_BETA,
    MaskedMatrix,
    masked_residual,
    soft_threshold,
    solve_spd,
    spectral_norm_sq,
)

_logger = logging.getLogger(__name__)

VARIANTS = ("bcs", "dense")
RATING_MIN, RATING_MAX = 1.0, 5.0
ALPHA_MARGIN = 1.01


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the factorization.

    ``init_scale`` multiplies the uniform [0, 1) initial factors. With large
    ``lambda_u`` a small scale lets the first ``U`` update shrink ``U`` so far
    that the first ``V`` update thresholds every entry to zero, so the default
    is the unscaled draw.
    """

    rank: int = 50
    lambda_u: float = 1e3
    lambda_v: float = 1e-1
    max_outer_iters: int = 60
    obj_tol: float = 1e-7
    inner_v_steps: int = 1
    seed: int = 0
    variant: str = "bcs"
    init_scale: float = 1.0

    def __post_init__(self):
        if int(self.rank) < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")
        if not self.lambda_u > 0:
            raise ValueError(f"lambda_u must be > 0, got {self.lambda_u}")
        if not self.lambda_v > 0:
            raise ValueError(f"lambda_v must be > 0, got {self.lambda_v}")
        if int(self.max_outer_iters) < 0:
            raise ValueError(f"max_outer_iters must be >= 0, got {self.max_outer_iters}")
        if not self.obj_tol > 0:
            raise ValueError(f"obj_tol must be > 0, got {self.obj_tol}")
        if int(self.inner_v_steps) < 1:
            raise ValueError(f"inner_v_steps must be >= 1, got {self.inner_v_steps}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.init_scale > 0:
            raise ValueError(f"init_scale must be > 0, got {self.init_scale}")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown solver config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class FitReport:
    objective_trace: list[float] = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False
    wall_time_seconds: float = 0.0
    v_sparsity: float = 0.0

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class FactorModel:
    """Fitted factors plus baseline.

    ``warm_users``/``warm_items`` flag rows/columns that had training ratings;
    the interaction term is only used when both sides are warm. ``user_ids`` and
    ``item_ids`` hold original ids in dense-index order when known.
    """

    U: np.ndarray
    V: np.ndarray
    baseline: BaselineModel
    config: SolverConfig
    user_ids: np.ndarray | None = None
    item_ids: np.ndarray | None = None
    warm_users: np.ndarray | None = None
    warm_items: np.ndarray | None = None

    def __post_init__(self):
        M, k = self.U.shape
        k2, N = self.V.shape
        if k != k2:
            raise ValueError(f"factor ranks differ: U {self.U.shape}, V {self.V.shape}")
        if self.baseline.shape != (M, N):
            raise ValueError("baseline dimensions do not match factors")
        if self.warm_users is None:
            object.__setattr__(self, "warm_users", np.ones(M, dtype=bool))
        if self.warm_items is None:
            object.__setattr__(self, "warm_items", np.ones(N, dtype=bool))

    @property
    def shape(self):
        return self.U.shape[0], self.V.shape[1]

    def predict_many(self, users, items, clamp=True) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        M, N = self.shape
        if users.size and (users.min() < 0 or users.max() >= M
                           or items.min() < 0 or items.max() >= N):
            raise IndexError(f"index outside {M}x{N}")
        inter = np.einsum("ij,ji->i", self.U[users], self.V[:, items])
        inter = np.where(self.warm_users[users] & self.warm_items[items], inter, 0.0)
        pred = self.baseline.predict_many(users, items) + inter
        if clamp:
            pred = np.clip(pred, RATING_MIN, RATING_MAX)
        return pred

    def index_of(self, user_id, item_id):
        """Map original ids to dense indices; raises UnknownIdError."""
        if self.user_ids is None or self.item_ids is None:
            raise ValueError("model has no id maps")
        u = np.flatnonzero(self.user_ids == user_id)
        if not len(u):
            raise UnknownIdError("user", user_id)
        i = np.flatnonzero(self.item_ids == item_id)
        if not len(i):
            raise UnknownIdError("item", item_id)
        return int(u[0]), int(i[0])


def init_factors(M: int, N: int, config: SolverConfig):
    """Seeded i.i.d. uniform [0, 1) factors times ``config.init_scale``."""
    rng = np.random.default_rng(config.seed)
    k = config.rank
    U = rng.random((M, k)) * config.init_scale
    V = rng.random((k, N)) * config.init_scale
    return U, V


def landing(obs: MaskedMatrix, U, V) -> np.ndarray:
    """Dense ``UV + (1/beta) A^T(Y - A(UV))``: the product with observed cells replaced.

    The solver never forms this; it is here for inspection and tests.
    """
    X = U @ V
    X[obs.rows, obs.cols] += masked_residual(obs, U, V).values / SAMPLING_BETA
    return X


def update_U(Z_obs: MaskedMatrix, U, V, lambda_u, residual=None) -> np.ndarray:
    """Exact minimizer of ``||Z - UV||_F^2 + lambda_u ||U||_F^2`` for the landing ``Z``.

    Solves ``U (V V^T + lambda_u I) = Z V^T``. With ``Z = U_k V + R`` (``R`` the
    sparse observed residual) the right-hand side is ``U_k (V V^T) + R V^T``.
    """
    R = masked_residual(Z_obs, U, V) if residual is None else residual
    VVt = V @ V.T
    rhs = U @ VVt + R.scatter() @ V.T / SAMPLING_BETA
    D = VVt + lambda_u * np.eye(V.shape[0])
    return solve_spd(D, rhs)


def data_gradient_V(Z_obs: MaskedMatrix, U, V, residual=None) -> np.ndarray:
    """Gradient of ``||Y - A(UV)||^2`` w.r.t. ``V``: ``2 U^T A^T(A(UV) - Y)``."""
    R = masked_residual(Z_obs, U, V) if residual is None else residual
    return -2.0 * (R.scatter().T @ U).T


def ista_alpha(U) -> float:
    alpha = ALPHA_MARGIN * spectral_norm_sq(U.T @ U)
    if alpha == 0.0:
        raise NumericalError("U is identically zero (alpha = 0); re-initialize the "
                             "factors, e.g. with a larger init_scale")
    return alpha


def update_V(Z_obs: MaskedMatrix, U, V, lambda_v, inner_steps=1, residual=None) -> np.ndarray:
    """ISTA steps on ``||W - UV||_F^2 + lambda_v ||vec(V)||_1`` for the landing ``W``.

    Each step is ``V <- soft(V + U^T (W - U V) / alpha, lambda_v / (2 alpha))``.
    """
    R = masked_residual(Z_obs, U, V) if residual is None else residual
    alpha = ista_alpha(U)
    UtU = U.T @ U
    # U^T (W - U V_j) = U^T R + U^T U (V_k - V_j)
    UtR = (R.scatter().T @ U).T / SAMPLING_BETA
    thresh = lambda_v / (2 * alpha)
    Vj = V
    for step in range(inner_steps):
        grad = UtR if step == 0 else UtR + UtU @ (V - Vj)
        Vj = soft_threshold(Vj + grad / alpha, thresh)
    return Vj


def update_V_dense(Z_obs: MaskedMatrix, U, V, lambda_v, residual=None) -> np.ndarray:
    """Exact minimizer of ``||W - UV||_F^2 + lambda_v ||V||_F^2``."""
    R = masked_residual(Z_obs, U, V) if residual is None else residual
    UtU = U.T @ U
    UtW = UtU @ V + (R.scatter().T @ U).T / SAMPLING_BETA
    return solve_spd(UtU + lambda_v * np.eye(U.shape[1]), UtW.T).T


def objective(Z_obs: MaskedMatrix, U, V, lambda_u, lambda_v, variant="bcs",
              residual=None) -> float:
    """Data misfit on observed cells plus the variant's regularizers."""
    R = masked_residual(Z_obs, U, V) if residual is None else residual
    r = R.values
    v_pen = np.abs(V).sum() if variant == "bcs" else np.square(V).sum()
    return float(r @ r + lambda_u * np.square(U).sum() + lambda_v * v_pen)


def fit(Z_obs: MaskedMatrix, config: SolverConfig, init=None):
    """Alternate U and V updates until the iteration cap or objective stall.

    Stops after iteration ``j`` when
    ``|obj_j - obj_{j-1}| <= obj_tol * max(1, obj_{j-1})`` where ``obj_{-1}``
    is the objective at the initial factors.

    Returns
    -------
    U, V : ndarray
    report : FitReport
    """
    if Z_obs.nnz == 0:
        raise ValueError("no observed entries to fit")
    t0 = time.perf_counter()
    M, N = Z_obs.shape
    if init is None:
        U, V = init_factors(M, N, config)
    else:
        U, V = (np.array(a, dtype=np.float64) for a in init)
    lu, lv, variant = config.lambda_u, config.lambda_v, config.variant
    report = FitReport()
    R = masked_residual(Z_obs, U, V)
    prev = objective(Z_obs, U, V, lu, lv, variant, residual=R)
    for it in range(config.max_outer_iters):
        U = update_U(Z_obs, U, V, lu, residual=R)
        R = masked_residual(Z_obs, U, V)
        collapsed = not np.any(U)
        if collapsed:
            # V = 0 forces U = 0; with U = 0 the V surrogate is minimized by
            # V = 0, so (0, 0) is a fixed point and alpha would be 0.
            _logger.warning("factors collapsed to zero at iteration %d "
                            "(lambda_v=%g too large for this lambda_u)", it + 1, lv)
            V = np.zeros_like(V)
        elif variant == "bcs":
            V = update_V(Z_obs, U, V, lv, config.inner_v_steps, residual=R)
        else:
            V = update_V_dense(Z_obs, U, V, lv, residual=R)
        R = masked_residual(Z_obs, U, V)
        obj = objective(Z_obs, U, V, lu, lv, variant, residual=R)
        if not np.isfinite(obj):
            raise NumericalError(f"objective became non-finite at iteration {it + 1}")
        report.objective_trace.append(obj)
        report.iterations_run = it + 1
        _logger.debug("iter %d objective %.6g", it + 1, obj)
        if collapsed or abs(prev - obj) <= config.obj_tol * max(1.0, prev):
            report.converged = True
            break
        prev = obj
    report.wall_time_seconds = time.perf_counter() - t0
    report.v_sparsity = float(np.mean(V == 0))
    return U, V, report


def fit_dense(Z_obs: MaskedMatrix, config: SolverConfig, init=None):
    """:func:`fit` with ``variant="dense"``."""
    return fit(Z_obs, config.replace(variant="dense"), init=init)


def fit_model(train: MaskedMatrix, config: SolverConfig, delta=1e-3,
              user_ids=None, item_ids=None, baseline_method="direct"):
    """Baseline fit, interaction residuals, factorization. Returns ``(model, report)``.

    ``report.wall_time_seconds`` covers the baseline and the factorization.
    """
    t0 = time.perf_counter()
    bl = fit_baseline(train, delta=delta, method=baseline_method)
    Z_obs = interaction_residuals(train, bl)
    U, V, report = fit(Z_obs, config)
    report.wall_time_seconds = time.perf_counter() - t0
    model = FactorModel(U, V, bl, config, user_ids=user_ids, item_ids=item_ids,
                        warm_users=train.row_counts() > 0,
                        warm_items=train.col_counts() > 0)
    return model, report


def predict(model: FactorModel, m: int, n: int, clamp=True) -> float:
    """``mu_g + b_m + b_n + <U_m, V_n>``, clamped to the rating range."""
    M, N = model.shape
    if not (0 <= m < M and 0 <= n < N):
        raise IndexError(f"index ({m}, {n}) outside {M}x{N}")
    return float(model.predict_many([m], [n], clamp=clamp)[0])
