"""Global mean and user/item rating biases.

Biases minimize::

    sum_{(m,n) observed} (r_mn - mu - b_m - b_n)^2 + delta * (sum b_m^2 + sum b_n^2)

with ``mu`` fixed to the training mean.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import MaskedMatrix, solve_spd

_logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BaselineModel:
    mu_g: float
    b_user: np.ndarray
    b_item: np.ndarray
    delta: float

    @property
    def shape(self):
        return len(self.b_user), len(self.b_item)

    def predict_many(self, users, items) -> np.ndarray:
        return self.mu_g + self.b_user[users] + self.b_item[items]


def _bias_system(train: MaskedMatrix, mu: float):
    resid = train.values - mu
    s_user = np.bincount(train.rows, weights=resid, minlength=train.shape[0])
    s_item = np.bincount(train.cols, weights=resid, minlength=train.shape[1])
    incidence = sp.csr_matrix((np.ones(train.nnz), (train.rows, train.cols)),
                              shape=train.shape)
    return s_user, s_item, incidence


def fit_baseline(train: MaskedMatrix, delta=1e-3, tol=1e-8, max_sweeps=200,
                 method="direct") -> BaselineModel:
    """Fit the global mean and regularized user/item biases.

    Parameters
    ----------
    train : MaskedMatrix
        Observed training ratings.
    delta : float
        Ridge weight on the biases, > 0.
    tol, max_sweeps : float, int
        Stopping rule for ``method="cd"``: stop when the largest bias change in
        a sweep is at most ``tol``. Ignored by ``"direct"``.
    method : {"direct", "cd"}
        ``"direct"`` solves the normal equations exactly by eliminating the
        larger bias block and Cholesky-factoring the smaller one.
        ``"cd"`` runs alternating closed-form user/item sweeps, which converge
        very slowly along the ``b_m + c, b_n - c`` direction when ``delta`` is small.
    """
    if train.nnz == 0:
        raise ValueError("cannot fit a baseline to an empty training set")
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    mu = float(train.values.mean())
    c_user = train.row_counts().astype(np.float64)
    c_item = train.col_counts().astype(np.float64)
    s_user, s_item, B = _bias_system(train, mu)

    if method == "direct":
        if train.shape[0] <= train.shape[1]:
            b_user = _schur_solve(B, c_user, c_item, s_user, s_item, delta)
            b_item = (s_item - B.T @ b_user) / (c_item + delta)
        else:
            b_item = _schur_solve(B.T.tocsr(), c_item, c_user, s_item, s_user, delta)
            b_user = (s_user - B @ b_item) / (c_user + delta)
    elif method == "cd":
        b_user = np.zeros(train.shape[0])
        b_item = np.zeros(train.shape[1])
        for sweep in range(max_sweeps):
            new_user = (s_user - B @ b_item) / (c_user + delta)
            new_item = (s_item - B.T @ new_user) / (c_item + delta)
            change = max(np.abs(new_user - b_user).max(), np.abs(new_item - b_item).max())
            b_user, b_item = new_user, new_item
            if change <= tol:
                break
        _logger.debug("baseline cd stopped after %d sweeps (change %.3g)", sweep + 1, change)
    else:
        raise ValueError(f"unknown method {method!r}")

    b_user[c_user == 0] = 0.0
    b_item[c_item == 0] = 0.0
    return BaselineModel(mu, b_user, b_item, float(delta))


def _schur_solve(B, c_keep, c_elim, s_keep, s_elim, delta):
    """Solve for the ``keep`` block after eliminating the ``elim`` block.

    ``B`` is the keep x elim incidence matrix of observed cells.
    """
    d_elim = 1.0 / (c_elim + delta)
    S = np.diag(c_keep + delta) - (B @ sp.diags(d_elim) @ B.T).toarray()
    rhs = s_keep - B @ (d_elim * s_elim)
    return solve_spd(S, rhs)


def baseline_objective(train: MaskedMatrix, bl: BaselineModel) -> float:
    r = train.values - bl.predict_many(train.rows, train.cols)
    return float(r @ r + bl.delta * (bl.b_user @ bl.b_user + bl.b_item @ bl.b_item))


def baseline_gradient(train: MaskedMatrix, bl: BaselineModel):
    """Gradient of the bias objective w.r.t. ``(b_user, b_item)`` at fixed ``mu_g``."""
    r = train.values - bl.predict_many(train.rows, train.cols)
    g_user = -2 * np.bincount(train.rows, weights=r, minlength=train.shape[0])
    g_item = -2 * np.bincount(train.cols, weights=r, minlength=train.shape[1])
    return g_user + 2 * bl.delta * bl.b_user, g_item + 2 * bl.delta * bl.b_item


def _check_dims(train: MaskedMatrix, bl: BaselineModel):
    if bl.shape != train.shape:
        raise ValueError(f"baseline dimensions {bl.shape} do not match data {train.shape}")


def interaction_residuals(train: MaskedMatrix, bl: BaselineModel) -> MaskedMatrix:
    """Ratings minus ``mu_g + b_m + b_n`` on the observed cells."""
    _check_dims(train, bl)
    return train.with_values(train.values - bl.predict_many(train.rows, train.cols))


def predict_baseline(bl: BaselineModel, m: int, n: int) -> float:
    M, N = bl.shape
    if not (0 <= m < M and 0 <= n < N):
        raise IndexError(f"index ({m}, {n}) outside {M}x{N}")
    return float(bl.mu_g + bl.b_user[m] + bl.b_item[n])
