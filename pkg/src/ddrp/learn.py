"""Linear and logistic models on lambda-scaled random projections.

Features are scaled per column by ``(Sigma_X,jj)^lambda`` (second moments
taken from the training split), projected with a k x d random matrix, and a
k-dimensional model is fit on the result. ``lambda = 0`` is a plain
oblivious projection, ``-0.5`` projects normalized features.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import linalg, moments, preprocess, rp
from .errors import DimensionError, LabelError, SingularityError, StepSizeError


class Loss(str, enum.Enum):
    SQUARED = "squared"
    LOGISTIC = "logistic"


@dataclass
class LabeledDataset:
    features: object  # ndarray or csr_matrix, n x d
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64).ravel()
        if self.features.shape[0] < 1:
            raise DimensionError("dataset has no rows")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DimensionError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def check_binary(self):
        bad = ~np.isin(self.labels, (-1.0, 1.0))
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise LabelError(f"classification labels must be +-1; row {i} has {float(self.labels[i])!r}")

    def split(self, train_fraction=0.8):
        cut = int(round(self.n * train_fraction))
        return (LabeledDataset(self.features[:cut], self.labels[:cut]),
                LabeledDataset(self.features[cut:], self.labels[cut:]))


@dataclass
class LambdaModel:
    lam: float
    diag_x: np.ndarray
    projection: rp.ProjectionSpec
    w: np.ndarray
    loss: Loss
    ridge: float
    history: list = field(default_factory=list)

    def transform(self, features):
        return transform(features, self.lam, self.diag_x, self.projection)

    def decision(self, features):
        return self.transform(features) @ self.w

    def predict(self, features):
        scores = self.decision(features)
        if self.loss is Loss.LOGISTIC:
            return np.where(scores >= 0, 1.0, -1.0)
        return scores


def _scaled_features(features, scale):
    if sp.issparse(features):
        return sp.csr_matrix(features @ sp.diags(scale))
    return np.asarray(features, dtype=np.float64) * scale


def transform(features, lam, diag_x, spec, eps=preprocess.DEFAULT_EPS):
    """``Z = (X scaled by diag_x**lam per column) R^T``; sparse stays sparse until R."""
    diag_x = np.asarray(diag_x, dtype=np.float64)
    if diag_x.shape[0] != features.shape[1]:
        raise DimensionError(f"diag_x has length {diag_x.shape[0]}, data has {features.shape[1]} columns")
    scale, _ = preprocess.lambda_scales(diag_x, lam, eps)
    r = rp.sample_projection(spec)
    if lam == 0:
        return rp.project_rows(features, r)
    return rp.project_rows(_scaled_features(features, scale), r)


# ---------------------------------------------------------------- losses

def squared_loss(w, z, y, ridge=0.0):
    """Mean squared error plus ``ridge * |w|^2``; returns (loss, grad)."""
    resid = z @ w - y
    n = y.shape[0]
    loss = float(resid @ resid) / n + ridge * float(w @ w)
    grad = 2.0 * (z.T @ resid) / n + 2.0 * ridge * w
    return loss, grad


def logistic_loss(w, z, y, ridge=0.0):
    """Mean ``log(1 + exp(-y w.z))`` plus ``ridge * |w|^2``; returns (loss, grad)."""
    margins = y * (z @ w)
    n = y.shape[0]
    loss = float(np.mean(np.logaddexp(0.0, -margins))) + ridge * float(w @ w)
    # d/dm log(1+e^{-m}) = -sigmoid(-m)
    coef = -y * _sigmoid(-margins)
    grad = (z.T @ coef) / n + 2.0 * ridge * w
    return loss, grad


def _sigmoid(t):
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _loss_fn(loss):
    return squared_loss if Loss(loss) is Loss.SQUARED else logistic_loss


def train_linear(z, y, ridge=0.0):
    """Ridge least squares: ``(Z^T Z + ridge n I)^{-1} Z^T y`` via an eigen-solve."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, k = z.shape
    if n < 1 or y.shape[0] != n:
        raise DimensionError("need n >= 1 rows and one target per row")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    gram = z.T @ z + ridge * n * np.eye(k)
    eig = linalg.sym_eig(gram)
    lam = eig.eigenvalues
    top = lam[0] if lam.size else 0.0
    if top <= 0.0 or lam[-1] <= 1e-12 * top:
        if ridge == 0:
            raise SingularityError(
                "normal equations are singular; use ridge > 0 (required when k >= n)")
    rhs = eig.eigenvectors.T @ (z.T @ y)
    return eig.eigenvectors @ (rhs / lam)


def lipschitz_logistic(z, ridge=0.0, iters=100, seed=0):
    """Power-iteration estimate of the gradient's Lipschitz constant."""
    z = np.asarray(z, dtype=np.float64)
    n, k = z.shape
    v = np.random.default_rng(seed).standard_normal(k)
    v /= np.linalg.norm(v)
    top = 0.0
    for _ in range(iters):
        u = z.T @ (z @ v)
        top = float(np.linalg.norm(u))
        if top == 0.0:
            break
        v = u / top
    return top / (4.0 * n) + 2.0 * ridge


def train_logistic(z, y, epochs=500, step=None, ridge=0.0, history=None):
    """Full-batch gradient descent on the mean logistic loss.

    ``step`` defaults to ``0.1 / L`` with ``L`` from power iteration. Stops
    early once the gradient norm drops below 1e-8.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise LabelError("logistic labels must be +-1")
    if step is None:
        lip = lipschitz_logistic(z, ridge)
        step = 0.1 / lip if lip > 0 else 1.0
    w = np.zeros(z.shape[1])
    for _ in range(epochs):
        loss, grad = logistic_loss(w, z, y, ridge)
        if history is not None:
            history.append(loss)
        if not math.isfinite(loss):
            raise StepSizeError("logistic loss diverged; reduce the step size")
        if np.linalg.norm(grad) < 1e-8:
            break
        w = w - step * grad
    return w


def fit(z, y, loss, ridge, epochs=500, step=None):
    if Loss(loss) is Loss.SQUARED:
        return train_linear(z, y, ridge)
    return train_logistic(z, y, epochs, step, ridge)


def evaluate(z, y, w, loss):
    """Test MSE for regression, accuracy for classification."""
    scores = z @ w
    if Loss(loss) is Loss.SQUARED:
        resid = scores - y
        return float(resid @ resid) / y.shape[0]
    return float(np.mean(np.where(scores >= 0, 1.0, -1.0) == y))


# ---------------------------------------------------------------- sweep

@dataclass(frozen=True)
class SweepCell:
    lam: float
    k: int
    trials: int
    mean: float
    std: float
    metric: str

    def to_dict(self):
        return {"type": "sweep_cell", "lambda": self.lam, "k": self.k, "trials": self.trials,
                "metric": self.metric, "mean": self.mean, "std": self.std}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["lambda"]), int(d["k"]), int(d["trials"]), float(d["mean"]),
                   float(d["std"]), d["metric"])


@dataclass(frozen=True)
class SweepResult:
    cells: tuple
    trials: int

    def cell(self, lam, k):
        for c in self.cells:
            if c.lam == lam and c.k == k:
                return c
        raise KeyError((lam, k))

    def best(self, k, minimize=True):
        row = [c for c in self.cells if c.k == k]
        return min(row, key=lambda c: c.mean) if minimize else max(row, key=lambda c: c.mean)


def _mean_std(values):
    values = np.asarray(values, dtype=np.float64)
    mean = math.fsum(values) / values.size
    std = math.sqrt(math.fsum((values - mean) ** 2) / (values.size - 1)) if values.size > 1 else 0.0
    return mean, std


def sweep(train, test, lambdas, ks, trials=100, loss=Loss.SQUARED, ridge=1e-6, seed=0,
          kind=rp.ProjectionKind.SIGN, epochs=500, step=None, threads=1):
    """Grid over (lambda, k); trial ``t`` of every cell uses seed ``seed + t``.

    ``diag_x`` comes from the training split only.
    """
    loss = Loss(loss)
    if trials < 2:
        raise ValueError("sweep needs at least 2 trials")
    if loss is Loss.LOGISTIC:
        train.check_binary()
        test.check_binary()
    diag_x = moments.estimate_diag(train.features).diag
    d = train.d
    metric = "mse" if loss is Loss.SQUARED else "accuracy"

    def one(lam, k, t):
        spec = rp.ProjectionSpec(seed + t, d, k, kind)
        z_train = transform(train.features, lam, diag_x, spec)
        z_test = transform(test.features, lam, diag_x, spec)
        w = fit(z_train, train.labels, loss, ridge, epochs, step)
        return evaluate(z_test, test.labels, w, loss)

    cells = []
    for k in ks:
        for lam in lambdas:
            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    values = list(pool.map(lambda t: one(lam, k, t), range(trials)))
            else:
                values = [one(lam, k, t) for t in range(trials)]
            mean, std = _mean_std(values)
            cells.append(SweepCell(float(lam), int(k), trials, mean, std, metric))
    return SweepResult(tuple(cells), trials)


# ---------------------------------------------------------------- joint (w, lambda)

def joint_loss(w, lam, features, y, diag_x, r, loss, ridge=0.0, eps=preprocess.DEFAULT_EPS):
    """Training loss at ``(w, lam)`` and its gradients ``(loss, grad_w, grad_lam)``.

    ``d/d lam`` of the scaled row is ``log(diag_x) * scaled row``.
    """
    scale, log_diag = preprocess.lambda_scales(diag_x, lam, eps)
    scaled = _scaled_features(features, scale)
    z = rp.project_rows(scaled, r)
    dz = rp.project_rows(_scaled_features(scaled, log_diag) if np.any(log_diag) else
                         np.zeros((features.shape[0], features.shape[1])), r)
    value, grad_w = _loss_fn(loss)(w, z, y, ridge)
    n = y.shape[0]
    scores_dot = dz @ w
    if Loss(loss) is Loss.SQUARED:
        grad_lam = float(2.0 * ((z @ w - y) @ scores_dot) / n)
    else:
        margins = y * (z @ w)
        grad_lam = float((-y * _sigmoid(-margins)) @ scores_dot / n)
    return value, grad_w, grad_lam


def joint_train(ds, spec, loss=Loss.SQUARED, init_lambda=0.0, epochs=200, step_w=None,
                step_lambda=0.05, ridge=1e-6, diag_x=None, max_halvings=40):
    """Alternate a w-update and a backtracked gradient step on lambda.

    Squared loss solves for w exactly at the current lambda; logistic loss
    takes one gradient step with ``step_w`` (default ``1 / L``). The lambda
    step is halved until the loss does not increase, so the recorded loss
    sequence is non-increasing.
    """
    loss = Loss(loss)
    if loss is Loss.LOGISTIC:
        ds.check_binary()
    if diag_x is None:
        diag_x = moments.estimate_diag(ds.features).diag
    diag_x = np.asarray(diag_x, dtype=np.float64)
    r = rp.sample_projection(spec)
    y = ds.labels
    lam = float(init_lambda)

    def z_at(lam_):
        return transform(ds.features, lam_, diag_x, spec)

    if loss is Loss.SQUARED:
        w = train_linear(z_at(lam), y, ridge)
    else:
        w = np.zeros(spec.target_dim)
    value, _, _ = joint_loss(w, lam, ds.features, y, diag_x, r, loss, ridge)
    history = [value]
    eta = step_lambda
    for _ in range(epochs):
        # w block
        if loss is Loss.SQUARED:
            w_new = train_linear(z_at(lam), y, ridge)
        else:
            z = z_at(lam)
            sw = step_w or 1.0 / lipschitz_logistic(z, ridge)
            w_new = w - sw * logistic_loss(w, z, y, ridge)[1]
        v_new, _, g_lam = joint_loss(w_new, lam, ds.features, y, diag_x, r, loss, ridge)
        if not math.isfinite(v_new):
            raise StepSizeError("joint training diverged in the w step; reduce step_w")
        if v_new <= value:
            w, value = w_new, v_new
        # lambda block with backtracking
        trial_eta = eta
        for _ in range(max_halvings):
            lam_try = lam - trial_eta * g_lam
            v_try, _, _ = joint_loss(w, lam_try, ds.features, y, diag_x, r, loss, ridge)
            if math.isfinite(v_try) and v_try <= value:
                lam, value = lam_try, v_try
                eta = 2.0 * trial_eta
                break
            trial_eta *= 0.5
        else:
            if not math.isfinite(value):
                raise StepSizeError("joint training diverged; reduce step_lambda")
        history.append(value)
        if not math.isfinite(value):
            raise StepSizeError("joint training produced a non-finite loss")
    return LambdaModel(lam, diag_x, spec, w, loss, ridge, history)
