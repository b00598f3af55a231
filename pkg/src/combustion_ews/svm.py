"""Soft-margin binary SVM with an RBF kernel, trained by sequential minimal
optimization (pairwise dual coordinate ascent with second-order working-set
selection) under per-class box constraints.

The kernel convention is ``k(x, y) = exp(-gamma * ||x - y||^2)``. Trained
models persist to a versioned JSON schema with hex-encoded 64-bit floats, so
a save/load round trip reproduces decision values bit-exactly."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .features import FeatureScaler

__all__ = [
    "SvmParams",
    "SvmModel",
    "TrainingSet",
    "SupportVectorClassifier",
    "ConvergenceError",
    "ModelFormatError",
    "balanced_class_weights",
    "squared_distances",
    "rbf_kernel",
    "dual_objective",
    "save_model",
    "load_model",
]

MODEL_SCHEMA = "combustion-ews.svm-model"
MODEL_VERSION = 1


class ConvergenceError(RuntimeError):
    """SMO hit the iteration cap before reaching the KKT tolerance."""

    def __init__(self, violation: float, n_iter: int):
        super().__init__(
            f"SMO did not converge after {n_iter} pair updates; "
            f"remaining KKT violation {violation:.3e}"
        )
        self.violation = violation
        self.n_iter = n_iter


class ModelFormatError(ValueError):
    """A model file is truncated, malformed, or has the wrong schema version."""


@dataclass(frozen=True)
class SvmParams:
    c: float
    gamma: float
    class_weights: dict | None = None  # label -> positive weight; None = unweighted

    def __post_init__(self):
        if not (self.c > 0 and np.isfinite(self.c)):
            raise ValueError("c must be finite and positive")
        if not (self.gamma > 0 and np.isfinite(self.gamma)):
            raise ValueError("gamma must be finite and positive")
        if self.class_weights is not None:
            if any(w <= 0 for w in self.class_weights.values()):
                raise ValueError("class weights must be positive")


@dataclass(frozen=True)
class TrainingSet:
    x: np.ndarray  # n x d standardized features
    y: np.ndarray  # n labels in {-1, +1}

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 2 or len(x) != len(y):
            raise ValueError("x must be n x d with labels aligned")
        if not set(np.unique(y)) <= {-1, 1}:
            raise ValueError("labels must be -1 or +1")
        if len(set(np.unique(y))) < 2:
            raise ValueError("both classes must be present")


def balanced_class_weights(y) -> dict:
    """Weights inversely proportional to class frequencies, mean weight ~1:
    w_class = n / (2 * n_class)."""
    y = np.asarray(y)
    n = len(y)
    return {int(lbl): n / (2.0 * np.sum(y == lbl)) for lbl in (-1, 1)}


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d2 = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    return np.maximum(d2, 0.0)


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * squared_distances(a, b))


def dual_objective(alpha: np.ndarray, y: np.ndarray, kernel: np.ndarray) -> float:
    """Value of the dual maximization objective sum(a) - 1/2 a'Qa."""
    nu = alpha * y
    return float(alpha.sum() - 0.5 * nu @ (kernel @ nu))


def _smo(kernel, y, c_box, tol, max_iter):
    """Core SMO loop. Returns (alpha, bias, n_iter, final_violation)."""
    n = len(y)
    yf = y.astype(np.float64)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - e'a
    diag = np.diag(kernel).copy()
    eps_a = 1e-12

    pos = yf > 0
    n_iter = 0
    while True:
        f = -yf * grad  # per-point bias candidate y_i - s_i
        up = np.where(pos, alpha < c_box - eps_a, alpha > eps_a)
        low = np.where(pos, alpha > eps_a, alpha < c_box - eps_a)
        f_up = np.where(up, f, -np.inf)
        f_low = np.where(low, f, np.inf)
        i = int(np.argmax(f_up))
        m = f_up[i]
        big_m = float(np.min(f_low))
        violation = m - big_m
        if violation < tol:
            break
        if n_iter >= max_iter:
            raise ConvergenceError(violation, n_iter)

        k_i = kernel[i]
        b_vec = m - f
        a_vec = diag[i] + diag - 2.0 * yf[i] * yf * k_i
        np.maximum(a_vec, 1e-12, out=a_vec)
        gain = np.where(low & (f < m), (b_vec * b_vec) / a_vec, -np.inf)
        j = int(np.argmax(gain))

        # maximal unconstrained step along (d alpha_i, d alpha_j) = (y_i t, -y_j t)
        t = b_vec[j] / a_vec[j]
        t = min(t, c_box[i] - alpha[i] if pos[i] else alpha[i])
        t = min(t, alpha[j] if pos[j] else c_box[j] - alpha[j])

        d_ai = yf[i] * t
        d_aj = -yf[j] * t
        alpha[i] = min(max(alpha[i] + d_ai, 0.0), c_box[i])
        alpha[j] = min(max(alpha[j] + d_aj, 0.0), c_box[j])
        grad += (d_ai * yf[i]) * (yf * k_i) + (d_aj * yf[j]) * (yf * kernel[j])
        n_iter += 1

    # bias from free support vectors when available, else the KKT midpoint
    free = (alpha > eps_a) & (alpha < c_box - eps_a)
    if free.any():
        bias = float(np.mean(f[free]))
    else:
        bias = float((m + big_m) / 2.0)
    return alpha, bias, n_iter, float(violation)


@dataclass(frozen=True)
class SvmModel:
    """Trained classifier: support vectors, dual coefficients nu_i = alpha_i
    * y_i, bias, kernel parameters and the feature scaler used upstream.
    ``decision_function`` expects inputs already standardized with that
    scaler."""

    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    params: SvmParams
    scaler: FeatureScaler | None = None

    def decision_function(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.support_vectors.shape[1]:
            raise ValueError(
                f"feature dimension mismatch: got {x.shape[1]}, "
                f"model has {self.support_vectors.shape[1]}"
            )
        k = rbf_kernel(x, self.support_vectors, self.params.gamma)
        return k @ self.dual_coefs + self.bias

    def predict(self, x) -> np.ndarray:
        return np.where(self.decision_function(x) >= 0, 1, -1)


class SupportVectorClassifier(BaseEstimator, ClassifierMixin):
    """Sklearn-style front end for the SMO trainer.

    ``class_weight`` is either ``"balanced"`` (inversely proportional to
    class frequencies), a dict ``{label: weight}``, or ``None``.
    """

    def __init__(self, c=1.0, gamma=1.0, class_weight="balanced", tol=1e-3,
                 max_iter=10_000_000):
        self.c = c
        self.gamma = gamma
        self.class_weight = class_weight
        self.tol = tol
        self.max_iter = max_iter

    def _resolve_weights(self, y) -> dict:
        if self.class_weight == "balanced":
            return balanced_class_weights(y)
        if self.class_weight is None:
            return {-1: 1.0, 1: 1.0}
        return {int(k): float(v) for k, v in self.class_weight.items()}

    def fit(self, X, y, squared_dists=None):
        data = TrainingSet(X, y)
        weights = self._resolve_weights(data.y)
        if squared_dists is None:
            squared_dists = squared_distances(data.x, data.x)
        kernel = np.exp(-self.gamma * squared_dists)
        c_box = np.array([self.c * weights[int(lbl)] for lbl in data.y])
        alpha, bias, n_iter, violation = _smo(
            kernel, data.y, c_box, self.tol, self.max_iter
        )
        sv = alpha > 0
        self.support_vectors_ = data.x[sv].copy()
        self.dual_coef_ = (alpha * data.y)[sv]
        self.alpha_ = alpha  # full-length multipliers, zeros included
        self.intercept_ = bias
        self.n_iter_ = n_iter
        self.kkt_violation_ = violation
        self.objective_ = dual_objective(alpha, data.y, kernel)
        self.class_weights_ = weights
        return self

    def to_model(self, scaler: FeatureScaler | None = None) -> SvmModel:
        params = SvmParams(c=self.c, gamma=self.gamma, class_weights=self.class_weights_)
        return SvmModel(
            support_vectors=self.support_vectors_,
            dual_coefs=self.dual_coef_,
            bias=self.intercept_,
            params=params,
            scaler=scaler,
        )

    def decision_function(self, X) -> np.ndarray:
        k = rbf_kernel(np.atleast_2d(np.asarray(X, dtype=np.float64)),
                       self.support_vectors_, self.gamma)
        return k @ self.dual_coef_ + self.intercept_

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0, 1, -1)


def _hex(v: float) -> str:
    return float(v).hex()


def _unhex(s) -> float:
    return float.fromhex(s)


def save_model(model: SvmModel, path) -> None:
    doc = {
        "schema": MODEL_SCHEMA,
        "version": MODEL_VERSION,
        "params": {
            "c": _hex(model.params.c),
            "gamma": _hex(model.params.gamma),
            "class_weights": (
                {str(k): _hex(v) for k, v in model.params.class_weights.items()}
                if model.params.class_weights is not None
                else None
            ),
        },
        "scaler": (
            {
                "means": [_hex(v) for v in model.scaler.means_],
                "stds": [_hex(v) for v in model.scaler.stds_],
            }
            if model.scaler is not None
            else None
        ),
        "bias": _hex(model.bias),
        "dual_coefs": [_hex(v) for v in model.dual_coefs],
        "support_vectors": [[_hex(v) for v in row] for row in model.support_vectors],
    }
    Path(path).write_text(json.dumps(doc))


def load_model(path) -> SvmModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: not a valid model file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != MODEL_SCHEMA:
        raise ModelFormatError(f"{path}: unknown schema {doc.get('schema')!r}")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(
            f"{path}: schema version {doc.get('version')!r} not supported "
            f"(expected {MODEL_VERSION})"
        )
    try:
        weights = doc["params"]["class_weights"]
        params = SvmParams(
            c=_unhex(doc["params"]["c"]),
            gamma=_unhex(doc["params"]["gamma"]),
            class_weights=(
                {int(k): _unhex(v) for k, v in weights.items()} if weights else None
            ),
        )
        scaler = None
        if doc["scaler"] is not None:
            scaler = FeatureScaler()
            scaler.means_ = np.array([_unhex(v) for v in doc["scaler"]["means"]])
            scaler.stds_ = np.array([_unhex(v) for v in doc["scaler"]["stds"]])
        support_vectors = np.array(
            [[_unhex(v) for v in row] for row in doc["support_vectors"]]
        )
        dual_coefs = np.array([_unhex(v) for v in doc["dual_coefs"]])
        bias = _unhex(doc["bias"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model document: {exc}") from exc
    if len(support_vectors) == 0:
        raise ModelFormatError(f"{path}: model has no support vectors")
    return SvmModel(support_vectors, dual_coefs, bias, params, scaler)
