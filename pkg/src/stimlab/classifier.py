"""One-vs-all linear SVM trained by SMO on the hinge-loss dual."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_TAU = 1e-12
_GRAM_LIMIT = 6000


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    tol: float = 1e-4
    max_epochs: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass(frozen=True)
class BinaryLinearModel:
    weights: np.ndarray
    bias: float
    C: float
    degenerate: bool = False
    dual_history: tuple = field(default=(), compare=False)
    kkt_gap: float = 0.0

    def decision(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision(X) >= 0, 1, -1)


def primal_objective(w, b, X, y, C) -> float:
    margins = y * (np.asarray(X, dtype=np.float64) @ w + b)
    return 0.5 * float(w @ w) + C * float(np.maximum(0.0, 1.0 - margins).sum())


class _Kernel:
    """Linear-kernel columns; the full Gram matrix is kept when it fits."""

    def __init__(self, X):
        self.X = X
        self.gram = X @ X.T if len(X) <= _GRAM_LIMIT else None
        self.diag = np.einsum("ij,ij->i", X, X)

    def column(self, i):
        if self.gram is not None:
            return self.gram[:, i]
        return self.X @ self.X[i]


def _select_pair(alpha, G, y, C, kernel):
    """Second-order working-set selection; returns (i, j, gap)."""
    r = -y * G
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    if not up.any() or not low.any():
        return -1, -1, 0.0
    r_up = np.where(up, r, -np.inf)
    i = int(np.argmax(r_up))
    gmax = r_up[i]
    gmin = np.min(np.where(low, r, np.inf))
    gap = gmax - gmin
    col_i = kernel.column(i)
    b = gmax - r
    cand = low & (b > 0)
    if not cand.any():
        return -1, -1, gap
    a = kernel.diag[i] + kernel.diag - 2.0 * col_i
    a = np.where(a > _TAU, a, _TAU)
    score = np.where(cand, -(b * b) / a, np.inf)
    j = int(np.argmin(score))
    return i, j, gap


def _bias(alpha, G, y, C):
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return -float(yG[free].mean())
    at_upper = alpha >= C
    ub_set = (at_upper & (y < 0)) | (~at_upper & (y > 0))
    lb_set = ~ub_set
    ub = yG[ub_set].min() if ub_set.any() else np.inf
    lb = yG[lb_set].max() if lb_set.any() else -np.inf
    if not np.isfinite(ub) or not np.isfinite(lb):
        return -float(ub if np.isfinite(ub) else lb)
    return -float((ub + lb) / 2.0)


def train_binary(X, y, config: TrainConfig = TrainConfig()) -> BinaryLinearModel:
    """Minimise 1/2 |w|^2 + C sum hinge(y (w.x + b)) with an unregularised bias.

    Stops when the maximal KKT violation of the dual falls below
    ``config.tol``. ``dual_history`` records the dual objective at every
    epoch boundary (N pair updates).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) < 1 or len(y) != len(X):
        raise ValueError("X must be (N, D) with N >= 1 and one label per row")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("binary labels must be -1 or +1")
    N, D = X.shape
    if np.all(y == y[0]):
        return BinaryLinearModel(np.zeros(D), float(y[0]), config.C, degenerate=True)

    C = config.C
    kernel = _Kernel(X)
    alpha = np.zeros(N)
    G = -np.ones(N)
    history = [0.0]
    gap = np.inf
    max_iter = config.max_epochs * N
    for it in range(1, max_iter + 1):
        i, j, gap = _select_pair(alpha, G, y, C, kernel)
        if i < 0 or gap <= config.tol:
            break
        col_i = kernel.column(i)
        col_j = kernel.column(j)
        a = max(kernel.diag[i] + kernel.diag[j] - 2.0 * col_i[j], _TAU)
        b = -y[i] * G[i] + y[j] * G[j]
        room_i = C - alpha[i] if y[i] > 0 else alpha[i]
        room_j = alpha[j] if y[j] > 0 else C - alpha[j]
        step = min(b / a, room_i, room_j)
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        # snap to the box so bound membership tests are exact
        alpha[i] = min(max(alpha[i], 0.0), C)
        alpha[j] = min(max(alpha[j], 0.0), C)
        G += step * y * (col_i - col_j)
        if it % N == 0:
            history.append(0.5 * float(alpha @ (G - 1.0)))
    history.append(0.5 * float(alpha @ (G - 1.0)))

    w = X.T @ (alpha * y)
    return BinaryLinearModel(w, _bias(alpha, G, y, C), C, dual_history=tuple(history),
                             kkt_gap=float(gap))


@dataclass(frozen=True)
class MultiClassModel:
    classes: tuple
    models: tuple

    def __post_init__(self):
        if len(self.classes) != len(self.models):
            raise ValueError("one binary model per class is required")
        dims = {len(m.weights) for m in self.models}
        if len(dims) != 1:
            raise ValueError("all binary models must share a dimension")

    @property
    def dimension(self) -> int:
        return len(self.models[0].weights)

    @property
    def weight_matrix(self) -> np.ndarray:
        return np.stack([m.weights for m in self.models])

    @property
    def biases(self) -> np.ndarray:
        return np.array([m.bias for m in self.models])

    def scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dimension:
            raise ValueError(f"feature dimension {X.shape[1]} != model dimension {self.dimension}")
        return X @ self.weight_matrix.T + self.biases

    def predict_batch(self, X) -> list:
        # argmax returns the first maximum: ties go to the earlier sorted class
        return [self.classes[k] for k in np.argmax(self.scores(X), axis=1)]


def train_ova(X, y, config: TrainConfig = TrainConfig()) -> MultiClassModel:
    y = list(y)
    classes = tuple(sorted(set(y)))
    if len(classes) < 2:
        raise ValueError("one-vs-all training needs at least two classes")
    labels = np.array([classes.index(v) for v in y])
    models = tuple(train_binary(X, np.where(labels == k, 1.0, -1.0), config)
                   for k in range(len(classes)))
    return MultiClassModel(classes, models)


def predict(model: MultiClassModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("predict takes a single feature vector")
    return model.predict_batch(x[None, :])[0]
