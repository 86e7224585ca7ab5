"""Codebook learning and image-level encoders (BoW, improved Fisher vector,
regional colour co-occurrence)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .descriptors import DescriptorSet

_LOG_2PI = np.log(2 * np.pi)


class ContractError(ValueError):
    """Inputs violate an encoder's dimensional or structural contract."""


@dataclass(frozen=True)
class Codebook:
    centers: np.ndarray  # (K, D)
    seed: int = 0
    inertia: float = 0.0
    history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("codebook needs a (K, D) center matrix with K >= 1")
        if not np.all(np.isfinite(c)):
            raise ValueError("codebook centers must be finite")
        object.__setattr__(self, "centers", c)

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def dimension(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, D)
    variances: np.ndarray  # (K, D)
    var_floor: float = 0.0
    history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        var = np.asarray(self.variances, dtype=np.float64)
        if mu.ndim != 2 or var.shape != mu.shape or w.shape != (mu.shape[0],):
            raise ValueError("inconsistent mixture parameter shapes")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be positive and sum to 1")
        if np.any(var <= 0):
            raise ValueError("variances must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    def component_log_densities(self, X: np.ndarray) -> np.ndarray:
        """(N, K) log(w_k) + log N(x | mu_k, diag var_k)."""
        X = np.asarray(X, dtype=np.float64)
        prec = 1.0 / self.variances
        quad = (X * X) @ prec.T - 2.0 * X @ (self.means * prec).T + np.sum(self.means ** 2 * prec, axis=1)
        log_norm = -0.5 * (self.dimension * _LOG_2PI + np.log(self.variances).sum(axis=1))
        return np.log(self.weights) + log_norm - 0.5 * quad

    def responsibilities(self, X: np.ndarray) -> tuple[np.ndarray, float]:
        logp = self.component_log_densities(X)
        lse = logsumexp(logp, axis=1)
        return np.exp(logp - lse[:, None]), float(lse.sum())

    def log_likelihood(self, X: np.ndarray) -> float:
        return self.responsibilities(X)[1]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(self.K, size=n, p=self.weights)
        return self.means[comp] + rng.standard_normal((n, self.dimension)) * np.sqrt(self.variances[comp])


@dataclass(frozen=True)
class EncodedVector:
    values: np.ndarray
    encoder_id: str
    normalization: str

    @property
    def dimension(self) -> int:
        return len(self.values)


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, DescriptorSet):
        features = features.vectors
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected an (M, D) feature matrix, got shape {X.shape}")
    return X


def nearest_centers(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Index of the nearest center per row (Euclidean, ties -> lowest index).

    Distances come from the fast ||x||^2 - 2 x.c + ||c||^2 expansion; rows
    whose best two candidates are within rounding distance are re-scored
    with exact differences so the result matches a brute-force scan.
    """
    X = np.asarray(X, dtype=np.float64)
    C = np.asarray(centers, dtype=np.float64)
    if len(X) == 0:
        return np.zeros(0, dtype=np.int64)
    xx = np.einsum("ij,ij->i", X, X)
    cc = np.einsum("ij,ij->i", C, C)
    d2 = xx[:, None] - 2.0 * X @ C.T + cc[None, :]
    best = np.argmin(d2, axis=1)
    if C.shape[0] == 1:
        return best
    part = np.partition(d2, 1, axis=1)
    slack = 1e-9 * (xx + cc.max()) + 1e-12
    ambiguous = np.flatnonzero(part[:, 1] - part[:, 0] <= slack)
    for start in range(0, len(ambiguous), 256):
        rows = ambiguous[start:start + 256]
        exact = ((X[rows, None, :] - C[None, :, :]) ** 2).sum(axis=2)
        best[rows] = np.argmin(exact, axis=1)
    return best


def _inertia(X, centers, labels) -> float:
    diff = X - centers[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _kmeans_pp(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    M = len(X)
    chosen = [int(rng.integers(M))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(M, p=d2 / total))
        else:
            # every point coincides with a center already; pick an unused row
            free = np.setdiff1d(np.arange(M), chosen)
            idx = int(rng.choice(free))
        chosen.append(idx)
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _update_centers(X, labels, centers):
    K, D = centers.shape
    counts = np.bincount(labels, minlength=K)
    sums = np.stack([np.bincount(labels, weights=X[:, d], minlength=K) for d in range(D)], axis=1)
    new = centers.copy()
    filled = counts > 0
    new[filled] = sums[filled] / counts[filled, None]
    empty = np.flatnonzero(~filled)
    if empty.size:
        # re-seed each empty cluster at the point farthest from its center
        dist = ((X - new[labels]) ** 2).sum(axis=1)
        for k in empty:
            far = int(np.argmax(dist))
            new[k] = X[far]
            dist[far] = -1.0
    return new


def kmeans_train(features, K: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-4) -> Codebook:
    """Lloyd's algorithm with k-means++ seeding.

    ``history`` holds the inertia after every accepted iteration; it never
    increases (a step that would raise it through rounding is rejected).
    """
    X = _as_matrix(features)
    M = len(X)
    if K < 1:
        raise ValueError("K must be >= 1")
    if M < K:
        raise ValueError(f"k-means needs at least K={K} points, got {M}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(X, K, rng)
    labels = nearest_centers(X, centers)
    inertia = _inertia(X, centers, labels)
    history = [inertia]
    for _ in range(max_iter):
        if inertia == 0.0:
            break
        new_centers = _update_centers(X, labels, centers)
        new_labels = nearest_centers(X, new_centers)
        new_inertia = _inertia(X, new_centers, new_labels)
        if new_inertia > inertia:
            break
        improvement = (inertia - new_inertia) / inertia
        centers, labels, inertia = new_centers, new_labels, new_inertia
        history.append(inertia)
        if improvement < tol:
            break
    return Codebook(centers, seed=seed, inertia=inertia, history=tuple(history))


def default_var_floor(X: np.ndarray) -> float:
    floor = 1e-6 * float(np.mean(X.var(axis=0)))
    return floor if floor > 0 else 1e-12


def _m_step(X, resp, var_floor):
    nk = np.maximum(resp.sum(axis=0), 10 * np.finfo(float).eps)
    weights = nk / nk.sum()
    means = (resp.T @ X) / nk[:, None]
    variances = np.empty_like(means)
    for k in range(len(nk)):
        diff = X - means[k]
        variances[k] = (resp[:, k] @ (diff * diff)) / nk[k]
    return weights, means, np.maximum(variances, var_floor)


def gmm_train(features, K: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-5,
              var_floor: float | None = None) -> GaussianMixture:
    """Diagonal-covariance EM initialised from k-means.

    ``history`` is the log-likelihood of every accepted parameter set.
    """
    X = _as_matrix(features)
    M = len(X)
    if M < K:
        raise ValueError(f"GMM needs at least K={K} points, got {M}")
    if var_floor is None:
        var_floor = default_var_floor(X)

    codebook = kmeans_train(X, K, seed=seed)
    labels = nearest_centers(X, codebook.centers)
    resp = np.zeros((M, K))
    resp[np.arange(M), labels] = 1.0
    gmm = GaussianMixture(*_m_step(X, resp, var_floor), var_floor=var_floor)

    resp, ll = gmm.responsibilities(X)
    history = [ll]
    for _ in range(max_iter):
        assert np.allclose(resp.sum(axis=1), 1.0)
        candidate = GaussianMixture(*_m_step(X, resp, var_floor), var_floor=var_floor)
        new_resp, new_ll = candidate.responsibilities(X)
        if new_ll < ll:
            break
        gain = new_ll - ll
        gmm, resp, ll = candidate, new_resp, new_ll
        history.append(ll)
        if gain < tol * abs(history[-2]):
            break
    return GaussianMixture(gmm.weights, gmm.means, gmm.variances, var_floor=var_floor,
                           history=tuple(history))


def _check_dim(features: DescriptorSet, dimension: int):
    if features.dimension != dimension:
        raise ContractError(f"feature dimension {features.dimension} != model dimension {dimension}")


def hellinger(counts: np.ndarray) -> np.ndarray:
    """L1 normalisation followed by an elementwise square root."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return np.zeros_like(counts)
    return np.sqrt(counts / total)


def bow_counts(features: DescriptorSet, codebook: Codebook) -> np.ndarray:
    _check_dim(features, codebook.dimension)
    words = nearest_centers(features.vectors, codebook.centers)
    return np.bincount(words, minlength=codebook.K)


def bow_encode(features: DescriptorSet, codebook: Codebook) -> EncodedVector:
    return EncodedVector(hellinger(bow_counts(features, codebook)), "bow", "l1+sqrt")


def fisher_gradients(features: DescriptorSet, gmm: GaussianMixture) -> np.ndarray:
    """Unnormalised (mean-gradient, variance-gradient) blocks, each (K, D)."""
    _check_dim(features, gmm.dimension)
    X = features.vectors.astype(np.float64)
    N = len(X)
    if N == 0:
        return np.zeros((2, gmm.K, gmm.dimension))
    gamma, _ = gmm.responsibilities(X)
    sigma = np.sqrt(gmm.variances)
    s0 = gamma.sum(axis=0)[:, None]
    s1 = gamma.T @ X
    s2 = gamma.T @ (X * X)
    mu = gmm.means
    g_mu = (s1 - mu * s0) / sigma
    g_var = (s2 - 2 * mu * s1 + mu * mu * s0) / gmm.variances - s0
    scale = 1.0 / (N * np.sqrt(gmm.weights))[:, None]
    return np.stack([g_mu * scale, g_var * scale])


def ifv_encode(features: DescriptorSet, gmm: GaussianMixture) -> EncodedVector:
    v = fisher_gradients(features, gmm).ravel()
    v = np.sign(v) * np.sqrt(np.abs(v))
    norm = np.linalg.norm(v)
    if norm > 0:
        v = v / norm
    return EncodedVector(v, "ifv", "signed-sqrt+l2")


def pair_index(a, b, K: int):
    """Triangular index of the unordered word pair (min, max)."""
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    return lo * K - lo * (lo - 1) // 2 + (hi - lo)


def rcc_counts(features: DescriptorSet, codebook: Codebook, cell_size: int = 32,
               radius: float = 16) -> tuple[np.ndarray, np.ndarray]:
    """Raw unary (K) and unordered pair (K(K+1)/2) counts."""
    if not features.has_positions:
        raise ContractError("regional co-occurrence needs feature positions")
    _check_dim(features, codebook.dimension)
    K = codebook.K
    words = nearest_centers(features.vectors, codebook.centers)
    unary = np.bincount(words, minlength=K)
    pairs = np.zeros(K * (K + 1) // 2, dtype=np.int64)
    if len(words) < 2:
        return unary, pairs
    pos = features.positions.astype(np.int64)
    cells = pos // cell_size
    order = np.lexsort((cells[:, 0], cells[:, 1]))
    keys = cells[order]
    breaks = np.flatnonzero(np.any(np.diff(keys, axis=0) != 0, axis=1)) + 1
    r2 = radius * radius
    for group in np.split(order, breaks):
        if len(group) < 2:
            continue
        p = pos[group]
        d2 = ((p[:, None, :] - p[None, :, :]) ** 2).sum(axis=2)
        i, j = np.nonzero(np.triu(d2 <= r2, k=1))
        w = words[group]
        pairs += np.bincount(pair_index(w[i], w[j], K), minlength=len(pairs))
    return unary, pairs


def rcc_encode(features: DescriptorSet, codebook: Codebook, cell_size: int = 32,
               radius: float = 16) -> EncodedVector:
    unary, pairs = rcc_counts(features, codebook, cell_size, radius)
    return EncodedVector(np.concatenate([hellinger(unary), hellinger(pairs)]), "rcc", "l1+sqrt per block")


def histogram_encode(histogram) -> EncodedVector:
    """Image-level histograms (LBP family): Hellinger map only."""
    return EncodedVector(hellinger(histogram), "lbp-hist", "l1+sqrt")
