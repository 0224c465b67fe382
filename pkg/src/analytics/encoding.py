"""
Encoding
========
PCA (with optional whitening), k-means codebooks, soft-assignment VLAD
and the power + L2 normalization chain.

Fitted models are immutable; every encoding function is pure.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from src.utils import InvalidArgumentError, NumericalError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence[Sequence[float]]]


# ============================================================
# PCA
# ============================================================

@dataclass(frozen=True, eq=False)
class PcaModel:
    """
    Fitted linear projection.

    Attributes:
        mean: Column mean of the training samples (D_in,)
        components: Orthonormal rows (D_out, D_in)
        eigenvalues: Covariance eigenvalues, non-increasing (D_out,)
        whiten: Divide coordinate i by sqrt(eigenvalues[i] + epsilon)
        epsilon: Whitening regularizer
    """

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    whiten: bool = False
    epsilon: float = 1e-9

    @property
    def d_in(self) -> int:
        return int(self.components.shape[1])

    @property
    def d_out(self) -> int:
        return int(self.components.shape[0])

    @property
    def effective_dim(self) -> int:
        return self.d_out

    def _scale(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues + self.epsilon)

    def transform(self, v: ArrayLike) -> np.ndarray:
        """
        Project a vector (D_in,) or a matrix (n, D_in).

        Returns:
            (D_out,) or (n, D_out) array
        """
        arr = np.asarray(v, dtype=np.float64)
        single = arr.ndim == 1
        X = np.atleast_2d(arr)
        if X.ndim != 2 or X.shape[1] != self.d_in:
            raise InvalidArgumentError(
                f"PCA input length {arr.shape[-1] if arr.ndim else 0} != model input dim {self.d_in}")

        Y = (X - self.mean) @ self.components.T
        if self.whiten:
            Y = Y / self._scale()
        return Y[0] if single else Y

    def reconstruct(self, y: ArrayLike) -> np.ndarray:
        """Back-project coordinates into the input space."""
        Y = np.asarray(y, dtype=np.float64)
        if self.whiten:
            Y = Y * self._scale()
        return Y @ self.components + self.mean


def pca_transform(model: PcaModel, v: ArrayLike) -> np.ndarray:
    """Functional alias of PcaModel.transform."""
    return model.transform(v)


def pca_fit(samples: ArrayLike, d_out: int, whiten: bool = False, epsilon: float = 1e-9) -> PcaModel:
    """
    Fit PCA on the rows of samples.

    Components are the top eigenvectors of the sample covariance (divisor
    N - 1), each sign-fixed so its largest-magnitude entry is positive.
    d_out above min(N - 1, D_in) is clamped, with a warning.

    Args:
        samples: (N, D_in) matrix, N >= 2
        d_out: Requested output dimension
        whiten: Whitening flag stored in the model
        epsilon: Whitening regularizer

    Returns:
        Fitted PcaModel
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidArgumentError(f"PCA samples must be a matrix, got shape {X.shape}")
    n, d_in = X.shape
    if n < 2:
        raise InvalidArgumentError(f"PCA needs at least 2 samples, got {n}")
    if d_out < 1:
        raise InvalidArgumentError(f"PCA output dim must be >= 1, got {d_out}")
    if not np.all(np.isfinite(X)):
        raise NumericalError("PCA samples contain non-finite values")

    bound = min(n - 1, d_in)
    if d_out > bound:
        logger.warning(f"PCA output dim {d_out} clamped to {bound} (N={n}, D={d_in})")
        d_out = bound

    mean = X.mean(axis=0)
    centered = X - mean

    # Economy SVD of the centered data: right singular vectors are the
    # covariance eigenvectors, eigenvalues are s**2 / (N - 1)
    try:
        _, s, vt = linalg.svd(centered, full_matrices=False)
    except linalg.LinAlgError as e:
        raise NumericalError(f"PCA SVD did not converge: {e}") from e
    components = vt[:d_out].copy()
    eigenvalues = np.maximum(s[:d_out] ** 2 / (n - 1), 0.0)

    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(d_out), pivots])
    signs[signs == 0] = 1.0
    components *= signs[:, None]

    return PcaModel(mean=mean, components=components, eigenvalues=eigenvalues,
                    whiten=bool(whiten), epsilon=float(epsilon))


# ============================================================
# k-means codebooks
# ============================================================

@dataclass(frozen=True, eq=False)
class Codebook:
    """
    k-means centers.

    inertia_history holds the inertia after every assignment step of the
    fit; it is diagnostic and not persisted.
    """

    centers: np.ndarray
    inertia_history: Tuple[float, ...] = ()

    @property
    def k(self) -> int:
        return int(self.centers.shape[0])

    @property
    def dim(self) -> int:
        return int(self.centers.shape[1])

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1] if self.inertia_history else float("nan")

    def assign(self, samples: ArrayLike) -> np.ndarray:
        """Index of the nearest center per row (ties to the lower index)."""
        X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        return cdist(X, self.centers, "sqeuclidean").argmin(axis=1)


def _kmeans_plus_plus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    closest = cdist(X, X[chosen], "sqeuclidean")[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        closest = np.minimum(closest, cdist(X, X[idx:idx + 1], "sqeuclidean")[:, 0])
    return X[chosen].copy()


def _update_centers(X: np.ndarray, labels: np.ndarray, point_d2: np.ndarray, k: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros((k, X.shape[1]))
    np.add.at(sums, labels, X)

    centers = np.empty_like(sums)
    filled = counts > 0
    centers[filled] = sums[filled] / counts[filled, None]

    # Empty clusters take the point farthest from its own center
    spare = point_d2.copy()
    for j in np.flatnonzero(~filled):
        far = int(np.argmax(spare))
        centers[j] = X[far]
        spare[far] = -1.0
        logger.debug(f"k-means: empty cluster {j} re-seeded at sample {far}")
    return centers


def kmeans_fit(samples: ArrayLike, k: int, seed: int, max_iters: int = 100, tol: float = 1e-6) -> Codebook:
    """
    Lloyd's k-means from k-means++ seeding.

    Stops when the relative inertia improvement drops below tol or after
    max_iters assignment steps. Deterministic given (sample order, seed).

    Args:
        samples: (N, D) matrix with N >= k
        k: Number of centers
        seed: Seed for numpy's default generator (PCG64)
        max_iters: Iteration cap
        tol: Relative improvement threshold

    Returns:
        Codebook with per-iteration inertia history
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidArgumentError(f"k-means samples must be a matrix, got shape {X.shape}")
    n = X.shape[0]
    if k < 1:
        raise InvalidArgumentError(f"codebook: k must be >= 1, got {k}")
    if n < k:
        raise InvalidArgumentError(f"codebook: N < k ({n} < {k})")
    if not np.all(np.isfinite(X)):
        raise NumericalError("k-means samples contain non-finite values")

    rng = np.random.default_rng(seed)
    centers = _kmeans_plus_plus(X, k, rng)

    history: List[float] = []
    for iteration in range(max(1, max_iters)):
        d2 = cdist(X, centers, "sqeuclidean")
        labels = d2.argmin(axis=1)
        point_d2 = d2[np.arange(n), labels]
        inertia = float(point_d2.sum())

        previous = history[-1] if history else None
        history.append(inertia)
        if previous is not None and (previous == 0 or (previous - inertia) / previous < tol):
            logger.debug(f"k-means converged after {iteration + 1} iterations, inertia {inertia:.6g}")
            break

        centers = _update_centers(X, labels, point_d2, k)

    return Codebook(centers=centers, inertia_history=tuple(history))


# ============================================================
# Soft-assignment VLAD
# ============================================================

@dataclass(frozen=True)
class VladConfig:
    """r nearest centers, Gaussian kernel std sigma, power-normalization exponent."""

    r: int = 5
    sigma: float = 10.0
    power_alpha: float = 0.5

    def __post_init__(self):
        if self.r < 1:
            raise InvalidArgumentError(f"vlad r must be >= 1, got {self.r}")
        if not self.sigma > 0:
            raise InvalidArgumentError(f"vlad sigma must be > 0, got {self.sigma}")
        if not 0 < self.power_alpha <= 1:
            raise InvalidArgumentError(f"power_alpha must be in (0, 1], got {self.power_alpha}")

    def to_dict(self) -> Dict:
        return {"r": self.r, "sigma": self.sigma, "power_alpha": self.power_alpha}


def vlad_dim(k: int, d: int) -> int:
    """Length of a VLAD vector: one d-block per center."""
    return int(k) * int(d)


def _as_patches(patches: ArrayLike, dim: int) -> np.ndarray:
    P = np.asarray(patches, dtype=np.float64)
    if P.ndim == 1:
        P = P[None, :]
    if P.ndim != 2 or P.shape[0] == 0:
        raise InvalidArgumentError("VLAD needs a non-empty list of descriptors")
    if P.shape[1] != dim:
        raise InvalidArgumentError(f"descriptor dim {P.shape[1]} != codebook dim {dim}")
    return P


def _soft_weights(cfg: VladConfig, book: Codebook, P: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if cfg.r > book.k:
        raise InvalidArgumentError(f"vlad r={cfg.r} exceeds codebook size k={book.k}")
    d2 = cdist(P, book.centers, "sqeuclidean")

    # stable sort: ties go to the lower center index
    nearest = np.argsort(d2, axis=1, kind="stable")[:, :cfg.r]
    raw = np.exp(-np.take_along_axis(d2, nearest, axis=1) / (2.0 * cfg.sigma ** 2))
    sums = raw.sum(axis=1, keepdims=True)

    underflow = sums[:, 0] == 0
    if underflow.any():
        logger.debug(f"soft assignment: {int(underflow.sum())} descriptors underflowed, using uniform weights")
        raw[underflow] = 1.0
        sums[underflow] = cfg.r
    return nearest, raw / sums


def soft_assign(cfg: VladConfig, book: Codebook, p: ArrayLike) -> List[Tuple[int, float]]:
    """
    Normalized Gaussian-kernel weights over the r nearest centers.

    Args:
        cfg: VLAD configuration
        book: Codebook
        p: One descriptor

    Returns:
        r pairs (center_index, weight), nearest first, weights summing to 1
    """
    P = _as_patches(p, book.dim)
    if P.shape[0] != 1:
        raise InvalidArgumentError("soft_assign takes a single descriptor")
    nearest, weights = _soft_weights(cfg, book, P)
    return [(int(i), float(w)) for i, w in zip(nearest[0], weights[0])]


def vlad_encode(cfg: VladConfig, book: Codebook, patches: ArrayLike) -> np.ndarray:
    """
    Soft-assignment VLAD, unnormalized.

    Cell i accumulates w_ji * (p_j - c_i) over the patches having c_i among
    their r nearest centers, in patch-list order.

    Args:
        cfg: VLAD configuration
        book: Codebook (k, D)
        patches: (n, D) descriptors, n >= 1

    Returns:
        Vector of length k * D
    """
    P = _as_patches(patches, book.dim)
    nearest, weights = _soft_weights(cfg, book, P)

    cells = nearest.ravel()
    owners = np.repeat(np.arange(P.shape[0]), cfg.r)
    residuals = (P[owners] - book.centers[cells]) * weights.ravel()[:, None]

    vlad = np.zeros_like(book.centers)
    np.add.at(vlad, cells, residuals)
    return vlad.ravel()


def hard_assign_vlad(book: Codebook, patches: ArrayLike) -> np.ndarray:
    """Classic VLAD: each descriptor adds its residual to its nearest center."""
    P = _as_patches(patches, book.dim)
    cells = book.assign(P)
    vlad = np.zeros_like(book.centers)
    np.add.at(vlad, cells, P - book.centers[cells])
    return vlad.ravel()


def normalize_chain(v: ArrayLike, alpha: float) -> np.ndarray:
    """
    Signed power normalization followed by L2 normalization.

    The zero vector maps to itself.
    """
    x = np.asarray(v, dtype=np.float64)
    x = np.sign(x) * np.abs(x) ** alpha
    norm = np.linalg.norm(x)
    return x if norm == 0 else x / norm


def l2_normalize(v: ArrayLike) -> np.ndarray:
    """Unit L2 norm; zero stays zero."""
    x = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(x)
    return x if norm == 0 else x / norm


def l2_normalize_rows(X: ArrayLike) -> np.ndarray:
    """Row-wise unit L2 norm; zero rows stay zero."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return X / norms
