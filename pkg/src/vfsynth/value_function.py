"""Linear-in-parameters terminal cost model V(x; theta) = theta . phi(x).

Basis families: isotropic Gaussian RBFs (centers from seeded k-means on
training states or a uniform grid), and polynomial monomials in the
setpoint-shifted state. All evaluation is pure; Basis is immutable once
fitted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import X_SP


class DegenerateWidthError(ValueError):
    """RBF width collapsed to zero (coincident centers)."""


@dataclass(frozen=True)
class BasisSpec:
    kind: str = "gaussian_rbf"  # gaussian_rbf | quadratic | polynomial
    d: int = 75
    center_strategy: str = "kmeans_on_training_states"  # or uniform_grid
    width_factor: float = 1.0
    seed: int = 0
    degree: int = 2  # polynomial kind only
    include_bias: bool = False

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("need at least one basis function")
        if self.width_factor <= 0:
            raise ValueError("width factor must be positive")
        if self.kind not in ("gaussian_rbf", "quadratic", "polynomial"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.center_strategy not in ("kmeans_on_training_states", "uniform_grid"):
            raise ValueError(f"unknown center strategy {self.center_strategy!r}")


@dataclass(frozen=True)
class Basis:
    kind: str
    centers: Optional[np.ndarray] = None  # (d, n), gaussian_rbf only
    widths: Optional[np.ndarray] = None  # (d,), gaussian_rbf only
    exponents: Optional[np.ndarray] = None  # (d, n), polynomial kinds
    x_sp: np.ndarray = field(default_factory=lambda: X_SP.copy())

    @property
    def size(self) -> int:
        if self.kind == "gaussian_rbf":
            return self.centers.shape[0]
        return self.exponents.shape[0]


def _kmeans(states: np.ndarray, k: int, seed: int, n_iters: int = 50) -> np.ndarray:
    """Seeded Lloyd iterations with a fixed iteration count.

    Empty clusters are re-seeded at the point farthest from its center,
    keeping the run deterministic.
    """
    rng = np.random.default_rng(seed)
    m = states.shape[0]
    centers = states[rng.choice(m, size=k, replace=False)].copy()
    for _ in range(n_iters):
        d2 = np.sum((states[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        mind2 = d2[np.arange(m), labels]
        for j in range(k):
            mask = labels == j
            if np.any(mask):
                centers[j] = states[mask].mean(axis=0)
            else:
                far = int(np.argmax(mind2))
                centers[j] = states[far]
                mind2[far] = 0.0
    return centers


def _grid_centers(d: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    n = lo.size
    g = round(d ** (1.0 / n))
    if g**n != d:
        raise ValueError(f"uniform_grid needs d to be a perfect {n}-th power, got {d}")
    axes = [lo[i] + (hi[i] - lo[i]) * (np.arange(g) + 0.5) / g for i in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _monomial_exponents(n: int, max_degree: int, include_bias: bool) -> np.ndarray:
    rows = []
    for total in range(0 if include_bias else 1, max_degree + 1):
        for combo in itertools.product(range(total + 1), repeat=n):
            if sum(combo) == total:
                rows.append(combo)
    return np.array(rows, dtype=int)


def fit_basis(spec: BasisSpec, states=None, box=None, x_sp=None) -> Basis:
    """Construct a basis from the spec.

    gaussian_rbf: centers from k-means over `states` (or a uniform grid over
    `box`); every width is width_factor times the median nearest-other-center
    distance. Deterministic given (spec, states).
    """
    x_sp = X_SP.copy() if x_sp is None else np.asarray(x_sp, dtype=float)
    if spec.kind in ("quadratic", "polynomial"):
        degree = 2 if spec.kind == "quadratic" else spec.degree
        exponents = _monomial_exponents(x_sp.size, degree, spec.include_bias)
        return Basis(kind="polynomial", exponents=exponents, x_sp=x_sp)

    if spec.center_strategy == "uniform_grid":
        if box is None:
            raise ValueError("uniform_grid strategy requires a sampling box")
        centers = _grid_centers(spec.d, np.asarray(box[0], float), np.asarray(box[1], float))
    else:
        if states is None:
            raise ValueError("kmeans strategy requires training states")
        states = np.asarray(states, dtype=float)
        if states.shape[0] < spec.d:
            raise ValueError(
                f"kmeans needs at least d={spec.d} states, got {states.shape[0]}"
            )
        centers = _kmeans(states, spec.d, spec.seed)

    diff = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    np.fill_diagonal(dist, np.inf)
    nearest = dist.min(axis=1)
    sigma = spec.width_factor * float(np.median(nearest))
    if not (np.isfinite(sigma) and sigma > 0):
        raise DegenerateWidthError("zero nearest-center distance; centers coincide")
    widths = np.full(centers.shape[0], sigma)
    return Basis(kind="gaussian_rbf", centers=centers, widths=widths, x_sp=x_sp)


def features(basis: Basis, x) -> np.ndarray:
    """Feature vector phi(x), shape (d,)."""
    return features_matrix(basis, np.asarray(x, dtype=float)[None, :])[0]


def features_matrix(basis: Basis, X) -> np.ndarray:
    """Feature matrix Phi, shape (M, d), rows phi(x_i)."""
    X = np.asarray(X, dtype=float)
    if basis.kind == "gaussian_rbf":
        diff = X[:, None, :] - basis.centers[None, :, :]
        d2 = np.sum(diff * diff, axis=2)
        return np.exp(-d2 / (2.0 * basis.widths[None, :] ** 2))
    Z = X - basis.x_sp
    # product over coordinates of z_i ** e_i per exponent row
    return np.prod(Z[:, None, :] ** basis.exponents[None, :, :], axis=2)


def evaluate(basis: Basis, theta, x) -> float:
    theta = np.asarray(theta, dtype=float)
    phi = features(basis, x)
    if theta.shape != phi.shape:
        raise ValueError("theta dimension does not match basis size")
    return float(theta @ phi)


def evaluate_batch(basis: Basis, theta, X) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return features_matrix(basis, X) @ theta


def gradient(basis: Basis, theta, x) -> np.ndarray:
    """State gradient of V(x; theta)."""
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if basis.kind == "gaussian_rbf":
        diff = x[None, :] - basis.centers  # (d, n)
        phi = np.exp(-np.sum(diff * diff, axis=1) / (2.0 * basis.widths**2))
        if theta.shape != phi.shape:
            raise ValueError("theta dimension does not match basis size")
        return -((theta * phi / basis.widths**2)[:, None] * diff).sum(axis=0)
    z = x - basis.x_sp
    grad = np.zeros_like(z)
    for coef, expo in zip(theta, basis.exponents):
        for i in range(z.size):
            if expo[i] == 0:
                continue
            term = coef * expo[i] * z[i] ** (expo[i] - 1)
            for j in range(z.size):
                if j != i:
                    term *= z[j] ** expo[j]
            grad[i] += term
    return grad


def descent_feature(basis: Basis, x, x_plus) -> np.ndarray:
    """phi(x_plus) - phi(x): the row that makes the descent constraint linear
    in theta."""
    return features(basis, x_plus) - features(basis, x)
