"""Kernel ridge regression over arbitrary feature vectors.

Training pairs (phi_n, p_n) define the Gram matrix K with entries
kappa(phi_n, phi_n'); the ridge coefficients solve the regularized
least-squares problem

    min_alpha (1/N) ||p - K alpha||^2 + lambda alpha^T K alpha

in closed form, alpha = (K + lambda N I)^-1 p, and predictions follow the
kernel expansion d(phi) = sum_n alpha_n kappa(phi, phi_n).
"""

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .errors import SolverError
from .reduction import ReducedBasis, project


@dataclass(frozen=True)
class GaussianKernel:
    """Gaussian radial basis function exp(-||phi - phi'||^2 / (2 sigma^2))."""

    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("kernel bandwidth sigma must be > 0")

    def __call__(self, cols_a, cols_b):
        """Pairwise kernel values for stacked feature columns: (na, nb)."""
        a = np.atleast_2d(np.asarray(cols_a, dtype=float))
        b = np.atleast_2d(np.asarray(cols_b, dtype=float))
        sq = cdist(a.T, b.T, "sqeuclidean")
        return np.exp(-sq / (2.0 * self.sigma**2))


def gram_matrix(features, kernel):
    """Symmetric positive semidefinite N x N kernel matrix (unit diagonal)."""
    features = np.asarray(features, dtype=float)
    if not np.all(np.isfinite(features)):
        raise ValueError("features must be finite")
    gram = kernel(features, features)
    gram = 0.5 * (gram + gram.T)
    np.fill_diagonal(gram, 1.0)
    return gram


@dataclass(frozen=True)
class FittedMap:
    """Immutable fitted power map.

    features    -- (M, N) stored training feature columns (reduced features
                   when ``basis`` is set)
    alpha       -- (N,) ridge coefficients
    target_mean -- offset added back to the kernel expansion (0 unless the
                   fit centered its targets)
    basis       -- optional ReducedBasis applied to raw query features
    """

    kernel: GaussianKernel
    lam: float
    features: np.ndarray
    alpha: np.ndarray
    target_mean: float = 0.0
    basis: ReducedBasis = None


def fit(features, targets, kernel, lam, center_targets=False):
    """Closed-form kernel ridge regression fit.

    ``lam = 0`` is allowed only when the Gram matrix is numerically
    nonsingular (pure interpolation); otherwise a SolverError advises
    regularizing.
    """
    features = np.array(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if features.ndim != 2 or targets.ndim != 1 or features.shape[1] != targets.shape[0]:
        raise ValueError("features must be (M, N) with N matching len(targets)")
    if not (np.all(np.isfinite(features)) and np.all(np.isfinite(targets))):
        raise ValueError("training data must be finite (complete features only)")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    n = targets.shape[0]
    mean = float(np.mean(targets)) if center_targets else 0.0
    rhs = targets - mean
    gram = gram_matrix(features, kernel)
    system = gram + lam * n * np.eye(n)
    try:
        alpha = cho_solve(cho_factor(system), rhs)
    except np.linalg.LinAlgError as exc:
        if lam == 0:
            raise SolverError(
                "Gram matrix is numerically singular; use lambda > 0"
            ) from exc
        alpha, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    residual = np.linalg.norm(system @ alpha - rhs)
    if residual > 1e-8 * max(np.linalg.norm(rhs), 1.0):
        alpha, *_ = np.linalg.lstsq(system, rhs, rcond=None)
        residual = np.linalg.norm(system @ alpha - rhs)
        if residual > 1e-8 * max(np.linalg.norm(rhs), 1.0):
            if lam == 0:
                raise SolverError("Gram matrix is numerically singular; use lambda > 0")
            raise SolverError("ridge system solve did not reach the required residual")
    return FittedMap(
        kernel=kernel, lam=lam, features=features, alpha=alpha, target_mean=mean
    )


def with_basis(fitted, basis):
    """Attach a reduction basis so ``predict`` accepts raw feature vectors."""
    return FittedMap(
        kernel=fitted.kernel,
        lam=fitted.lam,
        features=fitted.features,
        alpha=fitted.alpha,
        target_mean=fitted.target_mean,
        basis=basis,
    )


def predict(fitted, phi):
    """Kernel-expansion prediction at one (M,) vector or stacked (M, n) columns."""
    phi = np.asarray(phi, dtype=float)
    single = phi.ndim == 1
    if fitted.basis is not None:
        phi = project(fitted.basis, phi)
    cols = phi[:, None] if single else phi
    if cols.shape[0] != fitted.features.shape[0]:
        raise ValueError(
            f"feature dimension {cols.shape[0]} does not match the "
            f"fitted map ({fitted.features.shape[0]})"
        )
    values = fitted.kernel(fitted.features, cols).T @ fitted.alpha + fitted.target_mean
    return float(values[0]) if single else values


def objective_value(fitted, features, targets):
    """Ridge objective (1/N)||p - K alpha||^2 + lambda alpha^T K alpha."""
    targets = np.asarray(targets, dtype=float) - fitted.target_mean
    gram = gram_matrix(np.asarray(features, dtype=float), fitted.kernel)
    resid = targets - gram @ fitted.alpha
    n = targets.shape[0]
    return float(resid @ resid / n + fitted.lam * fitted.alpha @ gram @ fitted.alpha)


# ---------------------------------------------------------------------------
# Persistence: JSON blob whose reload reproduces predictions bit-exactly
# (Python float serialization round-trips exactly).
# ---------------------------------------------------------------------------

_MODEL_FORMAT = "locfree-krr-map/1"


def save_model(fitted, path):
    doc = {
        "format": _MODEL_FORMAT,
        "sigma": fitted.kernel.sigma,
        "lambda": fitted.lam,
        "target_mean": fitted.target_mean,
        "features": fitted.features.tolist(),
        "alpha": fitted.alpha.tolist(),
        "basis": None
        if fitted.basis is None
        else {
            "mean": fitted.basis.mean.tolist(),
            "vectors": fitted.basis.vectors.tolist(),
            "singular_values": fitted.basis.singular_values.tolist(),
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != _MODEL_FORMAT:
        raise ValueError(f"{path} is not a {_MODEL_FORMAT} model blob")
    basis = None
    if doc["basis"] is not None:
        basis = ReducedBasis(
            mean=np.array(doc["basis"]["mean"], dtype=float),
            vectors=np.array(doc["basis"]["vectors"], dtype=float),
            singular_values=np.array(doc["basis"]["singular_values"], dtype=float),
        )
    return FittedMap(
        kernel=GaussianKernel(doc["sigma"]),
        lam=doc["lambda"],
        features=np.array(doc["features"], dtype=float),
        alpha=np.array(doc["alpha"], dtype=float),
        target_mean=doc["target_mean"],
        basis=basis,
    )
