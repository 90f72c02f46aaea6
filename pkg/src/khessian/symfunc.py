"""Elementary symmetric polynomials, Garding cones, and principal-minor identities.

Conventions: sigma_j denotes the j-th elementary symmetric polynomial of an
eigenvalue vector, with sigma_0 = 1 (empty product).  The open cone Gamma_k
is the set where sigma_1, ..., sigma_k are all strictly positive; the closure
variant relaxes to >= 0.  Cone comparisons against zero are exact by default;
callers that need slack pass an explicit margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConeParams",
    "sigma",
    "sigma_all",
    "sigma_gradient",
    "in_gamma_k",
    "in_gamma_k_closure",
    "in_sigma_delta",
    "sym_eigenvalues",
    "sigma_of_matrix",
    "bordered_minor_identity_residual",
]

# The artifact never needs eigendecompositions beyond this size.
MAX_MATRIX_DIM = 16


@dataclass(frozen=True)
class ConeParams:
    """Dimension/order pair (n, k) together with the derived cone exponents."""

    n: int
    k: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"dimension n must be >= 3, got {self.n}")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"order k must satisfy 1 <= k <= n, got k={self.k}, n={self.n}")

    @property
    def theta(self) -> float:
        return (self.n - self.k) / self.k

    @property
    def alpha(self) -> float:
        """Sharp Holder exponent 2 - n/k of admissible factors (supercritical range)."""
        return 2.0 - self.n / self.k

    @property
    def delta_gv(self) -> float:
        """Cone-embedding constant (n-k)/(n(k-1)); requires k >= 2."""
        if self.k < 2:
            raise ValueError("delta_gv is defined only for k >= 2")
        return (self.n - self.k) / (self.n * (self.k - 1))

    @property
    def supercritical(self) -> bool:
        return 2 * self.k > self.n

    def require_supercritical(self):
        if not self.supercritical:
            raise ValueError(
                f"(n, k) = ({self.n}, {self.k}) is not supercritical; need k > n/2"
            )
        return self


def _as_vector(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1:
        raise ValueError("eigenvalue input must be one-dimensional")
    if not np.all(np.isfinite(lam)):
        raise ValueError("eigenvalue entries must be finite")
    return lam


def sigma_all(lam, kmax: int) -> np.ndarray:
    """Return [sigma_0, ..., sigma_kmax] by the stable one-pass recurrence.

    Uses e_j(x_1..x_m) = e_j(x_1..x_{m-1}) + x_m e_{j-1}(x_1..x_{m-1}),
    updating in place from the top index down.
    """
    lam = _as_vector(lam)
    if kmax < 0:
        raise ValueError("kmax must be nonnegative")
    e = np.zeros(kmax + 1)
    e[0] = 1.0
    for x in lam:
        top = min(kmax, len(lam))
        for j in range(top, 0, -1):
            e[j] += x * e[j - 1]
    return e


def sigma(lam, j: int) -> float:
    """j-th elementary symmetric polynomial of the entries of lam (sigma_0 = 1)."""
    lam = _as_vector(lam)
    if not 0 <= j <= len(lam):
        raise ValueError(f"sigma order j={j} out of range for {len(lam)} eigenvalues")
    return float(sigma_all(lam, j)[j])


def sigma_gradient(lam, k: int) -> np.ndarray:
    """Gradient of sigma_k: component i equals sigma_{k-1} of lam with entry i removed."""
    lam = _as_vector(lam)
    n = len(lam)
    if not 1 <= k <= n:
        raise ValueError(f"gradient order k={k} out of range for n={n}")
    grad = np.empty(n)
    for i in range(n):
        grad[i] = sigma(np.delete(lam, i), k - 1)
    return grad


def in_gamma_k(lam, k: int, margin: float = 0.0) -> bool:
    """Open-cone test: sigma_j(lam) > margin for all 1 <= j <= k."""
    lam = _as_vector(lam)
    if len(lam) < 2:
        raise ValueError("cone membership needs at least two eigenvalues")
    if not 1 <= k <= len(lam):
        raise ValueError(f"cone order k={k} out of range for n={len(lam)}")
    e = sigma_all(lam, k)
    return bool(np.all(e[1:] > margin))


def in_gamma_k_closure(lam, k: int, margin: float = 0.0) -> bool:
    """Closed-cone test: sigma_j(lam) >= -margin for all 1 <= j <= k."""
    lam = _as_vector(lam)
    if len(lam) < 2:
        raise ValueError("cone membership needs at least two eigenvalues")
    if not 1 <= k <= len(lam):
        raise ValueError(f"cone order k={k} out of range for n={len(lam)}")
    e = sigma_all(lam, k)
    return bool(np.all(e[1:] >= -margin))


def in_sigma_delta(lam, delta: float) -> bool:
    """Membership in the cone {lambda_i > -delta * sum_j lambda_j}."""
    lam = _as_vector(lam)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    return bool(np.all(lam > -delta * lam.sum()))


def _require_symmetric(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("expected a square matrix")
    if S.shape[0] > MAX_MATRIX_DIM:
        raise ValueError(f"matrices larger than {MAX_MATRIX_DIM}x{MAX_MATRIX_DIM} are unsupported")
    if not np.all(np.isfinite(S)):
        raise ValueError("matrix entries must be finite")
    scale = max(1.0, float(np.abs(S).max()))
    if np.abs(S - S.T).max() > 1e-10 * scale:
        raise ValueError("matrix is not symmetric to tolerance")
    return 0.5 * (S + S.T)


def sym_eigenvalues(S, sweeps: int = 30) -> np.ndarray:
    """Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.

    Deterministic and dependency-free; accurate for the n <= 16 matrices this
    package works with.  Returned in ascending order.
    """
    A = _require_symmetric(S).copy()
    n = A.shape[0]
    if n == 1:
        return A.diagonal().copy()
    fro = max(np.sqrt((A * A).sum()), 1e-300)
    for _ in range(sweeps):
        off = np.sqrt(2.0 * (np.triu(A, 1) ** 2).sum())
        if off <= 1e-15 * fro:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-18 * fro:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.hypot(1.0, t)
                s = t * c
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                A[p, q] = A[q, p] = 0.0
    return np.sort(A.diagonal())


def sigma_of_matrix(S, k: int) -> float:
    """sigma_k of the eigenvalues of a symmetric matrix (sum of principal k-minors)."""
    S = _require_symmetric(S)
    return sigma(sym_eigenvalues(S), k)


def _is_arrow(S, tol: float) -> bool:
    n = S.shape[0]
    if n < 2:
        return True
    body = S[: n - 1, : n - 1]
    off = body - np.diag(np.diag(body))
    return np.abs(off).max() <= tol


def bordered_minor_identity_residual(S, k: int) -> float:
    """Residual of the arrow-matrix minor identity.

    For S diagonal except along the last row/column,

        sigma_k(eig(S)) = sigma_k(diag S)
                          - sum_{i<n} sigma_{k-2}(diag S without rows i, n) * S[i, n]^2.

    The left side is evaluated through the eigensolver, the right side through
    the diagonal data; their absolute difference is returned.
    """
    S = _require_symmetric(S)
    n = S.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"order k={k} out of range for n={n}")
    scale = max(1.0, float(np.abs(S).max()))
    if not _is_arrow(S, 1e-13 * scale):
        raise ValueError("matrix does not have arrow (diagonal plus last row/column) structure")
    lhs = sigma(sym_eigenvalues(S), k)
    d = np.diag(S).copy()
    rhs = sigma(d, k)
    if k >= 2:
        for i in range(n - 1):
            rest = np.delete(d, [i, n - 1])
            rhs -= sigma(rest, k - 2) * S[i, n - 1] ** 2
    return abs(lhs - rhs)
