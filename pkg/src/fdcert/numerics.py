"""Dense linear algebra kernels used by the synthesis and checking layers.

All matrices are plain float64 numpy arrays. Symmetric inputs are validated
and re-symmetrized on entry so downstream eigen/Cholesky routines always see
an exactly symmetric operand. Tolerances follow the absolute-plus-relative
convention tol_abs + tol_rel * scale with defaults 1e-9 / 1e-9.
"""

from __future__ import annotations

import numpy as np

TOL_ABS = 1e-9
TOL_REL = 1e-9


class NumericsError(ValueError):
    """Bad numeric input (non-finite entries, shape mismatch)."""


class SingularMatrixError(NumericsError):
    """Operation requires a (strictly) positive definite matrix."""


class RangeError(NumericsError):
    """Result left the representable range (overflow)."""


def default_tol(scale: float = 1.0) -> float:
    return TOL_ABS + TOL_REL * abs(scale)


def as_matrix(m, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Validate and return a finite 2-d float array."""
    a = np.asarray(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1) if rows == 1 else a.reshape(-1, 1)
    if a.ndim != 2:
        raise NumericsError(f"expected a matrix, got ndim={a.ndim}")
    if rows is not None and a.shape[0] != rows:
        raise NumericsError(f"expected {rows} rows, got {a.shape[0]}")
    if cols is not None and a.shape[1] != cols:
        raise NumericsError(f"expected {cols} cols, got {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise NumericsError("matrix has non-finite entries")
    return a


def as_square(m) -> np.ndarray:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise NumericsError(f"expected square matrix, got {a.shape}")
    return a


def as_symmetric(m, tol: float | None = None) -> np.ndarray:
    """Validate symmetry (within tol) and return the symmetrized copy."""
    a = as_square(m)
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if tol is None:
        tol = default_tol(scale)
    if a.size and float(np.max(np.abs(a - a.T))) > tol:
        raise NumericsError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def cholesky_psd(m, tol: float = 0.0) -> tuple[bool, np.ndarray | None]:
    """PSD test: does M + tol*I admit a Cholesky factorization?

    Pivots are accepted down to -tol (clamped to zero), so the test is
    tolerant of round-off on rank-deficient inputs. Returns (flag, factor)
    with factor the lower-triangular L when the test passes.
    """
    if tol < 0:
        raise NumericsError("tol must be >= 0")
    a = as_symmetric(m)
    n = a.shape[0]
    a = a + tol * np.eye(n)
    scale = max(float(np.max(np.abs(a))) if n else 0.0, 1.0)
    low = np.zeros((n, n))
    for j in range(n):
        d = a[j, j] - np.dot(low[j, :j], low[j, :j])
        if d < -tol:
            return False, None
        if d <= 0.0:
            # Zero pivot: remaining column must vanish for PSD to hold.
            rem = a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]
            if rem.size and float(np.max(np.abs(rem))) > np.sqrt(max(tol, 0.0)) * scale + TOL_ABS:
                return False, None
            low[j, j] = 0.0
        else:
            low[j, j] = np.sqrt(d)
            if j + 1 < n:
                low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return True, low


def sym_eig(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending."""
    a = as_symmetric(m)
    w, v = np.linalg.eigh(a)
    return w, v


def lambda_max(m) -> float:
    return float(sym_eig(m)[0][-1])


def lambda_min(m) -> float:
    return float(sym_eig(m)[0][0])


def solve_spd(m, b) -> np.ndarray:
    """Solve M X = B for symmetric positive definite M."""
    a = as_symmetric(m)
    rhs = as_matrix(b, rows=a.shape[0])
    ok, _ = cholesky_psd(a, 0.0)
    if not ok or lambda_min(a) <= 0.0:
        raise SingularMatrixError("matrix is not positive definite")
    return np.linalg.solve(a, rhs)


def inverse(m) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix."""
    a = as_symmetric(m)
    return solve_spd(a, np.eye(a.shape[0]))


def sym_sqrt(m) -> np.ndarray:
    """Symmetric square root of a PSD matrix (eigenvalues clamped at 0)."""
    a = as_symmetric(m)
    w, v = sym_eig(a)
    if w.size and w[0] < -default_tol(abs(w[-1]) if w.size else 1.0) * 10:
        raise NumericsError("matrix is not positive semidefinite")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


# Pade-13 coefficients for the scaling-and-squaring matrix exponential.
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)


def mat_exp(m) -> np.ndarray:
    """Matrix exponential via scaling-and-squaring with the Pade(13) approximant."""
    a = as_square(m)
    n = a.shape[0]
    if n == 0:
        return a.copy()
    norm = float(np.max(np.sum(np.abs(a), axis=1)))  # induced inf-norm
    if not np.isfinite(norm) or norm > 1e12:
        raise RangeError("matrix exponential argument too large")
    theta13 = 5.371920351148152
    s = 0
    if norm > theta13:
        s = int(np.ceil(np.log2(norm / theta13)))
        a = a / (2.0 ** s)
    b = _PADE13
    ident = np.eye(n)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    if not np.all(np.isfinite(r)):
        raise RangeError("matrix exponential overflowed")
    return r


def spectral_radius(m) -> float:
    """Largest eigenvalue modulus of a general square matrix."""
    a = as_square(m)
    if a.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def blockdiag(*blocks) -> np.ndarray:
    mats = [as_matrix(b) for b in blocks]
    n = sum(b.shape[0] for b in mats)
    p = sum(b.shape[1] for b in mats)
    out = np.zeros((n, p))
    i = j = 0
    for b in mats:
        out[i:i + b.shape[0], j:j + b.shape[1]] = b
        i += b.shape[0]
        j += b.shape[1]
    return out
