"""Origin-centered ellipsoid calculus: P-form and degenerate Q-form sets,
affine images, S-procedure combination, membership and inclusion tests.

Conventions
-----------
* P-form: E = {x | x' P x <= level}, P positive definite, level > 0.
* Q-form: E = {x | [[1, x'], [x, Q]] >= 0}, Q positive semidefinite.
  For nonsingular Q this is {x | x' Q^-1 x <= 1}; singular Q additionally
  restricts x to range(Q). The two forms are linked by Q = level * P^-1.
* All sets are centered at the origin; enlarged level sets (not shifted
  centers) absorb fault offsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm


class EllipsoidError(ValueError):
    pass


class DegeneracyError(EllipsoidError):
    pass


class CertificateError(EllipsoidError):
    pass


def _check_vars(vars_, dim: int) -> tuple[str, ...]:
    v = tuple(vars_)
    if len(v) != dim:
        raise EllipsoidError(f"{len(v)} variable names for dimension {dim}")
    if len(set(v)) != len(v):
        raise EllipsoidError("duplicate variable names")
    return v


@dataclass(frozen=True)
class EllipsoidP:
    """Nondegenerate ellipsoid {x | x' P x <= level}."""

    P: np.ndarray
    vars: tuple[str, ...]
    level: float = 1.0

    def __post_init__(self):
        p = nm.as_symmetric(self.P)
        object.__setattr__(self, "P", p)
        object.__setattr__(self, "vars", _check_vars(self.vars, p.shape[0]))
        if self.level <= 0:
            raise EllipsoidError("level must be > 0")
        if nm.lambda_min(p) <= 0:
            raise EllipsoidError("P must be positive definite")

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        return float(x @ self.P @ x)


@dataclass(frozen=True)
class EllipsoidQ:
    """Possibly degenerate ellipsoid in Q (shape-matrix) form."""

    Q: np.ndarray
    vars: tuple[str, ...]

    def __post_init__(self):
        q = nm.as_symmetric(self.Q)
        object.__setattr__(self, "Q", q)
        object.__setattr__(self, "vars", _check_vars(self.vars, q.shape[0]))
        scale = max(float(np.max(np.abs(q))), 1.0)
        ok, _ = nm.cholesky_psd(q, nm.default_tol(scale) * 10)
        if not ok:
            raise EllipsoidError("Q must be positive semidefinite")

    @property
    def dim(self) -> int:
        return self.Q.shape[0]


@dataclass(frozen=True)
class SProcCertificate:
    """Relaxation multipliers for the two-ellipsoid S-procedure combination."""

    alpha: float
    gamma: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.gamma > 0 and self.alpha + self.gamma < 1):
            raise CertificateError(
                f"need alpha > 0, gamma > 0, alpha + gamma < 1; "
                f"got alpha={self.alpha}, gamma={self.gamma}")


def p_to_q(e: EllipsoidP) -> EllipsoidQ:
    """Convert P-form to Q-form via Q = level * P^-1."""
    return EllipsoidQ(e.level * nm.inverse(e.P), e.vars)


def q_to_p(e: EllipsoidQ) -> EllipsoidP:
    """Convert nonsingular Q-form back to P-form (level 1)."""
    q = e.Q
    scale = max(float(np.max(np.abs(q))), 1.0)
    if nm.lambda_min(q) <= nm.default_tol(scale):
        raise DegeneracyError("Q is singular; no P-form exists")
    return EllipsoidP(nm.inverse(q), e.vars, 1.0)


def affine_image(e: EllipsoidQ, t, out_vars) -> EllipsoidQ:
    """Exact image of E under the linear map x -> T x (rank-deficient T allowed)."""
    t = nm.as_matrix(t, cols=e.dim)
    return EllipsoidQ(t @ e.Q @ t.T, out_vars)


def project(e: EllipsoidQ, keep_vars) -> EllipsoidQ:
    """Exact shadow of E onto a subset of its variables."""
    keep = tuple(keep_vars)
    for v in keep:
        if v not in e.vars:
            raise EllipsoidError(f"unknown variable {v!r}")
    sel = np.zeros((len(keep), e.dim))
    for i, v in enumerate(keep):
        sel[i, e.vars.index(v)] = 1.0
    return affine_image(e, sel, keep)


def sproc_combine(e1: EllipsoidP, e2: EllipsoidP, cert: SProcCertificate,
                  out_vars=None) -> EllipsoidP:
    """Combine E(x, P_x) and E(xh, P_xh) into an ellipsoid on e = x - xh.

    P_e = (T blkdiag(gamma P_x, (1-alpha-gamma) P_xh)^-1 T')^-1 with T = [I -I].
    Levels of the inputs are folded into their shape matrices first.
    """
    if e1.dim != e2.dim:
        raise EllipsoidError("operands must have equal dimension")
    n = e1.dim
    p1 = e1.P / e1.level
    p2 = e2.P / e2.level
    t = np.hstack([np.eye(n), -np.eye(n)])
    pxx = nm.blockdiag(cert.gamma * p1, (1.0 - cert.alpha - cert.gamma) * p2)
    q_e = t @ nm.inverse(pxx) @ t.T
    if out_vars is None:
        out_vars = tuple(f"e_{i}" for i in range(n))
    return EllipsoidP(nm.inverse(nm.as_symmetric(q_e)), out_vars, 1.0)


def contains(e: EllipsoidQ, x, tol: float = 0.0) -> bool:
    """Membership test via PSD-ness of the bordered matrix [[1, x'], [x, Q]]."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != e.dim:
        raise EllipsoidError("dimension mismatch")
    bordered = np.zeros((e.dim + 1, e.dim + 1))
    bordered[0, 0] = 1.0
    bordered[0, 1:] = x
    bordered[1:, 0] = x
    bordered[1:, 1:] = e.Q
    ok, _ = nm.cholesky_psd(bordered, tol)
    return ok


def inclusion(e1: EllipsoidQ, e2: EllipsoidQ, tol: float = 0.0) -> bool:
    """Sufficient containment test E1 <= E2: Q2 - Q1 >= -tol*I."""
    if e1.vars != e2.vars:
        raise EllipsoidError("ellipsoids must share a variable list")
    ok, _ = nm.cholesky_psd(e2.Q - e1.Q, tol)
    return ok


def inclusion_margin(q_inner: np.ndarray, q_outer: np.ndarray) -> float:
    """lambda_min(Q_outer - Q_inner): nonnegative when the inclusion holds."""
    return nm.lambda_min(nm.as_symmetric(q_outer) - nm.as_symmetric(q_inner))


def boundary_points(e: EllipsoidP, count: int, rng) -> np.ndarray:
    """Sample points on the boundary {x' P x = level} (uniform direction)."""
    root = nm.sym_sqrt(nm.inverse(e.P / e.level))
    g = rng.standard_normal((count, e.dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g @ root.T
