"""Certificate synthesis: invariant ellipsoids for bounded-input linear
updates, faulty level sets, error-state ellipsoids, and the residual
threshold. All searches are verified a posteriori by eigenvalue checks, so
the heuristics cannot return an uncertified answer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import names
from . import numerics as nm
from . import tomlio
from .ellipsoid import EllipsoidP, EllipsoidQ, SProcCertificate, affine_image, p_to_q, project, q_to_p
from .model import FdModel, PlainLoopModel, assemble, build_fault_input, closed_loop_matrices

ALPHA_GRID = tuple(round(0.02 * k, 2) for k in range(1, 50))  # 0.02 .. 0.98
DEFAULT_MARGIN = 1e-8


class SynthesisError(RuntimeError):
    pass


def dlyap_general(a_hat, q) -> np.ndarray:
    """Solve A' P A - P = -Q by the doubling (Smith) iteration."""
    a = nm.as_square(a_hat)
    rho = nm.spectral_radius(a)
    if rho >= 1.0:
        raise SynthesisError(f"discrete Lyapunov equation needs a stable matrix "
                             f"(spectral radius {rho:.6f})")
    p = nm.as_symmetric(q).copy()
    ak = a.copy()
    for _ in range(200):
        step = ak.T @ p @ ak
        p = p + step
        if float(np.max(np.abs(step))) < 1e-16 * float(np.max(np.abs(p))):
            break
        ak = ak @ ak
    return nm.as_symmetric(p)


def dlyap_identity(a_hat) -> np.ndarray:
    """Solve A' P A - P = -I."""
    a = nm.as_square(a_hat)
    return dlyap_general(a, np.eye(a.shape[0]))


def invariant_shape_candidate(a_hat, b_hat, p1, beta: float) -> np.ndarray | None:
    """Shape matrix of the Minkowski-recursion fixed point

        W = (1+beta) A W A' + (1+1/beta) B P1^-1 B'

    whose unit sublevel set of W^-1 is invariant for the bounded-input
    update by construction. Returns W^-1, or None when (1+beta) rho^2 >= 1.
    """
    a = nm.as_square(a_hat)
    b = nm.as_matrix(b_hat, rows=a.shape[0])
    if (1.0 + beta) * nm.spectral_radius(a) ** 2 >= 1.0:
        return None
    q_in = (1.0 + 1.0 / beta) * (b @ nm.inverse(p1) @ b.T)
    w = dlyap_general(np.sqrt(1.0 + beta) * a.T, q_in)
    w = w + (1e-10 * max(nm.lambda_max(w), 1.0)) * np.eye(a.shape[0])
    return nm.inverse(w)


def invariance_lmi(a_hat, b_hat, p, p1, alpha: float) -> np.ndarray:
    """Block matrix whose negative definiteness makes {x' P x <= 1} invariant
    for x+ = A x + B u under u' P1 u <= 1:

        [ A'PA - P + alpha P   A'PB              ]
        [ B'PA                 B'PB - alpha P1   ]
    """
    a = nm.as_square(a_hat)
    b = nm.as_matrix(b_hat, rows=a.shape[0])
    p = nm.as_symmetric(p)
    p1 = nm.as_symmetric(p1)
    top = np.hstack([a.T @ p @ a - p + alpha * p, a.T @ p @ b])
    bot = np.hstack([b.T @ p @ a, b.T @ p @ b - alpha * p1])
    return nm.as_symmetric(np.vstack([top, bot]))


def certify_invariant(a_hat, b_hat, p1, p, margin: float = DEFAULT_MARGIN) -> float | None:
    """Scan the multiplier grid for an alpha certifying the given P.

    Feasible means lambda_max(block) <= -margin; a negative margin accepts a
    matching positive residual (boundary cases). Returns the best alpha or
    None.
    """
    best_alpha, best_eig = None, np.inf
    for alpha in ALPHA_GRID:
        top = nm.lambda_max(invariance_lmi(a_hat, b_hat, p, p1, alpha))
        if top <= -margin and top < best_eig:
            best_alpha, best_eig = alpha, top
    return best_alpha


def _max_feasible_scale(a_hat, b_hat, p1, p0, alpha, margin) -> float | None:
    """Largest s with lambda_max(LMI(s*P0, alpha)) <= -margin (interval in s)."""
    def top(s):
        return nm.lambda_max(invariance_lmi(a_hat, b_hat, s * p0, p1, alpha))

    grid = np.logspace(-10, 8, 37)
    feas = [s for s in grid if top(s) <= -margin]
    if not feas:
        return None
    lo = max(feas)
    hi_candidates = [s for s in grid if s > lo]
    hi = None
    for s in hi_candidates:
        if top(s) > -margin:
            hi = s
            break
    if hi is None:
        return lo
    for _ in range(60):
        mid = np.sqrt(lo * hi)
        if top(mid) <= -margin:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-9:
            break
    return lo


def synth_invariant_bounded_input(a_hat, b_hat, p1,
                                  margin: float = DEFAULT_MARGIN) -> tuple[np.ndarray, float]:
    """Find (P, alpha) making {x' P x <= 1} invariant under the bounded input.

    Search: alpha grid x scaling line-search on the discrete-Lyapunov
    candidate P0 (A'P0A - P0 = -I), keeping the largest feasible scale
    (tightest invariant). If the whole grid fails, fall back to alternating
    projections. The winner is re-verified by an eigenvalue check.
    """
    a = nm.as_square(a_hat)
    rho = nm.spectral_radius(a)
    if rho >= 1.0:
        raise SynthesisError(f"cannot synthesize invariant: spectral radius {rho:.6f} >= 1")
    n = a.shape[0]
    # Alpha-independent candidate shapes: the plain -I Lyapunov solution plus
    # Minkowski fixed points at a few contraction rates; the latter align the
    # trial ellipsoid with the driven system's actual signal scales, which
    # matters for strongly non-normal dynamics.
    shared = [dlyap_identity(a)]
    beta_max = 1.0 / rho**2 - 1.0
    for frac in (0.3, 0.6, 0.9):
        cand = invariant_shape_candidate(a, b_hat, p1, frac * beta_max)
        if cand is not None:
            shared.append(cand)
    best: tuple[float, float, np.ndarray] | None = None  # (log-volume score, alpha, P)
    for alpha in ALPHA_GRID:
        candidates = list(shared)
        if rho < np.sqrt(1.0 - alpha) * 0.99999:
            # discounted variant keeps the (1,1) block feasible near rho -> 1
            candidates.append(dlyap_identity(a / np.sqrt(1.0 - alpha)))
        for p0 in candidates:
            s = _max_feasible_scale(a, b_hat, p1, p0, alpha, margin)
            if s is None:
                continue
            score = n * np.log(s) + np.linalg.slogdet(p0)[1]
            if best is None or score > best[0]:
                best = (score, alpha, s * p0)
    if best is None:
        best_eig = np.inf
        for alpha in ALPHA_GRID[:3]:  # fallback favors small multipliers
            p_ap = alternating_projections(a, b_hat, p1, alpha, margin)
            if p_ap is not None:
                top = nm.lambda_max(invariance_lmi(a, b_hat, p_ap, p1, alpha))
                if top <= -margin:
                    best = (1.0, alpha, p_ap)
                    break
                best_eig = min(best_eig, top)
        if best is None:
            raise SynthesisError(
                f"no feasible (P, alpha) found; best lambda_max achieved {best_eig:.3e}")
    _, alpha, p = best
    top = nm.lambda_max(invariance_lmi(a, b_hat, p, p1, alpha))
    if top > -margin:
        raise SynthesisError(f"verification failed: lambda_max {top:.3e} > {-margin:.3e}")
    return nm.as_symmetric(p), alpha


def alternating_projections(a_hat, b_hat, p1, alpha: float,
                            margin: float = DEFAULT_MARGIN,
                            max_iter: int = 10_000) -> np.ndarray | None:
    """Project between the negative-definite cone and the affine LMI image.

    The LMI block is affine in P; each round projects the current block onto
    {Z <= -margin I}, least-squares-inverts back to a symmetric P, then pushes
    P onto the positive definite cone.
    """
    a = nm.as_square(a_hat)
    b = nm.as_matrix(b_hat, rows=a.shape[0])
    p1 = nm.as_symmetric(p1)
    n = a.shape[0]
    idx = [(i, j) for i in range(n) for j in range(i, n)]
    f0 = invariance_lmi(a, b, np.zeros((n, n)), p1, alpha)
    cols = []
    for (i, j) in idx:
        e = np.zeros((n, n))
        e[i, j] = e[j, i] = 1.0
        cols.append((invariance_lmi(a, b, e, p1, alpha) - f0).reshape(-1))
    op = np.array(cols).T                       # vec(block) = op @ vech(P) + vec(f0)
    op_pinv = np.linalg.pinv(op)
    p = dlyap_identity(a) if nm.spectral_radius(a) < 1 else np.eye(n)
    floor = 1e-10
    best_top, stalled = np.inf, 0
    for _ in range(max_iter):
        z = invariance_lmi(a, b, p, p1, alpha)
        w, v = nm.sym_eig(z)
        if w[-1] <= -margin and nm.lambda_min(p) >= floor:
            return nm.as_symmetric(p)
        if w[-1] < best_top - 1e-14:
            best_top, stalled = w[-1], 0
        else:
            stalled += 1
            if stalled > 500:
                return None
        z_neg = (v * np.minimum(w, -margin * 2)) @ v.T
        vech = op_pinv @ (z_neg.reshape(-1) - f0.reshape(-1))
        p = np.zeros((n, n))
        for k, (i, j) in enumerate(idx):
            p[i, j] = p[j, i] = vech[k]
        pw, pv = nm.sym_eig(p)
        p = (pv * np.maximum(pw, floor)) @ pv.T
    z = invariance_lmi(a, b, p, p1, alpha)
    if nm.lambda_max(z) <= -margin and nm.lambda_min(p) >= floor:
        return nm.as_symmetric(p)
    return None


def closed_loop_invariant(model: FdModel, mode: str,
                          margin: float = DEFAULT_MARGIN) -> tuple[EllipsoidP, float]:
    """Invariant ellipsoid for (x, x_c) under the bounded command input."""
    if mode not in ("nominal", "faulty"):
        raise ValueError(f"mode must be nominal or faulty, got {mode!r}")
    a_cl, b_cl = closed_loop_matrices(model, faulty=(mode == "faulty"))
    rho = nm.spectral_radius(a_cl)
    if rho >= 1.0:
        raise SynthesisError(f"{mode} closed loop unstable: spectral radius {rho:.6f}")
    p, alpha = synth_invariant_bounded_input(a_cl, b_cl, model.reference_bound.P, margin)
    vars_ = names.x_vars(model.plant.state_dim) + names.xc_vars(model.controller.state_dim)
    return EllipsoidP(p, vars_, 1.0), alpha


def input_set(model: FdModel, closed: EllipsoidP) -> EllipsoidP:
    """Exact image of the closed-loop ellipsoid under u_hat = (u, x)."""
    n, m = model.plant.state_dim, model.plant.input_dim
    nc = model.controller.state_dim
    u_map = np.hstack([model.controller.D_c @ model.plant.C, model.controller.C_c])
    sel_x = np.hstack([np.eye(n), np.zeros((n, nc))])
    s = np.vstack([u_map, sel_x])
    vars_ = names.u_vars(m) + names.x_vars(n)
    img = affine_image(p_to_q(closed), s, vars_)
    return q_to_p(img)


def observer_invariant(model: FdModel, p1: EllipsoidP,
                       margin: float = DEFAULT_MARGIN) -> tuple[EllipsoidP, float]:
    """Invariant for xhat+ = (A-LC) xhat + [B LC] (u, x) via the bounded-input LMI."""
    b_obs = np.hstack([model.plant.B, model.L @ model.plant.C])
    p, alpha = synth_invariant_bounded_input(model.A_hat, b_obs, p1.P / p1.level, margin)
    return EllipsoidP(p, names.xhat_vars(model.plant.state_dim), 1.0), alpha


def error_invariant(closed: EllipsoidP, obs: EllipsoidP, alpha: float,
                    n: int) -> tuple[EllipsoidP, SProcCertificate]:
    """Error-state ellipsoid from the closed-loop and observer invariants.

    gamma is picked on a grid to maximize det(P_e), i.e. the tightest
    combined ellipsoid by volume.
    """
    p_x = q_to_p(project(p_to_q(closed), names.x_vars(n)))
    q_x = nm.inverse(p_x.P / p_x.level)
    q_h = nm.inverse(obs.P / obs.level)
    best = None
    for frac in np.linspace(0.02, 0.98, 49):
        gamma = float((1.0 - alpha) * frac)
        w2 = 1.0 - alpha - gamma
        if gamma <= 0 or w2 <= 0:
            continue
        q_e = q_x / gamma + q_h / w2
        sign, logdet = np.linalg.slogdet(q_e)
        if sign <= 0:
            continue
        if best is None or logdet < best[0]:
            best = (logdet, gamma)
    if best is None:
        raise SynthesisError("no valid gamma for the error-state combination")
    gamma = best[1]
    cert = SProcCertificate(alpha=alpha, gamma=gamma)
    from .ellipsoid import sproc_combine
    p_e = sproc_combine(p_x, EllipsoidP(obs.P / obs.level, obs.vars, 1.0), cert,
                        names.e_vars(n))
    return p_e, cert


def faulty_level_set(a_hat, e_mat, p, sigma: float,
                     rel_width: float = 1e-4, c_max: float = 1e6) -> float:
    """Smallest level c making {e' P e <= c} invariant for e+ = A e + E f,
    ||f|| <= sigma, via bisection over the S-procedure condition

        [ A'PA - (1-a)P    A'PE                 ]  <= 0
        [ E'PA             E'PE - (a c/s^2) I   ]
    """
    a = nm.as_square(a_hat)
    if nm.spectral_radius(a) >= 1.0:
        raise SynthesisError("faulty level set needs stable error dynamics")
    p = nm.as_symmetric(p)
    if nm.lambda_min(p) <= 0:
        raise SynthesisError("faulty level set needs P > 0")
    if sigma <= 0:
        raise SynthesisError("sigma must be > 0")
    e = nm.as_matrix(e_mat, rows=a.shape[0])
    m = e.shape[1]
    apa = a.T @ p @ a
    ape = a.T @ p @ e
    epe = e.T @ p @ e

    def feasible(c: float) -> bool:
        for alpha in ALPHA_GRID:
            top = np.hstack([apa - (1.0 - alpha) * p, ape])
            bot = np.hstack([ape.T, epe - (alpha * c / sigma**2) * np.eye(m)])
            block = nm.as_symmetric(np.vstack([top, bot]))
            scale = max(float(np.max(np.abs(block))), 1.0)
            if nm.lambda_max(block) <= 1e-10 * scale:
                return True
        return False

    if not feasible(c_max):
        raise SynthesisError(f"faulty level set infeasible at upper bracket {c_max:g}")
    lo, hi = 0.0, c_max
    while (hi - lo) > rel_width * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class Lemma1Certificate:
    """Continuous-time disturbance-gain certificate (Q, rho, P)."""

    Q: np.ndarray
    rho: float
    P: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Q", nm.as_symmetric(self.Q))
        object.__setattr__(self, "P", nm.as_symmetric(self.P))
        if self.rho <= 0:
            raise ValueError("rho must be > 0")


def check_lemma1(a, e_mat, cert: Lemma1Certificate, tol: float = 1e-9) -> bool:
    """Check the continuous-time block LMI

        [ A'Q + QA   QE      P^1/2 ]
        [ E'Q        -rho I  0     ]  < 0   with Q > 0.
        [ P^1/2      0       -rho I]
    """
    a = nm.as_square(a)
    n = a.shape[0]
    e = nm.as_matrix(e_mat, rows=n)
    m = e.shape[1]
    if cert.Q.shape[0] != n or cert.P.shape[0] != n:
        raise ValueError("certificate dimensions do not match the system")
    p_eigs = nm.sym_eig(cert.P)[0]
    if p_eigs[0] < -nm.default_tol(abs(float(p_eigs[-1]))):
        raise ValueError("certificate error: P is not positive semidefinite")
    if nm.lambda_min(cert.Q) <= 0:
        raise ValueError("certificate error: Q is not positive definite")
    p_half = nm.sym_sqrt(cert.P)
    rho_i_m = cert.rho * np.eye(m)
    rho_i_n = cert.rho * np.eye(n)
    block = np.vstack([
        np.hstack([a.T @ cert.Q + cert.Q @ a, cert.Q @ e, p_half]),
        np.hstack([e.T @ cert.Q, -rho_i_m, np.zeros((m, n))]),
        np.hstack([p_half, np.zeros((n, m)), -rho_i_n]),
    ])
    return nm.lambda_max(nm.as_symmetric(block)) < -tol


def residual_threshold(p_err: EllipsoidP, c) -> float:
    """Exact maximum of ||C e|| over the nominal error ellipsoid."""
    c = nm.as_matrix(c, cols=p_err.dim)
    q = p_err.level * nm.inverse(p_err.P)
    return float(np.sqrt(nm.lambda_max(c @ q @ c.T)))


@dataclass(frozen=True)
class ModeCertificates:
    closed_loop: EllipsoidP
    alpha_closed: float
    input_set: EllipsoidP
    observer: EllipsoidP
    alpha_observer: float
    error: EllipsoidP
    cert: SProcCertificate


@dataclass(frozen=True)
class CertificateBundle:
    """Everything the autocoder and simulator need about an FdModel."""

    model_name: str
    nominal: ModeCertificates
    faulty: ModeCertificates
    zeta: float
    zeta_bar: float
    r_th: float
    sigma: float

    def __post_init__(self):
        if not (0 < self.zeta <= self.zeta_bar):
            raise ValueError("need 0 < zeta <= zeta_bar")
        if self.r_th <= 0:
            raise ValueError("r_th must be > 0")

    def mode(self, name: str) -> ModeCertificates:
        if name == "nominal":
            return self.nominal
        if name == "faulty":
            return self.faulty
        raise ValueError(f"unknown mode {name!r}")


@dataclass(frozen=True)
class PlainBundle:
    """Invariant certificate for a bare bounded-input loop."""

    model_name: str
    invariant: EllipsoidP
    alpha: float


def synthesize_bundle(model, margin: float = DEFAULT_MARGIN):
    """Run the full certificate chain for a model."""
    if isinstance(model, PlainLoopModel):
        p, alpha = synth_invariant_bounded_input(
            model.plant.A, model.plant.B, model.input_bound.P, margin)
        inv = EllipsoidP(p, names.x_vars(model.plant.state_dim), 1.0)
        return PlainBundle(model_name=model.name, invariant=inv, alpha=alpha)

    if not isinstance(model, FdModel):
        raise TypeError(f"cannot synthesize for {type(model).__name__}")
    assemble(model)  # validates stability and dimensions
    n = model.plant.state_dim
    modes = {}
    for mode in ("nominal", "faulty"):
        closed, a_cl = closed_loop_invariant(model, mode, margin)
        p1 = input_set(model, closed)
        obs, a_obs = observer_invariant(model, p1, margin)
        err, cert = error_invariant(closed, obs, a_obs, n)
        modes[mode] = ModeCertificates(closed, a_cl, p1, obs, a_obs, err, cert)
    e_mat = build_fault_input(model.plant, model.fault)
    zeta = 1.0
    zeta_raw = faulty_level_set(model.A_hat, e_mat, modes["faulty"].error.P,
                                model.fault.sigma)
    zeta_bar = max(zeta, zeta_raw)
    faulty_err = EllipsoidP(modes["faulty"].error.P, modes["faulty"].error.vars, zeta_bar)
    modes["faulty"] = ModeCertificates(
        modes["faulty"].closed_loop, modes["faulty"].alpha_closed,
        modes["faulty"].input_set, modes["faulty"].observer,
        modes["faulty"].alpha_observer, faulty_err, modes["faulty"].cert)
    r_th = residual_threshold(modes["nominal"].error, model.plant.C)
    return CertificateBundle(
        model_name=model.name, nominal=modes["nominal"], faulty=modes["faulty"],
        zeta=zeta, zeta_bar=zeta_bar, r_th=r_th, sigma=model.fault.sigma)


# ---------------------------------------------------------------- bundle I/O

def _ellipsoid_table(e: EllipsoidP) -> dict:
    return {"P": tomlio.matrix_to_rows(e.P), "vars": list(e.vars), "level": float(e.level)}


def _ellipsoid_from(tbl) -> EllipsoidP:
    return EllipsoidP(np.array(tbl["P"]), tuple(tbl["vars"]), float(tbl["level"]))


def save_bundle(bundle, path) -> None:
    if isinstance(bundle, PlainBundle):
        data = {
            "format": "fdcert-bundle-v1",
            "kind": "plain",
            "model": bundle.model_name,
            "invariant": {**_ellipsoid_table(bundle.invariant), "alpha": bundle.alpha},
        }
        tomlio.dump(data, path)
        return
    data = {
        "format": "fdcert-bundle-v1",
        "kind": "fd",
        "model": bundle.model_name,
        "zeta": bundle.zeta,
        "zeta_bar": bundle.zeta_bar,
        "r_th": bundle.r_th,
        "sigma": bundle.sigma,
    }
    for mode in ("nominal", "faulty"):
        mc = bundle.mode(mode)
        data[mode] = {
            "closed_loop": {**_ellipsoid_table(mc.closed_loop), "alpha": mc.alpha_closed},
            "input_set": _ellipsoid_table(mc.input_set),
            "observer": {**_ellipsoid_table(mc.observer), "alpha": mc.alpha_observer},
            "error": {**_ellipsoid_table(mc.error),
                      "alpha": mc.cert.alpha, "gamma": mc.cert.gamma},
        }
    tomlio.dump(data, path)


def load_bundle(path):
    data = tomlio.load(path)
    if data.get("format") != "fdcert-bundle-v1":
        raise ValueError("not a certificate bundle file")
    if data["kind"] == "plain":
        tbl = data["invariant"]
        return PlainBundle(model_name=data["model"],
                           invariant=_ellipsoid_from(tbl), alpha=float(tbl["alpha"]))
    modes = {}
    for mode in ("nominal", "faulty"):
        tbl = data[mode]
        modes[mode] = ModeCertificates(
            closed_loop=_ellipsoid_from(tbl["closed_loop"]),
            alpha_closed=float(tbl["closed_loop"]["alpha"]),
            input_set=_ellipsoid_from(tbl["input_set"]),
            observer=_ellipsoid_from(tbl["observer"]),
            alpha_observer=float(tbl["observer"]["alpha"]),
            error=_ellipsoid_from(tbl["error"]),
            cert=SProcCertificate(alpha=float(tbl["error"]["alpha"]),
                                  gamma=float(tbl["error"]["gamma"])),
        )
    return CertificateBundle(
        model_name=data["model"], nominal=modes["nominal"], faulty=modes["faulty"],
        zeta=float(data["zeta"]), zeta_bar=float(data["zeta_bar"]),
        r_th=float(data["r_th"]), sigma=float(data["sigma"]))
