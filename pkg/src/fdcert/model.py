"""Declarative model ingestion, ZOH discretization, and assembly of the
discrete-time closed-loop, observer-input, and error-dynamics systems.

Controller realization
----------------------
The controller consumes the measurement y and the bounded command y_c:

    u(k)     = C_c x_c(k) + D_c y(k)
    x_c(k+1) = A_c x_c(k) + B_c (y_c(k) - y(k))

so u is a linear function of the closed-loop state (x, x_c) while the
reference drives the loop only through B_c. The observer always runs the
nominal input matrix:

    xhat(k+1) = (A - L C) xhat(k) + B u(k) + L y(k)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nm
from . import tomlio


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class LtiContinuous:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        a = nm.as_square(self.A)
        b = nm.as_matrix(self.B, rows=a.shape[0])
        c = nm.as_matrix(self.C, cols=a.shape[0])
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "C", c)

    @property
    def state_dim(self) -> int:
        return self.A.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]

    @property
    def output_dim(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class LtiDiscrete(LtiContinuous):
    dt: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if self.dt <= 0:
            raise ModelError("dt must be > 0")


@dataclass(frozen=True)
class PhysicalParams:
    m_f: float
    m_w: float
    L_a: float
    L_h: float
    L_m: float
    L_w: float
    L_f: float
    K_f: float
    g: float = 9.81

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not (v > 0):
                raise ModelError(f"physical parameter {name} must be > 0")


@dataclass(frozen=True)
class FaultModel:
    X: np.ndarray
    sigma: float

    def __post_init__(self):
        x = nm.as_square(self.X)
        object.__setattr__(self, "X", x)
        d = np.diag(x)
        if np.any(d < -1e-12) or np.any(d > 1.0 + 1e-12):
            raise ModelError("actuator effectiveness diagonal must lie in [0, 1]")
        if self.sigma <= 0:
            raise ModelError("sigma must be > 0")


@dataclass(frozen=True)
class Controller:
    A_c: np.ndarray
    B_c: np.ndarray
    C_c: np.ndarray
    D_c: np.ndarray

    def __post_init__(self):
        a = nm.as_square(self.A_c)
        b = nm.as_matrix(self.B_c, rows=a.shape[0])
        c = nm.as_matrix(self.C_c, cols=a.shape[0])
        d = nm.as_matrix(self.D_c, rows=c.shape[0], cols=b.shape[1])
        for name, m in (("A_c", a), ("B_c", b), ("C_c", c), ("D_c", d)):
            object.__setattr__(self, name, m)

    @property
    def state_dim(self) -> int:
        return self.A_c.shape[0]


@dataclass(frozen=True)
class ReferenceBound:
    """P-form bound {y_c | y_c' P y_c <= 1} on the command input."""

    P: np.ndarray

    def __post_init__(self):
        p = nm.as_symmetric(self.P)
        if nm.lambda_min(p) <= 0:
            raise ModelError("reference bound P must be positive definite")
        object.__setattr__(self, "P", p)

    @classmethod
    def from_radius(cls, radius: float, dim: int) -> "ReferenceBound":
        if radius <= 0:
            raise ModelError("reference radius must be > 0")
        return cls(np.eye(dim) / radius**2)


@dataclass(frozen=True)
class FdModel:
    """Full fault-detection model: discrete plant, controller, observer, fault."""

    name: str
    plant: LtiDiscrete
    controller: Controller
    L: np.ndarray
    fault: FaultModel
    reference_bound: ReferenceBound
    dt: float

    def __post_init__(self):
        n, m, p = self.plant.state_dim, self.plant.input_dim, self.plant.output_dim
        lmat = nm.as_matrix(self.L, rows=n, cols=p)
        object.__setattr__(self, "L", lmat)
        if self.dt != self.plant.dt:
            raise ModelError("model dt must match the discrete plant dt")
        if self.fault.X.shape[0] != m:
            raise ModelError("fault X must be input_dim square")
        if self.controller.B_c.shape[1] != p or self.controller.D_c.shape[1] != p:
            raise ModelError("controller input dimension must match plant outputs")
        if self.controller.C_c.shape[0] != m:
            raise ModelError("controller output dimension must match plant inputs")
        if self.reference_bound.P.shape[0] != p:
            raise ModelError("reference bound dimension must match plant outputs")
        rho = nm.spectral_radius(self.plant.A - lmat @ self.plant.C)
        if rho >= 1.0:
            raise ModelError(
                f"observer error dynamics unstable: spectral radius {rho:.6f} >= 1")

    @property
    def A_hat(self) -> np.ndarray:
        return self.plant.A - self.L @ self.plant.C


@dataclass(frozen=True)
class PlainLoopModel:
    """Bare bounded-input loop x+ = A x + B u, |u| within the input bound."""

    name: str
    plant: LtiDiscrete
    input_bound: ReferenceBound
    dt: float

    def __post_init__(self):
        if self.input_bound.P.shape[0] != self.plant.input_dim:
            raise ModelError("input bound dimension must match plant inputs")
        rho = nm.spectral_radius(self.plant.A)
        if rho >= 1.0:
            raise ModelError(f"loop matrix unstable: spectral radius {rho:.6f} >= 1")


@dataclass(frozen=True)
class DerivedSystems:
    """Closed-loop, observer-input, and error-dynamics forms of an FdModel."""

    A_cl: np.ndarray      # (x, x_c) update, mode-dependent actuation
    B_cl: np.ndarray      # reference input channel
    A_hat: np.ndarray     # A - L C
    B_obs: np.ndarray     # [B  L C] acting on u_hat = (u, x)
    E: np.ndarray         # fault input matrix B (I - X)
    u_of_state: np.ndarray  # u = [D_c C  C_c] (x, x_c)


def discretize_zoh(sys: LtiContinuous, dt: float) -> LtiDiscrete:
    """Zero-order-hold discretization via the augmented matrix exponential."""
    if dt <= 0:
        raise ModelError("dt must be > 0")
    n, m = sys.state_dim, sys.input_dim
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = sys.A * dt
    aug[:n, n:] = sys.B * dt
    big = nm.mat_exp(aug)
    return LtiDiscrete(big[:n, :n], big[:n, n:], sys.C.copy(), dt=dt)


def build_plant_matrices(p: PhysicalParams) -> LtiContinuous:
    """3DOF helicopter linearization: positions integrate rates, one
    gravity-coupling entry, two symmetric actuator channels, C = [I3 0]."""
    a = np.zeros((6, 6))
    a[0, 3] = a[1, 4] = a[2, 5] = 1.0
    a[5, 1] = ((2 * p.m_f * p.L_a - p.m_w * p.L_m) * p.g
               / (2 * p.m_f * p.L_a**2 + 2 * p.m_f * p.L_h**2 + p.m_w * p.L_m**2))
    b = np.zeros((6, 2))
    b[3, 0] = b[3, 1] = p.L_a * p.K_f / (p.m_w * p.L_w**2 + 2 * p.m_f * p.L_a**2)
    b[4, 0] = p.K_f / (2 * p.m_f * p.L_f)
    b[4, 1] = -p.K_f / (2 * p.m_f * p.L_f)
    c = np.hstack([np.eye(3), np.zeros((3, 3))])
    return LtiContinuous(a, b, c)


def build_fault_input(plant: LtiContinuous, fault: FaultModel) -> np.ndarray:
    """Fault input matrix E = B (I - X)."""
    m = plant.input_dim
    if fault.X.shape[0] != m:
        raise ModelError("fault X must be input_dim square")
    return plant.B @ (np.eye(m) - fault.X)


def closed_loop_matrices(model: FdModel, faulty: bool) -> tuple[np.ndarray, np.ndarray]:
    """(A_cl, B_cl) for xt = (x, x_c) driven by y_c; actuation B X when faulty."""
    plant, ctrl = model.plant, model.controller
    b_eff = plant.B @ model.fault.X if faulty else plant.B
    n, ncs = plant.state_dim, ctrl.state_dim
    a_cl = np.zeros((n + ncs, n + ncs))
    a_cl[:n, :n] = plant.A + b_eff @ ctrl.D_c @ plant.C
    a_cl[:n, n:] = b_eff @ ctrl.C_c
    a_cl[n:, :n] = -ctrl.B_c @ plant.C
    a_cl[n:, n:] = ctrl.A_c
    b_cl = np.vstack([np.zeros((n, plant.output_dim)), ctrl.B_c])
    return a_cl, b_cl


def assemble(model: FdModel) -> DerivedSystems:
    """Build the nominal closed-loop, observer-input, and error-dynamics forms."""
    plant, ctrl = model.plant, model.controller
    a_hat = model.A_hat
    rho = nm.spectral_radius(a_hat)
    if rho >= 1.0:
        raise ModelError(f"A - LC unstable: spectral radius {rho:.6f}")
    a_cl, b_cl = closed_loop_matrices(model, faulty=False)
    b_obs = np.hstack([plant.B, model.L @ plant.C])
    e_mat = build_fault_input(plant, model.fault)
    u_of_state = np.hstack([ctrl.D_c @ plant.C, ctrl.C_c])
    return DerivedSystems(a_cl, b_cl, a_hat, b_obs, e_mat, u_of_state)


def observer_step_forms(model: FdModel, x, xhat, u) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The three algebraically equivalent observer updates (with y = C x)."""
    plant = model.plant
    y = plant.C @ x
    f1 = model.A_hat @ xhat + plant.B @ u + model.L @ y
    f2 = model.A_hat @ xhat + plant.B @ u + model.L @ plant.C @ x
    f3 = plant.A @ xhat + plant.B @ u + model.L @ plant.C @ (x - xhat)
    return f1, f2, f3


def _matrix(entry, what: str) -> np.ndarray:
    try:
        return nm.as_matrix(entry)
    except Exception as exc:
        raise ModelError(f"bad matrix for {what}: {exc}") from exc


def load_model(path) -> "FdModel | PlainLoopModel":
    """Parse a model config file (TOML; schema documented in the README)."""
    data = tomlio.load(path)
    name = data.get("name", "model")
    if "dt" not in data:
        raise ModelError("config missing dt")
    dt = float(data["dt"])
    plant_tbl = data.get("plant")
    if plant_tbl is None:
        raise ModelError("config missing [plant]")
    if "params" in plant_tbl:
        cont = build_plant_matrices(PhysicalParams(**plant_tbl["params"]))
        plant = discretize_zoh(cont, dt)
    else:
        a = _matrix(plant_tbl["A"], "plant.A")
        b = _matrix(plant_tbl["B"], "plant.B")
        c = _matrix(plant_tbl.get("C", np.eye(a.shape[0]).tolist()), "plant.C")
        if plant_tbl.get("discrete", False):
            plant = LtiDiscrete(a, b, c, dt=dt)
        else:
            plant = discretize_zoh(LtiContinuous(a, b, c), dt)

    if "controller" not in data:
        bound_tbl = data.get("input_bound") or data.get("reference_bound")
        if bound_tbl is None:
            raise ModelError("plain loop config needs [input_bound]")
        bound = _load_bound(bound_tbl, plant.input_dim)
        return PlainLoopModel(name=name, plant=plant, input_bound=bound, dt=dt)

    ctrl_tbl = data["controller"]
    ctrl = Controller(
        _matrix(ctrl_tbl["A_c"], "controller.A_c"),
        _matrix(ctrl_tbl["B_c"], "controller.B_c"),
        _matrix(ctrl_tbl["C_c"], "controller.C_c"),
        _matrix(ctrl_tbl["D_c"], "controller.D_c"),
    )
    if "observer" not in data or "L" not in data["observer"]:
        raise ModelError("config missing observer.L")
    lmat = _matrix(data["observer"]["L"], "observer.L")
    fault_tbl = data.get("fault")
    if fault_tbl is None:
        raise ModelError("config missing [fault]")
    fault = FaultModel(_matrix(fault_tbl["X"], "fault.X"), float(fault_tbl["sigma"]))
    bound_tbl = data.get("reference_bound")
    if bound_tbl is None:
        raise ModelError("config missing [reference_bound]")
    bound = _load_bound(bound_tbl, plant.output_dim)
    return FdModel(name=name, plant=plant, controller=ctrl, L=lmat,
                   fault=fault, reference_bound=bound, dt=dt)


def _load_bound(tbl, dim: int) -> ReferenceBound:
    if "P" in tbl:
        return ReferenceBound(_matrix(tbl["P"], "bound.P"))
    if "radius" in tbl:
        return ReferenceBound.from_radius(float(tbl["radius"]), dim)
    raise ModelError("bound table needs P or radius")
