"""Semi-implicit time stepping of the regularized damage / Kelvin-Voigt system.

Each step first minimizes the damage functional for chi^k with the strain of
u^{k-1} frozen, then solves the linear elasticity system for u^k with the new
damage.  All nonlinear coefficient terms (c, d, f, I_beta) are integrated
with nodal weights, so the damage Euler-Lagrange system is the exact
gradient of the discrete functional and the discrete energy balance holds
without quadrature defects.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (
    ElasticityOperator,
    Grid,
    LinearSolverError,
    laplace_matrix,
    mass_matrix,
    solve_spd,
    vector_mass_matrix,
)
from .material import MaterialLaw, Penalty

__all__ = [
    "Discretization",
    "StepConfig",
    "InitialData",
    "State",
    "EnergyRecord",
    "Trajectory",
    "DamageProblem",
    "DamageSolverError",
    "damage_step",
    "elasticity_step",
    "advance",
    "run",
    "energy_audit",
    "truncate_chi",
    "write_energy_csv",
]

log = logging.getLogger(__name__)

Load = Callable[[float], np.ndarray]


class DamageSolverError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class Discretization:
    """Grid, material and every assembled form that does not change in time."""

    def __init__(self, grid: Grid, material: MaterialLaw):
        if material.dim != grid.dim:
            raise ValueError(f"material dim {material.dim} != grid dim {grid.dim}")
        self.grid = grid
        self.material = material
        self.M = mass_matrix(grid)
        self.K = laplace_matrix(grid)
        self.Mv = vector_mass_matrix(grid)
        self.m = np.asarray(self.M.sum(axis=1)).ravel()
        self.elastic = ElasticityOperator(grid, material.C)
        self.absK = abs(self.K).tocsr()
        self._dual = None
        self._rate_ops: dict[float, tuple] = {}
        self._unit_elastic = None

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_dual"] = None
        return state

    def rate_operator(self, tau: float) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """(K (1 + 1/tau) + M / tau, its entrywise absolute value), cached per tau."""
        if tau not in self._rate_ops:
            B = (self.K * (1.0 + 1.0 / tau) + self.M / tau).tocsr()
            self._rate_ops[tau] = (B, abs(B).tocsr())
        return self._rate_ops[tau]

    def viscous_matrix(self, chi: np.ndarray) -> sp.csr_matrix:
        """mu d(chi) C-weighted elasticity form; assembled once when d is constant."""
        mat = self.material
        if mat.d_is_constant:
            if self._unit_elastic is None:
                self._unit_elastic = self.elastic.matrix(np.ones(self.grid.n_nodes))
            return self._unit_elastic * (mat.mu * float(mat.d.pieces[0][0]))
        return self.elastic.matrix(mat.mu * mat.d(chi))

    @property
    def n_dofs(self) -> int:
        return self.grid.n_nodes * self.grid.dim

    def dual_norm(self, g: np.ndarray) -> float:
        """sqrt(g^T (M + K)^{-1} g), the H^1-dual norm of a nodal residual."""
        if self._dual is None:
            self._dual = spla.splu((self.M + self.K).tocsc())
        return float(np.sqrt(max(g @ self._dual.solve(g), 0.0)))


@dataclass(frozen=True)
class StepConfig:
    tau: float
    T: float
    penalty: Penalty
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    linear_tol: float = 1e-10
    snapshot_every: int = 1

    def __post_init__(self):
        if not (self.tau > 0 and self.T > 0 and self.tau <= self.T * (1 + 1e-12)):
            raise ValueError(f"need 0 < tau <= T, got tau={self.tau}, T={self.T}")
        if self.newton_tol <= 0 or self.linear_tol <= 0 or self.newton_max_iter < 1:
            raise ValueError("solver tolerances must be positive")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")
        self.n_steps  # validates T / tau

    @property
    def n_steps(self) -> int:
        M = int(round(self.T / self.tau))
        if M < 1 or abs(M * self.tau - self.T) > 1e-9 * self.T:
            raise ValueError(f"T / tau = {self.T / self.tau} is not an integer")
        return M

    @property
    def beta(self) -> float:
        return self.penalty.beta


@dataclass
class InitialData:
    u0: np.ndarray
    v0: np.ndarray
    chi0: np.ndarray

    def validate(self, grid: Grid, neumann_tol: float | None = None) -> None:
        n, d = grid.n_nodes, grid.dim
        self.u0 = np.asarray(self.u0, dtype=float).reshape(n, d)
        self.v0 = np.asarray(self.v0, dtype=float).reshape(n, d)
        self.chi0 = np.asarray(self.chi0, dtype=float).reshape(n)
        for name in ("u0", "v0", "chi0"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"initial {name} has non-finite values")
        if neumann_tol is None:
            neumann_tol = 5.0 * float(grid.h.max()) * (1.0 + np.abs(self.chi0).max())
        dn = grid.max_normal_derivative(self.chi0)
        if dn > neumann_tol:
            raise ValueError(
                f"initial damage violates the homogeneous Neumann condition "
                f"(normal derivative {dn:.3g} > {neumann_tol:.3g})"
            )

    @classmethod
    def at_rest(cls, grid: Grid, chi0) -> "InitialData":
        z = np.zeros((grid.n_nodes, grid.dim))
        chi0 = np.broadcast_to(np.asarray(chi0, dtype=float), (grid.n_nodes,)).copy()
        return cls(z, z.copy(), chi0)


@dataclass
class State:
    k: int
    t: float
    tau: float
    u: np.ndarray
    u_prev: np.ndarray
    chi: np.ndarray
    chi_prev: np.ndarray
    xi: np.ndarray

    @property
    def v(self) -> np.ndarray:
        return (self.u - self.u_prev) / self.tau

    @property
    def rate(self) -> np.ndarray:
        return (self.chi - self.chi_prev) / self.tau


@dataclass
class EnergyRecord:
    k: int
    t: float
    kinetic: float
    elastic: float
    gradient: float
    potential: float
    dissipation_increment: float
    penalty_mass: float
    free_energy: float
    slack: float = 0.0
    work: float = 0.0
    splitting_slack: float = 0.0
    numerical_dissipation: float = 0.0
    penalty_work: float = 0.0
    convexity_defect: float = 0.0
    damage_residual: float = 0.0
    newton_iterations: int = 0

    CSV_COLUMNS = (
        "k",
        "t",
        "kinetic",
        "elastic",
        "gradient",
        "potential",
        "dissipation_increment",
        "penalty_mass",
        "free_energy",
        "slack",
        "work",
        "splitting_slack",
        "numerical_dissipation",
        "penalty_work",
        "convexity_defect",
        "damage_residual",
        "newton_iterations",
    )

    @property
    def total(self) -> float:
        return self.kinetic + self.free_energy


# --------------------------------------------------------------------------
# damage step


class DamageProblem:
    """Discrete damage functional of one time step and its derivatives.

    F(chi) = 1/2 chi^T K chi + 1/2 omega . c1(chi) + 1/2 (omega * c2'(chi_prev)) . chi
             + m . f(chi) + tau m . I_beta(r) + tau/2 r^T M r + tau/2 r^T K r,
    with r = (chi - chi_prev) / tau and omega_a = int N_a C eps(u_prev):eps(u_prev).
    """

    def __init__(self, disc: Discretization, chi_prev: np.ndarray, omega: np.ndarray, tau: float, penalty: Penalty):
        self.disc, self.tau, self.penalty = disc, tau, penalty
        self.chi_prev = np.asarray(chi_prev, dtype=float)
        self.omega = np.asarray(omega, dtype=float)
        mat = disc.material
        self._explicit = 0.5 * self.omega * mat.dc2(self.chi_prev)

    def rate(self, chi):
        return (chi - self.chi_prev) / self.tau

    def value(self, chi: np.ndarray) -> float:
        d, mat, tau = self.disc, self.disc.material, self.tau
        r = self.rate(chi)
        return float(
            0.5 * chi @ (d.K @ chi)
            + 0.5 * self.omega @ mat.c1(chi)
            + self._explicit @ chi
            + d.m @ mat.f(chi)
            + tau * (d.m @ self.penalty.value(r))
            + 0.5 * tau * r @ (d.M @ r)
            + 0.5 * tau * r @ (d.K @ r)
        )

    def gradient(self, chi: np.ndarray) -> np.ndarray:
        d, mat = self.disc, self.disc.material
        r = self.rate(chi)
        return (
            d.K @ chi
            + 0.5 * self.omega * mat.dc1(chi)
            + self._explicit
            + d.m * mat.df(chi)
            + d.m * self.penalty.slope(r)
            + d.M @ r
            + d.K @ r
        )

    def gradient_scale(self, chi: np.ndarray) -> np.ndarray:
        """Sum of absolute gradient terms plus the response to a one-ulp change
        of chi (the rate divides a cancelling difference by tau); sets the
        roundoff floor of the residual."""
        d, mat = self.disc, self.disc.material
        r = self.rate(chi)
        aK = d.absK
        _, absB = d.rate_operator(self.tau)
        ac = np.abs(chi)
        return (
            absB @ ac
            + np.abs(self._hessian_diag(chi)) * ac
            + aK @ ac
            + np.abs(0.5 * self.omega * mat.dc1(chi))
            + np.abs(self._explicit)
            + d.m * np.abs(mat.df(chi))
            + d.m * np.abs(self.penalty.slope(r))
            + d.M @ np.abs(r)
            + aK @ np.abs(r)
        )

    def _hessian_diag(self, chi: np.ndarray) -> np.ndarray:
        d, mat = self.disc, self.disc.material
        r = self.rate(chi)
        return 0.5 * self.omega * mat.ddc1(chi) + d.m * mat.ddf(chi) + d.m * self.penalty.curvature(r) / self.tau

    def hessian(self, chi: np.ndarray) -> sp.csr_matrix:
        B, _ = self.disc.rate_operator(self.tau)
        return (B + sp.diags(self._hessian_diag(chi))).tocsr()

    def preconditioner(self) -> sp.csr_matrix:
        return self.disc.rate_operator(self.tau)[0]


@dataclass
class DamageResult:
    chi: np.ndarray
    xi: np.ndarray
    iterations: int
    residual: float
    value: float
    initial_value: float


_ROUNDOFF = 64 * np.finfo(float).eps


def _armijo(prob: DamageProblem, chi, F0, g, d, max_halvings: int = 40):
    slope = float(g @ d)
    alpha = 1.0
    for _ in range(max_halvings):
        trial = chi + alpha * d
        Ft = prob.value(trial)
        if Ft <= F0 + 1e-4 * alpha * slope:
            return trial, Ft, alpha
        # roundoff floor: tiny steps near the minimizer cannot show decrease
        if Ft <= F0 + 1e-15 * (1.0 + abs(F0)) and abs(alpha * slope) < 1e-13 * (1.0 + abs(F0)):
            return trial, Ft, alpha
        alpha *= 0.5
    return None, F0, 0.0


def damage_step(
    disc: Discretization,
    chi_prev: np.ndarray,
    u_prev: np.ndarray,
    cfg: StepConfig,
    omega: np.ndarray | None = None,
) -> DamageResult:
    """Minimize the damage functional by semismooth Newton with Armijo search.

    Starts from chi_prev (feasible, zero rate terms), so the returned
    minimizer never has a larger functional value.  Falls back to up to 50
    preconditioned gradient steps when Newton stalls.  Converged means the
    dual residual is below newton_tol, or below the roundoff floor of the
    gradient terms when those are so large that newton_tol is unreachable.
    """
    if omega is None:
        omega = disc.elastic.nodal_energy(u_prev)
    prob = DamageProblem(disc, chi_prev, omega, cfg.tau, cfg.penalty)
    chi = np.array(chi_prev, dtype=float)
    F = F0 = prob.value(chi)
    precond = None
    res = np.inf
    fallback_used = 0
    for it in range(cfg.newton_max_iter + 1):
        g = prob.gradient(chi)
        res = disc.dual_norm(g)
        floor = _ROUNDOFF * disc.dual_norm(prob.gradient_scale(chi))
        if res <= max(cfg.newton_tol, floor):
            xi = cfg.penalty.slope(prob.rate(chi))
            return DamageResult(chi, xi, it, res, F, F0)
        if it == cfg.newton_max_iter:
            break
        d = spla.spsolve(prob.hessian(chi).tocsc(), -g)
        if not np.all(np.isfinite(d)) or g @ d >= 0:
            if precond is None:
                precond = spla.splu(prob.preconditioner().tocsc())
            d = -precond.solve(g)
        trial, Ft, _ = _armijo(prob, chi, F, g, d)
        if trial is None:
            if fallback_used:
                break
            fallback_used = 1
            if precond is None:
                precond = spla.splu(prob.preconditioner().tocsc())
            for _ in range(50):
                g = prob.gradient(chi)
                if disc.dual_norm(g) <= cfg.newton_tol:
                    break
                trial, Ft, _ = _armijo(prob, chi, F, g, -precond.solve(g))
                if trial is None:
                    break
                chi, F = trial, Ft
            continue
        chi, F = trial, Ft
    raise DamageSolverError("damage Newton iteration did not converge", res)


# --------------------------------------------------------------------------
# elasticity step


def _elastic_system(disc: Discretization, chi, u1, u2, tau, load_b, ell):
    mat = disc.material
    visc = disc.viscous_matrix(chi)
    A = disc.elastic.matrix(tau * tau * mat.c(chi)) + tau * visc + disc.Mv
    rhs = disc.Mv @ (2.0 * u1 - u2) + tau * (visc @ u1)
    if ell is not None:
        rhs = rhs + tau * tau * (disc.Mv @ np.asarray(ell, dtype=float).ravel())
    if load_b is not None:
        rhs = rhs + tau * tau * np.asarray(load_b, dtype=float).ravel()
    return A, rhs


def elasticity_step(
    disc: Discretization,
    chi: np.ndarray,
    u_prev: np.ndarray,
    u_prev2: np.ndarray,
    cfg: StepConfig,
    load_b: np.ndarray | None = None,
    ell: np.ndarray | None = None,
) -> np.ndarray:
    """Solve the coercive displacement system for u^k.

    (tau^2 c(chi) + tau mu d(chi)) C eps(u):eps(z) + u.z
        = (2u^{k-1} - u^{k-2}).z + tau mu d(chi) C eps(u^{k-1}):eps(z)
          + tau^2 l.z + tau^2 int_Gamma b.z
    ``load_b`` is the assembled boundary load vector of b^k.
    """
    u1 = np.asarray(u_prev, dtype=float).ravel()
    u2 = np.asarray(u_prev2, dtype=float).ravel()
    A, rhs = _elastic_system(disc, chi, u1, u2, cfg.tau, load_b, ell)
    u = solve_spd(A, rhs, tol=cfg.linear_tol)
    res = float(np.linalg.norm(A @ u - rhs))
    scale = float(np.linalg.norm(rhs)) or 1.0
    if res > max(cfg.linear_tol * scale, 1e-14):
        raise LinearSolverError(f"elasticity solve residual {res:.3e} above tolerance", [res / scale])
    return u.reshape(-1, disc.grid.dim)


def elasticity_residual(disc, chi, u, u1, u2, tau, load_b=None, ell=None) -> np.ndarray:
    A, rhs = _elastic_system(disc, chi, np.ravel(u1), np.ravel(u2), tau, load_b, ell)
    return A @ np.ravel(u) - rhs


# --------------------------------------------------------------------------
# energies


def _energies(disc: Discretization, u, v, chi, rate, penalty: Penalty) -> dict:
    mat = disc.material
    omega = disc.elastic.nodal_energy(u)
    vf = np.ravel(v)
    gradient = 0.5 * chi @ (disc.K @ chi)
    elastic = 0.5 * mat.c(chi) @ omega
    potential = disc.m @ mat.f(chi)
    return {
        "kinetic": 0.5 * vf @ (disc.Mv @ vf),
        "elastic": float(elastic),
        "gradient": float(gradient),
        "potential": float(potential),
        "free_energy": float(elastic + gradient + potential),
        "penalty_mass": float(disc.m @ penalty.value(rate)),
        "omega": omega,
    }


def _initial_record(disc, u, v, chi, penalty) -> EnergyRecord:
    e = _energies(disc, u, v, chi, np.zeros_like(chi), penalty)
    e.pop("omega")
    return EnergyRecord(k=0, t=0.0, dissipation_increment=0.0, **e)


# --------------------------------------------------------------------------
# full step and trajectory


def advance(
    disc: Discretization,
    state: State,
    cfg: StepConfig,
    load_b: np.ndarray | None = None,
    ell: np.ndarray | None = None,
    prev_record: EnergyRecord | None = None,
) -> tuple[State, EnergyRecord]:
    """One semi-implicit step: damage first, then elasticity."""
    mat, tau = disc.material, cfg.tau
    omega_prev = disc.elastic.nodal_energy(state.u)
    dmg = damage_step(disc, state.chi, state.u, cfg, omega=omega_prev)
    chi = dmg.chi
    u = elasticity_step(disc, chi, state.u, state.u_prev, cfg, load_b, ell)
    new = State(state.k + 1, (state.k + 1) * tau, tau, u, state.u, chi, state.chi, dmg.xi)

    v, v_old = new.v, state.v
    r = new.rate
    dchi = chi - state.chi
    e = _energies(disc, u, v, chi, r, cfg.penalty)
    e.pop("omega")
    vf = v.ravel()
    viscous = tau * vf @ (disc.viscous_matrix(chi) @ vf)
    rate_terms = tau * (r @ (disc.M @ r) + r @ (disc.K @ r))
    work = 0.0
    if load_b is not None:
        work += tau * float(np.ravel(load_b) @ vf)
    if ell is not None:
        work += tau * float((disc.Mv @ np.ravel(ell)) @ vf)

    # pieces the discrete energy balance predicts for the slack
    S = mat.c(state.chi) - mat.c(chi) + (mat.dc1(chi) + mat.dc2(state.chi)) * dchi
    splitting = 0.5 * float(S @ omega_prev)
    dv = (v - v_old).ravel()
    du = (u - state.u).ravel()
    numerical = 0.5 * (
        dv @ (disc.Mv @ dv)
        + mat.c(chi) @ disc.elastic.nodal_energy(du)
        + dchi @ (disc.K @ dchi)
    )
    defect = float(disc.m @ (mat.df(chi) * dchi - mat.f(chi) + mat.f(state.chi)))
    pen_work = float(disc.m @ (dmg.xi * dchi))

    rec = EnergyRecord(
        k=new.k,
        t=new.t,
        dissipation_increment=float(viscous + rate_terms),
        work=work,
        splitting_slack=splitting,
        numerical_dissipation=float(numerical),
        penalty_work=pen_work,
        convexity_defect=defect,
        damage_residual=dmg.residual,
        newton_iterations=dmg.iterations,
        **e,
    )
    if prev_record is not None:
        rec.slack = rec.work - (rec.total - prev_record.total) - rec.dissipation_increment
    return new, rec


@dataclass
class Trajectory:
    """Stored time levels of one run plus piecewise interpolation in time."""

    tau: float
    chi: list = field(default_factory=list)
    xi: list = field(default_factory=list)
    u: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    snapshot_every: int = 1
    failed: str | None = None

    @property
    def n_levels(self) -> int:
        return len(self.chi)

    @property
    def completed(self) -> bool:
        return self.failed is None

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.n_levels)

    def chi_array(self) -> np.ndarray:
        return np.asarray(self.chi)

    def rates(self) -> np.ndarray:
        """(chi^k - chi^{k-1}) / tau for k = 1..M."""
        c = self.chi_array()
        return np.diff(c, axis=0) / self.tau

    def level(self, name: str, k: int) -> np.ndarray:
        if name == "chi":
            return self.chi[k]
        if name == "xi":
            return self.xi[k]
        if name == "u":
            if k not in self.u:
                raise KeyError(f"u^{k} not stored (snapshot_every={self.snapshot_every})")
            return self.u[k]
        if name == "v":
            return (self.level("u", k) - self.level("u", k - 1)) / self.tau
        raise KeyError(name)

    def _index(self, t: float) -> int:
        """k with t in ((k-1) tau, k tau]; 0 for t = 0."""
        M = self.n_levels - 1
        if t < -1e-12 * self.tau or t > M * self.tau * (1 + 1e-12) + 1e-15:
            raise ValueError(f"t={t} outside [0, {M * self.tau}]")
        k = int(np.ceil(t / self.tau - 1e-9))
        return min(max(k, 0), M)

    def piecewise_constant(self, name: str, t: float) -> np.ndarray:
        """h-bar(t) = h^k for t in ((k-1) tau, k tau]."""
        return self.level(name, self._index(t))

    def previous(self, name: str, t: float) -> np.ndarray:
        """h-underbar(t) = h^{k-1} for t in ((k-1) tau, k tau]."""
        return self.level(name, max(self._index(t) - 1, 0))

    def linear(self, name: str, t: float) -> np.ndarray:
        k = self._index(t)
        if k == 0:
            return self.level(name, 0)
        s = (t - (k - 1) * self.tau) / self.tau
        return s * self.level(name, k) + (1 - s) * self.level(name, k - 1)


def _sample(load: Load | None, t: float):
    return None if load is None else load(t)


def run(
    disc: Discretization,
    initial: InitialData,
    cfg: StepConfig,
    boundary_load: Load | None = None,
    body_force: Load | None = None,
    check_initial: bool = True,
    keep_loads: bool = True,
) -> Trajectory:
    """March from t = 0 to T.

    ``boundary_load(t)`` returns the assembled load vector of b(t) and
    ``body_force(t)`` nodal values of l(t); both are sampled at t = k tau.
    Solver failures end the run early with ``trajectory.failed`` set.
    """
    grid = disc.grid
    if check_initial:
        initial.validate(grid)
    tau = cfg.tau
    u0 = np.asarray(initial.u0, dtype=float).reshape(grid.n_nodes, grid.dim)
    v0 = np.asarray(initial.v0, dtype=float).reshape(grid.n_nodes, grid.dim)
    chi0 = np.asarray(initial.chi0, dtype=float).reshape(grid.n_nodes)
    u_m1 = u0 - tau * v0
    state = State(0, 0.0, tau, u0, u_m1, chi0.copy(), chi0.copy(), np.zeros(grid.n_nodes))
    rec = _initial_record(disc, u0, state.v, chi0, cfg.penalty)
    traj = Trajectory(tau=tau, snapshot_every=cfg.snapshot_every)
    traj.chi.append(chi0.copy())
    traj.xi.append(np.zeros(grid.n_nodes))
    traj.u[-1] = u_m1
    traj.u[0] = u0
    traj.records.append(rec)
    for k in range(1, cfg.n_steps + 1):
        t = k * tau
        lb, ell = _sample(boundary_load, t), _sample(body_force, t)
        try:
            state, rec = advance(disc, state, cfg, lb, ell, prev_record=rec)
        except (DamageSolverError, LinearSolverError) as exc:
            traj.failed = f"step {k}: {exc}"
            log.warning("run stopped: %s", traj.failed)
            break
        traj.chi.append(state.chi)
        traj.xi.append(state.xi)
        # keep u^{k-1} as well so that v^k stays available at stored levels
        if k % cfg.snapshot_every == 0 or k == cfg.n_steps:
            traj.u[k] = state.u
            traj.u[k - 1] = state.u_prev
        traj.records.append(rec)
        if keep_loads:
            traj.loads.append((lb, ell))
    if cfg.snapshot_every > 1:
        traj.u = {k: v for k, v in traj.u.items() if k < 0 or k % cfg.snapshot_every == 0 or k == cfg.n_steps or (k + 1) in traj.u}
    return traj


# --------------------------------------------------------------------------
# diagnostics


@dataclass
class AuditReport:
    slacks: np.ndarray
    relative: np.ndarray
    identity_residual: np.ndarray
    splitting: np.ndarray
    violations: list
    tol: float

    @property
    def ok(self) -> bool:
        return not self.violations


def energy_audit(traj: Trajectory, tol: float = 1e-8) -> AuditReport:
    """Check the discrete energy inequality step by step.

    slack_k = work_k - (E_k - E_{k-1}) - dissipation_k, with E = kinetic + free
    energy.  For convex f and a convex/concave split of c it is a sum of
    non-negative terms; a step is flagged when slack_k < -tol * scale_k.
    """
    recs = traj.records
    slack, rel, ident, split, bad = [], [], [], [], []
    for prev, rec in zip(recs[:-1], recs[1:]):
        scale = abs(prev.total) + abs(rec.total) + abs(rec.work) + abs(rec.dissipation_increment)
        scale = max(scale, 1e-300)
        predicted = rec.numerical_dissipation + rec.splitting_slack + rec.penalty_work + rec.convexity_defect
        slack.append(rec.slack)
        rel.append(rec.slack / scale)
        ident.append((rec.slack - predicted) / scale)
        split.append(rec.splitting_slack)
        if rec.slack < -tol * scale:
            bad.append(rec.k)
    return AuditReport(np.array(slack), np.array(rel), np.array(ident), np.array(split), bad, tol)


@dataclass
class TruncationReport:
    chi_plus: np.ndarray
    elastic_residual_delta: float
    damage_residual_delta: float
    checked_nodes: int


def truncate_chi(disc: Discretization, traj: Trajectory, cfg: StepConfig) -> TruncationReport:
    """Replace chi by max(chi, 0) and compare step residuals.

    The elasticity residual must not change because c and d are constant on
    (-inf, 0].  The damage residual is compared on nodes whose whole stencil
    is positive at both time levels (the discrete counterpart of {chi > 0}).
    """
    mat = disc.material
    if not mat.constant_below_zero():
        raise ValueError(
            "truncation needs c and d constant on (-inf, 0]; use an extended coefficient (extend_coefficient)"
        )
    chi = traj.chi_array()
    if chi[0].min() < 0 or chi[0].max() > 1:
        raise ValueError("truncation needs initial damage within [0, 1]")
    if traj.snapshot_every != 1:
        raise ValueError("truncation check needs every displacement level (snapshot_every=1)")
    chi_plus = np.maximum(chi, 0.0)
    A = abs(disc.K) + sp.identity(disc.grid.n_nodes)
    el_delta, dm_delta, count = 0.0, 0.0, 0
    for k in range(1, chi.shape[0]):
        lb, ell = traj.loads[k - 1] if traj.loads else (None, None)
        u, u1, u2 = traj.u[k], traj.u[k - 1], traj.u[k - 2]
        r1 = elasticity_residual(disc, chi[k], u, u1, u2, cfg.tau, lb, ell)
        r2 = elasticity_residual(disc, chi_plus[k], u, u1, u2, cfg.tau, lb, ell)
        el_delta = max(el_delta, float(np.max(np.abs(r1 - r2))))

        omega = disc.elastic.nodal_energy(u1)
        g1 = DamageProblem(disc, chi[k - 1], omega, cfg.tau, cfg.penalty).gradient(chi[k])
        g2 = DamageProblem(disc, chi_plus[k - 1], omega, cfg.tau, cfg.penalty).gradient(chi_plus[k])
        neg = ((chi[k] <= 0) | (chi[k - 1] <= 0)).astype(float)
        interior = (A @ neg) == 0
        count += int(interior.sum())
        if interior.any():
            dm_delta = max(dm_delta, float(np.max(np.abs(g1 - g2)[interior])))
    return TruncationReport(chi_plus, el_delta, dm_delta, count)


def write_energy_csv(path: str | Path, traj: Trajectory, provenance: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        w = csv.writer(fh)
        w.writerow(EnergyRecord.CSV_COLUMNS)
        for r in traj.records:
            w.writerow([r.k, repr(r.t)] + [repr(float(getattr(r, c))) for c in EnergyRecord.CSV_COLUMNS[2:-1]] + [r.newton_iterations])
