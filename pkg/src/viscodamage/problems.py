"""Reproducible test scenarios shared by the verification and control layers."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import Grid, boundary_load_vector, build_grid
from .material import MaterialLaw, Penalty, material_preset
from .stepper import Discretization, InitialData, StepConfig, Trajectory, run

__all__ = [
    "TimeProfile",
    "ScaledLoad",
    "Problem",
    "side_traction_load",
    "cosine_profile",
    "standard_problem",
    "healing_problem",
    "bar_problem",
]


@dataclass(frozen=True)
class TimeProfile:
    """Scalar time modulation: ``sine`` is sin(pi t / T)."""

    kind: str = "sine"
    T: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sine", "constant", "ramp"):
            raise ValueError(f"unknown time profile {self.kind!r}")

    def __call__(self, t: float) -> float:
        if self.kind == "sine":
            return float(np.sin(np.pi * t / self.T))
        if self.kind == "ramp":
            return float(min(t / self.T, 1.0))
        return 1.0


@dataclass(frozen=True)
class ScaledLoad:
    """t -> profile(t) * vector.  Picklable replacement for a closure."""

    vector: np.ndarray
    profile: TimeProfile

    def __call__(self, t: float) -> np.ndarray:
        return self.profile(t) * self.vector


@dataclass(frozen=True)
class ConstantField:
    values: np.ndarray

    def __call__(self, t: float) -> np.ndarray:
        return self.values


def side_traction_load(grid: Grid, sides, direction) -> np.ndarray:
    """Load vector of a unit-amplitude constant traction on the given sides."""
    direction = np.asarray(direction, dtype=float).reshape(grid.dim)
    tr = grid.facet_traction(lambda x, n: np.tile(direction, (x.shape[0], 1)), sides=list(sides))
    return boundary_load_vector(grid, tr)


def cosine_profile(grid: Grid, amplitude: float, mean: float = 1.0) -> np.ndarray:
    """mean - amplitude * prod_i cos(pi x_i / L_i); zero normal derivative on the box."""
    v = np.ones(grid.n_nodes)
    for i, L in enumerate(grid.extents):
        v = v * np.cos(np.pi * grid.nodes[:, i] / L)
    return mean - amplitude * v


@dataclass
class Problem:
    """Discretization plus initial data and forcing, ready to be run at any beta."""

    disc: Discretization
    initial: InitialData
    T: float
    tau: float
    traction: ScaledLoad | None = None
    body_force: np.ndarray | None = None
    newton_tol: float = 1e-10
    penalty_kind: str = "moreau_yosida"
    name: str = "custom"

    @property
    def grid(self) -> Grid:
        return self.disc.grid

    @property
    def material(self) -> MaterialLaw:
        return self.disc.material

    def step_config(self, beta: float, tau: float | None = None, **kw) -> StepConfig:
        return StepConfig(
            tau=self.tau if tau is None else tau,
            T=self.T,
            penalty=Penalty(beta, self.penalty_kind),
            newton_tol=self.newton_tol,
            **kw,
        )

    def run(self, beta: float, tau: float | None = None, boundary_load=None, keep_loads: bool = True, **kw) -> Trajectory:
        cfg = self.step_config(beta, tau, **kw)
        load = self.traction if boundary_load is None else boundary_load
        ell = None if self.body_force is None else ConstantField(np.asarray(self.body_force, dtype=float))
        return run(self.disc, self.initial, cfg, boundary_load=load, body_force=ell, keep_loads=keep_loads)

    def with_initial(self, initial: InitialData) -> "Problem":
        return replace(self, initial=initial)


def standard_problem(
    cells: int = 16,
    amplitude: float = 2.0,
    chi_amplitude: float = 0.3,
    T: float = 0.5,
    tau: float = 0.01,
    material: MaterialLaw | None = None,
) -> Problem:
    """Unit square, quadratic coefficient extended with delta = 1,
    f = (chi - 1)^2 / 2, unit Lame constants and viscosity, compressive
    traction -A sin(pi t / T) e_x on the right edge, chi0 = 1 - a cos cos.
    """
    grid = build_grid(2, [1.0, 1.0], [cells, cells])
    mat = material or material_preset("quadratic", delta=1.0, potential="quadratic")
    disc = Discretization(grid, mat)
    load = ScaledLoad(amplitude * side_traction_load(grid, ["right"], [-1.0, 0.0]), TimeProfile("sine", T))
    init = InitialData.at_rest(grid, cosine_profile(grid, chi_amplitude))
    return Problem(disc, init, T, tau, traction=load, name="standard")


def healing_problem(cells: int = 8, T: float = 0.5, tau: float = 0.05, chi0: float = 0.5) -> Problem:
    """No forcing, f = (chi - 1)^2 / 2 pulls chi up from chi0: pure healing drive."""
    grid = build_grid(2, [1.0, 1.0], [cells, cells])
    disc = Discretization(grid, material_preset("quadratic", delta=1.0))
    return Problem(disc, InitialData.at_rest(grid, chi0), T, tau, name="healing")


def bar_problem(
    cells: int = 20,
    T: float = 0.5,
    tau: float = 0.025,
    chi0: float | np.ndarray = 1.0,
    amplitude: float = 1.0,
    profile: str = "sine",
    material: MaterialLaw | None = None,
) -> Problem:
    """Unit bar in 1D pulled at its right end."""
    grid = build_grid(1, [1.0], [cells])
    mat = material or material_preset("quadratic", delta=1.0, dim=1)
    disc = Discretization(grid, mat)
    load = ScaledLoad(amplitude * side_traction_load(grid, ["right"], [1.0]), TimeProfile(profile, T))
    return Problem(disc, InitialData.at_rest(grid, chi0), T, tau, traction=load, name="bar")
