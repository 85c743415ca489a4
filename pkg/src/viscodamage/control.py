"""Boundary traction control: cost functionals, admissible set and optimizers.

Controls are finite expansions b(x, t) = sum_{s,j} c[s, j] g_s(x) phi_j(t) with
g_s a unit traction on one side of the box and phi_j piecewise-linear hats on
a uniform time grid.  The reduced cost j(c) runs the forward solver and
evaluates a tracking functional on the damage trajectory.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .grid import Grid, boundary_load_vector, boundary_norm2
from .problems import Problem
from .stepper import Trajectory
from .verify import parallel_map

__all__ = [
    "ControlBasis",
    "ControlSpace",
    "ControlVector",
    "ControlConfig",
    "ControlProblem",
    "ControlEvaluationError",
    "ControlResult",
    "ContinuationReport",
    "cost",
    "adapted_cost",
    "project_admissible",
    "pattern_search",
    "solve_P_beta",
    "solve_adapted",
    "beta_continuation",
    "write_coefficients",
    "read_coefficients",
    "BoundaryControlEstimator",
]

log = logging.getLogger(__name__)

_SIDES_1D = ("left", "right")
_SIDES_2D = ("bottom", "right", "top", "left")


# --------------------------------------------------------------------------
# parametrization


@dataclass(frozen=True)
class ControlBasis:
    """Spatial shapes (side, direction) times ``n_time`` hat functions on [0, T]."""

    space: tuple
    n_time: int
    T: float

    def __post_init__(self):
        space = tuple((str(s), tuple(float(v) for v in np.atleast_1d(d))) for s, d in self.space)
        object.__setattr__(self, "space", space)
        if not space:
            raise ValueError("control basis needs at least one spatial shape")
        dims = {len(d) for _, d in space}
        if len(dims) != 1:
            raise ValueError("all traction directions must have the same dimension")
        sides = _SIDES_1D if dims == {1} else _SIDES_2D
        for s, _ in space:
            if s not in sides:
                raise ValueError(f"unknown side {s!r}; expected one of {sides}")
        if self.n_time < 1 or not self.T > 0:
            raise ValueError("n_time >= 1 and T > 0 required")

    @property
    def n_space(self) -> int:
        return len(self.space)

    @property
    def n_coeffs(self) -> int:
        return self.n_space * self.n_time

    @property
    def dim(self) -> int:
        return len(self.space[0][1])

    @property
    def id(self) -> str:
        shapes = "|".join(f"{s}:" + ",".join(repr(v) for v in d) for s, d in self.space)
        return f"side-hat;T={self.T!r};n_time={self.n_time};space={shapes}"

    @classmethod
    def from_id(cls, ident: str) -> "ControlBasis":
        kind, *parts = ident.strip().split(";")
        if kind != "side-hat":
            raise ValueError(f"unknown basis kind {kind!r}")
        kv = dict(p.split("=", 1) for p in parts)
        space = []
        for item in kv["space"].split("|"):
            side, vec = item.split(":")
            space.append((side, tuple(float(v) for v in vec.split(","))))
        return cls(tuple(space), int(kv["n_time"]), float(kv["T"]))

    def hats(self, t: float) -> np.ndarray:
        if self.n_time == 1:
            return np.ones(1)
        nodes = np.linspace(0.0, self.T, self.n_time)
        return np.clip(1.0 - np.abs(t - nodes) / (nodes[1] - nodes[0]), 0.0, None)


@dataclass(frozen=True)
class ControlLoad:
    """Picklable t -> boundary load vector of a fixed control."""

    basis: ControlBasis
    loads: np.ndarray
    coeffs: np.ndarray

    def __call__(self, t: float) -> np.ndarray:
        return self.loads.T @ (self.coeffs @ self.basis.hats(t))


class ControlSpace:
    """A basis bound to a grid and time step, with the admissible set.

    Admissible: b_min <= c <= b_max coefficient-wise and surrogate norm <= norm_cap,
    the surrogate being ||b||^2_{L2(Sigma)} + tau sum_k ||(b^k - b^{k-1})/tau||^2_{L2(Gamma)}.
    """

    def __init__(self, basis: ControlBasis, grid: Grid, tau: float, b_min: float = -1.0, b_max: float = 1.0, norm_cap: float = 10.0):
        if basis.dim != grid.dim:
            raise ValueError("basis directions do not match the grid dimension")
        if not (b_min <= 0.0 <= b_max):
            raise ValueError(f"box [{b_min}, {b_max}] must contain 0 so that the admissible set is star-shaped")
        if not norm_cap > 0:
            raise ValueError("norm_cap must be positive")
        self.basis, self.grid, self.tau = basis, grid, float(tau)
        self.b_min, self.b_max, self.norm_cap = float(b_min), float(b_max), float(norm_cap)
        M = int(round(basis.T / tau))
        if abs(M * tau - basis.T) > 1e-9 * basis.T:
            raise ValueError("T / tau must be an integer")
        self.n_steps = M
        shapes = []
        for side, d in basis.space:
            d = np.asarray(d)
            shapes.append(grid.facet_traction(lambda x, n, d=d: np.tile(d, (x.shape[0], 1)), sides=[side]))
        self.loads = np.array([boundary_load_vector(grid, s) for s in shapes])
        n = len(shapes)
        self.gram = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                # polarization of the boundary norm
                self.gram[i, j] = 0.25 * (boundary_norm2(grid, shapes[i] + shapes[j]) - boundary_norm2(grid, shapes[i] - shapes[j]))
        self.phi = np.array([basis.hats(k * tau) for k in range(M + 1)])

    def shape(self, coeffs) -> np.ndarray:
        return np.asarray(coeffs, dtype=float).reshape(self.basis.n_space, self.basis.n_time)

    def amplitudes(self, coeffs) -> np.ndarray:
        """a[k, s] = spatial amplitudes at t_k, k = 0..M."""
        return self.phi @ self.shape(coeffs).T

    def norm2(self, coeffs) -> float:
        """||b||^2_{L2(Sigma)} = tau sum_{k=1..M} (b^k, b^k)_Gamma."""
        a = self.amplitudes(coeffs)[1:]
        return float(self.tau * np.einsum("ks,st,kt->", a, self.gram, a))

    def surrogate(self, coeffs) -> float:
        a = self.amplitudes(coeffs)
        da = np.diff(a, axis=0) / self.tau
        return self.norm2(coeffs) + float(self.tau * np.einsum("ks,st,kt->", da, self.gram, da))

    def is_admissible(self, coeffs, rtol: float = 1e-12) -> bool:
        c = np.asarray(coeffs, dtype=float).ravel()
        return bool(
            np.all(c >= self.b_min) and np.all(c <= self.b_max) and np.sqrt(self.surrogate(c)) <= self.norm_cap * (1 + rtol)
        )

    def project(self, coeffs) -> np.ndarray:
        c = np.asarray(coeffs, dtype=float).ravel()
        if self.is_admissible(c):
            return c.copy()
        c = np.clip(c, self.b_min, self.b_max)
        n = np.sqrt(self.surrogate(c))
        if n > self.norm_cap * (1 + 1e-12):
            c = c * (self.norm_cap / n)
        return c

    def load(self, coeffs) -> ControlLoad:
        return ControlLoad(self.basis, self.loads, self.shape(coeffs))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.basis.n_coeffs)


@dataclass(frozen=True)
class ControlVector:
    space: ControlSpace
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).ravel()
        if c.size != self.space.basis.n_coeffs:
            raise ValueError(f"expected {self.space.basis.n_coeffs} coefficients, got {c.size}")
        object.__setattr__(self, "coeffs", c)

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.space.norm2(self.coeffs)))

    def admissible(self) -> bool:
        return self.space.is_admissible(self.coeffs)


def project_admissible(b: ControlVector) -> ControlVector:
    """Clip to the box, then scale into the norm cap; identity on admissible input."""
    return ControlVector(b.space, b.space.project(b.coeffs))


# --------------------------------------------------------------------------
# cost


@dataclass
class ControlConfig:
    lambda_Q: float = 0.0
    lambda_Omega: float = 1.0
    lambda_Sigma: float = 0.0
    chi_Q: np.ndarray | float = 1.0
    chi_T: np.ndarray | float = 1.0
    tracking: str = "sup"
    beta_schedule: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4)
    method: str = "pattern"
    initial_step: float = 0.25
    min_step: float = 1e-3
    max_evals: int = 400
    restarts: int = 5
    restart_every_level: bool = False
    seed: int = 0
    workers: int = 1
    anchor: np.ndarray | None = None
    proximal_weight: float = 1.0
    continuation_tol: float = 1e-2
    fd_step: float = 1e-4

    def __post_init__(self):
        lam = (self.lambda_Q, self.lambda_Omega, self.lambda_Sigma)
        if min(lam) < 0 or max(lam) == 0:
            raise ValueError("cost weights must be non-negative and not all zero")
        if self.tracking not in ("sup", "l2"):
            raise ValueError("tracking must be 'sup' or 'l2'")
        if self.method not in ("pattern", "gradient"):
            raise ValueError("method must be 'pattern' or 'gradient'")
        if self.method == "gradient" and (self.lambda_Q or self.lambda_Omega):
            raise ValueError("finite-difference gradient descent is only offered for the smooth case lambda_Q = lambda_Omega = 0")
        s = list(self.beta_schedule)
        if not s or any(not 0 < b < 1 for b in s) or any(b2 >= b1 for b1, b2 in zip(s, s[1:])):
            raise ValueError("beta_schedule must be strictly decreasing in (0, 1)")
        if not (0 < self.min_step <= self.initial_step):
            raise ValueError("need 0 < min_step <= initial_step")
        if self.max_evals < 1 or self.restarts < 1 or self.workers < 1:
            raise ValueError("max_evals, restarts and workers must be >= 1")
        if not self.proximal_weight > 0:
            raise ValueError("proximal_weight must be positive")


def _target(target, k: int, n: int) -> np.ndarray:
    t = np.asarray(target, dtype=float)
    if t.ndim == 2:
        return t[k]
    return np.broadcast_to(t, (n,))


def cost(chi: np.ndarray, coeffs, space: ControlSpace, cfg: ControlConfig, mass=None) -> float:
    """J = lQ/2 |chi - chi_Q|_Q + lO/2 |chi(T) - chi_T|_Omega + lS/2 ||b||^2_{L2(Sigma)}.

    ``chi`` holds levels 0..M; the space-time term ranges over k = 1..M (the
    piecewise-constant interpolant).  ``sup`` tracking takes nodal maxima,
    ``l2`` squared mass-matrix norms (requires ``mass``).
    """
    chi = np.asarray(chi, dtype=float)
    if chi.ndim != 2 or chi.shape[1] != space.grid.n_nodes:
        raise ValueError(f"damage trajectory shape {chi.shape} does not match the control grid")
    if chi.shape[0] != space.n_steps + 1:
        raise ValueError("damage trajectory length does not match the control time grid")
    M, n = chi.shape[0] - 1, chi.shape[1]
    j = 0.0
    if cfg.tracking == "sup":
        if cfg.lambda_Q:
            dev = max(float(np.max(np.abs(chi[k] - _target(cfg.chi_Q, k, n)))) for k in range(1, M + 1))
            j += 0.5 * cfg.lambda_Q * dev
        if cfg.lambda_Omega:
            j += 0.5 * cfg.lambda_Omega * float(np.max(np.abs(chi[M] - _target(cfg.chi_T, M, n))))
    else:
        if mass is None:
            raise ValueError("l2 tracking needs the mass matrix")
        if cfg.lambda_Q:
            s = sum(float(d @ (mass @ d)) for d in (chi[k] - _target(cfg.chi_Q, k, n) for k in range(1, M + 1)))
            j += 0.5 * cfg.lambda_Q * space.tau * s
        if cfg.lambda_Omega:
            d = chi[M] - _target(cfg.chi_T, M, n)
            j += 0.5 * cfg.lambda_Omega * float(d @ (mass @ d))
    if cfg.lambda_Sigma:
        j += 0.5 * cfg.lambda_Sigma * space.norm2(coeffs)
    return j


def adapted_cost(chi, coeffs, space: ControlSpace, cfg: ControlConfig, anchor=None, mass=None) -> float:
    """J + w/2 ||b - anchor||^2_{L2(Sigma)} (w = proximal_weight, 1 by default)."""
    anchor = cfg.anchor if anchor is None else anchor
    if anchor is None:
        raise ValueError("adapted cost needs an anchor control")
    diff = np.asarray(coeffs, dtype=float).ravel() - np.asarray(anchor, dtype=float).ravel()
    return cost(chi, coeffs, space, cfg, mass) + 0.5 * cfg.proximal_weight * space.norm2(diff)


class ControlEvaluationError(RuntimeError):
    def __init__(self, coeffs, message: str):
        super().__init__(f"forward solve failed for control {np.array2string(np.asarray(coeffs), precision=6)}: {message}")
        self.coeffs = np.asarray(coeffs)


class ControlProblem:
    """Forward problem plus control space and cost configuration."""

    def __init__(self, problem: Problem, space: ControlSpace, cfg: ControlConfig):
        if space.tau != problem.tau or space.basis.T != problem.T:
            raise ValueError("control time grid must match the problem's tau and T")
        if not space.grid.same_layout(problem.grid):
            raise ValueError("control grid does not match the problem grid")
        self.problem, self.space, self.cfg = problem, space, cfg

    def simulate(self, coeffs, beta: float) -> Trajectory:
        c = np.asarray(coeffs, dtype=float).ravel()
        tr = self.problem.run(beta, boundary_load=self.space.load(c), keep_loads=False)
        if tr.failed:
            raise ControlEvaluationError(c, tr.failed)
        return tr

    def reduced_cost(self, coeffs, beta: float, anchor=None) -> tuple[float, Trajectory]:
        tr = self.simulate(coeffs, beta)
        chi = tr.chi_array()
        if anchor is None:
            return cost(chi, coeffs, self.space, self.cfg, self.problem.disc.M), tr
        return adapted_cost(chi, coeffs, self.space, self.cfg, anchor, self.problem.disc.M), tr


@dataclass(frozen=True)
class _Objective:
    cp: ControlProblem
    beta: float
    anchor: np.ndarray | None = None

    def __call__(self, c) -> float:
        try:
            return self.cp.reduced_cost(c, self.beta, self.anchor)[0]
        except ControlEvaluationError as exc:
            log.warning("%s", exc)
            return float("inf")


# --------------------------------------------------------------------------
# optimizers


@dataclass
class SearchResult:
    x: np.ndarray
    value: float
    evals: int
    converged: bool
    step: float
    history: list = field(default_factory=list)


class _CachedBatch:
    def __init__(self, fn: Callable, workers: int):
        self.fn, self.workers = fn, workers
        self.cache: dict[bytes, float] = {}
        self.history: list[tuple[np.ndarray, float]] = []

    @property
    def evals(self) -> int:
        return len(self.cache)

    def __call__(self, points: list[np.ndarray]) -> list[float]:
        todo, seen = [], set()
        for p in points:
            key = p.tobytes()
            if key not in self.cache and key not in seen:
                todo.append(p)
                seen.add(key)
        # order of evaluation never changes the result: values are merged by key
        for p, v in zip(todo, parallel_map(self.fn, todo, self.workers)):
            self.cache[p.tobytes()] = float(v)
            self.history.append((p.copy(), float(v)))
        return [self.cache[p.tobytes()] for p in points]


def pattern_search(
    fn: Callable,
    x0,
    project: Callable,
    initial_step: float,
    min_step: float,
    max_evals: int,
    workers: int = 1,
    batch: _CachedBatch | None = None,
) -> SearchResult:
    """Compass search: poll +-step along each axis, move to the best improving
    point, halve the step when no poll point improves.  Iterates stay
    admissible through ``project``.
    """
    batch = batch or _CachedBatch(fn, workers)
    start = batch.evals
    x = project(np.asarray(x0, dtype=float))
    fx = batch([x])[0]
    step = float(initial_step)
    n = x.size
    while step >= min_step and batch.evals - start < max_evals:
        polls = []
        for i in range(n):
            for s in (step, -step):
                p = x.copy()
                p[i] += s
                p = project(p)
                if not np.array_equal(p, x):
                    polls.append(p)
        if not polls:
            step *= 0.5
            continue
        vals = batch(polls)
        i = int(np.argmin(vals))
        if vals[i] < fx:
            x, fx = polls[i], vals[i]
        else:
            step *= 0.5
    return SearchResult(x, fx, batch.evals - start, step < min_step, step, batch.history)


def gradient_descent(fn, x0, project, cfg: ControlConfig, workers: int = 1) -> SearchResult:
    """Projected finite-difference gradient descent with backtracking."""
    batch = _CachedBatch(fn, workers)
    x = project(np.asarray(x0, dtype=float))
    fx = batch([x])[0]
    step = cfg.initial_step
    h = cfg.fd_step
    while step >= cfg.min_step and batch.evals < cfg.max_evals:
        pts = []
        for i in range(x.size):
            for s in (h, -h):
                p = x.copy()
                p[i] += s
                pts.append(p)
        v = batch(pts)
        g = (np.array(v[0::2]) - np.array(v[1::2])) / (2 * h)
        gn = np.linalg.norm(g)
        if gn == 0:
            break
        trial = project(x - step * g / gn)
        ft = batch([trial])[0]
        if ft < fx:
            x, fx = trial, ft
        else:
            step *= 0.5
    return SearchResult(x, fx, batch.evals, step < cfg.min_step, step, batch.history)


@dataclass
class ControlResult:
    coeffs: np.ndarray
    value: float
    evals: int
    converged: bool
    beta: float
    history: list = field(default_factory=list)
    trajectory: Trajectory | None = None
    anchor_distance: float | None = None


def _optimize(cp: ControlProblem, beta: float, x0, anchor, restarts: int, rng: np.random.Generator) -> ControlResult:
    cfg, space = cp.cfg, cp.space
    fn = _Objective(cp, beta, None if anchor is None else np.asarray(anchor, dtype=float).ravel())
    starts = [space.project(np.asarray(x0, dtype=float).ravel())]
    for _ in range(restarts - 1):
        starts.append(space.project(rng.uniform(space.b_min, space.b_max, space.basis.n_coeffs)))
    best, total, history = None, 0, []
    for s in starts:
        if cfg.method == "pattern":
            r = pattern_search(fn, s, space.project, cfg.initial_step, cfg.min_step, cfg.max_evals, cfg.workers)
        else:
            r = gradient_descent(fn, s, space.project, cfg, cfg.workers)
        total += r.evals
        history.extend(r.history)
        if best is None or r.value < best.value:
            best = r
    tr = cp.simulate(best.x, beta)
    return ControlResult(best.x, best.value, total, best.converged, beta, history, tr)


def solve_P_beta(cp: ControlProblem, beta: float, x0=None, restarts: int | None = None, seed: int | None = None) -> ControlResult:
    """Minimize the reduced cost at fixed beta; never worse than the initial guess."""
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    cfg = cp.cfg
    x0 = cp.space.zeros() if x0 is None else x0
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    return _optimize(cp, beta, x0, None, cfg.restarts if restarts is None else restarts, rng)


def solve_adapted(cp: ControlProblem, beta: float, anchor=None, x0=None, restarts: int | None = None, seed: int | None = None) -> ControlResult:
    """Minimize J + w/2 ||b - anchor||^2.  The search starts at the anchor, so
    the returned value never exceeds the adapted cost of the anchor."""
    anchor = cp.cfg.anchor if anchor is None else anchor
    if anchor is None:
        raise ValueError("adapted problem needs an anchor control")
    anchor = np.asarray(anchor, dtype=float).ravel()
    if not cp.space.is_admissible(anchor):
        raise ValueError("anchor control is not admissible")
    cfg = cp.cfg
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    res = _optimize(cp, beta, anchor if x0 is None else x0, anchor, cfg.restarts if restarts is None else restarts, rng)
    if x0 is not None:
        # keep the anchor as a candidate even when starting elsewhere
        fa = _Objective(cp, beta, anchor)(anchor)
        if fa <= res.value:
            res = replace(res, coeffs=anchor.copy(), value=fa, trajectory=cp.simulate(anchor, beta))
    res.anchor_distance = float(np.sqrt(cp.space.norm2(res.coeffs - anchor)))
    return res


@dataclass
class ContinuationReport:
    rows: list
    adapted: bool
    checks: dict
    results: list = field(default_factory=list)

    COLUMNS = ("beta", "j_star", "norm_b", "dist_prev", "evals", "converged")

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_csv(self, path: str | Path | None = None, provenance: str | None = None) -> str:
        import io

        buf = io.StringIO()
        if provenance:
            buf.write(f"# {provenance}\n")
        w = csv.writer(buf)
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([repr(float(r["beta"])), repr(float(r["j_star"])), repr(float(r["norm_b"])),
                        repr(float(r["dist_prev"])), int(r["evals"]), int(bool(r["converged"]))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def beta_continuation(cp: ControlProblem, schedule=None, adapted: bool = False, anchor=None, x0=None) -> ContinuationReport:
    """Solve along a decreasing beta schedule, warm-starting from the previous optimum.

    Random restarts are used on the first level only unless
    ``restart_every_level`` is set.  For adapted runs every level minimizes
    the proximal cost around ``anchor``.
    """
    cfg = cp.cfg
    schedule = list(cfg.beta_schedule if schedule is None else schedule)
    if any(b2 >= b1 for b1, b2 in zip(schedule, schedule[1:])):
        raise ValueError("beta schedule must be strictly decreasing")
    anchor = cfg.anchor if anchor is None else anchor
    if adapted and anchor is None:
        raise ValueError("adapted continuation needs an anchor control")
    rows, results = [], []
    prev = cp.space.zeros() if x0 is None else np.asarray(x0, dtype=float).ravel()
    if adapted and x0 is None:
        prev = np.asarray(anchor, dtype=float).ravel()
    for i, beta in enumerate(schedule):
        restarts = cfg.restarts if (i == 0 or cfg.restart_every_level) else 1
        try:
            if adapted:
                res = solve_adapted(cp, beta, anchor, x0=None if i == 0 else prev, restarts=restarts, seed=cfg.seed + i)
            else:
                res = solve_P_beta(cp, beta, prev, restarts=restarts, seed=cfg.seed + i)
        except ControlEvaluationError as exc:
            log.warning("continuation stopped at beta=%g: %s", beta, exc)
            break
        rows.append(
            {
                "beta": beta,
                "j_star": res.value,
                "norm_b": float(np.sqrt(cp.space.norm2(res.coeffs))),
                "dist_prev": float(np.sqrt(cp.space.norm2(res.coeffs - prev))) if i else 0.0,
                "evals": res.evals,
                "converged": res.converged,
            }
        )
        results.append(res)
        prev = res.coeffs
    j = np.array([r["j_star"] for r in rows])
    diffs = np.abs(np.diff(j))
    checks = {
        "complete": len(rows) == len(schedule),
        "differences_decreasing": bool(np.all(diffs[1:] <= diffs[:-1])) if diffs.size > 1 else True,
        "final_difference_small": bool(diffs[-1] <= cfg.continuation_tol) if diffs.size else True,
    }
    if adapted and results:
        checks["anchor_reached"] = bool(np.max(np.abs(results[-1].coeffs - np.asarray(anchor).ravel())) <= cfg.min_step)
    return ContinuationReport(rows, adapted, checks, results)


# --------------------------------------------------------------------------
# persistence


def write_coefficients(path: str | Path, basis: ControlBasis, coeffs, provenance: str | None = None) -> None:
    c = np.asarray(coeffs, dtype=float).ravel()
    lines = []
    if provenance:
        lines.append(f"# {provenance}")
    lines += [f"basis {basis.id}", f"coeffs {c.size}"] + [repr(float(v)) for v in c]
    Path(path).write_text("\n".join(lines) + "\n")


def read_coefficients(path: str | Path) -> tuple[ControlBasis, np.ndarray]:
    lines = [l for l in Path(path).read_text().splitlines() if l.strip() and not l.startswith("#")]
    if len(lines) < 2 or not lines[0].startswith("basis ") or not lines[1].startswith("coeffs "):
        raise ValueError(f"{path}: not a coefficient file")
    basis = ControlBasis.from_id(lines[0][6:])
    n = int(lines[1][7:])
    c = np.array([float(v) for v in lines[2:]])
    if c.size != n or n != basis.n_coeffs:
        raise ValueError(f"{path}: expected {basis.n_coeffs} coefficients, found {c.size}")
    return basis, c


# --------------------------------------------------------------------------
# estimator facade


class BoundaryControlEstimator(BaseEstimator):
    """Estimator-style facade over solve_P_beta.

    ``fit(problem)`` optimizes the traction for a forward Problem,
    ``predict(problem)`` returns the controlled damage trajectory and
    ``score(problem)`` the negated reduced cost (larger is better).
    """

    def __init__(
        self,
        beta: float = 1e-2,
        sides=("right",),
        directions=((-1.0, 0.0),),
        n_time: int = 2,
        lambda_Q: float = 0.0,
        lambda_Omega: float = 1.0,
        lambda_Sigma: float = 0.0,
        chi_Q=1.0,
        chi_T=1.0,
        tracking: str = "sup",
        b_min: float = -1.0,
        b_max: float = 1.0,
        norm_cap: float = 10.0,
        initial_step: float = 0.25,
        min_step: float = 1e-3,
        max_evals: int = 400,
        restarts: int = 5,
        seed: int = 0,
        workers: int = 1,
    ):
        self.beta = beta
        self.sides = sides
        self.directions = directions
        self.n_time = n_time
        self.lambda_Q = lambda_Q
        self.lambda_Omega = lambda_Omega
        self.lambda_Sigma = lambda_Sigma
        self.chi_Q = chi_Q
        self.chi_T = chi_T
        self.tracking = tracking
        self.b_min = b_min
        self.b_max = b_max
        self.norm_cap = norm_cap
        self.initial_step = initial_step
        self.min_step = min_step
        self.max_evals = max_evals
        self.restarts = restarts
        self.seed = seed
        self.workers = workers

    def _control_problem(self, problem: Problem) -> ControlProblem:
        basis = ControlBasis(tuple(zip(self.sides, self.directions)), self.n_time, problem.T)
        space = ControlSpace(basis, problem.grid, problem.tau, self.b_min, self.b_max, self.norm_cap)
        cfg = ControlConfig(
            lambda_Q=self.lambda_Q,
            lambda_Omega=self.lambda_Omega,
            lambda_Sigma=self.lambda_Sigma,
            chi_Q=self.chi_Q,
            chi_T=self.chi_T,
            tracking=self.tracking,
            beta_schedule=(self.beta,),
            initial_step=self.initial_step,
            min_step=self.min_step,
            max_evals=self.max_evals,
            restarts=self.restarts,
            seed=self.seed,
            workers=self.workers,
        )
        return ControlProblem(problem, space, cfg)

    def fit(self, problem: Problem, y=None):
        cp = self._control_problem(problem)
        res = solve_P_beta(cp, self.beta)
        self.coef_ = res.coeffs
        self.cost_ = res.value
        self.n_evals_ = res.evals
        self.converged_ = res.converged
        self.basis_ = cp.space.basis
        return self

    def _check_fitted(self):
        if not hasattr(self, "coef_"):
            raise RuntimeError("estimator is not fitted; call fit(problem) first")

    def predict(self, problem: Problem) -> np.ndarray:
        self._check_fitted()
        return self._control_problem(problem).simulate(self.coef_, self.beta).chi_array()

    def score(self, problem: Problem, y=None) -> float:
        self._check_fitted()
        return -self._control_problem(problem).reduced_cost(self.coef_, self.beta)[0]
