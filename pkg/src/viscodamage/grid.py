"""Structured first-order finite elements on an interval or a rectangle.

Linear elements in 1D, bilinear quadrilaterals in 2D, a 2-point Gauss rule
per axis.  Vector fields use interleaved degrees of freedom
(``node * dim + component``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .material import StiffnessTensor

__all__ = [
    "Grid",
    "Facet",
    "Field",
    "AssembledForm",
    "LinearSolverError",
    "build_grid",
    "assemble_weighted_elasticity",
    "assemble_scalar_laplace",
    "assemble_mass",
    "assemble_boundary_load",
    "quadrature_integral",
    "solve_spd",
    "write_snapshot",
    "read_snapshot",
]

log = logging.getLogger(__name__)

_GAUSS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
DIRECT_SOLVE_LIMIT = 200_000


class LinearSolverError(RuntimeError):
    def __init__(self, message: str, residuals: Sequence[float] = ()):
        super().__init__(message)
        self.residuals = list(residuals)


@dataclass(frozen=True)
class Facet:
    nodes: tuple[int, ...]
    normal: np.ndarray
    measure: float
    side: str


@dataclass(frozen=True)
class Grid:
    dim: int
    extents: tuple[float, ...]
    cells_per_axis: tuple[int, ...]
    nodes: np.ndarray = field(repr=False)
    cells: np.ndarray = field(repr=False)
    boundary_facets: tuple[Facet, ...] = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def h(self) -> np.ndarray:
        return np.asarray(self.extents) / np.asarray(self.cells_per_axis)

    @property
    def shape(self) -> tuple[int, ...]:
        """Node lattice shape, x fastest (row-major over (ny+1, nx+1))."""
        return tuple(n + 1 for n in reversed(self.cells_per_axis))

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(np.concatenate([f.nodes for f in self.boundary_facets]))

    @cached_property
    def reference(self) -> dict:
        """Shape values, physical gradients and weights at the Gauss points."""
        h = self.h
        if self.dim == 1:
            g = _GAUSS
            N = np.stack([1 - g, g], axis=1)
            dN = np.stack([-np.ones(2), np.ones(2)], axis=1)[:, :, None] / h[0]
            w = np.full(2, 0.5 * h[0])
        else:
            gx, gy = np.meshgrid(_GAUSS, _GAUSS, indexing="xy")
            x, y = gx.ravel(), gy.ravel()
            N = np.stack([(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y], axis=1)
            dx = np.stack([-(1 - y), 1 - y, y, -y], axis=1) / h[0]
            dy = np.stack([-(1 - x), -x, x, 1 - x], axis=1) / h[1]
            dN = np.stack([dx, dy], axis=2)
            w = np.full(4, 0.25 * h[0] * h[1])
        return {"N": N, "dN": dN, "w": w}

    @cached_property
    def quadrature_points(self) -> np.ndarray:
        """Physical Gauss point coordinates, shape (n_cells, n_q, dim)."""
        N = self.reference["N"]
        return np.einsum("qa,cad->cqd", N, self.nodes[self.cells])

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        return np.asarray(mass_matrix(self).sum(axis=1)).ravel()

    def interpolate(self, values: np.ndarray) -> np.ndarray:
        """Nodal scalar (n_nodes,) or vector (n_nodes, k) values at the Gauss points."""
        values = np.asarray(values, dtype=float)
        return np.einsum("qa,ca...->cq...", self.reference["N"], values[self.cells])

    def nodal(self, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return np.asarray(func(self.nodes), dtype=float)

    def facet_traction(
        self,
        func: Callable[[np.ndarray, np.ndarray], np.ndarray],
        sides: Sequence[str] | None = None,
    ) -> np.ndarray:
        """Facet-wise traction values, shape (n_facets, nodes_per_facet, dim).

        ``func(x, normal)`` is evaluated at the facet end points separately on
        every facet, so a corner node carries independent values on its two
        edges.  Facets whose side is not in ``sides`` get zero traction.
        """
        out = np.zeros((len(self.boundary_facets), len(self.boundary_facets[0].nodes), self.dim))
        for i, f in enumerate(self.boundary_facets):
            if sides is not None and f.side not in sides:
                continue
            x = self.nodes[list(f.nodes)]
            out[i] = np.broadcast_to(func(x, f.normal), out[i].shape)
        return out

    def boundary_node_neighbours(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(boundary node, inward neighbour, spacing) triples along each facet normal."""
        b, inner, hs = [], [], []
        idx = np.arange(self.n_nodes).reshape(self.shape)
        if self.dim == 1:
            b += [idx[0], idx[-1]]
            inner += [idx[1], idx[-2]]
            hs += [self.h[0]] * 2
        else:
            for sl_b, sl_i, hh in (
                ((slice(None), 0), (slice(None), 1), self.h[0]),
                ((slice(None), -1), (slice(None), -2), self.h[0]),
                ((0, slice(None)), (1, slice(None)), self.h[1]),
                ((-1, slice(None)), (-2, slice(None)), self.h[1]),
            ):
                b.append(idx[sl_b])
                inner.append(idx[sl_i])
                hs.append(np.full(idx[sl_b].shape, hh))
        return np.concatenate([np.atleast_1d(x) for x in b]), np.concatenate(
            [np.atleast_1d(x) for x in inner]
        ), np.concatenate([np.atleast_1d(x) for x in hs])

    def max_normal_derivative(self, values: np.ndarray) -> float:
        """Largest one-sided discrete normal derivative of a nodal scalar."""
        b, inner, hs = self.boundary_node_neighbours()
        values = np.asarray(values, dtype=float)
        return float(np.max(np.abs(values[b] - values[inner]) / hs))

    def same_layout(self, other: "Grid") -> bool:
        return (
            self.dim == other.dim
            and tuple(self.cells_per_axis) == tuple(other.cells_per_axis)
            and np.allclose(self.extents, other.extents)
        )


def build_grid(dim: int, extents: Sequence[float], cells_per_axis: Sequence[int]) -> Grid:
    """Uniform grid of [0, L_x] (x [0, L_y]) with enumerated boundary facets."""
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    extents = tuple(float(e) for e in np.atleast_1d(extents))
    cells = tuple(int(n) for n in np.atleast_1d(cells_per_axis))
    if len(extents) != dim or len(cells) != dim:
        raise ValueError("extents and cells_per_axis need one entry per axis")
    if any(not e > 0 for e in extents):
        raise ValueError(f"extents must be positive, got {extents}")
    if any(n < 1 for n in cells):
        raise ValueError(f"cells per axis must be >= 1, got {cells}")

    if dim == 1:
        (L,), (n,) = extents, cells
        nodes = np.linspace(0.0, L, n + 1)[:, None]
        conn = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
        facets = (
            Facet((0,), np.array([-1.0]), 1.0, "left"),
            Facet((n,), np.array([1.0]), 1.0, "right"),
        )
    else:
        (Lx, Ly), (nx, ny) = extents, cells
        xs, ys = np.linspace(0.0, Lx, nx + 1), np.linspace(0.0, Ly, ny + 1)
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
        idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
        conn = np.stack(
            [idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel(), idx[1:, 1:].ravel(), idx[1:, :-1].ravel()],
            axis=1,
        )
        hx, hy = Lx / nx, Ly / ny
        facets = []
        for i in range(nx):
            facets.append(Facet((int(idx[0, i]), int(idx[0, i + 1])), np.array([0.0, -1.0]), hx, "bottom"))
        for j in range(ny):
            facets.append(Facet((int(idx[j, nx]), int(idx[j + 1, nx])), np.array([1.0, 0.0]), hy, "right"))
        for i in range(nx):
            facets.append(Facet((int(idx[ny, i]), int(idx[ny, i + 1])), np.array([0.0, 1.0]), hx, "top"))
        for j in range(ny):
            facets.append(Facet((int(idx[j, 0]), int(idx[j + 1, 0])), np.array([-1.0, 0.0]), hy, "left"))
        facets = tuple(facets)
    for f in facets:
        f.normal.setflags(write=False)
    nodes.setflags(write=False)
    conn.setflags(write=False)
    return Grid(dim, extents, cells, nodes, conn, facets)


# --------------------------------------------------------------------------
# fields and forms


@dataclass
class Field:
    """Nodal values of a scalar or vector field on a grid."""

    grid: Grid
    values: np.ndarray
    name: str = "field"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[0] != self.grid.n_nodes or v.ndim not in (1, 2):
            raise ValueError(f"field {self.name!r}: expected {self.grid.n_nodes} nodal rows, got {v.shape}")
        if v.ndim == 2 and v.shape[1] != self.grid.dim:
            raise ValueError(f"vector field {self.name!r} needs {self.grid.dim} components")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"field {self.name!r} has non-finite values")
        self.values = v

    @property
    def components(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class AssembledForm:
    kind: str
    data: object

    @property
    def shape(self):
        return self.data.shape

    def __matmul__(self, other):
        return self.data @ np.asarray(other)

    def toarray(self) -> np.ndarray:
        return self.data.toarray() if sp.issparse(self.data) else np.asarray(self.data)


def _scalar_pattern(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    c = grid.cells
    nl = c.shape[1]
    return np.repeat(c, nl, axis=1).ravel(), np.tile(c, (1, nl)).ravel()


def _vector_dofs(grid: Grid) -> np.ndarray:
    d = grid.dim
    return (grid.cells[:, :, None] * d + np.arange(d)).reshape(grid.n_cells, -1)


def _assemble(rows, cols, vals, n) -> sp.csr_matrix:
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def mass_matrix(grid: Grid) -> sp.csr_matrix:
    ref = grid.reference
    Me = np.einsum("q,qa,qb->ab", ref["w"], ref["N"], ref["N"])
    rows, cols = _scalar_pattern(grid)
    vals = np.broadcast_to(Me, (grid.n_cells,) + Me.shape)
    return _assemble(rows, cols, vals, grid.n_nodes)


def laplace_matrix(grid: Grid) -> sp.csr_matrix:
    ref = grid.reference
    Ke = np.einsum("q,qak,qbk->ab", ref["w"], ref["dN"], ref["dN"])
    rows, cols = _scalar_pattern(grid)
    vals = np.broadcast_to(Ke, (grid.n_cells,) + Ke.shape)
    return _assemble(rows, cols, vals, grid.n_nodes)


def vector_mass_matrix(grid: Grid) -> sp.csr_matrix:
    return sp.kron(mass_matrix(grid), sp.identity(grid.dim), format="csr")


class ElasticityOperator:
    """Precomputed pieces for c-weighted elasticity forms on one grid.

    With a nodal weight w interpolated by the shape functions, the element
    matrix is sum_a w_a K^(a), where K^(a) = sum_q w_q N_a(x_q) B_q^T C B_q.
    """

    def __init__(self, grid: Grid, C: StiffnessTensor):
        if C.dim != grid.dim:
            raise ValueError(f"stiffness dim {C.dim} does not match grid dim {grid.dim}")
        self.grid, self.C = grid, C
        ref = grid.reference
        d, nl = grid.dim, grid.cells.shape[1]
        # B[q, a, i, b, j] = dN[q,a,k] C[i,k,j,l] dN[q,b,l]
        B = np.einsum("qak,ikjl,qbl->qaibj", ref["dN"], C.tensor, ref["dN"]).reshape(len(ref["w"]), nl * d, nl * d)
        self.local = np.einsum("q,qa,qxy->axy", ref["w"], ref["N"], B)
        dofs = _vector_dofs(grid)
        m = dofs.shape[1]
        self.rows = np.repeat(dofs, m, axis=1).ravel()
        self.cols = np.tile(dofs, (1, m)).ravel()
        self.n = grid.n_nodes * d

    def matrix(self, weight: np.ndarray) -> sp.csr_matrix:
        weight = np.asarray(weight, dtype=float)
        if weight.shape != (self.grid.n_nodes,):
            raise ValueError(f"weight must be nodal with shape ({self.grid.n_nodes},), got {weight.shape}")
        Ke = np.einsum("ca,axy->cxy", weight[self.grid.cells], self.local)
        return _assemble(self.rows, self.cols, Ke, self.n)

    def strain(self, u: np.ndarray) -> np.ndarray:
        """Symmetric strain at the Gauss points, shape (n_cells, n_q, dim, dim)."""
        u = np.asarray(u, dtype=float).reshape(self.grid.n_nodes, self.grid.dim)
        g = np.einsum("qak,cai->cqik", self.grid.reference["dN"], u[self.grid.cells])
        return 0.5 * (g + np.swapaxes(g, -1, -2))

    def energy_density(self, u: np.ndarray) -> np.ndarray:
        """C eps(u) : eps(u) at the Gauss points, shape (n_cells, n_q)."""
        e = self.strain(u)
        return np.einsum("cqij,ijkl,cqkl->cq", e, self.C.tensor, e)

    def nodal_energy(self, u: np.ndarray) -> np.ndarray:
        """omega_a = int N_a C eps(u):eps(u); u^T K_w u = sum_a w_a omega_a."""
        W = self.energy_density(u)
        ref = self.grid.reference
        contrib = np.einsum("q,qa,cq->ca", ref["w"], ref["N"], W)
        return np.bincount(self.grid.cells.ravel(), contrib.ravel(), minlength=self.grid.n_nodes)


def assemble_weighted_elasticity(grid: Grid, C: StiffnessTensor, weight) -> AssembledForm:
    """Sparse matrix of int w C eps(u) : eps(zeta) with nodal weight w."""
    w = np.asarray(weight, dtype=float)
    if w.shape != (grid.n_nodes,):
        raise ValueError(f"weight must have shape ({grid.n_nodes},), got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weight must be finite")
    return AssembledForm("elasticity", ElasticityOperator(grid, C).matrix(w))


def assemble_scalar_laplace(grid: Grid) -> AssembledForm:
    return AssembledForm("stiffness_laplace", laplace_matrix(grid))


def assemble_mass(grid: Grid, kind: str = "scalar") -> AssembledForm:
    if kind == "scalar":
        return AssembledForm("mass", mass_matrix(grid))
    if kind == "vector":
        return AssembledForm("mass", vector_mass_matrix(grid))
    raise ValueError(f"mass kind must be 'scalar' or 'vector', got {kind!r}")


def _facet_values(grid: Grid, b) -> np.ndarray:
    """Normalize traction input to facet-wise values (n_facets, nodes_per_facet, dim)."""
    b = np.asarray(b, dtype=float)
    nf, npf = len(grid.boundary_facets), len(grid.boundary_facets[0].nodes)
    if b.shape == (nf, npf, grid.dim):
        return b
    if b.shape == (grid.n_nodes, grid.dim) or (grid.dim == 1 and b.shape == (grid.n_nodes,)):
        b = b.reshape(grid.n_nodes, grid.dim)
        interior = np.setdiff1d(np.arange(grid.n_nodes), grid.boundary_nodes)
        if np.any(b[interior] != 0.0):
            raise ValueError("boundary traction has non-zero values at interior nodes")
        return np.stack([b[list(f.nodes)] for f in grid.boundary_facets])
    raise ValueError(
        f"traction must be nodal {(grid.n_nodes, grid.dim)} or facet-wise {(nf, npf, grid.dim)}, got {b.shape}"
    )


def _facet_mass(grid: Grid) -> np.ndarray:
    if grid.dim == 1:
        return np.ones((1, 1))
    return np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0


def boundary_load_vector(grid: Grid, b) -> np.ndarray:
    bf = _facet_values(grid, b)
    Mf = _facet_mass(grid)
    load = np.zeros((grid.n_nodes, grid.dim))
    for f, vals in zip(grid.boundary_facets, bf):
        load[list(f.nodes)] += f.measure * (Mf @ vals)
    return load.ravel()


def boundary_norm2(grid: Grid, b) -> float:
    """Squared L2(Gamma) norm of a (linear-on-facet) traction."""
    bf = _facet_values(grid, b)
    Mf = _facet_mass(grid)
    return float(sum(f.measure * np.einsum("ai,ab,bi->", v, Mf, v) for f, v in zip(grid.boundary_facets, bf)))


def assemble_boundary_load(grid: Grid, b) -> AssembledForm:
    """Load vector of int_Gamma b . zeta (exact for facet-linear b)."""
    return AssembledForm("boundary_load", boundary_load_vector(grid, b))


def quadrature_integral(grid: Grid, integrand) -> float:
    """Gauss-2 integral over the grid.

    ``integrand`` is a callable of physical coordinates (..., dim), an array
    of Gauss point samples (n_cells, n_q) or nodal values (n_nodes,).
    """
    w = grid.reference["w"]
    if callable(integrand):
        vals = np.asarray(integrand(grid.quadrature_points), dtype=float)
        if vals.shape == grid.quadrature_points.shape and grid.dim == 1:
            vals = vals[..., 0]
    else:
        vals = np.asarray(integrand, dtype=float)
        if vals.shape == (grid.n_nodes,):
            vals = grid.interpolate(vals)
    if vals.shape != (grid.n_cells, len(w)):
        raise ValueError(f"integrand samples must have shape {(grid.n_cells, len(w))}, got {vals.shape}")
    return float(np.einsum("q,cq->", w, vals))


# --------------------------------------------------------------------------
# linear algebra


def solve_spd(A: sp.spmatrix, rhs: np.ndarray, tol: float = 1e-12, maxiter: int | None = None) -> np.ndarray:
    """Solve a sparse SPD system; direct below DIRECT_SOLVE_LIMIT dofs, else Jacobi-CG."""
    n = A.shape[0]
    if n <= DIRECT_SOLVE_LIMIT:
        x = spla.spsolve(A.tocsc(), rhs)
        if not np.all(np.isfinite(x)):
            raise LinearSolverError("direct solve produced non-finite values")
        return x
    history: list[float] = []
    dinv = 1.0 / A.diagonal()
    M = spla.LinearOperator(A.shape, matvec=lambda r: dinv * r)
    bnorm = np.linalg.norm(rhs) or 1.0

    def cb(xk):
        history.append(float(np.linalg.norm(rhs - A @ xk) / bnorm))

    x, info = spla.cg(A, rhs, rtol=tol, maxiter=maxiter or 10 * n, M=M, callback=cb)
    if info != 0:
        raise LinearSolverError(f"conjugate gradient failed (info={info})", history)
    return x


# --------------------------------------------------------------------------
# snapshots


def write_snapshot(
    path: str | Path,
    grid: Grid,
    values,
    name: str,
    time: float,
    provenance: str | None = None,
) -> None:
    """Text snapshot: '#' header lines then one value per line (row-major)."""
    values = np.asarray(values, dtype=float)
    comps = 1 if values.ndim == 1 else values.shape[1]
    if values.shape[0] != grid.n_nodes:
        raise ValueError("snapshot values must be nodal")
    lines = ["# viscodamage field snapshot v1"]
    if provenance:
        lines.append(f"# provenance {provenance}")
    lines += [
        f"# dim {grid.dim}",
        "# extents " + " ".join(repr(float(e)) for e in grid.extents),
        "# cells " + " ".join(str(n) for n in grid.cells_per_axis),
        f"# field {name}",
        f"# components {comps}",
        f"# time {float(time)!r}",
    ]
    lines += [repr(v) for v in values.ravel().tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot(path: str | Path) -> tuple[dict, np.ndarray]:
    meta: dict = {}
    vals = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) >= 2 and parts[0] in ("dim", "components"):
                meta[parts[0]] = int(parts[1])
            elif parts and parts[0] == "cells":
                meta["cells"] = tuple(int(p) for p in parts[1:])
            elif parts and parts[0] == "extents":
                meta["extents"] = tuple(float(p) for p in parts[1:])
            elif parts and parts[0] == "time":
                meta["time"] = float(parts[1])
            elif parts and parts[0] in ("field", "provenance"):
                meta[parts[0]] = " ".join(parts[1:])
        elif line.strip():
            vals.append(float(line))
    arr = np.array(vals)
    if meta.get("components", 1) > 1:
        arr = arr.reshape(-1, meta["components"])
    return meta, arr
