"""Constitutive laws: damage coefficients, stiffness tensors, penalty family.

Coefficient functions are stored as piecewise polynomials on the whole real
line so that the convex/concave split of a damage coefficient can be built
by exact double integration of the positive and negative parts of its second
derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as P

__all__ = [
    "PiecewisePolynomial",
    "StiffnessTensor",
    "MaterialLaw",
    "Penalty",
    "penalty_value",
    "penalty_slope",
    "subgradient_residual",
    "extend_coefficient",
    "apply_stiffness",
    "coefficient_preset",
    "potential_preset",
    "material_preset",
]

_SAMPLE_RANGE = (-10.0, 10.0)


def _trim(c: np.ndarray) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.size == 0:
        return np.zeros(1)
    nz = np.flatnonzero(c)
    return c[: nz[-1] + 1] if nz.size else np.zeros(1)


def _shift(coeffs: np.ndarray, s: float) -> np.ndarray:
    """Coefficients of q(y) = p(y + s)."""
    if s == 0.0:
        return np.array(coeffs, dtype=float)
    return _trim(np.polynomial.Polynomial(coeffs)(np.polynomial.Polynomial([s, 1.0])).coef)


class PiecewisePolynomial:
    """Piecewise polynomial on the real line.

    ``breaks`` has m sorted entries and ``pieces`` m + 1 coefficient arrays
    (increasing powers).  Piece 0 covers ``(-inf, breaks[0])``, piece i
    covers ``[breaks[i-1], breaks[i])`` and the last piece extends to
    ``+inf``.  Each piece is expanded in the local variable ``x - anchor``
    where the anchor is the left breakpoint (``breaks[0]`` for piece 0).
    """

    def __init__(self, breaks: Sequence[float], pieces: Sequence[Sequence[float]]):
        breaks = np.asarray(breaks, dtype=float).ravel()
        if len(pieces) != breaks.size + 1:
            raise ValueError(
                f"need {breaks.size + 1} pieces for {breaks.size} breakpoints, got {len(pieces)}"
            )
        if breaks.size > 1 and np.any(np.diff(breaks) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(breaks)):
            raise ValueError("breakpoints must be finite")
        self.breaks = breaks
        self.pieces = [_trim(p) for p in pieces]
        for p in self.pieces:
            if not np.all(np.isfinite(p)):
                raise ValueError("polynomial coefficients must be finite")

    @classmethod
    def polynomial(cls, coeffs: Sequence[float]) -> "PiecewisePolynomial":
        """A single global polynomial (increasing powers, anchored at 0)."""
        c = _trim(np.asarray(coeffs, dtype=float))
        return cls([0.0], [c, c])

    @classmethod
    def constant(cls, value: float) -> "PiecewisePolynomial":
        return cls([], [[float(value)]])

    def anchors(self) -> np.ndarray:
        if self.breaks.size == 0:
            return np.zeros(1)
        return np.concatenate([[self.breaks[0]], self.breaks])

    def _table(self) -> tuple[np.ndarray, np.ndarray]:
        cached = self.__dict__.get("_cached_table")
        if cached is None:
            width = max(p.size for p in self.pieces)
            table = np.zeros((len(self.pieces), width))
            for i, p in enumerate(self.pieces):
                table[i, : p.size] = p
            cached = (table, self.anchors())
            self.__dict__["_cached_table"] = cached
        return cached

    def piece_index(self, x: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.breaks, x, side="right")

    def __call__(self, x, nu: int = 0):
        if nu:
            return self.derivative(nu)(x)
        xa = np.asarray(x, dtype=float)
        flat = xa.ravel()
        table, anchors = self._table()
        idx = self.piece_index(flat)
        coef = table[idx]
        t = flat - anchors[idx]
        # Horner over the padded coefficient table
        out = coef[:, -1].copy()
        for j in range(table.shape[1] - 2, -1, -1):
            out = out * t + coef[:, j]
        if xa.ndim == 0:
            return float(out[0])
        return out.reshape(xa.shape)

    def derivative(self, order: int = 1) -> "PiecewisePolynomial":
        pieces = self.pieces
        for _ in range(order):
            pieces = [_trim(P.polyder(p)) if p.size > 1 else np.zeros(1) for p in pieces]
        return PiecewisePolynomial(self.breaks, pieces)

    def antiderivative(self, x0: float = 0.0, value: float = 0.0) -> "PiecewisePolynomial":
        """Continuous antiderivative F with F(x0) = value."""
        anchors = self.anchors()
        pieces = [P.polyint(p) for p in self.pieces]
        # piece 0 and piece 1 share the anchor breaks[0], so continuity there is free
        for i in range(2, len(pieces)):
            b = self.breaks[i - 1]
            pieces[i] = pieces[i].copy()
            pieces[i][0] += P.polyval(b - anchors[i - 1], pieces[i - 1])
        F = PiecewisePolynomial(self.breaks, pieces)
        offset = value - F(x0)
        shifted = [p.copy() for p in F.pieces]
        for p in shifted:
            p[0] += offset
        return PiecewisePolynomial(self.breaks, shifted)

    def refine(self, new_breaks: Sequence[float]) -> "PiecewisePolynomial":
        """Same function with additional breakpoints."""
        merged = np.union1d(self.breaks, np.asarray(new_breaks, dtype=float))
        if merged.size == self.breaks.size:
            return self
        anchors = self.anchors()
        new_anchors = np.concatenate([[merged[0]], merged])
        pieces = []
        for j in range(merged.size + 1):
            # locate the old piece containing the new interval
            if j == 0:
                probe = merged[0] - 1.0
            elif j == merged.size:
                probe = merged[-1] + 1.0
            else:
                probe = 0.5 * (merged[j - 1] + merged[j])
            i = int(self.piece_index(np.array([probe]))[0])
            pieces.append(_shift(self.pieces[i], new_anchors[j] - anchors[i]))
        return PiecewisePolynomial(merged, pieces)

    def __add__(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        merged = np.union1d(self.breaks, other.breaks)
        a, b = self.refine(merged), other.refine(merged)
        return PiecewisePolynomial(merged, [P.polyadd(p, q) for p, q in zip(a.pieces, b.pieces)])

    def __neg__(self) -> "PiecewisePolynomial":
        return PiecewisePolynomial(self.breaks, [-p for p in self.pieces])

    def __sub__(self, other: "PiecewisePolynomial") -> "PiecewisePolynomial":
        return self + (-other)

    def __repr__(self) -> str:
        return f"PiecewisePolynomial(breaks={self.breaks.tolist()}, pieces={[p.tolist() for p in self.pieces]})"

    def to_dict(self) -> dict:
        return {"breaks": self.breaks.tolist(), "pieces": [p.tolist() for p in self.pieces]}

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewisePolynomial":
        return cls(d["breaks"], d["pieces"])


# --------------------------------------------------------------------------
# stiffness


def _mandel_basis(dim: int) -> list[np.ndarray]:
    basis = []
    for i in range(dim):
        e = np.zeros((dim, dim))
        e[i, i] = 1.0
        basis.append(e)
    for i in range(dim):
        for j in range(i + 1, dim):
            e = np.zeros((dim, dim))
            e[i, j] = e[j, i] = 1.0 / np.sqrt(2.0)
            basis.append(e)
    return basis


@dataclass(frozen=True)
class StiffnessTensor:
    """Symmetric positive definite fourth-order tensor on Sym(dim).

    ``eta`` is the coercivity constant, i.e. the smallest eigenvalue of the
    tensor acting on symmetric matrices with the Frobenius inner product.
    """

    tensor: np.ndarray
    eta: float = field(init=False)
    mode: str = "explicit"

    def __post_init__(self):
        C = np.array(self.tensor, dtype=float)
        if C.ndim != 4 or len(set(C.shape)) != 1 or C.shape[0] not in (1, 2):
            raise ValueError(f"stiffness must have shape (n,n,n,n) with n in {{1,2}}, got {C.shape}")
        C.setflags(write=False)
        object.__setattr__(self, "tensor", C)
        scale = max(np.abs(C).max(), 1.0)
        tol = 1e-12 * scale
        if (
            np.abs(C - C.transpose(1, 0, 2, 3)).max() > tol
            or np.abs(C - C.transpose(0, 1, 3, 2)).max() > tol
            or np.abs(C - C.transpose(2, 3, 0, 1)).max() > tol
        ):
            raise ValueError("stiffness tensor lacks the minor/major symmetries")
        eta = float(np.linalg.eigvalsh(self.mandel()).min())
        if eta <= 0:
            raise ValueError(f"stiffness tensor is not positive definite (eta={eta:g})")
        object.__setattr__(self, "eta", eta)

    @property
    def dim(self) -> int:
        return self.tensor.shape[0]

    @classmethod
    def isotropic(cls, lam: float = 1.0, mu_lame: float = 1.0, dim: int = 2) -> "StiffnessTensor":
        """Lame form C e = lam tr(e) I + 2 mu_lame e (plane strain in 2D)."""
        I = np.eye(dim)
        C = (
            lam * np.einsum("ij,kl->ijkl", I, I)
            + mu_lame * (np.einsum("ik,jl->ijkl", I, I) + np.einsum("il,jk->ijkl", I, I))
        )
        return cls(C, mode="isotropic")

    @classmethod
    def explicit(cls, entries) -> "StiffnessTensor":
        return cls(np.asarray(entries, dtype=float), mode="explicit")

    def mandel(self) -> np.ndarray:
        basis = _mandel_basis(self.dim)
        return np.array([[np.einsum("ij,ijkl,kl->", a, self.tensor, b) for b in basis] for a in basis])

    def check_coercive(self, n_samples: int = 200, seed: int = 0) -> bool:
        """Randomized check of e : C e >= eta |e|^2 on symmetric e."""
        rng = np.random.default_rng(seed)
        e = rng.standard_normal((n_samples, self.dim, self.dim))
        e = 0.5 * (e + e.transpose(0, 2, 1))
        lhs = np.einsum("nij,ijkl,nkl->n", e, self.tensor, e)
        rhs = self.eta * np.einsum("nij,nij->n", e, e)
        return bool(np.all(lhs >= rhs * (1 - 1e-12) - 1e-14))


def apply_stiffness(C: StiffnessTensor, e) -> np.ndarray:
    """Stress C e for a symmetric strain (or a stack of strains)."""
    e = np.asarray(e, dtype=float)
    if e.shape[-2:] != (C.dim, C.dim):
        raise ValueError(f"strain shape {e.shape} incompatible with dim {C.dim}")
    return np.einsum("ijkl,...kl->...ij", C.tensor, e)


# --------------------------------------------------------------------------
# penalty


@dataclass(frozen=True)
class Penalty:
    """Regularization I_beta of the indicator of (-inf, 0].

    ``moreau_yosida`` is x^2 / (2 beta) on x > 0.  ``smooth_variant`` rounds
    the kink with a quadratic-spline second derivative ramping from 0 to
    1/beta over [0, beta^2]; it is C^2 and lies below the Moreau-Yosida one.
    """

    beta: float
    kind: str = "moreau_yosida"

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.kind not in ("moreau_yosida", "smooth_variant"):
            raise ValueError(f"unknown penalty kind {self.kind!r}")

    @property
    def width(self) -> float:
        return self.beta**2

    def value(self, x):
        x = np.asarray(x, dtype=float)
        b = self.beta
        xp = np.maximum(x, 0.0)
        if self.kind == "moreau_yosida":
            return xp * xp / (2.0 * b)
        w = self.width
        inner = xp**3 / (6.0 * b * w)
        outer = (xp - 0.5 * w) ** 2 / (2.0 * b) + w * w / (24.0 * b)
        return np.where(xp < w, inner, outer)

    def slope(self, x):
        x = np.asarray(x, dtype=float)
        b = self.beta
        xp = np.maximum(x, 0.0)
        if self.kind == "moreau_yosida":
            return xp / b
        w = self.width
        return np.where(xp < w, xp * xp / (2.0 * b * w), (xp - 0.5 * w) / b)

    def curvature(self, x):
        """Generalized second derivative (Newton derivative of the slope)."""
        x = np.asarray(x, dtype=float)
        b = self.beta
        if self.kind == "moreau_yosida":
            return np.where(x > 0.0, 1.0 / b, 0.0)
        w = self.width
        return np.where(x <= 0.0, 0.0, np.where(x < w, x / (b * w), 1.0 / b))


def penalty_value(p: Penalty, x):
    v = p.value(x)
    return float(v) if np.ndim(v) == 0 else v


def penalty_slope(p: Penalty, x):
    v = p.slope(x)
    return float(v) if np.ndim(v) == 0 else v


def subgradient_residual(chi_t, xi):
    """Violation of chi_t <= 0, xi >= 0, xi * chi_t = 0 (zero iff all hold)."""
    chi_t = np.asarray(chi_t, dtype=float)
    xi = np.asarray(xi, dtype=float)
    r = np.maximum(chi_t, 0.0) + np.maximum(-xi, 0.0) + np.abs(xi * chi_t)
    return float(r) if r.ndim == 0 else r


# --------------------------------------------------------------------------
# convex-concave extension of a damage coefficient


def _restrict_unit(pp: PiecewisePolynomial) -> list[tuple[float, float, np.ndarray]]:
    """Pieces of ``pp`` on [0, 1] as (left, right, coeffs anchored at left)."""
    inner = pp.breaks[(pp.breaks > 0.0) & (pp.breaks < 1.0)]
    pts = np.concatenate([[0.0], inner, [1.0]])
    anchors = pp.anchors()
    out = []
    for a, b in zip(pts[:-1], pts[1:]):
        i = int(pp.piece_index(np.array([0.5 * (a + b)]))[0])
        out.append((float(a), float(b), _shift(pp.pieces[i], a - anchors[i])))
    return out


def _sign_split(intervals, tol: float = 1e-14):
    """Split each polynomial piece at its interior real roots."""
    out = []
    for a, b, c in intervals:
        cuts = []
        if c.size > 1:
            for r in P.polyroots(c):
                if abs(r.imag) < 1e-12 and tol < r.real < (b - a) - tol:
                    cuts.append(float(r.real))
        cuts = sorted(set(cuts))
        left = 0.0
        for x in cuts + [b - a]:
            out.append((a + left, a + x, _shift(c, left)))
            left = x
    return out


def _check_c11(pp: PiecewisePolynomial, lo: float, hi: float, tol: float) -> None:
    inner = pp.breaks[(pp.breaks > lo) & (pp.breaks < hi)]
    d1 = pp.derivative()
    for b in inner:
        h = 1e-9 * max(1.0, abs(b))
        for g, name in ((pp, "value"), (d1, "first derivative")):
            jump = abs(g(b) - g(np.nextafter(b, -np.inf)))
            if jump > tol * max(1.0, abs(g(b))) and abs(g(b) - g(b - h)) > 1e3 * h + tol:
                raise ValueError(f"coefficient is not C^1,1: {name} jumps at x={b:g}")


def extend_coefficient(
    c_tilde: PiecewisePolynomial, delta: float = 1.0, tol: float = 1e-10
) -> tuple[PiecewisePolynomial, PiecewisePolynomial]:
    """Split c_tilde on [0, 1] into convex c1 + concave c2 extended to R.

    On [0, 1] the split integrates the positive and negative parts of
    c_tilde'' twice from 0.  Below 0 both parts are constant.  Above 1 the
    part with the smaller end slope magnitude gets a linear second-derivative
    ramp over [1, 1 + delta] so that both end slopes reach +/- max(l1, l2);
    the sum is then constant beyond 1 + delta.

    Ramp derivation: with l1 = c1'(1) >= 0 and l2 = -c2'(1) >= 0, adding the
    constant curvature (l2 - l1)/delta on [1, 1 + delta] to c1 raises its
    slope from l1 to l2 (case l1 <= l2).  In the case l1 > l2 the mirror
    term -(l1 - l2)/delta is added to c2 instead, lowering its slope from
    -l2 to -l1.  Either way the extra curvature has the sign that keeps c1
    convex and c2 concave.
    """
    if not delta > 0:
        raise ValueError(f"ramp width delta must be positive, got {delta}")
    d0 = c_tilde.derivative()(0.0)
    if abs(d0) > tol:
        raise ValueError(f"extension requires c_tilde'(0) = 0, got {d0:.3g}")
    xs = np.linspace(0.0, 1.0, 1001)
    if np.min(c_tilde(xs)) < -tol:
        raise ValueError("c_tilde must be non-negative on [0, 1]")
    _check_c11(c_tilde, 0.0, 1.0, tol)

    second = _sign_split(_restrict_unit(c_tilde.derivative(2)))
    pos, neg = [], []
    for a, b, c in second:
        mid = P.polyval(0.5 * (b - a), c)
        pos.append(c if mid > 0 else np.zeros(1))
        neg.append(c if mid < 0 else np.zeros(1))

    # slopes at 1 from the unextended parts
    lam1 = sum(P.polyval(b - a, P.polyint(c)) for (a, b, _), c in zip(second, pos))
    lam2 = -sum(P.polyval(b - a, P.polyint(c)) for (a, b, _), c in zip(second, neg))
    lam1, lam2 = float(lam1), float(lam2)

    breaks = [a for a, _, _ in second] + [1.0, 1.0 + delta]
    zero = np.zeros(1)
    ramp1 = np.array([(lam2 - lam1) / delta]) if lam1 <= lam2 else zero
    ramp2 = np.array([-(lam1 - lam2) / delta]) if lam1 > lam2 else zero
    dd1 = PiecewisePolynomial(breaks, [zero] + pos + [ramp1, zero])
    dd2 = PiecewisePolynomial(breaks, [zero] + neg + [ramp2, zero])

    c0 = float(c_tilde(0.0))
    c1 = dd1.antiderivative(0.0, 0.0).antiderivative(0.0, c0)
    c2 = dd2.antiderivative(0.0, 0.0).antiderivative(0.0, 0.0)
    return c1, c2


# --------------------------------------------------------------------------
# material law


@dataclass(frozen=True)
class MaterialLaw:
    """Damage-dependent stiffness c(chi) C, viscosity d(chi) mu C, potential f.

    ``c1`` must be convex and ``c2`` concave; their sum c is non-negative and
    bounded.  ``d`` defaults to the constant 1 and ``f`` to (chi - 1)^2 / 2.
    Construction samples the invariants on [-10, 10] and raises on violation.
    """

    c1: PiecewisePolynomial
    c2: PiecewisePolynomial
    C: StiffnessTensor
    mu: float = 1.0
    d: PiecewisePolynomial = field(default_factory=lambda: PiecewisePolynomial.constant(1.0))
    f: PiecewisePolynomial = field(default_factory=lambda: potential_preset("quadratic"))
    f_lipschitz: float = field(init=False, default=0.0)
    name: str = "custom"

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"viscosity ratio mu must be positive, got {self.mu}")
        object.__setattr__(self, "_dc1", self.c1.derivative())
        object.__setattr__(self, "_ddc1", self.c1.derivative(2))
        object.__setattr__(self, "_dc2", self.c2.derivative())
        object.__setattr__(self, "_ddc2", self.c2.derivative(2))
        object.__setattr__(self, "_df", self.f.derivative())
        object.__setattr__(self, "_ddf", self.f.derivative(2))
        object.__setattr__(self, "_dd", self.d.derivative())
        report = self.check()
        bad = [k for k, ok in report.items() if k.startswith("ok_") and not ok]
        if bad:
            raise ValueError(f"material law violates {', '.join(bad)}: {report}")
        object.__setattr__(self, "f_lipschitz", report["f_lipschitz"])

    @property
    def dim(self) -> int:
        return self.C.dim

    def c(self, x):
        return self.c1(x) + self.c2(x)

    def dc(self, x):
        return self._dc1(x) + self._dc2(x)

    def dc1(self, x):
        return self._dc1(x)

    def ddc1(self, x):
        return self._ddc1(x)

    def dc2(self, x):
        return self._dc2(x)

    def df(self, x):
        return self._df(x)

    def ddf(self, x):
        return self._ddf(x)

    def dd(self, x):
        return self._dd(x)

    @property
    def d_is_one(self) -> bool:
        return self.d.breaks.size == 0 and np.array_equal(self.d.pieces[0], [1.0])

    @property
    def d_is_constant(self) -> bool:
        return all(p.size == 1 for p in self.d.pieces) and len({float(p[0]) for p in self.d.pieces}) == 1

    def check(self, n: int = 4001, tol: float = 1e-8) -> dict:
        """Sampled invariant report on [-10, 10]."""
        x = np.linspace(*_SAMPLE_RANGE, n)
        x = np.union1d(x, self.c1.breaks[(self.c1.breaks >= -10) & (self.c1.breaks <= 10)])
        c = self.c(x)
        dd1 = self._ddc1(x)
        dd2 = self._ddc2(x)
        d = self.d(x)
        ddf = self._ddf(x)
        # every unbounded piece of c, c1', c2' and f'' must be constant
        bounded = all(
            g.pieces[0].size == 1 and g.pieces[-1].size == 1
            for g in ((self.c1 + self.c2), self._dc1, self._dc2, self._ddf)
        )
        rng = np.random.default_rng(0)
        a, b = rng.uniform(*_SAMPLE_RANGE, (2, 500))
        df_a, df_b = self._df(a), self._df(b)
        L = float(np.max(np.abs(ddf)))
        pair_ok = bool(np.all(np.abs(df_a - df_b) <= L * np.abs(a - b) * (1 + 1e-9) + 1e-12))
        return {
            "ok_c_nonnegative": bool(c.min() >= -tol),
            "ok_c1_convex": bool(dd1.min() >= -tol),
            "ok_c2_concave": bool(dd2.max() <= tol),
            "ok_bounded": bounded,
            "ok_d_positive": bool(d.min() > 0),
            "ok_f_lipschitz": pair_ok,
            "c_min": float(c.min()),
            "d_min": float(d.min()),
            "f_lipschitz": L,
        }

    def constant_below_zero(self, tol: float = 0.0) -> bool:
        """True when c and d are constant on (-inf, 0]."""
        def const_left(pp: PiecewisePolynomial) -> bool:
            if pp.breaks.size == 0:
                return pp.pieces[0].size == 1
            if pp.breaks[0] < 0:
                return False
            return pp.pieces[0].size == 1 and float(pp(0.0)) == float(pp.pieces[0][0])

        return const_left(self.c1) and const_left(self.c2) and const_left(self.d)


# --------------------------------------------------------------------------
# presets


def coefficient_preset(name: str, **params) -> PiecewisePolynomial:
    """Damage coefficient c_tilde on [0, 1] by name."""
    if name == "quadratic":
        return PiecewisePolynomial.polynomial([0.0, 0.0, 1.0])
    if name == "constant":
        return PiecewisePolynomial.constant(float(params.get("value", 1.0)))
    if name == "cubic":
        return PiecewisePolynomial.polynomial([0.0, 0.0, 3.0, -2.0])
    if name in ("custom", "custom piecewise", "custom_piecewise"):
        return PiecewisePolynomial(params["breaks"], params["pieces"])
    raise ValueError(f"unknown coefficient preset {name!r}")


def potential_preset(name: str = "quadratic", **params) -> PiecewisePolynomial:
    """Damage potential f.  ``quadratic`` is a/2 (chi - target)^2."""
    if name == "quadratic":
        a = float(params.get("stiffness", 1.0))
        t = float(params.get("target", 1.0))
        return PiecewisePolynomial.polynomial([0.5 * a * t * t, -a * t, 0.5 * a])
    if name in ("zero", "none"):
        return PiecewisePolynomial.constant(0.0)
    if name == "linear":
        return PiecewisePolynomial.polynomial([0.0, float(params.get("slope", 1.0))])
    if name in ("custom", "custom piecewise", "custom_piecewise"):
        return PiecewisePolynomial(params["breaks"], params["pieces"])
    raise ValueError(f"unknown potential preset {name!r}")


def material_preset(
    coefficient: str = "quadratic",
    *,
    delta: float = 1.0,
    potential: str = "quadratic",
    potential_params: dict | None = None,
    coefficient_params: dict | None = None,
    lam: float = 1.0,
    mu_lame: float = 1.0,
    mu: float = 1.0,
    dim: int = 2,
    d: PiecewisePolynomial | None = None,
) -> MaterialLaw:
    c_tilde = coefficient_preset(coefficient, **(coefficient_params or {}))
    c1, c2 = extend_coefficient(c_tilde, delta)
    kwargs = {}
    if d is not None:
        kwargs["d"] = d
    return MaterialLaw(
        c1=c1,
        c2=c2,
        C=StiffnessTensor.isotropic(lam, mu_lame, dim),
        mu=mu,
        f=potential_preset(potential, **(potential_params or {})),
        name=coefficient,
        **kwargs,
    )
