"""Matrix weights and their diagnostics.

Weight fields evaluate to m x m symmetric positive-definite matrices at
points of R^d.  On top of them: weighted L^p norms of grid functions,
Muckenhoupt-type double-average estimates over the dilated-ball family,
doubling constants/exponents, and reducing operators per dilated cube.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .dilation import BallFamily, DilatedCube, Dilation, cube_nodes
from .ellipsoid import min_enclosing_ellipsoid_centered
from .errors import (
    DimensionMismatch,
    FitDegenerate,
    MissingCube,
    NotPositiveDefinite,
    QuadratureUnderflow,
)

_EIG_TOL = 1e-14
_MC_SEED = 0xB05  # Monte-Carlo fallback seed for ball quadrature


def _spectral_power(mats: np.ndarray, t: float, allow_singular: bool = False):
    """U diag(w^t) U^T for a batch of symmetric matrices."""
    w, v = np.linalg.eigh(mats)
    w_max = w.max(axis=-1, keepdims=True)
    bad = w <= _EIG_TOL * np.maximum(w_max, 1.0)
    if bad.any():
        if not allow_singular:
            raise NotPositiveDefinite(
                f"weight eigenvalue {w.min():.3g} at or below tolerance"
            )
        if t < 0:
            raise NotPositiveDefinite("negative power of a singular weight")
        w = np.where(bad, 0.0, w)
    powered = np.where(w > 0, np.power(np.where(w > 0, w, 1.0), t), 0.0)
    return np.einsum("...ij,...j,...kj->...ik", v, powered, v)


class MatrixWeightField:
    """Base class: a field of m x m symmetric PD matrices over R^d."""

    kind = "abstract"

    def __init__(self, vec_dim: int):
        self.vec_dim = vec_dim

    def evaluate(self, pts: np.ndarray) -> np.ndarray:
        """Weight matrices at an (N, d) array of points, shape (N, m, m)."""
        raise NotImplementedError

    def root_at(self, pts: np.ndarray, t: float, allow_singular: bool = False):
        """W(x)^t at each point via spectral calculus."""
        return _spectral_power(self.evaluate(pts), t, allow_singular)

    def vector_norms(self, pts: np.ndarray, vecs: np.ndarray, p: float):
        """||W^{1/p}(x) v(x)|| per point; ``vecs`` is (N, m), possibly complex."""
        roots = self.root_at(pts, 1.0 / p, allow_singular=True)
        out = np.einsum("nij,nj->ni", roots, vecs)
        return np.linalg.norm(out, axis=1)

    def power(self, t: float) -> "MatrixWeightField":
        return _PowerWeight(self, t)

    def descriptor(self) -> dict:
        raise NotImplementedError


class IdentityWeight(MatrixWeightField):
    kind = "identity"

    def evaluate(self, pts):
        n = np.atleast_2d(pts).shape[0]
        return np.broadcast_to(np.eye(self.vec_dim), (n, self.vec_dim, self.vec_dim))

    def vector_norms(self, pts, vecs, p):
        return np.linalg.norm(vecs, axis=1)

    def descriptor(self):
        return {"kind": "identity", "m": self.vec_dim}


class ConstantWeight(MatrixWeightField):
    kind = "constant"

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=float)
        if np.linalg.eigvalsh(matrix).min() <= 0:
            raise NotPositiveDefinite("constant weight must be PD")
        super().__init__(matrix.shape[0])
        self.matrix = 0.5 * (matrix + matrix.T)

    def evaluate(self, pts):
        n = np.atleast_2d(pts).shape[0]
        return np.broadcast_to(self.matrix, (n, self.vec_dim, self.vec_dim))

    def descriptor(self):
        return {"kind": "constant", "matrix": self.matrix.tolist()}


def _scalar_pow(rho: np.ndarray, a: float) -> np.ndarray:
    """rho^a with the conventions 0^0 = 1, 0^a = 0 (a > 0), 0^a = inf (a < 0)."""
    if a == 0.0:
        return np.ones_like(rho)
    pos = rho > 0
    out = np.where(pos, np.power(np.where(pos, rho, 1.0), a), 0.0 if a > 0 else np.inf)
    return out


class ScalarPowerWeight(MatrixWeightField):
    """W(x) = rho(x)^a I_m built on the step quasi-norm of a ball family."""

    kind = "scalar_power"

    def __init__(self, exponent: float, ball_family: BallFamily, vec_dim: int = 1):
        super().__init__(vec_dim)
        self.exponent = float(exponent)
        self.ball_family = ball_family
        self._rho_cache: dict = {}

    def _rho(self, pts):
        pts = np.atleast_2d(pts)
        key = (pts.shape, float(pts.take(0)), float(pts.take(-1)), float(pts.sum()))
        rho = self._rho_cache.get(key)
        if rho is None:
            rho = self.ball_family.quasi_norm(pts)
            if len(self._rho_cache) > 8:
                self._rho_cache.clear()
            self._rho_cache[key] = rho
        return rho

    def evaluate(self, pts):
        scal = _scalar_pow(self._rho(pts), self.exponent)
        return scal[:, None, None] * np.eye(self.vec_dim)

    def root_at(self, pts, t, allow_singular=False):
        rho = self._rho(np.atleast_2d(pts))
        a = self.exponent * t
        if np.any(rho <= 0):
            if not allow_singular or a < 0:
                raise NotPositiveDefinite(
                    "scalar-power weight is singular at a quadrature point"
                )
        scal = _scalar_pow(rho, a)
        return scal[:, None, None] * np.eye(self.vec_dim)

    def vector_norms(self, pts, vecs, p):
        scal = _scalar_pow(self._rho(pts), self.exponent / p)
        return scal * np.linalg.norm(vecs, axis=1)

    def power(self, t):
        return ScalarPowerWeight(self.exponent * t, self.ball_family, self.vec_dim)

    def descriptor(self):
        return {"kind": "scalar_power", "a": self.exponent, "m": self.vec_dim}


class RotatedDiagWeight(MatrixWeightField):
    """R(theta(x)) diag(rho^{a_1}, ..., rho^{a_m}) R(theta(x))^T for m = 2."""

    kind = "rotated_diag"

    def __init__(self, angle: float, exponents, ball_family: BallFamily,
                 angle_gradient=None):
        exponents = tuple(float(a) for a in exponents)
        if len(exponents) != 2:
            raise DimensionMismatch("rotated_diag supports m = 2")
        super().__init__(2)
        self.angle = float(angle)
        self.exponents = exponents
        self.ball_family = ball_family
        self.angle_gradient = (
            None if angle_gradient is None else np.asarray(angle_gradient, float)
        )

    def evaluate(self, pts):
        pts = np.atleast_2d(pts)
        rho = self.ball_family.quasi_norm(pts)
        theta = np.full(len(pts), self.angle)
        if self.angle_gradient is not None:
            theta = theta + pts @ self.angle_gradient
        c, s = np.cos(theta), np.sin(theta)
        rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
        diag = np.zeros((len(pts), 2, 2))
        for i, a in enumerate(self.exponents):
            diag[:, i, i] = np.where(rho > 0, np.power(np.where(rho > 0, rho, 1.0), a), 0.0)
        return rot @ diag @ np.swapaxes(rot, -1, -2)

    def descriptor(self):
        d = {"kind": "rotated_diag", "angle": self.angle, "exponents": list(self.exponents)}
        if self.angle_gradient is not None:
            d["angle_gradient"] = self.angle_gradient.tolist()
        return d


class BlockDiagWeight(MatrixWeightField):
    kind = "block_diag"

    def __init__(self, blocks):
        self.blocks = list(blocks)
        super().__init__(sum(b.vec_dim for b in self.blocks))

    def evaluate(self, pts):
        pts = np.atleast_2d(pts)
        out = np.zeros((len(pts), self.vec_dim, self.vec_dim))
        at = 0
        for b in self.blocks:
            out[:, at : at + b.vec_dim, at : at + b.vec_dim] = b.evaluate(pts)
            at += b.vec_dim
        return out

    def descriptor(self):
        return {"kind": "block_diag", "blocks": [b.descriptor() for b in self.blocks]}


class GridSampledWeight(MatrixWeightField):
    """Piecewise-constant weight from samples on a regular grid over [0, L)^d."""

    kind = "grid_sampled"

    def __init__(self, values: np.ndarray, length: float):
        # values shape: (n,)*d + (m, m)
        values = np.asarray(values, dtype=float)
        m = values.shape[-1]
        super().__init__(m)
        self.values = values
        self.length = float(length)
        self.n = values.shape[0]
        self.dim = values.ndim - 2

    def evaluate(self, pts):
        pts = np.atleast_2d(pts)
        idx = np.floor(pts / self.length * self.n).astype(int) % self.n
        return self.values[tuple(idx.T)]

    def descriptor(self):
        return {"kind": "grid_sampled", "n": self.n, "L": self.length, "m": self.vec_dim}


class _PowerWeight(MatrixWeightField):
    kind = "power_of"

    def __init__(self, base: MatrixWeightField, t: float):
        super().__init__(base.vec_dim)
        self.base = base
        self.t = float(t)

    def evaluate(self, pts):
        return self.base.root_at(np.atleast_2d(pts), self.t)

    def descriptor(self):
        return {"kind": "power_of", "t": self.t, "base": self.base.descriptor()}


# --- spec operations ---------------------------------------------------------

def weight_root(W: MatrixWeightField, x, t: float) -> np.ndarray:
    """W(x)^t at a single point; raises if W(x) is not PD at tolerance."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    return W.root_at(pts, t)[0]


def dual_weight(W: MatrixWeightField, p: float) -> MatrixWeightField:
    """Pointwise spectral power W^{-p'/p}."""
    if not 1.0 < p < math.inf:
        raise ValueError("dual weight needs p in (1, inf)")
    p_conj = p / (p - 1.0)
    return W.power(-p_conj / p)


def weighted_lp_norm(f, W: MatrixWeightField, p: float) -> float:
    """(integral of ||W^{1/p}(x) f(x)||^p dx)^{1/p} by grid Riemann sum.

    ``f`` is a GridFunction; the quadrature is the midpoint rule on its own
    grid, so the result is deterministic for a fixed grid.
    """
    if f.vec_dim != W.vec_dim:
        raise DimensionMismatch(
            f"function has m={f.vec_dim}, weight has m={W.vec_dim}"
        )
    pts = f.grid_points_flat()
    vecs = f.values.reshape(f.vec_dim, -1).T
    norms = W.vector_norms(pts, vecs, p)
    return float(np.sum(norms**p) * f.cell_volume) ** (1.0 / p)


# --- balls and their quadrature ----------------------------------------------

@dataclass(frozen=True)
class Ball:
    """A dilated ball x0 + B_k from the family of ``bf``."""

    bf: BallFamily = field(compare=False)
    center: tuple
    k: int


def standard_balls(bf: BallFamily, k_range, centers) -> list:
    """The probe family {center + B_k} over the given scales and centers."""
    return [
        Ball(bf=bf, center=tuple(np.atleast_1d(np.asarray(c, float))), k=int(k))
        for c in centers
        for k in k_range
    ]


def ball_nodes(ball: Ball, target: int, scale: float = 1.0) -> np.ndarray:
    """Deterministic quadrature nodes, roughly ``target`` many, inside a ball.

    Cell centers of an origin-anchored ambient lattice (i + 1/2) h, filtered
    by ellipsoid membership; anchoring at the origin keeps nodes off the
    quasi-norm singularity and makes refinement behave uniformly across
    centers.  Monte-Carlo fallback (fixed seed) when fewer than 8 survive.
    ``scale`` dilates the ball about its center (2 gives the doubled ball).
    """
    if target < 8:
        raise QuadratureUnderflow("need at least 8 quadrature nodes per ball")
    bf, dil = ball.bf, ball.bf.dilation
    d = dil.dim
    center = np.asarray(ball.center, dtype=float)
    back = bf.shape @ dil.power(-ball.k)      # x -> P A^{-k} x
    fwd = np.linalg.inv(back)                 # unit ball -> ellipsoid
    vol = dil.abs_det**ball.k * scale**d
    h = (vol / target) ** (1.0 / d)
    ext = scale * np.linalg.norm(fwd, axis=1)  # per-axis extent
    axes = []
    for i in range(d):
        lo = int(np.floor((center[i] - ext[i]) / h - 0.5))
        hi = int(np.ceil((center[i] + ext[i]) / h - 0.5))
        axes.append((np.arange(lo, hi + 1) + 0.5) * h)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    u = (mesh - center) @ back.T / scale
    nodes = mesh[np.einsum("ij,ij->i", u, u) < 1.0]
    if len(nodes) >= 8:
        return nodes
    seed = [_MC_SEED, ball.k, zlib.crc32(center.tobytes()), int(scale * 16)]
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(target, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = rng.uniform(0.0, 1.0, size=(target, 1)) ** (1.0 / d)
    return center + scale * (dirs * radii) @ fwd.T


def ap_estimate(W: MatrixWeightField, p: float, balls, quadrature_points: int) -> float:
    """sup over the balls of the double average with inner exponent p'.

    Matrix norm is the operator (spectral) norm.  Finite for fixed quadrature;
    divergence shows as growth under node refinement (see ``ap_classify``).
    """
    p_conj = p / (p - 1.0)
    best = 0.0
    for ball in balls:
        nodes = ball_nodes(ball, quadrature_points)
        rx = W.root_at(nodes, 1.0 / p, allow_singular=True)
        sy = W.root_at(nodes, -1.0 / p)
        ops = _pair_ops(W, rx, sy)
        inner = np.mean(ops**p_conj, axis=1)
        best = max(best, float(np.mean(inner ** (p / p_conj))))
    return best


def ap_estimate_dual(W: MatrixWeightField, p: float, balls, quadrature_points: int) -> float:
    """Same as ``ap_estimate`` with the exponents p and p' swapped."""
    p_conj = p / (p - 1.0)
    best = 0.0
    for ball in balls:
        nodes = ball_nodes(ball, quadrature_points)
        rx = W.root_at(nodes, 1.0 / p, allow_singular=True)
        sy = W.root_at(nodes, -1.0 / p)
        ops = _pair_ops(W, rx, sy)
        inner = np.mean(ops**p, axis=1)
        best = max(best, float(np.mean(inner ** (p_conj / p))))
    return best


def _pair_ops(W, rx, sy):
    if W.vec_dim == 1:
        return np.abs(rx[:, 0, 0][:, None] * sy[:, 0, 0][None, :])
    prod = np.einsum("xij,yjk->xyik", rx, sy)
    return np.linalg.norm(prod, ord=2, axis=(-2, -1))


def ap_classify(
    W: MatrixWeightField,
    p: float,
    balls,
    quadrature_points: int = 64,
    growth_factor: float = 1.4,
    dual: bool = False,
) -> tuple:
    """Boundedness verdict for the double-average condition.

    Compares the sup at ``quadrature_points`` and at 4x nodes: a divergent
    integrand keeps growing under refinement, a finite one stabilizes.
    Returns (bounded, estimate_coarse, estimate_fine).
    """
    est = ap_estimate_dual if dual else ap_estimate
    coarse = est(W, p, balls, quadrature_points)
    fine = est(W, p, balls, 4 * quadrature_points)
    bounded = fine <= growth_factor * coarse
    return bounded, coarse, fine


def doubling_profile(
    W: MatrixWeightField,
    p: float,
    ball_scales,
    centers,
    directions,
    bf: BallFamily,
    quadrature_points: int = 96,
) -> tuple:
    """(C, beta): doubling constant and doubling exponent.

    C is the max over (center, scale, direction) of
    int_{2B} ||W^{1/p} y||^p / int_B; beta is the max over directions of the
    least-squares slope of log int_{B_k(x)} against k log|det A|.
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    scales = list(ball_scales)
    log_det = math.log(bf.dilation.abs_det)
    c_best = 0.0
    slopes = []
    for center in centers:
        masses = np.zeros((len(scales), len(directions)))
        for i, k in enumerate(scales):
            ball = Ball(bf=bf, center=tuple(np.atleast_1d(center)), k=int(k))
            nodes = ball_nodes(ball, quadrature_points)
            nodes2 = ball_nodes(ball, quadrature_points, scale=2.0)
            vol = bf.dilation.abs_det**k
            for j, y in enumerate(directions):
                vecs = np.broadcast_to(y, (len(nodes), len(y)))
                i_b = vol * np.mean(W.vector_norms(nodes, vecs, p) ** p)
                vecs2 = np.broadcast_to(y, (len(nodes2), len(y)))
                i_2b = (2.0 ** bf.dilation.dim) * vol * np.mean(
                    W.vector_norms(nodes2, vecs2, p) ** p
                )
                masses[i, j] = i_b
                if i_b > 0:
                    c_best = max(c_best, i_2b / i_b)
        for j in range(len(directions)):
            col = masses[:, j]
            if np.all(col > 0):
                slope = np.polyfit(np.asarray(scales, float) * log_det, np.log(col), 1)[0]
                slopes.append(slope)
    beta = float(max(slopes)) if slopes else float("nan")
    return float(c_best), beta


@dataclass
class WeightProfile:
    """Summary statistics of a weight against one exponent p."""

    p: float
    ap_estimate: float
    ap_estimate_dual: float
    doubling_constant: float
    doubling_exponent: float


def profile_weight(
    W: MatrixWeightField,
    p: float,
    bf: BallFamily,
    k_range=range(-3, 4),
    centers=None,
    quadrature_points: int = 64,
) -> WeightProfile:
    """Convenience bundle of the A_p and doubling diagnostics."""
    d = bf.dilation.dim
    if centers is None:
        centers = [np.zeros(d), np.full(d, 0.37), np.full(d, -1.21)]
    balls = standard_balls(bf, k_range, centers)
    dirs = sphere_directions(W.vec_dim, 8)
    c_dbl, beta = doubling_profile(W, p, k_range, centers, dirs, bf, quadrature_points)
    return WeightProfile(
        p=p,
        ap_estimate=ap_estimate(W, p, balls, quadrature_points),
        ap_estimate_dual=ap_estimate_dual(W, p, balls, quadrature_points),
        doubling_constant=c_dbl,
        doubling_exponent=beta,
    )


# --- reducing operators --------------------------------------------------------

def sphere_directions(m: int, count: int, seed: int = 17) -> np.ndarray:
    """A deterministic direction grid on the unit sphere of R^m."""
    if m == 1:
        return np.ones((1, 1))
    if m == 2:
        theta = np.pi * np.arange(count) / count  # half circle: omega(-u) = omega(u)
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    rng = np.random.default_rng([seed, m, count])
    u = rng.normal(size=(count, m))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def omega_p_cube(W: MatrixWeightField, p: float, nodes: np.ndarray, u) -> float:
    """Averaged weighted norm (mean_Q ||W^{1/p}(x) u||^p)^{1/p} over cube nodes."""
    u = np.asarray(u, dtype=float)
    vecs = np.broadcast_to(u, (len(nodes), len(u)))
    return float(np.mean(W.vector_norms(nodes, vecs, p) ** p) ** (1.0 / p))


def reducing_operator(
    W: MatrixWeightField,
    p: float,
    Q: DilatedCube,
    directions: np.ndarray,
    dil: Dilation,
    nodes_per_axis: int = 3,
    fit_tol: float = 1e-7,
) -> np.ndarray:
    """A single PD matrix equivalent to the averaged weighted norm on Q.

    For p = 2 this is exactly (mean_Q W)^{1/2}.  Otherwise the unit ball of
    u -> omega_{p,Q}(u) is sampled on the direction grid and its minimal
    enclosing origin-centered ellipsoid is fitted; the returned matrix is
    balanced by m^{1/4} so the two-sided direction-grid bound holds with a
    constant at most sqrt(m).
    """
    m = W.vec_dim
    per_axis = nodes_per_axis if dil.dim > 1 else max(nodes_per_axis, 8)
    nodes = cube_nodes(dil, Q, per_axis)
    if len(nodes) < 8:
        raise QuadratureUnderflow("cube has fewer than 8 quadrature nodes")
    if p == 2:
        avg = W.evaluate(nodes).mean(axis=0)
        return _spectral_power(avg[None], 0.5)[0]
    directions = np.atleast_2d(directions)
    omega = np.array([omega_p_cube(W, p, nodes, u) for u in directions])
    if omega.min() <= 0 or omega.max() / omega.min() > 1e12:
        raise FitDegenerate("sampled norm values span too large a dynamic range")
    if m == 1:
        return np.array([[omega[0]]])
    boundary = directions / omega[:, None]
    h = min_enclosing_ellipsoid_centered(boundary, tol=fit_tol)
    a_mat = m**0.25 * _spectral_power(h[None], 0.5)[0]
    # Two-sided check on the grid, constant at most sqrt(m) (plus fit slack).
    vals = np.linalg.norm(directions @ a_mat.T, axis=1)
    c_hi = float(np.max(vals / omega))
    c_lo = float(np.max(omega / vals))
    bound = math.sqrt(m) * (1.0 + 1e-6)
    if c_hi > bound or c_lo > bound:
        raise FitDegenerate(
            f"reducing-operator sandwich violated: {c_hi:.4g}, {c_lo:.4g} > {bound:.4g}"
        )
    return a_mat


@dataclass
class ReducingFamily:
    """Reducing operators per cube, with the recorded fit quality."""

    p: float
    entries: dict
    equivalence_constant: float

    def operator(self, Q: DilatedCube) -> np.ndarray:
        key = (Q.j, Q.k)
        try:
            return self.entries[key]
        except KeyError:
            raise MissingCube(f"no reducing operator for cube {key}") from None


def build_reducing_family(
    W: MatrixWeightField,
    p: float,
    cubes,
    dil: Dilation,
    direction_count: int = 64,
    nodes_per_axis: int = 3,
) -> ReducingFamily:
    dirs = sphere_directions(W.vec_dim, direction_count)
    entries = {}
    worst = 1.0
    per_axis = nodes_per_axis if dil.dim > 1 else max(nodes_per_axis, 8)
    for q in cubes:
        a_mat = reducing_operator(W, p, q, dirs, dil, nodes_per_axis)
        entries[(q.j, q.k)] = a_mat
        nodes = cube_nodes(dil, q, per_axis)
        omega = np.array([omega_p_cube(W, p, nodes, u) for u in dirs])
        vals = np.linalg.norm(dirs @ a_mat.T, axis=1)
        worst = max(worst, float(np.max(vals / omega)), float(np.max(omega / vals)))
    return ReducingFamily(p=p, entries=entries, equivalence_constant=worst)


def identity_weight(m: int) -> IdentityWeight:
    return IdentityWeight(m)
