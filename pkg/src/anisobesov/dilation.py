"""Expansive dilation geometry.

Validates expansive matrices, constructs the dilated-ball family (an
ellipsoid Delta with |Delta| = 1 such that Delta subset r*Delta subset
A*Delta), evaluates the step homogeneous quasi-norm, and enumerates the
dilated cubes Q_{j,k} = A^{-k}([0,1)^d + j).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstructionFailed, NotExpansive, RegionTooLarge, Singular

#: Default exponents (lo, hi) used to bracket the eigenvalue moduli:
#: lambda_minus = (min |eig|)^lo, lambda_plus = (max |eig|)^hi.  Any pair
#: with 0 < lo < 1 < hi yields a strict bracket; override per experiment.
DEFAULT_LAMBDA_EXPONENTS = (0.99, 1.01)

#: Scale indices are clamped to this range when locating quasi-norm shells;
#: |det A|^k over/underflows float64 well before +-60 for typical dilations.
SCALE_CLAMP = 60

_INT_TOL = 1e-12

#: Named dilation matrices used across experiments and tests.
PRESETS = {
    "dyadic1d": [[2.0]],
    "dyadic2d": [[2.0, 0.0], [0.0, 2.0]],
    "diag23": [[2.0, 0.0], [0.0, 3.0]],
    "nondiag2d": [[3.0, 1.0], [1.0, 2.0]],
}


@dataclass
class Dilation:
    """A validated expansive matrix with its spectral data.

    ``lambda_minus``/``lambda_plus`` strictly bracket the eigenvalue moduli
    and ``zeta_minus``/``zeta_plus`` are their logarithms relative to
    log |det A|.
    """

    matrix: np.ndarray
    dim: int
    abs_det: float
    lambda_minus: float
    lambda_plus: float
    zeta_minus: float
    zeta_plus: float
    integer_lattice: bool
    _powers: dict = field(default_factory=dict, repr=False)

    def power(self, k: int) -> np.ndarray:
        """A^k for integer k, cached."""
        mat = self._powers.get(k)
        if mat is None:
            mat = np.linalg.matrix_power(self.matrix, k)
            self._powers[k] = mat
        return mat

    def adjoint(self) -> "Dilation":
        """The transposed dilation (same spectrum, same determinant)."""
        return validate_dilation(self.matrix.T)

    def descriptor(self) -> dict:
        return {"matrix": self.matrix.tolist()}


def validate_dilation(matrix, lambda_exponents=DEFAULT_LAMBDA_EXPONENTS) -> Dilation:
    """Validate an expansive matrix and derive its spectral constants.

    Raises ``Singular`` when det = 0 and ``NotExpansive`` when some
    eigenvalue modulus is <= 1.
    """
    mat = np.asarray(matrix, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise NotExpansive(f"expected a square matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise NotExpansive("matrix entries must be finite")
    det = np.linalg.det(mat)
    if abs(det) < 1e-300:
        raise Singular("matrix is singular")
    moduli = np.abs(np.linalg.eigvals(mat))
    if moduli.min() <= 1.0:
        raise NotExpansive(
            f"min eigenvalue modulus {moduli.min():.6g} <= 1; not expansive"
        )
    lo, hi = lambda_exponents
    if not (0.0 < lo < 1.0 < hi):
        raise ConstructionFailed("lambda exponents must satisfy 0 < lo < 1 < hi")
    lam_minus = float(moduli.min()) ** lo
    lam_plus = float(moduli.max()) ** hi
    abs_det = abs(float(det))
    log_det = math.log(abs_det)
    is_int = bool(np.all(np.abs(mat - np.round(mat)) < _INT_TOL) and abs_det >= 2.0)
    return Dilation(
        matrix=mat,
        dim=mat.shape[0],
        abs_det=abs_det,
        lambda_minus=lam_minus,
        lambda_plus=lam_plus,
        zeta_minus=math.log(lam_minus) / log_det,
        zeta_plus=math.log(lam_plus) / log_det,
        integer_lattice=is_int,
    )


def _unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


@dataclass
class BallFamily:
    """Ellipsoid family B_k = A^k Delta with Delta = {x : |Px| < 1}, |Delta| = 1.

    ``step_lo``/``step_hi`` are the exact extreme growth factors of the gauge
    |Px| under one application of A: step_lo * |Px| <= |P A x| <= step_hi * |Px|.
    """

    dilation: Dilation
    shape: np.ndarray          # P
    form: np.ndarray           # M = P^T P
    ratio: float               # r with Delta subset r Delta subset A Delta
    sigma: int                 # smallest integer with 2 B_0 subset A^sigma B_0
    step_lo: float
    step_hi: float

    def gauge(self, x) -> np.ndarray:
        """|P x| for a point or an (N, d) array of points."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        return np.linalg.norm(pts @ self.shape.T, axis=1)

    def ball_contains(self, k: int, x) -> np.ndarray:
        """Membership of points in B_k = A^k Delta."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        y = pts @ self.dilation.power(-k).T
        return self.gauge(y) < 1.0

    def quasi_norm(self, x):
        """Step homogeneous quasi-norm, vectorized over points."""
        return _quasi_norm(self, np.asarray(x, dtype=float))

    def descriptor(self) -> dict:
        return {
            "shape": self.shape.tolist(),
            "ratio": self.ratio,
            "sigma": self.sigma,
        }


def _containment_factor(form: np.ndarray, form_inner: np.ndarray) -> float:
    """Largest t with {x^T form_inner x < 1} superset sqrt(t)-scaled ... .

    Returns lambda_max(form^{-1/2} form_inner form^{-1/2}): the inner
    ellipsoid {x : x^T form_inner x < 1} contains {x : x^T form x < 1/s}
    exactly when s >= that eigenvalue.
    """
    w, v = np.linalg.eigh(form)
    inv_sqrt = v @ np.diag(1.0 / np.sqrt(w)) @ v.T
    sym = inv_sqrt @ form_inner @ inv_sqrt
    return float(np.linalg.eigvalsh(sym).max())


def build_ball_family(dil: Dilation, series_tol: float = 1e-12) -> BallFamily:
    """Construct the dilated-ball family for a validated dilation.

    The shape form M solves the discrete Lyapunov-type relation via the
    geometric series M = sum_i lambda_minus^{2i} (A^{-i})^T A^{-i}, truncated
    once terms fall below ``series_tol``; this guarantees
    A^{-T} M A^{-1} <= M / lambda_minus^2, hence Delta subset r Delta subset
    A Delta for any r up to the exact generalized-eigenvalue bound.  M is
    rescaled so that |Delta| = 1.
    """
    a_inv = np.linalg.inv(dil.matrix)
    c = dil.lambda_minus ** 2
    # Terms c^i (A^{-i})^T A^{-i} accumulated incrementally; the ratio
    # (lambda_minus / min|eig|)^2 < 1 makes this geometric, but it can be
    # slow when lambda_minus hugs the spectral edge, so iterate generously.
    add = np.eye(dil.dim)
    m_form = add.copy()
    for _ in range(200_000):
        add = c * (a_inv.T @ add @ a_inv)
        m_form += add
        if np.abs(add).max() < series_tol * np.abs(m_form).max():
            break
    else:
        raise ConstructionFailed("Lyapunov series did not converge")
    m_form = 0.5 * (m_form + m_form.T)
    eigs = np.linalg.eigvalsh(m_form)
    if eigs.min() <= 0:
        raise ConstructionFailed("Lyapunov series produced a non-PD form")

    # Rescale so |Delta| = vol(unit ball) / sqrt(det M) = 1.
    det_m = np.linalg.det(m_form)
    scale = (_unit_ball_volume(dil.dim) ** 2 / det_m) ** (1.0 / dil.dim)
    m_form = m_form * scale

    m_a = a_inv.T @ m_form @ a_inv
    r_sq_max = 1.0 / _containment_factor(m_form, m_a)
    if r_sq_max <= 1.0:
        raise ConstructionFailed("constructed ellipsoid violates Delta subset A Delta")
    step_lo = math.sqrt(r_sq_max)
    ratio = math.sqrt(step_lo)  # strictly inside (1, step_lo)

    w, v = np.linalg.eigh(m_form)
    shape = v @ np.diag(np.sqrt(w)) @ v.T
    step_hi = float(
        np.linalg.norm(shape @ dil.matrix @ np.linalg.inv(shape), ord=2)
    )

    sigma = None
    for s in range(1, 64):
        a_s_inv = np.linalg.matrix_power(a_inv, s)
        factor = _containment_factor(m_form, a_s_inv.T @ m_form @ a_s_inv)
        if factor <= 0.25 * (1.0 + 1e-12):
            sigma = s
            break
    if sigma is None:
        raise ConstructionFailed("no overlap constant sigma <= 64 found")

    return BallFamily(
        dilation=dil,
        shape=shape,
        form=m_form,
        ratio=ratio,
        sigma=sigma,
        step_lo=step_lo,
        step_hi=step_hi,
    )


def _quasi_norm(bf: BallFamily, x: np.ndarray):
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    n_pts = pts.shape[0]
    out = np.zeros(n_pts)
    nu = bf.gauge(pts)
    nz = nu > 0.0
    if nz.any():
        out[nz] = _quasi_norm_nonzero(bf, pts[nz], nu[nz])
    return float(out[0]) if single else out


def _quasi_norm_nonzero(bf: BallFamily, pts, nu):
    dil = bf.dilation
    log_lo = math.log(bf.step_lo)
    log_nu = np.log(nu)
    # k* = smallest k with |P A^{-k} x| < 1; bracket it using the extreme
    # per-step gauge factors, then scan (membership is monotone in k).
    k_hi = int(np.ceil(np.max(np.maximum(log_nu, 0.0)) / log_lo)) + 1
    k_lo = -int(np.ceil(np.max(np.maximum(-log_nu, 0.0)) / log_lo)) - 1
    k_hi = min(k_hi, SCALE_CLAMP)
    k_lo = max(k_lo, -SCALE_CLAMP)
    ks = np.arange(k_lo, k_hi + 1)
    inside = np.empty((pts.shape[0], ks.size), dtype=bool)
    for i, k in enumerate(ks):
        y = pts @ (bf.shape @ dil.power(-int(k))).T
        inside[:, i] = np.einsum("ij,ij->i", y, y) < 1.0
    first = np.argmax(inside, axis=1)
    # Points still outside at k_hi sit beyond the clamp; peg them there.
    none_inside = ~inside.any(axis=1)
    k_star = ks[first]
    k_star[none_inside] = SCALE_CLAMP
    return np.power(dil.abs_det, (k_star - 1).astype(float))


def step_quasi_norm(bf: BallFamily, dil: Dilation, x):
    """rho(x) = |det A|^k on the shell B_{k+1} \\ B_k, rho(0) = 0."""
    return bf.quasi_norm(x)


def eccentricity_constants(
    bf: BallFamily, dil: Dilation, sample_count: int, seed: int = 0
) -> float:
    """Fit the smallest C for the two-sided power bounds between rho and |x|.

    On the sample, enforces (1/C) rho^{zeta_-} <= |x| <= C rho^{zeta_+} when
    rho >= 1 and the exponent-swapped version when rho < 1.  The sample is
    prefix-stable in ``sample_count`` (separate child generators for
    directions and radii), so the fit is monotone non-decreasing in the
    sample count.
    """
    if sample_count < 100:
        raise ValueError("sample_count must be >= 100")
    rng_dir = np.random.default_rng([seed, 1])
    rng_rad = np.random.default_rng([seed, 2])
    dirs = rng_dir.normal(size=(sample_count, dil.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.exp(rng_rad.uniform(math.log(1e-3), math.log(1e3), sample_count))
    pts = dirs * radii[:, None]
    # Deterministic probes on the rho = 1 shell (boundary of B_0).
    shell = np.linalg.inv(bf.shape) @ np.eye(dil.dim)
    pts = np.vstack([pts, shell.T, -shell.T])

    rho = bf.quasi_norm(pts)
    mag = np.linalg.norm(pts, axis=1)
    keep = (rho > 0) & (mag > 0)
    rho, mag = rho[keep], mag[keep]
    big = rho >= 1.0
    c_fit = 1.0
    if big.any():
        c_fit = max(
            c_fit,
            np.max(rho[big] ** dil.zeta_minus / mag[big]),
            np.max(mag[big] / rho[big] ** dil.zeta_plus),
        )
    small = ~big
    if small.any():
        c_fit = max(
            c_fit,
            np.max(rho[small] ** dil.zeta_plus / mag[small]),
            np.max(mag[small] / rho[small] ** dil.zeta_minus),
        )
    return float(c_fit)


@dataclass(frozen=True)
class DilatedCube:
    """Q_{j,k} = A^{-k}([0,1)^d + j); identity is the index pair (j, k)."""

    j: tuple
    k: int
    x_corner: tuple = field(compare=False)
    volume: float = field(compare=False)

    @property
    def corner(self) -> np.ndarray:
        return np.asarray(self.x_corner, dtype=float)


def make_cube(dil: Dilation, j, k: int) -> DilatedCube:
    j = tuple(int(v) for v in np.atleast_1d(j))
    corner = dil.power(-k) @ np.asarray(j, dtype=float)
    return DilatedCube(
        j=j, k=int(k), x_corner=tuple(corner), volume=dil.abs_det ** (-k)
    )


def cube_containing(dil: Dilation, k: int, x) -> DilatedCube:
    """The unique cube at scale k whose half-open preimage contains x."""
    u = dil.power(k) @ np.asarray(x, dtype=float)
    return make_cube(dil, np.floor(u).astype(int), k)


def cube_nodes(dil: Dilation, cube: DilatedCube, per_axis: int = 3) -> np.ndarray:
    """Midpoint tensor quadrature nodes inside a cube (grid-independent)."""
    d = dil.dim
    ticks = (np.arange(per_axis) + 0.5) / per_axis
    mesh = np.stack(np.meshgrid(*([ticks] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return (mesh + np.asarray(cube.j, dtype=float)) @ dil.power(-cube.k).T


def cubes_at_scale(dil: Dilation, k: int, region, cap: int = 1_000_000):
    """All cubes at scale k whose interiors intersect an axis-aligned box.

    ``region`` is a (d, 2) array of per-axis (lo, hi).  Uses a separating-axis
    test with the box normals and the cube facet normals (exact for d <= 2).
    Raises ``RegionTooLarge`` when the candidate enumeration exceeds ``cap``.
    """
    region = np.asarray(region, dtype=float).reshape(dil.dim, 2)
    if np.any(region[:, 1] <= region[:, 0]):
        return []
    a_k = dil.power(k)
    a_mk = dil.power(-k)
    corners = _box_corners(region)
    mapped = corners @ a_k.T
    lo = np.floor(mapped.min(axis=0)).astype(int) - 1
    hi = np.ceil(mapped.max(axis=0)).astype(int) + 1
    counts = hi - lo + 1
    if np.prod(counts.astype(float)) > cap:
        raise RegionTooLarge(
            f"cube enumeration at scale {k} needs {np.prod(counts.astype(float)):.3g} "
            f"candidates (cap {cap})"
        )
    grids = np.meshgrid(*[np.arange(l, h + 1) for l, h in zip(lo, hi)], indexing="ij")
    cand = np.stack([g.ravel() for g in grids], axis=1)

    # Separating axes: box normals e_i and cube facet normals (rows of A^k).
    axes = np.vstack([np.eye(dil.dim), a_k])
    unit = _box_corners(np.stack([np.zeros(dil.dim), np.ones(dil.dim)], axis=1))
    cube_base = unit @ a_mk.T  # corners of Q_{0,k}
    keep = np.ones(len(cand), dtype=bool)
    for ax in axes:
        b_proj = corners @ ax
        b_lo, b_hi = b_proj.min(), b_proj.max()
        base = cube_base @ ax
        shift = cand @ (a_mk.T @ ax)
        c_lo = base.min() + shift
        c_hi = base.max() + shift
        keep &= (c_lo < b_hi - 1e-12) & (c_hi > b_lo + 1e-12)
        if not keep.any():
            return []
    return [make_cube(dil, j, k) for j in cand[keep]]


def _box_corners(region: np.ndarray) -> np.ndarray:
    d = region.shape[0]
    bits = np.stack(
        np.meshgrid(*([np.array([0, 1])] * d), indexing="ij"), axis=-1
    ).reshape(-1, d)
    return region[:, 0] + bits * (region[:, 1] - region[:, 0])


def preset_dilation(name: str) -> Dilation:
    """Validate one of the named preset matrices."""
    try:
        mat = PRESETS[name]
    except KeyError:
        raise ConstructionFailed(
            f"unknown preset {name!r}; choices: {sorted(PRESETS)}"
        ) from None
    return validate_dilation(mat)
