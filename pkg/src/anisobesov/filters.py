"""Frequency-domain analysis/synthesis filter pairs.

The band profile telescopes by construction.  With the smooth ellipsoidal
gauge nu(xi) = |P* xi| of the adjoint dilation and a C-infinity decreasing
cutoff eta (1 near 0, 0 beyond c_cut),

    |phi_hat(xi)|^2 = eta(nu((A*)^{-1} xi)) - eta(nu(xi)) >= 0,

so the partition sum over scales collapses exactly:

    sum_k conj(phi_hat((A*)^{-k} xi)) psi_hat((A*)^{-k} xi) = 1,  xi != 0,

with bitwise-exact cancellation of the interior terms, and the low-pass
completion has the closed form Phi_hat(xi)^2 = eta(nu((A*)^{-1} xi)).
Monotonicity of the difference is guaranteed by the one-step gauge bound
nu((A*)^{-1} xi) <= nu(xi) / step_lo with step_lo > 1; the support is the
gauge annulus {c1 <= nu <= c2} inside [-pi, pi]^d \\ {0}, and at most a few
scales contribute at any frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dilation import Dilation, build_ball_family, validate_dilation
from .errors import AnnulusEmpty, NegativeMass, NormalizationSingular

#: Fraction of the Nyquist cube [-pi, pi]^d kept as support margin.
_CUBE_MARGIN = 0.95

#: Lower bound on the cutoff transition width (gauge ratio); widths this
#: close to 1 only arise for extremely anisotropic dilations.
_MIN_TRANSITION = 1.05


def _smooth_step(u: np.ndarray, order: int) -> np.ndarray:
    """C^order step: 0 for u <= 0, 1 for u >= 1, regularized beta between.

    The derivative u^order (1-u)^order / B(order+1, order+1) vanishes to
    the given order at both edges, so the induced kernels decay like
    |x|^{-(order+1)} with small constants (polynomial profiles behave far
    better numerically than bump profiles of nominal C-infinity class).
    """
    from scipy.special import betainc

    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    return betainc(order + 1, order + 1, u)


@dataclass
class FilterAdmissibility:
    """Verification record attached to a bank at synthesis time."""

    calderon_residual: float
    max_overlap_seen: int
    overlap_bound: int
    gradient_bound: float


class FilterBank:
    """An admissible analysis/synthesis pair in the frequency domain.

    Parameters
    ----------
    dilation : Dilation
        The spatial dilation A; filters are indexed through its adjoint.
    smoothness : int
        Verification order for the Schwartz-decay checks (the profile
        itself is C-infinity); must be >= 2.
    annulus_scale : float
        Shrinks the support annulus; two banks with different values give
        independent admissible pairs.
    pair_split : float
        0 gives the self-dual pair psi = phi; a nonzero value splits the
        band into g/h and g*h for a smooth positive h, leaving the
        partition identity intact.
    homogeneous : bool
        Whether the bank omits the low-pass pair (Phi, Psi).
    """

    def __init__(
        self,
        dilation: Dilation,
        smoothness: int = 8,
        annulus_scale: float = 1.0,
        pair_split: float = 0.0,
        homogeneous: bool = True,
    ):
        if smoothness < 2:
            raise AnnulusEmpty("smoothness order must be >= 2")
        if not 0.0 < annulus_scale <= 1.0:
            raise AnnulusEmpty("annulus_scale must lie in (0, 1]")
        self.dilation = dilation
        self.smoothness = int(smoothness)
        self.annulus_scale = float(annulus_scale)
        self.pair_split = float(pair_split)
        self.homogeneous = bool(homogeneous)
        self.adjoint = dilation.adjoint()
        self.adjoint_balls = build_ball_family(self.adjoint)

        s_lo = self.adjoint_balls.step_lo
        s_hi = self.adjoint_balls.step_hi
        sigma = self.adjoint_balls.sigma
        gauge_inv = np.linalg.inv(self.adjoint_balls.shape)
        max_extent = float(np.max(np.linalg.norm(gauge_inv, axis=1)))
        # Outer support edge c2 = s_hi * c_cut must stay inside the cube.
        self.c_cut = _CUBE_MARGIN * self.annulus_scale * math.pi / (max_extent * s_hi)
        # Transition width: as wide as one adjoint step, capped so that at
        # most 2 sigma* + 1 scales can touch any frequency.
        width_cap = 0.95 * s_lo ** (2 * sigma + 1) / s_hi
        self.transition = max(min(s_lo, width_cap), _MIN_TRANSITION)
        self.c1 = self.c_cut / self.transition
        self.c2 = self.c_cut * s_hi
        if not 0.0 < self.c1 < self.c2:
            raise AnnulusEmpty("no admissible annulus inside [-pi, pi]^d")
        self.overlap_bound = (
            int(math.log(s_hi * self.transition) / math.log(s_lo)) + 1
        )
        self.admissibility: FilterAdmissibility | None = None

    # -- gauge and cutoff -------------------------------------------------------

    def gauge(self, xi: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.atleast_2d(xi) @ self.adjoint_balls.shape.T, axis=1)

    def _cutoff(self, nu: np.ndarray) -> np.ndarray:
        """eta(nu): 1 for nu <= c_cut / transition, 0 for nu >= c_cut."""
        out = np.ones_like(nu)
        pos = nu > 0
        progress = (np.log(nu[pos]) - math.log(self.c1)) / math.log(self.transition)
        out[pos] = 1.0 - _smooth_step(progress, self.smoothness)
        return out

    def band_sq(self, xi: np.ndarray) -> np.ndarray:
        """|phi_hat psi_hat|(xi) = eta(nu((A*)^{-1} xi)) - eta(nu(xi))."""
        xi = np.atleast_2d(xi)
        up = self._cutoff(self.gauge(xi @ self.adjoint.power(-1).T))
        lo = self._cutoff(self.gauge(xi))
        return np.clip(up - lo, 0.0, None)

    def _split_factor(self, xi: np.ndarray) -> np.ndarray:
        """Smooth positive h on the annulus; h = 1 when pair_split = 0."""
        nu = self.gauge(xi)
        out = np.ones_like(nu)
        if self.pair_split != 0.0:
            pos = nu > 0
            t = (np.log(nu[pos]) - math.log(self.c1)) / math.log(self.c2 / self.c1)
            out[pos] = np.exp(self.pair_split * np.cos(math.pi * t))
        return out

    # -- evaluators --------------------------------------------------------------

    def phi_hat(self, xi: np.ndarray) -> np.ndarray:
        return self._band_hat(xi, invert_split=True)

    def psi_hat(self, xi: np.ndarray) -> np.ndarray:
        return self._band_hat(xi, invert_split=False)

    def _band_hat(self, xi: np.ndarray, invert_split: bool) -> np.ndarray:
        xi = np.atleast_2d(xi)
        vals = np.sqrt(self.band_sq(xi))
        if self.pair_split != 0.0:
            on = vals > 0
            if on.any():
                h = self._split_factor(xi[on])
                vals[on] = vals[on] / h if invert_split else vals[on] * h
        return vals

    def low_pass_hat(self, xi: np.ndarray) -> np.ndarray:
        """Phi_hat = Psi_hat = sqrt(1 - sum_{k>=1} |phi_hat|^2).

        The telescoping profile gives the closed form
        Phi_hat(xi)^2 = eta(nu((A*)^{-1} xi)); in particular Phi_hat(0) = 1
        and Phi_hat > 0 exactly on {nu((A*)^{-1} xi) < c_cut}.
        """
        xi = np.atleast_2d(xi)
        mass = self._cutoff(self.gauge(xi @ self.adjoint.power(-1).T))
        if np.any(mass < -1e-12):
            raise NegativeMass(f"low-pass mass dipped to {mass.min():.3g}")
        return np.sqrt(np.clip(mass, 0.0, None))

    def low_pass_positive(self, xi: np.ndarray) -> np.ndarray:
        """Exact predicate for Phi_hat > 0 (interior of the closed support)."""
        xi = np.atleast_2d(xi)
        return self.gauge(xi @ self.adjoint.power(-1).T) < self.c_cut

    def scaled_hat(self, which: str, k: int, xi: np.ndarray) -> np.ndarray:
        """The scale-k multiplier: phi_hat((A*)^{-k} xi) and friends.

        ``phi_tilde``/``psi_tilde`` are the conjugate-reflection multipliers;
        the evaluators here are real, so they coincide with phi/psi values,
        but transforms apply them conjugated where required.
        """
        xi = np.atleast_2d(xi)
        if which in ("Phi", "Psi"):
            return self.low_pass_hat(xi)
        y = xi @ self.adjoint.power(-int(k)).T
        if which in ("phi", "phi_tilde"):
            return self.phi_hat(y)
        if which in ("psi", "psi_tilde"):
            return self.psi_hat(y)
        raise ValueError(f"unknown filter selector {which!r}")

    # -- scale bookkeeping --------------------------------------------------------

    def _scale_bounds(self, nu_pos: np.ndarray):
        """Per-point integer bounds on the scales whose band can be nonzero.

        One application of (A*)^{-1} scales the gauge by a factor in
        [1/step_hi, 1/step_lo]; taking the extreme division on each side
        gives a window guaranteed to contain every contributing scale.
        """
        log_r = math.log(self.adjoint_balls.step_lo)
        log_s = math.log(self.adjoint_balls.step_hi)
        x1 = np.log(nu_pos) - math.log(self.c1)
        x2 = np.log(nu_pos) - math.log(self.c2)
        k_hi = np.floor(np.maximum(x1 / log_r, x1 / log_s)).astype(int) + 1
        k_lo = np.ceil(np.minimum(x2 / log_r, x2 / log_s)).astype(int) - 1
        return k_lo, k_hi

    def _scan_scales(self, pts, nu_pos, k_cap=None):
        """Yield (k, mask, band_sq values) over scales that can contribute."""
        k_lo, k_hi = self._scale_bounds(nu_pos)
        stop = int(k_hi.max())
        if k_cap is not None:
            stop = min(stop, k_cap)
        for k in range(int(k_lo.min()), stop + 1):
            mask = (k_lo <= k) & (k <= k_hi)
            if not mask.any():
                continue
            g2 = self.band_sq(pts[mask] @ self.adjoint.power(-k).T)
            yield k, mask, g2

    def _normalizer(self, xi: np.ndarray, count_overlap: bool = False):
        """sum_k |phi_hat psi_hat|((A*)^{-k} xi): 1 on covered frequencies."""
        xi = np.atleast_2d(xi)
        nu = self.gauge(xi)
        den = np.zeros(len(xi))
        overlap = np.zeros(len(xi), dtype=int)
        pos = nu > 0
        if pos.any():
            pts = xi[pos]
            den_pos = np.zeros(len(pts))
            over_pos = np.zeros(len(pts), dtype=int)
            for _, mask, g2 in self._scan_scales(pts, nu[pos]):
                den_pos[mask] += g2
                if count_overlap:
                    over_pos[mask] += g2 > 0
            den[pos] = den_pos
            overlap[pos] = over_pos
        if count_overlap:
            return den, overlap
        return den

    # -- support geometry ----------------------------------------------------------

    def support_extent(self, k: int) -> np.ndarray:
        """Per-axis extent of the scale-k band support (A*)^k {nu <= c2}."""
        mat = self.adjoint.power(int(k)) @ np.linalg.inv(self.adjoint_balls.shape)
        return self.c2 * np.linalg.norm(mat, axis=1)

    def shell_range(self, xi: np.ndarray):
        """Per-point first and last scale k with a nonzero band value."""
        xi = np.atleast_2d(xi)
        nu = self.gauge(xi)
        first = np.full(len(xi), 10**6)
        last = np.full(len(xi), -(10**6))
        pos = nu > 0
        if pos.any():
            pts = xi[pos]
            pos_idx = np.where(pos)[0]
            for k, mask, g2 in self._scan_scales(pts, nu[pos]):
                idx = pos_idx[mask][g2 > 0]
                first[idx] = np.minimum(first[idx], k)
                last[idx] = np.maximum(last[idx], k)
        return first, last

    def descriptor(self) -> dict:
        return {
            "dilation": self.dilation.matrix.tolist(),
            "smoothness": self.smoothness,
            "annulus_scale": self.annulus_scale,
            "pair_split": self.pair_split,
            "homogeneous": self.homogeneous,
            "annulus": {"c1": self.c1, "c2": self.c2, "c_cut": self.c_cut},
            "profile": "telescoping_smooth_step_log_gauge",
            "scale_convention": "multiplier_at_k_is_adjoint_minus_k",
        }

    @classmethod
    def from_descriptor(cls, desc: dict) -> "FilterBank":
        return cls(
            validate_dilation(desc["dilation"]),
            smoothness=desc["smoothness"],
            annulus_scale=desc["annulus_scale"],
            pair_split=desc.get("pair_split", 0.0),
            homogeneous=desc.get("homogeneous", True),
        )


def synthesize_homogeneous_pair(
    dil: Dilation,
    smoothness: int = 8,
    k_window=range(-3, 4),
    annulus_scale: float = 1.0,
    pair_split: float = 0.0,
) -> FilterBank:
    """Build an admissible homogeneous pair and record its residuals."""
    fb = FilterBank(
        dil,
        smoothness=smoothness,
        annulus_scale=annulus_scale,
        pair_split=pair_split,
        homogeneous=True,
    )
    _record_admissibility(fb, k_window)
    return fb


def synthesize_inhomogeneous_pair(
    dil: Dilation,
    smoothness: int = 8,
    k_max: int = 6,
    annulus_scale: float = 1.0,
    pair_split: float = 0.0,
) -> FilterBank:
    """Build an admissible inhomogeneous pair (with low-pass completion)."""
    fb = FilterBank(
        dil,
        smoothness=smoothness,
        annulus_scale=annulus_scale,
        pair_split=pair_split,
        homogeneous=False,
    )
    _record_admissibility(fb, range(1, k_max + 1))
    return fb


def _frequency_samples(fb: FilterBank, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, count])
    d = fb.dilation.dim
    # Mix cube-uniform samples with log-radial ones so that small shells
    # are exercised too.
    cube = rng.uniform(-math.pi, math.pi, size=(count // 2, d))
    dirs = rng.normal(size=(count - count // 2, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.exp(rng.uniform(math.log(1e-3), math.log(math.pi), len(dirs)))
    return np.vstack([cube, dirs * radii[:, None]])


def verify_calderon(
    fb: FilterBank, sample_count: int = 1000, k_window=range(-8, 9), seed: int = 23
) -> float:
    """Max |1 - partition sum| over samples whose shells lie inside k_window.

    For inhomogeneous banks the partition sum is
    conj(Phi_hat) Psi_hat + sum_{k in window, k >= 1} conj(phi_hat_k) psi_hat_k
    and only the k >= 1 shells need to fit in the window.
    """
    xi = _frequency_samples(fb, sample_count, seed)
    first, last = fb.shell_range(xi)
    ks = [k for k in k_window if fb.homogeneous or k >= 1]
    if fb.homogeneous:
        covered = (first >= min(ks)) & (last <= max(ks)) & (first <= last)
    else:
        covered = last <= max(ks)
    xi = xi[covered]
    if len(xi) == 0:
        return float("nan")
    total = np.zeros(len(xi))
    for k in ks:
        total += fb.scaled_hat("phi", k, xi) * fb.scaled_hat("psi", k, xi)
    if not fb.homogeneous:
        total += fb.low_pass_hat(xi) ** 2
    return float(np.max(np.abs(1.0 - total)))


def dilated_filter_hat(fb: FilterBank, k: int, xi) -> np.ndarray:
    """phi_hat((A*)^{-k} xi): the scale-k band multiplier."""
    return fb.scaled_hat("phi", k, np.atleast_2d(np.asarray(xi, dtype=float)))


def _record_admissibility(fb: FilterBank, k_window) -> None:
    residual = verify_calderon(fb, 1000, k_window)
    xi = _frequency_samples(fb, 600, seed=29)
    den, overlap = fb._normalizer(xi, count_overlap=True)
    if np.any(den <= 0):
        raise NormalizationSingular("frequency with no band coverage")
    # Finite-difference gradient probe of phi_hat along each axis.
    d = fb.dilation.dim
    step = 1e-4
    grad = 0.0
    base = fb.phi_hat(xi)
    for i in range(d):
        shifted = xi.copy()
        shifted[:, i] += step
        grad = max(grad, float(np.max(np.abs(fb.phi_hat(shifted) - base))) / step)
    fb.admissibility = FilterAdmissibility(
        calderon_residual=residual,
        max_overlap_seen=int(overlap.max()),
        overlap_bound=fb.overlap_bound,
        gradient_bound=grad,
    )
