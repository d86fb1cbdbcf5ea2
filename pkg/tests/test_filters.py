import math

import numpy as np
import pytest

from anisobesov import build_ball_family, preset_dilation
from anisobesov.errors import AnnulusEmpty
from anisobesov.filters import (
    FilterBank,
    dilated_filter_hat,
    synthesize_homogeneous_pair,
    synthesize_inhomogeneous_pair,
    verify_calderon,
)

PRESETS = ["dyadic1d", "dyadic2d", "diag23", "nondiag2d"]


@pytest.fixture(scope="module")
def banks():
    out = {}
    for name in PRESETS:
        dil = preset_dilation(name)
        out[name] = synthesize_homogeneous_pair(dil, 2, range(-8, 9))
    return out


class TestHomogeneous:
    @pytest.mark.parametrize("name", PRESETS)
    def test_partition_of_unity(self, banks, name):
        fb = banks[name]
        assert fb.admissibility.calderon_residual < 1e-8
        # direct re-check on fresh samples
        assert verify_calderon(fb, 1000, range(-9, 10), seed=71) < 1e-8

    @pytest.mark.parametrize("name", PRESETS)
    def test_support_excludes_origin_and_cube(self, banks, name):
        fb = banks[name]
        d = fb.dilation.dim
        assert fb.phi_hat(np.zeros((1, d)))[0] == 0.0
        # support of the base band is inside [-pi, pi]^d with margin
        assert np.all(fb.support_extent(0) <= math.pi)

    @pytest.mark.parametrize("name", PRESETS)
    def test_some_scale_covers_every_frequency(self, banks, name):
        fb = banks[name]
        rng = np.random.default_rng(3)
        xi = rng.normal(size=(1000, fb.dilation.dim)) * np.exp(
            rng.uniform(-3, 2, size=(1000, 1))
        )
        den = fb._normalizer(xi)
        assert np.all(den > 0)

    @pytest.mark.parametrize("name", ["dyadic2d", "nondiag2d"])
    def test_overlap_bound(self, banks, name):
        fb = banks[name]
        assert fb.admissibility.max_overlap_seen <= 2 * fb.adjoint_balls.sigma + 1

    def test_scale_zero_is_base(self, banks):
        fb = banks["dyadic2d"]
        rng = np.random.default_rng(1)
        xi = rng.uniform(-3, 3, size=(100, 2))
        assert np.allclose(dilated_filter_hat(fb, 0, xi), fb.phi_hat(xi))

    def test_scaled_support_pushforward(self, banks):
        # Nonzero values at scale k occur exactly where (A*)^{-k} xi lies in
        # the base annulus.
        fb = banks["diag23"]
        rng = np.random.default_rng(2)
        xi = rng.normal(size=(500, 2)) * np.exp(rng.uniform(-2, 3, (500, 1)))
        for k in (-1, 2):
            vals = dilated_filter_hat(fb, k, xi)
            back = xi @ fb.adjoint.power(-k).T
            nu = fb.gauge(back)
            on_annulus = (nu > fb.c1) & (nu < fb.c2)
            assert np.all(vals[~on_annulus] == 0.0)
            interior = (nu > fb.c1 * 1.2) & (nu < fb.c2 / 1.2)
            assert np.all(vals[interior] > 0.0)

    def test_truncated_window_uncovers_shells(self, banks):
        fb = banks["dyadic2d"]
        rng = np.random.default_rng(4)
        xi = rng.normal(size=(200, 2)) * np.exp(rng.uniform(-2, 2, (200, 1)))
        first, last = fb.shell_range(xi)
        sel = (first >= 3) | (last <= -3)  # shells missed by the window below
        total = np.zeros(len(xi))
        for k in range(-2, 3):
            total += fb.scaled_hat("phi", k, xi) * fb.scaled_hat("psi", k, xi)
        assert np.all(np.abs(1.0 - total[sel]) > 0.5)

    def test_distinct_pair_keeps_identity(self):
        dil = preset_dilation("dyadic2d")
        fb = synthesize_homogeneous_pair(dil, 2, range(-6, 7), pair_split=0.4)
        assert fb.admissibility.calderon_residual < 1e-8
        rng = np.random.default_rng(6)
        xi = rng.normal(size=(200, 2))
        # phi and psi genuinely differ
        assert np.max(np.abs(fb.phi_hat(xi) - fb.psi_hat(xi))) > 1e-3

    def test_two_annuli_both_admissible(self):
        dil = preset_dilation("diag23")
        fb_a = synthesize_homogeneous_pair(dil, 2, range(-6, 7))
        fb_b = synthesize_homogeneous_pair(dil, 2, range(-6, 7), annulus_scale=0.8)
        assert fb_a.admissibility.calderon_residual < 1e-8
        assert fb_b.admissibility.calderon_residual < 1e-8
        assert fb_b.c2 < fb_a.c2

    def test_bad_smoothness_rejected(self):
        with pytest.raises(AnnulusEmpty):
            FilterBank(preset_dilation("dyadic2d"), smoothness=1)

    def test_descriptor_roundtrip(self, banks):
        fb = banks["nondiag2d"]
        clone = FilterBank.from_descriptor(fb.descriptor())
        rng = np.random.default_rng(8)
        xi = rng.normal(size=(300, 2)) * np.exp(rng.uniform(-2, 2, (300, 1)))
        assert np.array_equal(clone.phi_hat(xi), fb.phi_hat(xi))


class TestInhomogeneous:
    @pytest.mark.parametrize("name", PRESETS)
    def test_partition_and_lowpass(self, name):
        dil = preset_dilation(name)
        fb = synthesize_inhomogeneous_pair(dil, 2, 10)
        assert fb.admissibility.calderon_residual < 1e-8
        d = dil.dim
        assert fb.low_pass_hat(np.zeros((1, d)))[0] == pytest.approx(1.0)
        rng = np.random.default_rng(9)
        samp = rng.uniform(-math.pi, math.pi, size=(1500, d))
        nu = fb.gauge(samp)
        inside = samp[(nu > 0) & (nu <= 0.99 * fb.c2)]
        assert np.all(fb.low_pass_hat(inside) > 0)

    def test_lowpass_support_in_cube(self):
        dil = preset_dilation("dyadic2d")
        fb = synthesize_inhomogeneous_pair(dil, 2, 8)
        rng = np.random.default_rng(10)
        outside = rng.uniform(1.5, 3.0, size=(200, 2)) * math.pi
        outside *= np.sign(rng.normal(size=(200, 2)))
        assert np.all(fb.low_pass_hat(outside) == 0.0)


class TestPhysicalSpace:
    @staticmethod
    def _kernel_weighted_sup(fb, bf, n, box, ell):
        freqs = 2 * math.pi * np.fft.fftfreq(n, d=box / n)
        fx, fy = np.meshgrid(freqs, freqs, indexing="ij")
        xi = np.stack([fx.ravel(), fy.ravel()], axis=1)
        phi = np.fft.ifftn(fb.phi_hat(xi).reshape(n, n)) * (n / box) ** 2
        coords = np.arange(n) * (box / n)
        coords = np.where(coords > box / 2, coords - box, coords)  # wrap
        gx, gy = np.meshgrid(coords, coords, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        rho = bf.quasi_norm(pts)
        r = np.sqrt(gx**2 + gy**2).ravel()
        w = rho**ell * np.abs(phi).ravel()
        i = int(np.argmax(w))
        return float(w[i]), float(r[i])

    def test_schwartz_decay_proxy(self, banks):
        # sup_x rho(x)^l |phi(x)| must be attained strictly inside the box
        # and stay put when the box doubles (finite weighted sup, not a
        # boundary artifact), for three weight orders l.
        fb = banks["dyadic2d"]
        bf = build_ball_family(fb.dilation)
        for ell in (1.0, 1.5, 2.0):
            sup_small, loc_small = self._kernel_weighted_sup(fb, bf, 256, 32.0, ell)
            sup_big, loc_big = self._kernel_weighted_sup(fb, bf, 512, 64.0, ell)
            assert loc_big < 0.7 * 32.0  # interior, not at the boundary
            assert sup_big <= 1.2 * sup_small
            assert sup_big >= 0.8 * sup_small

    def test_gradient_bound_recorded(self, banks):
        for name in PRESETS:
            ad = banks[name].admissibility
            assert np.isfinite(ad.gradient_bound) and ad.gradient_bound > 0
