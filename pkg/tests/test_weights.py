import numpy as np
import pytest
import scipy.linalg

from anisobesov import build_ball_family, preset_dilation
from anisobesov.dilation import cube_nodes, make_cube
from anisobesov.errors import (
    DimensionMismatch,
    MissingCube,
    NotPositiveDefinite,
    QuadratureUnderflow,
)
from anisobesov.weights import (
    Ball,
    BlockDiagWeight,
    ConstantWeight,
    GridSampledWeight,
    RotatedDiagWeight,
    ScalarPowerWeight,
    ap_classify,
    ap_estimate,
    ap_estimate_dual,
    ball_nodes,
    build_reducing_family,
    doubling_profile,
    dual_weight,
    identity_weight,
    omega_p_cube,
    reducing_operator,
    sphere_directions,
    standard_balls,
    weight_root,
)


@pytest.fixture(scope="module")
def dyadic2d():
    dil = preset_dilation("dyadic2d")
    return dil, build_ball_family(dil)


@pytest.fixture(scope="module")
def dyadic1d():
    dil = preset_dilation("dyadic1d")
    return dil, build_ball_family(dil)


class TestWeightRoot:
    def test_identity_any_power(self):
        w = identity_weight(3)
        assert np.allclose(weight_root(w, [0.2, 0.3], 0.37), np.eye(3))

    def test_diagonal_halves(self):
        w = ConstantWeight(np.diag([4.0, 9.0]))
        assert np.allclose(weight_root(w, [0.0, 0.0], 0.5), np.diag([2.0, 3.0]))

    def test_inverse_powers_cancel(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            b = rng.normal(size=(3, 3))
            w = ConstantWeight(b @ b.T + 3.0 * np.eye(3))
            for p in (1.5, 2.0, 3.0):
                prod = weight_root(w, [0.1, 0.2], 1.0 / p) @ weight_root(
                    w, [0.1, 0.2], -1.0 / p
                )
                assert np.abs(prod - np.eye(3)).max() < 1e-10

    def test_not_pd_raises(self):
        with pytest.raises(NotPositiveDefinite):
            ConstantWeight(np.diag([1.0, -0.1]))

    def test_scalar_power_singular_origin(self, dyadic2d):
        _, bf = dyadic2d
        w = ScalarPowerWeight(0.5, bf)
        with pytest.raises(NotPositiveDefinite):
            weight_root(w, [0.0, 0.0], 0.5)


class TestDualWeight:
    def test_identity(self):
        w = dual_weight(identity_weight(2), 3.0)
        assert np.allclose(w.evaluate(np.zeros((1, 2)))[0], np.eye(2))

    def test_p2_is_inverse(self):
        base = ConstantWeight([[2.0, 0.5], [0.5, 1.0]])
        w = dual_weight(base, 2.0)
        assert np.allclose(
            w.evaluate(np.zeros((1, 2)))[0], np.linalg.inv(base.matrix)
        )

    def test_scalar_power_exponent_arithmetic(self, dyadic2d):
        _, bf = dyadic2d
        w = dual_weight(ScalarPowerWeight(0.8, bf), 2.0)
        assert w.kind == "scalar_power" and w.exponent == pytest.approx(-0.8)

    def test_involution(self, dyadic2d):
        _, bf = dyadic2d
        pts = np.array([[0.3, 0.4], [-1.2, 0.9]])
        for base in (
            ConstantWeight([[4.0, 1.0], [1.0, 2.0]]),
            RotatedDiagWeight(0.4, (0.5, -0.25), bf),
        ):
            p = 3.0
            p_conj = p / (p - 1.0)
            back = dual_weight(dual_weight(base, p), p_conj)
            assert np.abs(back.evaluate(pts) - base.evaluate(pts)).max() < 1e-9


class TestApEstimate:
    def test_identity_is_one(self, dyadic2d):
        _, bf = dyadic2d
        balls = standard_balls(bf, range(-2, 3), [np.zeros(2), [0.4, -0.7]])
        assert ap_estimate(identity_weight(2), 2.0, balls, 32) == pytest.approx(1.0)
        assert ap_estimate_dual(identity_weight(2), 2.0, balls, 32) == pytest.approx(1.0)

    def test_constant_cancels(self, dyadic2d):
        _, bf = dyadic2d
        balls = standard_balls(bf, range(-1, 2), [np.zeros(2)])
        w = ConstantWeight([[5.0, 1.0], [1.0, 1.0]])
        assert ap_estimate(w, 2.5, balls, 32) == pytest.approx(1.0)

    def test_p2_primal_equals_dual(self, dyadic1d):
        _, bf = dyadic1d
        balls = standard_balls(bf, range(-2, 3), [[0.0], [0.9]])
        w = ScalarPowerWeight(0.4, bf)
        a = ap_estimate(w, 2.0, balls, 64)
        b = ap_estimate_dual(w, 2.0, balls, 64)
        assert a == pytest.approx(b)

    def test_monotone_in_ball_set(self, dyadic1d):
        _, bf = dyadic1d
        w = ScalarPowerWeight(0.6, bf)
        small = standard_balls(bf, range(-1, 2), [[0.0]])
        big = small + standard_balls(bf, range(-3, 4), [[0.0], [1.3]])
        assert ap_estimate(w, 2.0, big, 32) >= ap_estimate(w, 2.0, small, 32)

    def test_underflow_guard(self, dyadic1d):
        _, bf = dyadic1d
        with pytest.raises(QuadratureUnderflow):
            ball_nodes(Ball(bf=bf, center=(0.0,), k=0), 4)

    def test_scalar_power_sweep_classification(self, dyadic1d):
        # Boundedness transition matches the scalar Muckenhoupt range
        # (-1, p-1) for a 1d power weight, here p = 2.
        _, bf = dyadic1d
        balls = standard_balls(bf, range(-3, 4), [[0.0], [0.7], [-2.3]])
        verdicts = {}
        for a in (-1.5, -0.5, 0.0, 0.5, 1.5):
            w = ScalarPowerWeight(a, bf)
            bounded, _, _ = ap_classify(w, 2.0, balls, 64)
            bounded_dual, _, _ = ap_classify(w, 2.0, balls, 64, dual=True)
            assert bounded == bounded_dual  # the two conditions agree
            verdicts[a] = bounded
        assert verdicts == {
            -1.5: False, -0.5: True, 0.0: True, 0.5: True, 1.5: False
        }


class TestDoubling:
    def test_identity_volume_ratio(self, dyadic2d):
        _, bf = dyadic2d
        c, beta = doubling_profile(
            identity_weight(2), 2.0, range(-3, 4), [np.zeros(2)],
            sphere_directions(2, 6), bf,
        )
        assert c == pytest.approx(4.0)
        assert beta == pytest.approx(1.0, abs=1e-9)

    def test_constant_matches_identity(self, dyadic2d):
        _, bf = dyadic2d
        w = ConstantWeight([[3.0, 0.7], [0.7, 1.0]])
        c, beta = doubling_profile(
            w, 2.0, range(-2, 3), [np.zeros(2)], sphere_directions(2, 6), bf
        )
        assert c == pytest.approx(4.0)
        assert beta == pytest.approx(1.0, abs=1e-9)

    def test_power_weight_raises_beta(self, dyadic2d):
        # 1d oracle: integral of rho^a over B_k scales like |det A|^{k(1+a)},
        # so the regression slope must exceed the unweighted slope 1.
        _, bf = dyadic2d
        w = ScalarPowerWeight(0.5, bf)
        _, beta = doubling_profile(
            w, 2.0, range(-3, 4), [np.zeros(2)], sphere_directions(1, 1), bf
        )
        assert beta == pytest.approx(1.5, abs=0.05)
        _, beta0 = doubling_profile(
            ScalarPowerWeight(0.0, bf), 2.0, range(-3, 4), [np.zeros(2)],
            sphere_directions(1, 1), bf,
        )
        assert beta > beta0


class TestReducing:
    def test_identity_gives_identity(self, dyadic2d):
        dil, _ = dyadic2d
        q = make_cube(dil, (1, -2), 1)
        a = reducing_operator(identity_weight(2), 2.0, q, sphere_directions(2, 16), dil)
        assert np.allclose(a, np.eye(2))

    def test_constant_p2_is_sqrt(self, dyadic2d):
        dil, _ = dyadic2d
        mat = np.array([[4.0, 1.0], [1.0, 2.0]])
        q = make_cube(dil, (0, 0), 0)
        a = reducing_operator(ConstantWeight(mat), 2.0, q, sphere_directions(2, 16), dil)
        assert np.allclose(a, scipy.linalg.sqrtm(mat))

    def test_p3_sandwich_on_directions(self, dyadic2d):
        dil, bf = dyadic2d
        w = BlockDiagWeight([ScalarPowerWeight(0.4, bf), ScalarPowerWeight(0.0, bf)])
        dirs = sphere_directions(2, 64)
        for j in [(0, 0), (2, 1), (-1, 3)]:
            q = make_cube(dil, j, 1)
            a = reducing_operator(w, 3.0, q, dirs, dil)
            nodes = cube_nodes(dil, q, 3)
            omega = np.array([omega_p_cube(w, 3.0, nodes, u) for u in dirs])
            vals = np.linalg.norm(dirs @ a.T, axis=1)
            bound = np.sqrt(2.0) * (1 + 1e-6)
            assert np.all(vals <= bound * omega)
            assert np.all(omega <= bound * vals)

    def test_family_missing_cube(self, dyadic2d):
        dil, _ = dyadic2d
        cubes = [make_cube(dil, (0, 0), 0)]
        fam = build_reducing_family(identity_weight(2), 2.0, cubes, dil)
        assert fam.equivalence_constant < 1.0 + 1e-9
        with pytest.raises(MissingCube):
            fam.operator(make_cube(dil, (5, 5), 0))


class TestFieldKinds:
    def test_block_diag_and_grid_sampled(self, dyadic2d):
        _, bf = dyadic2d
        w = BlockDiagWeight([ScalarPowerWeight(0.3, bf), identity_weight(1)])
        pts = np.array([[0.5, 0.5], [1.0, 2.0]])
        mats = w.evaluate(pts)
        assert mats.shape == (2, 2, 2)
        assert np.allclose(mats[:, 1, 1], 1.0)
        rng = np.random.default_rng(4)
        vals = np.zeros((8, 8, 2, 2))
        for i in range(8):
            for j in range(8):
                b = rng.normal(size=(2, 2))
                vals[i, j] = b @ b.T + np.eye(2)
        g = GridSampledWeight(vals, length=4.0)
        got = g.evaluate(np.array([[0.1, 0.1], [3.9, 0.6]]))
        assert np.allclose(got[0], vals[0, 0])
        assert np.allclose(got[1], vals[7, 1])

    def test_rotated_diag_is_pd(self, dyadic2d):
        _, bf = dyadic2d
        w = RotatedDiagWeight(0.7, (0.5, -0.3), bf, angle_gradient=[0.1, 0.0])
        pts = np.array([[0.4, 0.2], [2.0, -1.0], [0.01, 0.02]])
        mats = w.evaluate(pts)
        assert np.all(np.linalg.eigvalsh(mats) > 0)

    def test_dimension_mismatch(self, dyadic2d):
        from anisobesov.weights import weighted_lp_norm

        class FakeGrid:
            vec_dim = 3

        with pytest.raises(DimensionMismatch):
            weighted_lp_norm(FakeGrid(), identity_weight(2), 2.0)
