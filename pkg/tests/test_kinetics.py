import numpy as np
import pytest

from memrd.kinetics import (
    DimensionalParameters,
    KinkWarning,
    Parameters,
    V_of_integral,
    f,
    g0,
    jac_f,
    jac_q,
    jac_q0,
    jac_q1,
    nondimensionalize,
    q,
    q0,
    q1,
    qss_complex,
)

# Measured dimensional rate set (membrane GTPase cycle in yeast), with the
# supplementary choices dv = du (equal lateral diffusion), R = 1e-6 m and a
# spherical cell (volume/area/R = 1/3).
CDC42 = DimensionalParameters(
    k1=1.056831769e-8,
    k2=0.1056831769e-5,
    k3=946.2243938,
    k4=18.92448788,
    k5=0.1056831769e-2,
    k_neg5=0.3,
    b6=0.3170495307e-1,
    b_neg6=0.133,
    g0bar=37848.97575,
    du=2.5e-15,
    dv=2.5e-15,
    Dcyt=1e-11,
    cmax=47311.21969,
    R=1e-6,
    vol_over_area=1.0 / 3.0,
    V_init=4.894264108e10,
)

# Regression fixture: frozen at first implementation from direct evaluation
# of the scaling formulas on the numbers above.
CDC42_EXPECTED = {
    "a1": 159999999986.84238,
    "a2": 0.00600000000017636,
    "a3": 15999999998684.238,
    "a4": 8000000000000.001,
    "a5": 0.0004000000000845466,
    "a6": 1.999999999941213e17,
    "a_neg6": 53200000000000.0,
    "d": 1.0,
    "gamma": 1e-12,
    "V0": 1.0344827590725765,
}


def random_parameters(rng, **overrides):
    values = dict(
        a1=rng.uniform(0.0, 2.0),
        a2=rng.uniform(0.5, 50.0),
        a3=rng.uniform(1.0, 400.0),
        a4=rng.uniform(0.1, 5.0),
        a5=rng.uniform(0.05, 2.0),
        a6=rng.uniform(0.01, 1.0),
        a_neg6=rng.uniform(0.01, 5.0),
        d=rng.uniform(0.5, 2000.0),
        gamma=rng.uniform(1.0, 500.0),
        V0=rng.uniform(0.5, 50.0),
        c=rng.uniform(0.05, 5.0),
        gamma_area=rng.uniform(0.5, 20.0),
    )
    values.update(overrides)
    return Parameters(**values)


class TestParameters:
    def test_derived_quantities(self, baseline):
        assert baseline.cG == pytest.approx(3.0, rel=1e-14)
        assert baseline.m == pytest.approx(10.0 / 3.0, rel=1e-14)

    @pytest.mark.parametrize(
        "field,value",
        [("a2", 0.0), ("a5", -1.0), ("d", 0.0), ("gamma", -1.0), ("V0", 0.0),
         ("c", 0.0), ("a1", -0.1)],
    )
    def test_invalid_rejected(self, field, value):
        with pytest.raises(ValueError):
            Parameters.baseline(**{field: value})

    def test_gamma_zero_allowed(self):
        # Pure-diffusion runs switch the kinetics off entirely.
        assert Parameters.baseline(gamma=0.0).gamma == 0.0

    def test_roundtrip_dict(self, baseline):
        assert Parameters.from_dict(baseline.to_dict()) == baseline


class TestKineticTerms:
    def test_f_at_zero_activator(self):
        rng = np.random.default_rng(0)
        p = random_parameters(rng)
        for v in (0.0, 0.3, 2.0):
            assert f(0.0, v, p) == pytest.approx(p.a1 * v, abs=1e-15)

    def test_f_baseline_zero_activator(self, baseline):
        assert f(0.0, 5.0, baseline) == 0.0

    def test_q_at_saturation(self, baseline):
        assert q(1.0, 0.3, 7.0, baseline) == pytest.approx(-baseline.a_neg6 * 0.3)

    def test_q_clamps_oversaturation(self):
        p = Parameters.baseline(a_neg6=1.0)
        assert q(1.5, 0.2, 10.0, p) == pytest.approx(-0.2)

    def test_q_baseline_arithmetic(self, baseline):
        # 0.1 * 10 * 0.5 - 1 * 0.25
        assert q(0.5, 0.25, 10.0, baseline) == pytest.approx(0.25, rel=1e-14)

    def test_pool_from_integral(self, baseline):
        assert V_of_integral(0.0, baseline) == baseline.V0
        assert V_of_integral(baseline.V0 / baseline.c, baseline) == pytest.approx(0.0, abs=1e-12)
        assert V_of_integral(4.0 * np.pi, baseline) == pytest.approx(7.0, rel=1e-12)

    def test_q0_pool_exhausted(self, baseline):
        m = baseline.m
        assert q0(m, 0.4, baseline) == pytest.approx(-baseline.a_neg6 * 0.4, rel=1e-12)

    def test_q0_at_saturation(self, baseline):
        assert q0(1.0, 0.4, baseline) == pytest.approx(-baseline.a_neg6 * 0.4)

    def test_q0_matches_q_with_pool_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            p = random_parameters(rng)
            w, v = rng.uniform(0.0, 2.0), rng.uniform(0.0, 1.0)
            pool = V_of_integral(w * p.gamma_area, p)
            assert q0(w, v, p) == pytest.approx(q(w, v, pool, p), rel=1e-14, abs=1e-14)

    def test_q1_no_positive_part(self, baseline):
        assert q1(1.0, 0.3, 7.0, baseline) == pytest.approx(-baseline.a_neg6 * 0.3)
        # Beyond saturation q1 keeps the linear branch, unlike q.
        assert q1(1.5, 0.0, 7.0, baseline) == pytest.approx(-0.1 * 7.0 * 0.5, rel=1e-12)

    def test_q1_matches_q_inside(self, baseline):
        rng = np.random.default_rng(2)
        for _ in range(20):
            w, v, pool = rng.uniform(0, 0.99), rng.uniform(0, 1), rng.uniform(0, 10)
            assert q1(w, v, pool, baseline) == pytest.approx(
                q(w, v, pool, baseline), rel=1e-14, abs=1e-14
            )

    def test_q1_slope_constant(self, baseline):
        du1, _ = jac_q1(7.0, baseline)
        assert du1 == pytest.approx(-baseline.a6 * 7.0)


def central_difference(fn, x, h=1e-6):
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


class TestJacobians:
    def test_fv_at_zero(self):
        rng = np.random.default_rng(3)
        p = random_parameters(rng)
        _, fv = jac_f(0.0, 0.7, p)
        assert fv == pytest.approx(p.a1, rel=1e-14)

    def test_jac_f_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            p = random_parameters(rng)
            u, v = rng.uniform(0.01, 2.0), rng.uniform(0.01, 2.0)
            fu, fv = jac_f(u, v, p)
            fu_fd = central_difference(lambda x: f(x, v, p), u)
            fv_fd = central_difference(lambda x: f(u, x, p), v)
            assert fu == pytest.approx(fu_fd, rel=1e-6, abs=1e-8)
            assert fv == pytest.approx(fv_fd, rel=1e-6, abs=1e-8)

    def test_jac_q0_structure(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            p = random_parameters(rng)
            w, v = rng.uniform(0.0, 0.95), rng.uniform(0.0, 1.0)
            du0, dv0 = jac_q0(w, v, p)
            assert dv0 - du0 == pytest.approx(-p.a_neg6, rel=1e-13)

    def test_jac_q0_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            p = random_parameters(rng)
            mn = min(1.0, p.m)
            u = rng.uniform(0.005 * mn, 0.4 * mn)
            v = rng.uniform(0.005 * mn, 0.4 * mn)
            du0, dv0 = jac_q0(u + v, v, p)
            du_fd = central_difference(lambda x: q0(x + v, v, p), u)
            dv_fd = central_difference(lambda x: q0(u + x, x, p), v)
            assert du0 == pytest.approx(du_fd, rel=1e-6, abs=1e-7)
            assert dv0 == pytest.approx(dv_fd, rel=1e-6, abs=1e-7)

    def test_jac_q0_baseline_arithmetic(self, baseline):
        # -a6 * cG * (1 + m) = -0.1 * 3 * (1 + 10/3)
        du0, _ = jac_q0(0.0, 0.0, baseline)
        assert du0 == pytest.approx(-1.3, rel=1e-12)

    def test_jac_q_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            p = random_parameters(rng)
            u, v = rng.uniform(0.01, 0.45), rng.uniform(0.01, 0.45)
            pool = rng.uniform(0.0, 10.0)
            duq, dvq = jac_q(u + v, v, pool, p)
            du_fd = central_difference(lambda x: q(x + v, v, pool, p), u)
            dv_fd = central_difference(lambda x: q(u + x, x, pool, p), v)
            assert duq == pytest.approx(du_fd, rel=1e-6, abs=1e-8)
            assert dvq == pytest.approx(dv_fd, rel=1e-6, abs=1e-8)

    def test_jac_q1_values(self, baseline):
        du1, dv1 = jac_q1(7.417, baseline)
        assert du1 == pytest.approx(-baseline.a6 * 7.417)
        assert dv1 == pytest.approx(-baseline.a6 * 7.417 - baseline.a_neg6)

    def test_kink_warning(self, baseline):
        with pytest.warns(KinkWarning):
            jac_q0(1.0, 0.2, baseline)
        with pytest.warns(KinkWarning):
            jac_q(np.array([0.5, 1.0]), np.array([0.1, 0.1]), 5.0, baseline)

    def test_outer_branch(self, baseline):
        duq, dvq = jac_q(1.5, 0.2, 5.0, baseline)
        assert duq == 0.0
        assert dvq == pytest.approx(-baseline.a_neg6)


class TestInvariantRegionBoundary:
    """Sign conditions that trap trajectories in u, v >= 0, u+v <= min(1, m)."""

    @staticmethod
    def check_boundary(p, samples=200):
        mn = min(1.0, p.m)
        grid = np.linspace(0.0, mn, samples)
        assert np.all(f(0.0, grid, p) >= -1e-12)
        assert np.all(g0(grid, 0.0, p) >= -1e-12)
        u = grid
        v = mn - grid
        assert np.all(f(u, v, p) + g0(u, v, p) <= 1e-12)

    def test_baseline(self, baseline):
        self.check_boundary(baseline)

    def test_random_parameter_sets(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            self.check_boundary(random_parameters(rng), samples=50)


class TestQssComplex:
    def test_zero_activator(self):
        m, g = qss_complex(0.0, 3.5, 2.0)
        assert m == 0.0
        assert g == 3.5

    def test_saturation_limit(self):
        m, g = qss_complex(1e12, 3.5, 2.0)
        assert m == pytest.approx(3.5, rel=1e-10)
        assert g == pytest.approx(0.0, abs=1e-10)

    def test_conservation_exact(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            u, g0bar, K5 = rng.uniform(0, 10), rng.uniform(0.1, 5), rng.uniform(0, 3)
            m, g = qss_complex(u, g0bar, K5)
            assert m + g == g0bar  # exact by construction

    def test_validation(self):
        with pytest.raises(ValueError):
            qss_complex(-1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            qss_complex(1.0, 1.0, -1.0)


class TestNondimensionalize:
    def test_equal_diffusion_gives_unit_ratio(self):
        assert nondimensionalize(CDC42).d == 1.0

    def test_equal_rates_give_equal_feedback(self):
        dp = DimensionalParameters(**{**CDC42.to_dict(), "k2": CDC42.k1})
        p = nondimensionalize(dp)
        assert p.a3 == pytest.approx(p.a1, rel=1e-14)

    def test_zero_base_rate_handled_directly(self):
        dp = DimensionalParameters(**{**CDC42.to_dict(), "k1": 0.0})
        p = nondimensionalize(dp)
        assert p.a1 == 0.0
        assert p.a3 > 0.0

    def test_system_size_only_enters_gamma(self):
        p1 = nondimensionalize(CDC42)
        p10 = nondimensionalize(DimensionalParameters(**{**CDC42.to_dict(), "R": 10 * CDC42.R}))
        assert p10.gamma == pytest.approx(100.0 * p1.gamma, rel=1e-14)
        for name in ("a1", "a2", "a3", "a4", "a5", "a6", "a_neg6", "d"):
            assert getattr(p10, name) == getattr(p1, name)

    def test_regression_fixture(self):
        p = nondimensionalize(CDC42)
        for name, expected in CDC42_EXPECTED.items():
            assert getattr(p, name) == pytest.approx(expected, rel=1e-12), name

    def test_geometry_factor(self):
        p = nondimensionalize(CDC42)
        assert p.cG == pytest.approx(1.0 / CDC42.vol_over_area, rel=1e-12)
