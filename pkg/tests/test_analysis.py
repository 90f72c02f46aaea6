import math

import numpy as np
import pytest

from khessian.analysis import (
    annulus_volume,
    end_count,
    fit_volume_expansion,
    harnack_from_w_profile,
    harnack_ratio,
    holder_barrier,
    mollify,
    p_laplacian_check,
    pointwise_max_fields,
    pointwise_max_profiles,
    pucci_delta,
    pucci_min,
    sphere_area,
    u_field_admissible_mask,
    volume_ratio,
)
from khessian.radial import GridField, RadialProfile
from khessian.symfunc import ConeParams

CONE32 = ConeParams(3, 2)


def paraboloid_u_field(rng, shape=(17, 17, 17), h=0.1, n_pieces=None):
    """Strictly admissible u-gauge field: max of paraboloids a|x-x0|^2 + c."""
    f = GridField(h, np.zeros(shape))
    coords = f.node_coordinates()
    vals = None
    pieces = n_pieces if n_pieces is not None else int(rng.integers(1, 4))
    for _ in range(pieces):
        x0 = rng.uniform(-0.3, 0.3, size=len(shape))
        u = rng.uniform(0.5, 2.0) * ((coords - x0) ** 2).sum(axis=1) + rng.uniform(0.5, 2.0)
        vals = u if vals is None else np.maximum(vals, u)
    f.values = vals.reshape(shape)
    return f


class TestPucci:
    def test_constant_eigenvalues(self):
        delta = pucci_delta(3, 2)
        assert pucci_min(np.ones(3), delta) == pytest.approx(1.0 + 3 * delta)

    def test_delta_values(self):
        assert pucci_delta(3, 2) == pytest.approx(1.0 / 3.0)
        assert pucci_delta(5, 4) == pytest.approx(1.0 / 15.0)
        assert pucci_delta(4, 4) == 0.0

    @pytest.mark.parametrize("n,k", [(3, 2), (4, 3), (5, 3), (5, 4)])
    def test_barrier_annihilated(self, n, k):
        r = np.geomspace(1e-3, 1.0, 60)
        _, rad, tangential = holder_barrier(r, n, k)
        delta = pucci_delta(n, k)
        alpha = 2.0 - n / k
        for i in range(len(r)):
            P = pucci_min(np.r_[rad[i], np.full(n - 1, tangential[i])], delta)
            # normalize by the r-power carried by every eigenvalue
            assert abs(P) / r[i] ** (alpha - 2.0) <= 1e-12

    def test_laplacian_coefficient_n3k2(self):
        n, k = 3, 2
        r = np.geomspace(1e-3, 1.0, 50)
        _, rad, tangential = holder_barrier(r, n, k)
        lap = rad + (n - 1) * tangential
        assert np.allclose(lap, 0.75 * r**-1.5, rtol=1e-13)
        assert np.allclose(rad, -0.25 * r**-1.5, rtol=1e-13)

    @pytest.mark.parametrize("n,k", [(3, 2), (4, 3), (5, 3), (5, 4)])
    def test_barrier_derivative_coefficients(self, n, k):
        r = np.geomspace(1e-3, 1.0, 50)
        _, rad, tangential = holder_barrier(r, n, k)
        lap_coeff = n * (k - 1) * (2 * k - n) / k**2
        rad_coeff = -(2 * k - n) * (n - k) / k**2
        assert np.abs((rad + (n - 1) * tangential) * r ** (n / k) - lap_coeff).max() <= 1e-10
        assert np.abs(rad * r ** (n / k) - rad_coeff).max() <= 1e-10


class TestPLaplacian:
    def test_fundamental_solution_nonnegative(self):
        r = np.geomspace(0.05, 2.0, 60)
        p = RadialProfile.from_callables(r, 3, 2, lambda t: 2 * np.log(t),
                                         lambda t: 2.0 / t, lambda t: -2.0 / t**2)
        rep = p_laplacian_check(p)
        assert rep.p == pytest.approx(5.0)
        assert rep.nonnegative and rep.inf_ratio >= 0.0

    def test_constant_u(self):
        r = np.geomspace(0.05, 2.0, 30)
        p = RadialProfile.from_callables(r, 3, 2, lambda t: 0 * t,
                                         lambda t: 0 * t, lambda t: 0 * t)
        rep = p_laplacian_check(p)
        assert np.abs(rep.ratio).max() == 0.0

    def test_negative_control(self):
        r = np.geomspace(0.05, 2.0, 40)
        p = RadialProfile.from_callables(r, 3, 2, lambda t: -5 * t**2,
                                         lambda t: -10 * t, lambda t: -10 + 0 * t)
        rep = p_laplacian_check(p)
        assert not rep.nonnegative and rep.inf_ratio < 0.0

    def test_k_equals_n_unsupported(self):
        r = np.geomspace(0.1, 1.0, 10)
        p = RadialProfile.from_callables(r, 3, 3, lambda t: 0 * t,
                                         lambda t: 0 * t, lambda t: 0 * t)
        with pytest.raises(ValueError):
            p_laplacian_check(p)


class TestMollify:
    def test_constant_unchanged(self):
        f = GridField(0.05, np.full((41, 41), 2.7))
        g = mollify(f, 0.12)
        assert np.abs(g.values - 2.7).max() == 0.0

    def test_linear_unchanged(self):
        f = GridField.from_function(lambda x: 1.3 * x[:, 0] - 0.7 * x[:, 1],
                                    0.05, (41, 41))
        g = mollify(f, 0.12)
        coords = g.node_coordinates()
        exact = (1.3 * coords[:, 0] - 0.7 * coords[:, 1]).reshape(g.values.shape)
        assert np.abs(g.values - exact).max() <= 1e-12

    def test_preserves_admissibility(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            f = paraboloid_u_field(rng)
            g = mollify(f, 0.25)
            ok, _ = u_field_admissible_mask(g, CONE32, margin=1e-9)
            assert ok.all()

    def test_negative_control_stays_inadmissible(self):
        f = GridField(0.1, np.zeros((17, 17, 17)))
        coords = f.node_coordinates()
        f.values = (10.0 - (coords**2).sum(axis=1)).reshape(17, 17, 17)
        g = mollify(f, 0.25)
        ok, _ = u_field_admissible_mask(g, CONE32)
        assert not ok.any()

    def test_margin_validation(self):
        f = GridField(0.1, np.zeros((9, 9)))
        with pytest.raises(ValueError):
            mollify(f, 0.1)   # below two grid cells
        with pytest.raises(ValueError):
            mollify(f, 0.45)  # consumes the whole box


class TestPointwiseMax:
    def test_max_with_itself(self):
        r = np.geomspace(0.1, 1.0, 30)
        p = RadialProfile.from_callables(r, 3, 2, lambda t: np.sqrt(t),
                                         lambda t: 0.5 * t**-0.5,
                                         lambda t: -0.25 * t**-1.5)
        q, mask = pointwise_max_profiles(p, p)
        assert np.array_equal(q.w, p.w)

    def test_shifted_log_profiles(self):
        r = np.geomspace(0.1, 10.0, 60)
        mk = lambda c: RadialProfile.from_callables(
            r, 3, 2, lambda t: 2 * np.log(t) + c, lambda t: 2 / t, lambda t: -2 / t**2)
        q, mask = pointwise_max_profiles(mk(1.0), mk(-0.5))
        assert np.allclose(q.w, 2 * np.log(r) + 1.0)
        from khessian.radial import ab_reduce, radial_admissible
        assert radial_admissible(ab_reduce(q), CONE32, tol=1e-10).all()

    def test_shifted_holder_profiles_admissible_off_kink(self):
        r = np.geomspace(0.05, 2.0, 120)
        theta = 0.5

        def mk(c, shift):
            return RadialProfile.from_callables(
                r, 3, 2,
                lambda t: c / (1 - theta) * t ** (1 - theta) + shift,
                lambda t: c * t ** (-theta),
                lambda t: -c * theta * t ** (-theta - 1))

        q, mask = pointwise_max_profiles(mk(0.4, 0.0), mk(0.7, -0.3))
        assert mask.any() and not mask.all()
        from khessian.radial import ab_reduce, radial_admissible
        ok = radial_admissible(ab_reduce(q), CONE32, tol=1e-10)
        assert ok[~mask].all()

    def test_grid_fields_off_kink(self):
        rng = np.random.default_rng(1)
        f = paraboloid_u_field(rng, n_pieces=1)
        g = paraboloid_u_field(rng, n_pieces=1)
        m, kink = pointwise_max_fields(f, g, kink_cells=3)
        ok, inner = u_field_admissible_mask(m, CONE32, margin=1e-9)
        away = ~kink[inner]
        assert ok[away].all()

    def test_negative_control_detected_off_kink(self):
        f = GridField(0.1, np.zeros((17, 17, 17)))
        coords = f.node_coordinates()
        f.values = (1.0 * (coords**2).sum(axis=1) + 1.0).reshape(17, 17, 17)
        g = GridField(0.1, (5.0 - 4.0 * (coords**2).sum(axis=1)).reshape(17, 17, 17))
        m, kink = pointwise_max_fields(f, g, kink_cells=2)
        ok, inner = u_field_admissible_mask(m, CONE32)
        away = ~kink[inner]
        assert away.any() and not ok[away].all()


class TestHarnack:
    def test_constant_factor(self):
        r = np.geomspace(0.01, 1.0, 30)
        est = harnack_ratio(r, np.full(30, 3.3), CONE32)
        assert est.c_est == pytest.approx(0.0, abs=1e-14)

    def test_analytic_family_constant_across_scales(self):
        c, theta = 0.6, 0.5
        expected = 2 * c / (1 - theta)
        values = []
        for R in (0.01, 0.1, 1.0):
            r = np.geomspace(1e-8, R, 80)
            chi = np.exp(-2 * (c / (1 - theta)) * r ** (1 - theta))
            values.append(harnack_ratio(r, chi, CONE32).c_est)
        for v in values:
            assert v == pytest.approx(expected, rel=0.03)

    def test_scaling_invariance(self):
        rng = np.random.default_rng(2)
        r = np.geomspace(0.01, 1.0, 40)
        chi = np.exp(rng.normal(size=40) * 0.3) + 0.5
        e1 = harnack_ratio(r, chi, CONE32)
        e2 = harnack_ratio(r, 11.7 * chi, CONE32)
        assert e1.c_est == pytest.approx(e2.c_est, rel=1e-12)
        assert e1.pair == e2.pair

    def test_singular_family_diverges(self):
        ests = []
        for rmin in (1e-2, 1e-3, 1e-4):
            r = np.geomspace(rmin, 1.0, 60)
            p = RadialProfile.from_callables(r, 3, 2, lambda t: 2 * np.log(t),
                                             lambda t: 2 / t, lambda t: -2 / t**2)
            ests.append(harnack_from_w_profile(p).c_est)
        assert ests[1] > 2.0 * ests[0] and ests[2] > 2.0 * ests[1]

    def test_rejects_nonpositive_chi(self):
        with pytest.raises(ValueError):
            harnack_ratio(np.array([0.1, 0.2]), np.array([1.0, -1.0]), CONE32)

    def test_field_variant_matches_analytic_family(self):
        from khessian.analysis import harnack_from_field
        h = 0.05
        f = GridField(h, np.zeros((41, 41)))
        coords = f.node_coordinates()
        rr = np.maximum(np.sqrt((coords**2).sum(axis=1)), 1e-12)
        c, theta = 0.6, 0.5
        f.values = np.exp(-2 * (c / (1 - theta)) * rr ** (1 - theta)).reshape(41, 41)
        est = harnack_from_field(f, CONE32)
        assert est.c_est == pytest.approx(2 * c / (1 - theta), rel=0.03)


class TestVolume:
    def test_euclidean_constant(self):
        s = np.linspace(0.1, 1.0, 10)
        curve = volume_ratio(lambda t: 0.0, 3, s)
        assert np.abs(curve.Q - curve.omega_n / 3.0).max() <= 1e-10

    def test_round_sphere_closed_form(self):
        s = np.linspace(0.05, 0.5, 20)
        curve = volume_ratio(lambda t: math.log((1 + t * t) / 2), 3, s)
        exact = (2 * math.pi * s - math.pi * np.sin(2 * s)) / s**3
        assert np.abs(curve.Q - exact).max() <= 1e-8
        assert np.all(np.diff(curve.Q) <= 1e-6)
        assert curve.Q[0] <= curve.omega_n / 3 + 1e-9   # Q(0+) <= omega_n / n
        q0, c2 = fit_volume_expansion(curve)
        assert q0 == pytest.approx(4 * math.pi / 3, rel=1e-4)
        assert c2 == pytest.approx(-0.2, rel=0.05)

    def test_annulus_volume_fundamental_metric(self):
        w = lambda t: 2 * math.log(t)
        omega3 = sphere_area(3)
        for (r1, r2) in [(0.1, 0.5), (0.2, 2.0), (0.05, 0.4)]:
            exact = (omega3 / 3) * (r1**-3 - r2**-3)
            assert annulus_volume(w, r1, r2, 3) == pytest.approx(exact, rel=1e-8)

    def test_singular_center_raises_in_origin_mode(self):
        s = np.linspace(0.1, 1.0, 5)
        with pytest.raises(ValueError):
            volume_ratio(lambda t: 2 * math.log(t), 3, s, mode="origin")

    def test_end_mode_counts_single_end(self):
        s = np.linspace(5.0, 900.0, 25)
        curve = volume_ratio(lambda t: 2 * math.log(t), 3, s, mode="end", rho_ref=0.5)
        assert np.all(np.diff(curve.Q) <= 1e-9)
        res = end_count(curve)
        assert res.m == 1 and res.status == "converged"
        assert res.residual <= 0.01

    def test_truncated_singularity_metric(self):
        # cap w = max(2 log rho, -K): flat near the origin, fundamental outside
        K = 2.0
        w = lambda t: max(2 * math.log(t), -K) if t > 0 else -K
        rho0 = math.exp(-K / 2)
        s_plateau = math.exp(K / 2)          # geodesic radius of the flat cap
        s = np.linspace(0.2 * s_plateau, 1.1 * s_plateau, 18)
        curve = volume_ratio(w, 3, s, mode="origin")
        assert np.all(np.diff(curve.Q) <= 1e-9)
        assert np.ptp(curve.Q) > 1e-3 * curve.Q[0]     # Q genuinely non-constant
        res = end_count(curve, slope_tol=0.2)
        assert res.m == 1

    def test_euclidean_end_count(self):
        s = np.linspace(0.5, 4.0, 10)
        res = end_count(volume_ratio(lambda t: 0.0, 3, s))
        assert res.m == 1 and res.residual <= 1e-9

    def test_inconclusive_tail_flagged(self):
        s = np.linspace(0.2, 0.9, 12)
        curve = volume_ratio(lambda t: math.log((1 + t * t) / 2), 3, s)
        curve.Q = curve.Q * np.linspace(1.0, 0.5, 12)   # force a steep tail
        assert end_count(curve).status == "inconclusive"

    def test_profile_input(self):
        r = np.geomspace(1e-4, 3.0, 400)
        prof = RadialProfile.from_callables(r, 3, 2, lambda t: np.log((1 + t**2) / 2),
                                            lambda t: 2 * t / (1 + t**2),
                                            lambda t: 2 * (1 - t**2) / (1 + t**2) ** 2)
        s = np.linspace(0.1, 0.4, 8)
        curve = volume_ratio(prof, 3, s)
        exact = (2 * math.pi * s - math.pi * np.sin(2 * s)) / s**3
        assert np.abs(curve.Q - exact).max() <= 1e-5


class TestUFieldAdmissibility:
    def test_requires_matching_dimension(self):
        f = GridField(0.1, np.ones((9, 9)))
        with pytest.raises(ValueError):
            u_field_admissible_mask(f, CONE32)

    def test_paraboloid_is_strictly_admissible(self):
        rng = np.random.default_rng(3)
        f = paraboloid_u_field(rng, n_pieces=1)
        ok, _ = u_field_admissible_mask(f, CONE32, margin=1e-9, strict=True)
        assert ok.all()

    def test_requires_positive_u(self):
        f = GridField(0.1, np.full((9, 9, 9), -1.0))
        with pytest.raises(ValueError):
            u_field_admissible_mask(f, CONE32)
