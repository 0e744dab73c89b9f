import numpy as np
import pytest
import scipy.linalg as sla

from gslab import comparison as comp
from gslab import domain as dom
from gslab import orlicz as ox
from gslab import perturbation as pert
from gslab import spectral as spec
from gslab.errors import NoSolutionError


@pytest.fixture(scope="module")
def baseline_eval(baseline63, baseline_ctx):
    """Full operator comparison for the unperturbed baseline."""
    ctx = baseline_ctx["ctx"]
    grid, form = baseline63["grid"], baseline63["form"]
    mu = pert.make_measure(grid, {"type": "constant", "c": 0.0})
    pf = pert.perturbed_form(form, mu)
    return comp.evaluate_operator(ctx, pf, kappa=0.0)


class TestSolveXi:
    def test_interval_exact(self, baseline63):
        grid, form = baseline63["grid"], baseline63["form"]
        xi = comp.solve_xi(form)
        x = grid.nodes[:, 0]
        assert np.max(np.abs(xi - x * (1 - x) / 2)) <= 1e-12

    def test_constant_shift_dense_oracle(self, baseline63):
        form, grid = baseline63["form"], baseline63["grid"]
        c = 2.0
        mu = pert.make_measure(grid, {"type": "constant", "c": c})
        pf = pert.PerturbedForm(form, mu)
        xi = comp.solve_xi(pf)
        oracle = sla.solve(np.asarray(pf.stiffness.todense()), form.mass)
        assert np.max(np.abs(xi - oracle)) <= 1e-10 * np.max(oracle)

    def test_green_column_sum_identity(self, hardy127):
        pf = hardy127["pf"]
        xi = comp.solve_xi(pf)
        G = spec.GreenData(pf).kernel()
        assert np.max(np.abs(G @ pf.mass - xi)) <= 1e-9 * np.max(xi)

    def test_ladder_extrapolation_approximates_direct(self, hardy127):
        pf = hardy127["pf"]
        direct = comp.solve_xi(pf)
        limit, err = comp.solve_xi_ladder(pf, ks=(4, 8, 16))
        assert np.max(np.abs(limit - direct)) <= 0.01 * np.max(direct)
        assert err < 0.01 * np.max(direct)


class TestDoob:
    def test_unit_source_recovers_xi(self, baseline63, baseline_ctx):
        form = baseline63["form"]
        sd = baseline63["sd"]
        dt = comp.solve_doob(form, 0.0, 1.0, sd_nu=sd,
                             base_sd=sd, c_g=baseline_ctx["glow"])
        xi = comp.solve_xi(form)
        assert np.max(np.abs(dt.w - xi)) <= 1e-10 * np.max(xi)

    def test_eigen_case_recovers_ground_state(self, baseline63):
        sd = baseline63["sd"]
        dt = comp.solve_doob(baseline63["form"], sd.lambda0, 0.0, sd_nu=sd)
        assert np.array_equal(dt.w, sd.phi0)

    def test_eigen_case_needs_matching_potential(self, baseline63):
        with pytest.raises(NoSolutionError):
            comp.solve_doob(baseline63["form"], 1.0, 0.0, sd_nu=baseline63["sd"])

    def test_indefinite_shift_rejected(self, baseline63):
        sd = baseline63["sd"]
        with pytest.raises(NoSolutionError):
            comp.solve_doob(baseline63["form"], 2.0 * sd.lambda0, 1.0)

    @pytest.mark.parametrize("case", ["xi", "ground_state"])
    def test_transform_identity_on_random_probes(self, baseline_eval, case):
        dt = baseline_eval.dt_xi if case == "xi" else baseline_eval.dt_gs
        rng = np.random.default_rng(0)
        for _ in range(50):
            f = rng.standard_normal(len(dt.w))
            assert dt.transform_identity_defect(f) <= 1e-8


class TestConstants:
    def test_bundle_values(self, baseline_eval, baseline_ctx):
        b = baseline_eval.bundle_gs
        # lambda_0 > 1 makes the max pick the eigenvalue branch
        assert b.c == pytest.approx(b.chc_prime_lambda0, rel=1e-14)
        assert b.c >= b.chc_prime
        assert b.lambda1_const == pytest.approx(1 + b.chc_prime / 2, rel=1e-14)
        assert b.a_const == pytest.approx(
            (b.c + 2 * b.c_s) * (1 + 2 * b.c_s * b.norm_one_psi), rel=1e-14
        )
        assert b.c_s == pytest.approx(1.25 * b.c_s_raw, rel=1e-14)

    def test_cs_doubling_arithmetic(self, baseline_eval):
        b = baseline_eval.bundle_gs
        doubled = (b.c + 4 * b.c_s) * (1 + 4 * b.c_s * b.norm_one_psi)
        factor = doubled / b.a_const
        expect = ((b.c + 4 * b.c_s) * (1 + 4 * b.c_s * b.norm_one_psi)) / (
            (b.c + 2 * b.c_s) * (1 + 2 * b.c_s * b.norm_one_psi)
        )
        assert factor == pytest.approx(expect, rel=1e-14)

    def test_inequalities_hold_on_fresh_probes(self, baseline63, baseline_ctx,
                                               baseline_eval):
        ctx = baseline_ctx["ctx"]
        # raises ConstantsInvalidError on any failed inequality
        comp.constants(
            ctx.sd, ctx.green_low, baseline_eval.dt_xi, baseline_eval.cs,
            ctx.c_h, psi=ctx.psi, phi1=ctx.phi1,
            lambda0_nu=baseline_eval.lambda0,
            rng=np.random.default_rng(99), n_probes=50,
        )

    def test_cprime_definition(self, baseline_eval, baseline_ctx):
        b = baseline_eval.bundle_xi
        ctx = baseline_ctx["ctx"]
        m = ctx.form.mass
        pairing = float(np.sum(ctx.sd.phi0 * m))   # V = 0, F = 1
        assert b.c_prime == pytest.approx(
            ctx.green_low.c_g ** (-2) * pairing ** (-2), rel=1e-12
        )


class TestCS:
    def test_ground_state_is_lower_witness(self, baseline63, baseline_ctx):
        form, sd = baseline63["form"], baseline63["sd"]
        phi = baseline_ctx["phi"]
        est = comp.c_s_estimate(form, phi, rng=np.random.default_rng(1),
                                seed_vectors=[sd.phi0])
        witness = ox.luxemburg_norm(phi, form.mass, sd.phi0**2) / form.energy(sd.phi0)
        assert est.raw >= witness * (1 - 1e-9)

    def test_energy_scaling_homogeneity(self, baseline63, baseline_ctx):
        form = baseline63["form"]
        phi = baseline_ctx["phi"]

        class Scaled:
            stiffness = 2.0 * form.stiffness
            mass = form.mass
            size = form.size

            @staticmethod
            def energy(f):
                return 2.0 * form.energy(f)

        est1 = comp.c_s_estimate(form, phi, rng=np.random.default_rng(2))
        est2 = comp.c_s_estimate(Scaled, phi, rng=np.random.default_rng(2))
        assert est2.raw == pytest.approx(est1.raw / 2.0, rel=1e-10)

    def test_multistart_agreement(self, baseline63, baseline_ctx):
        form = baseline63["form"]
        phi = baseline_ctx["phi"]   # q_eff = 6
        vals = [
            comp.c_s_estimate(form, phi, rng=np.random.default_rng(s)).raw
            for s in (3, 4)
        ]
        assert abs(vals[0] - vals[1]) <= 1e-4 * vals[0]
        assert comp.c_s_estimate(form, phi, rng=np.random.default_rng(5)).converged


class TestCH:
    def test_normalization_contract(self, baseline63):
        form, sd = baseline63["form"], baseline63["sd"]
        c_h = comp.c_h_estimate(form, sd)
        doubled = spec.SpectralData(sd.lambda0, 2 * sd.phi0, sd.residual, sd.op)
        c_h2 = comp.c_h_estimate(form, doubled)
        assert c_h2 == pytest.approx(c_h / 4, rel=1e-7)

    def test_monotone_bounded_in_n(self):
        vals = []
        for n in (15, 31, 63, 127):
            g = dom.build_grid(1, [(0.0, 1.0)], n)
            f = dom.build_laplacian(g)
            sd = spec.ground_state(f)
            vals.append(comp.c_h_estimate(f, sd))
        assert all(v2 > v1 for v1, v2 in zip(vals, vals[1:]))
        # continuum comparison: psi_0 ~ pi x sqrt(2) near the wall, and the
        # sharp interval constant for the inverse-square weight is 4
        assert vals[-1] < 4.0 / (2 * np.pi**2) * 1.1

    def test_independent_of_measure(self, hardy127):
        form = hardy127["form"]
        sd = spec.ground_state(form)
        assert comp.c_h_estimate(form, sd) == comp.c_h_estimate(form, sd)


class TestBetaProfile:
    def test_monotone_decreasing(self, baseline_eval, baseline_ctx):
        profile = baseline_eval.profile
        ts = np.geomspace(0.01, 100, 25)
        betas = np.array([profile.beta(t) for t in ts])
        assert np.all(np.diff(betas) < 0)

    def test_power_closed_form_vs_quadrature(self, baseline_ctx):
        phi1 = baseline_ctx["phi1"]
        closed = comp.UCProfile(50.0, phi1)
        numeric = comp.UCProfile(50.0, phi1, force_numeric=True)
        for t in np.geomspace(0.01, 100, 20):
            assert numeric.beta(t) == pytest.approx(closed.beta(t), rel=1e-6)

    def test_power_law_exponent(self, baseline_ctx):
        # p = 3: eps = 2/3 and beta(t) ~ t^(-(1+eps)/eps) = t^(-5/2)
        profile = comp.UCProfile(50.0, baseline_ctx["phi1"])
        slope = np.log(profile.beta(20.0) / profile.beta(2.0)) / np.log(10.0)
        assert slope == pytest.approx(-2.5, rel=1e-10)

    def test_a_scaling_identity(self, baseline_ctx):
        phi1 = baseline_ctx["phi1"]
        pa = comp.UCProfile(13.0, phi1)
        p2a = comp.UCProfile(26.0, phi1)
        for t in (0.1, 1.0, 7.0):
            assert p2a.gamma(2 * t) == pytest.approx(pa.gamma(t), rel=1e-12)


class TestComparisons:
    def test_baseline_ratio_anchors(self, baseline_eval):
        up = baseline_eval.upper
        assert up.max_ratio == pytest.approx(8 * np.sqrt(2), rel=1e-10)
        # min ratio approaches 2 sqrt(2) pi from above as the grid refines
        assert up.min_ratio > 2 * np.sqrt(2) * np.pi
        assert up.min_ratio == pytest.approx(2 * np.sqrt(2) * np.pi, rel=0.02)
        assert up.bound >= up.max_ratio

    def test_min_ratio_converges_to_boundary_limit(self):
        grid = dom.build_grid(1, [(0.0, 1.0)], 255)
        form = dom.build_laplacian(grid)
        sd = spec.ground_state(form)
        xi = comp.solve_xi(form)
        min_ratio = float(np.min(sd.phi0 / xi))
        assert min_ratio == pytest.approx(2 * np.sqrt(2) * np.pi, rel=5e-3)

    def test_theorem_dominance_for_every_t(self, baseline_eval):
        profile = baseline_eval.profile
        lam = baseline_eval.lambda0
        for t in np.geomspace(1e-3 / lam, 50 / lam, 30):
            assert comp.comparison_bound(profile, lam, t) >= baseline_eval.upper.max_ratio

    def test_moser_theta0_is_xi_norm(self, baseline_eval, baseline63):
        theta0 = baseline_eval.lower.moser[0].theta_k
        m = baseline63["form"].mass
        assert theta0 == pytest.approx(
            float(np.sqrt(np.sum(m * baseline_eval.xi**2))), rel=1e-12
        )

    def test_moser_trace_converges_to_sup(self, baseline_eval):
        low = baseline_eval.lower
        assert low.moser_limit_gap <= 0.02
        thetas = [r.theta_k for r in low.moser]
        assert all(t2 >= t1 - 1e-14 for t1, t2 in zip(thetas, thetas[1:]))
        assert all(t <= low.bound for t in thetas)
        assert low.moser[-1].j_k > 1e4

    def test_constant_shift_verdicts(self, baseline63, baseline_ctx):
        ctx = baseline_ctx["ctx"]
        grid, form = baseline63["grid"], baseline63["form"]
        mu = pert.make_measure(grid, {"type": "constant", "c": 3.0})
        pf = pert.perturbed_form(form, mu)
        res = comp.evaluate_operator(ctx, pf, kappa=pf.kappa)
        assert res.upper.ok and res.lower.ok

    def test_exponent_schedule(self, baseline_eval):
        eps = 2 / 3
        for r in baseline_eval.lower.moser:
            assert r.j_k == pytest.approx(2 * (1 + eps) ** r.k, rel=1e-12)


class TestSharp:
    def test_direct_path_baseline(self, baseline63, baseline_ctx):
        ctx = baseline_ctx["ctx"]
        mu = pert.make_measure(baseline63["grid"], {"type": "constant", "c": 0.0})
        pf = pert.perturbed_form(baseline63["form"], mu)
        rep = comp.sharp_comparison(ctx, pf)
        assert rep.path == "direct"
        d = rep.as_dict()
        assert d["verdicts"] == {"upper": True, "lower": True}
        assert rep.gamma_constant() == max(d["profile"]["C_nu_t"], d["profile"]["M_nu_t"])

    def test_ladder_path_critical(self, hardy127, baseline_ctx):
        # quarter-inverse-square measure: the continuum constant saturates
        # at one, so the run is forced along the subcritical ladder
        grid, form = hardy127["grid"], hardy127["form"]
        phi = ox.NFunction.power(3.0)
        psi = ox.complementary(phi)
        phi1 = ox.build_phi1(phi, psi=psi)
        sd = spec.ground_state(form, want_lambda1=True)
        green = spec.GreenData(form)
        glow = spec.green_lower_constant(form, sd)
        c_h = comp.c_h_estimate(form, sd)
        ctx = comp.BaseContext(form, sd, green, glow, c_h, phi, psi, phi1, seed=11)
        mu = pert.make_measure(grid, {"type": "inverse_square_boundary", "c": 0.25})
        pf = pert.perturbed_form(form, mu)
        rep = comp.sharp_comparison(ctx, pf, k_max=8, force_ladder=True)
        assert rep.path == "ladder"
        assert rep.ladder_ks == [2, 4, 8]
        assert all(r.upper.ok and r.lower.ok for r in rep.ladder)
        gammas = [r.gamma_constant() for r in rep.ladder]
        assert all(g > 0 for g in gammas)
        ex = rep.extrapolated
        assert ex["Gamma"] > 0 and np.isfinite(ex["Gamma_error"])
        lam_direct = spec.ground_state(pf).lambda0
        assert abs(ex["lambda0"] - lam_direct) <= 0.05 * lam_direct

    def test_supercritical_rejected(self, hardy127, baseline_ctx):
        from gslab.errors import SupercriticalMeasureError

        pf = hardy127["pf"]
        bad = pf.scaled(1.5 / pf.kappa)
        with pytest.raises(SupercriticalMeasureError):
            comp.sharp_comparison(baseline_ctx["ctx"], bad)
