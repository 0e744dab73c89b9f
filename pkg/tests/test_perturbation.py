import numpy as np
import pytest

from gslab import domain as dom
from gslab import perturbation as pert
from gslab import spectral as spec
from gslab.errors import InvalidDensityError, SupercriticalMeasureError


class TestMakeMeasure:
    def test_boundary_density_plugin(self):
        g = dom.build_grid(1, [(0.0, 1.0)], 3)
        mu = pert.make_measure(g, {"type": "inverse_square_boundary", "c": 0.25})
        i = g.index_of([0.25])
        assert mu.weights[i] == pytest.approx(0.25 * 0.25**-2 * 0.25)

    def test_zero_density(self):
        g = dom.build_grid(1, [(0.0, 1.0)], 7)
        mu = pert.make_measure(g, {"type": "constant", "c": 0.0})
        assert mu.total == 0.0

    def test_constant_total_mass_exact(self):
        g = dom.build_grid(2, [(0.0, 1.0), (0.0, 1.0)], 15)
        c = 3.7
        mu = pert.make_measure(g, {"type": "constant", "c": c})
        assert mu.total == pytest.approx(c * g.size * g.h**2, rel=1e-14)

    def test_negative_density_rejected(self):
        g = dom.build_grid(1, [(0.0, 1.0)], 7)
        with pytest.raises(InvalidDensityError):
            pert.make_measure(g, {"type": "constant", "c": -1.0})

    def test_table_length_checked(self):
        g = dom.build_grid(1, [(0.0, 1.0)], 7)
        with pytest.raises(InvalidDensityError):
            pert.make_measure(g, {"type": "table", "values": [1.0, 2.0]})

    def test_origin_density_finite_at_interior_nodes(self):
        g = dom.build_grid(2, [(0.0, 1.0), (0.0, 1.0)], 7)
        mu = pert.make_measure(g, {"type": "inverse_square_origin", "c": 1.0})
        assert np.all(np.isfinite(mu.weights))


class TestKappa:
    def test_constant_density_reduces_to_lambda0(self, baseline63):
        form, grid, sd = (baseline63[k] for k in ("form", "grid", "sd"))
        c = 2.0
        mu = pert.make_measure(grid, {"type": "constant", "c": c})
        cert = pert.kappa_constant(form, mu)
        assert cert.kappa == pytest.approx(c / sd.lambda0, rel=1e-7)

    def test_zero_measure_rejected(self, baseline63):
        grid = baseline63["grid"]
        mu = pert.make_measure(grid, {"type": "constant", "c": 0.0})
        with pytest.raises(ValueError):
            pert.kappa_constant(baseline63["form"], mu)

    def test_monotone_in_n_toward_hardy_constant(self):
        # classical sharp constant: kappa -> 4c from below, logarithmically
        c = 1 / 16
        kappas = []
        for n in (31, 63, 127):
            g = dom.build_grid(1, [(0.0, 1.0)], n)
            f = dom.build_laplacian(g)
            mu = pert.make_measure(g, {"type": "inverse_square_boundary", "c": c})
            kappas.append(pert.kappa_constant(f, mu).kappa)
        assert all(k2 > k1 for k1, k2 in zip(kappas, kappas[1:]))
        assert all(k < 4 * c for k in kappas)

    def test_scaling_exact_binary_factor(self, hardy127):
        form, grid = hardy127["form"], hardy127["grid"]
        mu1 = hardy127["mu"]
        mu2 = pert.PerturbationMeasure(
            dom.DiscreteMeasure(2.0 * mu1.weights), mu1.tag, {}
        )
        k1 = pert.kappa_constant(form, mu1).kappa
        k2 = pert.kappa_constant(form, mu2).kappa
        assert k2 == 2.0 * k1

    def test_dense_oracle(self, hardy127):
        import scipy.linalg as sla

        form, mu = hardy127["form"], hardy127["mu"]
        dense = sla.eigh(np.diag(mu.weights),
                         np.asarray(form.stiffness.todense()),
                         eigvals_only=True)[-1]
        assert pert.kappa_constant(form, mu).kappa == pytest.approx(dense, rel=1e-8)


class TestPerturbedForm:
    def test_energy_and_apply(self, hardy127):
        pf = hardy127["pf"]
        rng = np.random.default_rng(0)
        f = rng.standard_normal(pf.size)
        base = hardy127["form"]
        assert pf.energy(f) == pytest.approx(
            base.energy(f) - np.sum(f**2 * pf.mu.weights), rel=1e-12
        )
        hf = pf.apply(f)
        assert np.allclose(hf, base.apply(f) - pf.mu.weights / pf.mass * f)

    def test_energy_lower_bound_from_kappa(self, hardy127):
        pf = hardy127["pf"]
        kappa = pf.kappa
        rng = np.random.default_rng(1)
        for _ in range(20):
            f = rng.standard_normal(pf.size)
            assert pf.energy(f) >= (1 - kappa - 1e-8) * hardy127["form"].energy(f)


class TestSupersolution:
    def test_xi_is_strict_supersolution_of_base(self, baseline63):
        form, grid = baseline63["form"], baseline63["grid"]
        mu = pert.make_measure(grid, {"type": "constant", "c": 0.0})
        pf = pert.PerturbedForm(form, mu)
        xi = pert.solve_xi_direct(pf)
        cert = pert.check_supersolution(pf, xi)
        assert cert.ok
        assert np.allclose(cert.residual, form.mass, rtol=1e-8)

    @pytest.mark.parametrize("n", [63, 255])
    def test_sqrt_distance_for_quarter_inverse_square(self, n):
        g = dom.build_grid(1, [(0.0, 1.0)], n)
        form = dom.build_laplacian(g)
        mu = pert.make_measure(g, {"type": "inverse_square_boundary", "c": 0.25})
        pf = pert.PerturbedForm(form, mu)
        cert = pert.check_supersolution(pf, np.sqrt(g.rho))
        assert cert.ok

    def test_eigenfunction_at_eigenvalue_shift(self, baseline63):
        form, grid, sd = (baseline63[k] for k in ("form", "grid", "sd"))
        mu = pert.make_measure(grid, {"type": "constant", "c": sd.lambda0})
        pf = pert.PerturbedForm(form, mu)
        cert = pert.check_supersolution(pf, sd.phi0, tol=1e-6)
        assert cert.ok
        assert np.max(np.abs(cert.residual)) <= 1e-7

    def test_rejects_nonpositive_candidate(self, baseline63):
        grid, form = baseline63["grid"], baseline63["form"]
        mu = pert.make_measure(grid, {"type": "constant", "c": 0.0})
        pf = pert.PerturbedForm(form, mu)
        with pytest.raises(ValueError):
            pert.check_supersolution(pf, np.zeros(pf.size))

    def test_reciproque_strict_supersolution_for_scaled_measure(self, hardy127):
        # kappa <= 1 gives, for every delta in (0,1), a strict supersolution
        # of the delta-scaled measure via the shifted resolvent of one
        pf = hardy127["pf"]
        for delta in (0.3, 0.9):
            scaled = pf.scaled(delta)
            s = pert.solve_xi_direct(scaled)
            cert = pert.check_supersolution(scaled, s)
            assert cert.ok
            assert np.allclose(cert.residual, pf.mass, rtol=1e-8)


class TestLadder:
    def test_first_rung_unperturbed(self, hardy127):
        ladder = pert.approximation_sequence(hardy127["pf"], 4)
        assert ladder[0].mu.total == 0.0
        assert np.allclose(ladder[1].mu.weights, hardy127["mu"].weights / 2)

    def test_kappa_sequence(self, hardy127):
        pf = hardy127["pf"]
        ladder = pert.approximation_sequence(pf, 8)
        kappas = [r.kappa for r in ladder]
        expect = [(1 - 1 / k) * pf.kappa for k in range(1, 9)]
        assert np.allclose(kappas, expect, rtol=1e-14)
        assert all(k2 > k1 for k1, k2 in zip(kappas, kappas[1:]))

    def test_supercritical_rejected(self, hardy127):
        pf = hardy127["pf"]
        bad = pf.scaled(1.5 / pf.kappa)
        with pytest.raises(SupercriticalMeasureError):
            pert.approximation_sequence(bad, 4)


class TestResolventGap:
    def test_identical_forms(self, hardy127):
        pf = hardy127["pf"]
        assert pert.resolvent_gap(pf, pf) <= 1e-12

    def test_constant_shift_closed_form(self, baseline63):
        form, grid, sd = (baseline63[k] for k in ("form", "grid", "sd"))
        c = 1.0
        mu0 = pert.make_measure(grid, {"type": "constant", "c": 0.0})
        muc = pert.make_measure(grid, {"type": "constant", "c": c})
        pf0 = pert.perturbed_form(form, mu0)
        pfc = pert.perturbed_form(form, muc)
        gap = pert.resolvent_gap(pf0, pfc)
        assert gap == pytest.approx(c / (sd.lambda0 * (sd.lambda0 - c)), rel=1e-5)

    def test_ladder_gaps_decreasing(self, hardy127):
        pf = hardy127["pf"]
        gaps = [pert.resolvent_gap(pf.scaled(1 - 1 / k), pf) for k in (2, 4, 8, 16)]
        assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))

    def test_quadratic_form_sandwich(self, hardy127):
        pf = hardy127["pf"]
        rung = pf.scaled(0.5)
        rng = np.random.default_rng(2)
        solve_full = pert._inverse_in_m(pf)
        solve_rung = pert._inverse_in_m(rung)
        for _ in range(10):
            f = rng.standard_normal(pf.size)
            a = float(np.sum(pf.mass * f * solve_rung(f)))
            b = float(np.sum(pf.mass * f * solve_full(f)))
            assert 0 <= a <= b * (1 + 1e-9)


class TestConvergenceReport:
    def test_zero_measure_rows_identical(self, baseline63):
        form, grid = baseline63["form"], baseline63["grid"]
        mu = pert.make_measure(grid, {"type": "constant", "c": 1e-12})
        pf = pert.perturbed_form(form, mu)
        table = pert.convergence_report(pf, 4, ks=[1, 2, 4])
        for row in table.rows:
            assert row.resolvent_gap <= 1e-10
            assert row.phi_gap <= 1e-7

    def test_constant_shift_exact_rows(self, baseline63):
        form, grid, sd = (baseline63[k] for k in ("form", "grid", "sd"))
        c = 2.0
        mu = pert.make_measure(grid, {"type": "constant", "c": c})
        pf = pert.perturbed_form(form, mu)
        table = pert.convergence_report(pf, 8, ks=[2, 4, 8])
        for row in table.rows:
            assert row.lambda0 == pytest.approx(
                sd.lambda0 - (1 - 1 / row.k) * c, rel=1e-8
            )
            assert row.phi_gap <= 1e-7
        assert table.monotone

    def test_hardy_ladder_converges(self, hardy127):
        table = pert.convergence_report(hardy127["pf"], 16)
        assert table.monotone and table.converged
        gaps = [abs(r.lambda0 - table.lambda0_target) for r in table.rows]
        assert gaps[-1] <= 0.05 * table.lambda0_target
        lams = [r.lambda0 for r in table.rows]
        assert all(l2 <= l1 for l1, l2 in zip(lams, lams[1:]))
        assert all(r.lambda0 >= table.lambda0_target for r in table.rows)
