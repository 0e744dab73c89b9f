"""Scenario runner: executes every requested check and assembles the report.

Per scenario the deterministic payload (everything except timings) is a
plain JSON-able dict; numeric artifacts for CSV export and figures travel
alongside in a ScenarioArtifacts bundle.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import comparison as comp
from . import domain as dom
from . import heat
from . import orlicz as ox
from . import perturbation as pert
from . import spectral as spec
from .errors import GSLabError, SupercriticalMeasureError
from .scenarios import Scenario

UC_TIME_FACTORS = (0.1, 1.0, 10.0)


@dataclass
class ScenarioArtifacts:
    """Raw arrays behind the report, for delimited output and figures."""

    name: str
    coords: np.ndarray = None
    dim: int = 1
    phi0: np.ndarray = None
    xi: np.ndarray = None
    ratio: np.ndarray = None
    green_center: np.ndarray = None
    beta_table: list = field(default_factory=list)     # (t, closed, numeric)
    moser_rows: list = field(default_factory=list)
    heat_rows: list = field(default_factory=list)
    uc_rows: list = field(default_factory=list)
    ladder_rows: list = field(default_factory=list)
    gamma_ladder: list = field(default_factory=list)   # (k, Gamma_k)


def _stage(timings, name, t0):
    timings[name] = round(time.perf_counter() - t0, 6)
    return time.perf_counter()


def _orlicz_block(scn, toolkit, a_const, rng):
    phi, psi, phi1 = toolkit
    out = {}
    out["phi_limits_ok"] = bool(phi.check_limits())
    adm = ox.is_admissible(phi)
    out["phi_admissible"] = bool(adm.admissible)
    nb = ox.is_nabla2(phi)
    out["nabla2"] = {"satisfied": bool(nb.satisfied), "l": nb.l, "t0": nb.t0}
    out["phi1_admissible"] = bool(phi1.admissibility.admissible)
    out["growth"] = list(phi1.growth) if phi1.growth else None
    beta_rows = []
    agree = 0.0
    decreasing = True
    if phi1.growth is not None:
        closed = comp.UCProfile(a_const, phi1)
        numeric = comp.UCProfile(a_const, phi1, force_numeric=True)
        ts = np.geomspace(0.01, 100.0, 20)
        prev = np.inf
        for t in ts:
            bc = closed.beta(t)
            bn = numeric.beta(t)
            agree = max(agree, abs(bc - bn) / bc)
            decreasing = decreasing and bc < prev
            prev = bc
            beta_rows.append((float(t), float(bc), float(bn)))
    out["beta_quadrature_max_rel_gap"] = float(agree)
    out["beta_strictly_decreasing"] = bool(decreasing)
    ok = (
        out["phi_limits_ok"] and out["phi_admissible"] and out["phi1_admissible"]
        and out["beta_quadrature_max_rel_gap"] <= 1e-6
        and out["beta_strictly_decreasing"]
    )
    return out, bool(ok), beta_rows


def _form_block(form, rng):
    out = {}
    f = rng.standard_normal(form.size)
    gamma = dom.carre_du_champ(form, f)
    e = form.energy(f)
    out["energy_identity_rel"] = float(abs(gamma.total - e) / abs(e))
    clamped = np.clip(f, 0.0, 1.0)
    out["markov_ok"] = bool(form.energy(clamped) <= e * (1 + 1e-12))
    out["irreducible"] = bool(dom.stencil_connected(form))
    lhs, bound = dom.truncation_inequality(form, f, float(abs(rng.standard_normal())))
    out["truncation_ok"] = bool(lhs <= bound * (1 + 1e-12))
    g = rng.standard_normal(form.size)
    me = dom.mutual_energy(form, f, g)
    out["polarization_rel"] = float(
        abs(me.weights.sum() - form.bilinear(f, g)) / max(abs(e), 1.0)
    )
    ok = (
        out["energy_identity_rel"] <= 1e-12 and out["markov_ok"]
        and out["irreducible"] and out["truncation_ok"]
        and out["polarization_rel"] <= 1e-12
    )
    return out, bool(ok)


def _spectral_block(scn, form, pf, base_sd, green, green_low, intrinsic_t, rng):
    out = {
        "lambda0": base_sd.lambda0,
        "lambda1": base_sd.lambda1,
        "residual": base_sd.residual,
        "c_g": green_low.c_g,
        "c_g_constructive": green_low.constructive,
        "intrinsic_time": intrinsic_t,
    }
    gates = []
    kernel = green.kernel()
    sym = float(np.max(np.abs(kernel - kernel.T)) / np.max(np.abs(kernel)))
    out["green_symmetry_rel"] = sym
    out["green_positive"] = bool(np.all(kernel > 0))
    gates += [sym <= 1e-9, out["green_positive"]]

    res = spec.resolvent_formula_check(form, pf.mu, rng=rng, green=green)
    out["resolvent_formula_max_rel"] = float(res)
    gates.append(res <= 1e-7)

    kappa = pf.kappa or 0.0
    if kappa < 1 - 1e-9:
        xi = pert.solve_xi_direct(pf)
        xb = spec.xi_bound_check(pf, xi, green=green)
        out["xi_upper_pointwise_ok"] = xb.ok          # diagnostic, not gated
        out["xi_upper_margin"] = xb.worst_margin
        out["k1_max"] = xb.k1_max
        gates.append(xb.k1_max <= 1.0 + 1e-12)
        if pf.size <= spec.DENSE_GREEN_LIMIT:
            gmu = spec.GreenData(pf).kernel()
            out["green_sandwich_lower_ok"] = bool(np.all(gmu >= kernel * (1 - 1e-10)))
            out["green_sandwich_upper_excess"] = float(
                np.max(gmu * (1 - kappa) / kernel)
            )
            gates.append(out["green_sandwich_lower_ok"])
            # Green identity: column sums against the mass reproduce xi
            col_sum = gmu @ pf.mass
            out["green_xi_identity_rel"] = float(
                np.max(np.abs(col_sum - xi)) / np.max(xi)
            )
            gates.append(out["green_xi_identity_rel"] <= 1e-9)
    if scn.supersolution is not None:
        if scn.supersolution == "xi":
            s = pert.solve_xi_direct(pf)
        else:
            s = np.sqrt(form.grid.rho)
        cert = pert.check_supersolution(pf, s, base_sd=base_sd, c_g=green_low)
        out["supersolution_ok"] = cert.ok
        out["supersolution_worst"] = cert.worst
        out["supersolution_lower_bound_ok"] = cert.lower_bound_ok
        gates += [cert.ok, bool(cert.lower_bound_ok)]
    return out, bool(all(gates))


def _comparison_block(ctx, pf, scn, rng):
    rep = comp.sharp_comparison(
        ctx, pf, k_max=scn.k_max, force_ladder=scn.force_ladder
    )
    payload = rep.as_dict()
    gates = [payload["verdicts"]["upper"], payload["verdicts"]["lower"]]
    results = [rep.result] if rep.path == "direct" else rep.ladder
    for r in results:
        gates.append(r.lower.moser_limit_gap <= 0.02)
        for dt in (r.dt_xi, r.dt_gs):
            defect = max(
                dt.transform_identity_defect(rng.standard_normal(pf.size))
                for _ in range(5)
            )
            gates.append(defect <= 1e-8)
    payload["moser_limit_gap"] = (
        rep.result.lower.moser_limit_gap if rep.path == "direct"
        else max(r.lower.moser_limit_gap for r in rep.ladder)
    )
    # verify the eigenfunction lower bound against the base pair
    final = results[-1]
    lb = spec.eigenfunction_lower_bound(final.sd, ctx.sd, ctx.green_low)
    payload["eigenfunction_lower_ok"] = lb.ok
    payload["eigenfunction_lower_margin"] = lb.worst_margin
    gates.append(lb.ok)
    return rep, payload, bool(all(gates))


def _heat_block(op_for_heat, comp_result, phi1, green, rng, base_hk=None):
    out = {}
    gates = []
    hk = heat.HeatKernel(op_for_heat)
    lam0, _ = hk.ground()
    times_uc = [f / lam0 for f in UC_TIME_FACTORS]
    uc_rows = []
    for label, dt, a_const in (
        ("xi", comp_result.dt_xi, comp_result.bundle_xi.a_const),
        ("ground_state", comp_result.dt_gs, comp_result.bundle_gs.a_const),
    ):
        profile = comp.make_uc_profile(a_const, phi1)
        for row in heat.uc_bound_check(dt, profile, times_uc, hk=hk):
            uc_rows.append((label, row.t, row.kernel_max, row.bound, row.ok))
            gates.append(row.ok)
    out["uc"] = [
        {"transform": lbl, "t": t, "kernel_max": kmax, "bound": b, "ok": ok}
        for (lbl, t, kmax, b, ok) in uc_rows
    ]
    asym = heat.large_time_asymptotics(op_for_heat, comp_result.sd,
                                       xi=comp_result.xi, hk=hk)
    out["asymptotics"] = {
        "gap": asym.gap,
        "fitted_exponent": asym.fitted_exponent,
        "exponent_ok": asym.exponent_ok,
        "envelope_ok": asym.envelope_ok,
        "decreasing_ok": asym.decreasing_ok,
        "slope_final": asym.slope_final,
        "slope_ok": asym.slope_ok,
        "raw_final": asym.raw_final,
        "rows": [
            {"t": r.t, "R": r.big_r, "raw_estimate": r.raw_estimate,
             "slope_estimate": r.slope_estimate}
            for r in asym.rows
        ],
    }
    gates.append(asym.ok)
    # time-integrated kernel against Green columns (base operator only)
    if green is not None:
        n = green.n
        pairs = [(n // 2, n // 2), (n // 5, n // 2)]
        if base_hk is None:
            base_hk = hk if op_for_heat is green.op else heat.HeatKernel(green.op)
        rows = heat.green_time_consistency(base_hk, green, pairs)
        worst = max(r.rel_err for r in rows)
        out["green_time_max_rel"] = float(worst)
        gates.append(worst <= 1e-4)
    heat_rows = [(r.t, r.big_r, r.raw_estimate, r.slope_estimate) for r in asym.rows]
    return out, bool(all(gates)), heat_rows, uc_rows


def run_scenario(scn: Scenario, run_seed: int):
    """Execute one scenario; returns (payload, artifacts, timings)."""
    seed = scn.seed if scn.seed is not None else run_seed
    rng = np.random.default_rng(seed)
    timings = {}
    t0 = time.perf_counter()
    payload = {"name": scn.name, "seed": seed, "checks": {}, "blocks": {}}
    art = ScenarioArtifacts(scn.name)

    grid = dom.build_grid(scn.grid["dimension"], scn.grid["extents"],
                          scn.grid["n"], scn.grid.get("mask"))
    form = dom.build_laplacian(grid)
    art.coords = grid.nodes
    art.dim = grid.dim
    nspec = scn.nfunction
    phi = (ox.NFunction.power(float(nspec["p"]))
           if nspec["kind"] == "power" else ox.NFunction.from_table(nspec["points"]))
    psi = ox.complementary(phi)
    phi1 = ox.build_phi1(phi, psi=psi)
    mu = pert.make_measure(grid, scn.measure)
    pf = pert.perturbed_form(form, mu)
    payload["kappa"] = pf.kappa or 0.0
    if payload["kappa"] > 1.0 + pert.CRITICAL_TOLERANCE:
        raise SupercriticalMeasureError(
            f"kappa = {payload['kappa']:.6f} > 1: scenario measure is "
            "supercritical; no estimate downstream applies"
        )
    t0 = _stage(timings, "setup", t0)

    base_sd = spec.ground_state(form, want_lambda1=True)
    green = spec.GreenData(form)
    base_hk = heat.HeatKernel(form)
    intrinsic_t = heat.intrinsic_lower_time(base_hk)
    green_low = spec.green_lower_constant(form, base_sd, intrinsic_time=intrinsic_t)
    c_h = comp.c_h_estimate(form, base_sd)
    ctx = comp.BaseContext(form, base_sd, green, green_low, c_h,
                           phi, psi, phi1, seed=seed)
    t0 = _stage(timings, "base_spectral", t0)

    if "spectral" in scn.checks:
        blk, ok = _spectral_block(scn, form, pf, base_sd, green, green_low,
                                  intrinsic_t, rng)
        blk["c_h"] = c_h
        payload["blocks"]["spectral"] = blk
        payload["checks"]["spectral"] = ok
        art.green_center = green.column(form.size // 2)
    t0 = _stage(timings, "spectral", t0)

    if "form" in scn.checks:
        blk, ok = _form_block(form, rng)
        payload["blocks"]["form"] = blk
        payload["checks"]["form"] = ok
    t0 = _stage(timings, "form", t0)

    rep = None
    if "comparison" in scn.checks:
        rep, blk, ok = _comparison_block(ctx, pf, scn, rng)
        payload["blocks"]["comparison"] = blk
        payload["checks"]["comparison"] = ok
        result = rep.result if rep.path == "direct" else rep.ladder[-1]
        art.phi0 = result.sd.phi0
        art.xi = result.xi
        art.ratio = result.sd.phi0 / result.xi
        art.moser_rows = [(r.k, r.j_k, r.theta_k) for r in result.lower.moser]
        if rep.path == "ladder":
            art.gamma_ladder = [(k, r.gamma_constant())
                                for k, r in zip(rep.ladder_ks, rep.ladder)]
    t0 = _stage(timings, "comparison", t0)

    if "orlicz" in scn.checks:
        a_for_beta = (
            (rep.result if rep.path == "direct" else rep.ladder[-1]).bundle_xi.a_const
            if rep is not None else 8.0
        )
        blk, ok, beta_rows = _orlicz_block(scn, (phi, psi, phi1), a_for_beta, rng)
        payload["blocks"]["orlicz"] = blk
        payload["checks"]["orlicz"] = ok
        art.beta_table = beta_rows
    t0 = _stage(timings, "orlicz", t0)

    if "heat" in scn.checks:
        if rep is None:
            payload["blocks"]["heat"] = {
                "error": "heat checks need the comparison stage (transforms)"
            }
            payload["checks"]["heat"] = False
        else:
            result = rep.result if rep.path == "direct" else rep.ladder[-1]
            op_for_heat = result.sd.op
            blk, ok, heat_rows, uc_rows = _heat_block(op_for_heat, result, phi1,
                                                      green, rng, base_hk=base_hk)
            payload["blocks"]["heat"] = blk
            payload["checks"]["heat"] = ok
            art.heat_rows = heat_rows
            art.uc_rows = uc_rows
    t0 = _stage(timings, "heat", t0)

    # subcritical-measure scenarios get a norm-resolvent ladder table
    if (pf.kappa or 0.0) > 0 and not scn.force_ladder:
        table = pert.convergence_report(pf, scn.k_max)
        payload["blocks"]["ladder"] = {
            "rows": table.as_records(),
            "lambda0_target": table.lambda0_target,
            "monotone": table.monotone,
            "converged": table.converged,
        }
        payload["checks"]["ladder"] = bool(table.monotone and table.converged)
        art.ladder_rows = table.as_records()
    elif rep is not None and rep.path == "ladder":
        art.ladder_rows = [
            {"k": k, "lambda0": r.lambda0, "kappa_k": r.kappa,
             "C": r.upper.bound, "M": r.lower.bound,
             "max_ratio": r.upper.max_ratio, "max_inverse": r.lower.max_ratio}
            for k, r in zip(rep.ladder_ks, rep.ladder)
        ]
        payload["blocks"]["ladder"] = {"rows": art.ladder_rows,
                                       "extrapolated": rep.extrapolated}
    _stage(timings, "ladder", t0)

    payload["pass"] = bool(all(payload["checks"].values()))
    return payload, art, timings


def run_scenario_job(scn_dict, run_seed):
    """Process-pool entry point: rebuilds the Scenario and runs it."""
    from .scenarios import scenario_from_dict

    scn = scenario_from_dict(scn_dict)
    try:
        return run_scenario(scn, run_seed)
    except GSLabError as exc:
        payload = {"name": scn.name, "error": f"{type(exc).__name__}: {exc}",
                   "checks": {}, "pass": False}
        return payload, ScenarioArtifacts(scn.name), {}
