import time

import numpy as np
import pytest

from gslab import cli
from gslab import comparison as comp
from gslab import domain as dom
from gslab import heat
from gslab import orlicz as ox
from gslab import perturbation as pert
from gslab import spectral as spec


@pytest.fixture(scope="session")
def baseline63():
    """Unit-interval baseline at n = 63: form, ground pair, Green data."""
    grid = dom.build_grid(1, [(0.0, 1.0)], 63)
    form = dom.build_laplacian(grid)
    sd = spec.ground_state(form, want_lambda1=True)
    green = spec.GreenData(form)
    return {"grid": grid, "form": form, "sd": sd, "green": green}


@pytest.fixture(scope="session")
def baseline_ctx(baseline63):
    """Comparison context for the baseline: Orlicz toolkit and constants."""
    form, sd, green = (baseline63[k] for k in ("form", "sd", "green"))
    phi = ox.NFunction.power(3.0)
    psi = ox.complementary(phi)
    phi1 = ox.build_phi1(phi, psi=psi)
    hk = heat.HeatKernel(form)
    t_intr = heat.intrinsic_lower_time(hk)
    glow = spec.green_lower_constant(form, sd, intrinsic_time=t_intr)
    c_h = comp.c_h_estimate(form, sd)
    ctx = comp.BaseContext(form, sd, green, glow, c_h, phi, psi, phi1, seed=7)
    return {"ctx": ctx, "phi": phi, "psi": psi, "phi1": phi1, "hk": hk,
            "t_intrinsic": t_intr, "glow": glow, "c_h": c_h}


@pytest.fixture(scope="session")
def hardy127():
    """Subcritical Hardy perturbation c = 1/16 on the n = 127 interval."""
    grid = dom.build_grid(1, [(0.0, 1.0)], 127)
    form = dom.build_laplacian(grid)
    mu = pert.make_measure(grid, {"type": "inverse_square_boundary", "c": 1 / 16})
    pf = pert.perturbed_form(form, mu)
    return {"grid": grid, "form": form, "mu": mu, "pf": pf}


@pytest.fixture(scope="session")
def shipped_run(tmp_path_factory):
    """One full run of the six shipped scenarios, shared across tests."""
    out = tmp_path_factory.mktemp("shipped")
    t0 = time.perf_counter()
    code, report = cli.run(None, out_dir=str(out), jobs=1)
    elapsed = time.perf_counter() - t0
    by_name = {s["name"]: s for s in report["scenarios"]}
    return {"code": code, "report": report, "elapsed": elapsed,
            "out": out, "by_name": by_name}


def rng(seed=0):
    return np.random.default_rng(seed)
