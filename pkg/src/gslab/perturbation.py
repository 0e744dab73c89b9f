"""Perturbation measures, Hardy certificates, and the subcritical ladder.

A perturbation is a nonnegative node measure mu; the perturbed form is
E_mu[f] = E[f] - sum f_i^2 mu_i with operator action
H_mu f = H f - (mu/m) f.  Measures with Hardy constant kappa > 1 are
rejected: everything downstream assumes the form stays nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import spectral
from .domain import DiscreteMeasure
from .errors import (
    InvalidDensityError,
    NearSingularError,
    SupercriticalMeasureError,
)
from .solvers import (
    cg,
    generalized_max_eigenvalue,
    jacobi_preconditioner,
    symmetric_operator_norm,
)

CRITICAL_TOLERANCE = 1e-8


@dataclass
class PerturbationMeasure:
    measure: DiscreteMeasure
    tag: str
    spec: dict = field(default_factory=dict)

    @property
    def weights(self):
        return self.measure.weights

    @property
    def total(self):
        return self.measure.total


def make_measure(grid, spec):
    """Node measure mu_i = density(x_i) * h^d from a density description.

    Densities: constant c; c/rho^2 (boundary distance); c/|x|^2 (origin);
    or an explicit per-node table.  Infinite or negative values at any
    interior node raise InvalidDensityError.
    """
    kind = spec.get("type")
    c = float(spec.get("c", 0.0))
    if c < 0:
        raise InvalidDensityError("density coefficient must be nonnegative")
    if kind == "constant":
        density = np.full(grid.size, c)
        tag = "bounded-potential"
    elif kind == "inverse_square_boundary":
        density = c / grid.rho**2
        tag = "boundary-distance"
    elif kind == "inverse_square_origin":
        r2 = np.sum(grid.nodes**2, axis=1)
        with np.errstate(divide="raise"):
            try:
                density = c / r2
            except FloatingPointError:
                raise InvalidDensityError("origin density is infinite at a node")
        tag = "hardy-inverse-square"
    elif kind == "table":
        density = np.asarray(spec["values"], dtype=float)
        if density.shape != (grid.size,):
            raise InvalidDensityError("table density length must match the grid")
        tag = "tabulated"
    else:
        raise InvalidDensityError(f"unknown density type {kind!r}")
    if np.any(density < 0) or not np.all(np.isfinite(density)):
        raise InvalidDensityError("density must be finite and nonnegative at nodes")
    weights = density * grid.h**grid.dim
    return PerturbationMeasure(DiscreteMeasure(weights), tag, dict(spec))


@dataclass
class HardyCertificate:
    """kappa = sup of sum f^2 mu over E[f], with extremal vector and residual."""

    kappa: float
    extremal: np.ndarray
    residual: float


@dataclass
class SupersolutionCertificate:
    ok: bool
    residual: np.ndarray
    worst: float
    lower_bound_ok: bool | None = None

    def __bool__(self):
        return self.ok


class PerturbedForm:
    """The pair (E_mu, H_mu) for a base form and a perturbation measure."""

    def __init__(self, base, mu: PerturbationMeasure):
        self.base = base
        self.mu = mu
        self.mass = base.mass
        self.grid = base.grid
        self.stiffness = (base.stiffness - sp.diags(mu.weights)).tocsr()
        self.kappa_certificate: HardyCertificate | None = None
        self._sym = None

    @property
    def size(self):
        return self.base.size

    def apply(self, f):
        return (self.stiffness @ f) / self.mass

    def energy(self, f):
        return float(f @ (self.stiffness @ f))

    def symmetrized(self):
        if self._sym is None:
            inv_sqrt = 1.0 / np.sqrt(self.mass)
            D = sp.diags(inv_sqrt)
            self._sym = (D @ self.stiffness @ D).tocsr()
        return self._sym

    def with_certificate(self, cert):
        self.kappa_certificate = cert
        return self

    @property
    def kappa(self):
        return None if self.kappa_certificate is None else self.kappa_certificate.kappa

    def scaled(self, factor):
        """Same base with measure scaled by ``factor`` (certificate scaled too)."""
        mu = PerturbationMeasure(
            DiscreteMeasure(self.mu.weights * factor), self.mu.tag, dict(self.mu.spec)
        )
        out = PerturbedForm(self.base, mu)
        if self.kappa_certificate is not None:
            c = self.kappa_certificate
            out.kappa_certificate = HardyCertificate(c.kappa * factor, c.extremal, c.residual)
        return out


def kappa_constant(form, mu: PerturbationMeasure, *, rtol=1e-8):
    """Sharp discrete Hardy constant: largest kappa with
    diag(mu) v = kappa S v, by inverse-free power iteration with CG solves.
    """
    if mu.total <= 0:
        raise ValueError("kappa requires a measure that is not identically zero")
    kappa, v, res = generalized_max_eigenvalue(form.stiffness, mu.weights, rtol=rtol)
    return HardyCertificate(kappa, v, res)


def perturbed_form(form, mu, *, certify=True):
    pf = PerturbedForm(form, mu)
    if certify and mu.total > 0:
        pf.with_certificate(kappa_constant(form, mu))
    return pf


def check_supersolution(pf, s, *, base_sd=None, c_g=None, tol=1e-10):
    """Weak supersolution test of H_mu against the full nonnegative cone.

    The coordinate basis spans the cone, so the certificate reduces to the
    nodewise residual r = S s - mu s.  The verdict tolerance is relative to
    whichever is larger, ||r||_inf or the cancellation scale |S| |s| (an
    exact eigenfunction leaves r = 0 up to solver noise, and the noise must
    not be judged against itself).  Supplying base spectral data and a
    Green lower constant also verifies the ground-state lower bound
    s >= c_g psi0 <psi0, s>_mu.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValueError("supersolution candidate must be strictly positive")
    r = pf.stiffness @ s
    worst = float(np.min(r))
    cancellation = float(np.max(np.abs(pf.stiffness) @ np.abs(s)))
    ok = worst >= -tol * max(float(np.max(np.abs(r))), cancellation)
    lb_ok = None
    if base_sd is not None and c_g is not None:
        if hasattr(c_g, "c_g"):
            c_g = c_g.c_g
        coeff = c_g * float(np.sum(base_sd.phi0 * s * pf.mu.weights))
        lb_ok = bool(np.all(s >= coeff * base_sd.phi0 - 1e-12 * np.max(s)))
    return SupersolutionCertificate(bool(ok), r, worst, lb_ok)


def approximation_sequence(pf, k_max, *, tol=CRITICAL_TOLERANCE):
    """Ladder mu_k = (1 - 1/k) mu for k = 1..k_max, each with kappa_k < 1."""
    cert = pf.kappa_certificate
    if cert is None:
        raise ValueError("attach a Hardy certificate before building the ladder")
    if cert.kappa > 1.0 + tol:
        raise SupercriticalMeasureError(
            f"kappa = {cert.kappa:.6f} > 1: the perturbed form is indefinite"
        )
    return [pf.scaled(1.0 - 1.0 / k) for k in range(1, k_max + 1)]


def _inverse_in_m(pf, rtol=1e-12):
    precond = jacobi_preconditioner(pf.stiffness)

    def solve(rhs_m):
        return cg(pf.stiffness, pf.mass * rhs_m, rtol=rtol, precond=precond)

    return solve


def resolvent_gap(pf_a, pf_b, *, rtol=1e-6):
    """Operator norm of H_a^{-1} - H_b^{-1} on L2(m) via power iteration."""
    for pf in (pf_a, pf_b):
        k = getattr(pf, "kappa", None)
        if k is not None and k >= 1.0 - 1e-12:
            raise NearSingularError("resolvent gap needs strictly subcritical forms")
    solve_a = _inverse_in_m(pf_a)
    solve_b = _inverse_in_m(pf_b)
    sqrt_m = np.sqrt(pf_a.mass)

    def apply_diff(x):
        f = x / sqrt_m
        return sqrt_m * (solve_a(f) - solve_b(f))

    # gaps below 1e-10 of the resolvent scale count as numerically zero
    probe = np.ones(pf_a.size) / np.sqrt(pf_a.size)
    scale = np.linalg.norm(sqrt_m * solve_a(probe / sqrt_m))
    return symmetric_operator_norm(apply_diff, pf_a.size, rtol=rtol,
                                   atol=1e-10 * scale)


@dataclass
class ConvergenceRow:
    k: int
    kappa_k: float
    lambda0: float
    phi_gap: float
    xi_gap: float
    resolvent_gap: float


@dataclass
class ConvergenceTable:
    rows: list
    lambda0_target: float
    monotone: bool
    converged: bool

    def as_records(self):
        return [vars(r) for r in self.rows]


def solve_xi_direct(op, *, rtol=1e-10):
    """xi = H^{-1} 1 by CG on S xi = m; positivity asserted."""
    xi = cg(op.stiffness, op.mass, rtol=rtol * 1e-2,
            precond=jacobi_preconditioner(op.stiffness))
    if np.any(xi <= 0):
        raise NearSingularError("xi came out nonpositive; operator near singular")
    return xi


def convergence_report(pf, k_max, *, ks=None, seed=3):
    """Ladder table: eigenvalues, eigenfunctions and resolvents along mu_k.

    Direct quantities of the target form are the reference, so the target
    must be strictly subcritical.  Eigenvalue gaps are asserted to shrink
    monotonically; eigenfunction signs follow the positive-mean convention.
    """
    ladder = approximation_sequence(pf, k_max)
    if ks is None:
        ks = sorted({1, 2, 4, 8, k_max} & set(range(1, k_max + 1)))
    sd_target = spectral.ground_state(pf, seed=seed)
    xi_target = solve_xi_direct(pf)
    m = pf.mass
    rows = []
    for k in ks:
        rung = ladder[k - 1]
        sd_k = spectral.ground_state(rung, seed=seed)
        xi_k = solve_xi_direct(rung)
        rows.append(ConvergenceRow(
            k=k,
            kappa_k=rung.kappa if rung.kappa is not None else 0.0,
            lambda0=sd_k.lambda0,
            phi_gap=float(np.sqrt(np.sum(m * (sd_k.phi0 - sd_target.phi0) ** 2))),
            xi_gap=float(np.sqrt(np.sum(m * (xi_k - xi_target) ** 2))),
            resolvent_gap=resolvent_gap(rung, pf),
        ))
    gaps = [abs(r.lambda0 - sd_target.lambda0) for r in rows]
    monotone = all(g2 <= g1 + 1e-10 * max(1.0, g1) for g1, g2 in zip(gaps, gaps[1:]))
    converged = gaps[-1] <= 0.05 * max(sd_target.lambda0, 1e-300) + 1e-12
    return ConvergenceTable(rows, sd_target.lambda0, monotone, converged)
