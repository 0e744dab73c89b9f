"""Eigensolver, Green operators, and resolvent identities for grid forms.

Operators are anything exposing ``stiffness`` (sparse SPD), ``mass``
(lumped diagonal) and ``symmetrized()``; both the base FormOperator and a
PerturbedForm qualify.  The m-weighted problem H f = lambda f is solved in
the symmetric coordinates x = sqrt(m) f where it becomes standard.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (
    InternalInconsistencyError,
    NearSingularError,
    TheoremViolationError,
)
from .solvers import cg, jacobi_preconditioner

DENSE_GREEN_LIMIT = 4096


@dataclass
class SpectralData:
    """Ground pair of an operator: lambda0 simple, phi0 > 0, ||phi0||_{L2(m)} = 1."""

    lambda0: float
    phi0: np.ndarray
    residual: float
    op: object
    lambda1: float | None = None

    def check(self, rtol=1e-9):
        if self.residual > rtol * self.lambda0:
            raise InternalInconsistencyError(
                f"ground-state residual {self.residual:.2e} exceeds {rtol:.0e}*lambda0"
            )
        if np.any(self.phi0 <= 0):
            raise InternalInconsistencyError("ground state is not strictly positive")
        return True


def _start(n, seed=3):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) * 0.05 + 1.0
    return v / np.linalg.norm(v)


def _smallest_pair(S, *, ortho=None, rtol=1e-9, maxiter=300, seed=3):
    """Smallest eigenpair of a sparse symmetric PSD matrix by inverse iteration.

    Zero-shift inverse power iteration with CG inner solves until the
    residual drops below 1e-4 * theta, then a frozen Rayleigh shift
    (sigma = theta - 2||r||, provably below the eigenvalue) finishes the
    convergence.  ``ortho`` deflates against already-computed eigenvectors.
    """
    n = S.shape[0]
    precond = jacobi_preconditioner(S)

    def project(v):
        if ortho is not None:
            for u in ortho:
                v = v - (u @ v) * u
        return v

    x = project(_start(n, seed))
    x /= np.linalg.norm(x)
    theta = float(x @ (S @ x))
    warm = None
    sigma = None
    for _ in range(maxiter):
        r = S @ x - theta * x
        rnorm = np.linalg.norm(r)
        if rnorm <= rtol * theta:
            return theta, x, rnorm
        if sigma is None and rnorm <= 1e-4 * theta:
            sigma = theta - 2.0 * rnorm
        if sigma is None:
            try:
                y = cg(S, x, rtol=1e-12, precond=precond, x0=warm)
            except NearSingularError:
                raise NearSingularError(
                    "operator is numerically singular; route through the "
                    "subcritical approximation ladder"
                )
        else:
            # shifted operator is SPD only on the deflated complement;
            # keep the CG iterates projected there
            shifted = lambda v: project(S @ project(v) - sigma * project(v))  # noqa: E731
            y = cg(shifted, project(x), rtol=1e-13,
                   x0=project(x) / max(theta - sigma, 1e-300), maxiter=200 * n)
        y = project(y)
        x = y / np.linalg.norm(y)
        theta = float(x @ (S @ x))
        warm = y
    raise NearSingularError(
        f"inverse iteration stalled at residual {rnorm:.2e}; "
        "operator too close to singular"
    )


def ground_state(op, *, want_lambda1=False, rtol=1e-9, seed=3):
    """Ground pair of H (or H_mu): positive phi0 with Sum phi0^2 m = 1.

    Residual is reported in the m-weighted norm and certified against
    rtol * lambda0.  With ``want_lambda1`` a deflated second iteration
    supplies the next eigenvalue for gap-dependent checks.
    """
    S = op.symmetrized()
    lam0, x0, res = _smallest_pair(S, rtol=rtol, seed=seed)
    sqrt_m = np.sqrt(op.mass)
    phi0 = x0 / sqrt_m
    if np.sum(phi0 * op.mass) < 0:
        phi0, x0 = -phi0, -x0
    lam1 = None
    if want_lambda1:
        lam1, _, _ = _smallest_pair(S, ortho=[x0], rtol=max(rtol, 1e-8), seed=seed + 1)
    sd = SpectralData(lam0, phi0, res, op, lam1)
    sd.check(rtol=max(rtol, 1e-9))
    return sd


def dense_eigendecomposition(op):
    """Full spectrum (lams ascending, modes m-orthonormal in columns)."""
    S = np.asarray(op.symmetrized().todense())
    lams, X = sla.eigh(S)
    modes = X / np.sqrt(op.mass)[:, None]
    return lams, modes


def green_column(op, y_index, *, rtol=1e-10, cache=None):
    """Column G(., y) of the inverse, convention H G(., y) = e_y / m_y.

    Multiplying by the mass turns this into the unit-vector stiffness solve
    S g = e_y, done by CG; columns are cached by node index when a cache
    dict is supplied.
    """
    if cache is not None and y_index in cache:
        return cache[y_index]
    n = op.stiffness.shape[0]
    b = np.zeros(n)
    b[y_index] = 1.0
    g = cg(op.stiffness, b, rtol=rtol * 1e-2,
           precond=jacobi_preconditioner(op.stiffness))
    if cache is not None:
        cache[y_index] = g
    return g


class GreenData:
    """Green kernel access: dense factorization at desk scale, CG beyond."""

    def __init__(self, op, dense_limit=DENSE_GREEN_LIMIT):
        self.op = op
        self.n = op.stiffness.shape[0]
        self.dense_limit = dense_limit
        self._cache = {}
        self._kernel = None
        self._chol = None

    def _factor(self):
        if self._chol is None:
            self._chol = sla.cho_factor(np.asarray(self.op.stiffness.todense()))
        return self._chol

    def column(self, y_index):
        if self._kernel is not None:
            return self._kernel[:, y_index]
        if self.n <= self.dense_limit:
            b = np.zeros(self.n)
            b[y_index] = 1.0
            return sla.cho_solve(self._factor(), b)
        return green_column(self.op, y_index, cache=self._cache)

    def kernel(self):
        if self._kernel is None:
            if self.n > self.dense_limit:
                raise MemoryError("full kernel requested beyond the dense limit")
            self._kernel = sla.cho_solve(self._factor(), np.eye(self.n))
            self._kernel = 0.5 * (self._kernel + self._kernel.T)
        return self._kernel

    def apply_inverse(self, rhs_m):
        """H^{-1} f for a node function f (solves S x = m f)."""
        b = self.op.mass * rhs_m
        if self.n <= self.dense_limit:
            return sla.cho_solve(self._factor(), b)
        return cg(self.op.stiffness, b, rtol=1e-12,
                  precond=jacobi_preconditioner(self.op.stiffness))


@dataclass
class GreenLowerBound:
    c_g: float
    pair: tuple
    constructive: float | None = None
    intrinsic_time: float | None = None


def green_lower_constant(op, sd, *, sample=4000, intrinsic_time=None, rng=None,
                         green=None):
    """Sharpest constant with  G(x,y) >= c_g phi0(x) phi0(y).

    Exhaustive pairwise minimum via the dense kernel on grids up to the
    dense limit, sampled pairs beyond.  When the intrinsic-kernel onset
    time T is supplied, the constructive value e^{-lambda0 T}/(2 lambda0)
    is attached and checked against the empirical minimum.
    """
    green = green or GreenData(op)
    phi = sd.phi0
    if green.n <= green.dense_limit:
        ratios = green.kernel() / np.outer(phi, phi)
        flat = int(np.argmin(ratios))
        pair = (flat // green.n, flat % green.n)
        c_g = float(ratios[pair])
    else:
        rng = rng or np.random.default_rng(0)
        c_g, pair = np.inf, (0, 0)
        for y in rng.integers(0, green.n, size=max(2, sample // green.n)):
            col = green.column(int(y))
            r = col / (phi * phi[int(y)])
            x = int(np.argmin(r))
            if r[x] < c_g:
                c_g, pair = float(r[x]), (x, int(y))
    if c_g <= 0:
        raise InternalInconsistencyError("Green/ground-state ratio is not positive")
    constructive = None
    if intrinsic_time is not None:
        constructive = float(np.exp(-sd.lambda0 * intrinsic_time) / (2 * sd.lambda0))
        if c_g < constructive * (1 - 1e-9):
            raise InternalInconsistencyError(
                "empirical Green lower constant fell below the constructive value"
            )
    return GreenLowerBound(c_g, pair, constructive, intrinsic_time)


@dataclass
class LowerBoundVerdict:
    ok: bool
    coefficient: float
    worst_margin: float


def eigenfunction_lower_bound(sd, base_sd, c_g):
    """Nodewise check  phi0 >= (c_g lambda0 <psi0, phi0>_m) psi0  for the
    perturbed ground state against the base pair."""
    if hasattr(c_g, "c_g"):
        c_g = c_g.c_g
    m = base_sd.op.mass
    coeff = c_g * sd.lambda0 * float(np.sum(base_sd.phi0 * sd.phi0 * m))
    margin = sd.phi0 - coeff * base_sd.phi0
    worst = float(np.min(margin))
    return LowerBoundVerdict(bool(worst >= -1e-12 * np.max(sd.phi0)), coeff, worst)


def resolvent_formula_check(form, mu, *, n_probes=10, rng=None, green=None):
    """Two-path factorization check of the perturbed inverse.

    Left path: CG solve with the perturbed stiffness.  Right path:
    K + (restrict K)(1 - K^nu)^{-1}(restrict K) with a dense solve of
    1 - K^nu on the support of the measure.  Returns the maximum relative
    L2(m) discrepancy over the probes.
    """
    import scipy.sparse as sp

    rng = rng or np.random.default_rng(0)
    weights = mu.weights if hasattr(mu, "weights") else np.asarray(mu, float)
    S = form.stiffness
    m = form.mass
    n = S.shape[0]
    support = np.where(weights > 0)[0]
    green = green or GreenData(form)
    if support.size:
        G_cols = np.column_stack([green.column(int(j)) for j in support])
        K_nu = G_cols[support, :] * weights[support][None, :]
        lu = sla.lu_factor(np.eye(support.size) - K_nu)
    S_mu = (S - sp.diags(weights)).tocsr()
    worst = 0.0
    for _ in range(n_probes):
        b = rng.standard_normal(n)
        lhs = cg(S_mu, m * b, rtol=1e-13, precond=jacobi_preconditioner(S_mu))
        u = green.apply_inverse(b)
        rhs = u.copy()
        if support.size:
            z = sla.lu_solve(lu, u[support])
            extra = G_cols @ (weights[support] * z)
            rhs = u + extra
        num = np.sqrt(np.sum(m * (lhs - rhs) ** 2))
        den = np.sqrt(np.sum(m * lhs**2))
        worst = max(worst, num / den)
    return worst


@dataclass
class XiBoundVerdict:
    ok: bool
    kappa: float
    worst_margin: float
    k1_max: float


def xi_bound_check(pf, xi, *, green=None):
    """Nodewise  xi <= K1/(1-kappa)  and  K1 <= 1  for a certified kappa < 1."""
    base = pf.base
    cert = pf.kappa_certificate
    kappa = cert.kappa if cert is not None else 0.0
    green = green or GreenData(base)
    k1 = green.apply_inverse(np.ones(base.size))
    bound = k1 / (1.0 - kappa)
    margin = float(np.min(bound - xi))
    ok = margin >= -1e-9 * float(np.max(bound)) and float(np.max(k1)) <= 1.0 + 1e-12
    return XiBoundVerdict(bool(ok), kappa, margin, float(np.max(k1)))


def sign_consistency(sd):
    """Ground state has no sign change and the spectral gap is open."""
    if np.any(sd.phi0 <= 0):
        raise TheoremViolationError("computed ground state changes sign")
    if sd.lambda1 is not None and not sd.lambda1 > sd.lambda0:
        raise TheoremViolationError("spectral gap is not open")
    return True
