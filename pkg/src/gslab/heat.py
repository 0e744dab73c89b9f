"""Semigroups, heat kernels, ultracontractive bounds, large-time asymptotics.

Kernels use the dense eigendecomposition at desk scale (asymptotics probe
many (t, x, y) triples, so the precomputed spectrum amortizes) and a
Lanczos exponential action per column beyond the dense limit.  Large-time
quantities are evaluated through the spectral correction sum

    p_t(x,y) / (e^{-lambda_0 t} phi_0(x) phi_0(y)) - 1
        = sum_{n>=1} e^{-(lambda_n-lambda_0) t} phi_n(x) phi_n(y)
          / (phi_0(x) phi_0(y)),

which stays relatively accurate long after e^{-lambda_0 t} underflows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import InternalInconsistencyError
from .spectral import dense_eigendecomposition

DENSE_HEAT_LIMIT = 2048


@dataclass
class _ShiftedOp:
    """Operator wrapper for H_nu - V (stiffness minus diag(m V))."""

    stiffness: sp.csr_matrix
    mass: np.ndarray

    @property
    def size(self):
        return len(self.mass)

    def symmetrized(self):
        inv_sqrt = 1.0 / np.sqrt(self.mass)
        D = sp.diags(inv_sqrt)
        return (D @ self.stiffness @ D).tocsr()


def shifted_operator(op, V):
    V = np.full(op.size, float(V)) if np.ndim(V) == 0 else np.asarray(V, float)
    S = (op.stiffness - sp.diags(op.mass * V)).tocsr()
    return _ShiftedOp(S, op.mass)


def krylov_column(op, t, y_index, *, steps=90):
    """One kernel column e^{-tH} e_y / m_y by Lanczos in the m-weighted space."""
    S = op.symmetrized()
    n = S.shape[0]
    sqrt_m = np.sqrt(op.mass)
    x0 = np.zeros(n)
    x0[y_index] = 1.0 / sqrt_m[y_index]
    norm0 = np.linalg.norm(x0)
    V = np.zeros((min(steps, n), n))
    alphas, betas = [], []
    v = x0 / norm0
    V[0] = v
    w = S @ v
    a = float(w @ v)
    w -= a * v
    alphas.append(a)
    for j in range(1, V.shape[0]):
        w -= V[: j].T @ (V[: j] @ w)  # full reorthogonalization
        b = np.linalg.norm(w)
        if b <= 1e-14:
            V = V[:j]
            break
        betas.append(b)
        v = w / b
        V[j] = v
        w = S @ v - b * V[j - 1]
        a = float(w @ v)
        w -= a * v
        alphas.append(a)
    theta, Q = sla.eigh_tridiagonal(np.array(alphas), np.array(betas[: len(alphas) - 1]))
    coeff = Q @ (np.exp(-t * theta) * Q[0]) * norm0
    x_t = V[: len(alphas)].T @ coeff
    return x_t / sqrt_m


class HeatKernel:
    """Kernel evaluations p_t(x,y); dense eigendecomposition when possible."""

    def __init__(self, op, dense_limit=DENSE_HEAT_LIMIT):
        self.op = op
        self.n = op.size
        if self.n <= dense_limit:
            self.method = "dense"
            self.lams, self.modes = dense_eigendecomposition(op)
        else:
            self.method = "krylov"
            self.lams = self.modes = None

    def kernel_matrix(self, t):
        if self.method != "dense":
            raise MemoryError("full kernel matrix needs the dense path")
        E = np.exp(-t * self.lams)
        return (self.modes * E) @ self.modes.T

    def column(self, t, y_index):
        if self.method == "dense":
            E = np.exp(-t * self.lams)
            return (self.modes * E) @ self.modes[y_index]
        return krylov_column(self.op, t, y_index)

    def value(self, t, x_index, y_index):
        if self.method == "dense":
            return float(np.sum(np.exp(-t * self.lams)
                                * self.modes[x_index] * self.modes[y_index]))
        return float(self.column(t, y_index)[x_index])

    def trace(self, t):
        if self.method == "dense":
            return float(np.sum(np.exp(-t * self.lams)))
        m = self.op.mass
        return float(sum(self.column(t, y)[y] * m[y] for y in range(self.n)))

    # -- large-time machinery ------------------------------------------------

    def correction_matrix(self, t, *, cutoff=200.0):
        """sum_{n>=1} e^{-(lambda_n - lambda_0) t} phi_n phi_n^T / (phi_0 phi_0^T),
        restricted to modes with (lambda_n - lambda_0) t <= cutoff."""
        gaps = self.lams[1:] - self.lams[0]
        keep = np.where(gaps * t <= cutoff)[0]
        phi0 = self.modes[:, 0].copy()
        if np.sum(phi0 * self.op.mass) < 0:
            phi0 = -phi0
        if keep.size == 0:
            return np.zeros((self.n, self.n))
        Y = self.modes[:, 1 + keep] / phi0[:, None]
        E = np.exp(-gaps[keep] * t)
        return (Y * E) @ Y.T

    def ground(self):
        phi0 = self.modes[:, 0].copy()
        if np.sum(phi0 * self.op.mass) < 0:
            phi0 = -phi0
        return float(self.lams[0]), phi0


def heat_kernel(op, t, *, hk=None, dense_limit=DENSE_HEAT_LIMIT):
    """Kernel object together with the full matrix at time t (dense path)."""
    hk = hk or HeatKernel(op, dense_limit=dense_limit)
    return hk, hk.kernel_matrix(t)


@dataclass
class UCRow:
    t: float
    kernel_max: float
    bound: float
    ok: bool


def uc_bound_check(dt, profile, times, *, dense_limit=DENSE_HEAT_LIMIT, hk=None):
    """Transformed-kernel ultracontractivity check.

    The transformed semigroup of weight w has kernel
    p~_t(x,y)/(w(x) w(y)) with p~ the kernel of H_nu - V, and its
    L^1(w^2 dm) -> L^infty norm (the max of that kernel) must stay below
    beta(t/2) e^{||V||_inf t}.  A kernel of the unshifted operator can be
    reused when V is constant (the shift is then a scalar factor e^{V t}).
    """
    vmax = float(np.max(dt.V))
    constant_v = float(np.ptp(dt.V)) == 0.0
    if hk is not None and constant_v:
        shift = vmax
    else:
        hk = HeatKernel(shifted_operator(dt.op, dt.V), dense_limit=dense_limit)
        shift = 0.0
    rows = []
    ww = np.outer(dt.w, dt.w)
    for t in times:
        kernel = hk.kernel_matrix(t) * (np.exp(shift * t) / ww)
        lhs = float(np.max(kernel))
        bound = profile.beta(t / 2.0) * np.exp(vmax * t)
        rows.append(UCRow(float(t), lhs, bound, bool(lhs <= bound * (1 + 1e-9))))
    return rows


@dataclass
class AsymptoticsRow:
    t: float
    big_r: float
    raw_estimate: float
    slope_estimate: float | None


@dataclass
class AsymptoticsResult:
    rows: list
    gap: float                  # lambda_1 - lambda_0
    fitted_exponent: float
    exponent_ok: bool
    envelope_ok: bool
    decreasing_ok: bool
    slope_final: float
    slope_ok: bool
    raw_final: float

    @property
    def ok(self):
        return bool(self.exponent_ok and self.envelope_ok
                    and self.decreasing_ok and self.slope_ok)


def default_asymptotic_times(lam0, gap):
    """Decay-fit times in spectral-gap units (the subleading modes must have
    died off before the leading exponent is identifiable), merged with the
    lambda_0-based probe times of the eigenvalue estimator."""
    fit = [f / gap for f in (6.0, 8.0, 10.0, 12.0)]
    probes = [10.0 / lam0, 20.0 / lam0]
    return sorted(set(fit + probes))


def large_time_asymptotics(op, sd, times=None, *, xi=None, hk=None,
                           slope_rtol=0.01, exponent_rtol=0.05):
    """Decay table R(t) = max_{x,y} |p_t/(e^{-l0 t} phi0 phi0) - 1| plus the
    spectral-gap fit and the log-ratio eigenvalue estimators.

    The raw estimator (1/t) ln(p_t/(xi xi)) carries an O(ln(phi/xi)/t)
    offset; the slope of ln(p_t/(xi xi)) between consecutive times removes
    it, and that slope must land within ``slope_rtol`` of -lambda_0.  The
    exponent fit uses only times with gap * t >= 6 so the subleading modes
    do not bias the slope.
    """
    hk = hk or HeatKernel(op)
    lam0, phi0 = hk.ground()
    gap = float(hk.lams[1] - hk.lams[0])
    if times is None:
        times = default_asymptotic_times(lam0, gap)
    if xi is None:
        from .perturbation import solve_xi_direct

        xi = solve_xi_direct(op)
    probe = int(np.argmax(phi0))
    times = sorted(float(t) for t in times)
    rows = []
    log_r_prev, t_prev = None, None
    for t in times:
        corr = hk.correction_matrix(t)
        big_r = float(np.max(np.abs(corr)))
        # log kernel ratio at the probe pair, evaluated without underflow
        log_p = -lam0 * t + np.log(phi0[probe] ** 2 * (1.0 + corr[probe, probe]))
        log_ratio = log_p - np.log(xi[probe] ** 2)
        raw = log_ratio / t
        slope = None
        if log_r_prev is not None:
            slope = (log_ratio - log_r_prev) / (t - t_prev)
        rows.append(AsymptoticsRow(t, big_r, float(raw), slope))
        log_r_prev, t_prev = log_ratio, t
    rs = np.array([r.big_r for r in rows])
    ts = np.asarray(times)
    decreasing = bool(np.all(np.diff(rs) < 0))
    fit_mask = gap * ts >= 6.0 * (1 - 1e-12)
    if np.count_nonzero(fit_mask) < 2:
        fit_mask = np.ones_like(ts, dtype=bool)
    t_fit, r_fit = ts[fit_mask], rs[fit_mask]
    # envelope with c fitted at the smallest asymptotic time
    c_fit = r_fit[0] * np.exp(gap * t_fit[0])
    envelope = bool(np.all(r_fit <= c_fit * np.exp(-gap * t_fit) * (1 + 1e-9)))
    slope_fit = float(np.polyfit(t_fit, np.log(r_fit), 1)[0])
    exponent_ok = bool(abs(-slope_fit - gap) <= exponent_rtol * gap)
    slope_final = rows[-1].slope_estimate
    slope_ok = bool(abs(slope_final + lam0) <= slope_rtol * lam0)
    return AsymptoticsResult(
        rows, gap, -slope_fit, exponent_ok, envelope, decreasing,
        float(slope_final), slope_ok, rows[-1].raw_estimate,
    )


def intrinsic_lower_time(hk, sd=None, *, start=None, max_doublings=40):
    """Smallest doubling time T with
    p_t >= (1/2) e^{-lambda_0 t} phi_0 phi_0 for all pairs at T, 2T, 4T."""
    lam0, _ = hk.ground()
    T = start if start is not None else 1.0 / lam0
    for _ in range(max_doublings):
        if all(float(np.min(hk.correction_matrix(s))) >= -0.5 for s in (T, 2 * T, 4 * T)):
            return float(T)
        T *= 2.0
    raise InternalInconsistencyError("intrinsic lower-bound onset time not found")


@dataclass
class GreenConsistencyRow:
    x: int
    y: int
    integral: float
    green: float
    rel_err: float


def green_time_consistency(hk, green, pairs, *, t_end_factor=40.0, points=801):
    """Quadrature of t -> p_t(x,y) over [0, 40/lambda_0] plus the analytic
    leading-mode tail, compared against the Green kernel entries."""
    lam0, phi0 = hk.ground()
    lam_max = float(hk.lams[-1])
    t0 = 1e-7 / lam_max
    t_end = t_end_factor / lam0
    us = np.linspace(np.log(t0), np.log(t_end), points)
    ts = np.exp(us)
    from scipy.integrate import simpson

    rows = []
    for x, y in pairs:
        vals = np.array([
            np.sum(np.exp(-t * hk.lams) * hk.modes[x] * hk.modes[y]) for t in ts
        ])
        body = float(simpson(vals * ts, x=us))
        head = float(vals[0] * t0)          # p_t bounded by its value at t0
        tail = float(np.exp(-lam0 * t_end) / lam0 * phi0[x] * phi0[y])
        total = body + head + tail
        g = float(green.column(y)[x])
        rows.append(GreenConsistencyRow(x, y, total, g, abs(total - g) / abs(g)))
    return rows
