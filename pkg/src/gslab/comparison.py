"""Two-sided ground-state/potential comparison on a discrete Dirichlet space.

The chain: xi = H_mu^{-1} 1; a weighted transform of the form by a positive
solution w of H_nu w = V w + F; constants C', C, Lambda_1, Lambda_2, A; an
ultracontractivity profile beta(t) = 4/gamma(t) with
t = 8 A int_0^gamma ds/(s Lambda(s)); the upper bound
phi_0 <= beta(t/2) e^{t lambda_0} xi, and the reverse bound through a
supremum iteration with geometrically growing exponents.

Discrete exactness note: the transform identity
E_nu[w f] = sum_e s_ij w_i w_j (f_i - f_j)^2 + int V f^2 w^2 dm
          + int F w f^2 dm
holds on the graph with the geometric-mean edge weights s_ij w_i w_j, up to
the residual of the w-solve; every inequality below inherits that exactness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import orlicz
from .errors import (
    ConstantsInvalidError,
    GSLabError,
    InternalInconsistencyError,
    NoSolutionError,
    TheoremViolationError,
)
from .perturbation import solve_xi_direct
from .solvers import cg, jacobi_preconditioner


class DivergentProfileError(GSLabError):
    """phi_1 is not admissible: the profile integral diverges at zero."""


def solve_xi(op, *, rtol=1e-10):
    """xi = H^{-1} 1 by CG; raises NearSingularError close to criticality."""
    return solve_xi_direct(op, rtol=rtol)


def solve_xi_ladder(pf, *, ks=(4, 8, 16)):
    """xi of a (near-)critical form by 1/k extrapolation along the ladder.

    Solves xi_k on the strictly subcritical rungs (1 - 1/k) mu and returns
    the Richardson limit in 1/k together with a nodewise error estimate
    (the change between the last two extrapolants).
    """
    ks = sorted(ks)
    xis = [solve_xi_direct(pf.scaled(1.0 - 1.0 / k)) for k in ks]
    k1, k2 = ks[-2], ks[-1]
    limit = (k2 * xis[-1] - k1 * xis[-2]) / (k2 - k1)
    if len(ks) >= 3:
        k0 = ks[-3]
        prev = (k1 * xis[-2] - k0 * xis[-3]) / (k1 - k0)
        err = float(np.max(np.abs(limit - prev)))
    else:
        err = float(np.max(np.abs(limit - xis[-1])))
    return limit, err


def _base_edges(op):
    base = getattr(op, "base", op)
    return base.edge_i, base.edge_j, base.edge_w


@dataclass
class DoobTransform:
    """Weighted transform of H_nu by a positive solution of H_nu w = Vw + F."""

    op: object
    w: np.ndarray
    V: np.ndarray
    F: np.ndarray
    residual: float
    edge_i: np.ndarray = field(repr=False, default=None)
    edge_j: np.ndarray = field(repr=False, default=None)
    edge_ww: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        ei, ej, ew = _base_edges(self.op)
        self.edge_i, self.edge_j = ei, ej
        self.edge_ww = ew * self.w[ei] * self.w[ej]

    @property
    def mass(self):
        return self.op.mass

    def gradient_energy(self, f):
        """sum over interior edges of s_ij w_i w_j (f_i - f_j)^2; boundary
        edges carry zero weight since w vanishes there."""
        d = f[self.edge_i] - f[self.edge_j]
        return float(np.sum(self.edge_ww * d * d))

    def Q(self, f):
        return self.gradient_energy(f) + float(
            np.sum(f * f * self.F * self.w * self.mass)
        )

    def potential_term(self, f):
        return float(np.sum(self.V * f * f * self.w**2 * self.mass))

    def energy_w(self, f):
        """E_nu[w f], evaluated directly on the perturbed stiffness."""
        return self.op.energy(self.w * f)

    def transform_identity_defect(self, f):
        lhs = self.Q(f) + self.potential_term(f)
        rhs = self.energy_w(f)
        return abs(lhs - rhs) / max(abs(rhs), 1e-300)


def solve_doob(op_nu, V, F, *, sd_nu=None, base_sd=None, c_g=None, rtol=1e-12):
    """Positive solution w of H_nu w = V w + F with its transform data.

    F != 0: CG solve of (S_nu - diag(m V)) w = m F; the operator must stay
    positive definite.  F = 0 requires V = lambda_0 of the operator and
    returns the ground state.  The ground-state lower bound
    w >= c_g psi_0 (int psi_0 V w dm + int psi_0 F dm) is verified nodewise
    when base spectral data is available.
    """
    n = op_nu.size
    V = np.full(n, float(V)) if np.ndim(V) == 0 else np.asarray(V, float)
    F = np.full(n, float(F)) if np.ndim(F) == 0 else np.asarray(F, float)
    if np.any(V < 0) or np.any(F < 0):
        raise ValueError("V and F must be nonnegative")
    if not (np.any(V > 0) or np.any(F > 0)):
        raise ValueError("V and F cannot both vanish")
    m = op_nu.mass
    if np.any(F > 0):
        shifted = (op_nu.stiffness - sp.diags(m * V)).tocsr()
        try:
            w = cg(shifted, m * F, rtol=rtol, precond=jacobi_preconditioner(shifted))
        except GSLabError as exc:
            raise NoSolutionError(f"H_nu - V is not positive definite: {exc}") from exc
        resid = np.linalg.norm(shifted @ w - m * F) / np.linalg.norm(m * F)
    else:
        if sd_nu is None:
            raise NoSolutionError("F = 0 needs the ground pair: pass sd_nu")
        if abs(float(np.max(V)) - sd_nu.lambda0) > 1e-6 * sd_nu.lambda0 or (
            float(np.std(V)) > 1e-12 * sd_nu.lambda0
        ):
            raise NoSolutionError("F = 0 is solvable only for constant V = lambda_0")
        w = sd_nu.phi0.copy()
        resid = sd_nu.residual / sd_nu.lambda0
    if np.any(w <= 0):
        raise InternalInconsistencyError("transform weight w is not positive")
    dt = DoobTransform(op_nu, w, V, F, float(resid))
    if base_sd is not None and c_g is not None:
        cg_val = c_g.c_g if hasattr(c_g, "c_g") else float(c_g)
        coeff = cg_val * float(np.sum(base_sd.phi0 * (V * w + F) * m))
        if np.any(w < coeff * base_sd.phi0 * (1 - 1e-9) - 1e-14):
            raise TheoremViolationError("w fell below its ground-state lower bound")
    return dt


@dataclass
class CSEstimate:
    """Estimated Sobolev-Orlicz constant sup ||f^2||_Phi / E_nu[f].

    ``value`` carries the safety-inflated number every downstream bound
    uses; ``raw`` is the bare supremum estimate from the fixed-point runs.
    """

    raw: float
    value: float
    safety: float
    converged: bool
    trace: list


def c_s_estimate(op_nu, phi, *, starts=5, iters=80, rng=None, safety=1.25,
                 q_effective=None, seed_vectors=()):
    """Sobolev-Orlicz constant by sign-preserving power fixed-point iteration.

    Iterates f <- normalize(H_nu^{-1}(|f|^{q-2} f)) from several seeded
    starts and takes the best Rayleigh-type ratio; q is the effective
    Lebesgue exponent of t -> Phi(t^2) (2p for a p-power Phi).
    """
    rng = rng or np.random.default_rng(0)
    m = op_nu.mass
    if q_effective is None:
        if getattr(phi, "kind", None) == "power":
            q_effective = 2.0 * phi.p
        else:
            # local log-slope of Phi at t = 1 stands in for the exponent
            q_effective = 2.0 * (np.log(phi(1.05)) - np.log(phi(0.95))) / (
                np.log(1.05) - np.log(0.95)
            )
    qm1 = q_effective - 1.0
    precond = jacobi_preconditioner(op_nu.stiffness)

    def ratio(f):
        e = op_nu.energy(f)
        if e <= 0:
            return 0.0
        return orlicz.luxemburg_norm(phi, m, f * f) / e

    best, best_trace, converged = 0.0, [], False
    seeds = [rng.standard_normal(op_nu.size) for _ in range(starts)]
    seeds += [np.asarray(v, float) for v in seed_vectors]
    for f in seeds:
        f = f / np.sqrt(np.sum(m * f * f))
        r_prev = ratio(f)
        trace = [r_prev]
        ok = False
        for _ in range(iters):
            g = np.sign(f) * np.abs(f) ** qm1
            f = cg(op_nu.stiffness, m * g, rtol=1e-10, precond=precond)
            f = f / np.sqrt(np.sum(m * f * f))
            r = ratio(f)
            trace.append(r)
            if abs(r - r_prev) <= 1e-8 * max(r, 1e-300):
                ok = True
                r_prev = r
                break
            r_prev = r
        if r_prev > best:
            best, best_trace, converged = r_prev, trace, ok
    return CSEstimate(best, best * safety, safety, converged, best_trace)


def c_h_estimate(form, base_sd, *, rtol=1e-8):
    """Hardy-type constant: largest C_H with  diag(m/psi_0^2) f = C_H S f."""
    from .solvers import generalized_max_eigenvalue

    weights = form.mass / base_sd.phi0**2
    c_h, _, _ = generalized_max_eigenvalue(form.stiffness, weights, rtol=rtol)
    return float(c_h)


@dataclass
class ConstantsBundle:
    c_g: float
    c_h: float
    c_s: float            # safety-inflated value used everywhere
    c_s_raw: float
    kappa: float
    lambda0_base: float
    lambda0_nu: float
    c_prime: float
    chc_prime: float
    chc_prime_lambda0: float
    c: float               # max(C_H C', C_H C' lambda0)
    lambda1_const: float   # 1 + C_H C'/2
    lambda2_const: float   # ||F||_inf^2/2 + C_H C' lambda0 / 2
    norm_one_psi: float
    a_const: float         # (C + 2 C_S)(1 + 2 C_S ||1||_Psi)

    def as_dict(self):
        return {
            "C_G": self.c_g, "C_H": self.c_h, "C_S": self.c_s,
            "C_S_raw": self.c_s_raw, "kappa": self.kappa,
            "Cprime": self.c_prime, "C": self.c,
            "Lambda1": self.lambda1_const, "Lambda2": self.lambda2_const,
            "norm_one_psi": self.norm_one_psi, "A": self.a_const,
        }


def constants(base_sd, green_low, dt, cs, ch, *, psi, phi1, kappa=0.0,
              lambda0_nu=None, rng=None, n_probes=50, slack=1e-9):
    """Constants bundle for a transform, with its three defining inequalities
    verified on random probe vectors:

    (a)  int f^2 dm <= C (grad_w(f) + int w^2 f^2 dm)
    (b)  Q^w[f] <= Lambda_1 grad_w(f) + Lambda_2 int w^2 f^2 dm
    (c)  ||f^2||_{phi_1(w^2 dm)} <= A (Q^w[f] + int V f^2 w^2 dm)

    A failed inequality raises ConstantsInvalidError naming it.
    """
    rng = rng or np.random.default_rng(1)
    m = dt.mass
    c_g = green_low.c_g if hasattr(green_low, "c_g") else float(green_low)
    c_s = cs.value if hasattr(cs, "value") else float(cs)
    c_s_raw = cs.raw if hasattr(cs, "raw") else float(cs)
    lam0 = base_sd.lambda0
    pairing = float(np.sum(base_sd.phi0 * (dt.V * dt.w + dt.F) * m))
    c_prime = c_g ** (-2) * pairing ** (-2)
    chc = ch * c_prime
    chc_l = ch * c_prime * lam0
    c_max = max(chc, chc_l)
    lam1_c = 1.0 + chc / 2.0
    lam2_c = float(np.max(dt.F)) ** 2 / 2.0 + chc_l / 2.0
    n1psi = orlicz.norm_one_psi(psi, m)
    a_const = (c_max + 2.0 * c_s) * (1.0 + 2.0 * c_s * n1psi)
    bundle = ConstantsBundle(
        c_g=c_g, c_h=ch, c_s=c_s, c_s_raw=c_s_raw, kappa=kappa,
        lambda0_base=lam0,
        lambda0_nu=lam0 if lambda0_nu is None else float(lambda0_nu),
        c_prime=c_prime, chc_prime=chc, chc_prime_lambda0=chc_l, c=c_max,
        lambda1_const=lam1_c, lambda2_const=lam2_c,
        norm_one_psi=n1psi, a_const=a_const,
    )
    w2m = dt.w**2 * m
    for i in range(n_probes):
        f = rng.standard_normal(len(m))
        grad = dt.gradient_energy(f)
        mass_w = float(np.sum(w2m * f * f))
        lhs_a = float(np.sum(m * f * f))
        if lhs_a > c_max * (grad + mass_w) * (1 + slack):
            raise ConstantsInvalidError(
                "weighted L2 bound failed", inequality="L2-estimate", worst_probe=i
            )
        q = dt.Q(f)
        if q > (lam1_c * grad + lam2_c * mass_w) * (1 + slack):
            raise ConstantsInvalidError(
                "transform-energy split failed", inequality="Lambda-split",
                worst_probe=i,
            )
        lux = orlicz.luxemburg_norm(phi1, w2m, f * f)
        if lux > a_const * (q + dt.potential_term(f)) * (1 + slack):
            raise ConstantsInvalidError(
                "weighted Sobolev-Orlicz bound failed", inequality="ISO1",
                worst_probe=i,
            )
    return bundle


# ---------------------------------------------------------------------------
# ultracontractivity profile


@dataclass
class UCProfile:
    a_const: float
    phi1: object
    force_numeric: bool = False

    def __post_init__(self):
        ev = self.phi1.evaluator if hasattr(self.phi1, "evaluator") else self.phi1
        self._ev = ev
        cert = getattr(self.phi1, "admissibility", None)
        if cert is not None and not cert.admissible:
            raise DivergentProfileError("phi_1 fails the admissibility integral")
        self._power = getattr(ev, "kind", None) == "power" and not self.force_numeric

    def profile_integral(self, gamma):
        """int_0^gamma phi_1^{-1}(1/s) ds, the admissibility-profile integral."""
        ev = self._ev
        if self._power:
            # phi_1 = a t^(1+eps): exact head-to-tail power integral
            a, one_eps = ev.coef, ev.p
            eps = one_eps - 1.0
            return a ** (-1.0 / one_eps) * gamma ** (eps / one_eps) * one_eps / eps
        delta = gamma * 1e-10
        f_d = ev.inverse(1.0 / delta)
        f_d2 = ev.inverse(2.0 / delta)
        alpha = np.log(f_d2 / f_d) / np.log(2.0)  # local power of the head
        if alpha >= 1.0:
            raise DivergentProfileError("profile integrand is not integrable at 0")
        head = f_d * delta / (1.0 - alpha)
        us = np.linspace(np.log(delta), np.log(gamma), 1601)
        s = np.exp(us)
        vals = ev.inverse(1.0 / s) * s
        from scipy.integrate import simpson

        return head + float(simpson(vals, x=us))

    def gamma(self, t):
        """Solves  t = 8 A * profile_integral(gamma)  for gamma (monotone)."""
        target = t / (8.0 * self.a_const)
        if self._power:
            ev = self._ev
            a, one_eps = ev.coef, ev.p
            eps = one_eps - 1.0
            return (target * eps / one_eps) ** (one_eps / eps) * a ** (1.0 / eps)
        lo, hi = 1e-30, 1.0
        for _ in range(4000):
            if self.profile_integral(hi) >= target:
                break
            hi *= 2.0
        while self.profile_integral(lo) > target and lo > 1e-280:
            lo /= 2.0
        for _ in range(200):
            mid = np.sqrt(lo * hi)
            if self.profile_integral(mid) <= target:
                lo = mid
            else:
                hi = mid
            if hi / lo <= 1 + 1e-12:
                break
        return np.sqrt(lo * hi)

    def beta(self, t):
        return 4.0 / self.gamma(t)


def beta(profile, t):
    """Heat-bound profile beta(t) = 4/gamma(t) of an UCProfile."""
    return profile.beta(t)


def make_uc_profile(a_const, phi1):
    return UCProfile(a_const, phi1)


def _golden_min_logt(fn, lo, hi, iters=200):
    """Golden-section minimizer over log-spaced t in [lo, hi]."""
    a, b = np.log(lo), np.log(hi)
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(np.exp(c)), fn(np.exp(d))
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(np.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(np.exp(d))
        if b - a <= 1e-12:
            break
    t = np.exp(0.5 * (a + b))
    return float(t), float(fn(t))


@dataclass
class UpperComparison:
    t_star: float
    bound: float           # C(nu, t*) = beta(t*/2) exp(t* lambda0)
    max_ratio: float       # max phi0/xi
    min_ratio: float
    ok: bool


def comparison_bound(profile, lambda0_nu, t):
    return profile.beta(t / 2.0) * np.exp(t * lambda0_nu)


def upper_comparison(sd_nu, xi, profile):
    """Pointwise upper verdict  phi_0 <= C(nu, t*) xi  at the minimizing t*.

    The bound holds for every t > 0; t* is located by golden section on a
    log bracket around 1/lambda_0.  A failed verdict raises, since the
    inequality is a proved theorem and failure signals an upstream bug.
    """
    lam = sd_nu.lambda0
    t_star, bound = _golden_min_logt(
        lambda t: comparison_bound(profile, lam, t), 1e-4 / lam, 100.0 / lam
    )
    ratio = sd_nu.phi0 / xi
    max_ratio = float(np.max(ratio))
    min_ratio = float(np.min(ratio))
    ok = max_ratio <= bound * (1 + 1e-12)
    if not ok:
        raise TheoremViolationError(
            f"upper comparison failed: max phi0/xi = {max_ratio:.6g} > C = {bound:.6g}"
        )
    return UpperComparison(t_star, bound, max_ratio, min_ratio, ok)


@dataclass
class MoserRow:
    k: int
    j_k: float
    theta_k: float


@dataclass
class LowerComparison:
    t_star: float          # minimizer of M(nu, t)
    bound: float           # M(nu, t*) from the iteration constant
    bound_at_upper_t: float
    display_bound: float   # (AC+1)(C+1), recorded alongside
    max_ratio: float       # max xi/phi0
    ok: bool
    moser: list
    moser_limit_gap: float


def moser_trace(rho, phi0, mass, eps, *, j_stop=1e4):
    """Supremum iteration trace Theta_k = (int rho^{j_k} phi0^2 dm)^{1/j_k},
    j_k = 2 (1+eps)^k, evaluated by shifted log-sum-exp so that exponents
    in the thousands stay finite."""
    log_rho = np.log(rho)
    log_w = np.log(phi0**2 * mass)
    rows = []
    k = 0
    while True:
        j_k = 2.0 * (1.0 + eps) ** k
        z = j_k * log_rho + log_w
        zmax = float(np.max(z))
        log_theta = (zmax + np.log(np.sum(np.exp(z - zmax)))) / j_k
        rows.append(MoserRow(k, j_k, float(np.exp(log_theta))))
        if j_k > j_stop:
            break
        k += 1
    return rows


def lower_comparison(sd_nu, xi, bundle, profile, growth, *, t_upper=None):
    """Reverse verdict  xi <= M(nu, t*) phi_0  plus the supremum-iteration trace.

    M(nu, t) = (A C C(nu,t) + 1)(C(nu,t) + 1) with A, C from the
    ground-state transform bundle; the growth certificate (a, eps) of phi_1
    drives the exponent schedule.  Trace values must stay below the bound
    and converge to max xi/phi_0 once the exponent passes 1e3.
    """
    if growth is None:
        raise ValueError("lower comparison needs the (a, eps) growth certificate")
    _, eps = growth
    lam = sd_nu.lambda0
    A, C = bundle.a_const, bundle.c

    def M_of(t):
        Cnt = comparison_bound(profile, lam, t)
        return (A * C * Cnt + 1.0) * (Cnt + 1.0)

    t_star, bound = _golden_min_logt(M_of, 1e-4 / lam, 100.0 / lam)
    bound_at_upper = M_of(t_upper) if t_upper is not None else bound
    Cnt_star = comparison_bound(profile, lam, t_star)
    display = (A * C + 1.0) * (Cnt_star + 1.0)
    rho = xi / sd_nu.phi0
    max_ratio = float(np.max(rho))
    ok = max_ratio <= bound * (1 + 1e-12)
    if not ok:
        raise TheoremViolationError(
            f"lower comparison failed: max xi/phi0 = {max_ratio:.6g} > M = {bound:.6g}"
        )
    rows = moser_trace(rho, sd_nu.phi0, sd_nu.op.mass, eps)
    for r in rows:
        if r.theta_k > bound * (1 + 1e-12):
            raise TheoremViolationError(
                f"supremum trace exceeded the bound at exponent {r.j_k:.1f}"
            )
    tail = [r for r in rows if r.j_k > 1e3]
    gap = abs(tail[-1].theta_k - max_ratio) / max_ratio if tail else np.inf
    return LowerComparison(
        t_star, bound, bound_at_upper, display, max_ratio, ok, rows, float(gap)
    )


# ---------------------------------------------------------------------------
# scenario-level pipeline


@dataclass
class BaseContext:
    """Shared base-operator data a comparison run keeps fixed."""

    form: object
    sd: object            # base ground pair, lambda1 included
    green: object         # GreenData of the base form
    green_low: object     # GreenLowerBound
    c_h: float
    phi: object
    psi: object
    phi1: object
    seed: int = 0
    c_s_safety: float = 1.25


@dataclass
class OperatorComparison:
    """Both verdicts and every constant for one (possibly perturbed) operator."""

    kappa: float
    lambda0: float
    sd: object
    xi: np.ndarray
    cs: CSEstimate
    dt_xi: DoobTransform
    dt_gs: DoobTransform
    bundle_xi: ConstantsBundle
    bundle_gs: ConstantsBundle
    profile: UCProfile
    upper: UpperComparison
    lower: LowerComparison

    def gamma_constant(self):
        return max(self.upper.bound, self.lower.bound)

    def as_dict(self):
        return {
            "kappa": self.kappa,
            "lambda0": self.lambda0,
            "constants": {
                **self.bundle_gs.as_dict(),
                "A_xi": self.bundle_xi.a_const,
                "Cprime_xi": self.bundle_xi.c_prime,
            },
            "profile": {
                "t_star": self.upper.t_star,
                "beta_half_t": self.upper.bound / np.exp(self.upper.t_star * self.lambda0),
                "C_nu_t": self.upper.bound,
                "M_nu_t": self.lower.bound,
                "M_t_star": self.lower.t_star,
                "M_display": self.lower.display_bound,
            },
            "ratios": {"min": self.upper.min_ratio, "max": self.upper.max_ratio,
                       "max_inverse": self.lower.max_ratio},
            "verdicts": {"upper": self.upper.ok, "lower": self.lower.ok},
            "moser": [{"k": r.k, "j_k": r.j_k, "theta_k": r.theta_k}
                      for r in self.lower.moser],
        }


def evaluate_operator(ctx, op, *, kappa=0.0, lambda0_hint=None, seed_offset=0):
    """Full comparison pipeline for one operator against the shared base."""
    from . import spectral

    rng = np.random.default_rng(ctx.seed + 1000 * seed_offset)
    sd_nu = spectral.ground_state(op, seed=3 + seed_offset)
    xi = solve_xi(op)
    cs = c_s_estimate(
        op, ctx.phi, rng=rng, safety=ctx.c_s_safety, seed_vectors=[sd_nu.phi0]
    )
    dt_xi = solve_doob(op, 0.0, 1.0, sd_nu=sd_nu,
                       base_sd=ctx.sd, c_g=ctx.green_low)
    bundle_xi = constants(
        ctx.sd, ctx.green_low, dt_xi, cs, ctx.c_h, psi=ctx.psi, phi1=ctx.phi1,
        kappa=kappa, lambda0_nu=sd_nu.lambda0, rng=rng,
    )
    profile = make_uc_profile(bundle_xi.a_const, ctx.phi1)
    upper = upper_comparison(sd_nu, xi, profile)
    dt_gs = solve_doob(op, sd_nu.lambda0, 0.0, sd_nu=sd_nu,
                       base_sd=ctx.sd, c_g=ctx.green_low)
    bundle_gs = constants(
        ctx.sd, ctx.green_low, dt_gs, cs, ctx.c_h, psi=ctx.psi, phi1=ctx.phi1,
        kappa=kappa, lambda0_nu=sd_nu.lambda0, rng=rng,
    )
    lower = lower_comparison(sd_nu, xi, bundle_gs, profile,
                             ctx.phi1.growth, t_upper=upper.t_star)
    return OperatorComparison(
        kappa=kappa, lambda0=sd_nu.lambda0, sd=sd_nu, xi=xi, cs=cs,
        dt_xi=dt_xi, dt_gs=dt_gs, bundle_xi=bundle_xi, bundle_gs=bundle_gs,
        profile=profile, upper=upper, lower=lower,
    )


def _richardson(ks, vals):
    """Limit of v(k) = v_inf + c/k from the last two rungs, with an error
    estimate from the previous extrapolant."""
    if len(ks) < 2:
        return vals[-1], np.inf
    k1, k2 = ks[-2], ks[-1]
    v1, v2 = vals[-2], vals[-1]
    limit = (k2 * v2 - k1 * v1) / (k2 - k1)
    if len(ks) >= 3:
        k0, v0 = ks[-3], vals[-3]
        prev = (k1 * v1 - k0 * v0) / (k1 - k0)
        err = abs(limit - prev)
    else:
        err = abs(limit - v2)
    return float(limit), float(err)


@dataclass
class ComparisonReport:
    """Full scenario verdict: constants, profile, ratios, trace, ladder."""

    path: str                       # "direct" or "ladder"
    kappa: float
    result: OperatorComparison | None
    ladder_ks: list
    ladder: list                    # OperatorComparison per rung
    extrapolated: dict

    @property
    def verdicts(self):
        if self.path == "direct":
            return self.result.as_dict()["verdicts"]
        ups = all(r.upper.ok for r in self.ladder)
        lows = all(r.lower.ok for r in self.ladder)
        return {"upper": ups, "lower": lows}

    def gamma_constant(self):
        if self.path == "direct":
            return self.result.gamma_constant()
        return self.extrapolated["Gamma"]

    def as_dict(self):
        out = {"path": self.path, "kappa": self.kappa, "verdicts": self.verdicts}
        if self.path == "direct":
            out.update(self.result.as_dict())
            out["ladder"] = []
        else:
            out["ladder"] = [
                {"k": k, **r.as_dict()} for k, r in zip(self.ladder_ks, self.ladder)
            ]
            out["extrapolated"] = self.extrapolated
        return out


def sharp_comparison(ctx, pf, *, k_max=16, force_ladder=False,
                     critical_threshold=0.95):
    """Two-sided comparison for a perturbed form.

    Subcritical measures run the direct pipeline.  At (near-)criticality, or
    when forced, everything runs along the ladder mu_k = (1 - 1/k) mu and
    the constants are extrapolated in 1/k; each rung is strictly subcritical
    so both verdicts are exact per rung.
    """
    from .errors import SupercriticalMeasureError
    from .perturbation import CRITICAL_TOLERANCE

    kappa = pf.kappa if pf.kappa is not None else 0.0
    if kappa > 1.0 + CRITICAL_TOLERANCE:
        raise SupercriticalMeasureError(
            f"kappa = {kappa:.6f} > 1: no comparison holds for an indefinite form"
        )
    if kappa < critical_threshold and not force_ladder:
        result = evaluate_operator(ctx, pf, kappa=kappa)
        return ComparisonReport("direct", kappa, result, [], [], {})
    ks, rungs = [], []
    k = 2
    while k <= k_max:
        ks.append(k)
        k *= 2
    if k_max not in ks:
        ks.append(k_max)
    for i, k in enumerate(ks):
        rung = pf.scaled(1.0 - 1.0 / k)
        rungs.append(evaluate_operator(ctx, rung, kappa=rung.kappa or 0.0,
                                       seed_offset=i + 1))
    gammas = [r.gamma_constant() for r in rungs]
    lam0s = [r.lambda0 for r in rungs]
    up_ratio = [r.upper.max_ratio for r in rungs]
    lo_ratio = [r.lower.max_ratio for r in rungs]
    g_lim, g_err = _richardson(ks, gammas)
    l_lim, l_err = _richardson(ks, lam0s)
    extrapolated = {
        "Gamma": g_lim, "Gamma_error": g_err,
        "lambda0": l_lim, "lambda0_error": l_err,
        "max_ratio_upper": _richardson(ks, up_ratio)[0],
        "max_ratio_lower": _richardson(ks, lo_ratio)[0],
    }
    return ComparisonReport("ladder", kappa, None, ks, rungs, extrapolated)
