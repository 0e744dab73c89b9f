"""N-function toolkit: evaluation, conjugation, Luxemburg norms, certificates.

An N-function is a convex Phi with Phi(0)=0, Phi(t)/t -> 0 at zero and
Phi(t)/t -> infinity at infinity.  Two kinds are supported:

* ``power``: Phi(t) = coef * t**p with p > 1 (closed forms throughout),
* ``table``: monotone convex samples, interpolated linearly in log-log
  coordinates and extrapolated with the end-segment exponents.

All predicates are decided numerically on probe grids; nothing is symbolic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidNFunctionError, UnboundedInverseError

BISECT_RTOL = 1e-10
BISECT_MAXITER = 200
#: 64 log-spaced probes covering both asymptotic regimes of the definitions.
PROBE_GRID = np.logspace(-6.0, 6.0, 64)


def _bisect(fn, target, lo, hi, *, rtol=BISECT_RTOL, maxiter=BISECT_MAXITER):
    """Root of fn(t) = target on [lo, hi], fn increasing."""
    flo, fhi = fn(lo) - target, fn(hi) - target
    if flo > 0 or fhi < 0:
        raise ValueError("bisection bracket does not straddle the target")
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        fm = fn(mid) - target
        if fm <= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * max(abs(mid), 1e-300):
            break
    return 0.5 * (lo + hi)


class NFunction:
    """Evaluator for an N-function, with a closed-form inverse when power-law."""

    def __init__(self, kind, *, p=None, coef=None, knots_t=None, knots_y=None):
        self.kind = kind
        self.p = p
        self.coef = coef
        self._log_t = None
        self._log_y = None
        if kind == "power":
            if p is None or p <= 1:
                raise InvalidNFunctionError("power kind needs exponent p > 1")
            if coef is None:
                self.coef = 1.0 / p
            if self.coef <= 0:
                raise InvalidNFunctionError("power coefficient must be positive")
        elif kind == "table":
            t = np.asarray(knots_t, float)
            y = np.asarray(knots_y, float)
            self._validate_table(t, y)
            self._log_t = np.log(t)
            self._log_y = np.log(y)
        else:
            raise InvalidNFunctionError(f"unknown N-function kind {kind!r}")

    @classmethod
    def power(cls, p, coef=None):
        return cls("power", p=p, coef=coef)

    @classmethod
    def from_table(cls, points):
        pts = np.asarray(points, float)
        return cls("table", knots_t=pts[:, 0], knots_y=pts[:, 1])

    @staticmethod
    def _validate_table(t, y):
        if t.ndim != 1 or t.size < 3:
            raise InvalidNFunctionError("table needs at least 3 sample points")
        if np.any(t <= 0) or np.any(y <= 0):
            raise InvalidNFunctionError("table samples must have t > 0, Phi(t) > 0")
        if np.any(np.diff(t) <= 0) or np.any(np.diff(y) <= 0):
            raise InvalidNFunctionError("table samples must be strictly increasing")
        # convexity on the sampled grid: chord slopes nondecreasing
        # (tolerance absorbs interpolation wiggle when tables are derived)
        slopes = np.diff(y) / np.diff(t)
        if np.any(np.diff(slopes) < -1e-9 * slopes[1:]):
            raise InvalidNFunctionError("table samples are not convex")
        # end-segment log-log exponents decide the N-function limits
        p_left = (np.log(y[1]) - np.log(y[0])) / (np.log(t[1]) - np.log(t[0]))
        p_right = (np.log(y[-1]) - np.log(y[-2])) / (np.log(t[-1]) - np.log(t[-2]))
        if p_left <= 1.0:
            raise InvalidNFunctionError("Phi(t)/t does not vanish at zero")
        if p_right <= 1.0:
            raise InvalidNFunctionError("Phi(t)/t does not diverge at infinity")

    def __call__(self, t):
        arr = np.atleast_1d(np.asarray(t, dtype=float))
        if self.kind == "power":
            out = self.coef * np.power(arr, self.p)
        else:
            out = np.zeros_like(arr)
            pos = arr > 0
            lt = np.log(arr[pos])
            logs = np.interp(lt, self._log_t, self._log_y)
            # np.interp clamps; redo the two end segments as true extrapolation
            sl_lo = (self._log_y[1] - self._log_y[0]) / (self._log_t[1] - self._log_t[0])
            sl_hi = (self._log_y[-1] - self._log_y[-2]) / (self._log_t[-1] - self._log_t[-2])
            lo_mask = lt < self._log_t[0]
            hi_mask = lt > self._log_t[-1]
            logs[lo_mask] = self._log_y[0] + sl_lo * (lt[lo_mask] - self._log_t[0])
            logs[hi_mask] = self._log_y[-1] + sl_hi * (lt[hi_mask] - self._log_t[-1])
            out[pos] = np.exp(logs)
        if np.ndim(t) == 0:
            return float(out[0])
        return out

    @property
    def has_closed_inverse(self):
        return self.kind == "power"

    def inverse(self, y):
        """Inverse evaluator.

        Power kind: closed form.  Table kind: the log-log interpolant is
        piecewise power, so swapping the knot roles inverts it exactly.
        """
        if self.kind == "power":
            y = np.asarray(y, dtype=float)
            out = np.power(y / self.coef, 1.0 / self.p)
            return float(out) if out.ndim == 0 else out
        arr = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.zeros_like(arr)
        pos = arr > 0
        ly = np.log(arr[pos])
        logs = np.interp(ly, self._log_y, self._log_t)
        sl_lo = (self._log_t[1] - self._log_t[0]) / (self._log_y[1] - self._log_y[0])
        sl_hi = (self._log_t[-1] - self._log_t[-2]) / (self._log_y[-1] - self._log_y[-2])
        lo_mask = ly < self._log_y[0]
        hi_mask = ly > self._log_y[-1]
        logs[lo_mask] = self._log_t[0] + sl_lo * (ly[lo_mask] - self._log_y[0])
        logs[hi_mask] = self._log_t[-1] + sl_hi * (ly[hi_mask] - self._log_y[-1])
        out[pos] = np.exp(logs)
        if np.ndim(y) == 0:
            return float(out[0])
        return out

    def check_limits(self, grid=PROBE_GRID):
        """Assert Phi(t)/t -> 0 at 0 and -> infinity at infinity on the probes."""
        vals = self(grid) / grid
        if not (vals[0] < 1e-3 * vals[len(grid) // 2] or vals[0] < 1e-4):
            raise InvalidNFunctionError("Phi(t)/t does not vanish toward zero")
        if not (vals[-1] > 1e3 * vals[len(grid) // 2] or vals[-1] > 1e4):
            raise InvalidNFunctionError("Phi(t)/t does not diverge toward infinity")
        if np.any(np.diff(self(grid)) <= 0):
            raise InvalidNFunctionError("Phi is not strictly increasing on the probes")
        return True


def invert(fn, y, *, rtol=BISECT_RTOL, atol=1e-300):
    """t with |fn(t) - y| <= rtol * max(y, atol), fn increasing with fn(0)=0.

    Uses the closed form for power-law inputs; otherwise expands a bracket
    and bisects.  Raises UnboundedInverseError if fn stays below y.
    """
    if y < 0:
        raise ValueError("invert requires y >= 0")
    if y == 0:
        return 0.0
    if getattr(fn, "has_closed_inverse", False):
        return fn.inverse(y)
    hi = 1.0
    for _ in range(2000):
        if fn(hi) >= y:
            break
        hi *= 2.0
        if hi > 1e290:
            raise UnboundedInverseError(f"evaluator never reaches {y!r}")
    else:
        raise UnboundedInverseError(f"evaluator never reaches {y!r}")
    lo = hi / 2.0 if hi > 1.0 else 0.0
    while lo > 0 and fn(lo) > y:
        lo /= 2.0
    return _bisect(fn, y, lo, hi, rtol=rtol)


def _golden_max(obj, a, b, *, iters=120, rtol=1e-13):
    """Golden-section maximizer of a unimodal function on [a, b]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = obj(c), obj(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = obj(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = obj(d)
        if b - a <= rtol * max(abs(b), 1e-300):
            break
    t_star = 0.5 * (a + b)
    return t_star, obj(t_star)


class ComplementaryFunction:
    """Legendre conjugate Psi(r) = sup_t (t r - Phi(t)) of an N-function.

    Power-law inputs conjugate in closed form.  Tabulated inputs are
    maximized once per knot of a wide log grid at construction; evaluation
    and inversion then run on the resulting log-log interpolant.
    """

    NUMERIC_GRID = np.geomspace(1e-9, 1e9, 241)

    def __init__(self, phi):
        self.phi = phi
        self._table = None
        if phi.kind == "power":
            p, c = phi.p, phi.coef
            self.kind = "power"
            self.q = p / (p - 1.0)
            # conjugate of c*t^p is r^q / (q * (c*p)^(q/p))
            self.coef = 1.0 / (self.q * (c * p) ** (self.q / p))
        else:
            self.kind = "numeric"
            self.q = None
            self.coef = None
            vals = np.array([self._maximize(r) for r in self.NUMERIC_GRID])
            if np.any(vals <= 0) or np.any(np.diff(vals) <= 0):
                raise InvalidNFunctionError("conjugate not increasing; input not convex?")
            self._table = NFunction("table", knots_t=self.NUMERIC_GRID, knots_y=vals)

    def _maximize(self, r):
        # concave objective t -> t*r - Phi(t); maximizer where Phi'(t) = r
        obj = lambda t: t * r - self.phi(t)  # noqa: E731
        hi = 1.0
        for _ in range(1200):
            # expand until the chord slope of Phi on [hi, 2hi] exceeds r
            if self.phi(2 * hi) - self.phi(hi) >= r * hi:
                break
            hi *= 2.0
        for _ in range(1200):
            # shrink so the bracket is proportional to the maximizer
            if hi < 1e-290 or self.phi(hi) - self.phi(hi / 2) <= r * hi / 2:
                break
            hi /= 2.0
        val = _golden_max(obj, 0.0, 2 * hi)[1]
        if val < 0:
            raise InvalidNFunctionError("conjugate came out negative; input not convex?")
        return val

    def __call__(self, r):
        if self.kind == "power":
            r = np.asarray(r, dtype=float)
            out = self.coef * np.power(r, self.q)
            return float(out) if out.ndim == 0 else out
        return self._table(r)

    @property
    def has_closed_inverse(self):
        return self.kind == "power"

    def inverse(self, y):
        if self.kind == "power":
            y = np.asarray(y, dtype=float)
            out = np.power(y / self.coef, 1.0 / self.q)
            return float(out) if out.ndim == 0 else out
        return self._table.inverse(y)


def complementary(phi, *, check=True):
    """Complementary function of ``phi``; Young's inequality is spot-checked.

    The check runs on a 20x20 probe grid; a failure indicates a non-convex
    input and raises InvalidNFunctionError.
    """
    psi = ComplementaryFunction(phi)
    if check:
        ts = np.logspace(-3, 3, 20)
        rs = np.logspace(-3, 3, 20)
        phit = phi(ts)
        psir = np.array([psi(r) for r in rs])
        lhs = np.outer(ts, rs)
        rhs = phit[:, None] + psir[None, :]
        if np.any(lhs > rhs * (1 + 1e-7) + 1e-12):
            raise InvalidNFunctionError("Young's inequality failed on the probe grid")
    return psi


def lambda_profile(fn):
    """The profile  Lambda(s) = 1 / (s * fn^{-1}(1/s))  for a monotone evaluator."""

    def Lambda(s):
        return 1.0 / (s * fn.inverse(1.0 / s))

    return Lambda


@dataclass
class AdmissibilityCertificate:
    admissible: bool
    integral: float | None
    deltas: list = field(default_factory=list)
    values: list = field(default_factory=list)
    message: str = ""

    def __bool__(self):
        return self.admissible


def is_admissible(fn, *, alpha=1.0, rtol=1e-6, max_halvings=40, shrink=16.0):
    """Convergence certificate for  int_0^alpha ds / (s * Lambda(s)).

    With Lambda based on ``fn`` the integrand is fn^{-1}(1/s).  The integral
    is evaluated on truncated intervals [delta_k, alpha] with delta_k =
    alpha / shrink^k; geometric decay of the increments (Richardson-style
    tail model) certifies convergence, a ratio creeping to one certifies
    divergence.
    """

    def integrand(s):
        return fn.inverse(1.0 / s)

    def panel(a, b):
        xs = np.geomspace(a, b, 65)
        ys = np.asarray(integrand(xs))
        return float(np.trapezoid(ys, xs))

    deltas, values = [], []
    total = 0.0
    prev_delta = alpha
    increments = []
    for k in range(1, max_halvings + 1):
        delta = alpha / shrink**k
        total += panel(delta, prev_delta)
        prev_delta = delta
        deltas.append(delta)
        values.append(total)
        if k >= 3:
            d1 = values[-2] - values[-3]
            d2 = values[-1] - values[-2]
            if d1 <= 0:
                return AdmissibilityCertificate(True, total, deltas, values, "flat tail")
            ratio = d2 / d1
            if ratio < 0.9:
                tail = d2 * ratio / (1.0 - ratio)
                extrapolated = total + tail
                if tail <= rtol * max(extrapolated, 1e-300):
                    return AdmissibilityCertificate(
                        True, extrapolated, deltas, values, f"geometric tail, ratio {ratio:.3f}"
                    )
            elif k >= 6:
                return AdmissibilityCertificate(
                    False, None, deltas, values, f"increment ratio {ratio:.3f} -> divergent"
                )
    return AdmissibilityCertificate(
        False, None, deltas, values, "no geometric decay after maximum refinement"
    )


@dataclass
class Nabla2Certificate:
    satisfied: bool
    l: float | None = None
    t0: float | None = None

    def __bool__(self):
        return self.satisfied


def is_nabla2(phi, *, ls=(2.0, 4.0, 8.0, 16.0), t0_grid=None):
    """Search for l, t0 with  Phi(t) <= Phi(l t) / (2 l)  for probe t >= t0."""
    if t0_grid is None:
        t0_grid = np.logspace(-4, 3, 15)
    probes = PROBE_GRID
    for l in ls:
        for t0 in t0_grid:
            ts = probes[probes >= t0]
            if ts.size == 0:
                continue
            if np.all(phi(ts) <= phi(l * ts) / (2.0 * l) * (1 + 1e-12)):
                return Nabla2Certificate(True, l, float(t0))
    return Nabla2Certificate(False)


@dataclass
class DerivedPhi1:
    """phi_1(t) = t * Psi^{-1}(t) with its profile and growth certificate."""

    phi: NFunction
    psi: ComplementaryFunction
    evaluator: object
    growth: tuple | None  # (a, eps) with phi_1(t) >= a * t^(1+eps) when known
    admissibility: AdmissibilityCertificate

    def __call__(self, t):
        return self.evaluator(t)

    def inverse(self, y):
        return self.evaluator.inverse(y)

    @property
    def Lambda(self):
        return lambda_profile(self.evaluator)


def build_phi1(phi, *, psi=None):
    """Derived function phi_1 from Phi; closed form for power-law inputs.

    For Phi = coef * t^p the conjugate is a q-power and
    phi_1(t) = a * t^(1+eps) with eps = 1/q; the pair (a, eps) is attached
    as a growth certificate.  Admissibility of phi_1 is always certified
    numerically via is_admissible.
    """
    if psi is None:
        psi = complementary(phi)
    if psi.kind == "power":
        q, cq = psi.q, psi.coef
        eps = 1.0 / q
        a = (1.0 / cq) ** (1.0 / q)
        evaluator = NFunction.power(1.0 + eps, coef=a)
        growth = (a, eps)
    else:
        grid = ComplementaryFunction.NUMERIC_GRID
        vals = grid * psi.inverse(grid)
        evaluator = NFunction("table", knots_t=grid, knots_y=vals)
        growth = None
    cert = is_admissible(evaluator)
    return DerivedPhi1(phi, psi, evaluator, growth, cert)


def _power_params(fn):
    """(exponent, coefficient) when fn is a pure power, else None."""
    if getattr(fn, "kind", None) != "power":
        return None
    if hasattr(fn, "p") and fn.p is not None:
        return fn.p, fn.coef
    if hasattr(fn, "q") and fn.q is not None:
        return fn.q, fn.coef
    return None


class LuxemburgNorm:
    """Luxemburg norm  ||f|| = inf{ lam > 0 : sum_i w_i Phi(|f_i|/lam) <= 1 }."""

    def __init__(self, phi, weights):
        self.phi = phi
        self.weights = np.asarray(weights, dtype=float)
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if self.weights.sum() <= 0:
            raise ValueError("total weight must be positive")

    def __call__(self, f):
        return luxemburg_norm(self.phi, self.weights, f)


def luxemburg_norm(phi, weights, f, *, rtol=BISECT_RTOL):
    """Luxemburg norm of a node function on a discrete measure space.

    Power-law Phi uses the closed form lam = (sum_i w_i coef |f_i|^p)^{1/p};
    everything else bisects the decreasing map
    lam -> sum_i w_i Phi(|f_i|/lam) to relative tolerance ``rtol``.
    """
    w = np.asarray(weights, dtype=float)
    f = np.abs(np.asarray(f, dtype=float))
    support = w > 0
    if not np.any(f[support] > 0):
        return 0.0
    params = _power_params(phi)
    if params is not None:
        p, coef = params
        return float((coef * np.sum(w * f**p)) ** (1.0 / p))

    def mass(lam):
        return float(np.sum(w[support] * phi(f[support] / lam)))

    hi = max(1e-300, float(np.max(f[support])))
    for _ in range(2000):
        if mass(hi) <= 1.0:
            break
        hi *= 2.0
    lo = hi
    while mass(lo) <= 1.0 and lo > 1e-280:
        lo /= 2.0
    for _ in range(BISECT_MAXITER):
        mid = 0.5 * (lo + hi)
        if mass(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= rtol * hi:
            break
    return hi


def norm_one_psi(psi, weights):
    """||1||_{L^Psi} on a discrete measure space: 1 / Psi^{-1}(1/m(X))."""
    total = float(np.sum(np.asarray(weights, dtype=float)))
    if total <= 0:
        raise ValueError("total weight must be positive")
    return 1.0 / psi.inverse(1.0 / total)
