"""Iterative kernels shared by the spectral and perturbation modules.

Everything here works on plain numpy arrays and scipy sparse matrices.
The solvers are deterministic: fixed starting vectors or an explicit rng.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceFailureError, NearSingularError

CG_RTOL = 1e-12


def jacobi_preconditioner(A):
    """Inverse-diagonal preconditioner for a sparse SPD matrix."""
    d = A.diagonal().astype(float)
    if np.any(d <= 0):
        return None
    inv = 1.0 / d
    return lambda r: inv * r


def cg(matvec, b, *, rtol=CG_RTOL, atol=0.0, maxiter=None, precond=None, x0=None):
    """Preconditioned conjugate gradient for an SPD operator.

    `matvec` may be a callable or a scipy sparse matrix.  Raises
    NearSingularError on a negative-curvature direction (operator not SPD)
    and ConvergenceFailureError if maxiter is exhausted.
    """
    if not callable(matvec):
        A = matvec
        matvec = lambda v: A @ v  # noqa: E731
    b = np.asarray(b, dtype=float)
    n = b.size
    if maxiter is None:
        maxiter = max(20 * n, 2000)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - matvec(x)
    norm_b = np.linalg.norm(b)
    target = max(rtol * norm_b, atol)
    if norm_b == 0.0:
        return np.zeros(n)
    if np.linalg.norm(r) <= target:
        return x
    z = r if precond is None else precond(r)
    p = z.copy()
    rz = float(r @ z)
    for _ in range(maxiter):
        Ap = matvec(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise NearSingularError(
                "conjugate gradient met non-positive curvature; "
                "operator is not positive definite"
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= target:
            return x
        z = r if precond is None else precond(r)
        rz_next = float(r @ z)
        p = z + (rz_next / rz) * p
        rz = rz_next
    raise ConvergenceFailureError(
        f"conjugate gradient did not reach rtol={rtol:.1e} in {maxiter} iterations"
    )


def solve_spd(A, b, *, rtol=CG_RTOL, x0=None):
    """CG solve of a sparse SPD system with Jacobi preconditioning."""
    return cg(A, b, rtol=rtol, precond=jacobi_preconditioner(A), x0=x0)


def _start_vector(n, seed=7):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v += 1.0  # bias toward the positive cone; top eigenvectors here are signed
    return v / np.linalg.norm(v)


def generalized_max_eigenvalue(S, weights, *, rtol=1e-8, maxiter=400, seed=7):
    """Largest kappa with  diag(weights) v = kappa S v,  S sparse SPD.

    Inverse-free power iteration on S^{-1} diag(weights) with CG inner
    solves; once the Rayleigh quotient settles, switches to shifted inverse
    iteration on (sigma S - diag(weights)) to resolve clustered tops.
    Convergence is declared when the algebraic residual
    ||W v - kappa S v|| <= rtol ||W v||.
    Returns (kappa, eigenvector, relative_residual).
    """
    w = np.asarray(weights, dtype=float)
    if np.all(w == 0):
        raise ValueError("weight vector is identically zero")
    # normalizing the weights keeps kappa(c*mu) = c*kappa(mu) exact for
    # binary scalings and well-conditioned otherwise
    scale = float(np.max(w))
    w = w / scale
    n = w.size
    precond = jacobi_preconditioner(S)
    v = _start_vector(n, seed)

    def residual_of(v):
        Wv = w * v
        Sv = S @ v
        kappa = float(v @ Wv) / float(v @ Sv)
        res = np.linalg.norm(Wv - kappa * Sv) / max(np.linalg.norm(Wv), 1e-300)
        return kappa, res

    kappa, res = residual_of(v)
    best = (kappa, res, v.copy())
    x_warm = None
    for it in range(maxiter):
        if res <= rtol:
            return kappa * scale, best[2], res
        if res > 1e-3 and it < 40:
            # plain power step on S^{-1} W
            v = cg(S, w * v, rtol=1e-10, precond=precond, x0=x_warm)
        else:
            # shifted inverse iteration: (sigma S - W)^{-1} S v targets the top
            sigma = kappa * (1.0 + max(4.0 * res, 1e-12))
            shifted = lambda u: sigma * (S @ u) - w * u  # noqa: E731
            try:
                v = cg(shifted, S @ v, rtol=1e-10, maxiter=40 * n)
            except NearSingularError:
                # shift fell below the top eigenvalue; back off and retry
                sigma = kappa * (1.0 + max(40.0 * res, 1e-10))
                shifted = lambda u: sigma * (S @ u) - w * u  # noqa: E731
                v = cg(shifted, S @ v, rtol=1e-10, maxiter=40 * n)
        x_warm = v.copy()
        v = v / np.linalg.norm(v)
        kappa, res = residual_of(v)
        if res < best[1]:
            best = (kappa, res, v.copy())
    kappa, res, v = best
    if res <= rtol:
        return kappa * scale, v, res
    raise ConvergenceFailureError(
        f"generalized eigenvalue iteration stalled at residual {res:.2e}",
        bracket=(kappa * scale * (1 - res), kappa * scale * (1 + res)),
    )


def symmetric_operator_norm(apply_op, n, *, rtol=1e-6, atol=0.0, maxiter=3000,
                            seed=11):
    """Spectral norm of a symmetric operator given by its action.

    Power iteration on the operator itself; the norm of a symmetric
    operator equals its largest absolute eigenvalue.  Estimates at or
    below ``atol`` are accepted immediately (a near-zero operator never
    settles in relative terms).
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est_prev = None
    for it in range(maxiter):
        u = apply_op(v)
        norm_u = np.linalg.norm(u)
        if norm_u <= max(atol, 1e-300):
            return norm_u
        v = u / norm_u
        if est_prev is not None and abs(norm_u - est_prev) <= rtol * norm_u and it >= 5:
            return norm_u
        est_prev = norm_u
    raise ConvergenceFailureError(
        f"operator-norm power iteration did not settle to rtol={rtol:.1e}"
    )
