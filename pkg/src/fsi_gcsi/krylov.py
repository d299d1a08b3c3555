"""Krylov solvers and the Chebyshev smoother.

All solvers take the operator and preconditioner as callables on dense
vectors, so the same code runs against matrix-free stage operators,
compiled cell-local operators, and dense test matrices. Tolerances are
absolute Euclidean residual norms throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

POWER_ITERATIONS = 15
POWER_SEED = 20260301


class KrylovBreakdownError(RuntimeError):
    """Raised when BiCGStab breaks down twice on the same system."""


class SolverFailure(RuntimeError):
    """A solve missed its tolerance; carries the residual history."""

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


@dataclass
class KrylovConfig:
    """Outer-solver controls; tol is an absolute Euclidean residual norm."""

    tol: float = 1e-6
    maxiter: int = 500
    restart: int = 60

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError("tolerance must be positive")


@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)
    converged: bool = True

    def __iter__(self):
        # unpack as (solution, iterations, residuals)
        yield self.x
        yield self.iterations
        yield self.residuals


def _identity(x):
    return x


# ---------------------------------------------------------------------------
# Chebyshev smoother

def chebyshev_apply(apply_op, diag_inv: np.ndarray, k: int, rhs: np.ndarray,
                    lam_min: float, lam_max: float,
                    imag_extent: float = 0.0) -> np.ndarray:
    """k Chebyshev iterations on diag-preconditioned op, zero initial guess.

    (lam_min, lam_max) bracket the spectrum of diag^-1 op. A degenerate
    interval (lam_min == lam_max) makes the first step exact for operators
    whose preconditioned spectrum is that single point.

    For nonsymmetric operators imag_extent > 0 switches to the elliptic
    variant: the residual polynomial is kept small on the ellipse centered
    on the interval with that imaginary semi-axis. The recurrence only
    needs the squared focal distance, which may go negative; it reduces to
    the real-interval iteration at imag_extent = 0.
    """
    theta = 0.5 * (lam_max + lam_min)
    delta = 0.5 * (lam_max - lam_min)
    x = np.zeros_like(rhs)
    r = rhs.copy()
    d = (diag_inv * r) / theta
    if imag_extent > 0.0:
        delta2 = delta * delta - imag_extent * imag_extent
        a = 1.0 / theta
        for i in range(k):
            x += d
            if i == k - 1:
                break
            r -= apply_op(d)
            a_new = 1.0 / (2.0 * theta - delta2 * a)
            d = (delta2 * a_new * a) * d + (2.0 * a_new) * (diag_inv * r)
            a = a_new
        return x
    if delta == 0.0:
        # degenerate interval: Richardson with the exact single-point step
        for _ in range(k):
            x += d
            r -= apply_op(d)
            d = (diag_inv * r) / theta
        return x
    sigma1 = theta / delta
    rho = 1.0 / sigma1
    for i in range(k):
        x += d
        if i == k - 1:
            break
        r -= apply_op(d)
        rho_new = 1.0 / (2.0 * sigma1 - rho)
        d = rho_new * rho * d + (2.0 * rho_new / delta) * (diag_inv * r)
        rho = rho_new
    return x


def estimate_eigen_range(apply_op, diag_inv: np.ndarray,
                         iterations: int = POWER_ITERATIONS,
                         seed: int = POWER_SEED) -> tuple[float, float]:
    """(lam_max/8, lam_max) for diag^-1 op, lam_max by power iteration.

    Deterministic for a fixed seed. Callers widen the returned upper bound
    by the 1.1 safety factor when building a smoothing interval.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(len(diag_inv))
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(iterations):
        w = diag_inv * apply_op(v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0, 0.0
        v = w / lam
    return lam / 8.0, lam


def smoothing_interval(apply_op, diag_inv: np.ndarray,
                       alpha: float = 8.0) -> tuple[float, float]:
    """Chebyshev interval [lam_max/alpha, 1.1 lam_max] from the power estimate."""
    lo, hi = estimate_eigen_range(apply_op, diag_inv)
    return hi / alpha, 1.1 * hi


def arnoldi_spectrum(apply_op, diag_inv: np.ndarray, steps: int = 20,
                     seed: int = POWER_SEED) -> np.ndarray:
    """Ritz values of diag^-1 op from a short Arnoldi run (deterministic)."""
    n = len(diag_inv)
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    basis = [q]
    m = min(steps, n)
    h = np.zeros((m + 1, m))
    for j in range(m):
        w = diag_inv * apply_op(basis[j])
        for i in range(j + 1):
            h[i, j] = basis[i] @ w
            w -= h[i, j] * basis[i]
        h[j + 1, j] = np.linalg.norm(w)
        if h[j + 1, j] < 1e-14:
            m = j + 1
            break
        basis.append(w / h[j + 1, j])
    return np.linalg.eigvals(h[:m, :m])


def ellipse_interval(apply_op, diag_inv: np.ndarray, alpha: float = 8.0,
                     steps: int = 20):
    """Smoothing region for a possibly nonsymmetric diag^-1 op.

    Returns ((lam_min, lam_max), imag_extent) from short-Arnoldi Ritz
    values: real range [re_max/alpha, 1.1 re_max] as in the symmetric
    convention, with the imaginary semi-axis widened by 1.5 because Ritz
    values approach the spectrum's outliers from inside.
    """
    ritz = arnoldi_spectrum(apply_op, diag_inv, steps)
    re_max = float(ritz.real.max())
    if re_max <= 0.0:
        re_max = float(np.abs(ritz).max())
    b = 1.5 * float(np.abs(ritz.imag).max())
    if b <= 1e-12 * re_max:
        b = 0.0
    return (re_max / alpha, 1.1 * re_max), b


# ---------------------------------------------------------------------------
# flexible GMRES

def fgmres(apply_op, precond, rhs: np.ndarray,
           config: KrylovConfig | None = None,
           x0: np.ndarray | None = None) -> KrylovResult:
    """Right-preconditioned flexible GMRES with restarts.

    The preconditioner may change between iterations (V-cycles with inner
    Krylov loops); the Z basis stores each preconditioned direction.
    """
    cfg = config or KrylovConfig()
    precond = precond or _identity
    x = np.zeros_like(rhs) if x0 is None else x0.astype(float, copy=True)
    r = rhs - apply_op(x)
    beta = float(np.linalg.norm(r))
    residuals = [beta]
    total = 0
    while total < cfg.maxiter:
        if residuals[-1] < cfg.tol:
            return KrylovResult(x, total, residuals, True)
        m = min(cfg.restart, cfg.maxiter - total)
        V = np.zeros((m + 1, len(rhs)))
        Z = np.zeros((m, len(rhs)))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j = -1
        for j in range(m):
            Z[j] = precond(V[j])
            # copy: Gram-Schmidt mutates w, operators may return aliases
            w = np.array(apply_op(Z[j]), dtype=float)
            for i in range(j + 1):                 # modified Gram-Schmidt
                H[i, j] = w @ V[i]
                w -= H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            if H[j + 1, j] > 0.0:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):                     # apply stored rotations
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            rho = np.hypot(H[j, j], H[j + 1, j])
            if rho == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / rho, H[j + 1, j] / rho
            H[j, j] = rho
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            residuals.append(abs(g[j + 1]))
            if residuals[-1] < cfg.tol or total >= cfg.maxiter:
                break
        # solve the triangular system for the inner correction
        k = j + 1
        y = np.zeros(k)
        for i in range(k - 1, -1, -1):
            y[i] = (g[i] - H[i, i + 1:k] @ y[i + 1:k]) / H[i, i]
        x = x + Z[:k].T @ y
        r = rhs - apply_op(x)
        beta = float(np.linalg.norm(r))
        residuals[-1] = beta                        # true residual at restart
        if beta < cfg.tol:
            return KrylovResult(x, total, residuals, True)
    return KrylovResult(x, total, residuals, False)


# ---------------------------------------------------------------------------
# CG / MINRES / BiCGStab

def cg(apply_op, precond, rhs: np.ndarray,
       config: KrylovConfig | None = None,
       x0: np.ndarray | None = None) -> KrylovResult:
    cfg = config or KrylovConfig()
    precond = precond or _identity
    x = np.zeros_like(rhs) if x0 is None else x0.astype(float, copy=True)
    r = rhs - apply_op(x)
    residuals = [float(np.linalg.norm(r))]
    if residuals[0] < cfg.tol:
        return KrylovResult(x, 0, residuals, True)
    z = precond(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, cfg.maxiter + 1):
        Ap = apply_op(p)
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        residuals.append(float(np.linalg.norm(r)))
        if residuals[-1] < cfg.tol:
            return KrylovResult(x, it, residuals, True)
        z = precond(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return KrylovResult(x, cfg.maxiter, residuals, False)


def minres(apply_op, precond, rhs: np.ndarray,
           config: KrylovConfig | None = None,
           iterations: int | None = None) -> KrylovResult:
    """Preconditioned MINRES; fixed-iteration mode when `iterations` is set.

    The preconditioner must be symmetric positive definite. In fixed mode
    no convergence test is made, which keeps the operation linear in rhs.
    """
    cfg = config or KrylovConfig()
    precond = precond or _identity
    n = len(rhs)
    maxit = iterations if iterations is not None else cfg.maxiter
    check = iterations is None
    x = np.zeros(n)
    r1 = rhs.copy()
    y = precond(r1)
    beta1 = float(r1 @ y)
    if beta1 <= 0.0:
        return KrylovResult(x, 0, [0.0], True)
    beta1 = np.sqrt(beta1)
    oldb, beta = 0.0, beta1
    dbar, epsln, phibar = 0.0, 0.0, beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1
    residuals = [beta1]
    it = 0
    for it in range(1, maxit + 1):
        v = y / beta
        y = np.array(apply_op(v), dtype=float)
        if it >= 2:
            y -= (beta / oldb) * r1
        alfa = float(v @ y)
        y -= (alfa / beta) * r2
        r1 = r2
        r2 = y
        y = precond(r2)
        oldb = beta
        beta2 = float(r2 @ y)
        beta = np.sqrt(max(beta2, 0.0))
        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), np.finfo(float).tiny)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar
        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x += phi * w
        residuals.append(abs(phibar))
        if check and residuals[-1] < cfg.tol:
            return KrylovResult(x, it, residuals, True)
        if beta == 0.0:
            break
    return KrylovResult(x, it, residuals, not check or residuals[-1] < cfg.tol)


def bicgstab(apply_op, precond, rhs: np.ndarray,
             config: KrylovConfig | None = None,
             iterations: int | None = None) -> KrylovResult:
    """Preconditioned BiCGStab; fixed-iteration mode when `iterations` is set.

    On a rho-breakdown the shadow residual is reset once; a second
    breakdown raises KrylovBreakdownError.
    """
    cfg = config or KrylovConfig()
    precond = precond or _identity
    maxit = iterations if iterations is not None else cfg.maxiter
    check = iterations is None
    x = np.zeros_like(rhs)
    r = rhs.copy()
    residuals = [float(np.linalg.norm(r))]
    if residuals[0] == 0.0 or (check and residuals[0] < cfg.tol):
        return KrylovResult(x, 0, residuals, True)
    rhat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(rhs)
    p = np.zeros_like(rhs)
    restarted = False
    scale = max(residuals[0], 1.0)
    it = 0
    for it in range(1, maxit + 1):
        rho_new = float(rhat @ r)
        if abs(rho_new) < 1e-300 * scale:
            if restarted:
                raise KrylovBreakdownError("bicgstab rho breakdown")
            rhat = r.copy()
            rho_new = float(rhat @ r)
            restarted = True
            if rho_new == 0.0:
                break
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        phat = precond(p)
        v = apply_op(phat)
        alpha = rho / float(rhat @ v)
        s = r - alpha * v
        if check and np.linalg.norm(s) < cfg.tol:
            x += alpha * phat
            residuals.append(float(np.linalg.norm(s)))
            return KrylovResult(x, it, residuals, True)
        shat = precond(s)
        t = apply_op(shat)
        tt = float(t @ t)
        omega = float(t @ s) / tt if tt > 0.0 else 0.0
        x += alpha * phat + omega * shat
        r = s - omega * t
        residuals.append(float(np.linalg.norm(r)))
        if check and residuals[-1] < cfg.tol:
            return KrylovResult(x, it, residuals, True)
        if omega == 0.0:
            break
    return KrylovResult(x, it, residuals, not check or residuals[-1] < cfg.tol)
