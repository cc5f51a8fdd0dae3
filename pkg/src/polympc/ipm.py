"""Primal-dual interior-point solver for smooth nonlinear programs.

Solves

    min f(z)  s.t.  cE(z) = 0,  cI(z) >= 0,  lb <= z <= ub

with slack variables on the general inequalities (cI(z) - s = 0, s > 0) and
direct log-barrier terms on the simple bounds. Per iteration the primal-dual
Newton system is condensed onto the (dz, dyE) block:

    [A   JE'] [dz ]   [b1 ]        A = W + Sigma_z + JI' Sigma_s JI + delta*I
    [JE  0  ] [dyE] = [-cE]

A is brought to positive definiteness by an escalating delta*I Cholesky test
(with JE of full row rank this fixes the KKT inertia), then the system is
solved by Schur complement on the equality block. Globalization is an
l1-penalty merit line search with fraction-to-the-boundary step clipping; the
merit value never increases across an accepted step, which the closed-loop
tests rely on. The barrier parameter shrinks by a fixed factor whenever the
scaled KKT error falls below kappa_eps * mu. Objectives with a large gradient
at the start are scaled down once so the barrier stays effective against the
cost push (convergence is then tested on the scaled problem).

Problems provide:
    n, lb, ub
    eval_fc(z)     -> (f, cE, cI)                 cheap, used in line search
    eval_derivs(z) -> (f, grad, cE, JE, cI, JI)   JE/JI sparse or dense
    eval_hess(z, yE, yI) -> W                     Hessian of f + yE'cE - yI'cI
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg import cho_solve


class SolveStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    DIVERGED = "diverged"


@dataclass
class SolverOptions:
    tol: float = 1e-6
    max_iter: int = 500
    mu_init: float = 0.1
    mu_shrink: float = 0.2      # barrier reduction factor per outer loop
    tau_min: float = 0.99       # fraction-to-the-boundary
    slack_floor: float = 1e-4   # slack initialization floor
    bound_push: float = 1e-4
    kappa_eps: float = 10.0     # inner loop ends when E_mu <= kappa_eps * mu
    kappa_sigma: float = 1e10   # dual safeguard box
    armijo: float = 1e-4
    ls_backtracks: int = 25
    reg_init: float = 1e-4
    reg_growth: float = 8.0
    reg_max: float = 1e12
    nu_init: float = 1.0        # initial l1 penalty weight
    nu_margin: float = 10.0
    max_grad_scale: float = 100.0  # gradient cap for objective auto-scaling
    acceptable_factor: float = 100.0  # stall tolerance, relative to tol


@dataclass
class SolveResult:
    solution: np.ndarray
    status: SolveStatus
    iterations: int
    solve_time: float
    violation: float
    objective: float
    mu: float
    merit_log: list = field(default_factory=list)  # (before, after) per step
    multipliers: tuple | None = None
    message: str = ""


class FunctionalProblem:
    """Adapter turning plain callables into the solver's problem protocol."""

    def __init__(
        self,
        n,
        f,
        grad,
        hess,
        c_eq=None,
        jac_eq=None,
        c_ineq=None,
        jac_ineq=None,
        lb=None,
        ub=None,
    ):
        self.n = n
        self._f, self._grad, self._hess = f, grad, hess
        self._c_eq, self._jac_eq = c_eq, jac_eq
        self._c_ineq, self._jac_ineq = c_ineq, jac_ineq
        self.lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
        self.ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)

    def eval_fc(self, z):
        ce = self._c_eq(z) if self._c_eq else np.zeros(0)
        ci = self._c_ineq(z) if self._c_ineq else np.zeros(0)
        return self._f(z), np.atleast_1d(ce), np.atleast_1d(ci)

    def eval_derivs(self, z):
        f, ce, ci = self.eval_fc(z)
        je = (
            np.atleast_2d(self._jac_eq(z))
            if self._jac_eq
            else np.zeros((0, self.n))
        )
        ji = (
            np.atleast_2d(self._jac_ineq(z))
            if self._jac_ineq
            else np.zeros((0, self.n))
        )
        return f, np.asarray(self._grad(z), dtype=float), ce, je, ci, ji

    def eval_hess(self, z, y_eq, y_ineq):
        return np.asarray(self._hess(z, y_eq, y_ineq), dtype=float)


def _dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m, dtype=float)


def solve(problem, z0, options: SolverOptions | None = None, multipliers=None):
    """Run the interior-point iteration from z0.

    ``multipliers`` may carry (yE, yI, zL, zU) from a previous, structurally
    identical solve to warm-start the duals.
    """
    opt = options or SolverOptions()
    t_start = time.perf_counter()

    n = problem.n
    lb = problem.lb
    ub = problem.ub
    has_l = np.isfinite(lb)
    has_u = np.isfinite(ub)

    # interior starting point: push strictly inside any finite bound
    z = np.array(z0, dtype=float)
    span = np.where(has_l & has_u, ub - lb, np.inf)
    push_l = np.minimum(opt.bound_push * np.maximum(1.0, np.abs(lb)), 0.25 * span)
    push_u = np.minimum(opt.bound_push * np.maximum(1.0, np.abs(ub)), 0.25 * span)
    z[has_l] = np.maximum(z[has_l], lb[has_l] + push_l[has_l])
    z[has_u] = np.minimum(z[has_u], ub[has_u] - push_u[has_u])

    f0, ce0, ci0 = problem.eval_fc(z)
    if not _finite(f0, ce0, ci0):
        return _result(
            z, SolveStatus.DIVERGED, 0, t_start, np.inf, np.nan, opt.mu_init,
            [], None, "non-finite at start",
        )
    m_eq, m_in = len(ce0), len(ci0)

    mu = opt.mu_init
    s = np.maximum(ci0, opt.slack_floor)
    # only the equality duals survive a warm start: inequality and bound
    # duals are re-centered at mu/s, because a stale active-set pattern on
    # boundary-riding slacks stalls the first barrier subproblem
    if multipliers is not None:
        y_eq = np.array(multipliers[0], dtype=float)
    else:
        y_eq = np.zeros(m_eq)
    y_in = mu / s
    z_l = mu / (z[has_l] - lb[has_l])
    z_u = mu / (ub[has_u] - z[has_u])

    tau = max(opt.tau_min, 1.0 - mu)
    nu = opt.nu_init
    delta_last = 0.0
    merit_log: list = []
    fails = 0
    status = SolveStatus.MAX_ITERATIONS
    message = ""
    obj_scale = 1.0

    it = 0
    while it < opt.max_iter:
        f, grad, ce, je, ci, ji = problem.eval_derivs(z)
        if not _finite(f, ce, ci) or not np.all(np.isfinite(grad)):
            status, message = SolveStatus.DIVERGED, "non-finite evaluation"
            break
        if it == 0:
            # keep the objective gradient commensurate with the constraint
            # scale, or the barrier cannot hold slacks away from zero
            g_inf = np.abs(grad).max(initial=1.0)
            obj_scale = min(1.0, opt.max_grad_scale / g_inf)
        f *= obj_scale
        grad = grad * obj_scale

        d_l = z[has_l] - lb[has_l]
        d_u = ub[has_u] - z[has_u]

        # full-space dual gradient and complementarity residuals
        r_d = grad + _tmul(je, y_eq) - _tmul(ji, y_in)
        r_d[has_l] -= z_l
        r_d[has_u] += z_u
        r_in = ci - s
        comp_s = s * y_in
        comp_l = d_l * z_l
        comp_u = d_u * z_u

        err_0 = _kkt_error(r_d, ce, r_in, comp_s, comp_l, comp_u, 0.0, y_eq, y_in, z_l, z_u)
        if err_0 <= opt.tol:
            status = SolveStatus.CONVERGED
            break
        err_mu = _kkt_error(r_d, ce, r_in, comp_s, comp_l, comp_u, mu, y_eq, y_in, z_l, z_u)
        if err_mu <= opt.kappa_eps * mu and mu > opt.tol / 10.0:
            mu = max(opt.tol / 10.0, opt.mu_shrink * mu)
            tau = max(opt.tau_min, 1.0 - mu)
            continue

        # condensed Newton matrix A = W + Sigma_z + JI' Sigma_s JI (+ delta I)
        # eval_hess mixes objective and constraint curvature, so feed it
        # duals divided by the objective scale and rescale the result
        w = obj_scale * _dense(
            problem.eval_hess(z, y_eq / obj_scale, y_in / obj_scale)
        )
        sigma_z = np.zeros(n)
        sigma_z[has_l] += z_l / d_l
        sigma_z[has_u] += z_u / d_u
        a_mat = w + np.diag(sigma_z)
        if m_in:
            ji_s = sp.csr_matrix(ji) if not sp.issparse(ji) else ji.tocsr()
            a_mat += (ji_s.multiply((y_in / s)[:, None]).T @ ji_s).toarray()

        r_s = comp_s - mu
        r_l = comp_l - mu
        r_u = comp_u - mu
        b1 = -r_d.copy()
        b1[has_l] -= r_l / d_l
        b1[has_u] += r_u / d_u
        if m_in:
            b1 -= _tmul(ji, (r_s + y_in * r_in) / s)

        if not (np.all(np.isfinite(a_mat)) and np.all(np.isfinite(b1))):
            status, message = SolveStatus.DIVERGED, "non-finite KKT assembly"
            break

        sol = _solve_kkt(a_mat, je, b1, ce, m_eq, delta_last, opt)
        if sol is None:
            status, message = SolveStatus.DIVERGED, "singular KKT system"
            break
        dz, dy_eq, delta_last = sol

        ds = (_mul(ji, dz) + r_in) if m_in else np.zeros(0)
        dy_in = -(r_s + y_in * ds) / s if m_in else np.zeros(0)
        dz_l = -(r_l + z_l * dz[has_l]) / d_l
        dz_u = (-r_u + z_u * dz[has_u]) / d_u

        # fraction-to-the-boundary limits
        a_pr = _max_step(s, ds, tau)
        a_pr = min(a_pr, _max_step(d_l, dz[has_l], tau))
        a_pr = min(a_pr, _max_step(d_u, -dz[has_u], tau))
        a_du = min(
            _max_step(y_in, dy_in, tau),
            _max_step(z_l, dz_l, tau),
            _max_step(z_u, dz_u, tau),
        )

        # l1 merit line search
        theta = np.sum(np.abs(ce)) + np.sum(np.abs(r_in))
        dphi = grad @ dz
        if m_in:
            dphi -= mu * np.sum(ds / s)
        dphi -= mu * np.sum(dz[has_l] / d_l)
        dphi += mu * np.sum(dz[has_u] / d_u)
        if theta > 1e-14:
            nu_req = dphi / (0.5 * theta)
            if nu < nu_req:
                nu = nu_req + opt.nu_margin
        d_merit = dphi - nu * theta

        phi0 = _barrier(f, s, d_l, d_u, mu)
        merit0 = phi0 + nu * theta
        alpha = a_pr
        accepted = False
        for _ in range(opt.ls_backtracks):
            z_t = z + alpha * dz
            s_t = s + alpha * ds
            f_t, ce_t, ci_t = problem.eval_fc(z_t)
            f_t *= obj_scale
            if _finite(f_t, ce_t, ci_t):
                theta_t = np.sum(np.abs(ce_t)) + np.sum(np.abs(ci_t - s_t))
                phi_t = _barrier(
                    f_t, s_t, z_t[has_l] - lb[has_l], ub[has_u] - z_t[has_u], mu
                )
                merit_t = phi_t + nu * theta_t
                if merit_t <= merit0 + opt.armijo * alpha * min(d_merit, 0.0):
                    accepted = True
                    break
            alpha *= 0.5

        if not accepted:
            fails += 1
            if fails == 1:
                delta_last = max(opt.reg_init, delta_last) * 100.0
            elif fails == 2:
                y_in = mu / s
                z_l = mu / (z[has_l] - lb[has_l])
                z_u = mu / (ub[has_u] - z[has_u])
            else:
                # a stall within a small multiple of the tolerance is a
                # solution for control purposes, not a failure
                if err_0 <= opt.acceptable_factor * opt.tol:
                    status = SolveStatus.CONVERGED
                    message = "stopped at acceptable tolerance"
                elif theta <= 1e3 * opt.tol:
                    status = SolveStatus.MAX_ITERATIONS
                    message = "line search stalled"
                else:
                    status = SolveStatus.DIVERGED
                    message = "line search stalled"
                break
            it += 1
            continue

        fails = 0
        z = z_t
        s = s_t
        y_eq = y_eq + alpha * dy_eq
        y_in = y_in + a_du * dy_in
        z_l = z_l + a_du * dz_l
        z_u = z_u + a_du * dz_u

        # primal-dual safeguard: keep duals consistent with the barrier
        if m_in:
            y_in = np.clip(
                y_in, mu / (opt.kappa_sigma * s), opt.kappa_sigma * mu / s
            )
        d_l = z[has_l] - lb[has_l]
        d_u = ub[has_u] - z[has_u]
        z_l = np.clip(z_l, mu / (opt.kappa_sigma * d_l), opt.kappa_sigma * mu / d_l)
        z_u = np.clip(z_u, mu / (opt.kappa_sigma * d_u), opt.kappa_sigma * mu / d_u)

        merit_log.append((merit0, merit_t))
        it += 1

    f_fin, ce_fin, ci_fin = problem.eval_fc(z)
    viol = _violation(z, ce_fin, ci_fin, lb, ub)
    mults = (y_eq, y_in, z_l, z_u)
    return _result(
        z, status, it, t_start, viol, f_fin, mu, merit_log, mults, message
    )


def _result(z, status, it, t_start, viol, obj, mu, merit_log, mults, message):
    return SolveResult(
        solution=z,
        status=status,
        iterations=it,
        solve_time=time.perf_counter() - t_start,
        violation=viol,
        objective=float(obj),
        mu=mu,
        merit_log=merit_log,
        multipliers=mults,
        message=message,
    )


def _finite(f, ce, ci) -> bool:
    return (
        np.isfinite(f)
        and bool(np.all(np.isfinite(ce)))
        and bool(np.all(np.isfinite(ci)))
    )


def _mul(j, x):
    return np.asarray(j @ x).ravel()


def _tmul(j, y):
    if len(y) == 0:
        return np.zeros(j.shape[1])
    return np.asarray(j.T @ y).ravel()


def _barrier(f, s, d_l, d_u, mu):
    if np.any(s <= 0.0) or np.any(d_l <= 0.0) or np.any(d_u <= 0.0):
        return np.inf
    out = f
    if len(s):
        out -= mu * np.sum(np.log(s))
    if len(d_l):
        out -= mu * np.sum(np.log(d_l))
    if len(d_u):
        out -= mu * np.sum(np.log(d_u))
    return out


def _max_step(x, dx, tau):
    """Largest alpha in (0, 1] keeping x + alpha*dx >= (1 - tau)*x."""
    neg = dx < 0.0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * x[neg] / dx[neg])))


def _kkt_error(r_d, ce, r_in, comp_s, comp_l, comp_u, mu, y_eq, y_in, z_l, z_u):
    s_max = 100.0
    m = len(y_eq) + len(y_in) + len(z_l) + len(z_u)
    if m:
        avg = (
            np.sum(np.abs(y_eq))
            + np.sum(np.abs(y_in))
            + np.sum(np.abs(z_l))
            + np.sum(np.abs(z_u))
        ) / m
    else:
        avg = 0.0
    s_d = max(s_max, avg) / s_max
    comp = 0.0
    for c in (comp_s, comp_l, comp_u):
        if len(c):
            comp = max(comp, np.max(np.abs(c - mu)))
    err = np.max(np.abs(r_d)) / s_d if len(r_d) else 0.0
    if len(ce):
        err = max(err, np.max(np.abs(ce)))
    if len(r_in):
        err = max(err, np.max(np.abs(r_in)))
    return max(err, comp / s_d)


def _solve_kkt(a_mat, je, b1, ce, m_eq, delta_last, opt):
    """KKT solve with escalating inertia regularization.

    Fast path: if A + delta*I is positive definite, eliminate the equality
    block through its Schur complement. A indefinite does not by itself make
    the step wrong (the Hessian only needs to be positive on the constraint
    null space), so before growing delta the full saddle system is factored
    symmetrically and accepted whenever its inertia is (n, m_eq, 0).
    """
    n = a_mat.shape[0]
    deltas = [0.0] if delta_last == 0.0 else [0.0, max(1e-20, delta_last / 3.0)]
    d = max(opt.reg_init, delta_last / 3.0)
    while d <= opt.reg_max:
        deltas.append(d)
        d *= opt.reg_growth
    je_d = _dense(je) if m_eq else None

    for delta in deltas:
        a_reg = a_mat if delta == 0.0 else a_mat + delta * np.eye(n)
        try:
            chol = np.linalg.cholesky(a_reg)
        except np.linalg.LinAlgError:
            if m_eq:
                step = _saddle_solve(a_reg, je_d, b1, ce, m_eq)
                if step is not None:
                    return step[0], step[1], delta
            continue
        x1 = cho_solve((chol, True), b1)
        if not m_eq:
            if not np.all(np.isfinite(x1)):
                continue
            return x1, np.zeros(0), delta
        x2 = cho_solve((chol, True), je_d.T)
        schur = je_d @ x2
        rhs = je_d @ x1 + ce
        try:
            c2 = np.linalg.cholesky(schur)
        except np.linalg.LinAlgError:
            try:
                c2 = np.linalg.cholesky(schur + 1e-12 * np.eye(m_eq))
            except np.linalg.LinAlgError:
                continue
        dy_eq = cho_solve((c2, True), rhs)
        dz = x1 - x2 @ dy_eq
        if np.all(np.isfinite(dz)) and np.all(np.isfinite(dy_eq)):
            return dz, dy_eq, delta
    return None


def _saddle_solve(a_reg, je_d, b1, ce, m_eq):
    """Factor [[A, JE'], [JE, 0]] and solve if its inertia is (n, m_eq, 0)."""
    n = a_reg.shape[0]
    k_mat = np.block([[a_reg, je_d.T], [je_d, np.zeros((m_eq, m_eq))]])
    try:
        lu, dd, perm = sla.ldl(k_mat, lower=True)
    except Exception:
        return None
    if _ldl_inertia(dd) != (n, m_eq, 0):
        return None

    rhs = np.concatenate([b1, -ce])
    lp = lu[perm]
    y = sla.solve_triangular(lp, rhs[perm], lower=True, unit_diagonal=True)
    size = n + m_eq
    bands = np.zeros((3, size))
    bands[0, 1:] = np.diagonal(dd, 1)
    bands[1] = np.diagonal(dd)
    bands[2, :-1] = np.diagonal(dd, -1)
    try:
        w = sla.solve_banded((1, 1), bands, y)
    except np.linalg.LinAlgError:
        return None
    v = sla.solve_triangular(lp.T, w, lower=False, unit_diagonal=True)
    out = np.empty(size)
    out[perm] = v
    if not np.all(np.isfinite(out)):
        return None
    return out[:n], out[n:]


def _ldl_inertia(dd):
    """Eigenvalue signs of an LDL' block-diagonal factor (1x1/2x2 blocks)."""
    size = dd.shape[0]
    pos = neg = zero = 0
    i = 0
    while i < size:
        if i + 1 < size and dd[i + 1, i] != 0.0:
            a, b, c = dd[i, i], dd[i + 1, i], dd[i + 1, i + 1]
            det = a * c - b * b
            if det < 0.0:
                pos += 1
                neg += 1
            elif det > 0.0:
                if a + c > 0.0:
                    pos += 2
                else:
                    neg += 2
            else:
                zero += 2
            i += 2
        else:
            if dd[i, i] > 0.0:
                pos += 1
            elif dd[i, i] < 0.0:
                neg += 1
            else:
                zero += 1
            i += 1
    return pos, neg, zero


def _violation(z, ce, ci, lb, ub):
    viol = 0.0
    if len(ce):
        viol = max(viol, np.max(np.abs(ce)))
    if len(ci):
        viol = max(viol, max(0.0, -np.min(ci)))
    viol = max(viol, np.max(np.maximum(lb - z, 0.0), initial=0.0))
    viol = max(viol, np.max(np.maximum(z - ub, 0.0), initial=0.0))
    return float(viol)
