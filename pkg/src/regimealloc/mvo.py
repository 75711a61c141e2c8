"""Long-only mean-variance QP with a linear trading-cost term.

    maximize   mu'w - gamma_risk * w'Sigma w - gamma_trade * a * ||w - w_pre||_1
    subject to 0 <= w <= w_ub,  1'w <= L

The L1 term is handled exactly by a primal active-set method in weight space:
each weight is either fixed at a breakpoint (0, w_pre_j, w_ub) or free inside
one segment between breakpoints, where the cost term is linear with slope +-c.
This is the buy/sell split w = w_pre + b - s with at most one of b_j, s_j
positive, so the reduced Hessian stays positive definite.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from regimealloc.errors import NumericalError

FEAS_TOL = 1e-8
KKT_TOL = 1e-6
MAX_ITER = 10_000
_STEP_EPS = 1e-15
_MULT_TOL = 1e-12


@dataclass
class MvoProblem:
    mu: np.ndarray
    sigma: np.ndarray
    gamma_risk: float = 10.0
    gamma_trade: float = 0.0
    cost_a: float = 0.0005
    w_pre: np.ndarray | None = None
    w_ub: float = 0.4
    leverage_cap: float = 1.0

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        n = len(self.mu)
        if self.sigma.shape != (n, n):
            raise ValueError("sigma must be N x N with N = len(mu)")
        self.w_pre = np.zeros(n) if self.w_pre is None else np.asarray(self.w_pre, dtype=float)
        if self.w_pre.shape != (n,):
            raise ValueError("w_pre must have length N")

    @property
    def n(self) -> int:
        return len(self.mu)

    @property
    def trade_penalty(self) -> float:
        return self.gamma_trade * self.cost_a

    def objective(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return float(self.mu @ w - self.gamma_risk * w @ self.sigma @ w
                     - self.trade_penalty * np.abs(w - self.w_pre).sum())

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("mu", "sigma", "w_pre"):
            d[k] = np.asarray(d[k]).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MvoProblem":
        return cls(**d)


@dataclass
class MvoSolution:
    weights: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool = True

    def to_json(self) -> str:
        d = asdict(self)
        d["weights"] = self.weights.tolist()
        return json.dumps(d)


def _validate(p: MvoProblem) -> None:
    if not p.gamma_risk > 0:
        raise ValueError("gamma_risk must be positive")
    if p.gamma_trade < 0 or p.cost_a < 0:
        raise ValueError("gamma_trade and cost_a must be non-negative")
    if not 0 < p.w_ub <= p.leverage_cap + 1e-12:
        raise ValueError("need 0 < w_ub <= leverage_cap")
    if (p.w_pre < -FEAS_TOL).any() or p.w_pre.sum() > p.leverage_cap + 1e-9:
        raise ValueError("infeasible pre-trade weights")
    if not np.allclose(p.sigma, p.sigma.T, atol=1e-12, rtol=0):
        raise NumericalError("sigma is not symmetric")
    try:
        np.linalg.cholesky(p.sigma)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("sigma is not positive definite") from exc


def solve(problem: MvoProblem, max_iter: int = MAX_ITER) -> MvoSolution:
    """Globally optimal weights via primal active set (see module docstring)."""
    p = problem
    _validate(p)
    n, ub, L, c = p.n, p.w_ub, p.leverage_cap, p.trade_penalty
    Q = 2.0 * p.gamma_risk * p.sigma
    w_pre = p.w_pre

    # breakpoints per asset; the kink only matters when trading is penalized
    bps = []
    for j in range(n):
        pts = {0.0, ub}
        if c > 0 and 0.0 < w_pre[j] < ub:
            pts.add(float(w_pre[j]))
        bps.append(np.array(sorted(pts)))

    def seg_slope(j, k):
        if c == 0:
            return 0.0
        mid = 0.5 * (bps[j][k] + bps[j][k + 1])
        return -c if mid < w_pre[j] else c

    w = np.clip(w_pre, 0.0, ub)
    fixed = np.zeros(n, dtype=bool)
    pos = np.zeros(n, dtype=int)  # breakpoint index if fixed, else segment index
    for j in range(n):
        hit = np.flatnonzero(bps[j] == w[j])
        if len(hit):
            fixed[j] = True
            pos[j] = hit[0]
        else:
            pos[j] = int(np.searchsorted(bps[j], w[j]) - 1)
    lev = False
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        free = np.flatnonzero(~fixed)
        grad = Q @ w - p.mu
        step = np.zeros(n)
        if len(free):
            slopes = np.array([seg_slope(j, pos[j]) for j in free])
            rhs = -(grad[free] + slopes)
            Qff = Q[np.ix_(free, free)]
            if lev:
                m = len(free)
                kkt = np.zeros((m + 1, m + 1))
                kkt[:m, :m] = Qff
                kkt[:m, m] = 1.0
                kkt[m, :m] = 1.0
                sol = np.linalg.solve(kkt, np.append(rhs, 0.0))
                step[free] = sol[:m]
            else:
                step[free] = np.linalg.solve(Qff, rhs)
        if np.max(np.abs(step)) > _STEP_EPS:
            alpha, block = 1.0, None
            for j in free:
                lo, hi = bps[j][pos[j]], bps[j][pos[j] + 1]
                if step[j] > 0:
                    a = (hi - w[j]) / step[j]
                elif step[j] < 0:
                    a = (lo - w[j]) / step[j]
                else:
                    continue
                if a < alpha:
                    alpha, block = max(a, 0.0), ("var", j, pos[j] + 1 if step[j] > 0 else pos[j])
            if not lev and step.sum() > 0:
                a = (L - w.sum()) / step.sum()
                if a < alpha:
                    alpha, block = max(a, 0.0), ("lev",)
            w = w + alpha * step
            if block is not None:
                if block[0] == "var":
                    _, j, b = block
                    fixed[j] = True
                    pos[j] = b
                    w[j] = bps[j][b]
                else:
                    lev = True
            continue

        # stationary on the working set: check multipliers
        grad = Q @ w - p.mu
        nu = 0.0
        if lev:
            free = np.flatnonzero(~fixed)
            nu = -float(np.mean([grad[j] + seg_slope(j, pos[j]) for j in free]))
        worst, action = -_MULT_TOL, None
        if lev and nu < worst:
            worst, action = nu, ("lev",)
        for j in np.flatnonzero(fixed):
            b = pos[j]
            if b < len(bps[j]) - 1:
                d_up = grad[j] + seg_slope(j, b) + nu
                if d_up < worst:
                    worst, action = d_up, ("up", j)
            if b > 0:
                d_dn = -(grad[j] + seg_slope(j, b - 1) + nu)
                if d_dn < worst:
                    worst, action = d_dn, ("down", j)
        if action is None:
            converged = True
            break
        if action[0] == "lev":
            lev = False
        else:
            _, j = action
            fixed[j] = False
            if action[0] == "down":
                pos[j] = pos[j] - 1
    w = np.clip(w, 0.0, ub)
    res = verify_kkt(p, w)
    return MvoSolution(w, p.objective(w), res, it, converged)


def verify_kkt(problem: MvoProblem, weights, bound_tol: float = FEAS_TOL) -> float:
    """Largest violation of stationarity, feasibility, dual sign and complementarity.

    Stationarity uses the full subdifferential of the L1 term at w_j = w_pre_j,
    and the leverage multiplier is chosen to minimize the violation.
    """
    p = problem
    w = np.asarray(weights, dtype=float)
    ub, L, c = p.w_ub, p.leverage_cap, p.trade_penalty
    primal = max(0.0, -w.min(), (w - ub).max(), w.sum() - L)
    grad = 2.0 * p.gamma_risk * p.sigma @ w - p.mu
    d = w - p.w_pre
    at_kink = np.abs(d) <= bound_tol
    u_lo = np.where(at_kink, -1.0, np.sign(d))
    u_hi = np.where(at_kink, 1.0, np.sign(d))
    a = grad + c * u_lo
    b = grad + c * u_hi
    # each weight confines the leverage multiplier nu to an interval
    at_lo = w <= bound_tol
    at_hi = w >= ub - bound_tol
    lo = np.where(at_hi, -np.inf, -b)
    hi = np.where(at_lo, np.inf, -a)
    LO, HI = lo.max(), hi.min()
    slack = L - w.sum()
    if slack <= bound_tol:
        if LO <= HI:
            nu = max(LO, 0.0) if HI >= 0 else 0.0
            stat = 0.0 if HI >= 0 else -HI
        else:
            nu = max(0.5 * (LO + HI), 0.0)
            stat = max(LO - nu, nu - HI)
        comp = abs(nu * max(slack, 0.0))
    else:
        stat = max(LO, -HI, 0.0)
        comp = 0.0
    return float(max(primal, stat, comp))


def minvar_closed_form_check(sigma, leverage_cap: float = 1.0) -> np.ndarray:
    """Sigma^{-1} 1 scaled to the leverage cap."""
    sigma = np.asarray(sigma, dtype=float)
    try:
        x = np.linalg.solve(sigma, np.ones(len(sigma)))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular covariance") from exc
    return leverage_cap * x / x.sum()


def minvar_threshold(sigma, leverage_cap: float = 1.0) -> float:
    """Risk aversion below which mu = 1 saturates the leverage cap."""
    x = np.linalg.solve(np.asarray(sigma, dtype=float), np.ones(len(sigma)))
    return float(x.sum() / (2.0 * leverage_cap))
