"""Small dense optimisation kernels.

* :func:`solve_lp` -- two-phase tableau simplex with Bland's rule.
* :func:`maximize_separable_concave` -- sum of weighted ``log2(1 + beta p)``
  terms under non-negative linear rows.
* :func:`maximize_minrow_concave` -- epigraph form of the max-min of such
  sums, one row per user.

Both concave kernels follow the central path of a log barrier with damped
Newton steps.  Rows and variables are rescaled internally so that every
right-hand side is 1 and every variable lies in [0, 1].
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .model import LOG2E, NumericalError

# ---------------------------------------------------------------- simplex


@dataclass
class LinearProgram:
    """maximize c @ x  s.t.  A @ x <= b,  lo <= x <= hi."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.lo = np.zeros(n) if self.lo is None else np.broadcast_to(
            np.asarray(self.lo, dtype=float), (n,)).copy()
        self.hi = np.full(n, np.inf) if self.hi is None else np.broadcast_to(
            np.asarray(self.hi, dtype=float), (n,)).copy()
        if self.A.shape[0] != self.b.size:
            raise ValueError(f"A has {self.A.shape[0]} rows but b has {self.b.size}")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))
                and np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.lo))):
            raise ValueError("LP data must be finite (upper bounds may be inf)")
        if np.any(self.lo > self.hi):
            raise ValueError("lower bound exceeds upper bound")


@dataclass
class LPResult:
    x: np.ndarray | None
    value: float
    status: str


def _pivot(tab, row, col):
    tab[row] /= tab[row, col]
    others = np.abs(tab[:, col]) > 0
    others[row] = False
    tab[others] -= np.outer(tab[others, col], tab[row])


def _simplex(tab, basis, allowed, tol, max_iter):
    """Maximise the objective held in the last row (stored as -c).

    Returns "optimal" or "unbounded".  Bland's rule on both choices.
    """
    m = tab.shape[0] - 1
    for _ in range(max_iter):
        red = tab[-1, :-1]
        cand = np.nonzero((red < -tol) & allowed)[0]
        if cand.size == 0:
            return "optimal"
        col = cand[0]
        colv = tab[:m, col]
        pos = colv > tol
        if not np.any(pos):
            return "unbounded"
        ratios = np.full(m, np.inf)
        ratios[pos] = tab[:m, -1][pos] / colv[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + tol * max(1.0, abs(best)))[0]
        row = ties[np.argmin(basis[ties])]
        _pivot(tab, row, col)
        basis[row] = col
    raise NumericalError("simplex iteration limit reached")


def solve_lp(lp: LinearProgram, tol=1e-10, max_iter=10_000) -> LPResult:
    n = lp.c.size
    # shift to y = x - lo >= 0; finite upper bounds become rows
    b = lp.b - lp.A @ lp.lo
    rows = [lp.A]
    rhs = [b]
    fin = np.isfinite(lp.hi)
    if np.any(fin):
        rows.append(np.eye(n)[fin])
        rhs.append((lp.hi - lp.lo)[fin])
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    m = A.shape[0]

    scale = np.maximum(np.abs(A).max(axis=1, initial=0.0), np.abs(b))
    scale[scale == 0] = 1.0
    A = A / scale[:, None]
    b = b / scale

    neg = b < 0
    n_art = int(neg.sum())
    width = n + m + n_art + 1
    tab = np.zeros((m + 1, width))
    tab[:m, :n] = A
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[:m][neg] *= -1.0
    art_rows = np.nonzero(neg)[0]
    basis = np.arange(n, n + m)
    for a, r in enumerate(art_rows):
        tab[r, n + m + a] = 1.0
        basis[r] = n + m + a

    allowed = np.ones(width - 1, dtype=bool)
    if n_art:
        # phase one: maximise -sum(artificials)
        tab[-1, n + m:n + m + n_art] = 1.0
        for r in art_rows:
            tab[-1] -= tab[r]
        _simplex(tab, basis, allowed, tol, max_iter)
        if tab[-1, -1] < -1e-9:
            return LPResult(None, np.nan, "infeasible")
        for r in range(m):
            if basis[r] >= n + m:
                nz = np.nonzero(np.abs(tab[r, :n + m]) > tol)[0]
                if nz.size:
                    _pivot(tab, r, nz[0])
                    basis[r] = nz[0]
        allowed[n + m:] = False
        tab[:, n + m:n + m + n_art] = 0.0

    tab[-1, :] = 0.0
    tab[-1, :n] = -lp.c
    for r in range(m):
        if basis[r] < width - 1 and tab[-1, basis[r]] != 0:
            tab[-1] -= tab[-1, basis[r]] * tab[r]
    status = _simplex(tab, basis, allowed, tol, max_iter)
    if status == "unbounded":
        return LPResult(None, np.inf, "unbounded")
    y = np.zeros(width - 1)
    y[basis] = tab[:m, -1]
    x = lp.lo + np.maximum(y[:n], 0.0)
    x = np.minimum(x, lp.hi)
    return LPResult(x, float(lp.c @ x), "optimal")


# ------------------------------------------------------ concave programs


@dataclass
class SeparableConcaveProgram:
    """maximize sum_j alpha_j log2(1 + beta_j p_j)  s.t.  A p <= b, p >= 0.

    ``A`` must be non-negative with ``b > 0`` and every variable covered by
    at least one row.
    """

    alpha: np.ndarray
    beta: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).ravel()
        self.beta = np.asarray(self.beta, dtype=float).ravel()
        self.A = np.asarray(self.A, dtype=float).reshape(-1, self.alpha.size)
        self.b = np.asarray(self.b, dtype=float).ravel()
        _validate(self.alpha, self.beta, self.A, self.b)

    def value(self, p):
        return float(np.sum(self.alpha * np.log2(1.0 + self.beta * p)))

    def gradient(self, p):
        return self.alpha * self.beta * LOG2E / (1.0 + self.beta * p)


@dataclass
class MinRowProgram:
    """maximize tau  s.t.  offset_u + sum_{j: owner_j = u} alpha_j log2(1 + beta_j p_j) >= tau,
    A p <= b, p >= 0.

    Each variable belongs to exactly one row (``owner``).
    """

    alpha: np.ndarray
    beta: np.ndarray
    owner: np.ndarray
    offsets: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).ravel()
        self.beta = np.asarray(self.beta, dtype=float).ravel()
        self.owner = np.asarray(self.owner, dtype=int).ravel()
        self.offsets = np.asarray(self.offsets, dtype=float).ravel()
        self.A = np.asarray(self.A, dtype=float).reshape(-1, self.alpha.size)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if len(self.offsets) == 0:
            raise ValueError("at least one row is required")
        if self.owner.size != self.alpha.size or (
                self.owner.size and (self.owner.min() < 0
                                     or self.owner.max() >= self.offsets.size)):
            raise ValueError("owner must map every variable to a row")
        _validate(self.alpha, self.beta, self.A, self.b)

    def row_values(self, p):
        terms = self.alpha * np.log2(1.0 + self.beta * p)
        return self.offsets + np.bincount(self.owner, terms, minlength=self.offsets.size)


@dataclass
class ConcaveResult:
    p: np.ndarray
    value: float
    duals: np.ndarray
    kkt: float
    extra: dict = field(default_factory=dict)


def _validate(alpha, beta, A, b):
    if alpha.size != beta.size:
        raise ValueError("alpha and beta differ in length")
    if np.any(alpha < 0) or np.any(beta <= 0):
        raise ValueError("need alpha >= 0 and beta > 0")
    if A.shape[0] != b.size:
        raise ValueError("A and b disagree on the number of rows")
    if np.any(A < 0) or np.any(b <= 0):
        raise ValueError("rows must have non-negative coefficients and b > 0")
    if alpha.size and np.any(A.max(axis=0, initial=0.0) <= 0):
        raise ValueError("every variable must appear in some row")


def _scaled(A, b):
    keep = A.max(axis=1, initial=0.0) > 0
    As = A[keep] / b[keep, None]
    colscale = 1.0 / As.max(axis=0)           # p_j = colscale_j * q_j
    As = As * colscale[None, :]
    return As, colscale, keep


def _solve_newton(H, g):
    d = np.sqrt(np.abs(np.diag(H)))
    d[d == 0] = 1.0
    Hs = H / d[:, None] / d[None, :]
    try:
        step = cho_solve(cho_factor(Hs, check_finite=False), -g / d, check_finite=False)
    except LinAlgError:
        step = np.linalg.lstsq(Hs, -g / d, rcond=None)[0]
    return step / d


def _barrier(z, oracle, feasible, n_ineq, gap_tol, t0=1.0, mu=20.0,
             max_newton=100, max_outer=60):
    """Minimise F_t(z) = -t f(z) - sum log(slacks) along the central path."""
    t = t0
    for _ in range(max_outer):
        for _ in range(max_newton):
            F, g, H = oracle(z, t)
            step = _solve_newton(H, g)
            dec = -g @ step
            if dec / 2.0 <= 1e-20:
                break
            s = 1.0
            while not feasible(z + s * step):
                s *= 0.5
            if dec > 0.01:
                # damped phase; inside the quadratic region F is too large
                # in magnitude for an Armijo test to resolve the decrease
                while oracle(z + s * step, t, value_only=True) > F - 0.25 * s * dec:
                    s *= 0.5
                    if s < 1e-14:
                        break
                if s < 1e-14:
                    break
            z = z + s * step
            if dec / 2.0 <= 1e-14:
                break
        if n_ineq / t <= gap_tol(z):
            return z, t
        t *= mu
    return z, t


def maximize_separable_concave(prog: SeparableConcaveProgram, rel_gap=1e-8) -> ConcaveResult:
    m = prog.alpha.size
    if m == 0:
        return ConcaveResult(np.zeros(0), 0.0, np.zeros(prog.b.size), 0.0)
    As, cs, keep = _scaled(prog.A, prog.b)
    a = prog.alpha
    bq = prog.beta * cs

    def f(q):
        return np.sum(a * np.log2(1.0 + bq * q))

    def feasible(q):
        return np.all(q > 0) and np.all(As @ q < 1.0)

    def oracle(q, t, value_only=False):
        s = 1.0 - As @ q
        if np.any(q <= 0) or np.any(s <= 0):
            return np.inf
        F = -t * f(q) - np.log(s).sum() - np.log(q).sum()
        if value_only:
            return F
        den = 1.0 + bq * q
        g = -t * a * bq * LOG2E / den + As.T @ (1.0 / s) - 1.0 / q
        H = (As.T * (1.0 / s ** 2)) @ As
        H[np.diag_indices(m)] += t * a * bq ** 2 * LOG2E / den ** 2 + 1.0 / q ** 2
        return F, g, H

    q0 = np.full(m, 0.5 / max(As.sum(axis=1).max(), 1e-300))
    n_ineq = m + As.shape[0]
    q, t = _barrier(q0, oracle, feasible, n_ineq,
                    lambda q: rel_gap * (1.0 + abs(f(q))))
    s = 1.0 - As @ q
    lam = 1.0 / (t * s)
    best = _pack_separable(prog, cs, keep, q, lam)
    gq = a * bq * LOG2E / (1.0 + bq * q)
    scale = np.maximum(gq, As.T @ lam)
    G = max(np.max(gq, initial=0.0), 1e-300)
    score = np.concatenate([_log_ratio(q * scale, 1.0 / (t * q)), _log_ratio(lam, s * G)])
    for mask in _active_guesses(score):
        if best.kkt <= 1e-12:
            break
        cand = _crossover_separable(a, bq, As, q, lam, mask[:m], mask[m:])
        if cand is not None:
            other = _pack_separable(prog, cs, keep, *cand)
            if other.kkt < best.kkt:
                best = other
    best.extra["t"] = t
    return best


def _pack_separable(prog, cs, keep, q, lam):
    p = cs * q
    duals = np.zeros(prog.b.size)
    duals[keep] = lam / prog.b[keep]
    kkt = kkt_residual(prog.gradient(p), p, prog.A, prog.b, duals)
    return ConcaveResult(p, prog.value(p), duals, kkt, {})


def _newton_system(x, residual, jacobian, iters=30):
    for _ in range(iters):
        r = residual(x)
        if not np.all(np.isfinite(r)):
            return None
        try:
            step = np.linalg.lstsq(jacobian(x), -r, rcond=None)[0]
        except np.linalg.LinAlgError:
            return None
        x = x + step
        if np.max(np.abs(step), initial=0.0) <= 1e-15 * (1.0 + np.max(np.abs(x), initial=0.0)):
            break
    return x if np.all(np.isfinite(x)) else None


def _active_guesses(log_ratio, limit=5, band=4.0):
    """Boolean masks ``log_ratio > 0`` plus every flip of the most ambiguous entries.

    ``log_ratio`` is log10(primal slack / dual) per complementary pair; pairs
    within ``band`` decades of zero are ambiguous at a finite barrier weight.
    """
    base = log_ratio > 0
    yield base
    amb = np.flatnonzero(np.abs(log_ratio) < band)
    amb = amb[np.argsort(np.abs(log_ratio[amb]))][:limit]
    for flips in itertools.product((False, True), repeat=amb.size):
        if not any(flips):
            continue
        mask = base.copy()
        mask[amb[np.array(flips)]] ^= True
        yield mask


def _log_ratio(primal, dual):
    with np.errstate(divide="ignore"):
        return np.log10(np.maximum(primal, 1e-300)) - np.log10(np.maximum(dual, 1e-300))


def _crossover_separable(a, bq, As, q, lam, free, act):
    """Solve the KKT equations exactly on a guessed active set.

    ``free`` marks positive variables and ``act`` tight budget rows.
    Returns (q, lam) or None when the guess does not verify.
    """
    AF = As[np.ix_(act, free)]
    nf, na = int(free.sum()), int(act.sum())
    if nf == 0:
        return None

    def unpack(x):
        qq = np.zeros_like(q)
        qq[free] = x[:nf]
        return qq, x[nf:]

    def residual(x):
        qq, ll = unpack(x)
        g = (a * bq * LOG2E / (1.0 + bq * qq))[free]
        return np.concatenate([g - AF.T @ ll, AF @ x[:nf] - 1.0])

    def jacobian(x):
        qq, _ = unpack(x)
        h = (-a * bq ** 2 * LOG2E / (1.0 + bq * qq) ** 2)[free]
        J = np.zeros((nf + na, nf + na))
        J[:nf, :nf] = np.diag(h)
        J[:nf, nf:] = -AF.T
        J[nf:, :nf] = AF
        return J

    x = _newton_system(np.concatenate([q[free], lam[act]]), residual, jacobian)
    if x is None:
        return None
    qq, ll = unpack(x)
    lam_full = np.zeros_like(lam)
    lam_full[act] = ll
    if (not np.all(np.isfinite(x)) or np.any(qq < 0) or np.any(ll < 0)
            or np.any(As @ qq > 1.0 + 1e-12)):
        return None
    return qq, lam_full


def maximize_minrow_concave(prog: MinRowProgram, rel_gap=1e-8) -> ConcaveResult:
    m = prog.alpha.size
    nrow = prog.offsets.size
    if m == 0:
        tau = float(prog.offsets.min())
        return ConcaveResult(np.zeros(0), tau, np.zeros(prog.b.size), 0.0,
                             {"tau": tau, "row_duals": np.zeros(nrow)})
    As, cs, keep = _scaled(prog.A, prog.b)
    a = prog.alpha
    bq = prog.beta * cs
    own = prog.owner

    def rows(q):
        return prog.offsets + np.bincount(own, a * np.log2(1.0 + bq * q), minlength=nrow)

    def feasible(z):
        q, tau = z[:-1], z[-1]
        return (np.all(q > 0) and np.all(As @ q < 1.0)
                and np.all(rows(q) - tau > 0))

    def oracle(z, t, value_only=False):
        q, tau = z[:-1], z[-1]
        s = 1.0 - As @ q
        if np.any(q <= 0) or np.any(s <= 0):
            return np.inf
        d = rows(q) - tau
        if np.any(d <= 0):
            return np.inf
        F = -t * tau - np.log(d).sum() - np.log(s).sum() - np.log(q).sum()
        if value_only:
            return F
        den = 1.0 + bq * q
        gr = a * bq * LOG2E / den                 # d row_owner / d q_j
        hr = -a * bq ** 2 * LOG2E / den ** 2      # d2 row_owner / d q_j^2
        dj = d[own]
        g = np.empty(m + 1)
        g[:-1] = -gr / dj + As.T @ (1.0 / s) - 1.0 / q
        g[-1] = -t + np.sum(1.0 / d)
        H = np.zeros((m + 1, m + 1))
        H[:-1, :-1] = (As.T * (1.0 / s ** 2)) @ As
        # sum_u grad r_u grad r_u^T / d_u^2, block diagonal by owner
        Gm = np.zeros((nrow, m))
        Gm[own, np.arange(m)] = gr
        H[:-1, :-1] += (Gm.T * (1.0 / d ** 2)) @ Gm
        H[np.diag_indices(m)] += -hr / dj + 1.0 / q ** 2
        H[:-1, -1] = H[-1, :-1] = -gr / dj ** 2
        H[-1, -1] = np.sum(1.0 / d ** 2)
        return F, g, H

    q0 = np.full(m, 0.5 / max(As.sum(axis=1).max(), 1e-300))
    r0 = rows(q0)
    z0 = np.append(q0, r0.min() - max(1.0, 0.1 * abs(r0.min())))
    n_ineq = m + As.shape[0] + nrow
    z, t = _barrier(z0, oracle, feasible, n_ineq,
                    lambda z: rel_gap * (1.0 + abs(z[-1])))
    q = z[:-1]
    lam = 1.0 / (t * (1.0 - As @ q))
    psi = 1.0 / (t * (rows(q) - z[-1]))
    best = _pack_minrow(prog, cs, keep, q, lam, psi)
    gq = a * bq * LOG2E / (1.0 + bq * q)
    scale = np.maximum(psi[own] * gq, As.T @ lam)
    G = max(np.max(psi[own] * gq, initial=0.0), 1e-300)
    d = rows(q) - z[-1]
    nb = As.shape[0]
    score = np.concatenate([_log_ratio(q * scale, 1.0 / (t * q)),
                            _log_ratio(lam, (1.0 - As @ q) * G),
                            _log_ratio(psi, d / (1.0 + abs(z[-1])))])
    for mask in _active_guesses(score):
        if best.kkt <= 1e-12:
            break
        cand = _crossover_minrow(a, bq, own, rows, As, q, z[-1], lam, psi,
                                 mask[:m], mask[m:m + nb], mask[m + nb:])
        if cand is not None:
            other = _pack_minrow(prog, cs, keep, *cand)
            if other.kkt < best.kkt:
                best = other
    best.extra["t"] = t
    return best


def _pack_minrow(prog, cs, keep, q, lam, psi):
    p = cs * q
    duals = np.zeros(prog.b.size)
    duals[keep] = lam / prog.b[keep]
    tau = float(prog.row_values(p).min())
    grad = psi[prog.owner] * prog.alpha * prog.beta * LOG2E / (1.0 + prog.beta * p)
    kkt = max(kkt_residual(grad, p, prog.A, prog.b, duals), abs(psi.sum() - 1.0))
    return ConcaveResult(p, tau, duals, kkt, {"tau": tau, "row_duals": psi})


def _crossover_minrow(a, bq, own, rows, As, q, tau, lam, psi, free, act, tight):
    """Exact KKT solve of the epigraph problem on a guessed active set."""
    nrow = psi.size
    nf, nt, na = int(free.sum()), int(tight.sum()), int(act.sum())
    if nt == 0:
        return None
    fidx = np.flatnonzero(free)
    tidx = np.flatnonzero(tight)
    tpos = -np.ones(nrow, dtype=int)
    tpos[tidx] = np.arange(nt)
    AF = As[np.ix_(act, free)]
    ownF = own[fidx]
    n = nf + 1 + nt + na

    def unpack(x):
        qq = np.zeros_like(q)
        qq[fidx] = x[:nf]
        return qq, x[nf], x[nf + 1:nf + 1 + nt], x[nf + 1 + nt:]

    def residual(x):
        qq, tt, ps, ll = unpack(x)
        g = (a * bq * LOG2E / (1.0 + bq * qq))[fidx]
        pw = np.where(tpos[ownF] >= 0, ps[np.maximum(tpos[ownF], 0)], 0.0)
        return np.concatenate([pw * g - AF.T @ ll, [ps.sum() - 1.0],
                               rows(qq)[tidx] - tt, AF @ x[:nf] - 1.0])

    def jacobian(x):
        qq, _, ps, _ = unpack(x)
        den = 1.0 + bq * qq
        g = (a * bq * LOG2E / den)[fidx]
        h = (-a * bq ** 2 * LOG2E / den ** 2)[fidx]
        has = tpos[ownF] >= 0
        pw = np.where(has, ps[np.maximum(tpos[ownF], 0)], 0.0)
        J = np.zeros((n, n))
        J[np.arange(nf), np.arange(nf)] = pw * h
        J[np.flatnonzero(has), nf + 1 + tpos[ownF[has]]] = g[has]
        J[:nf, nf + 1 + nt:] = -AF.T
        J[nf, nf + 1:nf + 1 + nt] = 1.0
        r3 = nf + 1 + tpos[ownF[has]]
        J[r3, np.flatnonzero(has)] = g[has]
        J[nf + 1:nf + 1 + nt, nf] = -1.0
        J[nf + 1 + nt:, :nf] = AF
        return J

    x0 = np.concatenate([q[fidx], [tau], np.full(nt, 1.0 / nt) if psi[tidx].sum() <= 0 else psi[tidx] / psi[tidx].sum(), lam[act]])
    x = _newton_system(x0, residual, jacobian)
    if x is None:
        return None
    qq, tt, ps, ll = unpack(x)
    if (not np.all(np.isfinite(x)) or np.any(qq < 0) or np.any(ps < 0) or np.any(ll < 0)
            or np.any(As @ qq > 1.0 + 1e-12)
            or np.any(rows(qq) < tt - 1e-12 * (1.0 + abs(tt)))):
        return None
    lam_full = np.zeros_like(lam)
    lam_full[act] = ll
    psi_full = np.zeros(nrow)
    psi_full[tidx] = ps
    return qq, lam_full, psi_full


def kkt_residual(grad, p, A, b, duals):
    """Scaled KKT residual of  max f(p) s.t. A p <= b, p >= 0.

    Combines projected stationarity, primal feasibility and complementary
    slackness, each normalised to be dimensionless.
    """
    cap = 1.0 / np.max(A / b[:, None], axis=0, initial=0.0)
    An = A / b[:, None] * cap[None, :]
    lam = duals * b
    gq = grad * cap
    price = An.T @ lam
    scale = np.maximum(np.abs(gq), np.abs(price)).max(initial=0.0)
    scale = scale if scale > 0 else 1.0
    red = (gq - price) / scale
    qn = p / cap
    stat = np.abs(qn - np.maximum(0.0, qn + red))
    slack = 1.0 - (A @ p) / b
    compl = np.abs(lam * slack) / scale
    infeas = np.maximum(-slack, 0.0)
    return float(max(stat.max(initial=0.0), compl.max(initial=0.0),
                     infeas.max(initial=0.0), np.maximum(-duals, 0).max(initial=0.0)))
