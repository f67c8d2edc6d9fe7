"""Dense convex solver for diagonal-quadratic objectives over SOC constraints.

Problems have the form::

    minimize    sum_i q_i y_i^2 + c'y + c0
    subject to  F y + g >= 0                 (nonneg blocks)
                ||U y + u|| <= a'y + a0      (soc blocks)
                E y = e                      (zero blocks)

The quadratic part is moved into a rotated-cone epigraph, after which the
purely conic problem is solved by a primal-dual interior-point method on the
homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector step. The embedding yields either an optimal pair or an
infeasibility certificate, so branch-and-bound can prune on it. Iteration
count is O(sqrt(nu) log(1/eps)) in theory, where nu is the number of cones;
in practice 15-40 iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import kernels

OPTIMAL = "Optimal"
PRIMAL_INFEASIBLE = "PrimalInfeasible"
UNBOUNDED = "Unbounded"
MAX_ITERATIONS = "MaxIterations"


@dataclass
class Nonneg:
    """Rows ``F y + g >= 0``."""

    F: np.ndarray
    g: np.ndarray
    name: str = ""


@dataclass
class Soc:
    """``||U y + u|| <= a'y + a0``."""

    U: np.ndarray
    u: np.ndarray
    a: np.ndarray
    a0: float
    name: str = ""


@dataclass
class Zero:
    """Equality rows ``E y = e``."""

    E: np.ndarray
    e: np.ndarray
    name: str = ""


@dataclass
class ConeProgram:
    n: int
    q: np.ndarray
    c: np.ndarray
    blocks: list
    c0: float = 0.0
    names: list = field(default_factory=list)

    def objective(self, y):
        y = np.asarray(y, dtype=float)
        return float(self.q @ (y * y) + self.c @ y + self.c0)

    def count(self, kind):
        return sum(isinstance(b, kind) for b in self.blocks)


@dataclass
class ConicSolution:
    x: np.ndarray
    objective: float
    status: str
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    certificate: float = float("nan")

    @property
    def ok(self):
        return self.status == OPTIMAL


class DimensionError(ValueError):
    pass


def _as2d(M, n):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != n:
        raise DimensionError(f"block has {M.shape[1]} columns, program has {n} variables")
    return M


def assemble(q, c, blocks, c0=0.0, names=None, epigraph=False):
    """Validate a program; with ``epigraph=True`` return its purely conic form."""
    c = np.asarray(c, dtype=float).ravel()
    n = c.size
    q = np.zeros(n) if q is None else np.asarray(q, dtype=float).ravel()
    if q.size != n:
        raise DimensionError("q and c differ in length")
    if np.any(q < 0):
        raise ValueError("quadratic coefficients must be nonnegative")
    checked = []
    for b in blocks:
        if isinstance(b, Nonneg):
            F = _as2d(b.F, n)
            g = np.asarray(b.g, dtype=float).ravel()
            if g.size != F.shape[0]:
                raise DimensionError(f"nonneg block {b.name!r}: {F.shape[0]} rows, {g.size} offsets")
            checked.append(Nonneg(F, g, b.name))
        elif isinstance(b, Soc):
            U = _as2d(b.U, n)
            u = np.asarray(b.u, dtype=float).ravel()
            a = np.asarray(b.a, dtype=float).ravel()
            if u.size != U.shape[0] or a.size != n:
                raise DimensionError(f"soc block {b.name!r} inconsistent")
            checked.append(Soc(U, u, a, float(b.a0), b.name))
        elif isinstance(b, Zero):
            E = _as2d(b.E, n)
            e = np.asarray(b.e, dtype=float).ravel()
            if e.size != E.shape[0]:
                raise DimensionError(f"zero block {b.name!r} inconsistent")
            checked.append(Zero(E, e, b.name))
        else:
            raise TypeError(f"unknown block type {type(b).__name__}")
    prog = ConeProgram(n, q, c, checked, float(c0), list(names or []))
    return epigraph_form(prog) if epigraph else prog


def epigraph_form(prog):
    """Replace ``sum q_i y_i^2`` by ``kap * t`` with ``||(2 sqrt(q/kap) y, t-1)|| <= t+1``."""
    if not np.any(prog.q > 0):
        return prog
    n = prog.n
    idx = np.flatnonzero(prog.q > 0)
    pad = lambda M: np.hstack([M, np.zeros((M.shape[0], 1))])
    blocks = []
    for b in prog.blocks:
        if isinstance(b, Nonneg):
            blocks.append(Nonneg(pad(b.F), b.g, b.name))
        elif isinstance(b, Soc):
            blocks.append(Soc(pad(b.U), b.u, np.append(b.a, 0.0), b.a0, b.name))
        else:
            blocks.append(Zero(pad(b.E), b.e, b.name))
    U = np.zeros((idx.size + 1, n + 1))
    # t = kap * t' keeps the cone's constant terms on the same scale as q
    kap = max(1.0, float(prog.q.max()))
    U[np.arange(idx.size), idx] = 2.0 * np.sqrt(prog.q[idx] / kap)
    U[-1, n] = 1.0
    u = np.zeros(idx.size + 1)
    u[-1] = -1.0
    a = np.zeros(n + 1)
    a[n] = 1.0
    blocks.append(Soc(U, u, a, 1.0, "epigraph"))
    names = list(prog.names) + ["epigraph"] if prog.names else []
    return ConeProgram(n + 1, np.zeros(n + 1), np.append(prog.c, kap), blocks, prog.c0, names)


def residuals(prog, y):
    """Constraint-wise violation report of a candidate point."""
    y = np.asarray(y, dtype=float)
    report = []
    for b in prog.blocks:
        if isinstance(b, Nonneg):
            viol = float(max(0.0, -np.min(b.F @ y + b.g))) if b.g.size else 0.0
        elif isinstance(b, Soc):
            viol = float(max(0.0, np.linalg.norm(b.U @ y + b.u) - (b.a @ y + b.a0)))
        else:
            viol = float(np.max(np.abs(b.E @ y - b.e))) if b.e.size else 0.0
        report.append((b.name, viol))
    worst = max((v for _, v in report), default=0.0)
    return {"blocks": report, "max_violation": worst, "objective": prog.objective(y)}


# ----------------------------------------------------------------------------
# standard form
# ----------------------------------------------------------------------------


@dataclass
class _Std:
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    A: np.ndarray
    b: np.ndarray
    nl: int
    qs: np.ndarray


def _standard_form(prog):
    """Cone rows ``G x + s = h`` (orthant rows first) and ``A x = b``."""
    n = prog.n
    lin_G, lin_h, soc_G, soc_h, qs, A_rows, b_rows = [], [], [], [], [], [], []
    for blk in prog.blocks:
        if isinstance(blk, Nonneg):
            lin_G.append(-blk.F)
            lin_h.append(blk.g)
        elif isinstance(blk, Soc):
            keep = np.any(blk.U != 0.0, axis=1) | (blk.u != 0.0)
            if not keep.any():
                # presolve: a'y + a0 >= 0
                lin_G.append(-blk.a[None, :])
                lin_h.append(np.array([blk.a0]))
                continue
            soc_G.append(-np.vstack([blk.a[None, :], blk.U[keep]]))
            soc_h.append(np.concatenate([[blk.a0], blk.u[keep]]))
            qs.append(int(keep.sum()) + 1)
        else:
            A_rows.append(blk.E)
            b_rows.append(blk.e)
    G = np.vstack(lin_G + soc_G) if (lin_G or soc_G) else np.zeros((0, n))
    h = np.concatenate(lin_h + soc_h) if (lin_h or soc_h) else np.zeros(0)
    A = np.vstack(A_rows) if A_rows else np.zeros((0, n))
    b = np.concatenate(b_rows) if b_rows else np.zeros(0)
    nl = int(sum(x.size for x in lin_h))
    return _Std(prog.c.copy(), G, h, A, b, nl, np.array(qs, dtype=np.int64))


def _equilibrate(std, passes=8):
    """Ruiz scaling; SOC rows share one factor per block to stay in the cone."""
    G, A = std.G.copy(), std.A.copy()
    m, n = G.shape
    col = np.ones(n)
    row = np.ones(m)
    arow = np.ones(A.shape[0])
    starts = std.nl + np.concatenate([[0], np.cumsum(std.qs)[:-1]]).astype(int)
    for _ in range(passes):
        cn = np.max(np.abs(np.vstack([G, A])), axis=0) if (m + A.shape[0]) else np.ones(n)
        cn = np.where(cn > 0, cn, 1.0)
        dc = 1.0 / np.sqrt(cn)
        G *= dc
        A *= dc
        col *= dc
        rn = np.max(np.abs(G), axis=1) if n else np.ones(m)
        for s0, k in zip(starts, std.qs):
            rn[s0 : s0 + k] = np.max(rn[s0 : s0 + k])
        rn = np.where(rn > 0, rn, 1.0)
        dr = 1.0 / np.sqrt(rn)
        G *= dr[:, None]
        row *= dr
        if A.shape[0]:
            an = np.max(np.abs(A), axis=1)
            an = np.where(an > 0, an, 1.0)
            da = 1.0 / np.sqrt(an)
            A *= da[:, None]
            arow *= da
    c = std.c * col
    cs = max(1.0, float(np.max(np.abs(c)))) if n else 1.0
    scaled = _Std(c / cs, G, std.h * row, A, std.b * arow, std.nl, std.qs)
    return scaled, col, row, arow, cs


# ----------------------------------------------------------------------------
# interior point method
# ----------------------------------------------------------------------------


class _Kkt:
    """Factored ``[[0, A', G'], [A, 0, 0], [G, 0, -W'W]]`` for the current W."""

    def __init__(self, std, scaling, reg=1e-13):
        self.std = std
        self.w = scaling
        n = std.G.shape[1]
        p = std.A.shape[0]
        Gs = self.winv(std.G)
        self.Gs = Gs
        H = Gs.T @ Gs
        # Jacobi scaling keeps the static regularization relative per column
        hd = np.diag(H)
        self.dj = 1.0 / np.sqrt(np.maximum(hd, 1e-8 * max(1.0, float(hd.max(initial=0.0)))))
        M = np.zeros((n + p, n + p))
        M[:n, :n] = H * np.outer(self.dj, self.dj) + reg * np.eye(n)
        M[:n, n:] = std.A.T * self.dj[:, None]
        M[n:, :n] = M[:n, n:].T
        M[n:, n:] = -reg * np.eye(p)
        self.lu = sla.lu_factor(M, check_finite=False)
        self.n, self.p = n, p

    def wmul(self, x):
        d, beta, v = self.w
        return kernels.scale(d, beta, v, self.std.nl, self.std.qs, x, False)

    def winv(self, x):
        d, beta, v = self.w
        return kernels.scale(d, beta, v, self.std.nl, self.std.qs, x, True)

    def _solve_once(self, bx, by, bz):
        wbz = self.winv(bz)
        rhs = np.concatenate([(bx + self.Gs.T @ wbz) * self.dj, by])
        sol = sla.lu_solve(self.lu, rhs, check_finite=False)
        x, y = sol[: self.n] * self.dj, sol[self.n :]
        z = self.winv(self.Gs @ x - wbz)
        return x, y, z

    def solve(self, bx, by, bz, refine=8):
        std = self.std
        sol = self._solve_once(bx, by, bz)
        err, prev = np.inf, sol
        for _ in range(refine):
            x, y, z = sol
            rx = bx - (std.A.T @ y + std.G.T @ z)
            ry = by - std.A @ x
            rz = bz - (std.G @ x - self.wmul(self.wmul(z)))
            # residual in the scaled metric, where the blocks are balanced
            new = max(np.abs(rx).max(initial=0), np.abs(ry).max(initial=0), np.abs(self.winv(rz)).max(initial=0))
            if new > 0.5 * err:
                if new > err:
                    sol = prev
                break
            err, prev = new, sol
            if err < 1e-15:
                break
            dx, dy, dz = self._solve_once(rx, ry, rz)
            sol = (x + dx, y + dy, z + dz)
        return sol


def _initial_point(std):
    nl, qs = std.nl, std.qs
    m = std.G.shape[0]
    ident = (np.ones(nl), np.ones(len(qs)), kernels.identity(0, qs))
    kkt = _Kkt(std, ident)
    n = std.G.shape[1]
    x, _, zp = kkt.solve(np.zeros(n), std.b, std.h)
    s = -zp
    _, y, z = kkt.solve(-std.c, np.zeros(std.A.shape[0]), np.zeros(m))
    e = kernels.identity(nl, qs)

    def shift(u):
        # alpha = inf{a : u + a e in K}
        a = -_min_eig(u, nl, qs)
        return u if a < 0 else u + (1.0 + a) * e

    return x, y, shift(s), shift(z)


def _min_eig(u, nl, qs):
    vals = [np.min(u[:nl])] if nl else []
    off = nl
    for k in qs:
        vals.append(u[off] - np.linalg.norm(u[off + 1 : off + k]))
        off += k
    return min(vals) if vals else 1.0


_DEBUG = False


def _debug(msg):
    if _DEBUG:
        print("[conic]", msg)


def _ipm(std, tol, max_iter):
    G, h, A, b, c = std.G, std.h, std.A, std.b, std.c
    nl, qs = std.nl, std.qs
    m, n = G.shape
    degree = nl + len(qs)
    resx0 = max(1.0, np.linalg.norm(c))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, np.linalg.norm(h))
    e = kernels.identity(nl, qs)

    if m == 0:
        # no cone rows: only equalities remain
        if A.shape[0]:
            x, *_ = np.linalg.lstsq(A, b, rcond=None)
            y, *_ = np.linalg.lstsq(A.T, -c, rcond=None)
            if np.linalg.norm(A.T @ y + c) > tol * resx0:
                return dict(status=UNBOUNDED, x=x, s=np.zeros(0), z=np.zeros(0), y=y, it=0, pres=0.0, dres=np.inf, gap=np.inf)
            return dict(status=OPTIMAL, x=x, s=np.zeros(0), z=np.zeros(0), y=y, it=0, pres=0.0, dres=0.0, gap=0.0)
        status = OPTIMAL if not np.any(c) else UNBOUNDED
        return dict(status=status, x=np.zeros(n), s=np.zeros(0), z=np.zeros(0), y=np.zeros(0), it=0, pres=0.0, dres=0.0, gap=0.0)

    x, y, s, z = _initial_point(std)
    tau, kappa = 1.0, 1.0
    best = None
    for it in range(max_iter + 1):
        rx = A.T @ y + G.T @ z + c * tau
        ry = b * tau - A @ x
        rz = s + G @ x - h * tau
        cx, by_, hz = c @ x, b @ y, h @ z
        rt = kappa + cx + by_ + hz
        sz = s @ z
        mu = (sz + tau * kappa) / (degree + 1)

        pres = max(np.linalg.norm(ry) / resy0, np.linalg.norm(rz) / resz0) / tau
        dres = np.linalg.norm(rx) / resx0 / tau
        pcost = cx / tau
        dcost = -(by_ + hz) / tau
        gap = sz / tau**2
        relgap = gap / max(1.0, abs(pcost), abs(dcost))
        pinf = np.linalg.norm(A.T @ y + G.T @ z) / resx0 / (-hz - by_) if (hz + by_) < 0 else np.inf
        dinf = (
            max(np.linalg.norm(A @ x) / resy0, np.linalg.norm(G @ x + s) / resz0) / (-cx) if cx < 0 else np.inf
        )
        score = max(pres, dres, relgap)
        _debug(f"{it:3d} pres={pres:.2e} dres={dres:.2e} gap={relgap:.2e} tau={tau:.2e} kap={kappa:.2e}")
        if best is None or score < best[0]:
            best = (score, x / tau, s / tau, z / tau, y / tau, pres, dres, gap)
        if pres <= tol and dres <= tol and min(relgap, gap) <= tol:
            return dict(status=OPTIMAL, x=x / tau, s=s / tau, z=z / tau, y=y / tau, it=it, pres=pres, dres=dres, gap=gap)
        if pinf <= tol:
            scale_ = -hz - by_
            return dict(status=PRIMAL_INFEASIBLE, x=x / tau, s=s, z=z / scale_, y=y / scale_, it=it, pres=pres, dres=dres, gap=gap, cert=pinf)
        if dinf <= tol:
            return dict(status=UNBOUNDED, x=x / -cx, s=s / -cx, z=z, y=y, it=it, pres=pres, dres=dres, gap=gap, cert=dinf)
        if it == max_iter:
            break
        # past the attainable accuracy the residuals start to drift upward
        if best[0] < 1e3 * tol and score > 1e2 * best[0]:
            _debug("stalled")
            break

        try:
            with np.errstate(all="raise"):
                step_ = _newton_step(std, x, y, s, z, tau, kappa, rx, ry, rz, rt, mu, e)
        except (ZeroDivisionError, FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
            _debug(f"breakdown: {exc!r}")
            break
        if step_ is None:
            _debug("bad step")
            break
        x, y, z, s, tau, kappa = step_
        if not (np.all(np.isfinite(x)) and tau > 0):
            _debug("nonfinite iterate")
            break

    _, xb, sb, zb, yb, pres, dres, gap = best
    return dict(status=MAX_ITERATIONS, x=xb, s=sb, z=zb, y=yb, it=it, pres=pres, dres=dres, gap=gap)


def _newton_step(std, x, y, s, z, tau, kappa, rx, ry, rz, rt, mu, e):
    G, h, b, c = std.G, std.h, std.b, std.c
    nl, qs = std.nl, std.qs
    d, beta, v, lam = kernels.nt_scaling(s, z, nl, qs)
    kkt = _Kkt(std, (d, beta, v))
    x1, y1, z1 = kkt.solve(-c, b, h)
    denom = c @ x1 + b @ y1 + h @ z1 - kappa / tau
    lamsq = kernels.jprod(lam, lam, nl, qs)

    def direction(ds, dk, frac):
        u = kernels.jdiv(lam, ds, nl, qs)
        x2, y2, z2 = kkt.solve(-frac * rx, frac * ry, -frac * rz - kkt.wmul(u))
        dtau = (-frac * rt - dk / tau - (c @ x2 + b @ y2 + h @ z2)) / denom
        dx, dy, dz = x2 + dtau * x1, y2 + dtau * y1, z2 + dtau * z1
        # taking ds from the linear residual equation keeps the primal
        # residual contracting exactly; rounding lands in complementarity
        dsv = -frac * rz - G @ dx + h * dtau
        dkap = (dk - kappa * dtau) / tau
        return dx, dy, dz, dsv, dtau, dkap

    def step(dz, dsv, dtau, dkap):
        a = min(kernels.max_step(s, dsv, nl, qs), kernels.max_step(z, dz, nl, qs))
        if dtau < 0:
            a = min(a, -tau / dtau)
        if dkap < 0:
            a = min(a, -kappa / dkap)
        return a

    # predictor
    dxa, dya, dza, dsa, dta, dka = direction(-lamsq, -tau * kappa, 1.0)
    aa = min(1.0, step(dza, dsa, dta, dka))
    sigma = (1.0 - aa) ** 3
    # corrector
    corr = kernels.jprod(kkt.winv(dsa), kkt.wmul(dza), nl, qs)
    ds = -lamsq + sigma * mu * e - corr
    dk = -tau * kappa + sigma * mu - dta * dka
    dx, dy, dz, dsv, dt, dkap = direction(ds, dk, 1.0 - sigma)
    alpha = min(1.0, 0.99 * step(dz, dsv, dt, dkap))
    if not np.isfinite(alpha) or alpha <= 0:
        return None
    return (
        x + alpha * dx,
        y + alpha * dy,
        z + alpha * dz,
        s + alpha * dsv,
        tau + alpha * dt,
        kappa + alpha * dkap,
    )


def solve(prog, tol=1e-7, max_iter=200, rescale=True):
    """Solve a :class:`ConeProgram`; deterministic for fixed inputs.

    The duality-gap test falls back to an absolute threshold, so a program
    whose optimal value is far below one is only solved to absolute accuracy.
    With ``rescale`` such a solution is refined by a second solve in which the
    variables are scaled by the first solution and the objective by its value.
    """
    sol = _solve_once(prog, tol, max_iter)
    if not (rescale and sol.status == OPTIMAL and prog.n):
        return sol
    core = abs(sol.objective - prog.c0)
    xmax = float(np.max(np.abs(sol.x)))
    if core == 0.0 or xmax == 0.0 or sol.gap <= tol * core:
        return sol
    d = np.maximum(np.abs(sol.x), 1e-2 * xmax)
    w = 1.0 / max(core, 1e-12 * max(1.0, abs(prog.c0)))
    scaled = _scale_columns(prog, d, w)
    second = _solve_once(scaled, tol, max_iter)
    if second.status != OPTIMAL:
        return sol
    x = d * second.x
    return ConicSolution(
        x=x,
        objective=prog.objective(x),
        status=OPTIMAL,
        primal_residual=_primal_residual(_standard_form(epigraph_form(prog)), _lift(prog, x)),
        dual_residual=second.dual_residual,
        gap=second.gap / w,
        iterations=sol.iterations + second.iterations,
    )


def _lift(prog, x):
    """Append the epigraph variable at its tightest value."""
    if not np.any(prog.q > 0):
        return x
    kap = max(1.0, float(prog.q.max()))
    return np.append(x, float(prog.q @ (x * x)) / kap)


def _scale_columns(prog, d, w):
    """Program in ``x' = x / d`` with the objective multiplied by ``w``."""
    blocks = []
    for b in prog.blocks:
        if isinstance(b, Nonneg):
            blocks.append(Nonneg(b.F * d, b.g, b.name))
        elif isinstance(b, Soc):
            blocks.append(Soc(b.U * d, b.u, b.a * d, b.a0, b.name))
        else:
            blocks.append(Zero(b.E * d, b.e, b.name))
    return ConeProgram(prog.n, prog.q * d * d * w, prog.c * d * w, blocks, 0.0, list(prog.names))


def _solve_once(prog, tol, max_iter):
    n0 = prog.n
    conic_prog = epigraph_form(prog)
    std = _standard_form(conic_prog)
    sstd, col, row, arow, cs = _equilibrate(std)
    res = _ipm(sstd, tol, max_iter)
    y = res["x"] * col
    x = y[:n0]
    status = res["status"]
    # reported residuals are measured on the original data
    if status == OPTIMAL:
        pres = _primal_residual(std, y)
        obj = prog.objective(x)
    else:
        pres = res["pres"]
        obj = {PRIMAL_INFEASIBLE: np.inf, UNBOUNDED: -np.inf}.get(status, prog.objective(x))
    return ConicSolution(
        x=x,
        objective=obj,
        status=status,
        primal_residual=float(pres),
        dual_residual=float(res["dres"]),
        gap=float(res["gap"]) * cs,
        iterations=int(res["it"]),
        certificate=float(res.get("cert", np.nan)),
    )


def _primal_residual(std, y):
    s = std.h - std.G @ y
    viol = 0.0
    if std.nl:
        viol = max(viol, float(max(0.0, -s[: std.nl].min())))
    off = std.nl
    for k in std.qs:
        viol = max(viol, float(max(0.0, np.linalg.norm(s[off + 1 : off + k]) - s[off])))
        off += k
    if std.A.shape[0]:
        viol = max(viol, float(np.max(np.abs(std.A @ y - std.b))))
    return viol / max(1.0, float(np.max(np.abs(std.h), initial=0.0)))


# ----------------------------------------------------------------------------
# text dump
# ----------------------------------------------------------------------------


def dump(prog):
    """Serialize to the line-oriented ``cone_v1`` format.

    Grammar (one record per line, whitespace separated, floats in repr form)::

        cone_v1
        n <n>
        q <n floats>
        c <n floats>
        c0 <float>
        block nonneg <rows> <name>      followed by <rows> lines "<F row...> <g>"
        block soc <rows> <name>         followed by "a <a...> <a0>" and <rows> lines "<U row...> <u>"
        block zero <rows> <name>        followed by <rows> lines "<E row...> <e>"
        end
    """
    fmt = lambda arr: " ".join(repr(float(v)) for v in np.ravel(arr))
    out = ["cone_v1", f"n {prog.n}", f"q {fmt(prog.q)}", f"c {fmt(prog.c)}", f"c0 {prog.c0!r}"]
    for blk in prog.blocks:
        name = blk.name.replace(" ", "_") or "-"
        if isinstance(blk, Nonneg):
            out.append(f"block nonneg {blk.g.size} {name}")
            out += [f"{fmt(r)} {g!r}" for r, g in zip(blk.F, blk.g.tolist())]
        elif isinstance(blk, Soc):
            out.append(f"block soc {blk.u.size} {name}")
            out.append(f"a {fmt(blk.a)} {blk.a0!r}")
            out += [f"{fmt(r)} {u!r}" for r, u in zip(blk.U, blk.u.tolist())]
        else:
            out.append(f"block zero {blk.e.size} {name}")
            out += [f"{fmt(r)} {e!r}" for r, e in zip(blk.E, blk.e.tolist())]
    out.append("end")
    return "\n".join(out) + "\n"


def load(text):
    """Inverse of :func:`dump`."""
    lines = iter(text.splitlines())
    if next(lines).strip() != "cone_v1":
        raise ValueError("not a cone_v1 document")
    vec = lambda line, tag: np.array([float(t) for t in line.split()[1:]]) if line.startswith(tag) else None
    n = int(next(lines).split()[1])
    q = vec(next(lines), "q")
    c = vec(next(lines), "c")
    c0 = float(next(lines).split()[1])
    blocks = []
    for line in lines:
        parts = line.split()
        if parts[0] == "end":
            break
        kind, rows, name = parts[1], int(parts[2]), parts[3]
        name = "" if name == "-" else name
        if kind == "soc":
            arow = np.array([float(t) for t in next(lines).split()[1:]])
        data = np.array([[float(t) for t in next(lines).split()] for _ in range(rows)]).reshape(rows, n + 1)
        if kind == "nonneg":
            blocks.append(Nonneg(data[:, :n], data[:, n], name))
        elif kind == "soc":
            blocks.append(Soc(data[:, :n], data[:, n], arow[:n], float(arow[n]), name))
        else:
            blocks.append(Zero(data[:, :n], data[:, n], name))
    return ConeProgram(n, q, c, blocks, c0)
