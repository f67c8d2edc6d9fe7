"""Hot numeric kernels with a numba path and a pure-numpy path.

Cone vectors are laid out as ``nl`` nonnegative-orthant entries followed by
second-order cone blocks of sizes ``qs``. A block ``(x0, x1)`` belongs to
the cone when ``x0 >= ||x1||``.

The Nesterov-Todd scaling of a pair ``(s, z)`` is stored as

* ``d``    -- diagonal of W on the orthant part,
* ``beta`` -- one scalar per SOC block,
* ``v``    -- hyperbolic reflection vectors, ``W = beta * (2 v v' - J)``,

with ``W z = W^{-1} s = lam``.

Public names dispatch on :data:`cfran._accel.USE_NUMBA`; the ``nb_`` and
``np_`` variants are importable for benchmarking.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

# ----------------------------------------------------------------------------
# numba implementations (explicit loops over the ragged block layout)
# ----------------------------------------------------------------------------


@njit
def nb_nt_scaling(s, z, nl, qs):
    m = s.shape[0]
    d = np.empty(nl)
    beta = np.empty(qs.shape[0])
    v = np.empty(m - nl)
    lam = np.empty(m)
    for i in range(nl):
        d[i] = math.sqrt(s[i] / z[i])
        lam[i] = math.sqrt(s[i] * z[i])
    off = nl
    voff = 0
    for j in range(qs.shape[0]):
        n = qs[j]
        sj = 0.0
        zj = 0.0
        for k in range(1, n):
            sj += s[off + k] * s[off + k]
            zj += z[off + k] * z[off + k]
        sj = math.sqrt(sj)
        zj = math.sqrt(zj)
        sn = math.sqrt(max((s[off] - sj) * (s[off] + sj), 1e-300))
        zn = math.sqrt(max((z[off] - zj) * (z[off] + zj), 1e-300))
        dot = 0.0
        for k in range(n):
            dot += s[off + k] * z[off + k]
        dot /= sn * zn
        gam = math.sqrt(max((1.0 + dot) / 2.0, 1e-300))
        w0 = (s[off] / sn + z[off] / zn) / (2.0 * gam)
        c = 1.0 / math.sqrt(2.0 * (w0 + 1.0))
        v[voff] = (w0 + 1.0) * c
        for k in range(1, n):
            v[voff + k] = (s[off + k] / sn - z[off + k] / zn) / (2.0 * gam) * c
        b = math.sqrt(sn / zn)
        beta[j] = b
        # lam = W z
        vz = 0.0
        for k in range(n):
            vz += v[voff + k] * z[off + k]
        lam[off] = b * (2.0 * v[voff] * vz - z[off])
        for k in range(1, n):
            lam[off + k] = b * (2.0 * v[voff + k] * vz + z[off + k])
        off += n
        voff += n
    return d, beta, v, lam


@njit
def nb_scale(d, beta, v, nl, qs, x, inverse):
    """W @ x (or W^{-1} @ x) for a 2-D array ``x`` of shape (m, k)."""
    out = np.empty_like(x)
    ncol = x.shape[1]
    for i in range(nl):
        f = 1.0 / d[i] if inverse else d[i]
        for c in range(ncol):
            out[i, c] = f * x[i, c]
    off = nl
    for j in range(qs.shape[0]):
        n = qs[j]
        b = beta[j]
        for c in range(ncol):
            if inverse:
                # W^{-1} = (2 J v v' J - J) / beta
                t = v[off - nl] * x[off, c]
                for k in range(1, n):
                    t -= v[off - nl + k] * x[off + k, c]
                out[off, c] = (2.0 * v[off - nl] * t - x[off, c]) / b
                for k in range(1, n):
                    out[off + k, c] = (-2.0 * v[off - nl + k] * t + x[off + k, c]) / b
            else:
                t = 0.0
                for k in range(n):
                    t += v[off - nl + k] * x[off + k, c]
                out[off, c] = b * (2.0 * v[off - nl] * t - x[off, c])
                for k in range(1, n):
                    out[off + k, c] = b * (2.0 * v[off - nl + k] * t + x[off + k, c])
        off += n
    return out


@njit
def nb_jprod(u, w, nl, qs):
    out = np.empty_like(u)
    for i in range(nl):
        out[i] = u[i] * w[i]
    off = nl
    for j in range(qs.shape[0]):
        n = qs[j]
        t = 0.0
        for k in range(n):
            t += u[off + k] * w[off + k]
        out[off] = t
        for k in range(1, n):
            out[off + k] = u[off] * w[off + k] + w[off] * u[off + k]
        off += n
    return out


@njit
def nb_jdiv(lam, r, nl, qs):
    """Solve ``lam o u = r`` for u."""
    out = np.empty_like(r)
    for i in range(nl):
        out[i] = r[i] / lam[i]
    off = nl
    for j in range(qs.shape[0]):
        n = qs[j]
        l0 = lam[off]
        ln = 0.0
        t = l0 * r[off]
        for k in range(1, n):
            ln += lam[off + k] * lam[off + k]
            t -= lam[off + k] * r[off + k]
        ln = math.sqrt(ln)
        ln = (l0 - ln) * (l0 + ln)
        u0 = t / ln
        out[off] = u0
        for k in range(1, n):
            out[off + k] = (r[off + k] - u0 * lam[off + k]) / l0
        off += n
    return out


@njit
def nb_max_step(x, dx, nl, qs):
    """Largest alpha with x + alpha*dx in the cone (inf if unbounded)."""
    amax = np.inf
    for i in range(nl):
        if dx[i] < 0.0:
            a = -x[i] / dx[i]
            if a < amax:
                amax = a
    off = nl
    for j in range(qs.shape[0]):
        n = qs[j]
        qa = dx[off] * dx[off]
        qb = x[off] * dx[off]
        qc = 0.0
        for k in range(1, n):
            qa -= dx[off + k] * dx[off + k]
            qb -= x[off + k] * dx[off + k]
            qc += x[off + k] * x[off + k]
        qc = math.sqrt(qc)
        qc = (x[off] - qc) * (x[off] + qc)
        a = _soc_root(qa, qb, qc, x[off], dx[off])
        if a < amax:
            amax = a
        off += n
    return amax


@njit
def _soc_root(qa, qb, qc, x0, d0):
    # smallest positive root of qa*a^2 + 2*qb*a + qc (qc > 0), plus x0 + a*d0 >= 0
    best = np.inf
    if d0 < 0.0:
        best = -x0 / d0
    qc = max(qc, 0.0)
    disc = qb * qb - qa * qc
    if disc >= 0.0:
        sq = math.sqrt(disc)
        q = -(qb + sq) if qb >= 0.0 else -(qb - sq)
        if q != 0.0:
            r1 = qc / q
            if r1 > 0.0 and r1 < best:
                best = r1
        if qa != 0.0:
            r2 = q / qa
            if r2 > 0.0 and r2 < best:
                best = r2
    elif qa < 0.0:
        best = 0.0
    return best


@njit
def nb_second_moments(g):
    """Sample mean and second-moment tensor of ``g[r, k, i, l]``.

    Returns ``mean[k, i, l]`` and ``mom[k, i, l, m] = E{g_kil conj(g_kim)}``.
    """
    n, K, K2, L = g.shape
    mean = np.zeros((K, K2, L), dtype=np.complex128)
    mom = np.zeros((K, K2, L, L), dtype=np.complex128)
    for r in range(n):
        for k in range(K):
            for i in range(K2):
                for l in range(L):
                    a = g[r, k, i, l]
                    mean[k, i, l] += a
                    for m in range(L):
                        mom[k, i, l, m] += a * np.conj(g[r, k, i, m])
    return mean / n, mom / n


# ----------------------------------------------------------------------------
# numpy implementations
# ----------------------------------------------------------------------------


def _blocks(nl, qs):
    off = nl
    for n in qs:
        yield off, int(n)
        off += int(n)


def _jdot(x):
    # x0^2 - ||x1||^2 without cancellation
    r = math.sqrt(x[1:] @ x[1:])
    return (x[0] - r) * (x[0] + r)


def np_nt_scaling(s, z, nl, qs):
    d = np.sqrt(s[:nl] / z[:nl])
    lam = np.empty_like(s)
    lam[:nl] = np.sqrt(s[:nl] * z[:nl])
    beta = np.empty(len(qs))
    v = np.empty(len(s) - nl)
    for j, (off, n) in enumerate(_blocks(nl, qs)):
        sb, zb = s[off : off + n], z[off : off + n]
        sn = math.sqrt(max(_jdot(sb), 1e-300))
        zn = math.sqrt(max(_jdot(zb), 1e-300))
        sbar, zbar = sb / sn, zb / zn
        gam = math.sqrt(max((1.0 + sbar @ zbar) / 2.0, 1e-300))
        w = sbar.copy()
        w[0] += zbar[0]
        w[1:] -= zbar[1:]
        w /= 2.0 * gam
        w[0] += 1.0
        vb = w / math.sqrt(2.0 * w[0])
        v[off - nl : off - nl + n] = vb
        beta[j] = math.sqrt(sn / zn)
        t = 2.0 * (vb @ zb) * vb
        t[0] -= zb[0]
        t[1:] += zb[1:]
        lam[off : off + n] = beta[j] * t
    return d, beta, v, lam


def np_scale(d, beta, v, nl, qs, x, inverse):
    out = np.empty_like(x)
    out[:nl] = (x[:nl] / d[:, None]) if inverse else (x[:nl] * d[:, None])
    for j, (off, n) in enumerate(_blocks(nl, qs)):
        vb = v[off - nl : off - nl + n]
        xb = x[off : off + n]
        if inverse:
            jv = vb.copy()
            jv[1:] = -jv[1:]
            t = 2.0 * np.outer(jv, jv @ xb)
            t[0] -= xb[0]
            t[1:] += xb[1:]
            out[off : off + n] = t / beta[j]
        else:
            t = 2.0 * np.outer(vb, vb @ xb)
            t[0] -= xb[0]
            t[1:] += xb[1:]
            out[off : off + n] = beta[j] * t
    return out


def np_jprod(u, w, nl, qs):
    out = np.empty_like(u)
    out[:nl] = u[:nl] * w[:nl]
    for off, n in _blocks(nl, qs):
        ub, wb = u[off : off + n], w[off : off + n]
        out[off] = ub @ wb
        out[off + 1 : off + n] = ub[0] * wb[1:] + wb[0] * ub[1:]
    return out


def np_jdiv(lam, r, nl, qs):
    out = np.empty_like(r)
    out[:nl] = r[:nl] / lam[:nl]
    for off, n in _blocks(nl, qs):
        lb, rb = lam[off : off + n], r[off : off + n]
        u0 = (lb[0] * rb[0] - lb[1:] @ rb[1:]) / _jdot(lb)
        out[off] = u0
        out[off + 1 : off + n] = (rb[1:] - u0 * lb[1:]) / lb[0]
    return out


def np_max_step(x, dx, nl, qs):
    amax = np.inf
    neg = dx[:nl] < 0.0
    if neg.any():
        amax = float(np.min(-x[:nl][neg] / dx[:nl][neg]))
    for off, n in _blocks(nl, qs):
        xb, db = x[off : off + n], dx[off : off + n]
        a = _np_soc_root(_jdot(db), xb[0] * db[0] - xb[1:] @ db[1:], _jdot(xb), xb[0], db[0])
        amax = min(amax, a)
    return amax


def _np_soc_root(qa, qb, qc, x0, d0):
    best = -x0 / d0 if d0 < 0.0 else np.inf
    qc = max(qc, 0.0)
    disc = qb * qb - qa * qc
    if disc >= 0.0:
        sq = math.sqrt(disc)
        q = -(qb + sq) if qb >= 0.0 else -(qb - sq)
        if q != 0.0 and 0.0 < qc / q < best:
            best = qc / q
        if qa != 0.0 and 0.0 < q / qa < best:
            best = q / qa
    elif qa < 0.0:
        best = 0.0
    return best


def np_second_moments(g):
    n = g.shape[0]
    mean = g.mean(axis=0)
    mom = np.einsum("rkil,rkim->kilm", g, g.conj(), optimize=True) / n
    return mean, mom


# ----------------------------------------------------------------------------
# dispatch
# ----------------------------------------------------------------------------

if USE_NUMBA:
    nt_scaling = nb_nt_scaling
    _scale2d = nb_scale
    jprod = nb_jprod
    jdiv = nb_jdiv
    max_step = nb_max_step
    second_moments = nb_second_moments
else:
    nt_scaling = np_nt_scaling
    _scale2d = np_scale
    jprod = np_jprod
    jdiv = np_jdiv
    max_step = np_max_step
    second_moments = np_second_moments


def scale(d, beta, v, nl, qs, x, inverse=False):
    """Apply W (or its inverse) to a vector or to every column of a matrix."""
    if x.ndim == 1:
        return _scale2d(d, beta, v, nl, qs, x[:, None], inverse)[:, 0]
    return _scale2d(d, beta, v, nl, qs, np.ascontiguousarray(x), inverse)


def identity(nl, qs):
    """Jordan identity of the product cone."""
    e = np.zeros(nl + int(np.sum(qs)))
    e[:nl] = 1.0
    for off, _ in _blocks(nl, qs):
        e[off] = 1.0
    return e
