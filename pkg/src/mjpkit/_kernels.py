"""Compiled inner loops for the Monte Carlo core.

Everything here is numba-jitted and operates on plain float64/int64 arrays;
the public modules own validation and array preparation.  Reaction networks
enter as ``(Sf, term_rx, term_sp, term_ord, term_ptr)`` where ``Sf`` is the
``u x v`` float stoichiometry matrix and the ``term_*`` arrays flatten the
mass-action reactant multiplicities grouped by reaction (``term_ptr`` holds
the per-reaction offsets).

Randomness comes from a ``numpy.random.Generator`` passed in by the caller;
draws are consumed lane by lane (each particle runs to completion before
the next starts), so a kernel's output is a pure function of the generator
state on entry.  Waiting times are inverse-CDF exponentials and reaction
types come from a single uniform against the cumulative hazard, matching
the scalar reference implementations in :mod:`mjpkit.simulate` and
:mod:`mjpkit.bridge` draw for draw.
"""

import numba as nb
import numpy as np

_U_FLOOR = 2.0 ** -53


@nb.njit(cache=True, inline="always")
def _poly(z, p):
    """Falling-factorial form of C(z, p) extended to real z."""
    f = 1.0
    for q in range(p):
        f *= (z - q) / (q + 1.0)
    return f


@nb.njit(cache=True, inline="always")
def _dpoly(z, p):
    """Derivative of :func:`_poly` with respect to z."""
    if p == 1:
        return 1.0
    acc = 0.0
    for leave in range(p):
        term = 1.0
        for q in range(p):
            if q != leave:
                term *= z - q
        acc += term
    fact = 1.0
    for q in range(p):
        fact *= q + 1.0
    return acc / fact


@nb.njit(cache=True)
def hazards_into(x, c, term_rx, term_sp, term_ord, out):
    """Mass-action hazards at one state, written into ``out``."""
    v = c.shape[0]
    for i in range(v):
        out[i] = c[i]
    for k in range(term_rx.shape[0]):
        out[term_rx[k]] *= _poly(x[term_sp[k]], term_ord[k])


@nb.njit(cache=True)
def gillespie_batch(gen, X, t, t_end, c, Sf, term_rx, term_sp, term_ord, cap):
    """Advance every lane of ``X`` to ``t_end`` by the direct method.

    ``X`` is (B, u) float64 counts and ``t`` (B,) the per-lane current
    times, both updated in place.  The event whose waiting time overshoots
    ``t_end`` is discarded; a lane with zero total hazard is absorbed.
    Returns per-lane event counts and a flag marking lanes that hit the
    event budget ``cap`` (their states are left mid-flight and the caller
    is expected to discard them).
    """
    B, u = X.shape
    v = c.shape[0]
    h = np.empty(v)
    nev = np.zeros(B, dtype=np.int64)
    capped = np.zeros(B, dtype=np.bool_)
    for b in range(B):
        tb = t[b]
        n = 0
        while True:
            hazards_into(X[b], c, term_rx, term_sp, term_ord, h)
            h0 = 0.0
            for i in range(v):
                h0 += h[i]
            if h0 <= 0.0:
                break
            uu = gen.random()
            if uu < _U_FLOOR:
                uu = _U_FLOOR
            tau = -np.log1p(-uu) / h0
            if tb + tau > t_end:
                break
            r = gen.random() * h0
            acc = 0.0
            idx = -1
            last = 0
            for i in range(v):
                if h[i] > 0.0:
                    acc += h[i]
                    last = i
                    if r < acc:
                        idx = i
                        break
            if idx < 0:
                idx = last
            for j in range(u):
                X[b, j] += Sf[j, idx]
            tb += tau
            n += 1
            if n >= cap:
                capped[b] = True
                break
        t[b] = t_end
        nev[b] = n
    return nev, capped


@nb.njit(cache=True, inline="always")
def _chol_solve(M, rhs, out):
    """Solve M x = rhs for symmetric positive-definite M (in-place scratch).

    Returns False when a pivot collapses, signalling a (numerically)
    singular system.  M and rhs are destroyed.
    """
    p = M.shape[0]
    scale = 1.0
    for a in range(p):
        if M[a, a] > scale:
            scale = M[a, a]
    tol = 1e-13 * scale
    for a in range(p):
        for b2 in range(a):
            s = M[a, b2]
            for k in range(b2):
                s -= M[a, k] * M[b2, k]
            M[a, b2] = s / M[b2, b2]
        s = M[a, a]
        for k in range(a):
            s -= M[a, k] * M[a, k]
        if not s > tol:
            return False
        M[a, a] = np.sqrt(s)
    for a in range(p):
        s = rhs[a]
        for k in range(a):
            s -= M[a, k] * rhs[k]
        rhs[a] = s / M[a, a]
    for a in range(p - 1, -1, -1):
        s = rhs[a]
        for k in range(a + 1, p):
            s -= M[k, a] * out[k]
        out[a] = s / M[a, a]
    return True


@nb.njit(cache=True, inline="always")
def _conditioned_into(h, x, ds, Sf, PT, PS, y, Sig, hs, M, resid, alpha):
    """Observation-conditioned hazard at one state (truncated at zero).

    Writes into ``hs`` and returns True, or returns False after copying the
    unconditioned hazard when the projected-covariance system is singular.
    """
    p = y.shape[0]
    u = x.shape[0]
    v = h.shape[0]
    for a in range(p):
        pred = 0.0
        for j in range(u):
            sh = 0.0
            for i in range(v):
                sh += Sf[j, i] * h[i]
            pred += PT[a, j] * (x[j] + sh * ds)
        resid[a] = y[a] - pred
        for b2 in range(p):
            m = 0.0
            for i in range(v):
                m += PS[a, i] * h[i] * PS[b2, i]
            M[a, b2] = m * ds + Sig[a, b2]
    ok = _chol_solve(M, resid, alpha)
    if not ok:
        for i in range(v):
            hs[i] = h[i]
        return False
    for i in range(v):
        corr = 0.0
        for a in range(p):
            corr += PS[a, i] * alpha[a]
        val = h[i] * (1.0 + corr)
        hs[i] = val if val > 0.0 else 0.0
    return True


@nb.njit(cache=True)
def conditioned_hazard_single(x, c, ds, Sf, PT, PS, y, Sig, term_rx, term_sp, term_ord):
    """Conditioned hazard at one state; also reports the singular fallback."""
    v = c.shape[0]
    p = y.shape[0]
    h = np.empty(v)
    hs = np.empty(v)
    hazards_into(x, c, term_rx, term_sp, term_ord, h)
    M = np.empty((p, p))
    resid = np.empty(p)
    alpha = np.empty(p)
    ok = _conditioned_into(h, x, ds, Sf, PT, PS, y, Sig, hs, M, resid, alpha)
    return hs, ok


@nb.njit(cache=True)
def ch_batch(gen, X, t, t_end, c, Sf, PT, PS, y, Sig,
             term_rx, term_sp, term_ord, lw, cap):
    """Propagate lanes under the conditioned hazard, accumulating log-weights.

    For each lane the generator alternates a waiting-time uniform and a
    type uniform exactly as :func:`gillespie_batch` does, but with rates
    given by the conditioned hazard recomputed after every accepted event
    (the remaining horizon being ``t_end`` minus the current time).  ``lw``
    accumulates, per lane,

        sum_events [log h - log h*]  -  integral (h0 - h*0) dt

    where h* is the truncated hazard that actually generated the path. The
    observation factor is the caller's business.  Lanes whose target hazard
    vanishes at a realised event get ``lw = -inf``.
    """
    B, u = X.shape
    v = c.shape[0]
    p = y.shape[0]
    h = np.empty(v)
    hs = np.empty(v)
    M = np.empty((p, p))
    resid = np.empty(p)
    alpha = np.empty(p)
    nev = np.zeros(B, dtype=np.int64)
    capped = np.zeros(B, dtype=np.bool_)
    fallbacks = 0
    for b in range(B):
        tb = t[b]
        n = 0
        while True:
            hazards_into(X[b], c, term_rx, term_sp, term_ord, h)
            h0 = 0.0
            for i in range(v):
                h0 += h[i]
            ds = t_end - tb
            ok = _conditioned_into(h, X[b], ds, Sf, PT, PS, y, Sig, hs, M, resid, alpha)
            if not ok:
                fallbacks += 1
            hs0 = 0.0
            for i in range(v):
                hs0 += hs[i]
            if hs0 <= 0.0:
                lw[b] -= h0 * (t_end - tb)
                break
            uu = gen.random()
            if uu < _U_FLOOR:
                uu = _U_FLOOR
            tau = -np.log1p(-uu) / hs0
            if tb + tau > t_end:
                lw[b] -= (h0 - hs0) * (t_end - tb)
                break
            r = gen.random() * hs0
            acc = 0.0
            idx = -1
            last = 0
            for i in range(v):
                if hs[i] > 0.0:
                    acc += hs[i]
                    last = i
                    if r < acc:
                        idx = i
                        break
            if idx < 0:
                idx = last
            lw[b] += np.log(h[idx]) - np.log(hs[idx]) - (h0 - hs0) * tau
            for j in range(u):
                X[b, j] += Sf[j, idx]
            tb += tau
            n += 1
            if n >= cap:
                capped[b] = True
                break
        t[b] = t_end
        nev[b] = n
    return nev, capped, fallbacks


@nb.njit(cache=True, inline="always")
def _lna_rhs_lanes(z, V, G, want_G, c, Sf, term_sp, term_ord, term_ptr,
                   f, F, J, dz, dV, dG):
    """Drift of the joint (mean, covariance, sensitivity) ODE system.

    All arrays are lane-major (last axis is the batch), so the innermost
    loops stream over contiguous memory.  Mass-action rates at real-valued
    states use the falling-factorial polynomials clamped at zero, with the
    corresponding Jacobian entries zeroed to keep the linearisation
    consistent.
    """
    u = z.shape[0]
    B = z.shape[1]
    v = c.shape[0]
    for i in range(v):
        for j in range(u):
            for b in range(B):
                F[i, j, b] = 0.0
        for b in range(B):
            f[i, b] = c[i]
        for k in range(term_ptr[i], term_ptr[i + 1]):
            sp = term_sp[k]
            od = term_ord[k]
            for b in range(B):
                f[i, b] *= _poly(z[sp, b], od)
        for k in range(term_ptr[i], term_ptr[i + 1]):
            sp = term_sp[k]
            od = term_ord[k]
            for b in range(B):
                g = c[i] * _dpoly(z[sp, b], od)
                for m in range(term_ptr[i], term_ptr[i + 1]):
                    if m != k:
                        g *= _poly(z[term_sp[m], b], term_ord[m])
                F[i, sp, b] += g
        for b in range(B):
            if f[i, b] < 0.0:
                f[i, b] = 0.0
                for j in range(u):
                    F[i, j, b] = 0.0
    # J = Sf F  (u x u Jacobian of the drift, per lane)
    for a in range(u):
        for j in range(u):
            for b in range(B):
                s = 0.0
                for i in range(v):
                    s += Sf[a, i] * F[i, j, b]
                J[a, j, b] = s
    for a in range(u):
        for b in range(B):
            s = 0.0
            for i in range(v):
                s += Sf[a, i] * f[i, b]
            dz[a, b] = s
    # dV = J V + V J' + Sf diag(f) Sf'
    for a in range(u):
        for b2 in range(u):
            for b in range(B):
                s = 0.0
                for k in range(u):
                    s += J[a, k, b] * V[k, b2, b] + V[a, k, b] * J[b2, k, b]
                for i in range(v):
                    s += Sf[a, i] * f[i, b] * Sf[b2, i]
                dV[a, b2, b] = s
    if want_G:
        for a in range(u):
            for b2 in range(u):
                for b in range(B):
                    s = 0.0
                    for k in range(u):
                        s += J[a, k, b] * G[k, b2, b]
                    dG[a, b2, b] = s


@nb.njit(cache=True)
def lna_rk4_batch(z, V, G, want_G, window, nsteps, c, Sf,
                  term_sp, term_ord, term_ptr):
    """Integrate the LNA moment ODEs over ``window`` with fixed-step RK4.

    ``z`` (u, B), ``V`` (u, u, B) and, when ``want_G``, ``G`` (u, u, B) are
    advanced in place (lane-major).  Returns False if any lane goes
    non-finite.
    """
    u, B = z.shape
    v = c.shape[0]
    hstep = window / nsteps
    f = np.empty((v, B))
    F = np.empty((v, u, B))
    J = np.empty((u, u, B))
    zs = np.empty((u, B))
    Vs = np.empty((u, u, B))
    Gs = np.empty((u, u, B)) if want_G else np.empty((0, 0, B))
    kz = np.empty((4, u, B))
    kV = np.empty((4, u, u, B))
    kG = np.empty((4, u, u, B)) if want_G else np.empty((4, 0, 0, B))
    for _ in range(nsteps):
        _lna_rhs_lanes(z, V, G, want_G, c, Sf, term_sp, term_ord, term_ptr,
                       f, F, J, kz[0], kV[0], kG[0])
        for s in range(3):
            w = (0.5 if s < 2 else 1.0) * hstep
            for a in range(u):
                for b in range(B):
                    zs[a, b] = z[a, b] + w * kz[s, a, b]
                for d in range(u):
                    for b in range(B):
                        Vs[a, d, b] = V[a, d, b] + w * kV[s, a, d, b]
                        if want_G:
                            Gs[a, d, b] = G[a, d, b] + w * kG[s, a, d, b]
            _lna_rhs_lanes(zs, Vs, Gs, want_G, c, Sf, term_sp, term_ord, term_ptr,
                           f, F, J, kz[s + 1], kV[s + 1], kG[s + 1])
        h6 = hstep / 6.0
        for a in range(u):
            for b in range(B):
                z[a, b] += h6 * (kz[0, a, b] + 2.0 * kz[1, a, b]
                                 + 2.0 * kz[2, a, b] + kz[3, a, b])
            for d in range(u):
                for b in range(B):
                    V[a, d, b] += h6 * (kV[0, a, d, b] + 2.0 * kV[1, a, d, b]
                                        + 2.0 * kV[2, a, d, b] + kV[3, a, d, b])
                    if want_G:
                        G[a, d, b] += h6 * (kG[0, a, d, b] + 2.0 * kG[1, a, d, b]
                                            + 2.0 * kG[2, a, d, b] + kG[3, a, d, b])
    for a in range(u):
        for b in range(B):
            if not np.isfinite(z[a, b]):
                return False
        for d in range(u):
            for b in range(B):
                if not np.isfinite(V[a, d, b]):
                    return False
    return True
