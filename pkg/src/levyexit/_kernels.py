"""Compiled inner loops: inter-jump integration with event location, and tilt shooting.

Vector fields are passed as flat parameter arrays (see ``dynamics`` for the encoding):

* drift: componentwise polynomial, ``b_i(x) = sum_k coeffs[k] * x_i**k``;
* coefficient ``G``: a float for a constant coefficient, otherwise an array
  ``[offset, floor, slope...]`` for ``s * max(floor, s * (offset + slope . x))`` with
  ``s = sign(offset)``.  The two cases compile to separate specialisations, which keeps
  the constant case free of the affine branch in the RK4 stages;
* domain: kind 0 whole space, 1 box ``[lo..., hi...]``, 2 ball ``[R, center...]``;
* target event: kind 0 none, 1 entering the closed ball ``|x| <= tpar``, 2 leaving it.
"""

from __future__ import annotations

import numpy as np
from numba import njit, types
from numba.extending import overload

STATUS_CHUNK_DONE = 0
STATUS_EXIT = 1
STATUS_TARGET = 2
STATUS_HORIZON = 3
STATUS_BLOWUP = 4

_BLOWUP_NORM = 1e8


def g_value(x, gpar):
    """Multiplicative coefficient G(x)."""
    if np.ndim(gpar) == 0:
        return float(gpar)
    v = gpar[0] + float(np.dot(gpar[2:], x))
    s = np.sign(gpar[0])
    return s * max(gpar[1], s * v)


@overload(g_value)
def _g_value_impl(x, gpar):
    if isinstance(gpar, types.Float):
        return lambda x, gpar: gpar

    def impl(x, gpar):
        v = gpar[0]
        for i in range(x.shape[0]):
            v += gpar[2 + i] * x[i]
        s = np.sign(gpar[0])
        return s * max(gpar[1], s * v)

    return impl


@njit(cache=True, inline="always")
def vector_field(x, coeffs, gpar, shift, out):
    """out = b(x) + G(x) * shift."""
    gx = g_value(x, gpar)
    nc = coeffs.shape[0]
    for i in range(x.shape[0]):
        p = 0.0
        for k in range(nc - 1, -1, -1):
            p = p * x[i] + coeffs[k]
        out[i] = p + gx * shift[i]


@njit(cache=True, inline="always")
def domain_sd(x, dkind, dpar):
    d = x.shape[0]
    if dkind == 0:
        return -1e300
    if dkind == 1:
        s = -1e300
        for i in range(d):
            a = dpar[i] - x[i]
            b = x[i] - dpar[d + i]
            if a > s:
                s = a
            if b > s:
                s = b
        return s
    r2 = 0.0
    for i in range(d):
        r2 += (x[i] - dpar[1 + i]) ** 2
    return np.sqrt(r2) - dpar[0]


@njit(cache=True, inline="always")
def target_sd(x, tkind, tpar):
    if tkind == 0:
        return -1e300
    r = np.sqrt(np.sum(x * x))
    if tkind == 1:
        return tpar - r
    return r - tpar


@njit(cache=True, inline="always")
def rk4_step(x, h, coeffs, gpar, shift, k1, k2, k3, k4, tmp, out):
    d = x.shape[0]
    vector_field(x, coeffs, gpar, shift, k1)
    for i in range(d):
        tmp[i] = x[i] + 0.5 * h * k1[i]
    vector_field(tmp, coeffs, gpar, shift, k2)
    for i in range(d):
        tmp[i] = x[i] + 0.5 * h * k2[i]
    vector_field(tmp, coeffs, gpar, shift, k3)
    for i in range(d):
        tmp[i] = x[i] + h * k3[i]
    vector_field(tmp, coeffs, gpar, shift, k4)
    for i in range(d):
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True, inline="always")
def _finite(x):
    for i in range(x.shape[0]):
        if not np.isfinite(x[i]) or abs(x[i]) > _BLOWUP_NORM:
            return False
    return True


@njit(cache=True, inline="always")
def _stop_value(x, dkind, dpar, tkind, tpar):
    a = domain_sd(x, dkind, dpar)
    b = target_sd(x, tkind, tpar)
    return a if a > b else b


@njit(cache=True)
def flow_with_events(x, t, t_end, dt, coeffs, gpar, shift, dkind, dpar, tkind, tpar, bufs):
    """Integrate in place from t to t_end; stop at the first event.

    Returns (status, time) with status 0 (reached t_end), 1 (domain exit),
    2 (target event) or 4 (blowup).
    """
    k1, k2, k3, k4, tmp, xn = bufs[0], bufs[1], bufs[2], bufs[3], bufs[4], bufs[5]
    span = t_end - t
    if span <= 0.0:
        return 0, t
    nsub = int(np.ceil(span / dt - 1e-12))
    if nsub < 1:
        nsub = 1
    h = span / nsub
    tol = dt * 1e-3
    for s in range(nsub):
        rk4_step(x, h, coeffs, gpar, shift, k1, k2, k3, k4, tmp, xn)
        if not _finite(xn):
            return 4, t
        if _stop_value(xn, dkind, dpar, tkind, tpar) >= 0.0:
            lo = 0.0
            hi = h
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                rk4_step(x, mid, coeffs, gpar, shift, k1, k2, k3, k4, tmp, xn)
                if _stop_value(xn, dkind, dpar, tkind, tpar) >= 0.0:
                    hi = mid
                else:
                    lo = mid
            rk4_step(x, hi, coeffs, gpar, shift, k1, k2, k3, k4, tmp, xn)
            x[:] = xn
            status = 1 if domain_sd(x, dkind, dpar) >= 0.0 else 2
            return status, t + hi
        x[:] = xn
        t = t + h if s < nsub - 1 else t_end
    return 0, t_end


@njit(cache=True)
def advance(
    x, t, times, marks, start, eps, coeffs, gpar, shift,
    dkind, dpar, tkind, tpar, dt, t_cap, final_flow, rec, do_rec,
):
    """Run the jump-driven dynamics through ``times[start:]``.

    ``x`` is updated in place.  Returns ``(status, next_index, time)``; on status 0 all
    jumps of the chunk are consumed and ``time`` is the last jump time.  With
    ``final_flow`` the flow is continued to ``t_cap`` after the last jump.
    """
    d = x.shape[0]
    bufs = np.empty((6, d))
    n = times.shape[0]
    j = start
    while j < n:
        tj = times[j]
        t_end = tj if tj < t_cap else t_cap
        status, t = flow_with_events(
            x, t, t_end, dt, coeffs, gpar, shift, dkind, dpar, tkind, tpar, bufs
        )
        if status != 0:
            return status, j, t
        if tj > t_cap:
            return STATUS_HORIZON, j, t_cap
        gx = g_value(x, gpar)
        if do_rec:
            rec[j, 0] = tj
            for i in range(d):
                rec[j, 1 + i] = x[i]
        for i in range(d):
            x[i] += eps * gx * marks[j, i]
        if do_rec:
            for i in range(d):
                rec[j, 1 + d + i] = x[i]
        if not _finite(x):
            return STATUS_BLOWUP, j + 1, tj
        j += 1
        if domain_sd(x, dkind, dpar) >= 0.0:
            return STATUS_EXIT, j, tj
        if target_sd(x, tkind, tpar) >= 0.0:
            return STATUS_TARGET, j, tj
    if final_flow:
        status, t = flow_with_events(
            x, t, t_cap, dt, coeffs, gpar, shift, dkind, dpar, tkind, tpar, bufs
        )
        if status != 0:
            return status, n, t
        return STATUS_HORIZON, n, t_cap
    return STATUS_CHUNK_DONE, n, t


# ---------------------------------------------------------------------------
# controlled ODE with piecewise-constant forcing and exponential tilts


@njit(cache=True)
def flow_forced(x0, f, T, nsteps, coeffs, gpar, out):
    """Endpoint of dx/dt = b(x) + G(x) f over [0, T] by RK4; returns False on blowup."""
    d = x0.shape[0]
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    xn = np.empty(d)
    out[:] = x0
    h = T / nsteps
    for _ in range(nsteps):
        rk4_step(out, h, coeffs, gpar, f, k1, k2, k3, k4, tmp, xn)
        if not _finite(xn):
            return False
        out[:] = xn
    return True


@njit(cache=True)
def shoot_forcing(x0, x1, T, nsteps, coeffs, gpar, f0, f_out):
    """Newton shooting for the constant forcing steering x0 to x1 in time T."""
    d = x0.shape[0]
    f = f0.copy()
    y = np.empty(d)
    yp = np.empty(d)
    res = np.empty(d)
    jac = np.empty((d, d))
    scale = 1.0 + np.sqrt(np.sum(x1 * x1))
    prev = np.inf
    for _ in range(60):
        if not flow_forced(x0, f, T, nsteps, coeffs, gpar, y):
            return False
        for i in range(d):
            res[i] = y[i] - x1[i]
        rn = np.sqrt(np.sum(res * res))
        if rn < 1e-12 * scale:
            f_out[:] = f
            return True
        if rn >= 0.5 * prev and rn < 1e-9 * scale:
            # rounding floor of the integrator reached
            f_out[:] = f
            return True
        prev = rn
        for c in range(d):
            step = 1e-6 * (1.0 + abs(f[c]))
            fp = f.copy()
            fp[c] += step
            if not flow_forced(x0, fp, T, nsteps, coeffs, gpar, yp):
                return False
            for i in range(d):
                jac[i, c] = (yp[i] - y[i]) / step
        delta = np.linalg.solve(jac, -res)
        norm_delta = np.sqrt(np.sum(delta * delta))
        cap = 10.0 * (1.0 + np.sqrt(np.sum(f * f)))
        if norm_delta > cap:
            delta *= cap / norm_delta
        f += delta
    return False


@njit(cache=True)
def _log_partition(theta, cent, mass, first_total):
    """Lambda(theta) = sum_c mass_c (exp(theta.c_c) - 1) - theta . sum_c mu_c."""
    val = 0.0
    for c in range(mass.shape[0]):
        e = 0.0
        for i in range(theta.shape[0]):
            e += theta[i] * cent[c, i]
        val += mass[c] * np.expm1(e)
    for i in range(theta.shape[0]):
        val -= theta[i] * first_total[i]
    return val


@njit(cache=True)
def tilt_for_forcing(f, cent, mass, theta_out, max_exponent, warm=False):
    """Exponential tilt exp(theta . c) on mark cells whose mean forcing equals ``f``.

    Solves grad Lambda(theta) = f by damped Newton; returns the entropy rate
    theta . f - Lambda(theta), or -1.0 when no admissible tilt exists.
    """
    d = f.shape[0]
    nc = mass.shape[0]
    first_total = np.zeros(d)
    for c in range(nc):
        for i in range(d):
            first_total[i] += mass[c] * cent[c, i]
    theta = np.zeros(d)
    if warm and _finite(theta_out):
        # start from the previous solution when it is admissible
        ok = True
        for c in range(nc):
            e = 0.0
            for i in range(d):
                e += theta_out[i] * cent[c, i]
            if e > max_exponent:
                ok = False
        if ok:
            theta[:] = theta_out
    grad = np.empty(d)
    hess = np.empty((d, d))
    fscale = 1.0 + np.sqrt(np.sum(f * f))
    stalled = 0
    for _ in range(200):
        grad[:] = 0.0
        hess[:, :] = 0.0
        for c in range(nc):
            e = 0.0
            for i in range(d):
                e += theta[i] * cent[c, i]
            if e > max_exponent:
                return -1.0
            w = mass[c] * np.exp(e)
            for i in range(d):
                grad[i] += w * cent[c, i]
                for k in range(d):
                    hess[i, k] += w * cent[c, i] * cent[c, k]
        for i in range(d):
            grad[i] -= first_total[i] + f[i]
        if np.sqrt(np.sum(grad * grad)) < 1e-13 * fscale:
            theta_out[:] = theta
            return 0.0 + _dot(theta, f) - _log_partition(theta, cent, mass, first_total)
        for i in range(d):
            hess[i, i] += 1e-300
        step = np.linalg.solve(hess, -grad)
        if np.sqrt(np.sum(grad * grad)) < 1e-6 * fscale:
            # quadratic regime: the merit function is flat to rounding, take the full step
            ok = True
            for c in range(nc):
                e = 0.0
                for i in range(d):
                    e += (theta[i] + step[i]) * cent[c, i]
                if e > max_exponent:
                    ok = False
            if ok:
                theta = theta + step
                stalled += 1
                if stalled > 8:
                    theta_out[:] = theta
                    return 0.0 + _dot(theta, f) - _log_partition(theta, cent, mass, first_total)
                continue
        phi0 = _log_partition(theta, cent, mass, first_total) - _dot(theta, f)
        slope = _dot(step, grad)
        a = 1.0
        for _ls in range(60):
            trial = theta + a * step
            ok = True
            for c in range(nc):
                e = 0.0
                for i in range(d):
                    e += trial[i] * cent[c, i]
                if e > max_exponent:
                    ok = False
                    break
            if ok:
                phi = _log_partition(trial, cent, mass, first_total) - _dot(trial, f)
                if phi <= phi0 + 1e-4 * a * slope or a < 1e-12:
                    break
            a *= 0.5
        theta = theta + a * step
    return -1.0


@njit(cache=True, inline="always")
def _dot(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


@njit(cache=True)
def tilt_path_cost(knots, times, h_max, coeffs, gpar, cent, mass, max_exponent,
                   forcing_out, theta_out, warm=False):
    """Total entropy of the piecewise-constant exponential tilt through the knots.

    Segment ``k`` carries the constant forcing that steers ``knots[k]`` to ``knots[k+1]``
    over ``[times[k], times[k+1]]``.  Returns ``inf`` if any segment is unreachable.
    """
    nseg = knots.shape[0] - 1
    d = knots.shape[1]
    total = 0.0
    f0 = np.empty(d)
    mid = np.empty(d)
    bx = np.empty(d)
    zero = np.zeros(d)
    for k in range(nseg):
        T = times[k + 1] - times[k]
        if T <= 0.0:
            return np.inf
        nsteps = int(np.ceil(T / h_max))
        if nsteps < 8:
            nsteps = 8
        for i in range(d):
            mid[i] = 0.5 * (knots[k, i] + knots[k + 1, i])
        vector_field(mid, coeffs, gpar, zero, bx)
        gm = g_value(mid, gpar)
        if warm and _finite(forcing_out[k]):
            f0[:] = forcing_out[k]
        else:
            for i in range(d):
                f0[i] = ((knots[k + 1, i] - knots[k, i]) / T - bx[i]) / gm
        if not shoot_forcing(knots[k], knots[k + 1], T, nsteps, coeffs, gpar, f0, forcing_out[k]):
            forcing_out[k, :] = np.nan
            return np.inf
        rate = tilt_for_forcing(forcing_out[k], cent, mass, theta_out[k], max_exponent, warm)
        if rate < 0.0:
            return np.inf
        total += T * rate
    return total


@njit(cache=True)
def tilt_param_cost(p, m, x, y, T, h_max, coeffs, gpar, cent, mass, max_exponent,
                    knots, times, forcing_out, theta_out, penalty):
    """Cost of the polyline with interior knots ``p[:m*d]`` and softmax time logits ``p[m*d:]``.

    ``forcing_out`` and ``theta_out`` hold the previous solution and serve as warm starts.
    """
    d = x.shape[0]
    knots[0, :] = x
    knots[m + 1, :] = y
    for j in range(m):
        for i in range(d):
            knots[j + 1, i] = p[j * d + i]
    if not _finite(p):
        return penalty
    lmax = -np.inf
    for j in range(m + 1):
        if p[m * d + j] > lmax:
            lmax = p[m * d + j]
    tot = 0.0
    for j in range(m + 1):
        tot += np.exp(p[m * d + j] - lmax)
    times[0] = 0.0
    acc = 0.0
    for j in range(m + 1):
        w = np.exp(p[m * d + j] - lmax) / tot
        if w * T <= 1e-9:
            return penalty
        acc += w
        times[j + 1] = T * acc
    times[m + 1] = T
    val = tilt_path_cost(knots, times, h_max, coeffs, gpar, cent, mass, max_exponent,
                         forcing_out, theta_out, True)
    if not np.isfinite(val):
        return penalty
    return val


@njit(cache=True)
def rk4_path(x0, T, nsteps, coeffs, gpar, shift, out):
    """Fill ``out[(nsteps + 1), d]`` with the RK4 path of dx/dt = b(x) + G(x) shift."""
    d = x0.shape[0]
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    out[0] = x0
    h = T / nsteps
    for n in range(nsteps):
        rk4_step(out[n], h, coeffs, gpar, shift, k1, k2, k3, k4, tmp, out[n + 1])
        if not _finite(out[n + 1]):
            return n + 1
    return -1
