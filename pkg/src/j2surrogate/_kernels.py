"""Compiled scalar kernels for the hot paths.

Everything here works on plain floats and small float64 arrays so that numba
can compile it. The public modules wrap these with dataclasses and argument
checking; nothing in this file validates its inputs.

Element tuples are ordered (a, e, i, raan, argp, mean_anomaly).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
KEPLER_TOL = 1e-12
LAMBERT_TOL = 1e-10  # seconds of time-of-flight residual
LAMBERT_MAXITER = 60

# status codes returned by the kernels
OK = 0
NO_CONVERGENCE = 1
BAD_GEOMETRY = 2
NOT_ELLIPTIC = 3


@njit(cache=True)
def wrap_2pi(x):
    y = np.fmod(x, TWO_PI)
    if y < 0.0:
        y += TWO_PI
    if y >= TWO_PI:
        y = 0.0
    return y


@njit(cache=True)
def wrap_pi(x):
    """Signed principal value in (-pi, pi]."""
    y = np.fmod(x, TWO_PI)
    if y <= -math.pi:
        y += TWO_PI
    elif y > math.pi:
        y -= TWO_PI
    return y


@njit(cache=True)
def kepler_eccentric(M, e):
    """Solve E - e sin E = M. Returns (E, status)."""
    M = wrap_pi(M)
    lo = M - e
    hi = M + e
    E = M + e * math.sin(M) if e < 0.8 else (math.pi if M >= 0.0 else -math.pi)
    if E < lo or E > hi:
        E = 0.5 * (lo + hi)
    for _ in range(100):
        f = E - e * math.sin(E) - M
        if abs(f) <= 1e-15:
            return E, OK
        if f > 0.0:
            hi = E
        else:
            lo = E
        step = f / (1.0 - e * math.cos(E))
        E_new = E - step
        if E_new <= lo or E_new >= hi:
            E_new = 0.5 * (lo + hi)
        if abs(E_new - E) <= 1e-15 * (1.0 + abs(E)):
            E = E_new
            break
        E = E_new
    if abs(E - e * math.sin(E) - M) <= KEPLER_TOL:
        return E, OK
    return E, NO_CONVERGENCE


@njit(cache=True)
def true_to_mean(f, e):
    E = math.atan2(math.sqrt(1.0 - e * e) * math.sin(f), e + math.cos(f))
    return wrap_2pi(E - e * math.sin(E))


@njit(cache=True)
def mean_to_true(M, e):
    E, _ = kepler_eccentric(M, e)
    return wrap_2pi(math.atan2(math.sqrt(1.0 - e * e) * math.sin(E), math.cos(E) - e))


@njit(cache=True)
def el2cart(a, e, i, raan, argp, M, mu):
    E, _ = kepler_eccentric(M, e)
    cE = math.cos(E)
    sE = math.sin(E)
    b = math.sqrt(1.0 - e * e)
    xp = a * (cE - e)
    yp = a * b * sE
    r = a * (1.0 - e * cE)
    k = math.sqrt(mu * a) / r
    vxp = -k * sE
    vyp = k * b * cE

    cO = math.cos(raan)
    sO = math.sin(raan)
    cw = math.cos(argp)
    sw = math.sin(argp)
    ci = math.cos(i)
    si = math.sin(i)
    p11 = cO * cw - sO * sw * ci
    p12 = -cO * sw - sO * cw * ci
    p21 = sO * cw + cO * sw * ci
    p22 = -sO * sw + cO * cw * ci
    p31 = sw * si
    p32 = cw * si
    return (
        p11 * xp + p12 * yp,
        p21 * xp + p22 * yp,
        p31 * xp + p32 * yp,
        p11 * vxp + p12 * vyp,
        p21 * vxp + p22 * vyp,
        p31 * vxp + p32 * vyp,
    )


@njit(cache=True)
def cart2el(x, y, z, vx, vy, vz, mu):
    """Returns (a, e, i, raan, argp, M, status)."""
    r = math.sqrt(x * x + y * y + z * z)
    v2 = vx * vx + vy * vy + vz * vz
    hx = y * vz - z * vy
    hy = z * vx - x * vz
    hz = x * vy - y * vx
    h = math.sqrt(hx * hx + hy * hy + hz * hz)
    energy = 0.5 * v2 - mu / r
    if energy >= 0.0:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, NOT_ELLIPTIC
    if h <= 1e-10 * r * math.sqrt(v2):
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, BAD_GEOMETRY
    a = -mu / (2.0 * energy)
    rv = x * vx + y * vy + z * vz
    c1 = v2 - mu / r
    ex = (c1 * x - rv * vx) / mu
    ey = (c1 * y - rv * vy) / mu
    ez = (c1 * z - rv * vz) / mu
    e = math.sqrt(ex * ex + ey * ey + ez * ez)

    hxy = math.sqrt(hx * hx + hy * hy)
    i = math.atan2(hxy, hz)
    if hxy > 1e-12 * h:
        raan = math.atan2(hx, -hy)
    else:
        raan = 0.0
    # in-plane basis: node line n, and m = h_hat x n
    nx = math.cos(raan)
    ny = math.sin(raan)
    mx = -(hz / h) * ny
    my = (hz / h) * nx
    mz = (hx * ny - hy * nx) / h
    u = math.atan2(x * mx + y * my + z * mz, x * nx + y * ny)
    if e > 1e-14:
        argp = math.atan2(ex * mx + ey * my + ez * mz, ex * nx + ey * ny)
    else:
        argp = 0.0
        e = 0.0
    f = u - argp
    E = math.atan2(math.sqrt(1.0 - e * e) * math.sin(f), e + math.cos(f))
    M = E - e * math.sin(E)
    return a, e, i, wrap_2pi(raan), wrap_2pi(argp), wrap_2pi(M), OK


@njit(cache=True)
def j2_rates(a, e, i, mu, j2, re):
    """Secular (raan_dot, argp_dot, M_dot) in rad/s."""
    p = a * (1.0 - e * e)
    n = math.sqrt(mu / (a * a * a))
    k = 1.5 * j2 * (re / p) ** 2 * n
    c = math.cos(i)
    raan_dot = -k * c
    argp_dot = 0.5 * k * (5.0 * c * c - 1.0)
    m_dot = n + 0.5 * k * math.sqrt(1.0 - e * e) * (3.0 * c * c - 1.0)
    return raan_dot, argp_dot, m_dot


@njit(cache=True)
def j2_advance(a, e, i, raan, argp, M, dt, mu, j2, re):
    if dt == 0.0:
        return raan, argp, M
    rd, wd, md = j2_rates(a, e, i, mu, j2, re)
    return wrap_2pi(raan + rd * dt), wrap_2pi(argp + wd * dt), wrap_2pi(M + md * dt)


@njit(cache=True)
def stumpff(psi):
    """Stumpff functions (c2, c3); series near zero to avoid cancellation."""
    if psi > 1e-2:
        s = math.sqrt(psi)
        h = math.sin(0.5 * s)
        return 2.0 * h * h / psi, (s - math.sin(s)) / (s * psi)
    if psi < -1e-2:
        s = math.sqrt(-psi)
        return (math.cosh(s) - 1.0) / (-psi), (math.sinh(s) - s) / (s * -psi)
    p2 = psi * psi
    return (
        0.5 - psi / 24.0 + p2 / 720.0 - p2 * psi / 40320.0 + p2 * p2 / 3628800.0,
        1.0 / 6.0 - psi / 120.0 + p2 / 5040.0 - p2 * psi / 362880.0 + p2 * p2 / 39916800.0,
    )


@njit(cache=True)
def twobody(x, y, z, vx, vy, vz, dt, mu):
    """Universal-variable Kepler propagation of an elliptic state.

    Returns (x, y, z, vx, vy, vz, status).
    """
    r0 = math.sqrt(x * x + y * y + z * z)
    v2 = vx * vx + vy * vy + vz * vz
    alpha = 2.0 / r0 - v2 / mu
    if alpha <= 0.0:
        return x, y, z, vx, vy, vz, NOT_ELLIPTIC
    if dt == 0.0:
        return x, y, z, vx, vy, vz, OK
    period = TWO_PI / math.sqrt(mu * alpha ** 3)
    dt = np.fmod(dt, period)
    smu = math.sqrt(mu)
    rv = (x * vx + y * vy + z * vz) / smu
    chi = smu * dt * alpha
    status = NO_CONVERGENCE
    r = r0
    c2 = 0.5
    c3 = 1.0 / 6.0
    psi = 0.0
    for _ in range(60):
        psi = chi * chi * alpha
        c2, c3 = stumpff(psi)
        chi2 = chi * chi
        r = chi2 * c2 + rv * chi * (1.0 - psi * c3) + r0 * (1.0 - psi * c2)
        delta = (smu * dt - chi2 * chi * c3 - rv * chi2 * c2 - r0 * chi * (1.0 - psi * c3)) / r
        chi += delta
        if abs(delta) <= 1e-13 * (1.0 + abs(chi)):
            status = OK
            break
    psi = chi * chi * alpha
    c2, c3 = stumpff(psi)
    chi2 = chi * chi
    r = chi2 * c2 + rv * chi * (1.0 - psi * c3) + r0 * (1.0 - psi * c2)
    f = 1.0 - chi2 / r0 * c2
    g = dt - chi2 * chi / smu * c3
    gd = 1.0 - chi2 / r * c2
    fd = smu / (r * r0) * chi * (psi * c3 - 1.0)
    return (
        f * x + g * vx,
        f * y + g * vy,
        f * z + g * vz,
        fd * x + gd * vx,
        fd * y + gd * vy,
        fd * z + gd * vz,
        status,
    )


@njit(cache=True)
def _lambert_tof(z, r1, r2, A, smu):
    c2, c3 = stumpff(z)
    y = r1 + r2 + A * (z * c3 - 1.0) / math.sqrt(c2)
    if y <= 0.0:
        return -1.0, y, c2, c3
    xx = math.sqrt(y / c2)
    return (xx * xx * xx * c3 + A * math.sqrt(y)) / smu, y, c2, c3


@njit(cache=True)
def lambert(x1, y1, z1, x2, y2, z2, dt, mu, long_way):
    """Zero-revolution universal-variable Lambert solver.

    Returns (v1x, v1y, v1z, v2x, v2y, v2z, iterations, residual, status) where
    residual is the last time-of-flight mismatch in seconds.
    """
    r1 = math.sqrt(x1 * x1 + y1 * y1 + z1 * z1)
    r2 = math.sqrt(x2 * x2 + y2 * y2 + z2 * z2)
    cosdnu = (x1 * x2 + y1 * y2 + z1 * z2) / (r1 * r2)
    if cosdnu > 1.0:
        cosdnu = 1.0
    elif cosdnu < -1.0:
        cosdnu = -1.0
    A = math.sqrt(r1 * r2 * (1.0 + cosdnu))
    if long_way:
        A = -A
    # transfer angle at pi (A -> 0) or at 0/2pi (rectilinear) is singular
    if abs(A) < 1e-8 * math.sqrt(r1 * r2) or 1.0 - cosdnu < 1e-16:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, math.inf, BAD_GEOMETRY
    if not dt > 0.0:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, math.inf, BAD_GEOMETRY
    smu = math.sqrt(mu)
    hi = 4.0 * math.pi * math.pi
    lo = -4.0 * math.pi * math.pi
    # push the lower bracket down until the time of flight falls short of dt
    for _ in range(200):
        t, y, c2, c3 = _lambert_tof(lo, r1, r2, A, smu)
        if t < dt:
            break
        lo = 2.0 * lo - 1.0
    z = 0.0
    if z <= lo:
        z = 0.5 * (lo + hi)
    status = NO_CONVERGENCE
    it = 0
    y = 0.0
    F = math.inf
    for it in range(1, LAMBERT_MAXITER + 1):
        t, y, c2, c3 = _lambert_tof(z, r1, r2, A, smu)
        if y <= 0.0:
            lo = z
            z = 0.5 * (lo + hi)
            F = math.inf
            continue
        F = t - dt
        if abs(F) <= LAMBERT_TOL:
            status = OK
            break
        if F < 0.0:
            lo = z
        else:
            hi = z
        xx = math.sqrt(y / c2)
        if abs(z) > 1e-5:
            dtdz = (
                xx ** 3 * ((c2 - 1.5 * c3 / c2) / (2.0 * z) + 0.75 * c3 * c3 / c2)
                + 0.125 * A * (3.0 * c3 * math.sqrt(y) / c2 + A * math.sqrt(c2 / y))
            ) / smu
        else:
            dtdz = (
                math.sqrt(2.0) / 40.0 * y ** 1.5
                + 0.125 * A * (math.sqrt(y) + A * math.sqrt(0.5 / y))
            ) / smu
        z_new = z - F / dtdz if dtdz > 0.0 else 0.5 * (lo + hi)
        if not (z_new > lo and z_new < hi):
            z_new = 0.5 * (lo + hi)
        if z_new == z:
            # no representable progress; accept if the residual is tiny
            if abs(F) <= 1e-9 * dt:
                status = OK
            break
        z = z_new
    if y <= 0.0:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, it, F, NO_CONVERGENCE
    f = 1.0 - y / r1
    g = A * math.sqrt(y / mu)
    gd = 1.0 - y / r2
    v1x = (x2 - f * x1) / g
    v1y = (y2 - f * y1) / g
    v1z = (z2 - f * z1) / g
    v2x = (gd * x2 - x1) / g
    v2y = (gd * y2 - y1) / g
    v2z = (gd * z2 - z1) / g
    return v1x, v1y, v1z, v2x, v2y, v2z, it, F, status


@njit(cache=True)
def prograde_long_way(x1, y1, z1, x2, y2, z2, hx, hy, hz):
    """Long-way flag for the branch whose normal aligns with (hx, hy, hz)."""
    cx = y1 * z2 - z1 * y2
    cy = z1 * x2 - x1 * z2
    cz = x1 * y2 - y1 * x2
    return cx * hx + cy * hy + cz * hz < 0.0


@njit(cache=True)
def decode_times(etas, dt_max, out):
    n = etas.shape[0]
    out[n - 1] = etas[n - 1] * dt_max
    for k in range(n - 2, -1, -1):
        out[k] = etas[k] * out[k + 1]


@njit(cache=True)
def j2_state(el, t, mu, j2, re):
    """Cartesian state at time t (relative to el's epoch) under secular J2."""
    raan, argp, M = j2_advance(el[0], el[1], el[2], el[3], el[4], el[5], t, mu, j2, re)
    return el2cart(el[0], el[1], el[2], raan, argp, M, mu)


@njit(cache=True)
def _norm3(x, y, z):
    return math.sqrt(x * x + y * y + z * z)


@njit(cache=True)
def impulse_vector(x, y, z, vx, vy, vz, c0, c1, c2, local):
    """Inertial impulse from components, optionally given in the local frame.

    The local frame is (radial, transverse, orbit normal) of the pre-burn state.
    """
    if not local:
        return c0, c1, c2
    r = _norm3(x, y, z)
    rx = x / r
    ry = y / r
    rz = z / r
    hx = y * vz - z * vy
    hy = z * vx - x * vz
    hz = x * vy - y * vx
    h = _norm3(hx, hy, hz)
    nx = hx / h
    ny = hy / h
    nz = hz / h
    tx = ny * rz - nz * ry
    ty = nz * rx - nx * rz
    tz = nx * ry - ny * rx
    return (
        c0 * rx + c1 * tx + c2 * nx,
        c0 * ry + c1 * ty + c2 * ny,
        c0 * rz + c1 * tz + c2 * nz,
    )


@njit(cache=True)
def coast_with_impulses(dep, times, impulses, n_free, mu, j2, re, state, local, out):
    """Fly the chaser from t=0 through the free impulses to times[n_free].

    ``impulses`` holds 3 components per burn, in the local frame when
    ``local`` is set; ``out`` receives the inertial vectors.
    ``state`` receives the pre-burn Cartesian state at times[n_free]. Returns
    a status code (non-zero when an impulse produced a non-elliptic orbit).
    """
    a = dep[0]
    e = dep[1]
    i = dep[2]
    raan = dep[3]
    argp = dep[4]
    M = dep[5]
    t_prev = 0.0
    for k in range(n_free):
        raan, argp, M = j2_advance(a, e, i, raan, argp, M, times[k] - t_prev, mu, j2, re)
        x, y, z, vx, vy, vz = el2cart(a, e, i, raan, argp, M, mu)
        dx, dy, dz = impulse_vector(x, y, z, vx, vy, vz, impulses[3 * k], impulses[3 * k + 1],
                                    impulses[3 * k + 2], local)
        out[3 * k] = dx
        out[3 * k + 1] = dy
        out[3 * k + 2] = dz
        vx += dx
        vy += dy
        vz += dz
        a, e, i, raan, argp, M, st = cart2el(x, y, z, vx, vy, vz, mu)
        if st != OK:
            return st
        t_prev = times[k]
    raan, argp, M = j2_advance(a, e, i, raan, argp, M, times[n_free] - t_prev, mu, j2, re)
    x, y, z, vx, vy, vz = el2cart(a, e, i, raan, argp, M, mu)
    state[0] = x
    state[1] = y
    state[2] = z
    state[3] = vx
    state[4] = vy
    state[5] = vz
    return OK


@njit(cache=True)
def evaluate_candidate(x, n, dep, tgt, dt_max, mu, j2, re, eps_r, eps_v, local, times, dvs, resid):
    """Two-body-terminal evaluation of one design vector.

    ``x`` holds n etas followed by (n-2) impulse vectors. On return ``times``
    holds the decoded epochs, ``dvs`` all n impulse vectors and ``resid`` the
    (pos, vel) residual of the terminal leg. Returns the penalized objective
    and a status code.
    """
    decode_times(x[:n], dt_max, times)
    n_free = n - 2
    s = np.empty(6)
    st = coast_with_impulses(dep, times, x[n:], n_free, mu, j2, re, s, local, dvs)
    t_dep = times[n - 2]
    t_arr = times[n - 1]
    tx, ty, tz, tvx, tvy, tvz = j2_state(tgt, t_dep, mu, j2, re)
    tx, ty, tz, tvx, tvy, tvz, _ = twobody(tx, ty, tz, tvx, tvy, tvz, t_arr - t_dep, mu)
    if st != OK:
        resid[0] = 1e9
        resid[1] = 1e5
        return 1e6 * (resid[0] / eps_r + resid[1] / eps_v), st
    hx = s[1] * s[5] - s[2] * s[4]
    hy = s[2] * s[3] - s[0] * s[5]
    hz = s[0] * s[4] - s[1] * s[3]
    lw = prograde_long_way(s[0], s[1], s[2], tx, ty, tz, hx, hy, hz)
    v1x, v1y, v1z, v2x, v2y, v2z, _, _, lst = lambert(
        s[0], s[1], s[2], tx, ty, tz, t_arr - t_dep, mu, lw
    )
    if lst != OK:
        # nothing can close the gap; score by the coasting miss
        resid[0] = _norm3(s[0] - tx, s[1] - ty, s[2] - tz)
        resid[1] = _norm3(s[3] - tvx, s[4] - tvy, s[5] - tvz)
        total = 0.0
        for k in range(n_free):
            total += _norm3(dvs[3 * k], dvs[3 * k + 1], dvs[3 * k + 2])
        return total + 1e6 * (resid[0] / eps_r + resid[1] / eps_v), lst
    b = 3 * n_free
    dvs[b] = v1x - s[3]
    dvs[b + 1] = v1y - s[4]
    dvs[b + 2] = v1z - s[5]
    dvs[b + 3] = tvx - v2x
    dvs[b + 4] = tvy - v2y
    dvs[b + 5] = tvz - v2z
    total = 0.0
    for k in range(n):
        total += _norm3(dvs[3 * k], dvs[3 * k + 1], dvs[3 * k + 2])
    resid[0] = 0.0
    resid[1] = 0.0
    return total, OK


@njit(cache=True)
def evaluate_population(pop, n, dep, tgt, dt_max, mu, j2, re, eps_r, eps_v, local, out):
    times = np.empty(n)
    dvs = np.empty(3 * n)
    resid = np.empty(2)
    for p in range(pop.shape[0]):
        out[p], _ = evaluate_candidate(
            pop[p], n, dep, tgt, dt_max, mu, j2, re, eps_r, eps_v, local, times, dvs, resid
        )


@njit(cache=True)
def evaluate_batches(pops, n, deps, tgts, dt_maxs, mu, j2, re, eps_r, eps_v, local, out):
    """Evaluate a stack of populations, each against its own endpoint pair."""
    times = np.empty(n)
    dvs = np.empty(3 * n)
    resid = np.empty(2)
    for b in range(pops.shape[0]):
        for p in range(pops.shape[1]):
            out[b, p], _ = evaluate_candidate(
                pops[b, p], n, deps[b], tgts[b], dt_maxs[b], mu, j2, re, eps_r, eps_v, local,
                times, dvs, resid,
            )


@njit(cache=True)
def j2_leg(s, dt, mu, j2, re):
    """Propagate a Cartesian state by dt under secular J2."""
    a, e, i, raan, argp, M, st = cart2el(s[0], s[1], s[2], s[3], s[4], s[5], mu)
    if st != OK:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, st
    raan, argp, M = j2_advance(a, e, i, raan, argp, M, dt, mu, j2, re)
    x, y, z, vx, vy, vz = el2cart(a, e, i, raan, argp, M, mu)
    return x, y, z, vx, vy, vz, OK


@njit(cache=True)
def shoot_terminal(s, target, dt, mu, j2, re, v_guess, tol, v_out, J, reuse):
    """Find the departure velocity whose J2 coast over dt ends on target[:3].

    Newton iteration with a forward-difference Jacobian, started from
    ``v_guess``. The last Jacobian is left in ``J``; with ``reuse`` set the
    given ``J`` is kept fixed instead (chord iteration, for warm starts).
    Writes the velocity into ``v_out`` and returns
    (position miss in m, arrival vx, vy, vz, status).
    """
    w = np.empty(6)
    w[0] = s[0]
    w[1] = s[1]
    w[2] = s[2]
    vx = v_guess[0]
    vy = v_guess[1]
    vz = v_guess[2]
    res = np.empty(3)
    best = 1e300
    ax = 0.0
    ay = 0.0
    az = 0.0
    status = NO_CONVERGENCE
    for it in range(30 if reuse else 12):
        w[3] = vx
        w[4] = vy
        w[5] = vz
        x, y, z, ax, ay, az, st = j2_leg(w, dt, mu, j2, re)
        if st != OK:
            status = st
            break
        res[0] = x - target[0]
        res[1] = y - target[1]
        res[2] = z - target[2]
        miss = _norm3(res[0], res[1], res[2])
        v_out[0] = vx
        v_out[1] = vy
        v_out[2] = vz
        best = miss
        if miss <= tol:
            status = OK
            break
        if not reuse:
            h = 1e-3
            for c in range(3):
                w[3] = vx
                w[4] = vy
                w[5] = vz
                w[3 + c] += h
                xp, yp, zp, _, _, _, st = j2_leg(w, dt, mu, j2, re)
                if st != OK:
                    return best, ax, ay, az, st
                J[0, c] = (xp - x) / h
                J[1, c] = (yp - y) / h
                J[2, c] = (zp - z) / h
        step = np.linalg.solve(J, res)
        vx -= step[0]
        vy -= step[1]
        vz -= step[2]
    return best, ax, ay, az, status


@njit(cache=True)
def perturbed_transfer(times, free, n, dep, tgt, mu, j2, re, tol, local, dv_out, warm, J, vdep):
    """Fully perturbed transfer for given epochs and free impulses.

    The last two impulses are solved for: the first by shooting onto the
    target's J2 position at times[n-1], the second by matching the target's
    velocity. Shooting is seeded by a two-body Lambert arc, or with ``warm``
    set by the departure velocity already in ``vdep`` and the Jacobian in
    ``J``. ``vdep`` and ``J`` receive the converged values. Returns
    (total_dv, pos_residual, vel_residual, pre-terminal period, status).
    """
    n_free = n - 2
    s = np.empty(6)
    st = coast_with_impulses(dep, times, free, n_free, mu, j2, re, s, local, dv_out)
    if st != OK:
        return 1e300, 1e300, 1e300, 0.0, st
    t_dep = times[n - 2]
    t_arr = times[n - 1]
    leg = t_arr - t_dep
    r = _norm3(s[0], s[1], s[2])
    v2 = s[3] * s[3] + s[4] * s[4] + s[5] * s[5]
    alpha = 2.0 / r - v2 / mu
    period = TWO_PI / math.sqrt(mu * alpha ** 3) if alpha > 0.0 else 0.0
    tgt_f = np.empty(6)
    tx, ty, tz, tvx, tvy, tvz = j2_state(tgt, t_arr, mu, j2, re)
    tgt_f[0] = tx
    tgt_f[1] = ty
    tgt_f[2] = tz
    if leg <= 0.0:
        return 1e300, 1e300, 1e300, period, BAD_GEOMETRY
    guess = np.empty(3)
    if warm:
        guess[0] = vdep[0]
        guess[1] = vdep[1]
        guess[2] = vdep[2]
    else:
        hx = s[1] * s[5] - s[2] * s[4]
        hy = s[2] * s[3] - s[0] * s[5]
        hz = s[0] * s[4] - s[1] * s[3]
        lw = prograde_long_way(s[0], s[1], s[2], tx, ty, tz, hx, hy, hz)
        v1x, v1y, v1z, _, _, _, _, _, lst = lambert(s[0], s[1], s[2], tx, ty, tz, leg, mu, lw)
        if lst != OK:
            return 1e300, 1e300, 1e300, period, lst
        guess[0] = v1x
        guess[1] = v1y
        guess[2] = v1z
    miss, ax, ay, az, sst = shoot_terminal(s, tgt_f, leg, mu, j2, re, guess, tol, vdep, J, warm)
    if sst != OK and miss > 1e299:
        return 1e300, 1e300, 1e300, period, sst
    b = 3 * n_free
    dv_out[b] = vdep[0] - s[3]
    dv_out[b + 1] = vdep[1] - s[4]
    dv_out[b + 2] = vdep[2] - s[5]
    dv_out[b + 3] = tvx - ax
    dv_out[b + 4] = tvy - ay
    dv_out[b + 5] = tvz - az
    total = 0.0
    for k in range(n):
        total += _norm3(dv_out[3 * k], dv_out[3 * k + 1], dv_out[3 * k + 2])
    # after the last burn the chaser velocity equals the target's by construction
    return total, miss, 0.0, period, sst


@njit(cache=True)
def smooth_cost(dvs, n, soft):
    total = 0.0
    for k in range(n):
        total += math.sqrt(dvs[3 * k] ** 2 + dvs[3 * k + 1] ** 2 + dvs[3 * k + 2] ** 2 + soft)
    return total


@njit(cache=True)
def refine_objective(z, n, dep, tgt, mu, j2, re, tol, local, tscale, soft, h, central, grad, pgrad):
    """Smoothed total dv and pre-terminal period with finite-difference gradients.

    ``z`` is (epochs / tscale, free impulse components). Differences are
    central when ``central`` is set, forward otherwise. Returns
    (cost, period, status); gradients are written to ``grad`` and ``pgrad``.
    """
    m = z.shape[0]
    nf = m - n
    times = np.empty(n)
    free = np.empty(nf)
    dvs = np.empty(3 * n)
    for j in range(n):
        times[j] = z[j] * tscale
    for j in range(nf):
        free[j] = z[n + j]
    J = np.empty((3, 3))
    vdep = np.empty(3)
    vwarm = np.empty(3)
    total, miss, _, period, st = perturbed_transfer(
        times, free, n, dep, tgt, mu, j2, re, tol, local, dvs, False, J, vdep
    )
    if st != OK or not math.isfinite(total):
        for j in range(m):
            grad[j] = 0.0
            pgrad[j] = 0.0
        return 1e6, period, st
    f0 = smooth_cost(dvs, n, soft)
    for j in range(m):
        step = h * tscale if j < n else h
        fs = np.empty(2)
        ps = np.empty(2)
        fs[1] = f0
        ps[1] = period
        ok = True
        for side in range(2 if central else 1):
            sgn = 1.0 if side == 0 else -1.0
            if j < n:
                times[j] = z[j] * tscale + sgn * step
            else:
                free[j - n] = z[j] + sgn * step
            vwarm[0] = vdep[0]
            vwarm[1] = vdep[1]
            vwarm[2] = vdep[2]
            tot, _, _, per, s2 = perturbed_transfer(
                times, free, n, dep, tgt, mu, j2, re, tol, local, dvs, True, J, vwarm
            )
            if s2 != OK or not math.isfinite(tot):
                ok = False
            fs[side] = smooth_cost(dvs, n, soft)
            ps[side] = per
        if j < n:
            times[j] = z[j] * tscale
        else:
            free[j - n] = z[j]
        if ok:
            span = 2.0 * h if central else h
            grad[j] = (fs[0] - fs[1]) / span
            pgrad[j] = (ps[0] - ps[1]) / span
        else:
            grad[j] = 0.0
            pgrad[j] = 0.0
    return f0, period, OK
