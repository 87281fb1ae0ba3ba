"""Compiled inner loop for the built-in model kernels.

The model sums factor into closed forms: the diffusion mobility depends
only on the other agents' means (three mass-weighted moments cover all
particles at once) and the transport sum collapses to a per-agent-pair
weight times (sum of particles - (N+1) x).  That turns the right-hand
side from O(M^2 N^2) kernel evaluations into O(M^2 + M N) arithmetic,
and numba removes the per-call overhead, which matters because the
diffusion term is stiff and drives the guarded integrator to substeps
far below the nominal dt.

Everything here works on raw float64 arrays; the public API in dpa.py
wraps it.  Subdivision bookkeeping: within one nominal step the position
is tracked as num/den of dt, a rejection doubles den (and num), so the
substeps always tile dt exactly; den is capped at 2**MAX_HALVINGS.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# Status codes from _advance_interval.
STATUS_OK = 0
STATUS_QUIET = 1
STATUS_COLLAPSE = 2

MAX_HALVINGS = 20
_MAX_DEN = 1 << MAX_HALVINGS

PHI_LINEAR = 0
PHI_POWER = 1

# Substep stability: the diffusion term is stiff (its Jacobian diagonal
# grows like beta * rho^2 / sigma_N^2), so each nominal step is
# pre-subdivided to keep |lambda| h inside the RK4 real stability
# interval (~2.79) with a safety margin.  The rejection guard remains as
# a backstop: a substep is rejected when any gap falls below the absolute
# floor eps_min OR (diffusion runs only) below SHRINK_FACTOR times its
# pre-substep value.  The relative test catches an onsetting checkerboard
# instability while its amplitude is still a fraction of the gap
# (diffusion resists compression, so physical per-substep shrinkage is a
# few percent at most).
#
# Transport-only dynamics are non-stiff but gaps legitimately close:
# repulsion drives mass against a pinned boundary particle in finite time
# (a boundary atom) and consensus clusters contract exponentially, so any
# fixed gap floor is eventually breached by the exact solution itself.
# Nothing resists compression without diffusion, and no step size can
# cross a contact, so with diffusion off the candidate substep is
# projected instead of rejected: every gap is forced to at least
# 2 * max(eps_min, CONTACT_SPACING) by sweeping inward from both pinned
# walls.  Contacted particles sit on a minimal-spacing ladder and release
# if the field later pulls them apart.  CONTACT_SPACING stays well above
# the float64 spacing at |x| = 1 (~2.2e-16) so the ladder survives
# rounding; the factor 2 keeps the rounded gaps above the accept floor.
STAB_MARGIN = 2.5
SHRINK_FACTOR = 0.4
CONTACT_SPACING = 1e-14


@njit(cache=True)
def _zeta(s, rf, ra, rr, rl):
    s = abs(s)
    if s < rf:
        return 1.0 - s / (10.0 * rf)
    if s < ra:
        return 0.1 + 0.8 * (1.0 - (s - rf) / (ra - rf))
    if s < rr:
        return -0.1 + 0.2 * (1.0 - (s - ra) / (rr - ra))
    if s < rl:
        return -0.9 + 0.8 * (1.0 - (s - rr) / (rl - rr))
    return -0.9 - (s - rl) / 10.0


@njit(cache=True)
def _phi(r, kind, expo, cap):
    if kind == PHI_LINEAR:
        return r
    c = r if r < cap else cap
    return c ** expo


@njit(cache=True)
def _rhs(x, a, sigma_n,
         rf, ra, rr, rl, rho_loc, diff_on,
         phi_kind, phi_exp, phi_cap, v_sign,
         dx, da):
    """Model right-hand side into preallocated dx, da."""
    M, np1 = x.shape
    n = np1 - 1
    d = a.shape[1]
    S = np.empty(M)
    mu = np.empty(M)
    for i in range(M):
        s = 0.0
        for k in range(np1):
            s += x[i, k]
        S[i] = s
        mu[i] = s / np1
    # Mobility sum beta_ik = (N+1) * (q0 - 2 q1 x + q2 x^2): the mobility
    # is (mu_j - w)^2 for every particle of agent j, with no locality
    # gate, so only the mass-weighted moments of the means enter.
    q0 = 0.0
    q1 = 0.0
    q2 = 0.0
    if diff_on:
        for j in range(M):
            q0 += sigma_n[j] * mu[j] * mu[j]
            q1 += sigma_n[j] * mu[j]
            q2 += sigma_n[j]
    phi_gap = np.empty(n)  # Phi(rho) per gap of the current agent
    for i in range(M):
        u = 0.0
        w_tot = 0.0
        for l in range(d):
            da[i, l] = 0.0
        for j in range(M):
            dist2 = 0.0
            for l in range(d):
                diff = a[i, l] - a[j, l]
                dist2 += diff * diff
            if math.sqrt(dist2) <= rho_loc:
                z = _zeta(mu[i] - mu[j], rf, ra, rr, rl)
                w = sigma_n[j] * z
                u += w * S[j]
                w_tot += w
                for l in range(d):
                    da[i, l] += v_sign * z * (a[j, l] - a[i, l])
        dx[i, 0] = 0.0
        dx[i, n] = 0.0
        # theta_ik = sum_j w_ij (S_j - (N+1) x_ik), already folded into
        # the pair-weight accumulators u and w_tot.
        if diff_on:
            inv_sn = 1.0 / sigma_n[i]
            for k in range(n):
                rho = sigma_n[i] / (x[i, k + 1] - x[i, k])
                phi_gap[k] = _phi(rho, phi_kind, phi_exp, phi_cap)
            for k in range(1, n):
                xk = x[i, k]
                beta = np1 * (q0 - 2.0 * q1 * xk + q2 * xk * xk)
                dx[i, k] = (u - w_tot * np1 * xk
                            + beta * inv_sn * (phi_gap[k - 1] - phi_gap[k]))
        else:
            for k in range(1, n):
                dx[i, k] = u - w_tot * np1 * x[i, k]


@njit(cache=True)
def _phi_deriv(r, kind, expo, cap):
    if kind == PHI_LINEAR:
        return 1.0
    if r >= cap:
        return 0.0
    return expo * r ** (expo - 1.0)


@njit(cache=True)
def _lambda_est(x, a, sigma_n,
                rf, ra, rr, rl, rho_loc, diff_on,
                phi_kind, phi_exp, phi_cap):
    """Gershgorin bound on the fastest decay rate of the model Jacobian.

    Row k of the opinion block has diagonal -(beta_ik / sigma_N^2) *
    (Phi'(rho_{k-1}) rho_{k-1}^2 + Phi'(rho_k) rho_k^2) - (N+1) w_tot and
    off-diagonal entries that sum to at most the same diffusion magnitude,
    so twice the diagonal bounds the spectrum.
    """
    M, np1 = x.shape
    n = np1 - 1
    mu = np.empty(M)
    for i in range(M):
        s = 0.0
        for k in range(np1):
            s += x[i, k]
        mu[i] = s / np1
    q0 = 0.0
    q1 = 0.0
    q2 = 0.0
    if diff_on:
        for j in range(M):
            q0 += sigma_n[j] * mu[j] * mu[j]
            q1 += sigma_n[j] * mu[j]
            q2 += sigma_n[j]
    d = a.shape[1]
    lam = 0.0
    for i in range(M):
        w_tot = 0.0
        for j in range(M):
            dist2 = 0.0
            for l in range(d):
                diff = a[i, l] - a[j, l]
                dist2 += diff * diff
            if math.sqrt(dist2) <= rho_loc:
                w_tot += sigma_n[j] * _zeta(mu[i] - mu[j], rf, ra, rr, rl)
        lam_t = abs(w_tot) * np1
        if lam_t > lam:
            lam = lam_t
        if diff_on:
            inv_sn2 = 1.0 / (sigma_n[i] * sigma_n[i])
            for k in range(1, n):
                xk = x[i, k]
                rho_l = sigma_n[i] / (xk - x[i, k - 1])
                rho_r = sigma_n[i] / (x[i, k + 1] - xk)
                beta = np1 * (q0 - 2.0 * q1 * xk + q2 * xk * xk)
                curv = (_phi_deriv(rho_l, phi_kind, phi_exp, phi_cap) * rho_l * rho_l
                        + _phi_deriv(rho_r, phi_kind, phi_exp, phi_cap) * rho_r * rho_r)
                lam_d = 2.0 * beta * inv_sn2 * curv
                if lam_d > lam:
                    lam = lam_d
    return lam


@njit(cache=True)
def _enforce_min_gaps(xc, delta):
    """Force every gap to at least delta without moving the pinned walls.

    Forward pass lifts any particle squeezed under its left neighbour's
    position + delta; backward pass mirrors from the right.  Contact
    stacks at a wall and clusters collapsing in the interior both end up
    on a minimal-spacing ladder whose width, at most N * delta, is far
    below any opinion scale.  NaN positions are left untouched so a
    diverged step still fails the accept test.
    """
    M, np1 = xc.shape
    for i in range(M):
        lo = xc[i, 0]
        for k in range(1, np1 - 1):
            lo = lo + delta
            v = xc[i, k]
            if v == v:  # skip NaN
                if v < lo:
                    xc[i, k] = lo
                else:
                    lo = v
        hi = xc[i, np1 - 1]
        for k in range(np1 - 2, 0, -1):
            hi = hi - delta
            v = xc[i, k]
            if v == v:
                if v > hi:
                    xc[i, k] = hi
                else:
                    hi = v


@njit(cache=True)
def _accept_ok(xc, x, eps, check_shrink):
    """Accept the candidate substep xc reached from x.

    Rejects when any gap dips under the absolute floor eps or, with
    check_shrink set, shrinks to less than SHRINK_FACTOR of its
    pre-substep width; under diffusion a near-halving in a single substep
    can only come from numerical instability.
    """
    M, np1 = xc.shape
    for i in range(M):
        for k in range(np1 - 1):
            g = xc[i, k + 1] - xc[i, k]
            if not (g >= eps):  # also catches NaN
                return False
            if check_shrink and g < SHRINK_FACTOR * (x[i, k + 1] - x[i, k]):
                return False
    return True


@njit(cache=True)
def _advance_interval(x, a, sigma_n,
                      rf, ra, rr, rl, rho_loc, diff_on,
                      phi_kind, phi_exp, phi_cap, v_sign,
                      n_steps, dt, eps_min, den0, use_rk4,
                      check_quiet, quiet_speed, quiet_steps, streak0):
    """Advance n_steps nominal steps of size dt in place.

    Returns (steps_done, den, substeps, rejections, max_den, max_speed,
    streak, status).  max_speed is the largest |dx| sampled at accepted
    substep starts.  den is the subdivision of the last nominal step
    (first try of the next step should be den//2).  status: 0 normal,
    1 quiescence rule hit, 2 step collapse (den exceeded the halving cap).
    """
    M, np1 = x.shape
    d = a.shape[1]
    k1x = np.empty((M, np1))
    k1a = np.empty((M, d))
    k2x = np.empty((M, np1))
    k2a = np.empty((M, d))
    k3x = np.empty((M, np1))
    k3a = np.empty((M, d))
    k4x = np.empty((M, np1))
    k4a = np.empty((M, d))
    xt = np.empty((M, np1))
    at = np.empty((M, d))
    xc = np.empty((M, np1))
    ac = np.empty((M, d))
    substeps = 0
    rejections = 0
    max_den = den0
    max_speed = 0.0
    streak = streak0
    den = den0
    steps_done = 0
    margin = STAB_MARGIN if use_rk4 else 1.0
    delta = 2.0 * (eps_min if eps_min > CONTACT_SPACING else CONTACT_SPACING)
    for _step in range(n_steps):
        if den > 1:
            den //= 2  # probe a coarser subdivision each nominal step
        lam = _lambda_est(x, a, sigma_n, rf, ra, rr, rl, rho_loc, diff_on,
                          phi_kind, phi_exp, phi_cap)
        den_f = dt * lam / margin
        if den_f > _MAX_DEN:
            return (steps_done, den, substeps, rejections, max_den,
                    max_speed, streak, STATUS_COLLAPSE)
        den_s = int(den_f) + 1
        if den_s > den:
            den = den_s
        if den > max_den:
            max_den = den
        num = 0
        step_speed = 0.0
        while num < den:
            h = dt / den
            _rhs(x, a, sigma_n, rf, ra, rr, rl, rho_loc, diff_on,
                 phi_kind, phi_exp, phi_cap, v_sign, k1x, k1a)
            sp = 0.0
            for i in range(M):
                for k in range(np1):
                    v = abs(k1x[i, k])
                    if v > sp:
                        sp = v
            if use_rk4:
                for i in range(M):
                    for k in range(np1):
                        xt[i, k] = x[i, k] + 0.5 * h * k1x[i, k]
                    for l in range(d):
                        at[i, l] = a[i, l] + 0.5 * h * k1a[i, l]
                _rhs(xt, at, sigma_n, rf, ra, rr, rl, rho_loc, diff_on,
                     phi_kind, phi_exp, phi_cap, v_sign, k2x, k2a)
                for i in range(M):
                    for k in range(np1):
                        xt[i, k] = x[i, k] + 0.5 * h * k2x[i, k]
                    for l in range(d):
                        at[i, l] = a[i, l] + 0.5 * h * k2a[i, l]
                _rhs(xt, at, sigma_n, rf, ra, rr, rl, rho_loc, diff_on,
                     phi_kind, phi_exp, phi_cap, v_sign, k3x, k3a)
                for i in range(M):
                    for k in range(np1):
                        xt[i, k] = x[i, k] + h * k3x[i, k]
                    for l in range(d):
                        at[i, l] = a[i, l] + h * k3a[i, l]
                _rhs(xt, at, sigma_n, rf, ra, rr, rl, rho_loc, diff_on,
                     phi_kind, phi_exp, phi_cap, v_sign, k4x, k4a)
                c = h / 6.0
                for i in range(M):
                    for k in range(np1):
                        xc[i, k] = x[i, k] + c * (k1x[i, k] + 2.0 * k2x[i, k]
                                                  + 2.0 * k3x[i, k] + k4x[i, k])
                    for l in range(d):
                        ac[i, l] = a[i, l] + c * (k1a[i, l] + 2.0 * k2a[i, l]
                                                  + 2.0 * k3a[i, l] + k4a[i, l])
            else:
                for i in range(M):
                    for k in range(np1):
                        xc[i, k] = x[i, k] + h * k1x[i, k]
                    for l in range(d):
                        ac[i, l] = a[i, l] + h * k1a[i, l]
            if not diff_on:
                _enforce_min_gaps(xc, delta)
            if _accept_ok(xc, x, eps_min, diff_on):
                for i in range(M):
                    for k in range(np1):
                        x[i, k] = xc[i, k]
                    for l in range(d):
                        a[i, l] = ac[i, l]
                num += 1
                substeps += 1
                if sp > step_speed:
                    step_speed = sp
            else:
                if den >= _MAX_DEN:
                    return (steps_done, den, substeps, rejections, max_den,
                            max_speed, streak, STATUS_COLLAPSE)
                den *= 2
                num *= 2
                rejections += 1
                if den > max_den:
                    max_den = den
        steps_done += 1
        if step_speed > max_speed:
            max_speed = step_speed
        if check_quiet:
            if step_speed < quiet_speed:
                streak += 1
                if streak >= quiet_steps:
                    return (steps_done, den, substeps, rejections, max_den,
                            max_speed, streak, STATUS_QUIET)
            else:
                streak = 0
    return (steps_done, den, substeps, rejections, max_den,
            max_speed, streak, STATUS_OK)


def model_rhs(x, a, sigma_n, params):
    """Python-friendly wrapper: returns (dx, da) for the model kernels."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    dx = np.empty_like(x)
    da = np.empty_like(a)
    _rhs(x, a, np.asarray(sigma_n, dtype=np.float64), *params, dx, da)
    return dx, da
