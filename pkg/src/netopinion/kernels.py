"""Interaction kernels: attitude response, transport/diffusion/network laws.

The built-in model couples agents through their mean opinions.  The
attitude function zeta is piecewise linear in the mean-opinion distance
with five regimes (strong attraction, mild attraction, mild repulsion,
strong repulsion, saturated repulsion) delimited by the radii of
AttitudeParams.  The transport kernel moves particles toward (or away
from) other agents' particles, the mobility kernel scales self-diffusion
by the squared distance to the other agent's mean, and the network
velocity attracts/repels node positions with the same attitude weight.

KernelSet packages arbitrary user kernels behind numpy-broadcastable
callables; when it wraps the built-in model the simulator dispatches to a
compiled fast path instead of the generic double sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import AttitudeParams, PhiSpec, Scenario


def attitude_zeta(s, p: AttitudeParams):
    """Attitude response zeta(s), even in s, piecewise linear in |s|.

    Values at the breakpoints: zeta(0) = 1, zeta(r_f) = 0.9,
    zeta(r_a) = 0.1, zeta(r_r) = -0.1, zeta(r_l) = -0.9; beyond r_l it
    keeps decreasing with slope 1/10.  Accepts scalars or arrays.
    """
    s = np.abs(np.asarray(s, dtype=float))
    rf, ra, rr, rl = p.r_f, p.r_a, p.r_r, p.r_l
    conds = [
        s < rf,
        s < ra,
        s < rr,
        s < rl,
    ]
    vals = [
        1.0 - s / (10.0 * rf),
        0.1 + 0.8 * (1.0 - (s - rf) / (ra - rf)),
        -0.1 + 0.2 * (1.0 - (s - ra) / (rr - ra)),
        -0.9 + 0.8 * (1.0 - (s - rr) / (rl - rr)),
    ]
    out = np.select(conds, vals, default=-0.9 - (s - rl) / 10.0)
    return float(out) if out.ndim == 0 else out


def zeta_sup(p: AttitudeParams, s_max: float = 2.0) -> float:
    """sup |zeta| over |s| <= s_max (= c_K for mean opinions in [-1, 1])."""
    tail = 0.9 + (s_max - p.r_l) / 10.0 if s_max > p.r_l else 0.0
    return max(1.0, tail)


def omega(a_dist, rho_loc: float):
    """Locality switch: 1 where a_dist <= rho_loc, else 0 (inf = always 1)."""
    a_dist = np.asarray(a_dist, dtype=float)
    out = (a_dist <= rho_loc).astype(float)
    return float(out) if out.ndim == 0 else out


def phi_eval(rho, spec: PhiSpec):
    """Diffusion response Phi(rho): identity, or clamped power rho^m."""
    rho = np.asarray(rho, dtype=float)
    if spec.kind == "linear":
        out = rho
    elif spec.kind == "power":
        out = np.minimum(rho, spec.rho_max) ** spec.exponent
    else:
        raise ValueError(f"unknown phi kind {spec.kind!r}")
    return float(out) if out.ndim == 0 else np.asarray(out)


def kernel_K_model(w, v, mu_i, mu_j, a_dist, p: AttitudeParams, rho_loc: float):
    """Model transport kernel: omega(a_dist) * zeta(mu_i - mu_j) * (v - w).

    Positive attitude pulls particle w toward the other particle v;
    negative attitude pushes away.  Zero at coincident particles.
    """
    return omega(a_dist, rho_loc) * attitude_zeta(mu_i - mu_j, p) * (np.asarray(v) - np.asarray(w))


def mobility_A_model(w, mu_j):
    """Model diffusion mobility: squared distance to agent j's mean.

    Not gated by the locality switch: distant agents still contribute to
    how diffusive an opinion position is.
    """
    return (np.asarray(mu_j) - np.asarray(w)) ** 2


def network_velocity_model(mu_i, mu_j, a_i, a_j, p: AttitudeParams,
                           rho_loc: float, invert: bool = False):
    """Node velocity contribution of agent j on agent i.

    zeta(|mu_i - mu_j|) * omega(||a_i - a_j||) * (a_j - a_i): the sign is
    chosen so positive attitude attracts node positions.  invert flips it
    (positive attitude then repels).
    """
    a_i = np.asarray(a_i, dtype=float)
    a_j = np.asarray(a_j, dtype=float)
    dist = float(np.linalg.norm(a_j - a_i))
    sign = -1.0 if invert else 1.0
    return sign * attitude_zeta(abs(mu_i - mu_j), p) * omega(dist, rho_loc) * (a_j - a_i)


@dataclass(frozen=True)
class ModelParams:
    """Marker carrying the built-in model's parameters for the fast path."""

    attitude: AttitudeParams
    rho_loc: float
    invert_velocity: bool = False


@dataclass(frozen=True)
class KernelSet:
    """The three interaction laws plus the diffusion response.

    transport(w, v, mu_i, mu_j, a_dist) -> real: particle-level transport
    kernel; must broadcast over numpy arrays in w and v.
    mobility(w, v, mu_j, a_dist) -> nonnegative real: diffusion mobility
    summand, same broadcasting contract.
    velocity(mu_i, mu_j, a_i, a_j, a_dist) -> R^d vector: node velocity
    contribution of one neighbor.
    c_K / c_A / c_1A are sup-norm / Lipschitz metadata used by bound
    checks; model is set when the kernels are the built-in model, which
    lets the integrator use the compiled closed-form path.
    """

    transport: Callable
    mobility: Callable
    velocity: Callable
    phi: PhiSpec
    diffusion_enabled: bool = True
    c_K: float = math.nan
    c_A: float = math.nan
    c_1A: float = math.nan
    model: Optional[ModelParams] = None


def model_kernels(attitude: AttitudeParams, rho_loc: float = math.inf,
                  phi: PhiSpec | None = None, diffusion_enabled: bool = True,
                  invert_velocity: bool = False) -> KernelSet:
    """Bundle the built-in model kernels for the given parameters."""
    if phi is None:
        phi = PhiSpec()
    sign = -1.0 if invert_velocity else 1.0

    def transport(w, v, mu_i, mu_j, a_dist):
        return kernel_K_model(w, v, mu_i, mu_j, a_dist, attitude, rho_loc)

    def mobility(w, v, mu_j, a_dist):
        return mobility_A_model(w, mu_j)

    def velocity(mu_i, mu_j, a_i, a_j, a_dist):
        a_i = np.asarray(a_i, dtype=float)
        a_j = np.asarray(a_j, dtype=float)
        return (sign * attitude_zeta(abs(mu_i - mu_j), attitude)
                * omega(a_dist, rho_loc) * (a_j - a_i))

    return KernelSet(
        transport=transport,
        mobility=mobility,
        velocity=velocity,
        phi=phi,
        diffusion_enabled=diffusion_enabled,
        c_K=zeta_sup(attitude),
        c_A=4.0,  # |d/dw (mu_j - w)^2| <= 2*|mu_j - w| <= 4 on [-1, 1]
        c_1A=0.0,  # mobility does not depend on the source particle
        model=ModelParams(attitude, rho_loc, invert_velocity),
    )


def kernels_for(scenario: Scenario) -> KernelSet:
    """The scenario's interaction laws (always the built-in model)."""
    return model_kernels(
        scenario.attitude,
        rho_loc=scenario.interaction_radius,
        phi=scenario.phi,
        diffusion_enabled=scenario.diffusion_enabled,
        invert_velocity=scenario.invert_network_velocity,
    )
