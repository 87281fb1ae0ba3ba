"""Deterministic particle approximation of the coupled opinion/network flow.

Each agent's opinion density is carried by N+1 ordered particles holding
equal mass fractions sigma_i / N.  Interior particles move with a
transport velocity (pairwise attitude-weighted attraction/repulsion plus
a cross-diffusion flux through the reconstructed densities); the boundary
particles stay pinned at -1 and +1; node positions follow the pairwise
network velocity.  Time integration is fixed-step RK4 with a gap guard:
a substep whose result would push any particle gap below min_gap is
rejected and retried at half size (substeps always tile the nominal step
exactly), at most MAX_HALVINGS times before the run aborts with
StepCollapseError.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _engine
from .core import (OMEGA_HI, OMEGA_LO, QUIET_SPEED, QUIET_STEPS, DensitySpec,
                   ParticleState, Scenario, density_cdf, is_realized,
                   sample_initial_conditions, validate)
from .kernels import KernelSet, kernels_for, phi_eval

MAX_HALVINGS = _engine.MAX_HALVINGS

# Tolerance (in cumulative mass) of the quantile bisection.
QUANTILE_TOL = 1e-12


class StepCollapseError(RuntimeError):
    """A step could not keep particle gaps above min_gap after the maximum
    number of halvings; parameters are outside the stable regime."""


class ScenarioError(ValueError):
    """Scenario failed validation; carries the violation list."""

    def __init__(self, violations):
        self.violations = list(violations)
        codes = ", ".join(v.code for v in self.violations)
        super().__init__(f"invalid scenario: {codes}")


@dataclass(frozen=True)
class Derivative:
    """Right-hand side of the coupled system: particle and node velocities.

    dx has shape (M, N+1) with dx[:, 0] = dx[:, -1] = 0 (pinned
    boundaries); da has shape (M, d).
    """

    dx: np.ndarray
    da: np.ndarray


@dataclass(frozen=True)
class IntegratorStats:
    """Counters from one simulate call."""

    nominal_steps: int = 0
    substeps: int = 0
    rejections: int = 0
    max_subdivision: int = 1


@dataclass(frozen=True)
class Trajectory:
    """Snapshots of one run plus the realized scenario that produced it.

    times[0] = 0 and the first state holds the initial conditions.
    interval_max_speed[n] is the largest particle speed |dx| observed
    while integrating from times[n] to times[n+1] (sampled at every
    accepted substep start and at the interval ends).  stopped_early is
    True when the quiescence rule ended the run before t_final.
    """

    scenario: Scenario
    times: tuple[float, ...]
    states: tuple[ParticleState, ...]
    interval_max_speed: tuple[float, ...]
    stats: IntegratorStats
    stopped_early: bool = False

    @property
    def final(self) -> ParticleState:
        return self.states[-1]


def quantile_partition(density: DensitySpec, mass: float, n: int) -> np.ndarray:
    """Split the density's cumulative mass into n equal parts.

    Returns n+1 strictly increasing points with x[0] = -1, x[n] = 1 and
    mass exactly mass/n between consecutive points, located by bisection
    on the cumulative integral to QUANTILE_TOL in mass.
    """
    if n < 2:
        raise ValueError("need at least 2 particles per agent")
    targets = mass * np.arange(1, n) / n
    lo = np.full(n - 1, OMEGA_LO)
    hi = np.full(n - 1, OMEGA_HI)
    for _ in range(110):
        mid = 0.5 * (lo + hi)
        below = density_cdf(density, mass, mid) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < 1e-16:
            break
    mid = 0.5 * (lo + hi)
    err = np.max(np.abs(density_cdf(density, mass, mid) - targets))
    if err > QUANTILE_TOL * max(mass, 1.0):
        raise ValueError(f"quantile bisection stalled (mass error {err:.3e})")
    x = np.concatenate([[OMEGA_LO], mid, [OMEGA_HI]])
    if not np.all(np.diff(x) > 0):
        raise ValueError("degenerate quantiles: density too close to zero")
    return x


def initial_state(scenario: Scenario) -> ParticleState:
    """Particles at the density quantiles, nodes at the agent positions."""
    if not is_realized(scenario):
        raise ValueError("scenario has unsampled initial conditions")
    n = scenario.run.n_particles
    x = np.empty((scenario.n_agents, n + 1))
    a = np.empty((scenario.n_agents, scenario.network_dim))
    masses = np.empty(scenario.n_agents)
    for i, agent in enumerate(scenario.agents):
        x[i] = quantile_partition(agent.density, agent.mass, n)
        a[i] = agent.position
        masses[i] = agent.mass
    return ParticleState(t=0.0, x=x, a=a, masses=masses)


def discrete_densities(x: np.ndarray, sigma_n: float) -> np.ndarray:
    """Reconstructed density values sigma_n / gap for one agent."""
    gaps = np.diff(np.asarray(x, dtype=float))
    if not np.all(gaps > 0):
        raise ValueError("particles must be strictly increasing")
    return sigma_n / gaps


def discrete_mean(x: np.ndarray) -> float:
    """Plain average of one agent's N+1 particle positions."""
    return float(np.mean(x))


def _pair_distances(a: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - a[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def beta_k(state: ParticleState, kernels: KernelSet, i: int, k: int) -> float:
    """Diffusion mobility of particle k of agent i: the mass-weighted sum
    of the mobility kernel over every particle of every agent (0 when
    diffusion is disabled)."""
    if not kernels.diffusion_enabled:
        return 0.0
    x = state.x
    mu = x.mean(axis=1)
    sn = state.sigma_n
    dists = _pair_distances(state.a)
    np1 = x.shape[1]
    total = 0.0
    for j in range(state.n_agents):
        vals = np.broadcast_to(
            np.asarray(kernels.mobility(x[i, k], x[j], mu[j], dists[i, j])), (np1,))
        total += sn[j] * float(np.sum(vals))
    return total


def theta_k(state: ParticleState, kernels: KernelSet, i: int, k: int) -> float:
    """Transport velocity of particle k of agent i: the mass-weighted sum
    of the transport kernel over every particle of every agent."""
    x = state.x
    mu = x.mean(axis=1)
    sn = state.sigma_n
    dists = _pair_distances(state.a)
    np1 = x.shape[1]
    total = 0.0
    for j in range(state.n_agents):
        vals = np.broadcast_to(
            np.asarray(kernels.transport(x[i, k], x[j], mu[i], mu[j], dists[i, j])),
            (np1,))
        total += sn[j] * float(np.sum(vals))
    return total


def _engine_params(kernels: KernelSet) -> tuple:
    m = kernels.model
    phi = kernels.phi
    phi_kind = _engine.PHI_LINEAR if phi.kind == "linear" else _engine.PHI_POWER
    return (m.attitude.r_f, m.attitude.r_a, m.attitude.r_r, m.attitude.r_l,
            m.rho_loc, kernels.diffusion_enabled,
            phi_kind, phi.exponent, phi.rho_max,
            -1.0 if m.invert_velocity else 1.0)


def _rhs_arrays(x: np.ndarray, a: np.ndarray, sigma_n: np.ndarray,
                kernels: KernelSet) -> tuple[np.ndarray, np.ndarray]:
    """(dx, da) for raw arrays; compiled path for the model kernels."""
    if kernels.model is not None:
        return _engine.model_rhs(x, a, sigma_n, _engine_params(kernels))
    m, np1 = x.shape
    mu = x.mean(axis=1)
    dists = _pair_distances(a)
    theta = np.zeros((m, np1))
    beta = np.zeros((m, np1))
    da = np.zeros_like(a)
    for i in range(m):
        xi = x[i][:, None]
        for j in range(m):
            kmat = np.broadcast_to(
                np.asarray(kernels.transport(xi, x[j][None, :], mu[i], mu[j],
                                             dists[i, j])), (np1, np1))
            theta[i] += sigma_n[j] * kmat.sum(axis=1)
            if kernels.diffusion_enabled:
                amat = np.broadcast_to(
                    np.asarray(kernels.mobility(xi, x[j][None, :], mu[j],
                                                dists[i, j])), (np1, np1))
                beta[i] += sigma_n[j] * amat.sum(axis=1)
            da[i] += kernels.velocity(mu[i], mu[j], a[i], a[j], dists[i, j])
    dx = np.zeros((m, np1))
    gaps = np.diff(x, axis=1)
    rho = sigma_n[:, None] / gaps
    phi = phi_eval(rho, kernels.phi)
    dx[:, 1:-1] = (beta[:, 1:-1] / sigma_n[:, None]
                   * (phi[:, :-1] - phi[:, 1:]) + theta[:, 1:-1])
    return dx, da


def rhs(state: ParticleState, scenario: Scenario,
        kernels: KernelSet | None = None) -> Derivative:
    """Velocities of all particles and nodes at the given state."""
    if kernels is None:
        kernels = kernels_for(scenario)
    if np.any(np.diff(state.x, axis=1) <= 0):
        raise ValueError("ordering violated: densities undefined")
    dx, da = _rhs_arrays(state.x, state.a, state.sigma_n, kernels)
    return Derivative(dx=dx, da=da)


def _advance_python(x, a, sigma_n, kernels, n_steps, dt, eps_min, den0,
                    use_rk4, check_quiet, quiet_speed, quiet_steps, streak0):
    """Pure-python twin of the compiled advance loop, for custom kernels.

    Same return contract as _engine._advance_interval; mutates x, a.  With
    arbitrary callables there is no cheap Jacobian-scale estimate, so this
    path relies on the rejection guard alone to find a stable subdivision.
    """
    substeps = rejections = 0
    max_den = den = den0
    max_speed = 0.0
    streak = streak0
    steps_done = 0
    check_shrink = kernels.diffusion_enabled
    delta = 2.0 * max(eps_min, _engine.CONTACT_SPACING)
    for _step in range(n_steps):
        if den > 1:
            den //= 2
        num = 0
        step_speed = 0.0
        while num < den:
            h = dt / den
            k1x, k1a = _rhs_arrays(x, a, sigma_n, kernels)
            sp = float(np.max(np.abs(k1x)))
            if use_rk4:
                k2x, k2a = _rhs_arrays(x + 0.5 * h * k1x, a + 0.5 * h * k1a,
                                       sigma_n, kernels)
                k3x, k3a = _rhs_arrays(x + 0.5 * h * k2x, a + 0.5 * h * k2a,
                                       sigma_n, kernels)
                k4x, k4a = _rhs_arrays(x + h * k3x, a + h * k3a, sigma_n, kernels)
                xc = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                ac = a + h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
            else:
                xc = x + h * k1x
                ac = a + h * k1a
            if not kernels.diffusion_enabled:
                _engine._enforce_min_gaps(xc, delta)
            gaps = np.diff(xc, axis=1)
            if np.all(gaps >= eps_min) and (
                    not check_shrink or np.all(
                        gaps >= _engine.SHRINK_FACTOR * np.diff(x, axis=1))):
                x[...] = xc
                a[...] = ac
                num += 1
                substeps += 1
                step_speed = max(step_speed, sp)
            else:
                if den >= (1 << MAX_HALVINGS):
                    return (steps_done, den, substeps, rejections, max_den,
                            max_speed, streak, _engine.STATUS_COLLAPSE)
                den *= 2
                num *= 2
                rejections += 1
                max_den = max(max_den, den)
        steps_done += 1
        max_speed = max(max_speed, step_speed)
        if check_quiet:
            if step_speed < quiet_speed:
                streak += 1
                if streak >= quiet_steps:
                    return (steps_done, den, substeps, rejections, max_den,
                            max_speed, streak, _engine.STATUS_QUIET)
            else:
                streak = 0
    return (steps_done, den, substeps, rejections, max_den,
            max_speed, streak, _engine.STATUS_OK)


def _advance(x, a, sigma_n, kernels, n_steps, dt, eps_min, den0, use_rk4,
             check_quiet=False, quiet_speed=QUIET_SPEED,
             quiet_steps=QUIET_STEPS, streak0=0):
    if kernels.model is not None:
        return _engine._advance_interval(
            x, a, np.asarray(sigma_n, dtype=np.float64), *_engine_params(kernels),
            n_steps, dt, eps_min, den0, use_rk4,
            check_quiet, quiet_speed, quiet_steps, streak0)
    return _advance_python(x, a, sigma_n, kernels, n_steps, dt, eps_min,
                           den0, use_rk4, check_quiet, quiet_speed,
                           quiet_steps, streak0)


def _step(state: ParticleState, dt: float, scenario: Scenario,
          kernels: KernelSet | None, use_rk4: bool) -> ParticleState:
    if kernels is None:
        kernels = kernels_for(scenario)
    x = np.array(state.x, dtype=np.float64, order="C")
    a = np.array(state.a, dtype=np.float64, order="C")
    res = _advance(x, a, state.sigma_n, kernels, 1, dt,
                   scenario.run.min_gap, 1, use_rk4)
    if res[-1] == _engine.STATUS_COLLAPSE:
        raise StepCollapseError(
            f"gap guard exhausted {MAX_HALVINGS} halvings at t={state.t:.6g}")
    return ParticleState(t=state.t + dt, x=x, a=a, masses=state.masses.copy())


def step_rk4(state: ParticleState, dt: float, scenario: Scenario,
             kernels: KernelSet | None = None) -> ParticleState:
    """One guarded RK4 step of size dt (internally subdivided if needed)."""
    return _step(state, dt, scenario, kernels, use_rk4=True)


def step_euler(state: ParticleState, dt: float, scenario: Scenario,
               kernels: KernelSet | None = None) -> ParticleState:
    """One guarded forward-Euler step; reference oracle for tests."""
    return _step(state, dt, scenario, kernels, use_rk4=False)


def _snapshot_times(t_final: float, every: float) -> list[float]:
    if t_final <= 0.0:
        return [0.0]
    n_full = int(math.floor(t_final / every + 1e-9))
    edges = [k * every for k in range(n_full + 1)]
    if t_final - edges[-1] > 1e-9 * every:
        edges.append(t_final)
    else:
        edges[-1] = t_final
    return edges


def simulate(scenario: Scenario, kernels: KernelSet | None = None) -> Trajectory:
    """Integrate the scenario from t = 0 to t_final.

    Unsampled initial conditions are realized from the scenario seed
    first, so the returned trajectory's scenario is always fully
    realized.  Snapshots are emitted every snapshot_every (the nominal dt
    is rounded to divide each snapshot interval exactly).  Raises
    ScenarioError on invalid input and StepCollapseError when the gap
    guard runs out of halvings.

    Without diffusion nothing in the dynamics resists compression, and
    particles can reach a pinned wall (or each other) in finite time; in
    that regime contacts are handled by projection: gaps are held at a
    tiny minimal spacing (~2e-14, or twice min_gap if larger) instead of
    rejecting the step, so boundary and cluster atoms form cleanly.
    """
    violations = validate(scenario)
    if violations:
        raise ScenarioError(violations)
    if not is_realized(scenario):
        scenario = sample_initial_conditions(scenario, scenario.seed)
    if kernels is None:
        kernels = kernels_for(scenario)
    run = scenario.run
    state0 = initial_state(scenario)
    times = _snapshot_times(run.t_final, run.snapshot_every)
    states = [state0]
    out_times = [0.0]
    interval_speeds: list[float] = []
    x = state0.x.copy()
    a = state0.a.copy()
    sigma_n = state0.sigma_n
    den = 1
    streak = 0
    substeps = rejections = nominal = 0
    max_den = 1
    stopped = False
    for t0, t1 in zip(times[:-1], times[1:]):
        span = t1 - t0
        n_steps = max(1, round(span / run.dt))
        dt_eff = span / n_steps
        (steps_done, den, sub, rej, mden, speed, streak, status) = _advance(
            x, a, sigma_n, kernels, n_steps, dt_eff, run.min_gap, den,
            use_rk4=True, check_quiet=run.stop_when_quiet,
            streak0=streak)
        substeps += sub
        rejections += rej
        nominal += steps_done
        max_den = max(max_den, mden)
        if status == _engine.STATUS_COLLAPSE:
            raise StepCollapseError(
                f"gap guard exhausted {MAX_HALVINGS} halvings near "
                f"t={t0 + steps_done * dt_eff:.6g}")
        t_reached = t1 if steps_done == n_steps else t0 + steps_done * dt_eff
        # Fold the interval-end speed into the interval maximum.
        dx_end, _ = _rhs_arrays(x, a, sigma_n, kernels)
        speed = max(speed, float(np.max(np.abs(dx_end))))
        states.append(ParticleState(t=t_reached, x=x.copy(), a=a.copy(),
                                    masses=state0.masses.copy()))
        out_times.append(t_reached)
        interval_speeds.append(speed)
        if status == _engine.STATUS_QUIET:
            stopped = True
            break
    stats = IntegratorStats(nominal_steps=nominal, substeps=substeps,
                            rejections=rejections, max_subdivision=max_den)
    return Trajectory(scenario=scenario, times=tuple(out_times),
                      states=tuple(states),
                      interval_max_speed=tuple(interval_speeds),
                      stats=stats, stopped_early=stopped)
