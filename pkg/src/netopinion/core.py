"""Scenario description and initial data for the opinion/network simulator.

The simulated system couples, for each of M agents,

* an opinion density on the fixed interval Omega = [-1, 1], discretised by
  N+1 ordered particles carrying equal mass fractions sigma_i / N, and
* a node position in R^d that moves under pairwise attraction/repulsion
  driven by the agents' mean opinions.

This module holds the plain-data scenario types (agents, attitude ranges,
run parameters), their validation, the initial-density primitives (pdf /
cdf / bounds) and the seeded sampling of unspecified initial conditions.
Everything downstream (particle dynamics, transport metrics, file IO)
consumes these types.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.special import erf

# Opinion domain Omega = [OMEGA_LO, OMEGA_HI]; fixed by the model.
OMEGA_LO = -1.0
OMEGA_HI = 1.0
OMEGA_LEN = OMEGA_HI - OMEGA_LO

# Ranges used when an agent's initial data are left unspecified: the mean
# and variance of the truncated-Gaussian opinion density and the box for
# node positions.  Variance is the variance parameter of the underlying
# (untruncated) Gaussian, not a standard deviation.
MEAN_RANGE = (-0.7, 0.7)
VARIANCE_RANGE = (0.07, 0.15)
DEFAULT_POSITION_BOX = (0.0, 10.0)


@dataclass(frozen=True)
class AttitudeParams:
    """Breakpoints 0 < r_f < r_a < r_r < r_l of the attitude response.

    The pairwise attitude function is piecewise linear in the mean-opinion
    distance s = |mu_i - mu_j|: strong attraction below r_f, mild
    attraction up to r_a, mild repulsion up to r_r, strong repulsion up to
    r_l and saturated repulsion beyond.
    """

    r_f: float
    r_a: float
    r_r: float
    r_l: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.r_f, self.r_a, self.r_r, self.r_l)


# Named attitude parameter sets used throughout the experiments, ordered
# from close-minded (narrow attraction range) to open-minded.
ATTITUDE_PRESETS: dict[str, AttitudeParams] = {
    "blue": AttitudeParams(0.15, 0.20, 0.30, 0.40),
    "black": AttitudeParams(0.25, 0.34, 0.36, 0.65),
    "red": AttitudeParams(0.30, 0.45, 0.55, 0.70),
    "olive": AttitudeParams(0.40, 0.80, 1.20, 1.60),
}


@dataclass(frozen=True)
class PhiSpec:
    """Diffusion response Phi applied to the discrete densities.

    kind "linear" is the identity.  kind "power" is Phi(r) = min(r, rho_max)
    ** exponent with exponent >= 1; the clamp keeps Phi globally Lipschitz.
    Both satisfy Phi(0) = 0 and are nondecreasing.
    """

    kind: str = "linear"
    exponent: float = 1.0
    rho_max: float = 10.0


@dataclass(frozen=True)
class TruncatedGaussian:
    """Gaussian restricted to Omega and renormalised to the agent's mass.

    mean/variance may be None, meaning "sample me": they are drawn in
    sample_initial_conditions from MEAN_RANGE / VARIANCE_RANGE.
    """

    mean: float | None = None
    variance: float | None = None


@dataclass(frozen=True)
class TabulatedDensity:
    """Piecewise-linear density given by samples on a grid spanning Omega.

    values must be strictly positive; the curve is renormalised to the
    agent's mass.  grid must be strictly increasing with grid[0] = -1 and
    grid[-1] = 1.
    """

    grid: tuple[float, ...]
    values: tuple[float, ...]


DensitySpec = Union[TruncatedGaussian, TabulatedDensity]


@dataclass(frozen=True)
class AgentInit:
    """One agent's initial data: opinion mass, density shape, node position.

    position None means "sample me" (uniform in the scenario's position
    box).  mass is the total opinion mass sigma_i > 0.
    """

    mass: float = 1.0
    density: DensitySpec = field(default_factory=TruncatedGaussian)
    position: tuple[float, ...] | None = None


@dataclass(frozen=True)
class RunParams:
    """Numerical parameters of one run.

    n_particles is N: each agent's density is carried by N+1 particles.
    dt is the nominal step of the fixed-step integrator; snapshot_every the
    spacing of recorded states; min_gap the particle-collision guard below
    which a step is rejected and retried with a halved substep.  If
    stop_when_quiet is set the run ends early once the maximum particle
    speed stays below QUIET_SPEED for QUIET_STEPS consecutive steps.
    """

    n_particles: int = 100
    t_final: float = 2.0
    dt: float = 1e-3
    snapshot_every: float = 0.1
    min_gap: float = 1e-12
    stop_when_quiet: bool = False


# Quasi-stationarity rule for stop_when_quiet.
QUIET_SPEED = 1e-4
QUIET_STEPS = 100


@dataclass(frozen=True)
class Scenario:
    """Full description of a simulation: agents, interactions, run knobs.

    interaction_radius is the network locality cutoff (math.inf = global
    interaction).  diffusion_enabled switches the self-diffusion term of
    the opinion dynamics.  invert_network_velocity flips the sign of the
    node-velocity coupling, making positive attitude repel instead of
    attract.  mass_jitter in [0, 1) multiplies each agent mass by a factor
    uniform in [1 - j, 1 + j] at sampling time.
    """

    agents: tuple[AgentInit, ...]
    attitude: AttitudeParams
    interaction_radius: float = math.inf
    diffusion_enabled: bool = True
    phi: PhiSpec = field(default_factory=PhiSpec)
    network_dim: int = 2
    run: RunParams = field(default_factory=RunParams)
    seed: int = 0
    position_box: tuple[float, float] = DEFAULT_POSITION_BOX
    mass_jitter: float = 0.0
    invert_network_velocity: bool = False

    @property
    def n_agents(self) -> int:
        return len(self.agents)


@dataclass(frozen=True)
class Violation:
    """One violated scenario invariant, with a machine-readable code."""

    code: str
    where: str
    detail: str


@dataclass(frozen=True)
class ParticleState:
    """State of the coupled system at one instant.

    x has shape (M, N+1), rows strictly increasing with x[:, 0] = -1 and
    x[:, -1] = +1.  a has shape (M, d).  masses holds the per-agent opinion
    masses sigma_i; each particle of agent i carries sigma_i / N.
    Instances are treated as immutable snapshots (arrays are write-locked).
    """

    t: float
    x: np.ndarray
    a: np.ndarray
    masses: np.ndarray

    def __post_init__(self) -> None:
        for arr in (self.x, self.a, self.masses):
            arr.setflags(write=False)

    @property
    def n_agents(self) -> int:
        return self.x.shape[0]

    @property
    def n_particles(self) -> int:
        return self.x.shape[1] - 1

    @property
    def sigma_n(self) -> np.ndarray:
        """Per-particle mass fraction sigma_i / N for each agent."""
        return self.masses / self.n_particles


def _check_state(state: ParticleState, min_gap: float = 0.0) -> None:
    """Raise if a state breaks the structural invariants (test helper)."""
    x = state.x
    if not np.allclose(x[:, 0], OMEGA_LO) or not np.allclose(x[:, -1], OMEGA_HI):
        raise ValueError("boundary particles must sit at the ends of Omega")
    gaps = np.diff(x, axis=1)
    if not np.all(gaps > min_gap):
        raise ValueError("particle ordering violated")
    if state.a.shape[0] != x.shape[0]:
        raise ValueError("node array does not match agent count")


# ---------------------------------------------------------------------------
# Density primitives


def _trunc_gauss_norm(mean: float, variance: float) -> float:
    """Mass of the unit Gaussian N(mean, variance) restricted to Omega."""
    s = math.sqrt(variance)
    hi = (OMEGA_HI - mean) / (s * math.sqrt(2.0))
    lo = (OMEGA_LO - mean) / (s * math.sqrt(2.0))
    return 0.5 * (erf(hi) - erf(lo))


def density_pdf(spec: DensitySpec, mass: float, x: np.ndarray) -> np.ndarray:
    """Initial density evaluated at x, renormalised to total mass `mass`."""
    x = np.asarray(x, dtype=float)
    if isinstance(spec, TruncatedGaussian):
        if spec.mean is None or spec.variance is None:
            raise ValueError("density parameters not realised; sample first")
        s = math.sqrt(spec.variance)
        z = _trunc_gauss_norm(spec.mean, spec.variance)
        vals = np.exp(-0.5 * ((x - spec.mean) / s) ** 2) / (s * math.sqrt(2 * math.pi))
        return mass * vals / z
    grid = np.asarray(spec.grid, dtype=float)
    vals = np.asarray(spec.values, dtype=float)
    raw = np.trapezoid(vals, grid)
    return mass * np.interp(x, grid, vals) / raw


def density_cdf(spec: DensitySpec, mass: float, x: np.ndarray) -> np.ndarray:
    """Cumulative mass on [-1, x], exact for both density kinds."""
    x = np.asarray(x, dtype=float)
    if isinstance(spec, TruncatedGaussian):
        if spec.mean is None or spec.variance is None:
            raise ValueError("density parameters not realised; sample first")
        s = math.sqrt(spec.variance)
        z = _trunc_gauss_norm(spec.mean, spec.variance)
        lo = erf((OMEGA_LO - spec.mean) / (s * math.sqrt(2.0)))
        cur = erf((x - spec.mean) / (s * math.sqrt(2.0)))
        out = mass * 0.5 * (cur - lo) / z
        return np.clip(out, 0.0, mass)
    grid = np.asarray(spec.grid, dtype=float)
    vals = np.asarray(spec.values, dtype=float)
    raw = np.trapezoid(vals, grid)
    # Node cumulative, then the exact quadratic piece inside each cell of
    # the piecewise-linear density.
    node_cum = np.concatenate(
        [[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(grid))]
    )
    idx = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, len(grid) - 2)
    h = x - grid[idx]
    slope = (vals[idx + 1] - vals[idx]) / (grid[idx + 1] - grid[idx])
    out = node_cum[idx] + vals[idx] * h + 0.5 * slope * h * h
    return np.clip(mass * out / raw, 0.0, mass)


def density_bounds(spec: DensitySpec, mass: float) -> tuple[float, float]:
    """(inf, sup) of the renormalised initial density over Omega."""
    if isinstance(spec, TruncatedGaussian):
        if spec.mean is None or spec.variance is None:
            raise ValueError("density parameters not realised; sample first")
        peak = min(max(spec.mean, OMEGA_LO), OMEGA_HI)
        far_end = OMEGA_LO if spec.mean >= 0.0 else OMEGA_HI
        lo = float(density_pdf(spec, mass, np.array([far_end]))[0])
        hi = float(density_pdf(spec, mass, np.array([peak]))[0])
        return lo, hi
    vals = density_pdf(spec, mass, np.asarray(spec.grid, dtype=float))
    return float(vals.min()), float(vals.max())


# ---------------------------------------------------------------------------
# Validation


def _check_density(spec: DensitySpec, where: str, out: list[Violation]) -> None:
    if isinstance(spec, TruncatedGaussian):
        if spec.mean is not None and not (OMEGA_LO < spec.mean < OMEGA_HI):
            out.append(Violation("density_mean_outside_domain", where,
                                 f"mean {spec.mean} not in (-1, 1)"))
        if spec.variance is not None and not spec.variance > 0:
            out.append(Violation("nonpositive_variance", where,
                                 f"variance {spec.variance} must be > 0"))
        return
    grid = np.asarray(spec.grid, dtype=float)
    vals = np.asarray(spec.values, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or vals.shape != grid.shape:
        out.append(Violation("tabulated_shape_mismatch", where,
                             "grid/values must be matching 1-d sequences"))
        return
    if not np.all(np.diff(grid) > 0):
        out.append(Violation("tabulated_grid_not_increasing", where,
                             "grid must be strictly increasing"))
    if grid[0] != OMEGA_LO or grid[-1] != OMEGA_HI:
        out.append(Violation("tabulated_grid_not_spanning", where,
                             "grid must span [-1, 1] exactly"))
    if not np.all(vals > 0):
        out.append(Violation("nonpositive_density", where,
                             "tabulated values must be strictly positive"))


def validate(scenario: Scenario) -> list[Violation]:
    """Check every scenario invariant; return all violations (empty = ok).

    Codes are stable strings intended for programmatic handling, e.g.
    "attitude_radii_not_increasing" or "nonpositive_mass".
    """
    out: list[Violation] = []
    att = scenario.attitude
    if not (0.0 < att.r_f < att.r_a < att.r_r < att.r_l):
        out.append(Violation("attitude_radii_not_increasing", "attitude",
                             f"need 0 < r_f < r_a < r_r < r_l, got {att.as_tuple()}"))
    if scenario.n_agents < 1:
        out.append(Violation("no_agents", "agents", "at least one agent required"))
    for i, agent in enumerate(scenario.agents):
        where = f"agents[{i}]"
        if not agent.mass > 0:
            out.append(Violation("nonpositive_mass", where,
                                 f"mass {agent.mass} must be > 0"))
        _check_density(agent.density, where + ".density", out)
        if agent.position is not None:
            pos = np.asarray(agent.position, dtype=float)
            if pos.shape != (scenario.network_dim,):
                out.append(Violation("position_dim_mismatch", where,
                                     f"position has shape {pos.shape}, expected "
                                     f"({scenario.network_dim},)"))
            elif not np.all(np.isfinite(pos)):
                out.append(Violation("nonfinite_position", where,
                                     "position must be finite"))
    rad = scenario.interaction_radius
    if math.isnan(rad) or rad <= 0:
        out.append(Violation("invalid_interaction_radius", "interaction_radius",
                             f"radius {rad} must be positive (inf allowed)"))
    phi = scenario.phi
    if phi.kind not in ("linear", "power"):
        out.append(Violation("unknown_phi_kind", "phi", f"kind {phi.kind!r}"))
    elif phi.kind == "power":
        if not phi.exponent >= 1.0:
            out.append(Violation("phi_exponent_below_one", "phi",
                                 f"exponent {phi.exponent} must be >= 1"))
        if not phi.rho_max > 0:
            out.append(Violation("nonpositive_phi_clamp", "phi",
                                 f"rho_max {phi.rho_max} must be > 0"))
    if scenario.network_dim < 1:
        out.append(Violation("invalid_network_dim", "network_dim",
                             f"dimension {scenario.network_dim} must be >= 1"))
    run = scenario.run
    if run.n_particles < 2:
        out.append(Violation("too_few_particles", "run",
                             f"n_particles {run.n_particles} must be >= 2"))
    if not run.dt > 0:
        out.append(Violation("nonpositive_dt", "run", f"dt {run.dt} must be > 0"))
    if not run.t_final >= 0:
        out.append(Violation("negative_t_final", "run",
                             f"t_final {run.t_final} must be >= 0"))
    if run.t_final > 0 and not (run.dt <= run.snapshot_every <= run.t_final):
        out.append(Violation("bad_snapshot_spacing", "run",
                             "need dt <= snapshot_every <= t_final"))
    if not run.min_gap > 0:
        out.append(Violation("nonpositive_min_gap", "run",
                             f"min_gap {run.min_gap} must be > 0"))
    lo, hi = scenario.position_box
    if not lo < hi:
        out.append(Violation("empty_position_box", "position_box",
                             f"box ({lo}, {hi}) must have lo < hi"))
    if not (0.0 <= scenario.mass_jitter < 1.0):
        out.append(Violation("invalid_mass_jitter", "mass_jitter",
                             f"jitter {scenario.mass_jitter} must be in [0, 1)"))
    if scenario.seed < 0:
        out.append(Violation("negative_seed", "seed", "seed must be >= 0"))
    return out


def is_realized(scenario: Scenario) -> bool:
    """True when no agent has unspecified density parameters or position."""
    for agent in scenario.agents:
        if agent.position is None:
            return False
        d = agent.density
        if isinstance(d, TruncatedGaussian) and (d.mean is None or d.variance is None):
            return False
    return True


def sample_initial_conditions(scenario: Scenario, seed: int | None = None) -> Scenario:
    """Fill every unspecified initial value; return a fully realised scenario.

    Draw order is fixed so runs are reproducible: agents are visited in
    index order and for each one the density mean, then variance, then the
    position coordinates, then the mass-jitter factor are drawn (skipping
    values given explicitly, except the jitter which applies to every agent
    when mass_jitter > 0).  Means are uniform in MEAN_RANGE, variances in
    VARIANCE_RANGE, positions uniform in the scenario's position box.
    Realised values are ordinary floats, so a realised scenario round-trips
    through files and replays without any random generator.
    """
    if seed is None:
        seed = scenario.seed
    rng = np.random.default_rng(seed)
    lo, hi = scenario.position_box
    agents: list[AgentInit] = []
    for agent in scenario.agents:
        dens = agent.density
        if isinstance(dens, TruncatedGaussian):
            mean = dens.mean
            if mean is None:
                mean = float(rng.uniform(*MEAN_RANGE))
            var = dens.variance
            if var is None:
                var = float(rng.uniform(*VARIANCE_RANGE))
            dens = TruncatedGaussian(mean, var)
        pos = agent.position
        if pos is None:
            pos = tuple(float(v) for v in rng.uniform(lo, hi, scenario.network_dim))
        mass = agent.mass
        if scenario.mass_jitter > 0.0:
            mass *= 1.0 + float(rng.uniform(-scenario.mass_jitter,
                                            scenario.mass_jitter))
        agents.append(AgentInit(mass=mass, density=dens, position=tuple(pos)))
    return dataclasses.replace(scenario, agents=tuple(agents), seed=seed)
