"""Observables for radicalization / polarization / fragmentation readouts.

All functions are pure over immutable state snapshots.  The indices here
are deliberately simple (histograms, radius-graph components, mass in the
extreme bands, largest separating gap of the sorted means) and are meant
for trend comparisons across interaction radii and attitude sets, not as
absolute measurements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import OMEGA_HI, OMEGA_LO, ParticleState
from .transport import reconstruct, total_variation, wasserstein1

# Opinions with |x| >= EXTREME_CUT count as extreme for polarization.
EXTREME_CUT = 0.75
# A separating gap must leave at least this fraction of agents on each side.
GROUP_FRACTION = 0.2


class UnionFind:
    """Disjoint sets over range(n) with path compression + union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            return
        if self.size[ri] < self.size[rj]:
            ri, rj = rj, ri
        self.parent[rj] = ri
        self.size[ri] += self.size[rj]


def mean_opinions(state: ParticleState) -> np.ndarray:
    """Discrete mean opinion of every agent."""
    return state.x.mean(axis=1)


def mean_opinion_histogram(state: ParticleState, bins: int = 20
                           ) -> tuple[np.ndarray, np.ndarray]:
    """(counts, edges) of the mean opinions over uniform bins on [-1, 1]."""
    if bins < 2:
        raise ValueError("need at least 2 bins")
    counts, edges = np.histogram(mean_opinions(state), bins=bins,
                                 range=(OMEGA_LO, OMEGA_HI))
    return counts, edges


def network_clusters(state: ParticleState, rho_loc: float) -> np.ndarray:
    """Connected components of the radius graph on node positions.

    Agents i, j are linked iff ||a_i - a_j|| <= rho_loc.  Returns one
    label per agent; labels are assigned 0, 1, ... in order of each
    component's smallest member index, so the output is deterministic.
    """
    a = state.a
    m = a.shape[0]
    uf = UnionFind(m)
    for i in range(m):
        d = np.linalg.norm(a[i + 1:] - a[i], axis=1)
        for off in np.nonzero(d <= rho_loc)[0]:
            uf.union(i, i + 1 + off)
    roots = [uf.find(i) for i in range(m)]
    label_of_root: dict[int, int] = {}
    labels = np.empty(m, dtype=int)
    for i, r in enumerate(roots):
        if r not in label_of_root:
            label_of_root[r] = len(label_of_root)
        labels[i] = label_of_root[r]
    return labels


def polarization_index(state: ParticleState) -> float:
    """Fraction of total opinion mass in [-1, -0.75] union [0.75, 1].

    Computed from the piecewise-constant reconstructions, so partial
    overlap of a particle interval with the extreme bands counts
    proportionally.
    """
    bands = ((OMEGA_LO, -EXTREME_CUT), (EXTREME_CUT, OMEGA_HI))
    extreme = 0.0
    total = 0.0
    for i in range(state.n_agents):
        x = state.x[i]
        rho = state.sigma_n[i] / np.diff(x)
        for lo, hi in bands:
            overlap = np.clip(np.minimum(x[1:], hi) - np.maximum(x[:-1], lo),
                              0.0, None)
            extreme += float(np.sum(rho * overlap))
        total += float(state.masses[i])
    return extreme / total


def bimodality_gap(means: np.ndarray) -> float:
    """Largest gap of the sorted means splitting agents into two groups
    of >= 20% each; 0 unless that gap exceeds the median gap.

    Equally spaced means give 0 (no gap strictly exceeds the median); two
    tight groups give roughly the distance between them.
    """
    means = np.sort(np.asarray(means, dtype=float))
    m = means.size
    if m < 2:
        raise ValueError("need at least 2 means")
    gaps = np.diff(means)
    min_group = GROUP_FRACTION * m
    best = 0.0
    for k in range(m - 1):
        left, right = k + 1, m - (k + 1)
        if left >= min_group and right >= min_group and gaps[k] > best:
            best = float(gaps[k])
    if best <= float(np.median(gaps)):
        return 0.0
    return best


def cluster_opinion_spread(state: ParticleState, clusters: np.ndarray) -> float:
    """Mean over clusters of the within-cluster sample standard deviation
    of mean opinions (singleton clusters contribute 0)."""
    means = mean_opinions(state)
    clusters = np.asarray(clusters)
    spreads = []
    for label in range(int(clusters.max()) + 1):
        group = means[clusters == label]
        spreads.append(float(np.std(group, ddof=1)) if group.size > 1 else 0.0)
    return float(np.mean(spreads))


@dataclass(frozen=True)
class MetricsRecord:
    """All observables of one snapshot."""

    t: float
    mean_opinions: np.ndarray
    histogram_counts: np.ndarray
    histogram_edges: np.ndarray
    n_clusters: int
    cluster_opinion_spread: float
    polarization_index: float
    bimodality_gap: float
    total_variation: np.ndarray
    w1_to_initial: np.ndarray


def compute_metrics(state: ParticleState, rho_loc: float,
                    initial_state: ParticleState, bins: int = 20) -> MetricsRecord:
    """Evaluate every observable of one snapshot against the initial one."""
    counts, edges = mean_opinion_histogram(state, bins)
    labels = network_clusters(state, rho_loc)
    m = state.n_agents
    tv = np.empty(m)
    w1 = np.empty(m)
    for i in range(m):
        view = reconstruct(state.x[i], state.sigma_n[i])
        tv[i] = total_variation(view)
        w1[i] = wasserstein1(view, reconstruct(initial_state.x[i],
                                               initial_state.sigma_n[i]))
    return MetricsRecord(
        t=state.t,
        mean_opinions=mean_opinions(state),
        histogram_counts=counts,
        histogram_edges=edges,
        n_clusters=int(labels.max()) + 1,
        cluster_opinion_spread=cluster_opinion_spread(state, labels),
        polarization_index=polarization_index(state),
        bimodality_gap=bimodality_gap(mean_opinions(state)),
        total_variation=tv,
        w1_to_initial=w1,
    )
