"""Tests for the radicalization / polarization / fragmentation observables."""

import numpy as np
import pytest

from netopinion.core import ParticleState
from netopinion.metrics import (
    MetricsRecord,
    UnionFind,
    bimodality_gap,
    cluster_opinion_spread,
    compute_metrics,
    mean_opinion_histogram,
    mean_opinions,
    network_clusters,
    polarization_index,
)


def state_with(x_rows, a_rows=None, masses=None):
    x = np.array(x_rows, dtype=float)
    m = x.shape[0]
    a = np.array(a_rows if a_rows is not None else np.zeros((m, 2)), dtype=float)
    masses = np.array(masses if masses is not None else np.ones(m), dtype=float)
    return ParticleState(t=0.0, x=x, a=a, masses=masses)


def uniform_rows(m, n):
    return np.tile(np.linspace(-1.0, 1.0, n + 1), (m, 1))


# ---------------------------------------------------------------------------
# Union-find


def test_union_find_chain():
    uf = UnionFind(4)
    uf.union(0, 1)
    uf.union(1, 2)
    assert uf.find(0) == uf.find(2)
    assert uf.find(3) != uf.find(0)


def test_union_find_idempotent():
    uf = UnionFind(3)
    uf.union(0, 1)
    uf.union(0, 1)
    assert len({uf.find(i) for i in range(3)}) == 2


# ---------------------------------------------------------------------------
# Histogram


def test_histogram_counts_all_agents():
    state = state_with(uniform_rows(7, 10))
    counts, edges = mean_opinion_histogram(state, bins=20)
    assert counts.sum() == 7
    assert edges[0] == -1.0 and edges[-1] == 1.0
    assert len(counts) == 20


def test_histogram_places_known_means():
    # Means 0 and ~0.9 with 4 bins on [-1, 1]: bins [0,0.5) and [0.5,1].
    row0 = np.linspace(-1.0, 1.0, 5)              # mean 0
    row1 = np.array([-1.0, 0.93, 0.95, 0.97, 1.0])  # mean 0.57
    state = state_with([row0, row1])
    counts, _ = mean_opinion_histogram(state, bins=4)
    assert counts.tolist() == [0, 0, 1, 1]


def test_histogram_needs_two_bins():
    with pytest.raises(ValueError):
        mean_opinion_histogram(state_with(uniform_rows(2, 4)), bins=1)


# ---------------------------------------------------------------------------
# Network clusters


def test_clusters_three_agent_chain():
    # 0-1 and 1-2 linked, 3 isolated: components {0,1,2} and {3}.
    a = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [10.0, 0.0]]
    state = state_with(uniform_rows(4, 4), a_rows=a)
    labels = network_clusters(state, rho_loc=1.5)
    assert labels.tolist() == [0, 0, 0, 1]


def test_clusters_labels_by_smallest_member():
    a = [[10.0, 0.0], [0.0, 0.0], [10.5, 0.0]]
    state = state_with(uniform_rows(3, 4), a_rows=a)
    labels = network_clusters(state, rho_loc=1.0)
    # Agent 0 seen first: its component gets label 0 even though agent 1
    # is spatially leftmost.
    assert labels.tolist() == [0, 1, 0]


def test_clusters_radius_boundary_inclusive():
    a = [[0.0, 0.0], [5.0, 0.0]]
    state = state_with(uniform_rows(2, 4), a_rows=a)
    assert network_clusters(state, 5.0).tolist() == [0, 0]
    assert network_clusters(state, 4.999).tolist() == [0, 1]


def test_clusters_infinite_radius_single_component():
    rng = np.random.default_rng(0)
    a = rng.uniform(0, 10, (6, 2))
    state = state_with(uniform_rows(6, 4), a_rows=a)
    assert set(network_clusters(state, np.inf).tolist()) == {0}


# ---------------------------------------------------------------------------
# Polarization


def test_polarization_uniform_quarter():
    # Uniform density: the extreme bands [-1,-0.75] and [0.75,1] hold a
    # quarter of the mass.
    state = state_with(uniform_rows(3, 8))
    assert polarization_index(state) == pytest.approx(0.25, abs=1e-12)


def test_polarization_reflection_invariant():
    x = np.array([[-1.0, -0.9, -0.2, 0.4, 1.0]])
    state = state_with(x)
    mirrored = state_with(-x[:, ::-1])
    assert polarization_index(state) == pytest.approx(
        polarization_index(mirrored), abs=1e-14)


def test_polarization_concentrated_in_band():
    # Nearly all interior mass inside [0.75, 1]: index close to 1.
    x = np.array([[-1.0] + list(np.linspace(0.8, 0.95, 9)) + [1.0]])
    state = state_with(x)
    # 10 of 10 particle intervals overlap the band except the first one.
    assert polarization_index(state) > 0.85


def test_polarization_partial_overlap_exact():
    # Single agent, two equal-mass cells [-1, 0] and [0, 1]: the right
    # band [0.75, 1] overlaps a quarter of the right cell -> 0.5 * 0.25;
    # the left band symmetric -> total 0.25.
    state = state_with([[-1.0, 0.0, 1.0]])
    assert polarization_index(state) == pytest.approx(0.25, abs=1e-14)


# ---------------------------------------------------------------------------
# Bimodality gap


def test_bimodality_equally_spaced_is_zero():
    assert bimodality_gap(np.linspace(-0.8, 0.8, 10)) == 0.0


def test_bimodality_two_tight_groups():
    means = np.array([-0.52, -0.5, -0.48, 0.48, 0.5, 0.52])
    gap = bimodality_gap(means)
    assert gap == pytest.approx(0.96, abs=1e-12)


def test_bimodality_respects_group_fraction():
    # Splitting off a single agent out of 10 (10% < 20%) does not count.
    means = np.array([-0.9] + [0.5 + 0.001 * i for i in range(9)])
    assert bimodality_gap(means) == 0.0


def test_bimodality_needs_two_means():
    with pytest.raises(ValueError):
        bimodality_gap(np.array([0.1]))


def test_bimodality_unsorted_input_ok():
    means = np.array([0.5, -0.5, 0.52, -0.52])
    assert bimodality_gap(means) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# Cluster opinion spread


def test_cluster_spread_hand_value():
    # Cluster 0: means 0.1, 0.2 (std ddof=1 = 0.0707...); cluster 1:
    # means -0.3, -0.1 (std = 0.1414...); average of the two.
    def row_with_mean(mu):
        # mean of [-1, c, 1] is c / 3
        return [-1.0, 3.0 * mu, 1.0]

    x = [row_with_mean(0.1), row_with_mean(0.2),
         row_with_mean(-0.3), row_with_mean(-0.1)]
    a = [[0.0, 0.0], [1.0, 0.0], [10.0, 0.0], [11.0, 0.0]]
    state = state_with(x, a_rows=a)
    clusters = network_clusters(state, rho_loc=2.0)
    assert clusters.tolist() == [0, 0, 1, 1]
    expected = 0.5 * (np.std([0.1, 0.2], ddof=1) + np.std([-0.3, -0.1], ddof=1))
    assert cluster_opinion_spread(state, clusters) == pytest.approx(expected)


def test_cluster_spread_singletons_zero():
    x = [[-1.0, 0.3, 1.0], [-1.0, -0.6, 1.0]]
    a = [[0.0, 0.0], [50.0, 0.0]]
    state = state_with(x, a_rows=a)
    clusters = network_clusters(state, rho_loc=1.0)
    assert cluster_opinion_spread(state, clusters) == 0.0


# ---------------------------------------------------------------------------
# compute_metrics


def test_compute_metrics_fields_consistent():
    rng = np.random.default_rng(4)
    interior = np.sort(rng.uniform(-0.99, 0.99, (5, 9)), axis=1)
    x = np.hstack([np.full((5, 1), -1.0), interior, np.full((5, 1), 1.0)])
    a = rng.uniform(0, 10, (5, 2))
    state = state_with(x, a_rows=a)
    rec = compute_metrics(state, rho_loc=5.0, initial_state=state)
    assert isinstance(rec, MetricsRecord)
    np.testing.assert_allclose(rec.mean_opinions, mean_opinions(state))
    assert rec.histogram_counts.sum() == 5
    np.testing.assert_allclose(rec.w1_to_initial, 0.0, atol=1e-15)
    assert np.all(rec.total_variation > 0)
    labels = network_clusters(state, 5.0)
    assert rec.n_clusters == labels.max() + 1
