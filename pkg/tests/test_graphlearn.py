import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bgmil.graphcore import Graph, GraphError
from bgmil.graphlearn import (
    DistanceMatrix,
    EdgeSet,
    GraphLearnConfig,
    calibrate_scale,
    graph_objective,
    learn_graph,
    pairwise_sq_euclidean,
    restrict_edge_set,
    solve_graph_map,
)
from bgmil.numkit import Rng

from oracles import dense_objective, projected_gradient_graph

RAW = dict(auto_calibrate=False, max_iters=20_000, rel_tol=1e-10)


def two_node(d):
    return DistanceMatrix(np.array([[0.0, d], [d, 0.0]]))


# -- distances ------------------------------------------------------------------
def test_pairwise_hand_value():
    d = pairwise_sq_euclidean(np.array([[0.0, 0.0], [3.0, 4.0]]))
    assert d.values[0, 1] == 25.0


def test_pairwise_identical_rows():
    d = pairwise_sq_euclidean(np.ones((3, 2)))
    np.testing.assert_array_equal(d.values, np.zeros((3, 3)))


@pytest.mark.parametrize("seed", range(5))
def test_pairwise_double_loop(seed):
    z = Rng(seed).normal(size=(5, 3))
    d = pairwise_sq_euclidean(z).values
    ref = np.array([[sum((z[i] - z[j]) ** 2) for j in range(5)] for i in range(5)])
    np.testing.assert_allclose(d, ref, atol=1e-12)
    assert np.array_equal(d, d.T)


def test_pairwise_needs_two_rows():
    with pytest.raises(ValueError):
        pairwise_sq_euclidean(np.ones((1, 2)))


def test_distance_matrix_validation():
    with pytest.raises(ValueError):
        DistanceMatrix(np.array([[0, 1.0], [2.0, 0]]))
    with pytest.raises(ValueError):
        DistanceMatrix(np.array([[1.0, 1.0], [1.0, 0]]))
    with pytest.raises(ValueError):
        DistanceMatrix(np.array([[0, -1.0], [-1.0, 0]]))


# -- edge set ------------------------------------------------------------------------
def test_edge_set_all_pairs():
    d = pairwise_sq_euclidean(Rng(0).normal(size=(5, 2)))
    assert len(restrict_edge_set(d, 2, 2)) == 10


def test_edge_set_forced_neighbours():
    d = pairwise_sq_euclidean(np.array([[0.0], [1.0], [3.0]]))
    assert restrict_edge_set(d, 1, 1).pairs() == [(0, 1), (1, 2)]


def test_edge_set_too_large():
    d = pairwise_sq_euclidean(np.zeros((4, 1)))
    with pytest.raises(ValueError):
        restrict_edge_set(d, 2, 2)


@given(st.integers(4, 30), st.integers(1, 3), st.integers(1, 3), st.integers(0, 1000))
def test_edge_set_size_bound(n, k, r, seed):
    if k * r >= n:
        return
    es = restrict_edge_set(pairwise_sq_euclidean(Rng(seed).normal(size=(n, 2))), k, r)
    assert len(es) <= n * k * r
    assert np.all(es.i < es.j)
    assert len(set(es.pairs())) == len(es)


# -- objective -------------------------------------------------------------------------
def test_objective_two_node_hand_value():
    a = np.array([[0, 0.5], [0.5, 0]])
    assert graph_objective(a, two_node(1.0), 1.0, 1.0) == pytest.approx(1 + 2 * math.log(2) + 0.5, abs=1e-12)


def test_objective_isolated_node():
    a = np.zeros((3, 3))
    a[0, 1] = a[1, 0] = 1.0
    d = pairwise_sq_euclidean(Rng(0).normal(size=(3, 2)))
    assert graph_objective(a, d, 1.0, 1.0) == math.inf


def test_objective_negative_entries():
    with pytest.raises(ValueError):
        graph_objective(np.array([[0, -1.0], [-1.0, 0]]), two_node(1.0), 1.0, 1.0)


@given(st.integers(0, 1000))
def test_objective_permutation_invariant(seed):
    rng = Rng(seed)
    n = 5
    w = np.triu(rng.uniform(0.1, 1, size=(n, n)), 1)
    a = w + w.T
    d = pairwise_sq_euclidean(rng.normal(size=(n, 2)))
    perm = rng.permutation(n)
    assert graph_objective(a[np.ix_(perm, perm)], d.permuted(perm), 1.3, 0.7) == pytest.approx(
        graph_objective(a, d, 1.3, 0.7), rel=1e-12
    )


def test_objective_matches_dense_oracle():
    rng = Rng(3)
    w = np.triu(rng.uniform(size=(4, 4)), 1)
    a = w + w.T
    d = pairwise_sq_euclidean(rng.normal(size=(4, 2)))
    assert graph_objective(Graph(a), d, 2.0, 0.5) == pytest.approx(dense_objective(a, d.values, 2.0, 0.5), rel=1e-12)


# -- solver: closed forms and oracle -------------------------------------------------
def closed_form(d, alpha=1.0, beta=1.0):
    return (-d + math.sqrt(d * d + 8 * alpha * beta)) / (4 * beta)


@pytest.mark.parametrize("d, expected", [(1.0, 0.5), (0.0, math.sqrt(2) / 2)])
def test_two_node_closed_form(d, expected):
    assert closed_form(d) == pytest.approx(expected)
    res = learn_graph(two_node(d), GraphLearnConfig(k=1, r=1, **RAW))
    assert res.graph.dense()[0, 1] == pytest.approx(expected, abs=1e-4)
    assert res.converged


@pytest.mark.parametrize("seed", range(60))
def test_solver_matches_projected_gradient_oracle(seed):
    rng = Rng(seed)
    n = int(rng.integers(2, 7))
    d = pairwise_sq_euclidean(rng.normal(size=(n, 2)) * rng.uniform(0.3, 3))
    alpha, beta = float(rng.uniform(0.5, 2)), float(rng.uniform(0.2, 2))
    res = learn_graph(d, GraphLearnConfig(k=1, r=n - 1, alpha=alpha, beta=beta, **RAW))
    _, f_oracle = projected_gradient_graph(d.values, alpha, beta)
    f_solver = graph_objective(res.graph, d, alpha, beta)
    assert abs(f_solver - f_oracle) / abs(f_oracle) < 1e-3


@pytest.mark.parametrize("seed", range(10))
def test_solver_matches_oracle_on_restricted_support(seed):
    rng = Rng(100 + seed)
    d = pairwise_sq_euclidean(rng.normal(size=(6, 2)))
    res = learn_graph(d, GraphLearnConfig(k=1, r=2, **RAW))
    _, f_oracle = projected_gradient_graph(d.values, 1.0, 1.0, pairs=res.edges.pairs())
    assert abs(graph_objective(res.graph, d, 1.0, 1.0) - f_oracle) / abs(f_oracle) < 1e-3


# -- solver properties ------------------------------------------------------------------
@given(st.integers(8, 40), st.integers(1, 4), st.integers(0, 10_000))
def test_solver_output_invariants(n, k, seed):
    r = 2
    if k * r >= n:
        return
    d = pairwise_sq_euclidean(Rng(seed).normal(size=(n, 3)))
    res = learn_graph(d, GraphLearnConfig(k=k, r=r))
    a = res.graph.dense()
    assert np.array_equal(a, a.T) and np.all(a >= 0) and not np.diag(a).any()
    assert res.graph.degrees().min() >= 1
    # no weight outside the permissible support
    allowed = np.zeros_like(a, dtype=bool)
    allowed[res.edges.i, res.edges.j] = allowed[res.edges.j, res.edges.i] = True
    assert not np.any(a[~allowed])


@pytest.mark.parametrize("seed", range(10))
def test_trace_is_monotone(seed):
    d = pairwise_sq_euclidean(Rng(seed).normal(size=(30, 2)))
    res = learn_graph(d, GraphLearnConfig(k=3, r=2))
    best = [b for _, b, _ in res.trace]
    assert all(b2 <= b1 + 1e-9 for b1, b2 in zip(best, best[1:]))


@pytest.mark.parametrize("seed", range(10))
def test_solver_permutation_equivariance(seed):
    rng = Rng(seed)
    d = pairwise_sq_euclidean(rng.normal(size=(25, 3)))
    perm = rng.permutation(25)
    cfg = GraphLearnConfig(k=3, r=2)
    a = solve_graph_map(d, cfg).dense()
    b = solve_graph_map(d.permuted(perm), cfg).dense()
    assert np.max(np.abs(a[np.ix_(perm, perm)] - b)) < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_larger_beta_never_grows_frobenius_norm(seed):
    d = pairwise_sq_euclidean(Rng(seed).normal(size=(6, 2)))
    norms = []
    for beta in (0.1, 0.3, 1.0, 3.0, 10.0):
        a = learn_graph(d, GraphLearnConfig(k=1, r=5, beta=beta, **RAW)).graph.dense()
        norms.append(np.linalg.norm(a))
    assert all(b <= a + 1e-6 for a, b in zip(norms, norms[1:]))


def test_identical_embeddings_share_the_heaviest_edge():
    rng = Rng(4)
    z = rng.normal(size=(12, 3))
    z[7] = z[2]
    a = solve_graph_map(pairwise_sq_euclidean(z), GraphLearnConfig(k=3, r=2)).dense()
    assert np.argmax(a[2]) == 7 and np.argmax(a[7]) == 2


def test_nonconvergence_reports_best_iterate(caplog):
    d = pairwise_sq_euclidean(Rng(0).normal(size=(30, 2)))
    res = learn_graph(d, GraphLearnConfig(k=3, r=2, max_iters=3))
    assert not res.converged and res.iterations == 3
    assert "without meeting" in caplog.text
    assert res.graph.degrees().min() >= 1


def test_solver_trace_csv(tmp_path):
    res = learn_graph(two_node(1.0), GraphLearnConfig(k=1, r=1))
    res.write_trace(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,objective,current" and len(lines) == len(res.trace) + 1


def test_config_validation():
    for bad in (dict(k=0), dict(r=0), dict(alpha=0), dict(beta=-1), dict(step=1.0), dict(representation="logits")):
        with pytest.raises(ValueError):
            GraphLearnConfig(**bad)


# -- calibration -----------------------------------------------------------------------
@pytest.mark.parametrize("seed", range(5))
def test_calibration_degree_window(seed):
    pts = Rng(seed).uniform(size=(100, 2))
    g = solve_graph_map(pairwise_sq_euclidean(pts), GraphLearnConfig(k=5, r=3))
    assert 2.5 <= g.mean_degree() <= 10
    assert g.degrees().min() >= 1


def test_calibration_full_k_gives_near_complete_support():
    d = pairwise_sq_euclidean(Rng(0).uniform(size=(5, 2)))
    g = solve_graph_map(d, GraphLearnConfig(k=4, r=1))
    assert g.num_edges() >= 8


@pytest.mark.parametrize("c", [1e-3, 0.5, 7.0, 1e4])
def test_calibration_is_scale_invariant(c):
    d = pairwise_sq_euclidean(Rng(1).normal(size=(40, 3)))
    cfg = GraphLearnConfig(k=4, r=2)
    a = solve_graph_map(d, cfg).dense()
    b = solve_graph_map(d.scaled(c), cfg).dense()
    np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-10)


def test_calibration_degenerate_zero_distances():
    d = DistanceMatrix(np.zeros((4, 4)))
    scaled, factor = calibrate_scale(d, 2)
    assert factor == 1.0 and np.array_equal(scaled.values, d.values)
    g = solve_graph_map(d, GraphLearnConfig(k=1, r=3))
    w = [x for *_, x in g.edges()]
    assert len(w) == 6 and np.ptp(w) < 1e-6


def test_calibration_k_range():
    with pytest.raises(ValueError):
        calibrate_scale(pairwise_sq_euclidean(np.eye(3)), 3)


def test_complete_edge_set():
    es = EdgeSet.complete(4)
    assert es.pairs() == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def test_isolated_support_rejected():
    # node 2 has no permissible edge
    es = EdgeSet(3, np.array([0]), np.array([1]))
    with pytest.raises(GraphError):
        learn_graph(pairwise_sq_euclidean(np.eye(3)), GraphLearnConfig(k=1, r=1), edges=es)
