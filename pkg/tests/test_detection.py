import itertools
import random

import pytest

from powtrail import detection
from powtrail.detection import (
    ClassificationCounts, DetectionError, DetectionParams, SimilarityGraph,
    TrajectoryView, build_similarity_graph, compute_metrics, dimacs_graph,
    eliminate_cliques, exclusion_test, max_clique, similarity, verdict_report,
)

from conftest import FIXTURE_EDGES

W = DetectionParams(check_window=30.0, length_limit=10)


def _view(traj_id, pairs):
    return TrajectoryView(traj_id, tuple(float(t) for t, _ in pairs),
                          tuple(g.encode() if isinstance(g, str) else g
                                for _, g in pairs))


def test_identical_trajectories_are_suspicious():
    a = _view("a", [(0, "A"), (60, "B"), (120, "C")])
    positive, count = exclusion_test(a, a, W)
    assert not positive
    assert count == 3
    assert similarity(a, a, W) == 1.0


def test_distinct_tags_in_one_window_pass_the_test():
    a = _view("a", [(0, "A"), (60, "B")])
    b = _view("b", [(10, "C"), (70, "D")])
    positive, _ = exclusion_test(a, b, W)
    assert positive
    assert similarity(a, b, W) == -1.0


def test_union_over_length_limit_passes_the_test():
    params = DetectionParams(check_window=5.0, length_limit=3)
    a = _view("a", [(0, "A"), (100, "B")])
    b = _view("b", [(1000, "C"), (1100, "D")])   # no temporal overlap
    positive, _ = exclusion_test(a, b, params)
    assert positive
    loose = DetectionParams(check_window=5.0, length_limit=4)
    positive, count = exclusion_test(a, b, loose)
    assert not positive and count == 0


def test_length_limit_monotonicity():
    rng = random.Random(2)
    tags = [bytes([k]) for k in range(8)]
    for _ in range(100):
        a = _view("a", [(rng.uniform(0, 500), rng.choice(tags)) for _ in range(4)])
        b = _view("b", [(rng.uniform(0, 500), rng.choice(tags)) for _ in range(4)])
        a = TrajectoryView("a", tuple(sorted(a.times)), a.tags)
        b = TrajectoryView("b", tuple(sorted(b.times)), b.tags)
        for limit in range(1, 8):
            low = exclusion_test(a, b, DetectionParams(20.0, limit))[0]
            high = exclusion_test(a, b, DetectionParams(20.0, limit + 1))[0]
            # raising the limit can only remove case-(b) positives
            if not low:
                assert not high


def test_similarity_formula_and_symmetry():
    a = _view("a", [(0, "A"), (100, "B"), (200, "C")])
    b = _view("b", [(5, "A"), (105, "B"), (1000, "Z")])
    params = DetectionParams(check_window=30.0, length_limit=10)
    assert similarity(a, b, params) == pytest.approx(2 / 3)
    rng = random.Random(3)
    tags = [bytes([k]) for k in range(6)]
    for _ in range(100):
        x = _view("x", sorted((rng.uniform(0, 300), rng.choice(tags))
                              for _ in range(rng.randrange(1, 5))))
        y = _view("y", sorted((rng.uniform(0, 300), rng.choice(tags))
                              for _ in range(rng.randrange(1, 5))))
        assert similarity(x, y, W) == similarity(y, x, W)


def test_similarity_rejects_empty():
    a = _view("a", [(0, "A")])
    empty = TrajectoryView("e", (), ())
    with pytest.raises(DetectionError):
        similarity(a, empty, W)


def test_intersection_counts_each_entry_once():
    # one entry of a can only match one of b's repeated visits
    a = _view("a", [(100, "A")])
    b = _view("b", [(95, "A"), (105, "A")])
    positive, count = exclusion_test(a, b, W)
    assert not positive and count == 1


def test_fixture_edges_and_graph(fig_fixture):
    views, params = fig_fixture
    by_id = {v.traj_id: v for v in views}
    for a, b in itertools.combinations(sorted(by_id), 2):
        positive, _ = exclusion_test(by_id[a], by_id[b], params)
        assert positive == ((a, b) not in FIXTURE_EDGES)
    graph = build_similarity_graph(views, params)
    got = {tuple(sorted((graph.ids[i], graph.ids[j]))) for i, j in graph.edges}
    assert got == FIXTURE_EDGES


def test_fixture_max_clique_is_the_triangle(fig_fixture):
    views, params = fig_fixture
    graph = build_similarity_graph(views, params)
    assert max_clique(graph) == {"T2", "T3", "T6"}


def test_fixture_elimination_order(fig_fixture):
    views, params = fig_fixture
    graph = build_similarity_graph(views, params)
    verdict = eliminate_cliques(graph)
    assert verdict.groups[0] == ["T2", "T3", "T6"]
    assert set(map(tuple, verdict.groups)) == {
        ("T2", "T3", "T6"), ("T1", "T4"), ("T5",), ("T7",)}


def test_fast_graph_matches_reference():
    rng = random.Random(11)
    tags = [bytes([k]) for k in range(12)]
    for trial in range(30):
        views = []
        for v in range(rng.randrange(2, 14)):
            entries = sorted((rng.uniform(0, 400), rng.choice(tags))
                             for _ in range(rng.randrange(1, 6)))
            times = []
            for t, _ in entries:   # force strictly increasing times
                times.append(t if not times or t > times[-1] else times[-1] + 0.5)
            views.append(TrajectoryView(f"v{v:02d}", tuple(times),
                                        tuple(g for _, g in entries)))
        params = DetectionParams(check_window=rng.uniform(5, 60),
                                 length_limit=rng.randrange(2, 10))
        fast = build_similarity_graph(views, params, method="fast")
        ref = build_similarity_graph(views, params, method="reference")
        assert fast.edges == ref.edges


def _brute_force_max_clique(ids, edges):
    adjacency = {v: set() for v in ids}
    for a, b in edges:
        adjacency[a].add(b)
        adjacency[b].add(a)
    best = []
    for r in range(len(ids), 0, -1):
        cliques = [sorted(c) for c in itertools.combinations(sorted(ids), r)
                   if all(b in adjacency[a] for a, b in itertools.combinations(c, 2))]
        if cliques:
            best = min(cliques)
            break
    return set(best)


def test_max_clique_matches_brute_force_on_random_graphs():
    rng = random.Random(13)
    for trial in range(200):
        n = rng.randrange(1, 13)
        ids = [f"v{k:02d}" for k in range(n)]
        density = rng.uniform(0.1, 0.9)
        edges = [(a, b) for a, b in itertools.combinations(ids, 2)
                 if rng.random() < density]
        graph = SimilarityGraph.from_edge_list(ids, edges)
        assert max_clique(graph) == _brute_force_max_clique(ids, edges)


def test_max_clique_empty_graph():
    graph = SimilarityGraph.from_edge_list([], [])
    assert max_clique(graph) == set()


def test_eliminate_edgeless_graph_all_actual():
    ids = [f"v{k}" for k in range(5)]
    verdict = eliminate_cliques(SimilarityGraph.from_edge_list(ids, []))
    assert verdict.groups == [[v] for v in sorted(ids)]
    assert all(label == "actual" for label in verdict.labels.values())


def test_eliminate_k5_one_group():
    ids = [f"v{k}" for k in range(5)]
    edges = list(itertools.combinations(ids, 2))
    verdict = eliminate_cliques(SimilarityGraph.from_edge_list(ids, edges))
    assert verdict.groups == [sorted(ids)]
    assert sum(1 for lab in verdict.labels.values() if lab == "sybil") == 4


def test_eliminate_groups_partition_and_are_cliques():
    rng = random.Random(17)
    for _ in range(50):
        n = rng.randrange(1, 14)
        ids = [f"v{k:02d}" for k in range(n)]
        edges = [(a, b) for a, b in itertools.combinations(ids, 2)
                 if rng.random() < 0.4]
        graph = SimilarityGraph.from_edge_list(ids, edges)
        verdict = eliminate_cliques(graph)
        flat = [v for g in verdict.groups for v in g]
        assert sorted(flat) == sorted(ids)          # partition
        adjacency = {v: set() for v in ids}
        for a, b in edges:
            adjacency[a].add(b)
            adjacency[b].add(a)
        for group in verdict.groups:                # every group is a clique
            for a, b in itertools.combinations(group, 2):
                assert b in adjacency[a]


def test_eliminate_deterministic():
    rng = random.Random(19)
    ids = [f"v{k:02d}" for k in range(10)]
    edges = [(a, b) for a, b in itertools.combinations(ids, 2)
             if rng.random() < 0.5]
    graph1 = SimilarityGraph.from_edge_list(ids, edges)
    graph2 = SimilarityGraph.from_edge_list(ids, edges)
    v1, v2 = eliminate_cliques(graph1), eliminate_cliques(graph2)
    assert v1.groups == v2.groups and v1.labels == v2.labels


def test_representative_prefers_longest_then_earliest_then_id():
    ids = ["a", "b", "c"]
    graph = SimilarityGraph.from_edge_list(ids, [("a", "b"), ("b", "c"),
                                                 ("a", "c")])
    graph.lengths = [3, 5, 5]
    graph.first_times = [0.0, 9.0, 4.0]
    verdict = eliminate_cliques(graph)
    assert verdict.labels == {"c": "actual", "a": "sybil", "b": "sybil"}


def test_metrics_formulas():
    counts = ClassificationCounts(fp=1, tn=9, tp=0, fn=0)
    assert counts.fpr == pytest.approx(0.1)
    counts = ClassificationCounts(fp=0, tn=0, tp=8, fn=2)
    assert counts.dr == pytest.approx(0.8)
    assert counts.fnr == pytest.approx(0.2)
    assert counts.dr == 1.0 - counts.fnr   # exact, not approximate
    perfect = ClassificationCounts(fp=0, tn=5, tp=5, fn=0)
    assert (perfect.fpr, perfect.fnr, perfect.dr) == (0.0, 0.0, 1.0)


def test_compute_metrics_and_id_mismatch():
    verdict = detection.DetectionVerdict(
        groups=[["a", "b"], ["c"]],
        labels={"a": "actual", "b": "sybil", "c": "actual"})
    truth = {"a": "actual", "b": "sybil", "c": "sybil"}
    counts = compute_metrics(verdict, truth)
    assert (counts.fp, counts.tn, counts.tp, counts.fn) == (0, 1, 1, 1)
    with pytest.raises(DetectionError):
        compute_metrics(verdict, {"a": "actual"})


def test_dimacs_and_report(fig_fixture):
    views, params = fig_fixture
    graph = build_similarity_graph(views, params)
    text = dimacs_graph(graph)
    lines = text.splitlines()
    assert f"p edge {len(views)} {len(FIXTURE_EDGES)}" in lines
    assert sum(1 for ln in lines if ln.startswith("e ")) == len(FIXTURE_EDGES)
    verdict = eliminate_cliques(graph)
    report = verdict_report(verdict, graph, include_similarities=True)
    assert report["groups"][0] == ["T2", "T3", "T6"]
    assert "similarities" in report and len(report["similarities"]) == len(FIXTURE_EDGES)
    assert report["wall_time_ms"] >= 0.0