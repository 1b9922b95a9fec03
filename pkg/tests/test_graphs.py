"""Graph loading, feature attachment, edge splitting, negative sampling."""

import numpy as np
import pytest

from disenlink.graphs import (EdgeSplit, Graph, GraphFormatError, SplitError,
                              adjacency_features, adjacency_targets,
                              attach_features, compact_node_ids,
                              identity_features, load_edge_list,
                              load_split_manifest, make_graph, save_edge_list,
                              save_split_manifest, split_edges)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_dedup_and_self_loop_drop(tmp_path):
    path = write(tmp_path, "edges.txt", "0 1\n1 0\n1 1\n")
    g = load_edge_list(path)
    assert g.num_nodes == 2
    assert g.edges == ((0, 1),)


def test_load_header_overrides_node_count(tmp_path):
    path = write(tmp_path, "edges.txt", "N=5\n")
    g = load_edge_list(path)
    assert g.num_nodes == 5 and g.num_edges == 0


def test_load_reports_line_number_on_garbage(tmp_path):
    path = write(tmp_path, "edges.txt", "0 1\nnot an edge\n")
    with pytest.raises(GraphFormatError, match=":2"):
        load_edge_list(path)


def test_load_rejects_header_below_max_id(tmp_path):
    path = write(tmp_path, "edges.txt", "N=2\n0 5\n")
    with pytest.raises(GraphFormatError):
        load_edge_list(path)


def test_save_load_roundtrip_idempotent(tmp_path):
    g = make_graph(6, [(0, 3), (2, 1), (4, 5), (3, 0)])
    p1 = tmp_path / "a.txt"
    p2 = tmp_path / "b.txt"
    save_edge_list(g, p1)
    g2 = load_edge_list(p1)
    save_edge_list(g2, p2)
    assert p1.read_text() == p2.read_text()
    assert g2.edges == g.edges and g2.num_nodes == g.num_nodes


def test_compact_node_ids():
    g = make_graph(100, [(2, 50), (50, 99)])
    compacted, mapping = compact_node_ids(g)
    assert compacted.num_nodes == 3
    assert mapping == {2: 0, 50: 1, 99: 2}
    assert compacted.edges == ((0, 1), (1, 2))


def test_attach_features(tmp_path):
    g = make_graph(3, [(0, 1)])
    path = write(tmp_path, "f.csv", "1.0,2.0\n3.0,4.0\n5.0,6.0\n")
    g2 = attach_features(g, path)
    assert g2.feature_dim == 2
    np.testing.assert_array_equal(g2.features, [[1, 2], [3, 4], [5, 6]])


def test_attach_features_row_count_mismatch(tmp_path):
    g = make_graph(3, [(0, 1)])
    path = write(tmp_path, "f.csv", "1.0,2.0\n3.0,4.0\n")
    with pytest.raises(GraphFormatError, match="rows"):
        attach_features(g, path)


def test_attach_features_non_numeric(tmp_path):
    g = make_graph(2, [(0, 1)])
    path = write(tmp_path, "f.csv", "1.0,x\n2.0,3.0\n")
    with pytest.raises(GraphFormatError, match="non-numeric"):
        attach_features(g, path)


def test_identity_features():
    g = identity_features(make_graph(3, [(0, 1)]))
    np.testing.assert_array_equal(g.features, np.eye(3))
    g1 = identity_features(make_graph(1, []))
    np.testing.assert_array_equal(g1.features, [[1.0]])


def test_adjacency_features():
    g = adjacency_features(make_graph(3, [(0, 1), (1, 2)]))
    np.testing.assert_array_equal(g.features,
                                  [[0, 1, 0], [1, 0, 1], [0, 1, 0]])


def test_graph_invariants_enforced():
    with pytest.raises(GraphFormatError):
        Graph(3, ((1, 1),))
    with pytest.raises(GraphFormatError):
        Graph(2, ((0, 5),))
    with pytest.raises(GraphFormatError):
        Graph(3, ((2, 1),))  # not canonical order


# ---------------------------------------------------------------------------
# splits

def random_graph(n, p, seed):
    rng = np.random.default_rng(seed)
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    return make_graph(n, pairs)


def test_split_partitions_all_edges():
    g = random_graph(40, 0.2, seed=0)
    split = split_edges(g, 0.05, 0.10, seed=1)
    assert len(split.train_pos) + len(split.val_pos) + len(split.test_pos) == g.num_edges
    assert len(split.val_pos) == int(np.floor(0.05 * g.num_edges))
    assert len(split.test_pos) == int(np.floor(0.10 * g.num_edges))
    split.validate(g)


def test_split_negatives_not_in_graph():
    g = random_graph(30, 0.3, seed=2)
    split = split_edges(g, 0.1, 0.2, seed=3)
    full = set(g.edges)
    for e in split.val_neg + split.test_neg:
        assert e not in full
        assert e[0] < e[1]
    all_neg = split.val_neg + split.test_neg
    assert len(set(all_neg)) == len(all_neg)


def test_split_zero_fractions():
    g = random_graph(20, 0.2, seed=4)
    split = split_edges(g, 0.0, 0.0, seed=5)
    assert split.val_pos == () and split.test_pos == ()
    assert set(split.train_pos) == set(g.edges)


def test_split_deterministic():
    g = random_graph(25, 0.25, seed=6)
    s1 = split_edges(g, 0.1, 0.1, seed=7)
    s2 = split_edges(g, 0.1, 0.1, seed=7)
    assert s1 == s2


def test_split_rejects_bad_fractions():
    g = random_graph(10, 0.5, seed=8)
    with pytest.raises(SplitError):
        split_edges(g, 0.6, 0.5, seed=0)


def test_split_rejects_when_negatives_exhausted():
    # complete graph on 5 nodes: zero non-edges
    g = make_graph(5, [(u, v) for u in range(5) for v in range(u + 1, 5)])
    with pytest.raises(SplitError, match="non-edges"):
        split_edges(g, 0.2, 0.2, seed=0)


def test_split_dense_graph_enumeration_path():
    # nearly complete: force the enumeration branch and still succeed
    pairs = [(u, v) for u in range(12) for v in range(u + 1, 12)]
    removed = set(pairs[::7])
    g = make_graph(12, [e for e in pairs if e not in removed])
    split = split_edges(g, 0.05, 0.05, seed=1)
    split.validate(g)


def test_message_graph_keeps_features():
    g = identity_features(random_graph(15, 0.3, seed=9))
    split = split_edges(g, 0.1, 0.1, seed=10)
    assert split.message_graph.features is not None
    assert split.message_graph.feature_dim == 15


def test_split_manifest_roundtrip(tmp_path):
    g = random_graph(20, 0.3, seed=11)
    split = split_edges(g, 0.1, 0.15, seed=12)
    path = tmp_path / "split.json"
    save_split_manifest(split, path)
    loaded = load_split_manifest(path, g)
    assert loaded.train_pos == split.train_pos
    assert loaded.val_neg == split.val_neg
    assert loaded.seed == split.seed
    # byte-identical when saved again
    path2 = tmp_path / "again.json"
    save_split_manifest(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_split_validation_catches_overlap():
    g = random_graph(20, 0.3, seed=13)
    split = split_edges(g, 0.1, 0.1, seed=14)
    bad = EdgeSplit(train_pos=split.train_pos, val_pos=split.train_pos[:1],
                    test_pos=split.test_pos, val_neg=split.val_neg[:1],
                    test_neg=split.test_neg, message_graph=split.message_graph)
    with pytest.raises(SplitError):
        bad.validate()


# ---------------------------------------------------------------------------
# reconstruction targets

def test_targets_single_edge():
    target, num_pos, num_total = adjacency_targets(make_graph(2, [(0, 1)]))
    np.testing.assert_array_equal(target, [[1, 1], [1, 1]])
    assert num_pos == 4 and num_total == 4


def test_targets_isolated_nodes():
    target, num_pos, num_total = adjacency_targets(make_graph(2, []))
    np.testing.assert_array_equal(target, np.eye(2))
    assert num_pos == 2 and num_total == 4


def test_targets_triangle():
    target, num_pos, num_total = adjacency_targets(
        make_graph(3, [(0, 1), (0, 2), (1, 2)]))
    np.testing.assert_array_equal(target, np.ones((3, 3)))
    assert num_pos == 9 and num_total == 9
