import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ckn.oracles import naive_rank
from ckn.retrieval import (ManifestEntry, average_precision, rank, read_manifest, recall4,
                           retrieval_map, write_manifest)


def test_ap_hand_example():
    # relevant at ranks 1 and 3: (1/1 + 2/3) / 2
    assert average_precision([1, 0, 1, 0]) == pytest.approx(5 / 6)


@given(st.lists(st.booleans(), min_size=1, max_size=12).filter(any))
def test_ap_matches_definition(flags):
    hits = [r for r, f in enumerate(flags, 1) if f]
    expect = sum((k + 1) / r for k, r in enumerate(hits)) / len(hits)
    assert average_precision(flags) == pytest.approx(expect)


def test_ap_without_relevant_items():
    with pytest.raises(ValueError):
        average_precision([0, 0])


@given(st.integers(0, 10_000))
def test_rank_matches_naive_sort(seed):
    rng = np.random.default_rng(seed)
    D = rng.integers(0, 3, size=(8, 2)).astype(float)  # many ties
    q = rng.integers(0, 3, size=2).astype(float)
    ids = [f"id{i}" for i in rng.permutation(8)]
    assert rank(q, D, ids) == naive_rank(q, D, ids)


def test_recall4_perfect_and_errors(rng):
    X = np.repeat(rng.standard_normal((3, 5)) * 100, 4, axis=0) + rng.standard_normal((12, 5))
    groups = [i // 4 for i in range(12)]
    assert recall4(X, groups) == 4.0
    with pytest.raises(ValueError, match="exactly 4"):
        recall4(X[:11], groups[:11])


def entries(labels, roles=None):
    roles = roles or ["both"] * len(labels)
    return [ManifestEntry(f"p{i}", l, r) for i, (l, r) in enumerate(zip(labels, roles))]


def test_map_excludes_the_query_itself():
    X = np.array([[0.0], [0.1], [5.0], [5.1]])
    rep = retrieval_map(X, entries(["a", "a", "b", "b"]))
    assert rep.mean_ap == 1.0 and len(rep.per_query) == 4


def test_map_skips_queries_without_relevant():
    X = np.array([[0.0], [1.0], [2.0]])
    rep = retrieval_map(X, entries(["a", "a", "c"]))
    assert rep.skipped == ["p2"]
    assert [r["id"] for r in rep.per_query] == ["p0", "p1"]


def test_map_protocol_roles():
    X = np.array([[0.0], [3.0], [0.2], [2.9]])
    ents = entries(["a", "b", "a", "b"], ["query", "query", "target", "target"])
    rep = retrieval_map(X, ents, threads=2)
    assert rep.mean_ap == 1.0 and len(rep.per_query) == 2


def test_map_rejects_duplicates_and_misalignment():
    ents = [ManifestEntry("x", "a", "both"), ManifestEntry("x", "a", "both")]
    with pytest.raises(ValueError, match="duplicate"):
        retrieval_map(np.zeros((2, 1)), ents)
    with pytest.raises(ValueError, match="manifest"):
        retrieval_map(np.zeros((3, 1)), ents)


def test_manifest_round_trip(tmp_path):
    ents = entries(["a", "b"], ["query", "target"])
    write_manifest(tmp_path / "m.tsv", ents)
    assert read_manifest(tmp_path / "m.tsv") == ents
    (tmp_path / "bad.tsv").write_text("p\ta\tmaybe\n")
    with pytest.raises(ValueError, match="role"):
        read_manifest(tmp_path / "bad.tsv")


def test_jsonl_report_layout():
    rep = retrieval_map(np.array([[0.0], [0.1]]), entries(["a", "a"]), protocol="demo")
    lines = rep.to_jsonl().splitlines()
    assert lines[0] == '{"protocol": "demo"}' and '"map": 1.0' in lines[-1]
