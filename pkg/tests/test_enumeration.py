"""Enumeration: union, product, distinctness, delay accounting."""

from __future__ import annotations

import random

import pytest

from skewivm.engine import preprocess
from skewivm.enumeration import TreeIter, annotate, union_next
from skewivm.errors import IteratorInvalidatedError
from skewivm.metrics import Counters
from skewivm.oracle import brute_force_eval
from skewivm.query import parse_query
from skewivm.storage import Relation
from skewivm.viewtree import ViewNode

from conftest import EPS_GRID, SUITE, parse, rand_db, random_hierarchical_query

DELAY_CONSTANT = 96  # frozen after measuring max ops/(1 + grounded buckets)


def _covering_member(name: str, entries: dict, schema=("X",)):
    node = ViewNode(name, schema, "join-view")
    node.content = Relation(name, schema, Counters())
    for row, m in entries.items():
        node.content.delta(row, m)
    annotate(node, frozenset(schema))
    it = TreeIter(node)
    it.open({})
    return it


# ---------------------------------------------------------------------------
# union
# ---------------------------------------------------------------------------


def test_union_overlapping_members_sum_multiplicities():
    t1 = _covering_member("T1", {("x",): 2})
    t2 = _covering_member("T2", {("x",): 3})
    assert union_next([t1, t2]) == (("x",), 5)
    assert union_next([t1, t2]) is None


def test_union_disjoint_members():
    t1 = _covering_member("T1", {("x",): 1})
    t2 = _covering_member("T2", {("y",): 1})
    out = []
    while True:
        r = union_next([t1, t2])
        if r is None:
            break
        out.append(r)
    assert sorted(out) == [(("x",), 1), (("y",), 1)]


def test_union_single_member_passthrough():
    t1 = _covering_member("T1", {("a",): 4, ("b",): 1})
    got = {union_next([t1]), union_next([t1])}
    assert got == {(("a",), 4), (("b",), 1)}
    assert union_next([t1]) is None


def test_union_order_independent_result():
    entries = [
        {("x",): 2, ("y",): 1},
        {("x",): 3, ("z",): 5},
        {("y",): 7, ("z",): 1, ("w",): 1},
    ]
    want = {("x",): 5, ("y",): 8, ("z",): 6, ("w",): 1}
    for perm in ([0, 1, 2], [2, 0, 1], [1, 2, 0], [2, 1, 0]):
        members = [_covering_member(f"T{i}", entries[i]) for i in perm]
        got = {}
        while True:
            r = union_next(members)
            if r is None:
                break
            t, m = r
            assert t not in got, "duplicate tuple from union"
            got[t] = m
        assert got == want


# ---------------------------------------------------------------------------
# product (through cartesian-product queries)
# ---------------------------------------------------------------------------


def test_product_of_components():
    q = parse_query("Q(A,B) = R(A), S(B).")
    db = {"R": {("a",): 1, ("a2",): 1}, "S": {("b",): 1}}
    st = preprocess(q, db, 0.5, mode="static")
    assert st.result_multiset() == {("a", "b"): 1, ("a2", "b"): 1}


def test_product_multiplicities_multiply():
    q = parse_query("Q(A,B) = R(A), S(B).")
    db = {"R": {("u",): 2}, "S": {("v",): 3}}
    st = preprocess(q, db, 0.5, mode="static")
    assert st.result_multiset() == {("u", "v"): 6}


def test_product_empty_component_gives_empty_result():
    q = parse_query("Q(A,B) = R(A), S(B).")
    st = preprocess(q, {"R": {("a",): 1}, "S": {}}, 0.5, mode="static")
    assert st.result_multiset() == {}


# ---------------------------------------------------------------------------
# full enumeration
# ---------------------------------------------------------------------------


def test_chain2_worked_example():
    q = parse("chain2")
    db = {"R": {("a1", "b1"): 1, ("a1", "b2"): 1, ("a2", "b1"): 1},
          "S": {("b1", "c1"): 1, ("b2", "c1"): 1, ("b2", "c2"): 1}}
    for eps in EPS_GRID:
        st = preprocess(q, db, eps, mode="dynamic")
        assert st.result_multiset() == {
            ("a1", "c1"): 2, ("a1", "c2"): 1, ("a2", "c1"): 1}


def test_enumeration_matches_oracle_everywhere():
    rng = random.Random(73)
    for name in SUITE:
        q = parse(name)
        for eps in EPS_GRID:
            db = rand_db(q, rng, per_rel=rng.randint(10, 50), dom=rng.randint(4, 9))
            for mode in ("static", "dynamic"):
                st = preprocess(q, db, eps, mode=mode)
                assert st.result_multiset() == brute_force_eval(q, db)


def test_distinctness_and_positivity():
    rng = random.Random(79)
    for _ in range(20):
        q = random_hierarchical_query(rng, max_atoms=4, max_vars=6)
        db = rand_db(q, rng, per_rel=15, dom=4)
        st = preprocess(q, db, rng.choice(EPS_GRID), mode="dynamic")
        seen = set()
        for row, m in st.enumerate_result():
            assert m > 0
            assert row not in seen
            seen.add(row)


def test_iterators_are_restartable():
    rng = random.Random(83)
    q = parse("chain2")
    db = rand_db(q, rng, per_rel=40, dom=5)
    st = preprocess(q, db, 0.5, mode="dynamic")
    first = dict(st.enumerate_result())
    second = dict(st.enumerate_result())
    assert first == second


def test_update_invalidates_open_iterator():
    q = parse("chain2")
    st = preprocess(q, {"R": {(1, 2): 1}, "S": {(2, 3): 1}}, 0.5, mode="dynamic")
    it = st.enumerate_result()
    st.on_update("R", (5, 6), 1)
    with pytest.raises(IteratorInvalidatedError):
        it.next()


def test_empty_database_enumeration():
    q = parse("chain2")
    st = preprocess(q, {"R": {}, "S": {}}, 0.5, mode="dynamic")
    assert st.enumerate_result().next() is None


def test_delay_bounded_by_grounded_supports():
    """Ops between consecutive next() calls stay within the frozen constant
    times (1 + total grounded heavy support)."""
    rng = random.Random(89)
    for name in ("chain2", "semi", "deep4"):
        q = parse(name)
        for eps in EPS_GRID:
            db = rand_db(q, rng, per_rel=40, dom=6)
            st = preprocess(q, db, eps, mode="dynamic")
            it = st.enumerate_result()
            bound = DELAY_CONSTANT * (1 + it.grounded_buckets())
            while True:
                before = st.counters.storage_ops
                item = it.next()
                assert st.counters.storage_ops - before <= bound
                if item is None:
                    break


def test_boolean_query_enumeration():
    q = parse_query("Q() = R(A,B), S(B,C).")
    db = {"R": {(1, 2): 1, (3, 2): 2}, "S": {(2, 9): 1}}
    st = preprocess(q, db, 0.5, mode="dynamic")
    assert st.result_multiset() == {(): 3}
    st2 = preprocess(q, {"R": {}, "S": {}}, 0.5, mode="dynamic")
    assert st2.result_multiset() == {}


def test_union_member_order_is_irrelevant_for_results():
    rng = random.Random(113)
    q = parse("chain2")
    db = rand_db(q, rng, per_rel=50, dom=5)
    st = preprocess(q, db, 0.25, mode="dynamic")
    want = st.result_multiset()
    for comp in st.components:
        comp.trees.reverse()
    assert st.result_multiset() == want


def test_open_grounds_one_bucket_per_heavy_key():
    q = parse("chain2")
    db = {"R": {(i, 7): 1 for i in range(8)} | {(0, 8): 1, (1, 9): 1},
          "S": {(7, i): 1 for i in range(8)} | {(8, 0): 1, (9, 0): 1}}
    st = preprocess(q, db, 0.5, mode="dynamic")  # theta ~ 6.4: only key 7 heavy
    (triple,) = st.triples
    assert set(triple.h_content.entries) == {(7,)}
    heavy = next(t for t in st.trees if "xH_B" in t.leaf_paths)
    it = TreeIter(heavy.root)
    it.open({})
    assert len(it.buckets) == 1
    assert it.buckets[0].ctx["B"] == 7


def test_open_with_absent_context_is_exhausted():
    q = parse("fc3")
    db = {"R": {(1, 2, 3): 1}, "S": {(1, 2, 4): 1}, "T": {(1, 5): 1}}
    st = preprocess(q, db, 1.0, mode="static")
    root = st.trees[0].root
    v_b = root.children[0]
    assert v_b.schema == ("A", "D")
    it = TreeIter(v_b)
    it.open({"A": 999})
    assert it.next() is None
    it.close()
    it.open({"A": 1})
    assert it.next() == ((1, 4), 1)


def test_engine_handles_nested_and_product_shapes():
    cases = [
        "Q(D) = R(A,B,C,D), S(A,B,C), T(A,B), U(A).",
        "Q(A,C,X,Z) = R(A,B), S(B,C), T(X,Y), U(Y,Z).",
        "Q() = R(A).",
        "Q(A) = R(A,B), S(A,B).",
    ]
    rng = random.Random(5)
    for text in cases:
        q = parse_query(text)
        for eps in (0.0, 0.5, 1.0):
            for mode in ("static", "dynamic"):
                db = {}
                for sym in q.symbols():
                    ar = len(q.occurrences(sym)[0].schema)
                    db[sym] = {tuple(rng.randrange(5) for _ in range(ar)): rng.randint(1, 3)
                               for _ in range(rng.randint(5, 40))}
                st = preprocess(q, db, eps, mode=mode)
                assert st.result_multiset() == brute_force_eval(q, db), (text, eps, mode)
