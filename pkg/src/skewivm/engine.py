"""Engine state: preprocessing, single-tuple updates, and rebalancing.

The maintained object is a tuple (epsilon, threshold base M, result view
trees, indicator triples).  Preprocessing at database size N fixes
M = 2N + 1 and partitions with threshold M^epsilon; updates keep the size
invariant floor(M/4) <= N < M by doubling or halving M with a full *major*
rebalancing, and keep the relaxed partition conditions per key by migrating
single keys between light and heavy with *minor* rebalancing.

A single engine state is strictly single-threaded: updates take exclusive
access, and any open iterator is invalidated by a generation counter.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import enumeration
from .errors import (
    EngineError,
    MissingRelationError,
    NotHierarchicalError,
    RejectedDeleteError,
)
from .metrics import Counters
from .query import Atom, ConjunctiveQuery, connected_components, hierarchy_violation, parse_query
from .storage import Relation, iceil, strict_partition
from .vorder import VariableOrder, canonical_vo
from .viewtree import (
    ATOM,
    HEAVY_REF,
    LIGHT,
    IndicatorTriple,
    JoinPlan,
    LightPart,
    ViewNode,
    delta_plan,
    forest_dot,
    make_context,
    materialize_node,
    materialize_plan,
    run_join,
    tau,
    tree_to_dict,
)

Row = tuple
Multiset = dict[Row, int]


class ViewTree:
    """A rooted view tree plus the leaf-to-root paths used by deltas."""

    def __init__(self, root: ViewNode, tag: str):
        self.root = root
        self.tag = tag
        for node in root.walk():
            node.name = f"{node.name}@{tag}"
        self.nodes = root.walk()
        # leaf name -> [(leaf, -1), (parent, child index), ..., (root, i)]
        self.leaf_paths: dict[str, list[tuple[ViewNode, int]]] = {}
        self._collect_paths(root, [])

    def _collect_paths(self, node: ViewNode, above: list[tuple[ViewNode, int]]) -> None:
        if node.is_leaf:
            assert node.leaf_name not in self.leaf_paths, \
                f"duplicate leaf {node.leaf_name} in tree {self.tag}"
            path = [(node, -1)]
            path.extend(reversed(above))
            self.leaf_paths[node.leaf_name] = path
            return
        for i, c in enumerate(node.children):
            self._collect_paths(c, above + [(node, i)])


@dataclass
class Component:
    """Trees and enumeration schema of one connected component."""

    head_vars: tuple[str, ...]
    trees: list[ViewTree]
    triples: list[IndicatorTriple]

    @property
    def roots(self) -> list[ViewNode]:
        return [t.root for t in self.trees]


class EngineState:
    """One maintained database + query; see :func:`preprocess`."""

    def __init__(self, query: ConjunctiveQuery, epsilon: float, mode: str,
                 counters: Counters | None = None):
        if not 0.0 <= epsilon <= 1.0:
            raise EngineError(f"epsilon {epsilon} outside [0, 1]")
        if mode not in ("static", "dynamic"):
            raise EngineError(f"unknown mode {mode!r}")
        pair = hierarchy_violation(query)
        if pair is not None:
            raise NotHierarchicalError(pair)
        self.query = query
        self.epsilon = epsilon
        self.mode = mode
        self.counters = counters or Counters()
        self.generation = 0
        self.M = 0
        self.N = 0
        self.vo: VariableOrder | None = None
        self.components: list[Component] = []
        self.trees: list[ViewTree] = []
        self.triples: list[IndicatorTriple] = []
        self.base: dict[str, Relation] = {}
        self._delta_plans: dict[int, dict[int, JoinPlan]] = {}
        self._mat_plans: dict[int, JoinPlan] = {}
        self._triples_by_leaf: dict[str, list[tuple[IndicatorTriple, LightPart]]] = {}
        self._support_by_name: dict[str, IndicatorTriple] = {}

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    def _build(self, db: dict[str, Multiset], m_override: int | None) -> None:
        q = self.query
        for sym in q.symbols():
            if sym not in db:
                raise MissingRelationError(sym)
        self.vo = canonical_vo(q)
        comps = connected_components(q)

        tree_counter = itertools.count()
        for comp, root in zip(comps, self.vo.roots):
            ctx = make_context(q, self.vo, q.free, self.mode)
            roots = tau(ctx, root)
            trees = [ViewTree(r, f"t{next(tree_counter)}") for r in roots]
            for triple in ctx.triples:
                tag = f"I{triple.var}"
                triple.all_tree = ViewTree(triple.all_root, f"{tag}a")
                triple.light_tree = ViewTree(triple.light_root, f"{tag}l")
            self.components.append(Component(comp.head_vars, trees, ctx.triples))
            self.trees.extend(trees)
            self.triples.extend(ctx.triples)

        self._attach_relations(db)
        self._register_plans()
        for comp in self.components:
            for tree in comp.trees:
                enumeration.annotate(tree.root, self.query.free)

        self.N = sum(len(db[sym]) for sym in q.symbols())
        self.M = m_override if m_override is not None else 2 * self.N + 1
        if not (self.M // 4 <= self.N < self.M):
            raise EngineError(f"threshold base {self.M} violates the size "
                              f"invariant for N={self.N}")
        self._load_all()

    def _attach_relations(self, db: dict[str, Multiset]) -> None:
        counters = self.counters
        for sym in self.query.symbols():
            first = self.query.occurrences(sym)[0]
            rel = Relation(sym, first.schema, counters, base=True)
            for row, m in db[sym].items():
                if m <= 0:
                    raise EngineError(f"{sym}: nonpositive input multiplicity for {row}")
                rel.delta(row, m)
            self.base[sym] = rel
        all_trees = list(self.trees)
        for triple in self.triples:
            all_trees.extend([triple.all_tree, triple.light_tree])
            triple.h_content = Relation(f"{triple.h_name}", triple.keys, counters)
            for lp in triple.light_parts:
                lp.content = Relation(f"{lp.name}@canon", lp.atom.schema, counters)
                lp.content.register_index(lp.key_positions)
                self.base[lp.atom.symbol].register_index(lp.key_positions)
                self._triples_by_leaf.setdefault(lp.atom.name, []).append((triple, lp))
            self._support_by_name[triple.support_name] = triple
        for tree in all_trees:
            for node in tree.nodes:
                node.content = Relation(node.name, node.schema, counters)

    def _register_plans(self) -> None:
        trees = list(self.trees)
        for triple in self.triples:
            trees.extend([triple.all_tree, triple.light_tree])
        for tree in trees:
            for node in tree.nodes:
                if node.is_leaf:
                    continue
                plan = materialize_plan(node)
                self._mat_plans[id(node)] = plan
                self._register_scan_indexes(node, plan)
                if self.mode == "dynamic":
                    per_child = {}
                    for i in range(len(node.children)):
                        dplan = delta_plan(node, i)
                        per_child[i] = dplan
                        self._register_scan_indexes(node, dplan)
                    self._delta_plans[id(node)] = per_child

    @staticmethod
    def _register_scan_indexes(node: ViewNode, plan: JoinPlan) -> None:
        for step in plan.steps:
            if step.mode == "scan":
                node.children[step.child_index].content.register_index(step.child_positions)

    # -- loading + materialization ------------------------------------

    def _theta(self) -> float:
        return float(self.M) ** self.epsilon

    def _load_all(self) -> None:
        theta = self._theta()
        for triple in self.triples:
            for lp in triple.light_parts:
                lp.content.load(strict_partition(self.base[lp.atom.symbol],
                                                 lp.key_positions, theta))
        for triple in self.triples:
            self._refresh_tree_leaves(triple.all_tree)
            self._refresh_tree_leaves(triple.light_tree)
            self._materialize_tree(triple.all_tree)
            self._materialize_tree(triple.light_tree)
            self._rebuild_h(triple)
        for tree in self.trees:
            self._refresh_tree_leaves(tree)
            self._materialize_tree(tree)

    def _refresh_tree_leaves(self, tree: ViewTree) -> None:
        for node in tree.nodes:
            if not node.is_leaf:
                continue
            if node.kind == ATOM:
                sym = node.leaf_name.split("#", 1)[0]
                node.content.load(self.base[sym].entries)
            elif node.kind == LIGHT:
                lp = self._lightpart_by_name(node.leaf_name)
                node.content.load(lp.content.entries)
            elif node.kind == HEAVY_REF:
                triple = self._support_by_name[node.leaf_name]
                node.content.load({k: 1 for k in triple.h_content.entries})

    def _lightpart_by_name(self, name: str) -> LightPart:
        for pairs in self._triples_by_leaf.values():
            for _, lp in pairs:
                if lp.name == name:
                    return lp
        raise KeyError(name)

    def _materialize_tree(self, tree: ViewTree) -> None:
        for node in tree.root.postorder():
            if not node.is_leaf:
                materialize_node(node, self._mat_plans[id(node)])

    def _rebuild_h(self, triple: IndicatorTriple) -> None:
        light_support = triple.light_root.content.entries
        triple.h_content.load({k: m for k, m in triple.all_root.content.entries.items()
                               if k not in light_support})

    # ------------------------------------------------------------------
    # updates (dynamic mode)
    # ------------------------------------------------------------------

    def on_update(self, symbol: str, row: Row, mult: int) -> None:
        """Process one single-tuple update end to end: delta propagation,
        indicator maintenance, then major/minor rebalancing as needed."""
        if self.mode != "dynamic":
            raise EngineError("static engine state cannot process updates")
        if mult == 0:
            return
        rel = self.base.get(symbol)
        if rel is None:
            raise MissingRelationError(symbol)
        old = rel.get(row)
        if old + mult < 0:
            raise RejectedDeleteError(
                f"{symbol}: delete of {row} by {mult} exceeds multiplicity {old}")
        ops_before = self.counters.storage_ops
        self.generation += 1

        occurrences = self.query.occurrences(symbol)
        pre = self._light_path_conditions(occurrences, row)
        rel.delta(row, mult)
        if old == 0:
            self.N += 1
        elif old + mult == 0:
            self.N -= 1

        for atom in occurrences:
            self._update_trees(atom, row, mult, pre)

        if self.N == self.M:
            self.M *= 2
            self._major_rebalancing()
        elif self.N < self.M // 4:
            self.M = self.M // 2 - 1
            self._major_rebalancing()
        else:
            self._minor_checks(occurrences, row)
        self.counters.record_update(self.counters.storage_ops - ops_before)

    def _light_path_conditions(self, occurrences: list[Atom], row: Row) -> dict:
        """Pre-update evaluation of the light-path test per governed part:
        the update belongs to the light part when its key is new to the
        relation or already present in the light copy."""
        pre = {}
        rel = self.base[occurrences[0].symbol]
        for atom in occurrences:
            for triple, lp in self._triples_by_leaf.get(atom.name, ()):
                key = tuple(row[p] for p in lp.key_positions)
                fresh = rel.count(lp.key_positions, key) == 0
                in_light = lp.content.count(lp.key_positions, key) > 0
                pre[(atom.key, triple.var)] = fresh or in_light
        return pre

    def _update_trees(self, atom: Atom, row: Row, mult: int, pre: dict) -> None:
        """One occurrence's pass of the update algorithm: apply to all
        trees, maintain each affected indicator triple, forward indicator
        support changes back into the trees."""
        delta = {row: mult}
        for tree in self.trees:
            self._apply(tree, atom.name, delta)
        for triple, lp in self._triples_by_leaf.get(atom.name, ()):
            key = tuple(row[p] for p in lp.key_positions)
            all_root = triple.all_root
            before = all_root.content.get(key)
            self._apply(triple.all_tree, atom.name, delta)
            change = all_root.content.get(key) - before
            d_support = self._h_all_change(triple, key, change)
            for tree in self.trees:
                self._apply(tree, triple.support_name, d_support)
            if pre[(atom.key, triple.var)]:
                for tree in self.trees:
                    self._apply(tree, lp.name, delta)
                lp.content.delta(row, mult)
                d_light = self._update_ind_tree(triple.light_tree, triple.light_root,
                                                atom_leaf_name(lp), delta, key)
                d_support = self._h_light_change(triple, key, d_light)
                for tree in self.trees:
                    self._apply(tree, triple.support_name, d_support)

    def _apply(self, tree: ViewTree, leaf_name: str, delta: Multiset) -> Multiset:
        """Leaf-to-root delta propagation; returns the root delta (empty when
        the tree does not contain the leaf or the delta dies out)."""
        if not delta:
            return {}
        path = tree.leaf_paths.get(leaf_name)
        if path is None:
            return {}
        leaf = path[0][0]
        for row, m in delta.items():
            leaf.content.delta(row, m)
        current = delta
        for node, child_idx in path[1:]:
            plan = self._delta_plans[id(node)][child_idx]
            current = run_join(plan, node.children, current.items())
            if not current:
                return {}
            for row, m in current.items():
                node.content.delta(row, m)
        return current

    def _update_ind_tree(self, tree: ViewTree, root: ViewNode, leaf_name: str,
                         delta: Multiset, key: Row) -> int:
        """Apply a delta to an indicator tree; +1/-1 when the root's support
        of ``key`` appears/disappears, else 0."""
        before = root.content.get(key)
        self._apply(tree, leaf_name, delta)
        after = root.content.get(key)
        if before == 0 and after > 0:
            return 1
        if before > 0 and after == 0:
            return -1
        return 0

    # H = All restricted to keys outside the light support (set semantics
    # via its support); the two maintenance entry points mirror the two
    # children of the heavy indicator's defining join.

    def _h_all_change(self, triple: IndicatorTriple, key: Row, change: int) -> Multiset:
        if change == 0:
            return {}
        if triple.light_root.content.get(key) != 0:
            return {}
        h = triple.h_content
        before = h.get(key)
        h.delta(key, change)
        return self._support_delta(key, before, h.get(key))

    def _h_light_change(self, triple: IndicatorTriple, key: Row, d_light: int) -> Multiset:
        if d_light == 0:
            return {}
        h = triple.h_content
        before = h.get(key)
        if d_light > 0:
            if before:
                h.delta(key, -before)
        else:
            allm = triple.all_root.content.get(key)
            if allm:
                h.delta(key, allm - before)
        return self._support_delta(key, before, h.get(key))

    @staticmethod
    def _support_delta(key: Row, before: int, after: int) -> Multiset:
        if before == 0 and after != 0:
            return {key: 1}
        if before != 0 and after == 0:
            return {key: -1}
        return {}

    # -- rebalancing -----------------------------------------------------

    def _major_rebalancing(self) -> None:
        """Strictly repartition every light part at the new threshold and
        recompute every affected view from the leaves."""
        self.counters.major_rebalances += 1
        theta = self._theta()
        for triple in self.triples:
            for lp in triple.light_parts:
                lp.content.load(strict_partition(self.base[lp.atom.symbol],
                                                 lp.key_positions, theta))
            self._refresh_tree_leaves(triple.light_tree)
            self._materialize_tree(triple.light_tree)
            self._rebuild_h(triple)
        for tree in self.trees:
            self._refresh_tree_leaves(tree)
            self._materialize_tree(tree)

    def _minor_checks(self, occurrences: list[Atom], row: Row) -> None:
        m_eps = self._theta()
        evict_at = iceil(1.5 * m_eps)
        reinsert_below = iceil(0.5 * m_eps)
        for atom in occurrences:
            rel = self.base[atom.symbol]
            for triple, lp in self._triples_by_leaf.get(atom.name, ()):
                key = tuple(row[p] for p in lp.key_positions)
                in_light = lp.content.count(lp.key_positions, key)
                if in_light == 0 and rel.count(lp.key_positions, key) < reinsert_below:
                    self._minor_rebalancing(triple, lp, key, insert=True)
                elif in_light >= evict_at:
                    self._minor_rebalancing(triple, lp, key, insert=False)

    def _minor_rebalancing(self, triple: IndicatorTriple, lp: LightPart,
                           key: Row, insert: bool) -> None:
        """Move every base tuple matching ``key`` into or out of the light
        part, one signed single-tuple delta at a time."""
        self.counters.minor_rebalances += 1
        rel = self.base[lp.atom.symbol]
        rows = list(rel.scan(lp.key_positions, key))
        for row, base_mult in rows:
            cnt = base_mult if insert else -base_mult
            delta = {row: cnt}
            lp.content.delta(row, cnt)
            for tree in self.trees:
                self._apply(tree, lp.name, delta)
            d_light = self._update_ind_tree(triple.light_tree, triple.light_root,
                                            atom_leaf_name(lp), delta, key)
            d_support = self._h_light_change(triple, key, d_light)
            for tree in self.trees:
                self._apply(tree, triple.support_name, d_support)

    # ------------------------------------------------------------------
    # reads
    # ------------------------------------------------------------------

    def enumerate_result(self) -> enumeration.ResultIterator:
        return enumeration.ResultIterator(self)

    def result_multiset(self) -> Multiset:
        return {row: m for row, m in self.enumerate_result()}

    def db_snapshot(self) -> dict[str, Multiset]:
        return {sym: dict(rel.entries) for sym, rel in self.base.items()}

    # ------------------------------------------------------------------
    # invariants + state comparison (used by tests and --verify)
    # ------------------------------------------------------------------

    def check_invariants(self, deep: bool = False) -> None:
        if self.mode == "dynamic":
            assert self.M // 4 <= self.N < self.M, \
                f"size invariant broken: M={self.M} N={self.N}"
        m_eps = self._theta()
        light_cap = iceil(1.5 * m_eps)
        heavy_floor = 0.5 * m_eps
        for triple in self.triples:
            for lp in triple.light_parts:
                base = self.base[lp.atom.symbol]
                light_keys = _key_degrees(lp.content.entries, lp.key_positions)
                base_keys = _key_degrees(base.entries, lp.key_positions)
                for key, deg in light_keys.items():
                    assert deg < light_cap, \
                        f"{lp.name}: light key {key} has degree {deg} >= {light_cap}"
                for key, deg in base_keys.items():
                    if key not in light_keys:
                        assert deg >= heavy_floor, \
                            f"{lp.name}: heavy key {key} has base degree {deg} < {heavy_floor}"
                for key in light_keys:
                    assert key in base_keys, f"{lp.name}: light key {key} not in base"
            all_supp = set(triple.all_root.content.entries)
            light_supp = set(triple.light_root.content.entries)
            h_supp = set(triple.h_content.entries)
            assert h_supp == all_supp - light_supp, \
                f"{triple.h_name}: support mismatch"
        if deep:
            self._check_contents()

    def _check_contents(self) -> None:
        """Every view equals its from-children recomputation, and every leaf
        copy equals its canonical source."""
        trees = list(self.trees)
        for triple in self.triples:
            trees.extend([triple.all_tree, triple.light_tree])
        for tree in trees:
            for node in tree.root.postorder():
                if node.is_leaf:
                    expected = self._leaf_source_entries(node)
                else:
                    plan = self._mat_plans[id(node)]
                    outer = node.children[plan.start_index]
                    expected = run_join(plan, node.children,
                                        list(outer.content.entries.items()))
                assert node.content.entries == expected, \
                    f"{node.name}: content diverged from recomputation"

    def _leaf_source_entries(self, node: ViewNode) -> Multiset:
        if node.kind == ATOM:
            return dict(self.base[node.leaf_name.split("#", 1)[0]].entries)
        if node.kind == LIGHT:
            return dict(self._lightpart_by_name(node.leaf_name).content.entries)
        triple = self._support_by_name[node.leaf_name]
        return {k: 1 for k in triple.h_content.entries}

    def fingerprint(self) -> dict:
        """Exact content map for state-equality comparisons."""
        out: dict = {"M": self.M, "N": self.N}
        trees = list(self.trees)
        for triple in self.triples:
            trees.extend([triple.all_tree, triple.light_tree])
            out[triple.h_content.name] = _freeze(triple.h_content.entries)
            for lp in triple.light_parts:
                out[lp.content.name] = _freeze(lp.content.entries)
        for tree in trees:
            for node in tree.nodes:
                out[node.name] = _freeze(node.content.entries)
        return out

    # ------------------------------------------------------------------
    # exports
    # ------------------------------------------------------------------

    def plan_json(self) -> list[dict]:
        out = []
        for ci, comp in enumerate(self.components):
            out.append({
                "component": ci,
                "head_vars": list(comp.head_vars),
                "trees": [tree_to_dict(t.root) for t in comp.trees],
                "indicators": [
                    {"var": tr.var, "keys": list(tr.keys),
                     "all": tree_to_dict(tr.all_root),
                     "light": tree_to_dict(tr.light_root),
                     "heavy": tr.h_name}
                    for tr in comp.triples
                ],
            })
        return out

    def dot(self) -> str:
        named = [(t.tag, t.root) for t in self.trees]
        return forest_dot(named, self.triples)


def _key_degrees(entries: Multiset, positions: tuple[int, ...]) -> dict[Row, int]:
    out: dict[Row, int] = {}
    for row in entries:
        key = tuple(row[p] for p in positions)
        out[key] = out.get(key, 0) + 1
    return out


def _freeze(entries: Multiset) -> tuple:
    return tuple(sorted(entries.items(), key=repr))


def atom_leaf_name(lp: LightPart) -> str:
    """Dispatch name of a light part's leaf inside the indicator light tree."""
    return lp.name


def preprocess(query: ConjunctiveQuery | str, db: dict[str, Multiset],
               epsilon: float, mode: str = "dynamic",
               m_override: int | None = None,
               counters: Counters | None = None) -> EngineState:
    """Build and materialize an engine state for ``query`` over ``db``.

    ``db`` maps each relation symbol to its tuple -> multiplicity map.  The
    threshold base defaults to 2N + 1.  ``mode`` selects between the static
    trees (enumeration only) and the dynamic trees (auxiliary views for
    constant-time sibling lookups; updates allowed).
    """
    if isinstance(query, str):
        query = parse_query(query)
    state = EngineState(query, epsilon, mode, counters)
    state._build(db, m_override)
    return state
