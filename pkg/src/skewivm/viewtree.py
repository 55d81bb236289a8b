"""Skew-aware view-tree construction and materialization.

Construction mirrors the four recursive builders: plain view trees over a
canonical variable order, single-node creation with the same-schema collapse
rule, auxiliary aggregation views for dynamic maintenance, indicator triples
(All / L / H) for bound join variables, and the top-level skew-aware
splitter that forks into a light strategy over partitioned relations and
heavy strategies gated by set-semantics indicators.

Nodes built here carry no data; the engine attaches a Relation to every node
and materializes bottom-up.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .query import Atom, ConjunctiveQuery, is_free_connex, is_q_hierarchical
from .storage import Relation
from .vorder import VariableOrder

# node kinds
ATOM = "base-atom"
LIGHT = "light-part"
HEAVY_REF = "indicator-heavy"  # set-semantics H support used inside a tree
JOIN = "join-view"
AUX = "aux-view"


class ViewNode:
    """One view in a tree: a join of its children projected to ``schema``."""

    __slots__ = ("name", "schema", "kind", "semantics", "children", "content",
                 "leaf_name", "dashed", "enum")

    def __init__(self, name: str, schema: tuple[str, ...], kind: str,
                 children: list["ViewNode"] | None = None,
                 semantics: str = "multiset", leaf_name: str | None = None,
                 dashed: bool = False):
        self.name = name
        self.schema = schema
        self.kind = kind
        self.semantics = semantics
        self.children = children or []
        self.content: Relation | None = None
        self.leaf_name = leaf_name  # delta dispatch key for leaves
        self.dashed = dashed
        self.enum = None  # enumeration annotations, filled per result tree

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def walk(self) -> list["ViewNode"]:
        out = []
        stack = [self]
        while stack:
            n = stack.pop()
            out.append(n)
            stack.extend(reversed(n.children))
        return out

    def postorder(self) -> list["ViewNode"]:
        out: list[ViewNode] = []

        def rec(n: ViewNode) -> None:
            for c in n.children:
                rec(c)
            out.append(n)

        rec(self)
        return out

    def __repr__(self) -> str:
        return f"{self.name}({','.join(self.schema)})"


@dataclass
class LightPart:
    """The light copy of one atom occurrence, partitioned on ``keys``."""

    atom: Atom
    keys: tuple[str, ...]
    name: str
    key_positions: tuple[int, ...]  # positions of keys in the atom schema
    content: Relation | None = None  # canonical copy, owned by the triple


@dataclass
class IndicatorTriple:
    """All / L / H indicator views for one bound variable and its ancestors."""

    var: str
    keys: tuple[str, ...]
    all_root: ViewNode
    light_root: ViewNode
    light_parts: list[LightPart]
    support_name: str  # leaf name of the set-semantics H copies in trees
    h_name: str
    h_content: Relation | None = None  # All-counts restricted to heavy keys
    all_tree: object = None  # ViewTree wrappers, attached by the engine
    light_tree: object = None

    def key_of(self, atom: Atom, row: tuple) -> tuple:
        pos = [atom.schema.index(v) for v in self.keys]
        return tuple(row[p] for p in pos)


@dataclass
class BuildContext:
    """Shared construction state for one connected component."""

    query: ConjunctiveQuery
    vo: VariableOrder
    free: frozenset[str]
    mode: str  # 'static' | 'dynamic'
    depth: dict[str, int]
    triples: list[IndicatorTriple] = field(default_factory=list)

    def order(self, varset) -> tuple[str, ...]:
        return tuple(sorted(varset, key=lambda v: (self.depth[v], v)))


def make_context(q: ConjunctiveQuery, vo: VariableOrder, free, mode: str) -> BuildContext:
    depth = {v: vo.depth(v) for v in vo.variables()}
    return BuildContext(query=q, vo=vo, free=frozenset(free), mode=mode, depth=depth)


# ---------------------------------------------------------------------------
# Leaf factories
# ---------------------------------------------------------------------------


def base_leaf(atom: Atom) -> ViewNode:
    return ViewNode(atom.name, atom.schema, ATOM, leaf_name=atom.name)


def light_leaf(lp: LightPart) -> ViewNode:
    return ViewNode(lp.name, lp.atom.schema, LIGHT, leaf_name=lp.name)


def heavy_ref_leaf(triple: IndicatorTriple) -> ViewNode:
    return ViewNode(triple.support_name, triple.keys, HEAVY_REF,
                    semantics="set", leaf_name=triple.support_name)


# ---------------------------------------------------------------------------
# The four builders
# ---------------------------------------------------------------------------


def new_vt(ctx: BuildContext, name: str, schema_set, children: list[ViewNode]) -> ViewNode:
    """A view over ``children`` — unless a single child already has exactly
    the requested schema, in which case that child is reused unchanged."""
    schema = ctx.order(schema_set)
    if len(children) == 1 and set(children[0].schema) == set(schema):
        return children[0]
    return ViewNode(name, schema, JOIN, children)


def aux_view(ctx: BuildContext, z, tree: ViewNode) -> ViewNode:
    """In dynamic mode, aggregate away ``z`` on top of its tree when ``z``
    has siblings, so sibling deltas propagate with constant-time lookups."""
    anc = set(ctx.vo.anc(z))
    if ctx.mode == "dynamic" and ctx.vo.has_sibling(z) and anc < set(tree.schema):
        return ViewNode(f"{tree.name}'", ctx.order(anc), AUX, [tree], dashed=True)
    return tree


def build_vt(ctx: BuildContext, prefix: str, node, free: frozenset[str],
             leaves: dict | None = None) -> ViewNode:
    """Recursive view-tree construction over the variable-order subtree at
    ``node``.

    ``leaves`` optionally maps atom keys to replacement leaf factories (used
    to swap in light parts).  At a variable whose whole root path is free the
    children are wrapped by :func:`aux_view` and the view keeps exactly the
    path; otherwise the view keeps the ancestors plus the free variables of
    the subtree.
    """
    if isinstance(node, Atom):
        if leaves and node.key in leaves:
            return light_leaf(leaves[node.key])
        return base_leaf(node)
    x = node
    vo = ctx.vo
    kids = [build_vt(ctx, prefix, k, free, leaves) for k in vo.kids(x)]
    anc = set(vo.anc(x))
    if anc | {x} <= free:
        schema = anc | {x}
        subtrees = [aux_view(ctx, z, t) for z, t in zip(vo.kids(x), kids)]
        return new_vt(ctx, f"{prefix}_{x}", schema, subtrees)
    schema = anc | (free & set(vo.subtree_vars(x)))
    return new_vt(ctx, f"{prefix}_{x}", schema, kids)


def indicator_vts(ctx: BuildContext, x: str) -> IndicatorTriple:
    """All/light/heavy indicator view trees for ``anc(x) + {x}``."""
    vo = ctx.vo
    keys = ctx.order(set(vo.anc(x)) | {x})
    key_str = "".join(keys)
    parts: list[LightPart] = []
    leaf_map: dict = {}
    for atom in vo.subtree_atoms(x):
        lp = LightPart(
            atom=atom,
            keys=keys,
            name=f"{atom.name}^{key_str}",
            key_positions=tuple(atom.schema.index(v) for v in keys),
        )
        parts.append(lp)
        leaf_map[atom.key] = lp
    all_root = build_vt(ctx, "All", x, frozenset(keys))
    light_root = build_vt(ctx, "L", x, frozenset(keys), leaves=leaf_map)
    triple = IndicatorTriple(
        var=x,
        keys=keys,
        all_root=all_root,
        light_root=light_root,
        light_parts=parts,
        support_name=f"xH_{x}",
        h_name=f"H_{x}",
    )
    ctx.triples.append(triple)
    return triple


def tau(ctx: BuildContext, node) -> list[ViewNode]:
    """Skew-aware view trees for the subtree at ``node``.

    Returns the forest roots, light strategy first.  Indicator triples
    created anywhere in the recursion accumulate on the context.
    """
    if isinstance(node, Atom):
        return [base_leaf(node)]
    x = node
    vo = ctx.vo
    keys = set(vo.anc(x)) | {x}
    f_x = set(vo.anc(x)) | (set(ctx.free) & set(vo.subtree_vars(x)))
    residual = ConjunctiveQuery(
        "Qx", ctx.order(f_x), tuple(a for a in vo.subtree_atoms(x)))
    easy = (is_free_connex(residual) if ctx.mode == "static"
            else is_q_hierarchical(residual))
    if easy:
        return [build_vt(ctx, "V", x, frozenset(f_x))]

    child_sets = [tau(ctx, k) for k in vo.kids(x)]

    def combos(extra: list[ViewNode]) -> list[ViewNode]:
        out = []
        for combo in itertools.product(*child_sets):
            subtrees = [aux_view(ctx, z, clone_tree(t))
                        for z, t in zip(vo.kids(x), combo)]
            fresh_extra = [clone_tree(e) for e in extra]
            out.append(new_vt(ctx, f"V_{x}", keys, fresh_extra + subtrees))
        return out

    if x in ctx.free:
        return combos([])
    triple = indicator_vts(ctx, x)
    htrees = combos([heavy_ref_leaf(triple)])
    leaf_map = {lp.atom.key: lp for lp in triple.light_parts}
    ltree = build_vt(ctx, "V", x, frozenset(f_x), leaves=leaf_map)
    return [ltree] + htrees


def clone_tree(node: ViewNode) -> ViewNode:
    """Structural deep copy; combinations must not share node objects."""
    copy = ViewNode(node.name, node.schema, node.kind,
                    [clone_tree(c) for c in node.children],
                    node.semantics, node.leaf_name, node.dashed)
    return copy


# ---------------------------------------------------------------------------
# Join plans and materialization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JoinStep:
    """One sibling to fold into the accumulator during a join."""

    child_index: int
    mode: str  # 'scan' | 'lookup'
    child_positions: tuple[int, ...]  # key positions in the child schema
    acc_positions: tuple[int, ...]  # matching positions in the accumulator
    new_positions: tuple[int, ...]  # child positions appended to the accumulator
    negated: bool = False


@dataclass(frozen=True)
class JoinPlan:
    start_index: int  # child the iteration starts from (or delta source)
    steps: tuple[JoinStep, ...]
    acc_schema: tuple[str, ...]
    out_positions: tuple[int, ...]  # projection of acc onto the view schema


def _plan_steps(children: list[ViewNode], start: int,
                start_schema: tuple[str, ...], view_schema: tuple[str, ...],
                order: list[int]) -> JoinPlan:
    acc: list[str] = list(start_schema)
    steps: list[JoinStep] = []
    for i in order:
        child = children[i]
        cs = child.schema
        shared = [v for v in cs if v in acc]
        if len(shared) == len(cs):
            mode = "lookup"
            child_pos = tuple(range(len(cs)))
            acc_pos = tuple(acc.index(v) for v in cs)
            new_pos: tuple[int, ...] = ()
        else:
            mode = "scan"
            child_pos = tuple(p for p, v in enumerate(cs) if v in acc)
            acc_pos = tuple(acc.index(cs[p]) for p in child_pos)
            new_pos = tuple(p for p, v in enumerate(cs) if v not in acc)
            acc.extend(cs[p] for p in new_pos)
        steps.append(JoinStep(i, mode, child_pos, acc_pos, new_pos))
    out_positions = tuple(acc.index(v) for v in view_schema)
    return JoinPlan(start, tuple(steps), tuple(acc), out_positions)


def materialize_plan(node: ViewNode) -> JoinPlan:
    """Outer child covering the most view-schema variables; a minimal cover
    of the rest is index-scanned; every other child is looked up."""
    children = node.children
    view_vars = set(node.schema)
    outer = min(range(len(children)),
                key=lambda i: (-len(view_vars & set(children[i].schema)),
                               children[i].name))
    remaining = view_vars - set(children[outer].schema)
    rest = [i for i in range(len(children)) if i != outer]
    cover: tuple[int, ...] = ()
    if remaining:
        for size in range(1, len(rest) + 1):
            found = None
            for combo in itertools.combinations(sorted(rest, key=lambda i: children[i].name), size):
                if remaining <= set().union(*(set(children[i].schema) for i in combo)):
                    found = combo
                    break
            if found:
                cover = found
                break
    covered_first = [i for i in rest if i in cover]
    rest_order = covered_first + [i for i in rest if i not in cover]
    return _plan_steps(children, outer, children[outer].schema, node.schema, rest_order)


def delta_plan(node: ViewNode, child_index: int) -> JoinPlan:
    """Join plan for a delta arriving from ``child_index``."""
    children = node.children
    order = [i for i in range(len(children)) if i != child_index]
    return _plan_steps(children, child_index, children[child_index].schema,
                       node.schema, order)


def run_join(plan: JoinPlan, children: list[ViewNode],
             start_rows) -> dict[tuple, int]:
    """Fold ``start_rows`` (an iterable of (row, mult) over the plan's start
    schema) through the plan's steps, returning the aggregated projection."""
    out: dict[tuple, int] = {}
    rows = [(row, m) for row, m in start_rows]
    for step in plan.steps:
        child = children[step.child_index]
        rel = child.content
        next_rows = []
        if step.mode == "lookup":
            for row, m in rows:
                key = tuple(row[p] for p in step.acc_positions)
                cm = rel.get(key)
                if child.semantics == "set" and cm:
                    cm = 1
                if cm:
                    next_rows.append((row, m * cm))
        else:
            for row, m in rows:
                key = tuple(row[p] for p in step.acc_positions)
                for crow, cm in rel.scan(step.child_positions, key):
                    if child.semantics == "set" and cm:
                        cm = 1
                    next_rows.append(
                        (row + tuple(crow[p] for p in step.new_positions), m * cm))
        rows = next_rows
    for row, m in rows:
        if m == 0:
            continue
        key = tuple(row[p] for p in plan.out_positions)
        new = out.get(key, 0) + m
        if new:
            out[key] = new
        elif key in out:
            del out[key]
    return out


def materialize_node(node: ViewNode, plan: JoinPlan) -> None:
    """Recompute ``node.content`` from the children (leaves untouched)."""
    outer = node.children[plan.start_index]
    rel = outer.content

    def start():
        for row, m in rel.scan((), ()):
            yield row, (1 if outer.semantics == "set" and m else m)

    node.content.load(run_join(plan, node.children, start()))


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def tree_to_dict(root: ViewNode) -> dict:
    return {
        "name": root.name,
        "kind": root.kind,
        "schema": list(root.schema),
        "semantics": root.semantics,
        "children": [tree_to_dict(c) for c in root.children],
    }


def forest_dot(named_roots: list[tuple[str, ViewNode]],
               triples: list[IndicatorTriple] | None = None) -> str:
    """One digraph per tree; node labels are ``name(schema)``; aux views and
    other dynamic-only views are dashed, matching the figures."""
    out: list[str] = []

    def emit(graph: str, root: ViewNode, extra: list[str] | None = None) -> None:
        lines = [f"digraph \"{graph}\" {{", "  node [shape=plaintext];"]
        counter = itertools.count()
        ids: dict[int, str] = {}

        def visit(n: ViewNode) -> str:
            nid = f"n{next(counter)}"
            ids[id(n)] = nid
            style = ", style=dashed" if n.dashed else ""
            label = f"{n.name}({','.join(n.schema)})"
            lines.append(f"  {nid} [label=\"{label}\"{style}];")
            for c in n.children:
                cid = visit(c)
                lines.append(f"  {nid} -> {cid};")
            return nid

        visit(root)
        if extra:
            lines.extend(extra)
        lines.append("}")
        out.append("\n".join(lines))

    for name, root in named_roots:
        emit(name, root)
    for t in triples or []:
        emit(f"{t.h_name}_all", t.all_root)
        emit(f"{t.h_name}_light", t.light_root)
        out.append(
            f"digraph \"{t.h_name}\" {{\n  node [shape=plaintext];\n"
            f"  h [label=\"{t.h_name}({','.join(t.keys)})\"];\n"
            f"  a [label=\"{t.all_root.name}({','.join(t.all_root.schema)})\"];\n"
            f"  l [label=\"not-exists {t.light_root.name}({','.join(t.light_root.schema)})\"];\n"
            "  h -> a;\n  h -> l;\n}")
    return "\n".join(out)
