"""
Level graph of a combinatorial Morse description.

1. Validate the description (trivalent vertices, distinct contiguous integer
   values, oriented edges, no empty level)
2. Assign exact dyadic weights, forward above level 1/2 and backward below
3. Renormalize critical values as base-16 exponents n(|n| + nu)
4. Check the weight and value lower bounds
"""

import logging
import math
from collections import Counter
from fractions import Fraction
from typing import Any, Optional, Union

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, PrivateAttr

from models.geometry import EdgeSpec, GraphDescription, VertexSpec, parse_description
from models.reports import VerificationReport
from services.errors import (
    DuplicateCriticalValue,
    EdgeOrientationError,
    EmptyLevel,
    GraphFormatError,
    NuTooSmall,
    TrivalenceViolation,
    ValueGap,
)

logger = logging.getLogger(__name__)

NEG_INF = "-inf"
POS_INF = "+inf"
HALF = Fraction(1, 2)


class Vertex(BaseModel):
    model_config = ConfigDict(frozen=True)
    id: str
    f: int


class Edge(BaseModel):
    model_config = ConfigDict(frozen=True)
    id: str
    src: str
    dst: str


class LevelGraph(BaseModel):
    """Validated trivalent level graph."""
    model_config = ConfigDict(frozen=True)

    vertices: tuple[Vertex, ...]
    edges: tuple[Edge, ...]
    n_crossing: int
    nu: int
    levels_all_disconnected: bool

    _index: dict = PrivateAttr(default_factory=dict)

    def model_post_init(self, __context: Any) -> None:
        self._index = {
            "vertex": {v.id: v for v in self.vertices},
            "edge": {e.id: e for e in self.edges},
            "in": {v.id: [e for e in self.edges if e.dst == v.id] for v in self.vertices},
            "out": {v.id: [e for e in self.edges if e.src == v.id] for v in self.vertices},
        }

    def vertex(self, vid: str) -> Vertex:
        return self._index["vertex"][vid]

    def edge(self, eid: str) -> Edge:
        return self._index["edge"][eid]

    def value(self, endpoint: str) -> Union[int, float]:
        """Critical value of an endpoint; open ends sit at -inf/+inf."""
        if endpoint == NEG_INF:
            return -math.inf
        if endpoint == POS_INF:
            return math.inf
        return self.vertex(endpoint).f

    def in_edges(self, vid: str) -> list[Edge]:
        return list(self._index["in"][vid])

    def out_edges(self, vid: str) -> list[Edge]:
        return list(self._index["out"][vid])

    def values(self) -> list[int]:
        return sorted(v.f for v in self.vertices)

    def regular_levels(self) -> list[Fraction]:
        """One representative per regular interval of levels."""
        return regular_levels([v.f for v in self.vertices])

    def crossing(self, t: Fraction) -> list[Edge]:
        return [e for e in self.edges if self.value(e.src) < t < self.value(e.dst)]

    def summary(self) -> dict:
        return {
            "vertices": [v.model_dump() for v in self.vertices],
            "edges": [e.model_dump() for e in self.edges],
            "N": self.n_crossing,
            "nu": self.nu,
            "levels_all_disconnected": self.levels_all_disconnected,
        }


class Weighting(BaseModel):
    """Exact edge weights."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    weights: dict[str, Fraction]

    def __getitem__(self, eid: str) -> Fraction:
        return self.weights[eid]

    def with_weight(self, eid: str, weight: Fraction) -> "Weighting":
        """Copy with one weight replaced (used to inject faults in tests)."""
        if eid not in self.weights:
            raise KeyError(eid)
        updated = dict(self.weights)
        updated[eid] = Fraction(weight)
        return Weighting(weights=updated)

    def to_dict(self) -> dict:
        return {eid: str(w) for eid, w in sorted(self.weights.items())}


class RenormalizedLevels(BaseModel):
    """u(p) = 16**exponent(p), stored by exponent."""
    model_config = ConfigDict(frozen=True)

    nu: int
    exponents: dict[str, int]

    def value(self, vid: str) -> Fraction:
        return Fraction(16) ** self.exponents[vid]

    def as_float(self, vid: str) -> float:
        try:
            return float(self.value(vid))
        except OverflowError:
            return math.inf

    def endpoint(self, endpoint: str) -> Optional[Fraction]:
        """u at an endpoint; the cusp end is 0 and the anticusp end is None (infinite)."""
        if endpoint == NEG_INF:
            return Fraction(0)
        if endpoint == POS_INF:
            return None
        return self.value(endpoint)

    def to_dict(self) -> dict:
        return {"nu": self.nu, "log16_u": dict(sorted(self.exponents.items()))}


def regular_levels(values: list[int]) -> list[Fraction]:
    vals = sorted(values)
    if not vals:
        return [HALF]
    return [Fraction(vals[0]) - HALF] + [Fraction(v) + HALF for v in vals]


def least_nu(n_crossing: int) -> int:
    """Least nu >= 1 with N <= 2**nu."""
    nu = 1
    while n_crossing > 2 ** nu:
        nu += 1
    return nu


def load_description(data: Union[dict, GraphDescription]) -> GraphDescription:
    """Parse a raw graph description, reporting the failing location."""
    return parse_description(GraphDescription, data, "graph description")


def validate_graph(description: Union[dict, GraphDescription], nu: Optional[int] = None) -> LevelGraph:
    """
    Validate a combinatorial Morse description into a LevelGraph.

    Args:
        description: Raw JSON-like dict or parsed GraphDescription
        nu: Renormalization exponent; overrides the description's `nu`

    Returns:
        LevelGraph with N, nu and the disconnected-levels flag
    """
    desc = load_description(description)

    vertices: dict[str, Vertex] = {}
    for i, item in enumerate(desc.vertices):
        if item.id in (NEG_INF, POS_INF):
            raise GraphFormatError(f"Reserved vertex id: {item.id}", location=f"vertices/{i}/id")
        if item.id in vertices:
            raise GraphFormatError(f"Duplicate vertex id: {item.id}", location=f"vertices/{i}/id")
        vertices[item.id] = Vertex(id=item.id, f=item.f)

    edges: list[Edge] = []
    seen: set[str] = set()
    for i, item in enumerate(desc.edges):
        eid = item.id or f"e{i}"
        if eid in seen:
            raise GraphFormatError(f"Duplicate edge id: {eid}", location=f"edges/{i}/id")
        seen.add(eid)
        for end, field in ((item.src, "src"), (item.dst, "dst")):
            if end not in vertices and end not in (NEG_INF, POS_INF):
                raise GraphFormatError(f"Unknown endpoint: {end}", location=f"edges/{i}/{field}")
        edges.append(Edge(id=eid, src=item.src, dst=item.dst))

    def val(end: str) -> Union[int, float]:
        if end == NEG_INF:
            return -math.inf
        if end == POS_INF:
            return math.inf
        return vertices[end].f

    for e in edges:
        if not val(e.src) < val(e.dst):
            raise EdgeOrientationError(
                f"Edge {e.id} is not oriented by increasing f", edge=e.id, src=e.src, dst=e.dst
            )

    counts = Counter(v.f for v in vertices.values())
    dupes = sorted(f for f, c in counts.items() if c > 1)
    if dupes:
        raise DuplicateCriticalValue(f"Critical value {dupes[0]} is shared", value=dupes[0])

    values = sorted(counts)
    if values:
        lo, hi = values[0], values[-1]
        if hi - lo + 1 != len(values):
            missing = sorted(set(range(lo, hi + 1)) - set(values))
            raise ValueGap(f"Critical values skip {missing[0]}", missing=missing)
        if hi < 0 or lo > 1:
            raise ValueGap(f"Critical values [{lo}, {hi}] do not meet {{0, 1}}", low=lo, high=hi)

    crossing_counts = {}
    for t in regular_levels(values):
        crossing_counts[t] = sum(1 for e in edges if val(e.src) < t < val(e.dst))
        if crossing_counts[t] == 0:
            raise EmptyLevel(f"No edge crosses level {t}", level=str(t))

    _check_trivalence(vertices, edges)

    n_crossing = sum(1 for e in edges if val(e.src) < HALF < val(e.dst))
    nu = nu if nu is not None else desc.nu
    if nu is None:
        nu = least_nu(n_crossing)
    elif n_crossing > 2 ** nu:
        raise NuTooSmall(f"N={n_crossing} exceeds 2^{nu}", N=n_crossing, nu=nu)

    graph = LevelGraph(
        vertices=tuple(sorted(vertices.values(), key=lambda v: v.f)),
        edges=tuple(edges),
        n_crossing=n_crossing,
        nu=nu,
        levels_all_disconnected=all(c >= 2 for c in crossing_counts.values()),
    )
    logger.debug(f"Validated graph: {len(vertices)} vertices, {len(edges)} edges, N={n_crossing}")
    return graph


def _check_trivalence(vertices: dict[str, Vertex], edges: list[Edge]) -> None:
    g = nx.MultiDiGraph()
    g.add_nodes_from(vertices)
    for e in edges:
        # each open end gets its own terminal node
        src = e.src if e.src in vertices else f"{e.src}#{e.id}"
        dst = e.dst if e.dst in vertices else f"{e.dst}#{e.id}"
        g.add_edge(src, dst, key=e.id)
    for vid in vertices:
        degree = (g.in_degree(vid), g.out_degree(vid))
        if degree not in ((1, 2), (2, 1)):
            raise TrivalenceViolation(
                f"Vertex {vid} has (in, out) degree {degree}", vertex=vid, degree=list(degree)
            )


def assign_weights(g: LevelGraph) -> Weighting:
    """
    Weights by the split/merge recursion.

    Edges crossing 1/2 get 1/N. Above, a split halves the incoming weight
    and a merge adds. Below, the rules run backwards.
    """
    weights: dict[str, Fraction] = {e.id: Fraction(1, g.n_crossing) for e in g.crossing(HALF)}

    for p in sorted((v for v in g.vertices if v.f >= 1), key=lambda v: v.f):
        ins, outs = g.in_edges(p.id), g.out_edges(p.id)
        if len(ins) == 1:
            for e in outs:
                weights[e.id] = weights[ins[0].id] / 2
        else:
            weights[outs[0].id] = sum((weights[e.id] for e in ins), Fraction(0))

    for p in sorted((v for v in g.vertices if v.f <= 0), key=lambda v: -v.f):
        ins, outs = g.in_edges(p.id), g.out_edges(p.id)
        if len(outs) == 1:
            for e in ins:
                weights[e.id] = weights[outs[0].id] / 2
        else:
            weights[ins[0].id] = sum((weights[e.id] for e in outs), Fraction(0))

    return Weighting(weights={e.id: weights[e.id] for e in g.edges})


def level_sums(g: LevelGraph, w: Weighting) -> dict[Fraction, Fraction]:
    return {t: sum((w[e.id] for e in g.crossing(t)), Fraction(0)) for t in g.regular_levels()}


def _local_rule_violations(g: LevelGraph, w: Weighting) -> list[tuple[str, list[str]]]:
    """(rule, edges involved) for every violated local rule."""
    violations = []
    for e in g.crossing(HALF):
        if w[e.id] != Fraction(1, g.n_crossing):
            violations.append((f"initial weight 1/N on {e.id}", [e.id]))
    for p in g.vertices:
        ins, outs = g.in_edges(p.id), g.out_edges(p.id)
        involved = [e.id for e in ins + outs]
        forward = p.f >= 1
        parent, children = (ins, outs) if forward else (outs, ins)
        if len(parent) == 1:
            # one halved child off blames that child, both off blame the parent
            off = [e.id for e in children if w[e.id] != w[parent[0].id] / 2]
            ok = not off
            if len(off) == 1:
                involved = off
        else:
            ok = w[children[0].id] == sum(w[e.id] for e in parent)
        if not ok:
            violations.append((f"local rule at {p.id}", involved))
    return violations


def verify_level_sums(g: LevelGraph, w: Weighting) -> VerificationReport:
    """Check every regular level sums to exactly 1; pinpoint a corrupted edge."""
    report = VerificationReport(title="level_sums")
    for t, total in level_sums(g, w).items():
        report.add(f"level_sum[{t}]", total == 1, measured=total, expected=1)
    for e in g.edges:
        report.add(f"positive[{e.id}]", w[e.id] > 0, measured=w[e.id])

    violations = _local_rule_violations(g, w)
    if violations:
        tally = Counter(eid for _, involved in violations for eid in involved)
        worst = max(tally.values())
        suspects = sorted(eid for eid, c in tally.items() if c == worst)
        report.sections["violated_rules"] = [rule for rule, _ in violations]
        report.sections["suspect_edges"] = suspects
        logger.info(f"Weight recursion violated at {len(violations)} rules; suspect {suspects}")
    return report


def phi_exponent(n: int, nu: int) -> int:
    """Base-16 exponent of phi(n) = 16**(n(|n| + nu))."""
    return n * (abs(n) + nu)


def phi(n: int, nu: int) -> Fraction:
    return Fraction(16) ** phi_exponent(n, nu)


def renormalize_levels(g: LevelGraph, nu: Optional[int] = None) -> RenormalizedLevels:
    """u(p) = phi(f(p)) for every vertex, as exact exponents."""
    nu = g.nu if nu is None else nu
    if g.n_crossing > 2 ** nu:
        raise NuTooSmall(f"N={g.n_crossing} exceeds 2^{nu}", N=g.n_crossing, nu=nu)
    return RenormalizedLevels(nu=nu, exponents={v.id: phi_exponent(v.f, nu) for v in g.vertices})


def check_weight_bounds(
    g: LevelGraph,
    w: Weighting,
    u: Optional[RenormalizedLevels] = None,
) -> VerificationReport:
    """
    Check weight(e) >= (1/N) 2^(-|f(p'')|-1) and weight(e) u(p'') >= 8 u(p).

    p'' is the terminal vertex of e and p ranges over vertices below p''.
    Margins are log2 of measured/bound. Also checks the spacing
    phi(n) >= 2^(|n|+4+nu) phi(n-1) over the value range.
    """
    u = u or renormalize_levels(g)
    report = VerificationReport(title="weight_bounds")
    n_inv = Fraction(1, g.n_crossing)

    for e in g.edges:
        if e.dst == POS_INF:
            continue
        top = g.vertex(e.dst)
        weight = w[e.id]
        bound = n_inv / 2 ** (abs(top.f) + 1)
        report.add(
            f"weight_lower[{e.id}]",
            weight >= bound,
            measured=weight,
            expected=bound,
            margin=_log2(weight) - _log2(bound),
        )
        below = [p for p in g.vertices if p.f < top.f]
        if not below:
            continue
        # u increases with f, so the vertex just below p'' is the binding one
        p = max(below, key=lambda v: v.f)
        d = u.exponents[top.id] - u.exponents[p.id]
        holds = weight.numerator << (4 * d) >= 8 * weight.denominator
        measured = _log2(weight) + 4 * d
        report.add(
            f"value_lower[{e.id},{p.id}]",
            holds,
            measured=measured,
            expected=3.0,
            margin=measured - 3.0,
            detail="log2(weight*u(p'')/u(p)) vs log2(8)",
        )

    values = g.values()
    for n in range(values[0] + 1, values[-1] + 1) if values else []:
        lhs = 4 * (phi_exponent(n, u.nu) - phi_exponent(n - 1, u.nu))
        rhs = abs(n) + 4 + u.nu
        report.add(f"spacing[{n}]", lhs >= rhs, measured=lhs, expected=rhs, margin=lhs - rhs)
    return report


def _log2(x: Fraction) -> float:
    return math.log2(x.numerator) - math.log2(x.denominator)


def random_level_graph(
    rng: np.random.Generator,
    max_vertices: int = 40,
    require_disconnected: bool = False,
    max_strands: int = 8,
) -> GraphDescription:
    """
    Seeded sweep construction of a valid description.

    Values run over lo..lo+n-1 with the range meeting {0, 1}. Each vertex
    either splits one strand or merges two; merges are skipped when they
    would drop below the strand floor (2 when every level must be
    disconnected).
    """
    floor = 2 if require_disconnected else 1
    n = int(rng.integers(0, max_vertices + 1))
    lo = int(rng.integers(1 - n, 2)) if n else 0
    vertices: list[VertexSpec] = []
    edges: list[dict[str, Any]] = []
    strands = [len(edges) + i for i in range(int(rng.integers(floor, floor + 3)))]
    edges.extend({"src": NEG_INF} for _ in strands)

    for i in range(n):
        vid = f"p{i}"
        vertices.append(VertexSpec(id=vid, f=lo + i))
        merge = len(strands) - 1 >= floor and (len(strands) >= max_strands or rng.random() < 0.5)
        if merge:
            picks = sorted(rng.choice(len(strands), size=2, replace=False).tolist(), reverse=True)
            for k in picks:
                edges[strands.pop(k)]["dst"] = vid
            new = [len(edges)]
        else:
            k = int(rng.integers(0, len(strands)))
            edges[strands.pop(k)]["dst"] = vid
            new = [len(edges), len(edges) + 1]
        edges.extend({"src": vid} for _ in new)
        strands.extend(new)

    for k in strands:
        edges[k]["dst"] = POS_INF
    return GraphDescription(
        vertices=vertices,
        edges=[EdgeSpec(id=f"e{i}", **e) for i, e in enumerate(edges)],
    )


def relabel(desc: GraphDescription, rng: np.random.Generator) -> tuple[GraphDescription, dict[str, str], dict[str, str]]:
    """Permute vertex and edge ids; returns the description and both id maps."""
    vperm = rng.permutation(len(desc.vertices)).tolist()
    vmap = {v.id: f"q{vperm[i]}" for i, v in enumerate(desc.vertices)}
    eperm = rng.permutation(len(desc.edges)).tolist()
    ids = [e.id or f"e{i}" for i, e in enumerate(desc.edges)]
    emap = {eid: f"edge{eperm[i]}" for i, eid in enumerate(ids)}
    ends = {**vmap, NEG_INF: NEG_INF, POS_INF: POS_INF}
    order = rng.permutation(len(desc.edges)).tolist()
    relabeled = GraphDescription(
        vertices=[VertexSpec(id=vmap[v.id], f=v.f) for v in reversed(desc.vertices)],
        edges=[
            EdgeSpec(id=emap[ids[i]], src=ends[desc.edges[i].src], dst=ends[desc.edges[i].dst])
            for i in order
        ],
        nu=desc.nu,
    )
    return relabeled, vmap, emap
