"""Distributed maximal and almost-maximal matching subroutines.

Three flavors sit behind one spec type, selectable per run:

* ``det``  -- repeated lowest-id mutual-pointer greedy. Always maximal,
  fully deterministic, worst-case O(n) rounds but fast in practice.
* ``rand:s`` -- s iterations of the random-pointer matching round
  (point / keep incoming edge / choose incident edge / resolve mutual
  choices). Maximal with probability that improves geometrically in s.
* ``amm:eta,delta`` -- the same iteration run just long enough that at most
  an eta-fraction of vertices is left violating maximality, with
  probability at least 1 - delta.

Each randomized iteration costs 4 engine rounds (3 message rounds plus a
resolution round in which matched vertices announce themselves). The
functions in this module run the subroutine standalone on an arbitrary
bipartite graph through the round engine; the proposal protocol embeds the
same per-vertex mechanics as a phase of its own schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .engine import Engine, MsgKind, ProcessorContext, RoundTrace, Topology
from .errors import InconsistentState
from .model import Matching, PlayerId, Side

DEFAULT_SHRINK_C = 0.95


def iterations_for_maximal(num_vertices: int, eta: float, c: float = DEFAULT_SHRINK_C) -> int:
    """Iterations after which the residual is empty with probability >= 1 - eta.

    Derived from the expected geometric shrink of the residual vertex set by
    a factor c per iteration plus a first-moment bound.
    """
    if not (0 < eta) or not (0 < c < 1):
        raise ValueError("need eta > 0 and 0 < c < 1")
    if num_vertices < 1:
        return 1
    return max(1, math.ceil(math.log(num_vertices / eta) / math.log(1 / c)))


def iterations_for_almost_maximal(eta: float, delta: float, c: float = DEFAULT_SHRINK_C) -> int:
    """Iterations after which at most an eta-fraction of vertices violates
    maximality, with probability >= 1 - delta."""
    if not (0 < eta <= 1) or not (0 < delta < 1) or not (0 < c < 1):
        raise ValueError("need 0 < eta <= 1, 0 < delta < 1, 0 < c < 1")
    return max(1, math.ceil(math.log(1 / (delta * eta)) / math.log(1 / c)))


@dataclass(frozen=True)
class MatchingSubroutineSpec:
    """Which matching subroutine a proposal round uses, plus its parameters."""

    flavor: str  # "det" | "rand" | "amm"
    iterations: int | None = None  # rand: fixed iteration count s
    eta: float | None = None  # amm: tolerated unmatched vertex fraction
    delta: float | None = None  # amm: failure probability
    shrink_c: float = DEFAULT_SHRINK_C

    def __post_init__(self):
        if self.flavor not in ("det", "rand", "amm"):
            raise ValueError(f"unknown subroutine flavor {self.flavor!r}")
        if self.flavor == "rand":
            if self.iterations is None or self.iterations < 1:
                raise ValueError("rand flavor needs iterations >= 1")
        if self.flavor == "amm":
            if self.eta is None or not (0 < self.eta <= 1):
                raise ValueError("amm flavor needs 0 < eta <= 1")
            if self.delta is None or not (0 < self.delta < 1):
                raise ValueError("amm flavor needs 0 < delta < 1")
        if not (0 < self.shrink_c < 1):
            raise ValueError("shrink constant must be in (0, 1)")

    @classmethod
    def deterministic(cls) -> "MatchingSubroutineSpec":
        return cls(flavor="det")

    @classmethod
    def randomized(cls, iterations: int, shrink_c: float = DEFAULT_SHRINK_C) -> "MatchingSubroutineSpec":
        return cls(flavor="rand", iterations=iterations, shrink_c=shrink_c)

    @classmethod
    def almost_maximal(cls, eta: float, delta: float, shrink_c: float = DEFAULT_SHRINK_C) -> "MatchingSubroutineSpec":
        return cls(flavor="amm", eta=eta, delta=delta, shrink_c=shrink_c)

    @classmethod
    def parse(cls, text: str) -> "MatchingSubroutineSpec":
        """Parse descriptor strings: ``det``, ``rand:S``, ``amm:ETA,DELTA``."""
        head, _, rest = text.partition(":")
        if head == "det":
            return cls.deterministic()
        if head == "rand":
            return cls.randomized(int(rest))
        if head == "amm":
            eta_s, _, delta_s = rest.partition(",")
            return cls.almost_maximal(float(eta_s), float(delta_s))
        raise ValueError(f"unknown subroutine descriptor {text!r}")

    def fixed_iterations(self) -> int | None:
        """Iteration count of the fixed schedule, or None for the adaptive greedy."""
        if self.flavor == "rand":
            return self.iterations
        if self.flavor == "amm":
            return iterations_for_almost_maximal(self.eta, self.delta, self.shrink_c)
        return None

    def removes_unmatched(self) -> bool:
        return self.flavor == "amm"

    def describe(self) -> str:
        if self.flavor == "det":
            return "det"
        if self.flavor == "rand":
            return f"rand:{self.iterations}"
        return f"amm:{self.eta:g},{self.delta:g}"


class MmNode:
    """Per-vertex scratch state for one invocation of the matching subroutine.

    ``residual`` is the vertex's current view of unmatched neighbors; it only
    shrinks, via announcements from neighbors that got matched.
    """

    __slots__ = ("residual", "matched", "pointing", "kept_in", "chosen")

    def __init__(self, neighbors: Iterable[PlayerId]):
        self.residual: set[PlayerId] = set(neighbors)
        self.matched: PlayerId | None = None
        self.pointing: PlayerId | None = None
        self.kept_in: PlayerId | None = None
        self.chosen: PlayerId | None = None

    @property
    def live(self) -> bool:
        return self.matched is None and bool(self.residual)

    def prune(self, announcers: Iterable[PlayerId]) -> None:
        self.residual.difference_update(announcers)

    def begin_iteration(self) -> None:
        self.pointing = None
        self.kept_in = None
        self.chosen = None

    # -- randomized flavor -------------------------------------------------

    def point_random(self, rng) -> PlayerId | None:
        if not self.live:
            return None
        self.pointing = rng.choice(sorted(self.residual))
        return self.pointing

    def keep_random(self, pointers: list[PlayerId], rng) -> PlayerId | None:
        for p in pointers:
            if p not in self.residual:
                raise InconsistentState(f"pointer from {p} outside residual neighborhood")
        if not pointers or self.matched is not None:
            return None
        self.kept_in = rng.choice(sorted(pointers))
        return self.kept_in

    def choose_random(self, keepers: list[PlayerId], rng) -> PlayerId | None:
        for kp in keepers:
            if kp != self.pointing:
                raise InconsistentState(f"keep message from {kp}, but this vertex pointed at {self.pointing}")
        # incident edges of the thinned graph: the in-edge this vertex kept,
        # plus its own out-edge when the target kept it (undirected collapse)
        candidates = set(keepers)
        if self.kept_in is not None:
            candidates.add(self.kept_in)
        if not candidates or self.matched is not None:
            return None
        self.chosen = rng.choice(sorted(candidates))
        return self.chosen

    def resolve_choices(self, choosers: list[PlayerId]) -> PlayerId | None:
        if self.chosen is not None and self.chosen in choosers:
            self.matched = self.chosen
            return self.matched
        return None

    # -- deterministic greedy flavor ----------------------------------------

    def point_lowest(self) -> PlayerId | None:
        if not self.live:
            return None
        self.pointing = min(self.residual)
        return self.pointing

    def resolve_mutual(self, pointers: list[PlayerId]) -> PlayerId | None:
        for p in pointers:
            if p not in self.residual:
                raise InconsistentState(f"pointer from {p} outside residual neighborhood")
        if self.pointing is not None and self.pointing in pointers:
            self.matched = self.pointing
            return self.matched
        return None


# ---------------------------------------------------------------------------
# Standalone runners over an arbitrary bipartite graph
# ---------------------------------------------------------------------------


def _normalize_graph(adjacency: Mapping[PlayerId, Iterable[PlayerId]]) -> dict[PlayerId, frozenset[PlayerId]]:
    """Validate bipartiteness and symmetry; strip isolated vertices."""
    full = {v: frozenset(nbrs) for v, nbrs in adjacency.items()}
    for v, nbrs in full.items():
        for u in nbrs:
            if u.side == v.side:
                raise InconsistentState(f"edge ({v}, {u}) does not cross sides")
            if u not in full or v not in full[u]:
                raise InconsistentState(f"adjacency is not symmetric at ({v}, {u})")
    return {v: nbrs for v, nbrs in full.items() if nbrs}


def _matching_from_nodes(nodes: dict[PlayerId, MmNode]) -> Matching:
    pairs = set()
    for v, node in nodes.items():
        if node.matched is not None and v.side is Side.MAN:
            if nodes[node.matched].matched != v:
                raise InconsistentState(f"asymmetric match between {v} and {node.matched}")
            pairs.add((v.index, node.matched.index))
    return Matching.of(pairs)


def _violating_vertices(graph: Mapping[PlayerId, frozenset[PlayerId]], nodes: dict[PlayerId, MmNode]) -> frozenset[PlayerId]:
    """Vertices that are unmatched and still have an unmatched neighbor."""
    unmatched = {v for v in graph if nodes[v].matched is None}
    return frozenset(v for v in unmatched if any(u in unmatched for u in graph[v]))


@dataclass(frozen=True)
class MatchingRoundResult:
    matching: Matching
    reduced: dict[PlayerId, frozenset[PlayerId]]  # graph left for the next iteration
    trace: RoundTrace


@dataclass(frozen=True)
class SubroutineResult:
    matching: Matching
    residual_vertices: frozenset[PlayerId]  # maximality violators at exit
    maximal: bool
    iterations: int
    trace: RoundTrace


class _StandaloneRun:
    """Drives subroutine iterations for a graph handed in directly."""

    def __init__(self, graph: dict[PlayerId, frozenset[PlayerId]], seed: int):
        self.graph = graph
        self.nodes = {v: MmNode(nbrs) for v, nbrs in graph.items()}
        self.engine = Engine(Topology.from_bipartite(graph), seed=seed)

    def _actors(self) -> list[PlayerId]:
        return [v for v, node in self.nodes.items() if node.live]

    def any_live(self) -> bool:
        return any(node.live for node in self.nodes.values())

    def step_point(self, ctx: ProcessorContext, randomized: bool) -> None:
        node = self.nodes[ctx.self_id]
        node.prune(ctx.inbox_of_kind(MsgKind.MM_MATCHED))
        node.begin_iteration()
        target = node.point_random(ctx.rng) if randomized else node.point_lowest()
        if target is not None:
            ctx.send(target, MsgKind.MM_POINT)

    def step_keep(self, ctx: ProcessorContext) -> None:
        node = self.nodes[ctx.self_id]
        kept = node.keep_random(ctx.inbox_of_kind(MsgKind.MM_POINT), ctx.rng)
        if kept is not None:
            ctx.send(kept, MsgKind.MM_KEEP)

    def step_choose(self, ctx: ProcessorContext) -> None:
        node = self.nodes[ctx.self_id]
        choice = node.choose_random(ctx.inbox_of_kind(MsgKind.MM_KEEP), ctx.rng)
        if choice is not None:
            ctx.send(choice, MsgKind.MM_CHOOSE)

    def step_resolve(self, ctx: ProcessorContext) -> None:
        node = self.nodes[ctx.self_id]
        partner = node.resolve_choices(ctx.inbox_of_kind(MsgKind.MM_CHOOSE))
        if partner is not None:
            for u in sorted(node.residual):
                ctx.send(u, MsgKind.MM_MATCHED)

    def step_resolve_mutual(self, ctx: ProcessorContext) -> None:
        node = self.nodes[ctx.self_id]
        partner = node.resolve_mutual(ctx.inbox_of_kind(MsgKind.MM_POINT))
        if partner is not None:
            for u in sorted(node.residual):
                ctx.send(u, MsgKind.MM_MATCHED)

    def run_randomized(self, iterations: int) -> None:
        for it in range(iterations):
            if self.engine.in_flight == 0 and not self.any_live():
                self.engine.skip_rounds("mm", 4 * (iterations - it))
                return
            actors = self._actors()
            self.engine.run_round(lambda c: self.step_point(c, True), "mm", actors)
            self.engine.run_round(self.step_keep, "mm", actors)
            self.engine.run_round(self.step_choose, "mm", actors)
            self.engine.run_round(self.step_resolve, "mm", actors)

    def run_greedy(self) -> int:
        iterations = 0
        while True:
            actors = self._actors()
            sent = self.engine.run_round(lambda c: self.step_point(c, False), "mm", actors)
            if sent == 0:
                return iterations
            self.engine.run_round(self.step_resolve_mutual, "mm", actors)
            iterations += 1


def matching_round(
    subgraph: Mapping[PlayerId, Iterable[PlayerId]], seed: int = 0
) -> MatchingRoundResult:
    """One randomized matching iteration; returns the matching found and the
    reduced graph (matched vertices and newly isolated vertices removed)."""
    graph = _normalize_graph(subgraph)
    run = _StandaloneRun(graph, seed)
    run.run_randomized(1)
    matching = _matching_from_nodes(run.nodes)
    unmatched = {v for v in graph if run.nodes[v].matched is None}
    reduced = {
        v: frozenset(u for u in graph[v] if u in unmatched)
        for v in unmatched
    }
    reduced = {v: nbrs for v, nbrs in reduced.items() if nbrs}
    return MatchingRoundResult(matching=matching, reduced=reduced, trace=run.engine.trace)


def randomized_maximal_matching(
    subgraph: Mapping[PlayerId, Iterable[PlayerId]], s: int, seed: int = 0
) -> SubroutineResult:
    """Union of s randomized matching iterations.

    If the residual empties the result is maximal; otherwise the violating
    vertex set is reported, not raised, since callers tolerate failure
    probabilistically.
    """
    if s < 1:
        raise ValueError("need s >= 1")
    graph = _normalize_graph(subgraph)
    run = _StandaloneRun(graph, seed)
    run.run_randomized(s)
    matching = _matching_from_nodes(run.nodes)
    violators = _violating_vertices(graph, run.nodes)
    return SubroutineResult(
        matching=matching,
        residual_vertices=violators,
        maximal=not violators,
        iterations=s,
        trace=run.engine.trace,
    )


def almost_maximal_matching(
    subgraph: Mapping[PlayerId, Iterable[PlayerId]],
    eta: float,
    delta: float,
    seed: int = 0,
    shrink_c: float = DEFAULT_SHRINK_C,
) -> SubroutineResult:
    """Run just enough iterations that at most an eta-fraction of vertices is
    left violating maximality, with probability at least 1 - delta."""
    s = iterations_for_almost_maximal(eta, delta, shrink_c)
    graph = _normalize_graph(subgraph)
    run = _StandaloneRun(graph, seed)
    run.run_randomized(s)
    matching = _matching_from_nodes(run.nodes)
    violators = _violating_vertices(graph, run.nodes)
    return SubroutineResult(
        matching=matching,
        residual_vertices=violators,
        maximal=not violators,
        iterations=s,
        trace=run.engine.trace,
    )


def deterministic_maximal_matching(
    subgraph: Mapping[PlayerId, Iterable[PlayerId]]
) -> SubroutineResult:
    """Lowest-id mutual-pointer greedy, iterated to quiescence. Always maximal."""
    graph = _normalize_graph(subgraph)
    run = _StandaloneRun(graph, seed=0)
    iterations = run.run_greedy()
    matching = _matching_from_nodes(run.nodes)
    violators = _violating_vertices(graph, run.nodes)
    if violators:
        raise InconsistentState(f"greedy subroutine left violators: {sorted(violators)}")
    return SubroutineResult(
        matching=matching,
        residual_vertices=violators,
        maximal=True,
        iterations=iterations,
        trace=run.engine.trace,
    )
