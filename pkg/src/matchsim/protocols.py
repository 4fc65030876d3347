"""The quantile proposal protocol family, run over the synchronous engine.

One proposal round works in five steps spread over engine rounds:

1. propose round: every man sends PROPOSE to each woman in his active set A.
2. accept round: each proposed-to woman ACCEPTs exactly the proposers in her
   best remaining quantile that contains a proposer.
3. subroutine phase: a maximal (or almost-maximal) matching is computed in
   the bipartite graph of accepted proposals, via message rounds.
4. reject round: each newly matched woman sends REJECT to every remaining
   man in a quantile no better than her new partner's, prunes them from her
   list, and records the partner; matched men clear A.
5. rejected men prune the rejecting women from their lists and active sets;
   a man rejected by his current partner becomes single. This step executes
   in the receive stage of the *following* engine round (the next propose
   round, or one trailing flush round at the end of the run), so a proposal
   round consumes 3 + rounds(subroutine) engine rounds.

The protocol schedule is fixed and known to all processors up front; the
engine executes every round of it, but stretches in which provably no
processor would send (no active sets, nothing in flight) are advanced
arithmetically instead of being stepped one by one. Round and message
counters are identical either way.

Runtime invariant checks (partner monotonicity, active-set emptiness after
each quantile match, good-man accounting) are enforced while running; checks
that are only guaranteed when the matching subroutine is exact are raised
under the deterministic subroutine and logged otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .engine import Engine, MsgKind, ProcessorContext, RoundTrace, Topology
from .errors import (
    InconsistentState,
    InvariantViolation,
    NotAlmostRegular,
    RoundCapExceeded,
)
from .maximal import MatchingSubroutineSpec, MmNode
from .model import (
    Matching,
    PlayerId,
    PreferenceProfile,
    QuantizedPrefs,
    Side,
    man,
    quantize,
    woman,
)


@dataclass(frozen=True)
class AsmParams:
    """Loop and quantization parameters derived from the target blocking budget.

    For budget fraction eps, preferences are split into k = ceil(8 / eps)
    quantiles, the tolerated bad-man fraction is delta = eps / 8, the degree
    ladder runs ceil(log2 n) + 1 rungs, and each rung repeats the quantile
    match ceil(2 k / delta) times.
    """

    eps: float
    n: int
    k: int
    delta: float
    inner_iterations: int
    outer_iterations: int

    def __post_init__(self):
        if not (0 < self.eps <= 1):
            raise ValueError(f"eps must be in (0, 1], got {self.eps}")
        if self.k < 8 or not (0 < self.delta <= 0.125):
            raise ValueError("derived parameters out of range (need k >= 8, 0 < delta <= 1/8)")

    @classmethod
    def for_instance(cls, eps: float, n: int) -> "AsmParams":
        if not (0 < eps <= 1):
            raise ValueError(f"eps must be in (0, 1], got {eps}")
        k = math.ceil(8 / eps)
        delta = eps / 8
        inner = math.ceil(2 * k / delta)
        outer = (math.ceil(math.log2(n)) if n > 1 else 0) + 1
        return cls(eps=eps, n=n, k=k, delta=delta, inner_iterations=inner, outer_iterations=outer)


def rand_mm_iterations(total_calls: int, num_vertices: int, delta_fail: float, shrink_c: float) -> int:
    """Per-invocation iteration count making every subroutine call succeed
    with probability >= 1 - delta_fail, by a union bound over all calls."""
    if total_calls < 1 or num_vertices < 1:
        raise ValueError("need total_calls >= 1 and num_vertices >= 1")
    if not (0 < delta_fail < 1) or not (0 < shrink_c < 1):
        raise ValueError("need 0 < delta_fail < 1 and 0 < shrink_c < 1")
    return max(1, math.ceil(math.log(total_calls * num_vertices / delta_fail) / math.log(1 / shrink_c)))


class ManState:
    __slots__ = ("quantized", "p", "A", "g0", "p0", "active", "removed", "mm", "a_entry")

    def __init__(self, quantized: QuantizedPrefs):
        self.quantized = quantized
        self.p: int | None = None
        self.A: set[int] = set()
        self.g0: set[int] = set()
        self.p0: int | None = None
        self.active = True
        self.removed = False
        self.mm: MmNode | None = None
        self.a_entry: frozenset[int] | None = None


class WomanState:
    __slots__ = ("quantized", "p", "g0", "p0", "removed", "mm")

    def __init__(self, quantized: QuantizedPrefs):
        self.quantized = quantized
        self.p: int | None = None
        self.g0: set[int] = set()
        self.p0: int | None = None
        self.removed = False
        self.mm: MmNode | None = None


@dataclass(frozen=True)
class PlayerFinal:
    """Post-run snapshot of one player, for verification."""

    partner: int | None
    remaining: frozenset[int]
    removed: bool


@dataclass(frozen=True)
class OuterRecord:
    """Bad-man accounting at the end of one rung of the degree ladder."""

    index: int
    active_men: int
    bad_active_men: int
    bound: float
    passed: bool


@dataclass(frozen=True)
class RunResult:
    """Everything a run produces: the matching, round/message accounting,
    final player states, per-rung records, and any logged check failures."""

    algorithm: str
    matching: Matching
    trace: RoundTrace
    men: tuple[PlayerFinal, ...]
    women: tuple[PlayerFinal, ...]
    params: AsmParams | None
    outer_records: tuple[OuterRecord, ...]
    mm_failures: int
    violations: tuple[str, ...]


class QuantileProtocol:
    """One run of the proposal machinery in one of three modes.

    * ``ladder``: the full doubly nested loop; men whose remaining list has
      at least 2^i entries participate in rung i.
    * ``flat``: a fixed number of quantile matches with every man eligible
      throughout; players the subroutine leaves unmatched in an accepted
      graph are removed from play.
    * ``serial``: per-player singleton quantiles iterated to quiescence,
      which reduces the machinery to classical deferred acceptance.
    """

    def __init__(
        self,
        profile: PreferenceProfile,
        mode: str,
        mm_spec: MatchingSubroutineSpec,
        params: AsmParams | None = None,
        flat_quantile_matches: int | None = None,
        seed: int = 0,
        round_cap: int | None = None,
        strict: bool = True,
        message_log: list | None = None,
        algorithm_label: str = "",
        fast_forward: bool = True,
    ):
        if mode not in ("ladder", "flat", "serial"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode in ("ladder", "flat") and params is None:
            raise ValueError("ladder and flat modes need params")
        if mode == "flat" and flat_quantile_matches is None:
            raise ValueError("flat mode needs a quantile match count")
        self.profile = profile
        self.mode = mode
        self.mm_spec = mm_spec
        self.params = params
        self.flat_quantile_matches = flat_quantile_matches
        self.seed = seed
        self.round_cap = round_cap
        self.strict = strict
        self.message_log = message_log
        self.algorithm_label = algorithm_label
        # with fast_forward off every scheduled round is stepped one by one;
        # counters and outcomes must be identical either way (tested)
        self.fast_forward = fast_forward

        n = profile.n
        self._man_ids = [man(i) for i in range(n)]
        self._woman_ids = [woman(i) for i in range(n)]
        if mode == "serial":
            self.men = [ManState(quantize(lst, max(1, len(lst)))) for lst in profile.men_prefs]
            self.women = [WomanState(quantize(lst, max(1, len(lst)))) for lst in profile.women_prefs]
        else:
            k = params.k
            self.men = [ManState(quantize(lst, k)) for lst in profile.men_prefs]
            self.women = [WomanState(quantize(lst, k)) for lst in profile.women_prefs]

        # guarantees that lean on subroutine exactness are only enforced
        # (raised) when the subroutine is the deterministic greedy
        self._strict_qm = strict and mm_spec.flavor == "det"
        fixed = mm_spec.fixed_iterations()
        self._mm_silent_rounds = 0 if fixed is None else 4 * fixed
        self._mm_fixed_s = fixed

        self.good_count = sum(1 for st in self.men if not st.quantized.remaining)
        self._last_good_count = self.good_count
        self._frozen_active: list[int] = list(range(n))
        self._participants: list[PlayerId] = []
        self._pr_mm_failed = False

        self.pr_count = 0
        self.qm_count = 0
        self.mm_calls = 0
        self.mm_failures = 0
        self.outer_records: list[OuterRecord] = []
        self.violations: list[str] = []
        self.engine: Engine | None = None

    # ------------------------------------------------------------------
    # plumbing

    def _state(self, pid: PlayerId):
        return self.men[pid.index] if pid.side is Side.MAN else self.women[pid.index]

    def _violate(self, msg: str, structural: bool = False) -> None:
        if structural or self._strict_qm:
            raise InvariantViolation(msg)
        self.violations.append(msg)

    def _inbox_by_kind(self, ctx: ProcessorContext, *kinds: MsgKind) -> dict[MsgKind, list[PlayerId]]:
        out: dict[MsgKind, list[PlayerId]] = {k: [] for k in kinds}
        for sender, msg in ctx.inbox:
            bucket = out.get(msg.kind)
            if bucket is None:
                raise InconsistentState(f"{ctx.self_id} received unexpected {msg.kind.name}")
            bucket.append(sender)
        return out

    # ------------------------------------------------------------------
    # step functions (strictly local: own state + inbox only)

    def _settle_man(self, st: ManState, ctx: ProcessorContext) -> None:
        """Process rejections delivered since the man's last step."""
        for sender, msg in ctx.inbox:
            if msg.kind is not MsgKind.REJECT:
                raise InconsistentState(f"{ctx.self_id} received {msg.kind.name} while settling")
            w_idx = sender.index
            if w_idx not in st.quantized.remaining:
                raise InconsistentState(f"{ctx.self_id} rejected twice by {sender}")
            was_good = st.p is not None
            st.quantized.remove(w_idx)
            st.A.discard(w_idx)
            if st.p == w_idx:
                st.p = None
            now_good = st.p is not None or not st.quantized.remaining
            self.good_count += int(now_good) - int(was_good)

    def _close_quantile_match_for(self, idx: int, st: ManState) -> None:
        """Checks due when a quantile match ends (run post-settle)."""
        if st.A:
            self._violate(f"man {idx} exits a quantile match with nonempty active set {sorted(st.A)}")
            st.A = set()
        if st.a_entry is not None:
            matched_inside = st.p is not None and st.p in st.a_entry
            fully_rejected = not (st.a_entry & st.quantized.remaining)
            if not (matched_inside or fully_rejected):
                self._violate(
                    f"man {idx} neither matched inside his entering active set nor rejected by all of it"
                )
            st.a_entry = None

    def _step_propose(self, ctx: ProcessorContext, qm_start: bool, outer_index: int | None) -> None:
        pid = ctx.self_id
        if pid.side is Side.WOMAN:
            if ctx.inbox:
                raise InconsistentState(f"{pid} received messages in a propose round")
            return
        st = self.men[pid.index]
        self._settle_man(st, ctx)
        if outer_index is not None:
            st.active = len(st.quantized.remaining) >= (1 << outer_index)
        if qm_start:
            self._close_quantile_match_for(pid.index, st)
            if st.active and not st.removed and st.p is None:
                bucket = st.quantized.best_nonempty_bucket()
                if bucket:
                    st.A = set(bucket)
                    st.a_entry = frozenset(bucket)
        if st.A:
            for w_idx in sorted(st.A):
                ctx.send(self._woman_ids[w_idx], MsgKind.PROPOSE)

    def _step_accept(self, ctx: ProcessorContext) -> None:
        pid = ctx.self_id
        if pid.side is Side.MAN:
            if ctx.inbox:
                raise InconsistentState(f"{pid} received messages in an accept round")
            return
        st = self.women[pid.index]
        proposers: list[int] = []
        for sender, msg in ctx.inbox:
            if msg.kind is not MsgKind.PROPOSE:
                raise InconsistentState(f"{pid} received {msg.kind.name} in an accept round")
            if sender.index not in st.quantized.remaining:
                raise InconsistentState(f"{pid} got a proposal from pruned {sender}")
            proposers.append(sender.index)
        if not proposers:
            return
        if st.removed:
            raise InconsistentState(f"removed {pid} received a proposal")
        best = min(st.quantized.quantile(m) for m in proposers)
        if st.p is not None and best >= st.quantized.quantile(st.p):
            self._violate(
                f"woman {pid.index} saw best proposing quantile {best}, no better than her partner's",
                structural=True,
            )
        accepted = sorted(m for m in proposers if st.quantized.quantile(m) == best)
        st.g0 = set(accepted)
        self._participants.append(pid)
        for m_idx in accepted:
            ctx.send(self._man_ids[m_idx], MsgKind.ACCEPT)

    def _step_mm_point(self, ctx: ProcessorContext, randomized: bool) -> None:
        pid = ctx.self_id
        st = self._state(pid)
        kinds = self._inbox_by_kind(ctx, MsgKind.ACCEPT, MsgKind.MM_MATCHED)
        accepts = kinds[MsgKind.ACCEPT]
        if accepts:
            if pid.side is not Side.MAN:
                raise InconsistentState(f"{pid} received ACCEPT")
            for sender in accepts:
                if sender.index not in st.A:
                    raise InconsistentState(f"{pid} got ACCEPT from {sender} for an unsent proposal")
            st.g0 = {s.index for s in accepts}
            st.mm = MmNode(accepts)
            self._participants.append(pid)
        node = st.mm
        if node is None:
            if pid.side is Side.WOMAN and st.g0:
                node = st.mm = MmNode([self._man_ids[m] for m in sorted(st.g0)])
            elif kinds[MsgKind.MM_MATCHED]:
                raise InconsistentState(f"{pid} got a match announcement outside the subroutine")
            else:
                return
        node.prune(kinds[MsgKind.MM_MATCHED])
        node.begin_iteration()
        target = node.point_random(ctx.rng) if randomized else node.point_lowest()
        if target is not None:
            ctx.send(target, MsgKind.MM_POINT)

    def _step_mm_keep(self, ctx: ProcessorContext) -> None:
        node = self._state(ctx.self_id).mm
        pointers = self._inbox_by_kind(ctx, MsgKind.MM_POINT)[MsgKind.MM_POINT]
        if node is None:
            if pointers:
                raise InconsistentState(f"{ctx.self_id} pointed at outside the subroutine")
            return
        kept = node.keep_random(pointers, ctx.rng)
        if kept is not None:
            ctx.send(kept, MsgKind.MM_KEEP)

    def _step_mm_choose(self, ctx: ProcessorContext) -> None:
        node = self._state(ctx.self_id).mm
        keepers = self._inbox_by_kind(ctx, MsgKind.MM_KEEP)[MsgKind.MM_KEEP]
        if node is None:
            if keepers:
                raise InconsistentState(f"{ctx.self_id} got MM_KEEP outside the subroutine")
            return
        choice = node.choose_random(keepers, ctx.rng)
        if choice is not None:
            ctx.send(choice, MsgKind.MM_CHOOSE)

    def _step_mm_resolve(self, ctx: ProcessorContext, randomized: bool) -> None:
        st = self._state(ctx.self_id)
        node = st.mm
        if randomized:
            senders = self._inbox_by_kind(ctx, MsgKind.MM_CHOOSE)[MsgKind.MM_CHOOSE]
        else:
            senders = self._inbox_by_kind(ctx, MsgKind.MM_POINT)[MsgKind.MM_POINT]
        if node is None:
            if senders:
                raise InconsistentState(f"{ctx.self_id} got subroutine traffic without a node")
            return
        partner = node.resolve_choices(senders) if randomized else node.resolve_mutual(senders)
        if partner is not None:
            st.p0 = partner.index
            for u in sorted(node.residual):
                ctx.send(u, MsgKind.MM_MATCHED)

    def _step_reject(self, ctx: ProcessorContext) -> None:
        pid = ctx.self_id
        st = self._state(pid)
        announcers = self._inbox_by_kind(ctx, MsgKind.MM_MATCHED)[MsgKind.MM_MATCHED]
        node = st.mm
        if node is not None:
            node.prune(announcers)
        elif announcers:
            raise InconsistentState(f"{pid} got a match announcement outside the subroutine")
        residual_here = node is not None and node.matched is None and bool(node.residual)
        if residual_here:
            if self.mm_spec.flavor == "det":
                raise InconsistentState(f"greedy subroutine left {pid} with residual neighbors")
            self._pr_mm_failed = True
        # only players with no partner at all leave the game; a matched woman
        # the subroutine failed to upgrade simply keeps her current partner
        removed_now = residual_here and self.mm_spec.removes_unmatched() and st.p is None
        if pid.side is Side.WOMAN:
            if st.p0 is not None:
                q0 = st.quantized.quantile(st.p0)
                if st.p is not None:
                    if st.p == st.p0:
                        raise InconsistentState(f"woman {pid.index} re-matched to her current partner")
                    if q0 >= st.quantized.quantile(st.p):
                        self._violate(
                            f"woman {pid.index} partner quantile did not strictly improve",
                            structural=True,
                        )
                targets = [m for m in st.quantized.at_or_worse(q0) if m != st.p0]
                for m_idx in targets:
                    ctx.send(self._man_ids[m_idx], MsgKind.REJECT)
                for m_idx in targets:
                    st.quantized.remove(m_idx)
                st.p = st.p0
            elif removed_now:
                targets = sorted(st.quantized.remaining)
                for m_idx in targets:
                    ctx.send(self._man_ids[m_idx], MsgKind.REJECT)
                for m_idx in targets:
                    st.quantized.remove(m_idx)
                st.removed = True
        else:
            mst: ManState = st
            if mst.p0 is not None:
                was_good = mst.p is not None or not mst.quantized.remaining
                mst.p = mst.p0
                mst.A = set()
                self.good_count += 1 - int(was_good)
            elif removed_now:
                mst.removed = True
                mst.A = set()
        st.g0 = set()
        st.p0 = None
        st.mm = None

    def _step_flush(self, ctx: ProcessorContext) -> None:
        if ctx.self_id.side is Side.MAN:
            self._settle_man(self.men[ctx.self_id.index], ctx)
        elif ctx.inbox:
            raise InconsistentState(f"{ctx.self_id} had messages at flush")

    # ------------------------------------------------------------------
    # schedule orchestration (simulator-global; never mutates player state)

    def _any_A(self) -> bool:
        return any(st.A for st in self.men)

    def _any_assignable(self, ignore_active: bool = False) -> bool:
        return any(
            (ignore_active or st.active) and not st.removed and st.p is None and st.quantized.remaining
            for st in self.men
        )

    def _mm_any_live(self) -> bool:
        for pid in self._participants:
            node = self._state(pid).mm
            if node is not None and node.live:
                return True
        return False

    def _propose_actors(self, qm_start: bool, outer_index: int | None) -> list[PlayerId]:
        if outer_index is not None:
            return list(self._man_ids)
        out = []
        for i, st in enumerate(self.men):
            if st.A or (qm_start and (st.a_entry is not None or (not st.removed and st.p is None and st.quantized.remaining))):
                out.append(self._man_ids[i])
        return out

    def _after_qm_boundary(self) -> None:
        if self.good_count < self._last_good_count:
            self._violate(
                f"good-man count decreased from {self._last_good_count} to {self.good_count}",
                structural=True,
            )
        self._last_good_count = self.good_count

    def _proposal_round(self, eng: Engine, qm_start: bool, outer_index: int | None) -> None:
        self.pr_count += 1
        self._participants = []
        self._pr_mm_failed = False
        actors = self._propose_actors(qm_start, outer_index)
        eng.run_round(lambda c: self._step_propose(c, qm_start, outer_index), "propose", actors)
        if outer_index is not None:
            self._frozen_active = [i for i, st in enumerate(self.men) if st.active]
        if qm_start:
            self._after_qm_boundary()
        accepted = eng.run_round(self._step_accept, "accept", actors=())
        self._run_mm_phase(eng, had_accepts=accepted > 0)
        eng.run_round(self._step_reject, "reject", actors=self._participants)
        if self._pr_mm_failed:
            self.mm_failures += 1

    def _run_mm_phase(self, eng: Engine, had_accepts: bool) -> None:
        if self.mm_spec.flavor == "det":
            if not had_accepts:
                return
            self.mm_calls += 1
            while True:
                sent = eng.run_round(
                    lambda c: self._step_mm_point(c, False), "mm", list(self._participants)
                )
                if sent == 0:
                    return
                eng.run_round(
                    lambda c: self._step_mm_resolve(c, False), "mm", list(self._participants)
                )
        else:
            s = self._mm_fixed_s
            if had_accepts:
                self.mm_calls += 1
            for it in range(s):
                if self.fast_forward and eng.in_flight == 0 and not self._mm_any_live():
                    eng.skip_rounds("mm", 4 * (s - it))
                    return
                # participant list grows during the first point round (men
                # join on receiving acceptances), so recompute per round
                eng.run_round(lambda c: self._step_mm_point(c, True), "mm", list(self._participants))
                eng.run_round(self._step_mm_keep, "mm", list(self._participants))
                eng.run_round(self._step_mm_choose, "mm", list(self._participants))
                eng.run_round(lambda c: self._step_mm_resolve(c, True), "mm", list(self._participants))

    def _skip_proposal_rounds(self, eng: Engine, count: int) -> None:
        if count <= 0:
            return
        eng.skip_rounds("propose", count)
        eng.skip_rounds("accept", count)
        if self._mm_silent_rounds:
            eng.skip_rounds("mm", self._mm_silent_rounds * count)
        eng.skip_rounds("reject", count)
        self.pr_count += count

    def _quantile_match(self, eng: Engine, outer_index: int | None) -> None:
        self.qm_count += 1
        k = self.params.k
        for r in range(k):
            if self.fast_forward and r > 0 and eng.in_flight == 0 and not self._any_A():
                self._skip_proposal_rounds(eng, k - r)
                break
            self._proposal_round(eng, qm_start=(r == 0), outer_index=(outer_index if r == 0 else None))

    def _skip_quantile_matches(self, eng: Engine, count: int) -> None:
        if count <= 0:
            return
        self._skip_proposal_rounds(eng, count * self.params.k)
        self.qm_count += count

    # -- bad-man accounting at ladder rung boundaries ----------------------

    def _settled_bad_men(self, eng: Engine, candidates: Iterable[int]) -> int:
        """Count bad men among candidates as of the settled state, i.e. with
        in-flight rejections applied. Read-only instrumentation."""
        pending: dict[int, set[int]] = {}
        for to, sender, msg in eng.peek_pending():
            if msg.kind is MsgKind.REJECT and to.side is Side.MAN:
                pending.setdefault(to.index, set()).add(sender.index)
        bad = 0
        for m_idx in candidates:
            st = self.men[m_idx]
            gone = pending.get(m_idx, ())
            partner = st.p
            if partner is not None and partner in gone:
                partner = None
            remaining = len(st.quantized.remaining) - len(gone)
            if partner is None and remaining > 0:
                bad += 1
        return bad

    def _record_outer(self, eng: Engine, index: int, active: list[int]) -> None:
        bad = self._settled_bad_men(eng, active)
        bound = self.params.delta * len(active)
        passed = bad <= bound + 1e-9
        self.outer_records.append(
            OuterRecord(index=index, active_men=len(active), bad_active_men=bad, bound=bound, passed=passed)
        )
        if not passed:
            self._violate(
                f"rung {index}: {bad} bad men among {len(active)} active exceeds {bound:g}"
            )

    # ------------------------------------------------------------------
    # top-level schedules

    def _run_ladder(self, eng: Engine) -> None:
        p = self.params
        for i in range(p.outer_iterations):
            if self.fast_forward and eng.in_flight == 0 and not self._any_assignable(ignore_active=True):
                active = [m for m, st in enumerate(self.men) if len(st.quantized.remaining) >= (1 << i)]
                self._skip_quantile_matches(eng, p.inner_iterations)
                self._record_outer(eng, i, active)
                continue
            for j in range(p.inner_iterations):
                if self.fast_forward and j > 0 and eng.in_flight == 0 and not self._any_assignable():
                    self._skip_quantile_matches(eng, p.inner_iterations - j)
                    break
                self._quantile_match(eng, outer_index=(i if j == 0 else None))
            self._record_outer(eng, i, list(self._frozen_active))

    def _run_flat(self, eng: Engine) -> None:
        total = self.flat_quantile_matches
        for j in range(total):
            if self.fast_forward and eng.in_flight == 0 and not self._any_assignable():
                self._skip_quantile_matches(eng, total - j)
                break
            self._quantile_match(eng, outer_index=None)

    def _run_serial(self, eng: Engine) -> None:
        while True:
            actors = self._propose_actors(qm_start=True, outer_index=None)
            sent = eng.run_round(lambda c: self._step_propose(c, True, None), "propose", actors)
            if sent == 0 and eng.in_flight == 0:
                break
            self.pr_count += 1
            self._participants = []
            self._pr_mm_failed = False
            accepted = eng.run_round(self._step_accept, "accept", actors=())
            self._run_mm_phase(eng, had_accepts=accepted > 0)
            eng.run_round(self._step_reject, "reject", actors=self._participants)

    def _flush(self, eng: Engine) -> None:
        if eng.in_flight:
            eng.run_round(self._step_flush, "flush", actors=())
        for idx, st in enumerate(self.men):
            self._close_quantile_match_for(idx, st)
        self._after_qm_boundary()

    def _assemble(self, eng: Engine, partial: bool = False) -> RunResult:
        pairs = []
        for w_idx, st in enumerate(self.women):
            if st.p is not None:
                if not partial and self.men[st.p].p != w_idx:
                    raise InconsistentState(
                        f"woman {w_idx} holds man {st.p} but he holds {self.men[st.p].p}"
                    )
                pairs.append((st.p, w_idx))
        eng.trace.extras.update(
            {
                "proposal_rounds": self.pr_count,
                "quantile_matches": self.qm_count,
                "mm_invocations": self.mm_calls,
                "mm_failures": self.mm_failures,
            }
        )
        return RunResult(
            algorithm=self.algorithm_label,
            matching=Matching.of(pairs),
            trace=eng.trace,
            men=tuple(
                PlayerFinal(st.p, frozenset(st.quantized.remaining), st.removed) for st in self.men
            ),
            women=tuple(
                PlayerFinal(st.p, frozenset(st.quantized.remaining), st.removed) for st in self.women
            ),
            params=self.params,
            outer_records=tuple(self.outer_records),
            mm_failures=self.mm_failures,
            violations=tuple(self.violations),
        )

    def run(self) -> RunResult:
        eng = Engine(
            Topology.from_profile(self.profile),
            seed=self.seed,
            round_cap=self.round_cap,
            message_log=self.message_log,
        )
        self.engine = eng
        try:
            if self.mode == "ladder":
                self._run_ladder(eng)
            elif self.mode == "flat":
                self._run_flat(eng)
            else:
                self._run_serial(eng)
            self._flush(eng)
        except RoundCapExceeded as exc:
            exc.partial = self._assemble(eng, partial=True)
            raise
        return self._assemble(eng)


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------


def asm(
    profile: PreferenceProfile,
    eps: float,
    mm_spec: MatchingSubroutineSpec | None = None,
    seed: int = 0,
    round_cap: int | None = None,
    strict: bool = True,
    message_log: list | None = None,
) -> RunResult:
    """Deterministic almost-stable matching: at most eps * |E| blocking pairs."""
    params = AsmParams.for_instance(eps, profile.n)
    spec = mm_spec or MatchingSubroutineSpec.deterministic()
    proto = QuantileProtocol(
        profile,
        mode="ladder",
        mm_spec=spec,
        params=params,
        seed=seed,
        round_cap=round_cap,
        strict=strict,
        message_log=message_log,
        algorithm_label=f"asm:{eps:g}" + ("" if spec.flavor == "det" else f"/{spec.describe()}"),
    )
    return proto.run()


def rand_asm(
    profile: PreferenceProfile,
    eps: float,
    delta_fail: float,
    seed: int = 0,
    round_cap: int | None = None,
    shrink_c: float = 0.95,
    message_log: list | None = None,
) -> RunResult:
    """Randomized variant: (1 - eps)-stable with probability >= 1 - delta_fail.

    The subroutine iteration count is sized so that, by a union bound over
    every subroutine invocation the schedule can make, all of them produce a
    maximal matching with probability at least 1 - delta_fail.
    """
    params = AsmParams.for_instance(eps, profile.n)
    total_calls = params.outer_iterations * params.inner_iterations * params.k
    s = rand_mm_iterations(total_calls, 2 * profile.n, delta_fail, shrink_c)
    spec = MatchingSubroutineSpec.randomized(s, shrink_c)
    proto = QuantileProtocol(
        profile,
        mode="ladder",
        mm_spec=spec,
        params=params,
        seed=seed,
        round_cap=round_cap,
        strict=False,
        message_log=message_log,
        algorithm_label=f"randasm:{eps:g},{delta_fail:g}",
    )
    return proto.run()


def men_degree_ratio(profile: PreferenceProfile) -> float:
    degs = profile.men_degrees()
    lo = min(degs)
    hi = max(degs)
    if lo == 0:
        return math.inf
    return hi / lo


def almost_regular_asm(
    profile: PreferenceProfile,
    eps: float,
    delta_fail: float,
    alpha: float,
    seed: int = 0,
    round_cap: int | None = None,
    shrink_c: float = 0.95,
    message_log: list | None = None,
) -> RunResult:
    """Constant-round variant for men's degree spread bounded by alpha.

    Skips the degree ladder entirely: a fixed ceil(8 alpha k / eps) quantile
    matches with an almost-maximal subroutine, whose stragglers leave the
    game immediately.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    ratio = men_degree_ratio(profile)
    if ratio > alpha:
        raise NotAlmostRegular(ratio, alpha)
    params = AsmParams.for_instance(eps, profile.n)
    qm_total = math.ceil(8 * alpha * params.k / eps)
    total_calls = qm_total * params.k
    eta = eps**4 / (64 * alpha)
    delta_prime = delta_fail / total_calls
    spec = MatchingSubroutineSpec.almost_maximal(eta, delta_prime, shrink_c)
    proto = QuantileProtocol(
        profile,
        mode="flat",
        mm_spec=spec,
        params=params,
        flat_quantile_matches=qm_total,
        seed=seed,
        round_cap=round_cap,
        strict=False,
        message_log=message_log,
        algorithm_label=f"aregasm:{eps:g},{delta_fail:g},{alpha:g}",
    )
    return proto.run()


def gale_shapley_distributed(
    profile: PreferenceProfile,
    seed: int = 0,
    round_cap: int | None = None,
    message_log: list | None = None,
) -> RunResult:
    """Per-player singleton quantiles iterated to quiescence: classical
    deferred acceptance run through the same machinery. Output is stable.

    The default cap allows n^2 + n proposal iterations; each iteration costs
    six engine rounds (propose, accept, three subroutine rounds, reject).
    """
    if round_cap is None:
        round_cap = 6 * (profile.n * profile.n + profile.n) + 8
    proto = QuantileProtocol(
        profile,
        mode="serial",
        mm_spec=MatchingSubroutineSpec.deterministic(),
        seed=seed,
        round_cap=round_cap,
        strict=True,
        message_log=message_log,
        algorithm_label="gs",
    )
    return proto.run()


@dataclass(frozen=True)
class AlgorithmSpec:
    """Parsed form of CLI algorithm descriptors.

    ``gs``, ``asm:EPS``, ``randasm:EPS,DELTA``, ``aregasm:EPS,DELTA,ALPHA``,
    optionally with a subroutine override.
    """

    name: str
    eps: float | None = None
    delta_fail: float | None = None
    alpha: float | None = None
    mm: MatchingSubroutineSpec | None = None

    def __post_init__(self):
        if self.name not in ("gs", "asm", "randasm", "aregasm"):
            raise ValueError(f"unknown algorithm {self.name!r}")

    @classmethod
    def parse(cls, text: str, mm: MatchingSubroutineSpec | None = None) -> "AlgorithmSpec":
        head, _, rest = text.partition(":")
        args = [float(x) for x in rest.split(",")] if rest else []
        if head == "gs":
            return cls(name="gs", mm=mm)
        if head == "asm" and len(args) == 1:
            return cls(name="asm", eps=args[0], mm=mm)
        if head == "randasm" and len(args) == 2:
            return cls(name="randasm", eps=args[0], delta_fail=args[1], mm=mm)
        if head == "aregasm" and len(args) == 3:
            return cls(name="aregasm", eps=args[0], delta_fail=args[1], alpha=args[2], mm=mm)
        raise ValueError(f"cannot parse algorithm descriptor {text!r}")

    def describe(self) -> str:
        if self.name == "gs":
            return "gs"
        if self.name == "asm":
            return f"asm:{self.eps:g}"
        if self.name == "randasm":
            return f"randasm:{self.eps:g},{self.delta_fail:g}"
        return f"aregasm:{self.eps:g},{self.delta_fail:g},{self.alpha:g}"


def run_algorithm(
    profile: PreferenceProfile,
    algorithm: AlgorithmSpec | str,
    seed: int = 0,
    round_cap: int | None = None,
    message_log: list | None = None,
) -> RunResult:
    """Execute any protocol of the family from its descriptor."""
    spec = AlgorithmSpec.parse(algorithm) if isinstance(algorithm, str) else algorithm
    if spec.name == "gs":
        return gale_shapley_distributed(profile, seed=seed, round_cap=round_cap, message_log=message_log)
    if spec.name == "asm":
        return asm(
            profile,
            spec.eps,
            mm_spec=spec.mm,
            seed=seed,
            round_cap=round_cap,
            strict=spec.mm is None or spec.mm.flavor == "det",
            message_log=message_log,
        )
    if spec.name == "randasm":
        if spec.mm is not None:
            params = AsmParams.for_instance(spec.eps, profile.n)
            proto = QuantileProtocol(
                profile,
                mode="ladder",
                mm_spec=spec.mm,
                params=params,
                seed=seed,
                round_cap=round_cap,
                strict=False,
                message_log=message_log,
                algorithm_label=spec.describe() + f"/{spec.mm.describe()}",
            )
            return proto.run()
        return rand_asm(profile, spec.eps, spec.delta_fail, seed=seed, round_cap=round_cap, message_log=message_log)
    return almost_regular_asm(
        profile, spec.eps, spec.delta_fail, spec.alpha, seed=seed, round_cap=round_cap, message_log=message_log
    )
