"""Ground-truth verification: blocking-pair counting, stability and
maximality checks, good/bad classification, a centralized deferred-acceptance
oracle, and the statistical helpers used for randomized claims.

Conventions match the protocol side: ranks are 1-based and an unmatched
player ranks at deg + 1, i.e. below every acceptable partner, so an
unmatched player prefers anyone acceptable.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import InvalidMatching
from .model import Matching, PlayerId, PreferenceProfile, man, woman
from .protocols import PlayerFinal, RunResult

# Claim identifiers, used as keys in reports and as CSV column stems.
CLAIM_TOTAL_BLOCKING = "thm41"  # blocking pairs <= eps * |E|
CLAIM_GOOD_MEN_CLEAN = "lemma42"  # no tight blocking pair touches a good man
CLAIM_LOOSE_BLOCKING = "lemma43"  # loose blocking pairs <= 4 |E| / k
CLAIM_BAD_MEN_BUDGET = "lemma44"  # tight blocking pairs at bad men <= 4 delta |E|
CLAIM_BAD_FRACTION = "lemma45"  # per-rung bad fraction among active men <= delta
CLAIM_BAD_MEN_LOCAL = "lemma47"  # a bad man's tight blocking partners sit on his remaining list


def _partner_ranks(profile: PreferenceProfile, matching: Matching):
    """Per-player rank of the assigned partner, with unmatched at deg + 1."""
    man_rank = profile._man_rank
    woman_rank = profile._woman_rank
    mp = matching.man_partner
    wp = matching.woman_partner
    man_cur = [
        man_rank[m][mp[m]] if m in mp else len(profile.men_prefs[m]) + 1 for m in range(profile.n)
    ]
    woman_cur = [
        woman_rank[w][wp[w]] if w in wp else len(profile.women_prefs[w]) + 1 for w in range(profile.n)
    ]
    return man_cur, woman_cur


def blocking_pairs(profile: PreferenceProfile, matching: Matching) -> list[tuple[int, int]]:
    """All edges (m, w) outside the matching that both endpoints prefer to
    their assigned partners. Exact enumeration over the edge set."""
    matching.validate_for(profile)
    man_cur, woman_cur = _partner_ranks(profile, matching)
    man_rank = profile._man_rank
    woman_rank = profile._woman_rank
    in_m = matching.pairs
    out = []
    for m_idx, lst in enumerate(profile.men_prefs):
        for r, w_idx in enumerate(lst):
            if (m_idx, w_idx) in in_m:
                continue
            if r + 1 < man_cur[m_idx] and woman_rank[w_idx][m_idx] < woman_cur[w_idx]:
                out.append((m_idx, w_idx))
    return out


def count_blocking_pairs(profile: PreferenceProfile, matching: Matching) -> int:
    return len(blocking_pairs(profile, matching))


def is_eps_blocking(
    profile: PreferenceProfile, matching: Matching, edge: tuple[int, int], eps: float
) -> bool:
    """True when both endpoints of the edge improve on their assigned partner
    by at least an eps-fraction of their own list length."""
    m_idx, w_idx = edge
    if not profile.is_edge(m_idx, w_idx):
        raise InvalidMatching(f"({m_idx}, {w_idx}) is not an edge of the instance")
    man_cur, woman_cur = _partner_ranks(profile, matching)
    gap_m = man_cur[m_idx] - profile._man_rank[m_idx][w_idx]
    gap_w = woman_cur[w_idx] - profile._woman_rank[w_idx][m_idx]
    return gap_m >= eps * len(profile.men_prefs[m_idx]) and gap_w >= eps * len(
        profile.women_prefs[w_idx]
    )


def eps_blocking_pairs(
    profile: PreferenceProfile, matching: Matching, eps: float
) -> list[tuple[int, int]]:
    """All edges satisfying the eps-blocking inequalities at threshold eps."""
    matching.validate_for(profile)
    man_cur, woman_cur = _partner_ranks(profile, matching)
    man_rank = profile._man_rank
    woman_rank = profile._woman_rank
    out = []
    for m_idx, lst in enumerate(profile.men_prefs):
        deg_m = len(lst)
        need_m = eps * deg_m
        for r, w_idx in enumerate(lst):
            if man_cur[m_idx] - (r + 1) < need_m:
                continue
            if woman_cur[w_idx] - woman_rank[w_idx][m_idx] >= eps * len(profile.women_prefs[w_idx]):
                out.append((m_idx, w_idx))
    return out


def classify_good_bad(men: Sequence[PlayerFinal]) -> tuple[set[int], set[int]]:
    """Good men are matched or have exhausted their list; the rest are bad."""
    good = {i for i, st in enumerate(men) if st.partner is not None or not st.remaining}
    bad = set(range(len(men))) - good
    return good, bad


@dataclass(frozen=True)
class MaximalityReport:
    maximal: bool
    violators: frozenset[PlayerId]
    violation_fraction: float


def check_maximal(
    subgraph: Mapping[PlayerId, Iterable[PlayerId]], matching: Matching
) -> MaximalityReport:
    """A matching is maximal when every vertex is matched or has only matched
    neighbors. Violators satisfy neither condition."""
    graph = {v: set(nbrs) for v, nbrs in subgraph.items()}
    matched: set[PlayerId] = set()
    for m_idx, w_idx in matching.pairs:
        mv, wv = man(m_idx), woman(w_idx)
        if mv not in graph or wv not in graph[mv]:
            raise InvalidMatching(f"pair ({m_idx}, {w_idx}) is not an edge of the subgraph")
        matched.add(mv)
        matched.add(wv)
    violators = frozenset(
        v for v, nbrs in graph.items() if v not in matched and any(u not in matched for u in nbrs)
    )
    fraction = len(violators) / len(graph) if graph else 0.0
    return MaximalityReport(
        maximal=not violators, violators=violators, violation_fraction=fraction
    )


def gale_shapley_oracle(profile: PreferenceProfile) -> Matching:
    """Classical sequential man-proposing deferred acceptance (man-optimal)."""
    n = profile.n
    woman_rank = profile._woman_rank
    next_choice = [0] * n
    holds: dict[int, int] = {}
    free = deque(m for m in range(n) if profile.men_prefs[m])
    while free:
        m = free.popleft()
        lst = profile.men_prefs[m]
        while next_choice[m] < len(lst):
            w = lst[next_choice[m]]
            next_choice[m] += 1
            current = holds.get(w)
            if current is None:
                holds[w] = m
                break
            if woman_rank[w][m] < woman_rank[w][current]:
                holds[w] = m
                free.append(current)
                break
        # list exhausted: m stays unmatched
    return Matching.of((m, w) for w, m in holds.items())


@dataclass(frozen=True)
class BoundCheck:
    bound: float
    observed: float
    passed: bool


@dataclass
class VerificationReport:
    """Blocking-pair accounting for one run, plus pass/fail per claimed bound."""

    algorithm: str
    n: int
    edges: int
    eps: float | None
    k: int | None
    delta: float | None
    blocking: list[tuple[int, int]] = field(default_factory=list)
    tight_threshold: float | None = None  # 2 / k
    tight_blocking: list[tuple[int, int]] = field(default_factory=list)
    good_men: frozenset[int] = frozenset()
    bad_men: frozenset[int] = frozenset()
    bounds: dict[str, BoundCheck] = field(default_factory=dict)

    @property
    def blocking_pairs(self) -> int:
        return len(self.blocking)

    @property
    def tight_blocking_pairs(self) -> int:
        return len(self.tight_blocking)

    @property
    def loose_blocking_pairs(self) -> int:
        return len(self.blocking) - len(self.tight_blocking)

    def all_passed(self) -> bool:
        return all(c.passed for c in self.bounds.values())

    def to_json(self) -> str:
        return json.dumps(
            {
                "algorithm": self.algorithm,
                "n": self.n,
                "edges": self.edges,
                "eps": self.eps,
                "k": self.k,
                "delta": self.delta,
                "blocking_pairs": self.blocking_pairs,
                "tight_threshold": self.tight_threshold,
                "tight_blocking_pairs": self.tight_blocking_pairs,
                "loose_blocking_pairs": self.loose_blocking_pairs,
                "good_men": sorted(self.good_men),
                "bad_men": sorted(self.bad_men),
                "bounds": {
                    k: {"bound": c.bound, "observed": c.observed, "passed": c.passed}
                    for k, c in sorted(self.bounds.items())
                },
            },
            indent=2,
            sort_keys=False,
        )


def verify_run(
    profile: PreferenceProfile, run: RunResult, eps: float | None = None
) -> VerificationReport:
    """Evaluate every stability claim a finished run is supposed to satisfy.

    With protocol parameters available the report covers: the total blocking
    budget eps * |E|; zero tight ((2/k)-)blocking pairs incident to good men;
    at most 4 |E| / k loose blocking pairs; at most 4 delta |E| tight blocking
    pairs from bad men; the per-rung bad-fraction records; and bad men's
    tight blocking partners all sitting on their remaining lists. Without
    parameters (deferred acceptance) only the blocking budget is checked,
    against eps = 0 unless an explicit budget is passed.
    """
    params = run.params
    if eps is None:
        eps = params.eps if params is not None else 0.0
    edges = profile.num_edges
    blocking = blocking_pairs(profile, run.matching)
    good, bad = classify_good_bad(run.men)
    report = VerificationReport(
        algorithm=run.algorithm,
        n=profile.n,
        edges=edges,
        eps=eps,
        k=params.k if params else None,
        delta=params.delta if params else None,
        blocking=blocking,
        good_men=frozenset(good),
        bad_men=frozenset(bad),
    )
    bounds: dict[str, BoundCheck] = {}
    bounds[CLAIM_TOTAL_BLOCKING] = BoundCheck(
        bound=eps * edges, observed=len(blocking), passed=len(blocking) <= eps * edges + 1e-9
    )
    if params is not None:
        k = params.k
        t = 2.0 / k
        report.tight_threshold = t
        tight = eps_blocking_pairs(profile, run.matching, t)
        report.tight_blocking = tight
        tight_set = set(tight)
        tight_good = [e for e in tight if e[0] in good]
        bounds[CLAIM_GOOD_MEN_CLEAN] = BoundCheck(
            bound=0, observed=len(tight_good), passed=not tight_good
        )
        loose = [e for e in blocking if e not in tight_set]
        bounds[CLAIM_LOOSE_BLOCKING] = BoundCheck(
            bound=4 * edges / k, observed=len(loose), passed=len(loose) <= 4 * edges / k + 1e-9
        )
        tight_bad = [e for e in tight if e[0] in bad]
        bound44 = 4 * params.delta * edges
        bounds[CLAIM_BAD_MEN_BUDGET] = BoundCheck(
            bound=bound44, observed=len(tight_bad), passed=len(tight_bad) <= bound44 + 1e-9
        )
        failing_rungs = [r for r in run.outer_records if not r.passed]
        bounds[CLAIM_BAD_FRACTION] = BoundCheck(
            bound=0, observed=len(failing_rungs), passed=not failing_rungs
        )
        local_violations = 0
        for m_idx in bad:
            partners = {w for mm, w in tight if mm == m_idx}
            if not partners <= set(run.men[m_idx].remaining):
                local_violations += 1
        bounds[CLAIM_BAD_MEN_LOCAL] = BoundCheck(
            bound=0, observed=local_violations, passed=local_violations == 0
        )
    report.bounds = bounds
    return report


# ---------------------------------------------------------------------------
# statistics for randomized claims
# ---------------------------------------------------------------------------

Z_99 = 2.5758293035489004  # two-sided 99% normal quantile


def binomial_ci(successes: int, trials: int, z: float = Z_99) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not (0 <= successes <= trials):
        raise ValueError("successes out of range")
    phat = successes / trials
    denom = 1 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials))
    return (max(0.0, center - half), min(1.0, center + half))


def rate_within_claim(failures: int, trials: int, claimed: float, z: float = Z_99) -> bool:
    """A probabilistic bound only fails when the CI lower bound of the
    observed failure rate exceeds the claimed rate."""
    lo, _ = binomial_ci(failures, trials, z)
    return lo <= claimed
