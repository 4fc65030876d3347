"""Core domain types: players, preference profiles, quantized preferences, matchings.

Conventions used throughout the package:

* Ranks are 1-based; rank 1 is the most favored partner.
* An unmatched player is treated as holding rank ``deg(v) + 1``, i.e. worse
  than every acceptable partner.
* Preference lists are symmetric: ``w`` appears on ``m``'s list exactly when
  ``m`` appears on ``w``'s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

from .errors import InvalidMatching, InvalidProfile


class Side(IntEnum):
    MAN = 0
    WOMAN = 1


class PlayerId(NamedTuple):
    """A player, identified by side plus a 0-based index within that side."""

    side: Side
    index: int

    def __repr__(self) -> str:
        return f"{'M' if self.side is Side.MAN else 'W'}{self.index}"


def man(index: int) -> PlayerId:
    return PlayerId(Side.MAN, index)


def woman(index: int) -> PlayerId:
    return PlayerId(Side.WOMAN, index)


@dataclass(frozen=True)
class PreferenceProfile:
    """A full instance: n players per side with symmetric incomplete preference lists.

    ``men_prefs[i]`` is man i's ordered list of woman indices (position 0 is
    rank 1); ``women_prefs`` likewise. Lists may be empty. Validation happens
    at construction and raises :class:`InvalidProfile` with the violated
    invariant spelled out.
    """

    n: int
    men_prefs: tuple[tuple[int, ...], ...]
    women_prefs: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.n < 1:
            raise InvalidProfile(f"n must be >= 1, got {self.n}")
        for name, prefs in (("men", self.men_prefs), ("women", self.women_prefs)):
            if len(prefs) != self.n:
                raise InvalidProfile(f"expected {self.n} {name} preference lists, got {len(prefs)}")
            for i, lst in enumerate(prefs):
                seen = set()
                for j in lst:
                    if not (0 <= j < self.n):
                        raise InvalidProfile(f"{name[:-1]} {i} ranks out-of-range partner {j}")
                    if j in seen:
                        raise InvalidProfile(f"{name[:-1]} {i} ranks partner {j} twice")
                    seen.add(j)
        women_sets = [set(lst) for lst in self.women_prefs]
        men_sets = [set(lst) for lst in self.men_prefs]
        for m_idx, lst in enumerate(self.men_prefs):
            for w_idx in lst:
                if m_idx not in women_sets[w_idx]:
                    raise InvalidProfile(
                        f"asymmetric pair: man {m_idx} lists woman {w_idx} "
                        f"but woman {w_idx} does not list man {m_idx}"
                    )
        for w_idx, lst in enumerate(self.women_prefs):
            for m_idx in lst:
                if w_idx not in men_sets[m_idx]:
                    raise InvalidProfile(
                        f"asymmetric pair: woman {w_idx} lists man {m_idx} "
                        f"but man {m_idx} does not list woman {w_idx}"
                    )

    @classmethod
    def from_lists(cls, men_prefs: Sequence[Sequence[int]], women_prefs: Sequence[Sequence[int]]) -> "PreferenceProfile":
        n = max(len(men_prefs), len(women_prefs))
        return cls(
            n=n,
            men_prefs=tuple(tuple(lst) for lst in men_prefs),
            women_prefs=tuple(tuple(lst) for lst in women_prefs),
        )

    @cached_property
    def _man_rank(self) -> tuple[dict[int, int], ...]:
        return tuple({p: r + 1 for r, p in enumerate(lst)} for lst in self.men_prefs)

    @cached_property
    def _woman_rank(self) -> tuple[dict[int, int], ...]:
        return tuple({p: r + 1 for r, p in enumerate(lst)} for lst in self.women_prefs)

    def prefs_of(self, v: PlayerId) -> tuple[int, ...]:
        return (self.men_prefs if v.side is Side.MAN else self.women_prefs)[v.index]

    def degree(self, v: PlayerId) -> int:
        return len(self.prefs_of(v))

    @cached_property
    def num_edges(self) -> int:
        return sum(len(lst) for lst in self.men_prefs)

    def edges(self) -> Iterable[tuple[int, int]]:
        """All (man, woman) index pairs of the communication graph."""
        for m_idx, lst in enumerate(self.men_prefs):
            for w_idx in lst:
                yield (m_idx, w_idx)

    def is_edge(self, m_idx: int, w_idx: int) -> bool:
        return w_idx in self._man_rank[m_idx]

    def men_degrees(self) -> list[int]:
        return [len(lst) for lst in self.men_prefs]


def rank(profile: PreferenceProfile, v: PlayerId, u: PlayerId) -> int | None:
    """1-based position of u in v's list, or None when u is unacceptable to v."""
    if v.side == u.side:
        raise InvalidProfile("rank is defined between players of opposite sides")
    table = profile._man_rank if v.side is Side.MAN else profile._woman_rank
    return table[v.index].get(u.index)


class QuantizedPrefs:
    """A player's preference list chopped into k quantile buckets.

    Bucket assignment follows ``q(r) = ceil(r * k / deg)`` for 1-based rank r,
    which keeps bucket sizes within one of ``deg / k`` and leaves some buckets
    empty when ``deg < k``. The structure is removal-only: partners can be
    dropped but never re-added, and the rank/quantile lookup tables describe
    the original list.
    """

    __slots__ = ("k", "deg", "rank_of", "quantile_of", "buckets", "remaining", "_bucket_of")

    def __init__(self, ordered_partners: Sequence[int], k: int):
        if k < 1:
            raise ValueError(f"quantile count must be >= 1, got {k}")
        self.k = k
        self.deg = len(ordered_partners)
        # rank r (1-based) -> quantile index in 1..k
        self.quantile_of: tuple[int, ...] = tuple(
            math.ceil(r * k / self.deg) for r in range(1, self.deg + 1)
        )
        self.rank_of: dict[int, int] = {p: r + 1 for r, p in enumerate(ordered_partners)}
        self.buckets: list[list[int]] = [[] for _ in range(k)]
        self._bucket_of: dict[int, int] = {}
        for r, p in enumerate(ordered_partners):
            q = self.quantile_of[r]
            self.buckets[q - 1].append(p)
            self._bucket_of[p] = q
        self.remaining: set[int] = set(ordered_partners)

    def quantile(self, partner: int) -> int:
        """Quantile index (1-based) of a partner from the original list."""
        return self._bucket_of[partner]

    def best_nonempty_index(self) -> int | None:
        for i, b in enumerate(self.buckets):
            if b:
                return i + 1
        return None

    def best_nonempty_bucket(self) -> list[int]:
        i = self.best_nonempty_index()
        return [] if i is None else list(self.buckets[i - 1])

    def remove(self, partner: int) -> None:
        if partner not in self.remaining:
            raise KeyError(f"partner {partner} already removed")
        self.remaining.discard(partner)
        self.buckets[self._bucket_of[partner] - 1].remove(partner)

    def at_or_worse(self, quantile_index: int) -> list[int]:
        """Remaining partners whose quantile index is >= the given one, in rank order."""
        out: list[int] = []
        for b in self.buckets[quantile_index - 1 :]:
            out.extend(b)
        return out

    def __len__(self) -> int:
        return len(self.remaining)


def quantize(prefs_of_player: Sequence[int], k: int) -> QuantizedPrefs:
    """Split an ordered partner list into k quantile buckets (empty list allowed)."""
    return QuantizedPrefs(prefs_of_player, k)


@dataclass(frozen=True)
class Matching:
    """A set of (man index, woman index) pairs, at most one per player."""

    pairs: frozenset[tuple[int, int]]

    @classmethod
    def of(cls, pairs: Iterable[tuple[int, int]]) -> "Matching":
        return cls(frozenset((int(m), int(w)) for m, w in pairs))

    def __post_init__(self):
        men_seen: set[int] = set()
        women_seen: set[int] = set()
        for m_idx, w_idx in self.pairs:
            if m_idx in men_seen:
                raise InvalidMatching(f"man {m_idx} appears in two pairs")
            if w_idx in women_seen:
                raise InvalidMatching(f"woman {w_idx} appears in two pairs")
            men_seen.add(m_idx)
            women_seen.add(w_idx)

    @cached_property
    def man_partner(self) -> dict[int, int]:
        return {m: w for m, w in self.pairs}

    @cached_property
    def woman_partner(self) -> dict[int, int]:
        return {w: m for m, w in self.pairs}

    def validate_for(self, profile: PreferenceProfile) -> None:
        """Raise InvalidMatching unless every pair is an edge of the communication graph."""
        for m_idx, w_idx in self.pairs:
            if not (0 <= m_idx < profile.n and 0 <= w_idx < profile.n):
                raise InvalidMatching(f"pair ({m_idx}, {w_idx}) is out of range for n={profile.n}")
            if not profile.is_edge(m_idx, w_idx):
                raise InvalidMatching(
                    f"pair ({m_idx}, {w_idx}) is not a mutually acceptable edge"
                )

    def __len__(self) -> int:
        return len(self.pairs)

    def sorted_pairs(self) -> list[tuple[int, int]]:
        return sorted(self.pairs)
