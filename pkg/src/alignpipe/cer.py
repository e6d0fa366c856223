"""Character-level edit distance and CER.

This is the single metric behind candidate gating, refinement, selection and
tier filtering, so it is built for exactness and speed:

- CerValue keeps distance/denominator as integers; threshold comparisons are
  cross-multiplied so tie-breaking is deterministic across platforms.
- The distance kernel is the bit-parallel Myers/Hyyrö formulation (arbitrary
  pattern length via Python big ints) with length-difference and monotone
  lower-bound early exits for bounded queries. An unbanded full-DP oracle
  lives in the test suite and must agree on 100% of sampled pairs.
- prefix_distances() returns the distance of the pattern against every prefix
  of a text in one pass, which lets the refined search score all window
  lengths for a start position with a single scan.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import EmptyReference


def to_fraction(x: float | int | str | Fraction) -> Fraction:
    """Exact rational from a config value; floats go through their repr so
    0.3 means 3/10, not the nearest binary float."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


@dataclass(frozen=True)
class CerValue:
    """Exact CER as distance/denom. Comparisons are value comparisons."""

    distance: int
    denom: int

    def __post_init__(self):
        if self.denom < 1:
            raise ValueError("denom must be >= 1")
        if self.distance < 0:
            raise ValueError("distance must be >= 0")

    @property
    def value(self) -> float:
        return self.distance / self.denom

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.distance, self.denom)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, CerValue):
            return self.distance * other.denom == other.distance * self.denom
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.fraction)

    def __lt__(self, other: "CerValue") -> bool:
        return self.distance * other.denom < other.distance * self.denom

    def __le__(self, other: "CerValue") -> bool:
        return self.distance * other.denom <= other.distance * self.denom

    def __gt__(self, other: "CerValue") -> bool:
        return self.distance * other.denom > other.distance * self.denom

    def __ge__(self, other: "CerValue") -> bool:
        return self.distance * other.denom >= other.distance * self.denom

    def le_bound(self, bound: Fraction) -> bool:
        return self.distance * bound.denominator <= bound.numerator * self.denom

    def lt_bound(self, bound: Fraction) -> bool:
        return self.distance * bound.denominator < bound.numerator * self.denom

    def __repr__(self) -> str:
        return f"CerValue({self.distance}/{self.denom}={self.value:.4f})"


class _AboveBound:
    """Sentinel: banded_cer_at_most determined only that the CER exceeds the bound."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ABOVE_BOUND"


ABOVE_BOUND = _AboveBound()


class CerPattern:
    """A reference string precompiled for repeated distance queries.

    The aligner compares one ASR segment text against hundreds of transcript
    windows; compiling the per-character bitmasks once makes each query a
    single pass over the window text.
    """

    __slots__ = ("reference", "length", "_peq", "_mask", "_high")

    def __init__(self, reference: str):
        self.reference = reference
        m = len(reference)
        self.length = m
        peq: dict[str, int] = {}
        bit = 1
        for ch in reference:
            peq[ch] = peq.get(ch, 0) | bit
            bit <<= 1
        self._peq = peq
        self._mask = (1 << m) - 1
        self._high = 1 << (m - 1) if m else 0

    def distance(self, text: str) -> int:
        """Exact Levenshtein distance between the reference and text."""
        m = self.length
        if m == 0:
            return len(text)
        if not text:
            return m
        peq = self._peq
        mask = self._mask
        high = self._high
        vp = mask
        vn = 0
        score = m
        for ch in text:
            eq = peq.get(ch, 0)
            x = eq | vn
            d0 = ((((x & vp) + vp) ^ vp) | x) & mask
            hp = (vn | (mask ^ (d0 | vp))) & mask
            hn = vp & d0
            if hp & high:
                score += 1
            elif hn & high:
                score -= 1
            hp = ((hp << 1) | 1) & mask
            hn = (hn << 1) & mask
            vp = (hn | (mask ^ (d0 | hp))) & mask
            vn = hp & d0
        return score

    def distance_at_most(self, text: str, k: int) -> int | None:
        """Exact distance if it is <= k, else None.

        Early exits: the length difference is a lower bound, and while
        scanning, score can drop by at most one per remaining character.
        """
        m = self.length
        n = len(text)
        if k < 0:
            return None
        if abs(m - n) > k:
            return None
        if m == 0:
            return n if n <= k else None
        if n == 0:
            return m if m <= k else None
        peq = self._peq
        mask = self._mask
        high = self._high
        vp = mask
        vn = 0
        score = m
        remaining = n
        for ch in text:
            eq = peq.get(ch, 0)
            x = eq | vn
            d0 = ((((x & vp) + vp) ^ vp) | x) & mask
            hp = (vn | (mask ^ (d0 | vp))) & mask
            hn = vp & d0
            if hp & high:
                score += 1
            elif hn & high:
                score -= 1
            hp = ((hp << 1) | 1) & mask
            hn = (hn << 1) & mask
            vp = (hn | (mask ^ (d0 | hp))) & mask
            vn = hp & d0
            remaining -= 1
            if score - remaining > k:
                return None
        return score if score <= k else None

    def prefix_distances(self, text: str) -> list[int]:
        """distances[j] == distance(reference, text[:j]) for j in 0..len(text)."""
        m = self.length
        if m == 0:
            return list(range(len(text) + 1))
        peq = self._peq
        mask = self._mask
        high = self._high
        vp = mask
        vn = 0
        score = m
        out = [m]
        append = out.append
        for ch in text:
            eq = peq.get(ch, 0)
            x = eq | vn
            d0 = ((((x & vp) + vp) ^ vp) | x) & mask
            hp = (vn | (mask ^ (d0 | vp))) & mask
            hn = vp & d0
            if hp & high:
                score += 1
            elif hn & high:
                score -= 1
            hp = ((hp << 1) | 1) & mask
            hn = (hn << 1) & mask
            vp = (hn | (mask ^ (d0 | hp))) & mask
            vn = hp & d0
            append(score)
        return out


def edit_distance(a: str, b: str) -> int:
    """Minimum single-character insertions/deletions/substitutions from a to b."""
    if a == b:
        return 0
    # Compile the shorter side: fewer bitmask words per operation.
    if len(a) <= len(b):
        return CerPattern(a).distance(b)
    return CerPattern(b).distance(a)


def cer(hypothesis_window: str, asr_reference: str) -> CerValue:
    """CER of a transcript window against the ASR text of one segment.

    The denominator is the ASR text length: the ASR side is the fixed query
    while windows vary, which keeps values comparable across windows.
    Whitespace counts as ordinary characters; both sides are expected to be
    normalized by the same profile.
    """
    if not asr_reference:
        raise EmptyReference("asr_reference must be non-empty")
    return CerValue(edit_distance(hypothesis_window, asr_reference), len(asr_reference))


def max_distance_within(bound: Fraction, denom: int) -> int:
    """Largest integer distance d with d/denom <= bound."""
    return (bound.numerator * denom) // bound.denominator


def banded_cer_at_most(
    window: str,
    asr_reference: str,
    bound: float | str | Fraction,
) -> CerValue | _AboveBound:
    """Exact CerValue when CER <= bound, otherwise ABOVE_BOUND.

    Agrees with cer() whenever it returns a value; the fast path only proves
    the bound was exceeded.
    """
    if not asr_reference:
        raise EmptyReference("asr_reference must be non-empty")
    frac = to_fraction(bound)
    if frac < 0:
        raise ValueError("bound must be >= 0")
    denom = len(asr_reference)
    k = max_distance_within(frac, denom)
    d = CerPattern(asr_reference).distance_at_most(window, k)
    if d is None:
        return ABOVE_BOUND
    return CerValue(d, denom)
