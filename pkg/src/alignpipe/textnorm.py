"""Canonical text normalization and tokenization.

One normalization path is shared by the CER engine, the aligner and transcript
parsing so every error rate in the pipeline is computed on the same
representation: NFKC compatibility normalization, lowercasing, punctuation and
symbol removal (intra-word apostrophes/hyphens kept), whitespace collapse.

Each token remembers the span of the original raw text it came from, so any
matched window can be traced back to the un-normalized source.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache

from .errors import InvalidEncoding, OutOfRange

# Character classes assigned by _expand(); profile flags may downgrade
# APOSTROPHE/HYPHEN to DROP at assembly time.
_WORD = 0
_SPACE = 1
_DROP = 2
_APOSTROPHE = 3
_HYPHEN = 4

# Variants folded to a canonical joiner when kept intra-word. U+2011 already
# NFKC-folds to U+2010, so only U+2010 needs listing.
_APOSTROPHE_CHARS = frozenset({"'", "’"})
_HYPHEN_CHARS = frozenset({"-", "‐"})


@dataclass(frozen=True)
class NormProfile:
    """Named, versioned normalization configuration.

    Serialized into every output manifest so corpora record exactly which
    normalization produced their CER numbers.
    """

    name: str = "nfkc-lower-nopunct"
    version: int = 1
    keep_intraword_apostrophe: bool = True
    keep_intraword_hyphen: bool = True

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "version": self.version,
            "keep_intraword_apostrophe": self.keep_intraword_apostrophe,
            "keep_intraword_hyphen": self.keep_intraword_hyphen,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormProfile":
        return cls(
            name=d.get("name", "nfkc-lower-nopunct"),
            version=int(d.get("version", 1)),
            keep_intraword_apostrophe=bool(d.get("keep_intraword_apostrophe", True)),
            keep_intraword_hyphen=bool(d.get("keep_intraword_hyphen", True)),
        )


DEFAULT_PROFILE = NormProfile()


@dataclass(frozen=True)
class NormText:
    """Normalized token sequence with recoverable raw-text offsets.

    char_form is the single space-join of tokens; token_char_starts[i] is the
    offset of token i in char_form; source_spans[i] is the (start, end)
    codepoint range of token i in the raw text it was normalized from.
    """

    tokens: tuple[str, ...]
    char_form: str = field(default="")
    token_char_starts: tuple[int, ...] = field(default=())
    source_spans: tuple[tuple[int, int], ...] = field(default=())

    def __len__(self) -> int:
        return len(self.tokens)


def _build_norm_text(tokens: list[str], spans: list[tuple[int, int]]) -> NormText:
    starts = []
    off = 0
    for tok in tokens:
        starts.append(off)
        off += len(tok) + 1
    return NormText(
        tokens=tuple(tokens),
        char_form=" ".join(tokens),
        token_char_starts=tuple(starts),
        source_spans=tuple(spans),
    )


@lru_cache(maxsize=65536)
def _expand(ch: str) -> tuple[tuple[str, int], ...]:
    """NFKC + lowercase a single character and classify every output char."""
    out = []
    for oc in unicodedata.normalize("NFKC", ch).lower():
        if oc.isspace():
            out.append((oc, _SPACE))
            continue
        cat = unicodedata.category(oc)
        if oc in _APOSTROPHE_CHARS:
            out.append(("'", _APOSTROPHE))
        elif oc in _HYPHEN_CHARS:
            out.append(("-", _HYPHEN))
        elif cat[0] in "PS" or cat[0] == "C":
            out.append((oc, _DROP))
        else:
            out.append((oc, _WORD))
    return tuple(out)


def normalize(raw: str | bytes, profile: NormProfile = DEFAULT_PROFILE) -> NormText:
    """Normalize raw text into a NormText.

    Applies, in order: NFKC compatibility normalization, lowercasing,
    punctuation/symbol removal (intra-word apostrophes and hyphens kept and
    folded to ' and -), whitespace collapse and trim. Spans map every token
    back into the raw input.

    Raises InvalidEncoding when given undecodable bytes.
    """
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvalidEncoding(str(exc)) from exc

    # (char, class, raw_index) units after per-character NFKC + lower.
    units: list[tuple[str, int, int]] = []
    for i, ch in enumerate(raw):
        for oc, kind in _expand(ch):
            if kind == _APOSTROPHE and not profile.keep_intraword_apostrophe:
                kind = _DROP
            elif kind == _HYPHEN and not profile.keep_intraword_hyphen:
                kind = _DROP
            units.append((oc, kind, i))

    tokens: list[str] = []
    spans: list[tuple[int, int]] = []
    cur: list[str] = []
    cur_start = 0
    cur_end = 0

    def flush() -> None:
        nonlocal cur
        if cur:
            tokens.append("".join(cur))
            spans.append((cur_start, cur_end))
            cur = []

    n_units = len(units)
    for u in range(n_units):
        oc, kind, i = units[u]
        if kind == _SPACE:
            flush()
            continue
        if kind == _DROP:
            continue
        if kind in (_APOSTROPHE, _HYPHEN):
            # Kept only between word characters: token already open and the
            # next unit is a word character.
            if not cur:
                continue
            if u + 1 >= n_units or units[u + 1][1] != _WORD:
                continue
        if not cur:
            cur_start = i
        cur.append(oc)
        cur_end = i + 1
    flush()

    return _build_norm_text(tokens, spans)


def window_text(nt: NormText, start_token: int, len_tokens: int) -> str:
    """Space-joined token slice; equals the matching substring of char_form."""
    if start_token < 0 or len_tokens < 0 or start_token + len_tokens > len(nt.tokens):
        raise OutOfRange(
            f"window [{start_token}, {start_token + len_tokens}) exceeds "
            f"{len(nt.tokens)} tokens"
        )
    if len_tokens == 0:
        return ""
    lo = nt.token_char_starts[start_token]
    last = start_token + len_tokens - 1
    hi = nt.token_char_starts[last] + len(nt.tokens[last])
    return nt.char_form[lo:hi]


def window_char_len(nt: NormText, start_token: int, len_tokens: int) -> int:
    """Character length of window_text(nt, start_token, len_tokens), O(1)."""
    if len_tokens == 0:
        return 0
    last = start_token + len_tokens - 1
    return nt.token_char_starts[last] + len(nt.tokens[last]) - nt.token_char_starts[start_token]
