"""Value types for sentences, phrase alignments, and coverage bookkeeping.

Positions are 1-based on both sides. Position 0 is reserved for the
virtual empty word: a link whose source side is 0:0 inserts target
words out of thin air, and a link whose target side is 0:0 omits a
single source word. Every non-virtual position must be accounted for
by exactly one link; alignment_validate checks this and reports
violations as data rather than raising.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import CoverageConflictError, LineFormatError


@dataclass(frozen=True)
class SourceSentence:
    """A tokenized source sentence. Tokens are plain words; constraint
    markup is parsed off before construction."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(self.tokens) == 0:
            raise ValueError("source sentence must contain at least one token")

    def __len__(self):
        return len(self.tokens)

    def word(self, i: int) -> str:
        """Return the word at 1-based position i."""
        if not 1 <= i <= len(self.tokens):
            raise ValueError(f"source position {i} out of range 1..{len(self.tokens)}")
        return self.tokens[i - 1]


@dataclass(frozen=True)
class TargetSentence:
    """A tokenized target sentence. May be empty (everything omitted)."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True)
class AlignmentLink:
    """One phrase-level link (i_b, i_e, j_b, j_e) between a source span
    and a target span, either of which may be the virtual empty word
    (both bounds 0). Links are dumb records; alignment_validate judges
    them so that invalid ones can be reported instead of being
    unconstructible."""

    i_b: int
    i_e: int
    j_b: int
    j_e: int

    @property
    def source_empty(self) -> bool:
        return self.i_b == 0 and self.i_e == 0

    @property
    def target_empty(self) -> bool:
        return self.j_b == 0 and self.j_e == 0

    def to_text(self) -> str:
        return f"{self.i_b}:{self.i_e}-{self.j_b}:{self.j_e}"

    @classmethod
    def from_text(cls, text: str) -> "AlignmentLink":
        try:
            src, tgt = text.split("-")
            i_b, i_e = (int(v) for v in src.split(":"))
            j_b, j_e = (int(v) for v in tgt.split(":"))
        except ValueError:
            raise LineFormatError(f"bad alignment link {text!r}, expected i_b:i_e-j_b:j_e")
        return cls(i_b, i_e, j_b, j_e)


@dataclass(frozen=True)
class PhraseAlignment:
    """A sequence of alignment links in derivation order."""

    links: tuple[AlignmentLink, ...]

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))

    def __len__(self):
        return len(self.links)

    def to_line(self) -> str:
        return " ".join(link.to_text() for link in self.links)

    @classmethod
    def from_line(cls, line: str) -> "PhraseAlignment":
        parts = line.split()
        return cls(tuple(AlignmentLink.from_text(p) for p in parts))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of alignment_validate: ok plus human-readable violations."""

    ok: bool
    violations: tuple[str, ...] = ()


def span_mask(i_b: int, i_e: int) -> int:
    """Bit mask for the 1-based inclusive source span i_b..i_e."""
    return ((1 << (i_e - i_b + 1)) - 1) << (i_b - 1)


@dataclass(frozen=True)
class CoverageVector:
    """Immutable record of which source positions are covered.

    Stored as a bit mask so merging and hashing stay cheap; the bits
    property exposes the flag sequence when one is wanted.
    """

    mask: int
    length: int

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.mask >> k) & 1 for k in range(self.length))

    @property
    def covered_count(self) -> int:
        return bin(self.mask).count("1")

    @property
    def is_full(self) -> bool:
        return self.mask == (1 << self.length) - 1

    def covers(self, i: int) -> bool:
        return bool((self.mask >> (i - 1)) & 1)

    def uncovered_positions(self) -> tuple[int, ...]:
        return tuple(i for i in range(1, self.length + 1) if not self.covers(i))


def coverage_new(length: int) -> CoverageVector:
    """All-uncovered vector for a sentence of the given length."""
    if length < 1:
        raise ValueError("coverage length must be at least 1")
    return CoverageVector(0, length)


def coverage_for_span(i_b: int, i_e: int, length: int) -> CoverageVector:
    """Vector covering exactly the 1-based inclusive span i_b..i_e."""
    if not 1 <= i_b <= i_e <= length:
        raise ValueError(f"span {i_b}:{i_e} out of range for length {length}")
    return CoverageVector(span_mask(i_b, i_e), length)


def coverage_merge(a: CoverageVector, b: CoverageVector) -> CoverageVector:
    """Union of two disjoint coverage vectors of equal length."""
    if a.length != b.length:
        raise ValueError(f"coverage lengths differ: {a.length} vs {b.length}")
    overlap = a.mask & b.mask
    if overlap:
        positions = [i + 1 for i in range(a.length) if (overlap >> i) & 1]
        raise CoverageConflictError(f"positions covered twice: {positions}")
    return CoverageVector(a.mask | b.mask, a.length)


def alignment_validate(alignment: PhraseAlignment, source_len: int, target_len: int) -> ValidationReport:
    """Check that an alignment partitions both sentences.

    Every source position 1..source_len must appear in exactly one
    link's source span, every target position 1..target_len in exactly
    one target span, no link may have both sides empty, and an omitted
    source span (empty target side) must be a single word.
    """
    violations: list[str] = []
    src_count = [0] * (source_len + 1)
    tgt_count = [0] * (target_len + 1)
    for idx, link in enumerate(alignment.links, start=1):
        if min(link.i_b, link.i_e, link.j_b, link.j_e) < 0:
            violations.append(f"link {idx}: negative position in {link.to_text()}")
            continue
        if link.source_empty and link.target_empty:
            violations.append(f"link {idx}: both sides empty")
            continue
        if link.source_empty:
            if not 1 <= link.j_b <= link.j_e <= target_len:
                violations.append(f"link {idx}: target span {link.j_b}:{link.j_e} out of range 1..{target_len}")
                continue
        elif link.target_empty:
            if not 1 <= link.i_b <= link.i_e <= source_len:
                violations.append(f"link {idx}: source span {link.i_b}:{link.i_e} out of range 1..{source_len}")
                continue
            if link.i_b != link.i_e:
                violations.append(f"link {idx}: omitted source span {link.i_b}:{link.i_e} must be a single word")
                continue
        else:
            if not 1 <= link.i_b <= link.i_e <= source_len:
                violations.append(f"link {idx}: source span {link.i_b}:{link.i_e} out of range 1..{source_len}")
                continue
            if not 1 <= link.j_b <= link.j_e <= target_len:
                violations.append(f"link {idx}: target span {link.j_b}:{link.j_e} out of range 1..{target_len}")
                continue
        if not link.source_empty:
            for i in range(link.i_b, link.i_e + 1):
                src_count[i] += 1
        if not link.target_empty:
            for j in range(link.j_b, link.j_e + 1):
                tgt_count[j] += 1
    for i in range(1, source_len + 1):
        if src_count[i] == 0:
            violations.append(f"source position {i} uncovered")
        elif src_count[i] > 1:
            violations.append(f"source position {i} covered {src_count[i]} times")
    for j in range(1, target_len + 1):
        if tgt_count[j] == 0:
            violations.append(f"target position {j} unaligned")
        elif tgt_count[j] > 1:
            violations.append(f"target position {j} aligned {tgt_count[j]} times")
    return ValidationReport(ok=not violations, violations=tuple(violations))
