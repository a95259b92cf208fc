"""Phrase table extraction, loading, and per-sentence option collection.

A phrase table only defines the search space; options carry no score of
their own (they enter the deduction as items with log probability 0)
and are priced by the sequence scorer while a derivation is built. The
forward probabilities stored here are used solely to pick the
options_per_span best candidates per source span.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .core import CoverageVector, SourceSentence, coverage_for_span
from .errors import LineFormatError

REGULAR = "regular"
OMISSION = "omission"
INSERTION = "insertion"

INSERTION_SPAN = (0, 0)


@dataclass(frozen=True)
class PhraseTableEntry:
    """One phrase pair with its forward probability p(target | source)."""

    source: tuple[str, ...]
    target: tuple[str, ...]
    prob: float

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(self.source))
        object.__setattr__(self, "target", tuple(self.target))
        if not self.source or not self.target:
            raise ValueError("phrase pair sides must be non-empty")
        if not 0.0 < self.prob <= 1.0:
            raise ValueError(f"forward probability {self.prob} outside (0, 1]")


class PhraseTable:
    """Lookup from source phrase to candidate target phrases.

    Entries for a source phrase are kept sorted by descending
    probability with ties broken by target tokens, so truncation to the
    best k candidates is deterministic.
    """

    def __init__(self, entries: Iterable[PhraseTableEntry] = ()):
        best: dict[tuple[tuple[str, ...], tuple[str, ...]], float] = {}
        for entry in entries:
            key = (entry.source, entry.target)
            if key not in best or entry.prob > best[key]:
                best[key] = entry.prob
        by_source: dict[tuple[str, ...], list[PhraseTableEntry]] = defaultdict(list)
        for (source, target), prob in best.items():
            by_source[source].append(PhraseTableEntry(source, target, prob))
        self._by_source = {
            source: tuple(sorted(group, key=lambda e: (-e.prob, e.target)))
            for source, group in by_source.items()
        }
        self.max_source_len = max((len(s) for s in self._by_source), default=0)

    def lookup(self, source: Sequence[str]) -> tuple[PhraseTableEntry, ...]:
        return self._by_source.get(tuple(source), ())

    def __len__(self) -> int:
        return sum(len(group) for group in self._by_source.values())

    def __iter__(self) -> Iterator[PhraseTableEntry]:
        for source in sorted(self._by_source):
            yield from self._by_source[source]


def parse_alignment_line(line: str, base: int = 1) -> list[tuple[int, int]]:
    """Parse space-separated i-j word alignment pairs into 1-based pairs."""
    if base not in (0, 1):
        raise ValueError("alignment base must be 0 or 1")
    pairs = []
    for part in line.split():
        try:
            i_text, j_text = part.split("-")
            i, j = int(i_text), int(j_text)
        except ValueError:
            raise LineFormatError(f"bad alignment pair {part!r}, expected i-j")
        shift = 1 - base
        pairs.append((i + shift, j + shift))
    return pairs


def extract_phrase_table(
    corpus: Iterable[tuple[Sequence[str], Sequence[str], Iterable[tuple[int, int]]]],
    max_phrase_len: int = 7,
) -> PhraseTable:
    """Extract all phrase pairs consistent with the word alignments.

    A pair of spans is consistent when no alignment point links a word
    inside either span to a word outside the other, and at least one
    point lies inside. Unaligned boundary words are attached by
    extending the tight target span over adjacent unaligned words.
    Both sides are capped at max_phrase_len. Forward probabilities are
    relative frequencies count(s,t)/count(s) over extracted instances.
    """
    if max_phrase_len < 1:
        raise ValueError("max_phrase_len must be at least 1")
    pair_counts: Counter[tuple[tuple[str, ...], tuple[str, ...]]] = Counter()
    source_counts: Counter[tuple[str, ...]] = Counter()
    for line_no, (src, tgt, links) in enumerate(corpus, start=1):
        src = tuple(src)
        tgt = tuple(tgt)
        points = list(links)
        for (i, j) in points:
            if not (1 <= i <= len(src) and 1 <= j <= len(tgt)):
                raise LineFormatError(
                    f"line {line_no}: alignment point {i}-{j} out of range "
                    f"for lengths {len(src)}/{len(tgt)}"
                )
        tgt_aligned = [False] * (len(tgt) + 1)
        for (_, j) in points:
            tgt_aligned[j] = True
        for i1 in range(1, len(src) + 1):
            for i2 in range(i1, min(i1 + max_phrase_len - 1, len(src)) + 1):
                inside = [j for (i, j) in points if i1 <= i <= i2]
                if not inside:
                    continue
                j1, j2 = min(inside), max(inside)
                if any(j1 <= j <= j2 and not i1 <= i <= i2 for (i, j) in points):
                    continue
                # extend over adjacent unaligned target words
                jb = j1
                while True:
                    je = j2
                    while True:
                        if je - jb + 1 <= max_phrase_len:
                            pair = (src[i1 - 1 : i2], tgt[jb - 1 : je])
                            pair_counts[pair] += 1
                            source_counts[pair[0]] += 1
                        je += 1
                        if je > len(tgt) or tgt_aligned[je]:
                            break
                    jb -= 1
                    if jb < 1 or tgt_aligned[jb]:
                        break
    entries = [
        PhraseTableEntry(source, target, count / source_counts[source])
        for (source, target), count in pair_counts.items()
    ]
    return PhraseTable(entries)


def load_phrase_table(lines: Iterable[str]) -> PhraseTable:
    """Read `source ||| target ||| prob` lines; extra fields are ignored."""
    entries = []
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split("|||")]
        if len(fields) < 3:
            raise LineFormatError(f"line {line_no}: expected `src ||| tgt ||| prob`")
        try:
            prob = float(fields[2])
        except ValueError:
            raise LineFormatError(f"line {line_no}: unparseable probability {fields[2]!r}")
        source = tuple(fields[0].split())
        target = tuple(fields[1].split())
        if not source or not target or not 0.0 < prob <= 1.0:
            raise LineFormatError(f"line {line_no}: bad phrase pair or probability")
        entries.append(PhraseTableEntry(source, target, prob))
    return PhraseTable(entries)


def save_phrase_table(table: PhraseTable, stream) -> None:
    for entry in table:
        stream.write(f"{' '.join(entry.source)} ||| {' '.join(entry.target)} ||| {entry.prob:.6f}\n")


@dataclass(frozen=True)
class TranslationOption:
    """One admissible derivation step for a particular sentence.

    kind is regular (source span to target phrase), omission (source
    word to nothing), or insertion (nothing to one target word). The
    coverage vector marks exactly the option's source span; options
    carry no score.
    """

    span: tuple[int, int]
    target: tuple[str, ...]
    kind: str
    coverage: CoverageVector

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(self.target))
        if self.kind not in (REGULAR, OMISSION, INSERTION):
            raise ValueError(f"unknown option kind {self.kind!r}")
        if self.kind == INSERTION:
            if self.span != INSERTION_SPAN or len(self.target) != 1:
                raise ValueError("insertion options span (0,0) and emit one word")
        elif self.kind == OMISSION:
            if self.span[0] != self.span[1] or self.target:
                raise ValueError("omission options cover one word and emit nothing")
        else:
            if not 1 <= self.span[0] <= self.span[1] or not self.target:
                raise ValueError("regular options need a real span and a target phrase")


class OptionLattice:
    """Translation options for one sentence, grouped by source span.

    Iteration order is deterministic: real spans sorted by position,
    then the insertion span, preserving per-span option order.
    """

    def __init__(self, source_len: int, options: Iterable[TranslationOption] = ()):
        if source_len < 1:
            raise ValueError("source length must be at least 1")
        self.source_len = source_len
        by_span: dict[tuple[int, int], list[TranslationOption]] = defaultdict(list)
        for opt in options:
            if opt.kind != INSERTION and not 1 <= opt.span[0] <= opt.span[1] <= source_len:
                raise ValueError(f"option span {opt.span} outside 1..{source_len}")
            by_span[opt.span].append(opt)
        self._by_span = {span: tuple(group) for span, group in by_span.items()}

    def spans(self) -> tuple[tuple[int, int], ...]:
        real = sorted(s for s in self._by_span if s != INSERTION_SPAN)
        if INSERTION_SPAN in self._by_span:
            real.append(INSERTION_SPAN)
        return tuple(real)

    def options_at(self, span: tuple[int, int]) -> tuple[TranslationOption, ...]:
        return self._by_span.get(span, ())

    def all_options(self) -> tuple[TranslationOption, ...]:
        out = []
        for span in self.spans():
            out.extend(self._by_span[span])
        return tuple(out)

    def __len__(self) -> int:
        return sum(len(g) for g in self._by_span.values())


def collect_options(
    x: SourceSentence,
    table: PhraseTable,
    insertions: "InsertionVocab | None" = None,
    options_per_span: int = 20,
    max_source_len: int = 7,
) -> OptionLattice:
    """Match every source span against the table and build the lattice."""
    if options_per_span < 1:
        raise ValueError("options_per_span must be at least 1")
    source_len = len(x)
    options = []
    span_cap = min(max_source_len, table.max_source_len) if len(table) else 0
    for i_b in range(1, source_len + 1):
        for i_e in range(i_b, min(i_b + span_cap - 1, source_len) + 1):
            entries = table.lookup(x.tokens[i_b - 1 : i_e])
            for entry in entries[:options_per_span]:
                options.append(
                    TranslationOption(
                        (i_b, i_e), entry.target, REGULAR, coverage_for_span(i_b, i_e, source_len)
                    )
                )
    if insertions is not None:
        empty = CoverageVector(0, source_len)
        for word in insertions.words():
            options.append(TranslationOption(INSERTION_SPAN, (word,), INSERTION, empty))
    return OptionLattice(source_len, options)


def add_omission_options(
    lattice: OptionLattice,
    x: SourceSentence,
    empty_model,
    threshold: float = 0.5,
) -> OptionLattice:
    """Add an omission option wherever the empty-phrase model clears the
    threshold. The model's log probability is charged when the option is
    applied, not here."""
    source_len = lattice.source_len
    options = list(lattice.all_options())
    for i in range(1, source_len + 1):
        p = empty_model.score_omission(x, i)
        if p > 0.0 and p >= threshold:
            options.append(TranslationOption((i, i), (), OMISSION, coverage_for_span(i, i, source_len)))
    return OptionLattice(source_len, options)


class InsertionVocab:
    """Target words the decoder may insert without source-side support,
    with their estimated probability of being unaligned."""

    def __init__(self, probs: dict[str, float] | None = None):
        self._probs = dict(probs or {})

    def words(self) -> tuple[str, ...]:
        return tuple(sorted(self._probs))

    def prob(self, word: str) -> float:
        return self._probs[word]

    def __contains__(self, word: str) -> bool:
        return word in self._probs

    def __len__(self) -> int:
        return len(self._probs)


def build_insertion_vocab(
    corpus: Iterable[tuple[Sequence[str], Sequence[str], Iterable[tuple[int, int]]]],
    threshold: float = 0.2,
    max_words: int = 50,
) -> InsertionVocab:
    """Estimate P(unaligned | w) for target words and keep the max_words
    most frequent ones whose estimate exceeds the threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    occurrences: Counter[str] = Counter()
    unaligned: Counter[str] = Counter()
    for src, tgt, links in corpus:
        tgt = tuple(tgt)
        aligned_positions = {j for (_, j) in links}
        for j, word in enumerate(tgt, start=1):
            occurrences[word] += 1
            if j not in aligned_positions:
                unaligned[word] += 1
    candidates = [
        (word, unaligned[word] / occurrences[word])
        for word in occurrences
        if unaligned[word] / occurrences[word] > threshold
    ]
    candidates.sort(key=lambda item: (-occurrences[item[0]], item[0]))
    return InsertionVocab(dict(candidates[:max_words]))


def load_insertion_vocab(lines: Iterable[str]) -> InsertionVocab:
    probs = {}
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise LineFormatError(f"line {line_no}: expected `word<TAB>prob`")
        try:
            probs[parts[0]] = float(parts[1])
        except ValueError:
            raise LineFormatError(f"line {line_no}: unparseable probability {parts[1]!r}")
    return InsertionVocab(probs)


def save_insertion_vocab(vocab: InsertionVocab, stream) -> None:
    for word in vocab.words():
        stream.write(f"{word}\t{vocab.prob(word):.6f}\n")
