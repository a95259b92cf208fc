"""Seeded generators of small decoding problems for verification.

The oracle suite pits the beam decoder against its exhaustive twin on
hundreds of randomized instances that are small enough to enumerate
completely. Separate generators produce lexically pinned and
tag-structured instances for the constraint soundness checks, and the
corpus builders plant regularities (a perfectly separable omission
signal, an always-unaligned source word, a frequently inserted target
word) used by the learning and ablation checks. Everything is driven
by an explicit random.Random so runs are reproducible from a seed.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field, replace

from .constraints import (
    ConstraintTree,
    LexicalConstraint,
    apply_lexical,
    apply_structural,
    parse_tagged,
)
from .core import SourceSentence
from .decoder import (
    DecodeCounters,
    DecoderConfig,
    brute_force_decode,
    decode,
)
from .errors import NoDerivationError, OracleSpaceError
from .phrasetable import (
    InsertionVocab,
    OptionLattice,
    PhraseTable,
    PhraseTableEntry,
    collect_options,
    add_omission_options,
)
from .scorer import FixedOmissionModel, TableScorer, UnalignedIndicator

SOURCE_WORDS = ("als", "baum", "chef", "dorf", "esel", "frau")
TARGET_WORDS = ("tree", "boss", "town", "mule", "woman", "green", "old", "big")
INSERTION_WORDS = ("of", "the")


@dataclass
class DecodeInstance:
    """One self-contained decoding problem."""

    x: SourceSentence
    lattice: OptionLattice
    tree: ConstraintTree | None
    scorer: TableScorer
    empty_model: FixedOmissionModel | None
    config: DecoderConfig
    tagged_line: str | None = None
    constraints: list[LexicalConstraint] = field(default_factory=list)

    def decode_args(self) -> tuple:
        return (self.x, self.lattice, self.tree, self.scorer, self.empty_model)


def _random_scorer(rng: random.Random) -> TableScorer:
    """Bigram fixture with a random log probability for every
    (previous word, word) pair, so scores depend on word order and
    near-ties are vanishingly rare."""
    words = TARGET_WORDS + INSERTION_WORDS
    transitions = {}
    ends = {(): -rng.uniform(0.05, 1.5)}
    for prev in [()] + [(w,) for w in words]:
        if prev:
            ends[prev] = -rng.uniform(0.05, 1.5)
        for word in words:
            transitions[(prev, word)] = -rng.uniform(0.1, 3.0)
    return TableScorer(transitions, ends, default=-4.0, end_default=-2.0, context=1)


def _random_table(rng: random.Random, tokens: list[str], max_entries: int = 12) -> PhraseTable:
    """Random phrase table guaranteed to cover every source word, so
    generated instances always admit at least one derivation."""
    entries = []
    seen = set()

    def add(source, width):
        target = tuple(rng.choice(TARGET_WORDS) for _ in range(width))
        if (source, target) not in seen:
            seen.add((source, target))
            entries.append(PhraseTableEntry(source, target, rng.uniform(0.1, 1.0)))

    for word in dict.fromkeys(tokens):
        add((word,), 1)
    extras = rng.randint(0, max(0, min(4, max_entries - len(entries))))
    for _ in range(extras):
        if len(tokens) >= 2 and rng.random() < 0.5:
            start = rng.randrange(len(tokens) - 1)
            add(tuple(tokens[start : start + 2]), rng.randint(1, 2))
        else:
            add((rng.choice(tokens),), rng.randint(1, 2))
    return PhraseTable(entries[:max_entries])


def _sample_disjoint_spans(
    rng: random.Random, source_len: int, count: int, max_width: int = 2
) -> list[tuple[int, int]]:
    spans = []
    starts = list(range(1, source_len + 1))
    rng.shuffle(starts)
    for start in starts:
        if len(spans) == count:
            break
        width = rng.randint(1, max_width)
        end = min(start + width - 1, source_len)
        if all(end < b or start > e for (b, e) in spans):
            spans.append((start, end))
    return sorted(spans)


def _random_tagged_tokens(rng: random.Random, tokens: list[str], max_depth: int = 3) -> list[str]:
    """Wrap random nested spans of the sentence in constraint tags."""
    source_len = len(tokens)
    spans = []  # (i_b, i_e, depth)
    for top in _sample_disjoint_spans(rng, source_len, rng.randint(1, 2), max_width=source_len):
        spans.append((top[0], top[1], 1))
        parent = top
        for depth in range(2, max_depth + 1):
            if rng.random() < 0.5:
                break
            b = rng.randint(parent[0], parent[1])
            e = rng.randint(b, parent[1])
            spans.append((b, e, depth))
            parent = (b, e)
    # outer tags open first and close last; equal spans nest by depth
    spans.sort(key=lambda s: (s[0], -(s[1] - s[0]), s[2]))
    out = []
    for pos in range(1, source_len + 1):
        for idx, (b, e, _) in enumerate(spans):
            if b == pos:
                out.append(f"<c{idx + 1}>")
        out.append(tokens[pos - 1])
        for idx, (b, e, _) in reversed(list(enumerate(spans))):
            if e == pos:
                out.append(f"</c{idx + 1}>")
    return out


def random_decode_instance(rng: random.Random, structured: bool = False) -> DecodeInstance:
    """Small instance for the oracle suite: short sentence, a dozen
    table entries at most, optional insertion and omission options,
    optional constraint tags."""
    source_len = rng.choices((2, 3, 4, 5), weights=(30, 35, 25, 10))[0]
    tokens = [rng.choice(SOURCE_WORDS) for _ in range(source_len)]
    table = _random_table(rng, tokens)
    insertions = None
    max_insertions = 0
    if rng.random() < 0.6:
        words = rng.sample(INSERTION_WORDS, rng.randint(1, 2))
        insertions = InsertionVocab({w: 0.5 for w in words})
        max_insertions = rng.choices((0, 1, 2), weights=(20, 60, 20))[0]
    empty_model = None
    omission_positions = rng.sample(range(1, source_len + 1), rng.randint(0, min(2, source_len)))
    if omission_positions:
        empty_model = FixedOmissionModel({i: rng.uniform(0.55, 0.95) for i in omission_positions})
    tree = None
    tagged_line = None
    if structured:
        tagged_tokens = _random_tagged_tokens(rng, tokens)
        x, tree = parse_tagged(tagged_tokens)
        tagged_line = " ".join(tagged_tokens)
    else:
        x = SourceSentence(tuple(tokens))
    lattice = collect_options(x, table, insertions, options_per_span=20, max_source_len=2)
    if empty_model is not None:
        lattice = add_omission_options(lattice, x, empty_model, threshold=0.5)
    if tree is not None:
        lattice = apply_structural(lattice, tree)
    config = DecoderConfig(
        beam=8,
        max_target_len=source_len + 3,
        alpha=rng.choice((0.0, 0.6, 1.0)),
        max_insertions=max_insertions,
        max_consecutive_insertions=rng.choice((1, 2)),
    )
    return DecodeInstance(x, lattice, tree, _random_scorer(rng), empty_model, config, tagged_line)


def random_lexical_instance(rng: random.Random) -> DecodeInstance:
    """Instance with 1 to 3 disjoint lexical constraints applied."""
    source_len = rng.randint(3, 6)
    tokens = [rng.choice(SOURCE_WORDS) for _ in range(source_len)]
    x = SourceSentence(tuple(tokens))
    table = _random_table(rng, tokens)
    insertions = None
    max_insertions = 0
    if rng.random() < 0.5:
        insertions = InsertionVocab({rng.choice(INSERTION_WORDS): 0.5})
        max_insertions = 1
    empty_model = None
    omission_positions = rng.sample(range(1, source_len + 1), rng.randint(0, 2))
    if omission_positions:
        empty_model = FixedOmissionModel({i: rng.uniform(0.55, 0.95) for i in omission_positions})
    lattice = collect_options(x, table, insertions, options_per_span=20, max_source_len=2)
    if empty_model is not None:
        lattice = add_omission_options(lattice, x, empty_model, threshold=0.5)
    spans = _sample_disjoint_spans(rng, source_len, rng.randint(1, 3))
    constraints = [
        LexicalConstraint(span, tuple(rng.choice(TARGET_WORDS) for _ in range(rng.randint(1, 2))))
        for span in spans
    ]
    lattice = apply_lexical(lattice, constraints)
    config = DecoderConfig(
        beam=16,
        max_target_len=2 * source_len + 4,
        max_insertions=max_insertions,
    )
    return DecodeInstance(x, lattice, None, _random_scorer(rng), empty_model, config, None, constraints)


def random_structural_instance(rng: random.Random) -> DecodeInstance:
    """Tagged instance (nesting depth up to 3) with structural filtering."""
    source_len = rng.randint(3, 6)
    tokens = [rng.choice(SOURCE_WORDS) for _ in range(source_len)]
    tagged_tokens = _random_tagged_tokens(rng, tokens, max_depth=3)
    x, tree = parse_tagged(tagged_tokens)
    table = _random_table(rng, tokens)
    insertions = None
    max_insertions = 0
    if rng.random() < 0.5:
        insertions = InsertionVocab({rng.choice(INSERTION_WORDS): 0.5})
        max_insertions = 1
    empty_model = None
    omission_positions = rng.sample(range(1, source_len + 1), rng.randint(0, 2))
    if omission_positions:
        empty_model = FixedOmissionModel({i: rng.uniform(0.55, 0.95) for i in omission_positions})
    lattice = collect_options(x, table, insertions, options_per_span=20, max_source_len=2)
    if empty_model is not None:
        lattice = add_omission_options(lattice, x, empty_model, threshold=0.5)
    lattice = apply_structural(lattice, tree)
    config = DecoderConfig(
        beam=16,
        max_target_len=2 * source_len + 4,
        max_insertions=max_insertions,
    )
    return DecodeInstance(
        x, lattice, tree, _random_scorer(rng), empty_model, config, " ".join(tagged_tokens)
    )


@dataclass
class OracleRecord:
    """Outcome of one decode-vs-exhaustive comparison."""

    index: int
    source_len: int
    oracle_items: int
    oracle_score: float
    beam_score: float
    score_gap: float
    bound_ok: bool
    small_beams_ok: bool

    @property
    def ok(self) -> bool:
        return self.score_gap <= 1e-9 and self.bound_ok and self.small_beams_ok


@dataclass
class OracleSuiteResult:
    records: list[OracleRecord]
    skipped: int
    elapsed: float

    @property
    def failures(self) -> list[OracleRecord]:
        return [r for r in self.records if not r.ok]

    def summary(self) -> str:
        return (
            f"{len(self.records)} instances, {len(self.records) - len(self.failures)} passed, "
            f"{len(self.failures)} failed, {self.skipped} skipped as too large, "
            f"{self.elapsed:.1f}s"
        )


def _within_bound(counters: DecodeCounters, beam: int, config: DecoderConfig, n_options: int) -> bool:
    return counters.translate_ops <= beam * config.max_target_len * n_options


def run_oracle_suite(
    instances: int = 500,
    seed: int = 0,
    cap: int = 30_000,
    tolerance: float = 1e-9,
    small_beams: tuple[int, ...] = (1, 4),
) -> OracleSuiteResult:
    """Compare decode against brute_force_decode on random instances.

    Each instance is solved exhaustively, then with a beam as large as
    the exhaustive item count (where beam search must match the optimum
    to within the tolerance), then with small beams (whose results may
    be worse but never better, and whose Translate counts must respect
    the beam x max_target_len x options work bound). Instances whose
    exhaustive search exceeds the cap are skipped and replaced.
    """
    rng = random.Random(seed)
    records: list[OracleRecord] = []
    skipped = 0
    attempts = 0
    start = time.perf_counter()
    while len(records) < instances and attempts < 4 * instances:
        attempts += 1
        inst = random_decode_instance(rng, structured=rng.random() < 0.3)
        oracle_counters = DecodeCounters()
        try:
            oracle = brute_force_decode(
                *inst.decode_args(), config=inst.config, counters=oracle_counters, cap=cap
            )
        except OracleSpaceError:
            skipped += 1
            continue
        n_options = len(inst.lattice.all_options())
        big_beam = max(1, oracle_counters.items_created)
        big_config = replace(inst.config, beam=big_beam)
        big_counters = DecodeCounters()
        result = decode(*inst.decode_args(), config=big_config, counters=big_counters)
        bound_ok = _within_bound(big_counters, big_beam, inst.config, n_options)
        small_ok = True
        for beam in small_beams:
            small_config = replace(inst.config, beam=beam)
            small_counters = DecodeCounters()
            try:
                small = decode(*inst.decode_args(), config=small_config, counters=small_counters)
                if small.score > oracle.score + tolerance:
                    small_ok = False
            except NoDerivationError:
                pass
            if not _within_bound(small_counters, beam, inst.config, n_options):
                small_ok = False
        records.append(
            OracleRecord(
                index=len(records),
                source_len=len(inst.x),
                oracle_items=oracle_counters.items_created,
                oracle_score=oracle.score,
                beam_score=result.score,
                score_gap=abs(result.score - oracle.score),
                bound_ok=bound_ok,
                small_beams_ok=small_ok,
            )
        )
    return OracleSuiteResult(records, skipped, time.perf_counter() - start)


def separable_empty_corpus(
    rng: random.Random, sentences: int = 1000
) -> list[tuple[SourceSentence, UnalignedIndicator]]:
    """Labeled corpus where the word 'ga' is unaligned exactly when it
    appears, so a single feature separates the classes perfectly."""
    out = []
    for _ in range(sentences):
        length = rng.randint(3, 8)
        tokens = []
        flags = []
        for _ in range(length):
            if rng.random() < 0.25:
                tokens.append("ga")
                flags.append(1)
            else:
                tokens.append(rng.choice(SOURCE_WORDS[:5]))
                flags.append(0)
        out.append((SourceSentence(tuple(tokens)), UnalignedIndicator(tuple(flags))))
    return out


ABLATION_PAIRS = {
    "als": "tree",
    "baum": "boss",
    "chef": "town",
    "dorf": "mule",
    "esel": "woman",
}


def ablation_corpus(
    rng: random.Random, sentences: int = 60
) -> list[tuple[tuple[str, ...], tuple[str, ...], tuple[tuple[int, int], ...]]]:
    """Aligned parallel corpus where source 'ga' never aligns to
    anything and target 'de' appears only as an unaligned insertion.
    The first sentence always contains both, so a system without empty
    phrases cannot reach that reference at all."""
    rows = [
        (("als", "ga", "baum"), ("tree", "de", "boss"), ((1, 1), (3, 3))),
    ]
    words = list(ABLATION_PAIRS)
    for _ in range(sentences - 1):
        count = rng.randint(2, 4)
        src: list[str] = []
        tgt: list[str] = []
        links: list[tuple[int, int]] = []
        for _ in range(count):
            word = rng.choice(words)
            src.append(word)
            tgt.append(ABLATION_PAIRS[word])
            links.append((len(src), len(tgt)))
            if rng.random() < 0.5:
                src.append("ga")
            if rng.random() < 0.4:
                tgt.append("de")
        rows.append((tuple(src), tuple(tgt), tuple(links)))
    return rows
