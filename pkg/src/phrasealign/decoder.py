"""Deductive decoding over a translation-option lattice.

An item is [coverage, tag stack, partial target, alignment] plus its
accumulated log probability and scorer state. Three rules grow items:
Translate applies an option (regular phrase, omission, or insertion),
Push emits a constraint tag, and Pop removes a completed open/close
pair. Tags cost nothing, do not advance the scorer, and do not count
toward target length, so closing tags and their Pops are applied
eagerly as forced moves, and an opening tag is fused with the first
Translate into its constraint.

Search organizes items in a matrix indexed by (source words covered,
target words generated) and prunes to the best beam-many items per
target-word count. Omissions move items within a column, so columns
are processed in coverage-ascending waves; at most beam items are
expanded per column and at most beam x max_target_len in total, which
bounds Translate applications by beam x max_target_len x options. An
exhaustive depth-first twin over the same expansion code serves as a
testing oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .core import (
    AlignmentLink,
    CoverageVector,
    PhraseAlignment,
    SourceSentence,
    TargetSentence,
    coverage_new,
)
from .constraints import ConstraintTree, root_only_tree
from .errors import NoDerivationError, OracleSpaceError, RuleNotApplicable
from .phrasetable import INSERTION, OMISSION, OptionLattice, TranslationOption


@dataclass(frozen=True)
class DecoderConfig:
    """Search limits and scoring knobs.

    max_target_len and max_insertions default per sentence (2I + 10 and
    ceil(I/2)) when left unset. Insertions are further limited to
    max_consecutive_insertions adjacent insertion links.
    """

    beam: int = 8
    max_target_len: int | None = None
    alpha: float = 0.6
    max_insertions: int | None = None
    max_consecutive_insertions: int = 2
    omission_threshold: float = 0.5
    options_per_span: int = 20

    def __post_init__(self):
        if self.beam < 1:
            raise ValueError("beam must be at least 1")
        if self.max_target_len is not None and self.max_target_len < 1:
            raise ValueError("max_target_len must be at least 1")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.max_insertions is not None and self.max_insertions < 0:
            raise ValueError("max_insertions must be non-negative")
        if self.max_consecutive_insertions < 0:
            raise ValueError("max_consecutive_insertions must be non-negative")
        if self.options_per_span < 1:
            raise ValueError("options_per_span must be at least 1")


class DecoderItem(NamedTuple):
    """One partial hypothesis.

    stack holds node ids of currently open constraints (a close tag
    pushed by rule_push appears as the negated id until rule_pop
    removes the pair). target carries emitted tokens including literal
    tag tokens; word_count counts only real words.
    """

    coverage: CoverageVector
    stack: tuple[int, ...]
    target: tuple[str, ...]
    links: tuple[AlignmentLink, ...]
    state: object
    logp: float
    word_count: int
    ins_total: int
    ins_run: int


class DecodeCounters:
    """Instrumentation for search-effort assertions and --stats output."""

    def __init__(self):
        self.items_created = 0
        self.items_expanded = 0
        self.items_pruned = 0
        self.recombinations = 0
        self.translate_ops = 0
        self.push_ops = 0
        self.pop_ops = 0

    def as_dict(self) -> dict[str, int]:
        return dict(vars(self))


@dataclass(frozen=True)
class Derivation:
    """A completed hypothesis: translation with tags in emission order,
    its phrase alignment over real word positions, and scores."""

    translation: TargetSentence
    alignment: PhraseAlignment
    score: float
    raw_logp: float
    word_count: int
    num_insertions: int

    def record(self) -> str:
        return f"{' '.join(self.translation.tokens)}\t{self.alignment.to_line()}\t{self.score:.6f}"


def final_score(raw_logp: float, word_count: int, alpha: float) -> float:
    """Length-normalized score raw_logp / ((5 + n) / 6)^alpha."""
    if word_count < 0:
        raise ValueError("word_count must be non-negative")
    return raw_logp / (((5 + word_count) / 6) ** alpha)


class DecodeContext:
    """Per-sentence read-only bundle shared by all rule applications:
    the sentence, constraint tree, models, resolved limits, cached
    omission log probabilities, and the option order."""

    def __init__(self, x, lattice, tree, scorer, empty_model, config, counters):
        self.x = x
        self.lattice = lattice
        self.tree = tree if tree is not None else root_only_tree(len(x))
        self.scorer = scorer
        self.empty_model = empty_model
        self.config = config
        self.counters = counters if counters is not None else DecodeCounters()
        source_len = len(x)
        if lattice.source_len != source_len:
            raise ValueError("lattice built for a different sentence length")
        self.max_len = config.max_target_len if config.max_target_len is not None else 2 * source_len + 10
        self.max_ins = config.max_insertions if config.max_insertions is not None else (source_len + 1) // 2
        self.options = lattice.all_options()
        self.omission_logp: dict[int, float] = {}
        for opt in self.options:
            if opt.kind == OMISSION:
                if empty_model is None:
                    raise ValueError("lattice has omission options but no empty-phrase model was given")
                p = empty_model.score_omission(x, opt.span[0])
                if not 0.0 < p <= 1.0:
                    raise ValueError(f"omission probability {p} at position {opt.span[0]} outside (0, 1]")
                self.omission_logp[opt.span[0]] = math.log(p)
        self.enclosing: dict[tuple[int, int], int | None] = {}
        for opt in self.options:
            if opt.kind != INSERTION and opt.span not in self.enclosing:
                self.enclosing[opt.span] = self.tree.innermost_enclosing(opt.span)

    def start_item(self) -> DecoderItem:
        return DecoderItem(
            coverage=coverage_new(len(self.x)),
            stack=(),
            target=(),
            links=(),
            state=self.scorer.begin(self.x),
            logp=0.0,
            word_count=0,
            ins_total=0,
            ins_run=0,
        )


def _top_node(item: DecoderItem) -> int:
    """Innermost open constraint; the sentence root when none is open."""
    return item.stack[-1] if item.stack else 0


def rule_translate(item: DecoderItem, option: TranslationOption, ctx: DecodeContext) -> DecoderItem:
    """Apply a translation option to an item.

    Regular and omission options must cover uncovered source words
    lying within the constraint at the top of the stack (innermost
    open constraint); insertions apply anywhere subject to the
    insertion budget. Raises RuleNotApplicable when a precondition
    fails.
    """
    if any(entry < 0 for entry in item.stack):
        raise RuleNotApplicable("a close tag is pending on the stack")
    if option.kind == INSERTION:
        if item.ins_total + 1 > ctx.max_ins:
            raise RuleNotApplicable("insertion budget exhausted")
        if item.ins_run + 1 > ctx.config.max_consecutive_insertions:
            raise RuleNotApplicable("too many consecutive insertions")
        if item.word_count + 1 > ctx.max_len:
            raise RuleNotApplicable("target length limit reached")
        state, logp = ctx.scorer.extend(item.state, option.target[0])
        j = item.word_count + 1
        ctx.counters.translate_ops += 1
        return item._replace(
            target=item.target + option.target,
            links=item.links + (AlignmentLink(0, 0, j, j),),
            state=state,
            logp=item.logp + logp,
            word_count=j,
            ins_total=item.ins_total + 1,
            ins_run=item.ins_run + 1,
        )
    if item.coverage.mask & option.coverage.mask:
        raise RuleNotApplicable("option span already covered")
    enclosing = ctx.enclosing.get(option.span)
    if enclosing is None:
        enclosing = ctx.tree.innermost_enclosing(option.span)
    if enclosing != _top_node(item):
        raise RuleNotApplicable("option span is not within the innermost open constraint")
    coverage = CoverageVector(item.coverage.mask | option.coverage.mask, item.coverage.length)
    if option.kind == OMISSION:
        position = option.span[0]
        logp = ctx.omission_logp.get(position)
        if logp is None:
            if ctx.empty_model is None:
                raise ValueError("omission option requires an empty-phrase model")
            logp = math.log(ctx.empty_model.score_omission(ctx.x, position))
        ctx.counters.translate_ops += 1
        return item._replace(
            coverage=coverage,
            links=item.links + (AlignmentLink(position, position, 0, 0),),
            logp=item.logp + logp,
            ins_run=0,
        )
    if item.word_count + len(option.target) > ctx.max_len:
        raise RuleNotApplicable("target length limit reached")
    state = item.state
    logp = item.logp
    for token in option.target:
        state, word_logp = ctx.scorer.extend(state, token)
        logp += word_logp
    j_b = item.word_count + 1
    j_e = item.word_count + len(option.target)
    ctx.counters.translate_ops += 1
    return item._replace(
        coverage=coverage,
        target=item.target + option.target,
        links=item.links + (AlignmentLink(option.span[0], option.span[1], j_b, j_e),),
        state=state,
        logp=logp,
        word_count=j_e,
        ins_run=0,
    )


def _resolve_tag(tag, ctx: DecodeContext, item: DecoderItem) -> tuple[int, bool]:
    """Map a literal tag token (or a node id) to (node_id, closing)."""
    if isinstance(tag, int):
        node = ctx.tree.node(abs(tag))
        return abs(tag), tag < 0
    for node in ctx.tree.nodes():
        if node.node_id == 0:
            continue
        if node.open_token == tag or node.close_token == tag:
            closing = node.close_token == tag and node.open_token != tag
            # identical-looking tags: prefer the child of the current top
            # for opens and the current top itself for closes
            if not closing and ctx.tree.parent_id(node.node_id) == _top_node(item):
                return node.node_id, False
            if closing and _top_node(item) == node.node_id:
                return node.node_id, True
    raise RuleNotApplicable(f"no applicable constraint node for tag {tag!r}")


def rule_push(item: DecoderItem, tag, ctx: DecodeContext) -> DecoderItem:
    """Push a constraint tag and emit its literal token.

    An open tag requires its node to be a fully uncovered child of the
    innermost open constraint; a close tag requires its node to be the
    innermost open constraint with all its source words covered. Tags
    are unscored and do not count as target words.
    """
    node_id, closing = _resolve_tag(tag, ctx, item)
    node = ctx.tree.node(node_id)
    bits = ctx.tree.span_bits(node_id)
    if closing:
        if _top_node(item) != node_id:
            raise RuleNotApplicable("close tag does not match the innermost open constraint")
        if item.coverage.mask & bits != bits:
            raise RuleNotApplicable("constraint has uncovered source words")
        ctx.counters.push_ops += 1
        return item._replace(stack=item.stack + (-node_id,), target=item.target + (node.close_token,))
    if any(entry < 0 for entry in item.stack):
        raise RuleNotApplicable("a close tag is pending on the stack")
    if ctx.tree.parent_id(node_id) != _top_node(item):
        raise RuleNotApplicable("open tag is not a child of the innermost open constraint")
    if item.coverage.mask & bits:
        raise RuleNotApplicable("constraint already has covered source words")
    ctx.counters.push_ops += 1
    return item._replace(stack=item.stack + (node_id,), target=item.target + (node.open_token,))


def rule_pop(item: DecoderItem, ctx: DecodeContext) -> DecoderItem:
    """Pop a matched open/close pair from the top of the stack."""
    if len(item.stack) < 2 or item.stack[-1] != -item.stack[-2] or item.stack[-2] < 0:
        raise RuleNotApplicable("top of stack is not a matched open/close pair")
    ctx.counters.pop_ops += 1
    return item._replace(stack=item.stack[:-2])


def _expand(item: DecoderItem, option: TranslationOption, ctx: DecodeContext) -> DecoderItem | None:
    """One fused search step: open tags on the path to the option's
    constraint, the Translate itself, then all forced closes. Returns
    None when any precondition fails."""
    if option.kind == INSERTION:
        if (
            item.ins_total + 1 > ctx.max_ins
            or item.ins_run + 1 > ctx.config.max_consecutive_insertions
            or item.word_count + 1 > ctx.max_len
        ):
            return None
        return rule_translate(item, option, ctx)
    if item.coverage.mask & option.coverage.mask:
        return None
    if option.kind != OMISSION and item.word_count + len(option.target) > ctx.max_len:
        return None
    target_node = ctx.enclosing.get(option.span)
    if target_node is None:
        return None
    top = _top_node(item)
    if target_node != top:
        chain = ctx.tree.open_chain(top, target_node)
        if chain is None:
            return None
        for node_id in chain:
            if item.coverage.mask & ctx.tree.span_bits(node_id):
                return None
        for node_id in chain:
            item = rule_push(item, node_id, ctx)
    item = rule_translate(item, option, ctx)
    # forced moves: close every constraint that just became fully covered
    while item.stack:
        node_id = item.stack[-1]
        bits = ctx.tree.span_bits(node_id)
        if item.coverage.mask & bits != bits:
            break
        item = rule_push(item, -node_id, ctx)
        item = rule_pop(item, ctx)
    return item


def _rank_key(item: DecoderItem):
    """Total deterministic order: better logp first, then stable
    tie-breaking fields."""
    return (-item.logp, item.ins_total, item.target, item.coverage.mask, item.stack, item.state)


def _recombination_key(item: DecoderItem):
    """Items agreeing on these fields have identical expansion futures,
    so only the best-scoring representative is kept. The insertion
    counters are part of the key because the remaining insertion budget
    changes which expansions are legal."""
    return (item.coverage.mask, item.stack, item.state, item.ins_total, item.ins_run)


class _Completion(NamedTuple):
    sort_key: tuple
    derivation: Derivation


def _complete(item: DecoderItem, ctx: DecodeContext) -> _Completion | None:
    if not item.coverage.is_full or item.stack:
        return None
    raw = item.logp + ctx.scorer.end(item.state)
    score = final_score(raw, item.word_count, ctx.config.alpha)
    derivation = Derivation(
        translation=TargetSentence(item.target),
        alignment=PhraseAlignment(item.links),
        score=score,
        raw_logp=raw,
        word_count=item.word_count,
        num_insertions=item.ins_total,
    )
    return _Completion((-score, item.ins_total, item.target), derivation)


def _no_derivation(ctx: DecodeContext, best_partial: DecoderItem | None) -> NoDerivationError:
    coverable = 0
    for opt in ctx.options:
        if opt.kind != INSERTION:
            coverable |= opt.coverage.mask
    never = [i for i in range(1, len(ctx.x) + 1) if not (coverable >> (i - 1)) & 1]
    if never:
        return NoDerivationError(
            f"no translation option covers source positions {', '.join(map(str, never))}",
            uncovered=never,
        )
    left = best_partial.coverage.uncovered_positions() if best_partial is not None else tuple(range(1, len(ctx.x) + 1))
    return NoDerivationError(
        "search exhausted without completing a hypothesis; "
        f"best attempt left positions {', '.join(map(str, left))} uncovered",
        uncovered=left,
    )


def decode(
    x: SourceSentence,
    lattice: OptionLattice,
    tree: ConstraintTree | None,
    scorer,
    empty_model=None,
    config: DecoderConfig = DecoderConfig(),
    counters: DecodeCounters | None = None,
) -> Derivation:
    """Beam search over the item matrix; returns the best derivation by
    length-normalized score, ties broken by fewer insertions then
    lexicographic target order.

    Columns (one per generated word count) are processed in order;
    inside a column, items are expanded in coverage-ascending waves so
    omission results created within the column still get their turn.
    Only items ranking in the column's current top-beam are expanded,
    at most beam expansions happen per column, and at most
    beam x max_target_len expansions happen overall. The overall budget
    never binds when the beam covers the whole item population, so it
    only trims the most omission-heavy searches at small beams.
    """
    ctx = DecodeContext(x, lattice, tree, scorer, empty_model, config, counters)
    beam = config.beam
    budget = beam * ctx.max_len
    columns: list[dict] = [dict() for _ in range(ctx.max_len + 1)]
    completions: list[_Completion] = []
    best_partial: DecoderItem | None = None

    def insert(child: DecoderItem):
        nonlocal best_partial
        column = columns[child.word_count]
        key = _recombination_key(child)
        incumbent = column.get(key)
        if incumbent is None:
            column[key] = child
            ctx.counters.items_created += 1
        elif child.logp > incumbent.logp:
            column[key] = child
            ctx.counters.recombinations += 1
        else:
            ctx.counters.recombinations += 1
            return
        done = _complete(child, ctx)
        if done is not None:
            completions.append(done)
        if best_partial is None or child.coverage.covered_count > best_partial.coverage.covered_count:
            best_partial = child

    insert(ctx.start_item())
    total_expanded = 0
    for column in columns:
        if not column or total_expanded >= budget:
            continue
        expanded = 0
        for covered in range(0, len(x) + 1):
            if expanded >= beam or total_expanded >= budget:
                break
            wave = sorted(
                (item for item in column.values() if item.coverage.covered_count == covered),
                key=_rank_key,
            )
            if not wave:
                continue
            eligible = {id(item) for item in sorted(column.values(), key=_rank_key)[:beam]}
            for item in wave:
                if expanded >= beam or total_expanded >= budget:
                    break
                if id(item) not in eligible:
                    ctx.counters.items_pruned += 1
                    continue
                expanded += 1
                total_expanded += 1
                ctx.counters.items_expanded += 1
                for option in ctx.options:
                    child = _expand(item, option, ctx)
                    if child is not None:
                        insert(child)
    if not completions:
        raise _no_derivation(ctx, best_partial)
    return min(completions, key=lambda c: c.sort_key).derivation


def brute_force_decode(
    x: SourceSentence,
    lattice: OptionLattice,
    tree: ConstraintTree | None,
    scorer,
    empty_model=None,
    config: DecoderConfig = DecoderConfig(),
    counters: DecodeCounters | None = None,
    cap: int = 200_000,
) -> Derivation:
    """Exhaustive depth-first twin of decode over the same expansion
    code, with no pruning and no recombination. Raises oracle-too-large
    past cap items; intended for small verification instances."""
    ctx = DecodeContext(x, lattice, tree, scorer, empty_model, config, counters)
    completions: list[_Completion] = []
    best_partial: DecoderItem | None = None
    stack = [ctx.start_item()]
    ctx.counters.items_created += 1
    while stack:
        item = stack.pop()
        if best_partial is None or item.coverage.covered_count > best_partial.coverage.covered_count:
            best_partial = item
        done = _complete(item, ctx)
        if done is not None:
            completions.append(done)
        for option in ctx.options:
            child = _expand(item, option, ctx)
            if child is not None:
                ctx.counters.items_created += 1
                if ctx.counters.items_created > cap:
                    raise OracleSpaceError(f"exhaustive search exceeded {cap} items")
                stack.append(child)
    if not completions:
        raise _no_derivation(ctx, best_partial)
    return min(completions, key=lambda c: c.sort_key).derivation


def reference_logprob(
    x: SourceSentence,
    lattice: OptionLattice,
    tree: ConstraintTree | None,
    scorer,
    reference: tuple[str, ...] | list[str],
    empty_model=None,
    config: DecoderConfig = DecoderConfig(),
    cap: int = 500_000,
) -> float | None:
    """Best raw log probability over derivations whose word sequence
    equals the reference, or None when the reference is unreachable.
    Used to compare model variants by the likelihood they assign to
    held-out translations."""
    reference = tuple(reference)
    ctx = DecodeContext(x, lattice, tree, scorer, empty_model, config, DecodeCounters())
    best: float | None = None
    created = 1
    stack = [ctx.start_item()]
    while stack:
        item = stack.pop()
        if item.coverage.is_full and not item.stack and item.word_count == len(reference):
            raw = item.logp + ctx.scorer.end(item.state)
            if best is None or raw > best:
                best = raw
        for option in ctx.options:
            if option.kind != OMISSION:
                width = len(option.target)
                if item.word_count + width > len(reference):
                    continue
                if option.target != reference[item.word_count : item.word_count + width]:
                    continue
            child = _expand(item, option, ctx)
            if child is not None:
                created += 1
                if created > cap:
                    raise OracleSpaceError(f"reference-forced search exceeded {cap} items")
                stack.append(child)
    return best
