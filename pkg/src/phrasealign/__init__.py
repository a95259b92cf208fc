"""Constrained phrase-lattice decoding with explicit phrase alignments.

The decoder translates a source sentence by covering it with phrase
options (including source-word omissions and target-word insertions)
under structural tag constraints and lexical pins, and returns both the
target sentence and the phrase alignment that produced it.
"""

from .bleu import BleuReport, compute_bleu
from .constraints import (
    ConstraintNode,
    ConstraintTree,
    LexicalConstraint,
    apply_lexical,
    apply_structural,
    is_tag_token,
    locate_constraint_occurrences,
    parse_lexical_line,
    parse_tagged,
    root_only_tree,
    serialize_tagged,
)
from .core import (
    AlignmentLink,
    CoverageVector,
    PhraseAlignment,
    SourceSentence,
    TargetSentence,
    alignment_validate,
    coverage_for_span,
    coverage_merge,
    coverage_new,
)
from .decoder import (
    DecodeCounters,
    DecoderConfig,
    Derivation,
    brute_force_decode,
    decode,
    final_score,
    reference_logprob,
    rule_pop,
    rule_push,
    rule_translate,
)
from .errors import (
    ConstraintOverlapError,
    CorpusMismatchError,
    CoverageConflictError,
    EmptyCorpusError,
    LineFormatError,
    MarkupError,
    NoDerivationError,
    OracleSpaceError,
    PhraseAlignError,
    RuleNotApplicable,
)
from .phrasetable import (
    InsertionVocab,
    OptionLattice,
    PhraseTable,
    PhraseTableEntry,
    TranslationOption,
    add_omission_options,
    build_insertion_vocab,
    collect_options,
    extract_phrase_table,
    load_insertion_vocab,
    load_phrase_table,
    parse_alignment_line,
    save_insertion_vocab,
    save_phrase_table,
)
from .scorer import (
    EmptyPhraseModel,
    FixedOmissionModel,
    NgramScorer,
    SequenceScorer,
    TableScorer,
    TrainConfig,
    UniformScorer,
    load_empty_model,
    load_scorer,
    mark_unaligned,
    save_empty_model,
    train_empty_model,
)

__version__ = "0.1.0"
