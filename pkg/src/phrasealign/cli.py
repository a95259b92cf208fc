"""Command-line front end.

Subcommands: decode (translate lines, one tab-separated record per
line), train-empty (fit the omission model from word alignments),
extract (build a phrase table and insertion vocabulary), bleu (score
hypotheses against references), and oracle-check (run the randomized
decode-vs-exhaustive verification suite).

Settings resolve with flags taking precedence over an optional flat
`key = value` config file, which takes precedence over built-in
defaults. Exit codes: 0 success, 1 at least one sentence failed,
2 usage or config error, 3 data format error.
"""

from __future__ import annotations

import argparse
import random
import sys
from collections import Counter
from concurrent.futures import ThreadPoolExecutor

from .bleu import MODES, compute_bleu
from .constraints import (
    LexicalConstraint,
    apply_lexical,
    apply_structural,
    is_tag_token,
    locate_constraint_occurrences,
    parse_lexical_line,
    parse_tagged,
)
from .core import SourceSentence
from .decoder import DecodeCounters, DecoderConfig, decode
from .errors import (
    ConstraintOverlapError,
    CorpusMismatchError,
    EmptyCorpusError,
    LineFormatError,
    MarkupError,
    NoDerivationError,
)
from .phrasetable import (
    build_insertion_vocab,
    collect_options,
    extract_phrase_table,
    load_insertion_vocab,
    load_phrase_table,
    add_omission_options,
    parse_alignment_line,
    save_insertion_vocab,
    save_phrase_table,
)
from .scorer import (
    TrainConfig,
    load_empty_model,
    load_scorer,
    mark_unaligned,
    save_empty_model,
    train_empty_model,
)
from .synthetic import run_oracle_suite


class UsageError(Exception):
    """Bad flag combination or config value; mapped to exit code 2."""


def _read_lines(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8") as handle:
        return [line.rstrip("\n") for line in handle]


def _load_file(path: str, loader):
    with open(path, "r", encoding="utf-8") as handle:
        try:
            return loader(handle)
        except LineFormatError as exc:
            raise LineFormatError(f"{path}: {exc}") from exc


def load_config_file(path: str) -> dict[str, str]:
    """Flat `key = value` format; '#' starts a comment."""
    values = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise UsageError(f"{path}:{line_no}: expected `key = value`")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _to_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


class _Settings:
    """Flag > config file > default resolution for one subcommand."""

    def __init__(self, args: argparse.Namespace):
        self._args = args
        config_path = getattr(args, "config", None)
        self._file = load_config_file(config_path) if config_path else {}

    def get(self, key: str, default, convert=str):
        value = getattr(self._args, key, None)
        if value is not None:
            return value
        if key in self._file:
            try:
                return convert(self._file[key])
            except ValueError as exc:
                raise UsageError(f"config key {key}: {exc}") from exc
        return default


def _decoder_config(settings: _Settings) -> DecoderConfig:
    try:
        return DecoderConfig(
            beam=settings.get("beam", 8, int),
            max_target_len=settings.get("max_target_len", None, int),
            alpha=settings.get("alpha", 0.6, float),
            max_insertions=settings.get("max_insertions", None, int),
            max_consecutive_insertions=settings.get("max_consecutive_insertions", 2, int),
            omission_threshold=settings.get("omission_threshold", 0.5, float),
            options_per_span=settings.get("options_per_span", 20, int),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _decode_one(
    line_no: int,
    line: str,
    *,
    table,
    scorer,
    empty_model,
    insertions,
    lexical_pairs,
    structured: bool,
    strip_tags: bool,
    occurrences: str,
    max_source_len: int,
    config: DecoderConfig,
):
    """Decode one input line; never raises. Returns the output record,
    a success flag, warnings for stderr, and the search counters."""
    warnings: list[str] = []
    counters = DecodeCounters()
    try:
        if structured:
            x, tree = parse_tagged(line)
        else:
            tokens = tuple(line.split())
            if not tokens:
                raise MarkupError("empty source line")
            x = SourceSentence(tokens)
            tree = None
        lattice = collect_options(
            x, table, insertions, options_per_span=config.options_per_span,
            max_source_len=max_source_len,
        )
        if empty_model is not None:
            lattice = add_omission_options(lattice, x, empty_model, config.omission_threshold)
        if tree is not None:
            lattice = apply_structural(lattice, tree)
        if lexical_pairs:
            constraints = []
            for source_phrase, target_phrase in lexical_pairs:
                spans = locate_constraint_occurrences(x, source_phrase)
                if not spans:
                    warnings.append(
                        f"line {line_no}: constraint source {' '.join(source_phrase)!r} not found"
                    )
                    continue
                if occurrences == "first":
                    spans = spans[:1]
                constraints.extend(LexicalConstraint(span, target_phrase) for span in spans)
            if constraints:
                lattice = apply_lexical(lattice, constraints)
        derivation = decode(x, lattice, tree, scorer, empty_model, config, counters)
        tokens = derivation.translation.tokens
        if strip_tags:
            tokens = tuple(t for t in tokens if not is_tag_token(t))
        record = f"{' '.join(tokens)}\t{derivation.alignment.to_line()}\t{derivation.score:.6f}"
        return record, True, warnings, counters
    except MarkupError as exc:
        return f"# line {line_no}: markup error: {exc}", False, warnings, counters
    except ConstraintOverlapError as exc:
        return f"# line {line_no}: constraint overlap: {exc}", False, warnings, counters
    except NoDerivationError as exc:
        return f"# line {line_no}: no derivation: {exc}", False, warnings, counters


def cmd_decode(args: argparse.Namespace) -> int:
    settings = _Settings(args)
    table_path = settings.get("phrase_table", None)
    scorer_path = settings.get("scorer", None)
    if table_path is None or scorer_path is None:
        raise UsageError("decode requires --phrase-table and --scorer")
    config = _decoder_config(settings)
    max_source_len = settings.get("max_source_len", 7, int)
    structured = settings.get("structured", False, _to_bool)
    strip_tags = settings.get("strip_tags", False, _to_bool)
    occurrences = settings.get("occurrences", "all")
    if occurrences not in ("first", "all"):
        raise UsageError(f"--occurrences must be first or all, got {occurrences!r}")
    workers = settings.get("workers", 1, int)
    if workers < 1:
        raise UsageError("--workers must be at least 1")
    allow_failures = settings.get("allow_failures", False, _to_bool)
    show_stats = settings.get("stats", False, _to_bool)

    table = _load_file(table_path, load_phrase_table)
    scorer = _load_file(scorer_path, load_scorer)
    empty_model_path = settings.get("empty_model", None)
    empty_model = _load_file(empty_model_path, load_empty_model) if empty_model_path else None
    insertions_path = settings.get("insertion_vocab", None)
    insertions = _load_file(insertions_path, load_insertion_vocab) if insertions_path else None
    lexical_pairs = []
    lexical_path = settings.get("lexical_constraints", None)
    if lexical_path:
        for line_no, line in enumerate(_read_lines(lexical_path), start=1):
            if not line.strip():
                continue
            try:
                lexical_pairs.append(parse_lexical_line(line))
            except LineFormatError as exc:
                raise LineFormatError(f"{lexical_path}:{line_no}: {exc}") from exc

    input_path = settings.get("input", None)
    lines = _read_lines(input_path) if input_path and input_path != "-" else [
        line.rstrip("\n") for line in sys.stdin
    ]

    def work(numbered):
        line_no, line = numbered
        return _decode_one(
            line_no,
            line,
            table=table,
            scorer=scorer,
            empty_model=empty_model,
            insertions=insertions,
            lexical_pairs=lexical_pairs,
            structured=structured,
            strip_tags=strip_tags,
            occurrences=occurrences,
            max_source_len=max_source_len,
            config=config,
        )

    numbered = list(enumerate(lines, start=1))
    if workers == 1:
        results = map(work, numbered)
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(work, numbered)

    output_path = settings.get("output", None)
    out = open(output_path, "w", encoding="utf-8") if output_path and output_path != "-" else sys.stdout
    failures = 0
    totals: Counter = Counter()
    try:
        for record, ok, warnings, counters in results:
            for warning in warnings:
                print(warning, file=sys.stderr)
            out.write(record + "\n")
            if not ok:
                failures += 1
            totals.update(counters.as_dict())
    finally:
        if out is not sys.stdout:
            out.close()
        if workers > 1:
            pool.shutdown()
    if show_stats:
        stats = " ".join(f"{key}={totals[key]}" for key in sorted(totals))
        print(f"stats: sentences={len(lines)} failures={failures} {stats}", file=sys.stderr)
    if failures:
        print(f"{failures} of {len(lines)} sentences failed", file=sys.stderr)
        if not allow_failures:
            return 1
    return 0


def cmd_train_empty(args: argparse.Namespace) -> int:
    settings = _Settings(args)
    align_base = settings.get("align_base", 1, int)
    if align_base not in (0, 1):
        raise UsageError("--align-base must be 0 or 1")
    source_lines = _read_lines(args.source)
    alignment_lines = _read_lines(args.alignments)
    if len(source_lines) != len(alignment_lines):
        raise CorpusMismatchError(
            f"{len(source_lines)} source lines vs {len(alignment_lines)} alignment lines"
        )
    corpus = []
    for line_no, (src, aln) in enumerate(zip(source_lines, alignment_lines), start=1):
        tokens = tuple(src.split())
        if not tokens:
            raise LineFormatError(f"{args.source}:{line_no}: empty source line")
        try:
            pairs = parse_alignment_line(aln, base=align_base)
            indicator = mark_unaligned(pairs, len(tokens))
        except LineFormatError as exc:
            raise LineFormatError(f"{args.alignments}:{line_no}: {exc}") from exc
        corpus.append((SourceSentence(tokens), indicator))

    holdout = settings.get("holdout", 0.1, float)
    if not 0.0 <= holdout < 1.0:
        raise UsageError("--holdout must lie in [0, 1)")
    rng = random.Random(settings.get("seed", 0, int))
    held_count = int(round(holdout * len(corpus)))
    held_indices = set(rng.sample(range(len(corpus)), held_count)) if held_count else set()
    train_split = [pair for idx, pair in enumerate(corpus) if idx not in held_indices]
    held_split = [pair for idx, pair in enumerate(corpus) if idx in held_indices]
    if not train_split:
        raise UsageError("holdout fraction leaves no training data")

    try:
        train_config = TrainConfig(
            epochs=settings.get("epochs", 200, int),
            step=settings.get("step", 0.1, float),
            tolerance=settings.get("tolerance", 1e-6, float),
            window=settings.get("window", 2, int),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if train_config.epochs == 0:
        print("warning: 0 epochs requested, writing a model with initial parameters", file=sys.stderr)
    model, losses = train_empty_model(train_split, train_config)
    with open(args.output, "w", encoding="utf-8") as handle:
        save_empty_model(model, handle)

    eval_split = held_split if held_split else train_split
    correct = 0
    total = 0
    for sentence, indicator in eval_split:
        for i in range(1, len(sentence) + 1):
            predicted = 1 if model.score_omission(sentence, i) > 0.5 else 0
            correct += int(predicted == indicator.flags[i - 1])
            total += 1
    label = "held-out" if held_split else "training"
    print(f"final loss {losses[-1]:.6f} after {len(losses) - 1} steps")
    print(f"{label} accuracy {correct / total:.4f} on {total} positions")

    plot_path = settings.get("loss_plot", None)
    if plot_path:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(range(len(losses)), losses)
        ax.set_xlabel("step")
        ax.set_ylabel("mean cross entropy")
        ax.set_title("omission model training loss")
        fig.tight_layout()
        fig.savefig(plot_path)
        plt.close(fig)
    return 0


def cmd_extract(args: argparse.Namespace) -> int:
    settings = _Settings(args)
    align_base = settings.get("align_base", 1, int)
    if align_base not in (0, 1):
        raise UsageError("--align-base must be 0 or 1")
    source_lines = _read_lines(args.source)
    target_lines = _read_lines(args.target)
    alignment_lines = _read_lines(args.alignments)
    if not len(source_lines) == len(target_lines) == len(alignment_lines):
        raise CorpusMismatchError(
            f"{len(source_lines)} source vs {len(target_lines)} target vs "
            f"{len(alignment_lines)} alignment lines"
        )
    corpus = []
    for line_no, (src, tgt, aln) in enumerate(
        zip(source_lines, target_lines, alignment_lines), start=1
    ):
        try:
            pairs = parse_alignment_line(aln, base=align_base)
        except LineFormatError as exc:
            raise LineFormatError(f"{args.alignments}:{line_no}: {exc}") from exc
        corpus.append((tuple(src.split()), tuple(tgt.split()), tuple(pairs)))

    max_phrase_len = settings.get("max_phrase_len", 7, int)
    if max_phrase_len < 1:
        raise UsageError("--max-phrase-len must be at least 1")
    table = extract_phrase_table(corpus, max_phrase_len=max_phrase_len)
    with open(args.phrase_table, "w", encoding="utf-8") as handle:
        save_phrase_table(table, handle)
    print(f"extracted {len(table)} phrase pairs to {args.phrase_table}")

    vocab_path = settings.get("insertion_vocab", None)
    if vocab_path:
        threshold = settings.get("threshold", 0.2, float)
        if not 0.0 <= threshold <= 1.0:
            raise UsageError("--threshold must lie in [0, 1]")
        max_words = settings.get("max_words", 50, int)
        vocab = build_insertion_vocab(corpus, threshold=threshold, max_words=max_words)
        with open(vocab_path, "w", encoding="utf-8") as handle:
            save_insertion_vocab(vocab, handle)
        print(f"kept {len(vocab)} insertable words in {vocab_path}")
    return 0


def cmd_bleu(args: argparse.Namespace) -> int:
    hyp_lines = _read_lines(args.hypothesis)
    ref_lines = _read_lines(args.reference)
    try:
        report = compute_bleu(hyp_lines, ref_lines, mode=args.mode)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(report.format())
    return 0


def cmd_oracle_check(args: argparse.Namespace) -> int:
    result = run_oracle_suite(instances=args.instances, seed=args.seed, cap=args.cap)
    print(result.summary())
    for record in result.failures:
        print(
            f"FAIL instance {record.index}: score gap {record.score_gap:.2e}, "
            f"bound ok {record.bound_ok}, small beams ok {record.small_beams_ok}"
        )
    if result.failures or len(result.records) < args.instances:
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phrasealign",
        description="Phrase-lattice decoder with explicit alignment output",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("decode", help="translate lines of source text")
    p.add_argument("--input", help="source text file, one sentence per line (default stdin)")
    p.add_argument("--output", help="output file (default stdout)")
    p.add_argument("--phrase-table", dest="phrase_table", help="phrase table file")
    p.add_argument("--scorer", help="serialized sequence scorer file")
    p.add_argument("--empty-model", dest="empty_model", help="omission model file")
    p.add_argument("--insertion-vocab", dest="insertion_vocab", help="insertable-word file")
    p.add_argument("--lexical-constraints", dest="lexical_constraints",
                   help="file of `source ||| target` phrase pins")
    p.add_argument("--structured", action="store_true", default=None,
                   help="parse constraint tags in the input")
    p.add_argument("--strip-tags", dest="strip_tags", action="store_true", default=None,
                   help="drop tag tokens from the translation field")
    p.add_argument("--occurrences", choices=("first", "all"),
                   help="which occurrences of a lexical constraint to pin (default all)")
    p.add_argument("--beam", type=int, help="beam width (default 8)")
    p.add_argument("--alpha", type=float, help="length penalty exponent (default 0.6)")
    p.add_argument("--max-target-len", dest="max_target_len", type=int,
                   help="target length cap (default 2I + 10)")
    p.add_argument("--max-insertions", dest="max_insertions", type=int,
                   help="insertion budget per sentence (default ceil(I/2))")
    p.add_argument("--max-consecutive-insertions", dest="max_consecutive_insertions", type=int,
                   help="adjacent-insertion cap (default 2)")
    p.add_argument("--omission-threshold", dest="omission_threshold", type=float,
                   help="minimum omission probability (default 0.5)")
    p.add_argument("--options-per-span", dest="options_per_span", type=int,
                   help="table candidates kept per source span (default 20)")
    p.add_argument("--max-source-len", dest="max_source_len", type=int,
                   help="longest source span matched against the table (default 7)")
    p.add_argument("--workers", type=int, help="worker pool size (default 1)")
    p.add_argument("--allow-failures", dest="allow_failures", action="store_true", default=None,
                   help="exit 0 even when some sentences fail")
    p.add_argument("--stats", action="store_true", default=None,
                   help="print aggregate search counters to stderr")
    p.add_argument("--config", help="flat key = value settings file")
    p.set_defaults(handler=cmd_decode)

    p = sub.add_parser("train-empty", help="train the omission model")
    p.add_argument("--source", required=True, help="source text file")
    p.add_argument("--alignments", required=True, help="word alignment file (i-j pairs)")
    p.add_argument("--align-base", dest="align_base", type=int, choices=(0, 1),
                   default=None, help="alignment index base (default 1)")
    p.add_argument("--output", required=True, help="model file to write")
    p.add_argument("--window", type=int, help="context window radius (default 2)")
    p.add_argument("--epochs", type=int, help="gradient steps (default 200)")
    p.add_argument("--step", type=float, help="learning rate (default 0.1)")
    p.add_argument("--tolerance", type=float, help="early-stop threshold (default 1e-6)")
    p.add_argument("--holdout", type=float, help="held-out fraction (default 0.1)")
    p.add_argument("--seed", type=int, help="holdout split seed (default 0)")
    p.add_argument("--loss-plot", dest="loss_plot", help="write the loss curve as an image")
    p.add_argument("--config", help="flat key = value settings file")
    p.set_defaults(handler=cmd_train_empty)

    p = sub.add_parser("extract", help="extract a phrase table from an aligned corpus")
    p.add_argument("--source", required=True, help="source text file")
    p.add_argument("--target", required=True, help="target text file")
    p.add_argument("--alignments", required=True, help="word alignment file (i-j pairs)")
    p.add_argument("--align-base", dest="align_base", type=int, choices=(0, 1),
                   default=None, help="alignment index base (default 1)")
    p.add_argument("--phrase-table", dest="phrase_table", required=True,
                   help="phrase table file to write")
    p.add_argument("--insertion-vocab", dest="insertion_vocab",
                   help="insertable-word file to write")
    p.add_argument("--threshold", type=float,
                   help="minimum unaligned-occurrence rate (default 0.2)")
    p.add_argument("--max-phrase-len", dest="max_phrase_len", type=int,
                   help="phrase length cap on both sides (default 7)")
    p.add_argument("--max-words", dest="max_words", type=int,
                   help="insertion vocabulary size cap (default 50)")
    p.add_argument("--config", help="flat key = value settings file")
    p.set_defaults(handler=cmd_extract)

    p = sub.add_parser("bleu", help="score hypotheses against references")
    p.add_argument("--hypothesis", required=True, help="hypothesis file")
    p.add_argument("--reference", required=True, help="reference file")
    p.add_argument("--mode", choices=MODES, default="w/o-tag",
                   help="tag handling (default w/o-tag)")
    p.set_defaults(handler=cmd_bleu)

    p = sub.add_parser("oracle-check", help="compare decode against exhaustive search")
    p.add_argument("--instances", type=int, default=500, help="instances to run (default 500)")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    p.add_argument("--cap", type=int, default=30_000,
                   help="exhaustive item cap per instance (default 30000)")
    p.set_defaults(handler=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "handler"):
        parser.print_help(sys.stderr)
        return 2
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (LineFormatError, MarkupError, CorpusMismatchError, EmptyCorpusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
