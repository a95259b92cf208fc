"""Corpus-level case-insensitive BLEU-4 with tag-aware modes.

Follows the multi-bleu convention: clipped n-gram counts pooled over
the corpus, geometric mean of the four precisions, brevity penalty
min(1, exp(1 - ref_len/hyp_len)). Three modes control how constraint
tags are treated: stripped from both sides, kept as ordinary tokens,
or restricted to the text enclosed by any tag pair (each token counted
once, including under nested tags).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .constraints import is_tag_token
from .errors import CorpusMismatchError

MODES = ("w/o-tag", "w/-tag", "in-tag")


@dataclass(frozen=True)
class BleuReport:
    bleu: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    hyp_length: int
    ref_length: int
    zero_precision_orders: tuple[int, ...] = ()

    def format(self) -> str:
        precs = "/".join(f"{100 * p:.1f}" for p in self.precisions)
        ratio = self.hyp_length / self.ref_length if self.ref_length else 0.0
        line = (
            f"BLEU = {self.bleu:.2f}, {precs} "
            f"(BP={self.brevity_penalty:.3f}, ratio={ratio:.3f}, "
            f"hyp_len={self.hyp_length}, ref_len={self.ref_length})"
        )
        if self.zero_precision_orders:
            orders = ", ".join(str(n) for n in self.zero_precision_orders)
            line += f"\nzero precision at n = {orders}; BLEU set to 0"
        return line


def _mode_tokens(tokens: Sequence[str], mode: str) -> list[str]:
    if mode == "w/-tag":
        return list(tokens)
    if mode == "w/o-tag":
        return [t for t in tokens if not is_tag_token(t)]
    # in-tag: keep tokens at tag depth >= 1, each exactly once
    out = []
    depth = 0
    for token in tokens:
        if is_tag_token(token):
            if token.startswith("</"):
                depth = max(0, depth - 1)
            else:
                depth += 1
        elif depth > 0:
            out.append(token)
    return out


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def compute_bleu(
    hypotheses: Iterable[str | Sequence[str]],
    references: Iterable[str | Sequence[str]],
    mode: str = "w/o-tag",
) -> BleuReport:
    """Score hypothesis lines against single-reference lines.

    Lines may be strings (whitespace-tokenized) or token sequences.
    Comparison is case-insensitive. In in-tag mode, sentences whose
    reference encloses no tokens contribute nothing; a corpus whose
    references enclose nothing at all is rejected.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    hyp_lines = [line.split() if isinstance(line, str) else list(line) for line in hypotheses]
    ref_lines = [line.split() if isinstance(line, str) else list(line) for line in references]
    if len(hyp_lines) != len(ref_lines):
        raise CorpusMismatchError(
            f"{len(hyp_lines)} hypothesis lines vs {len(ref_lines)} reference lines"
        )
    clipped = [0] * 5
    totals = [0] * 5
    hyp_length = 0
    ref_length = 0
    any_ref_tokens = False
    for hyp_tokens, ref_tokens in zip(hyp_lines, ref_lines):
        hyp = [t.lower() for t in _mode_tokens(hyp_tokens, mode)]
        ref = [t.lower() for t in _mode_tokens(ref_tokens, mode)]
        if ref:
            any_ref_tokens = True
        hyp_length += len(hyp)
        ref_length += len(ref)
        for n in range(1, 5):
            hyp_counts = _ngrams(hyp, n)
            ref_counts = _ngrams(ref, n)
            totals[n] += sum(hyp_counts.values())
            clipped[n] += sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
    if mode == "in-tag" and not any_ref_tokens:
        raise ValueError("in-tag mode requires references with tagged content")
    precisions = tuple(
        clipped[n] / totals[n] if totals[n] else 0.0 for n in range(1, 5)
    )
    zero_orders = tuple(n for n in range(1, 5) if precisions[n - 1] == 0.0)
    if hyp_length == 0:
        return BleuReport(0.0, precisions, 0.0, 0, ref_length, zero_orders)
    brevity = 1.0 if hyp_length >= ref_length else math.exp(1.0 - ref_length / hyp_length)
    if zero_orders:
        bleu = 0.0
    else:
        log_mean = sum(math.log(p) for p in precisions) / 4.0
        bleu = 100.0 * brevity * math.exp(log_mean)
    return BleuReport(bleu, precisions, brevity, hyp_length, ref_length, zero_orders)
