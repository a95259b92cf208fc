"""Probability models behind the decoder.

Two independent models live here. A SequenceScorer prices target words
incrementally (begin/extend/end) and stands in for whatever sequence
model produced the training data; reference implementations are a
uniform scorer, an add-k smoothed n-gram model with backoff, and a
table-driven fixture for exact tests. An EmptyPhraseModel scores the
probability that a source word translates to nothing, as a logistic
classifier over a context window; its log probability is added to the
running hypothesis score when an omission is applied.

The word-to-phrase alignment prior is uniform and contributes a
constant to every derivation, so it is implemented as an additive zero.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import SourceSentence, TargetSentence
from .errors import EmptyCorpusError, LineFormatError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
RESERVED = {BOS, EOS, UNK}


class SequenceScorer(ABC):
    """Incremental scorer of target-word sequences.

    States are immutable values; extending equal states with equal
    tokens must give equal states and bitwise-equal log probabilities.
    """

    @abstractmethod
    def begin(self, x) -> object:
        """State for the empty target prefix of source sentence x."""

    @abstractmethod
    def extend(self, state, token: str) -> tuple[object, float]:
        """Extend the prefix by one token; returns (state, log prob)."""

    @abstractmethod
    def end(self, state) -> float:
        """Log probability of ending the sentence in this state."""


class UniformScorer(SequenceScorer):
    """Assigns 1/(V+1) to every word and to end-of-sentence."""

    def __init__(self, vocab_size: int):
        if vocab_size < 1:
            raise ValueError("vocab size must be at least 1")
        self.vocab_size = vocab_size
        self._logp = -math.log(vocab_size + 1)

    def begin(self, x):
        return ()

    def extend(self, state, token):
        return (), self._logp

    def end(self, state):
        return self._logp


class NgramScorer(SequenceScorer):
    """Add-k smoothed n-gram model over target words.

    The event space for every context is the vocabulary (which includes
    the reserved unknown symbol) plus end-of-sentence, so per-state
    probabilities sum to exactly 1. A context that was never observed
    backs off to the next shorter context; the empty context is always
    observed on a non-empty corpus.
    """

    def __init__(self, order: int, k: float, counts: dict[tuple[str, ...], int], vocab: set[str]):
        if order < 1:
            raise ValueError("order must be at least 1")
        if k <= 0:
            raise ValueError("add-k constant must be positive")
        self.order = order
        self.k = k
        self.counts = dict(counts)
        self.vocab = frozenset(vocab | {UNK})
        totals: dict[tuple[str, ...], int] = {}
        for ngram, count in self.counts.items():
            totals[ngram[:-1]] = totals.get(ngram[:-1], 0) + count
        self._context_totals = totals
        self._outcomes = len(self.vocab) + 1  # plus end-of-sentence

    @classmethod
    def train(cls, corpus: Iterable[TargetSentence | Sequence[str]], order: int, k: float = 1.0) -> "NgramScorer":
        counts: dict[tuple[str, ...], int] = {}
        vocab: set[str] = set()
        sentences = 0
        for sentence in corpus:
            tokens = tuple(sentence.tokens if isinstance(sentence, TargetSentence) else sentence)
            sentences += 1
            words = [t if t not in RESERVED else UNK for t in tokens]
            vocab.update(words)
            seq = [BOS] * (order - 1) + words + [EOS]
            # count each outcome with every context length up to order-1
            for t in range(order - 1, len(seq)):
                for m in range(1, order + 1):
                    ngram = tuple(seq[t - m + 1 : t + 1])
                    counts[ngram] = counts.get(ngram, 0) + 1
        if sentences == 0:
            raise EmptyCorpusError("cannot train an n-gram scorer on an empty corpus")
        return cls(order, k, counts, vocab | {UNK})

    def _normalize(self, token: str) -> str:
        return token if token in self.vocab and token not in RESERVED else UNK

    def _prob(self, context: tuple[str, ...], outcome: str) -> float:
        for start in range(len(context) + 1):
            sub = context[start:]
            total = self._context_totals.get(sub, 0)
            if total > 0 or not sub:
                count = self.counts.get(sub + (outcome,), 0)
                return (count + self.k) / (total + self.k * self._outcomes)
        raise AssertionError("empty context is always usable")

    def begin(self, x):
        return (BOS,) * (self.order - 1)

    def extend(self, state, token):
        word = self._normalize(token)
        logp = math.log(self._prob(state, word))
        new_state = (state + (word,))[-(self.order - 1):] if self.order > 1 else ()
        return new_state, logp

    def end(self, state):
        return math.log(self._prob(state, EOS))

    def save(self, stream) -> None:
        stream.write("ngram-scorer v1\n")
        stream.write(f"order\t{self.order}\n")
        stream.write(f"k\t{self.k!r}\n")
        for ngram in sorted(self.counts):
            stream.write(f"{' '.join(ngram)}\t{self.counts[ngram]}\n")

    @classmethod
    def load(cls, lines: Iterable[str]) -> "NgramScorer":
        it = iter(lines)
        header = next(it, "").strip()
        if header != "ngram-scorer v1":
            raise LineFormatError(f"unrecognized scorer header {header!r}")
        try:
            order = int(next(it).split("\t")[1])
            k = float(next(it).split("\t")[1])
        except (StopIteration, IndexError, ValueError):
            raise LineFormatError("scorer file missing order/k header lines")
        counts: dict[tuple[str, ...], int] = {}
        for line_no, line in enumerate(it, start=4):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise LineFormatError(f"line {line_no}: expected `ngram<TAB>count`")
            try:
                counts[tuple(parts[0].split())] = int(parts[1])
            except ValueError:
                raise LineFormatError(f"line {line_no}: unparseable count {parts[1]!r}")
        vocab = {ngram[0] for ngram in counts if len(ngram) == 1 and ngram[0] != EOS}
        return cls(order, k, counts, vocab | {UNK})


class TableScorer(SequenceScorer):
    """Fixture scorer returning stored log probabilities.

    Transitions are keyed by (prefix state, token). With context=None
    the state is the whole prefix; with context=c it is the last c
    tokens, which makes exhaustive fixtures for small vocabularies
    practical. Missing keys fall back to constant defaults so the
    scorer is total.
    """

    def __init__(
        self,
        transitions: dict[tuple[tuple[str, ...], str], float] | None = None,
        ends: dict[tuple[str, ...], float] | None = None,
        default: float = -1.0,
        end_default: float = 0.0,
        context: int | None = None,
    ):
        if default > 0 or end_default > 0:
            raise ValueError("log probabilities must be <= 0")
        self.transitions = dict(transitions or {})
        self.ends = dict(ends or {})
        self.default = default
        self.end_default = end_default
        self.context = context

    def begin(self, x):
        return ()

    def extend(self, state, token):
        logp = self.transitions.get((state, token), self.default)
        new_state = state + (token,)
        if self.context is not None:
            new_state = new_state[-self.context:]
        return new_state, logp

    def end(self, state):
        return self.ends.get(state, self.end_default)


def load_scorer(lines: Iterable[str]) -> SequenceScorer:
    """Load a serialized scorer, dispatching on the header line."""
    lines = list(lines)
    header = lines[0].strip() if lines else ""
    if header == "ngram-scorer v1":
        return NgramScorer.load(lines)
    raise LineFormatError(f"unrecognized scorer header {header!r}")


@dataclass(frozen=True)
class UnalignedIndicator:
    """Per-position 0/1 flags: 1 means the source word is unaligned."""

    flags: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "flags", tuple(int(f) for f in self.flags))
        if any(f not in (0, 1) for f in self.flags):
            raise ValueError("indicator flags must be 0 or 1")

    def __len__(self):
        return len(self.flags)


def mark_unaligned(pairs: Iterable[tuple[int, int]], source_len: int) -> UnalignedIndicator:
    """u_i = 1 iff no alignment pair uses source position i (1-based)."""
    aligned = [False] * (source_len + 1)
    for (i, j) in pairs:
        if not 1 <= i <= source_len:
            raise LineFormatError(f"alignment point {i}-{j} outside source length {source_len}")
        aligned[i] = True
    return UnalignedIndicator(tuple(0 if aligned[i] else 1 for i in range(1, source_len + 1)))


def context_features(tokens: Sequence[str], i: int, window: int) -> tuple[str, ...]:
    """Position-tagged word features in a symmetric window around i,
    plus a bias feature. Out-of-sentence offsets read boundary symbols."""
    if not 1 <= i <= len(tokens):
        raise ValueError(f"position {i} out of range 1..{len(tokens)}")
    feats = ["bias"]
    for d in range(-window, window + 1):
        pos = i + d
        if pos < 1:
            word = BOS
        elif pos > len(tokens):
            word = EOS
        else:
            word = tokens[pos - 1]
        feats.append(f"{d}:{word}")
    return tuple(feats)


def _sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class EmptyPhraseModel:
    """Logistic model of P(word translates to nothing | context)."""

    weights: dict[str, float]
    window: int = 2

    def score_omission(self, x: SourceSentence | Sequence[str], i: int) -> float:
        tokens = x.tokens if isinstance(x, SourceSentence) else tuple(x)
        feats = context_features(tokens, i, self.window)
        score = sum(self.weights.get(f, 0.0) for f in feats)
        return float(_sigmoid(np.array([score]))[0])


@dataclass(frozen=True)
class FixedOmissionModel:
    """Test fixture: omission probabilities stored per source position."""

    probs: dict[int, float]
    default: float = 0.0

    def score_omission(self, x, i: int) -> float:
        return self.probs.get(i, self.default)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    step: float = 0.1
    tolerance: float = 1e-6
    window: int = 2

    def __post_init__(self):
        if self.epochs < 0 or self.step <= 0 or self.tolerance < 0 or self.window < 0:
            raise ValueError("bad training hyperparameters")


def build_design(
    corpus: Sequence[tuple[SourceSentence, UnalignedIndicator]], window: int
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Feature-index matrix, label vector, and feature names for a corpus.

    Every position activates the same number of features (window words
    plus bias), so the design is a dense index matrix.
    """
    feature_ids: dict[str, int] = {}
    rows = []
    labels = []
    for sentence, indicator in corpus:
        if len(sentence) != len(indicator):
            raise ValueError(
                f"indicator length {len(indicator)} does not match sentence length {len(sentence)}"
            )
        for i in range(1, len(sentence) + 1):
            feats = context_features(sentence.tokens, i, window)
            rows.append([feature_ids.setdefault(f, len(feature_ids)) for f in feats])
            labels.append(indicator.flags[i - 1])
    if not rows:
        raise EmptyCorpusError("no training positions")
    names = [None] * len(feature_ids)
    for name, idx in feature_ids.items():
        names[idx] = name
    return np.array(rows, dtype=np.int64), np.array(labels, dtype=float), list(names)


def empty_model_loss_grad(
    weights: np.ndarray, design: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross entropy over positions and its gradient in weight space."""
    scores = weights[design].sum(axis=1)
    probs = _sigmoid(scores)
    eps = 1e-12
    clipped = np.clip(probs, eps, 1.0 - eps)
    loss = float(-np.mean(labels * np.log(clipped) + (1.0 - labels) * np.log(1.0 - clipped)))
    grad = np.zeros_like(weights)
    residual = (probs - labels) / len(labels)
    np.add.at(grad, design, residual[:, None])
    return loss, grad


def train_empty_model(
    corpus: Sequence[tuple[SourceSentence, UnalignedIndicator]],
    config: TrainConfig = TrainConfig(),
) -> tuple[EmptyPhraseModel, list[float]]:
    """Fit the omission classifier by full-batch gradient descent.

    Minimizes the mean per-position cross entropy from zero-initialized
    weights with a fixed step, stopping early when the improvement
    drops below the tolerance. Returns the model and the loss curve
    (initial loss first, then one value per step taken).
    """
    design, labels, names = build_design(corpus, config.window)
    weights = np.zeros(len(names))
    loss, grad = empty_model_loss_grad(weights, design, labels)
    losses = [loss]
    for _ in range(config.epochs):
        weights = weights - config.step * grad
        loss, grad = empty_model_loss_grad(weights, design, labels)
        losses.append(loss)
        if losses[-2] - losses[-1] < config.tolerance:
            break
    model = EmptyPhraseModel(
        weights={name: float(w) for name, w in zip(names, weights)},
        window=config.window,
    )
    return model, losses


def save_empty_model(model: EmptyPhraseModel, stream) -> None:
    stream.write("empty-model v1\n")
    stream.write(f"window\t{model.window}\n")
    for name in sorted(model.weights):
        stream.write(f"{name}\t{model.weights[name]!r}\n")


def load_empty_model(lines: Iterable[str]) -> EmptyPhraseModel:
    it = iter(lines)
    header = next(it, "").strip()
    if header != "empty-model v1":
        raise LineFormatError(f"unrecognized empty-model header {header!r}")
    try:
        window = int(next(it).split("\t")[1])
    except (StopIteration, IndexError, ValueError):
        raise LineFormatError("empty-model file missing window header line")
    weights = {}
    for line_no, line in enumerate(it, start=3):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise LineFormatError(f"line {line_no}: expected `feature<TAB>weight`")
        try:
            weights[parts[0]] = float(parts[1])
        except ValueError:
            raise LineFormatError(f"line {line_no}: unparseable weight {parts[1]!r}")
    return EmptyPhraseModel(weights=weights, window=window)
