"""Acceptance gate: one check per shipped guarantee, one printed line each.

Run with `pytest tests/test_acceptance.py -s` to see the pass/fail lines.
Full-scale benchmark evaluation (large bilingual corpora scored with a
trained neural model) is out of reach in this repository, so acceptance
rests on the property suites below: exhaustive-search equivalence,
constraint soundness, ablation direction, training correctness, metric
correctness, work bounds, and determinism.
"""

import math
import random

import numpy as np
import pytest

from phrasealign.bleu import compute_bleu
from phrasealign.cli import main
from phrasealign.constraints import is_tag_token
from phrasealign.core import SourceSentence, alignment_validate
from phrasealign.decoder import DecoderConfig, decode, reference_logprob
from phrasealign.phrasetable import (
    add_omission_options,
    build_insertion_vocab,
    collect_options,
    extract_phrase_table,
    save_insertion_vocab,
    save_phrase_table,
)
from phrasealign.scorer import (
    NgramScorer,
    TrainConfig,
    empty_model_loss_grad,
    mark_unaligned,
    save_empty_model,
    train_empty_model,
)
from phrasealign.synthetic import (
    ablation_corpus,
    random_lexical_instance,
    random_structural_instance,
    run_oracle_suite,
    separable_empty_corpus,
)


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def oracle_suite():
    return run_oracle_suite(instances=500, seed=0)


def test_benchmark_substitution_note():
    """Corpus-scale scores need external data and a trained neural model;
    the checks below stand in for them. This test pins the substitution."""
    substitutes = (
        "test_search_matches_exhaustive_reference",
        "test_lexical_constraint_soundness",
        "test_structural_constraint_soundness",
        "test_empty_phrase_ablation_direction",
        "test_empty_model_training",
        "test_bleu_correctness",
        "test_translate_work_bound",
        "test_decode_cli_determinism",
    )
    missing = [name for name in substitutes if name not in globals()]
    report(
        "benchmark substitution",
        not missing,
        "corpus-scale scores not claimed; verified by the "
        f"{len(substitutes)} property checks in this file",
    )


def test_search_matches_exhaustive_reference(oracle_suite):
    ok = (
        not oracle_suite.failures
        and len(oracle_suite.records) >= 500
        and oracle_suite.elapsed < 60.0
    )
    report(
        "exhaustive-search equivalence",
        ok,
        f"{oracle_suite.summary()}; scores within 1e-9 at beam >= item count",
    )


def test_lexical_constraint_soundness():
    rng = random.Random(11)
    instances = 200
    satisfied = 0
    multiply_covered = 0
    for _ in range(instances):
        instance = random_lexical_instance(rng)
        derivation = decode(*instance.decode_args(), config=instance.config)
        words = derivation.translation.tokens
        links = derivation.alignment.links
        coverage_counts = [0] * (len(instance.x) + 1)
        for link in links:
            if not link.source_empty:
                for i in range(link.i_b, link.i_e + 1):
                    coverage_counts[i] += 1
        multiply_covered += sum(1 for count in coverage_counts[1:] if count > 1)
        good = alignment_validate(derivation.alignment, len(instance.x), len(words)).ok
        for constraint in instance.constraints:
            pinned = [l for l in links if (l.i_b, l.i_e) == constraint.span]
            good = (
                good
                and len(pinned) == 1
                and tuple(words[pinned[0].j_b - 1 : pinned[0].j_e]) == constraint.target
            )
        satisfied += good
    ok = satisfied == instances and multiply_covered == 0
    report(
        "lexical constraint soundness",
        ok,
        f"{satisfied}/{instances} instances pin every constraint; "
        f"{multiply_covered} source positions covered more than once",
    )


def check_tag_structure(derivation, tree, source_len):
    """Tags in the output must reproduce the input nesting, and every
    word under an open tag must align within that tag's source span.
    Inserted words align to the virtual empty source word and carry no
    source position, so they have nothing to check against."""
    by_name = {node.name: node for node in tree.nodes() if node.node_id != 0}
    span_of_word = {}
    for link in derivation.alignment.links:
        if link.source_empty:
            continue
        for j in range(link.j_b, link.j_e + 1):
            span_of_word[j] = (link.i_b, link.i_e)
    seen_pairs = set()
    stack = []
    word_index = 0
    for token in derivation.translation.tokens:
        if is_tag_token(token):
            name = token.strip("</>")
            if token.startswith("</"):
                if not stack or stack[-1] != name:
                    return False
                parent = stack[-2] if len(stack) > 1 else None
                seen_pairs.add((name, parent))
                stack.pop()
            else:
                if name in (n for n, _ in seen_pairs) or name in stack:
                    return False
                stack.append(name)
            continue
        word_index += 1
        span = span_of_word.get(word_index)
        for name in stack:
            node = by_name.get(name)
            if node is None:
                return False
            if span is not None and not (
                node.span[0] <= span[0] and span[1] <= node.span[1]
            ):
                return False
    if stack:
        return False
    expected = {
        (node.name, None if tree.parent_id(node.node_id) == 0 else tree.node(tree.parent_id(node.node_id)).name)
        for node in tree.nodes()
        if node.node_id != 0
    }
    return seen_pairs == expected


def test_structural_constraint_soundness():
    rng = random.Random(13)
    instances = 200
    satisfied = 0
    for _ in range(instances):
        instance = random_structural_instance(rng)
        derivation = decode(*instance.decode_args(), config=instance.config)
        words = [t for t in derivation.translation.tokens if not is_tag_token(t)]
        good = alignment_validate(derivation.alignment, len(instance.x), len(words)).ok
        good = good and check_tag_structure(derivation, instance.tree, len(instance.x))
        satisfied += good
    ok = satisfied == instances
    report(
        "structural constraint soundness",
        ok,
        f"{satisfied}/{instances} instances reproduce the tag nesting and "
        "keep tagged words inside their source spans",
    )


def test_empty_phrase_ablation_direction():
    rng = random.Random(4)
    rows = ablation_corpus(rng, sentences=60)
    table = extract_phrase_table(rows, max_phrase_len=1)
    scorer = NgramScorer.train([tgt for _, tgt, _ in rows], order=2, k=0.5)
    insertions = build_insertion_vocab(rows, threshold=0.2)
    empty_model, _ = train_empty_model(
        [
            (SourceSentence(src), mark_unaligned(links, len(src)))
            for src, _, links in rows
        ]
    )
    total_with = 0.0
    total_without = 0.0
    for src_tokens, tgt, _ in rows:
        src = SourceSentence(src_tokens)
        config = DecoderConfig(
            beam=1,
            max_target_len=len(tgt) + 1,
            max_insertions=sum(1 for t in tgt if t == "de"),
        )
        bare = collect_options(src, table, None, max_source_len=1)
        full = collect_options(src, table, insertions, max_source_len=1)
        full = add_omission_options(full, src, empty_model, threshold=0.5)
        with_logp = reference_logprob(src, full, None, scorer, tgt, empty_model, config)
        without_logp = reference_logprob(src, bare, None, scorer, tgt, None, config)
        total_with += with_logp if with_logp is not None else float("-inf")
        total_without += without_logp if without_logp is not None else float("-inf")
    ok = math.isfinite(total_with) and total_with > total_without
    report(
        "empty-phrase ablation direction",
        ok,
        f"reference log probability {total_with:.2f} with empty phrases vs "
        f"{total_without} without",
    )


def test_empty_model_training():
    rng = np.random.default_rng(21)
    corpus = separable_empty_corpus(random.Random(21), sentences=120)
    from phrasealign.scorer import build_design

    design, labels, _ = build_design(corpus, window=2)
    worst_rel = 0.0
    for _ in range(5):
        weights = rng.normal(scale=0.5, size=design.max() + 1)
        _, grad = empty_model_loss_grad(weights, design, labels)
        eps = 1e-6
        for k in rng.choice(len(weights), size=min(10, len(weights)), replace=False):
            probe = weights.copy()
            probe[k] += eps
            up, _ = empty_model_loss_grad(probe, design, labels)
            probe[k] -= 2 * eps
            down, _ = empty_model_loss_grad(probe, design, labels)
            numeric = (up - down) / (2 * eps)
            denom = max(abs(numeric), abs(grad[k]), 1e-8)
            worst_rel = max(worst_rel, abs(numeric - grad[k]) / denom)
    grad_ok = worst_rel < 1e-4

    train_rows = corpus[:100]
    heldout = corpus[100:]
    model, losses = train_empty_model(train_rows, TrainConfig(epochs=300))
    monotone = all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))
    correct = 0
    total = 0
    for sentence, indicator in heldout:
        for i in range(1, len(sentence) + 1):
            total += 1
            correct += (model.score_omission(sentence, i) > 0.5) == bool(indicator.flags[i - 1])
    accuracy = correct / total
    ok = grad_ok and monotone and accuracy >= 0.99
    report(
        "empty-model training",
        ok,
        f"gradient max relative error {worst_rel:.2e} (< 1e-4); "
        f"loss non-increasing: {monotone}; held-out accuracy {accuracy:.4f}",
    )


def test_bleu_correctness():
    identity = compute_bleu(["a b c d e"], ["a b c d e"], mode="w/o-tag")
    hand = compute_bleu(["a b c d"], ["a b c d e"], mode="w/o-tag")
    expected_hand = 100.0 * math.exp(1.0 - 5.0 / 4.0)
    tagged_hyp = ["<c1> a b </c1> c d"]
    tagged_ref = ["a <c1> b c </c1> d"]
    plain = compute_bleu(["a b c d"], ["a b c d"], mode="w/o-tag")
    keep_on_plain = compute_bleu(["a b c d"], ["a b c d"], mode="w/-tag")
    misplaced = compute_bleu(tagged_hyp, tagged_ref, mode="w/-tag")
    placed = compute_bleu(tagged_ref, tagged_ref, mode="w/-tag")
    ok = (
        identity.bleu == 100.0
        and abs(hand.bleu - expected_hand) < 0.01
        and plain.bleu == keep_on_plain.bleu
        and plain.precisions == keep_on_plain.precisions
        and misplaced.bleu < placed.bleu
    )
    report(
        "BLEU correctness",
        ok,
        f"identity {identity.bleu}; short-hypothesis case {hand.bleu:.2f} vs "
        f"{expected_hand:.2f}; tag modes agree on untagged text and penalize "
        "misplaced tags",
    )


def test_translate_work_bound(oracle_suite):
    violations = [r for r in oracle_suite.records if not r.bound_ok]
    report(
        "translate work bound",
        not violations and len(oracle_suite.records) >= 500,
        f"translate applications within beam x max-target-length x options "
        f"on {len(oracle_suite.records)} instances at every tested beam",
    )


def test_decode_cli_determinism(tmp_path, capsys):
    rows = ablation_corpus(random.Random(9), sentences=30)
    table_path = tmp_path / "table.txt"
    with open(table_path, "w", encoding="utf-8") as handle:
        save_phrase_table(extract_phrase_table(rows), handle)
    scorer_path = tmp_path / "scorer.ngram"
    with open(scorer_path, "w", encoding="utf-8") as handle:
        NgramScorer.train([tgt for _, tgt, _ in rows], order=2, k=0.5).save(handle)
    vocab_path = tmp_path / "ins.txt"
    with open(vocab_path, "w", encoding="utf-8") as handle:
        save_insertion_vocab(build_insertion_vocab(rows), handle)
    model, _ = train_empty_model(
        [(SourceSentence(src), mark_unaligned(links, len(src))) for src, _, links in rows]
    )
    model_path = tmp_path / "empty.model"
    with open(model_path, "w", encoding="utf-8") as handle:
        save_empty_model(model, handle)
    source_path = tmp_path / "in.txt"
    source_path.write_text(
        "".join(" ".join(src) + "\n" for src, _, _ in rows), encoding="utf-8"
    )
    outputs = []
    for run in range(2):
        out_path = tmp_path / f"out{run}.txt"
        code = main(
            [
                "decode",
                "--phrase-table", str(table_path),
                "--scorer", str(scorer_path),
                "--empty-model", str(model_path),
                "--insertion-vocab", str(vocab_path),
                "--input", str(source_path),
                "--output", str(out_path),
            ]
        )
        assert code == 0
        outputs.append(out_path.read_bytes())
    capsys.readouterr()
    ok = outputs[0] == outputs[1] and len(outputs[0]) > 0
    report(
        "decode determinism",
        ok,
        f"two identical runs over {len(rows)} sentences produced "
        "byte-identical output",
    )
