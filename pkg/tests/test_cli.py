import io
import random

import pytest

from phrasealign.cli import main
from phrasealign.constraints import is_tag_token
from phrasealign.core import PhraseAlignment
from phrasealign.phrasetable import extract_phrase_table, load_phrase_table
from phrasealign.scorer import NgramScorer, load_empty_model
from phrasealign.synthetic import ablation_corpus


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Training corpus, extracted table, trained models, shared by the
    CLI tests. Built once through the command line itself."""
    root = tmp_path_factory.mktemp("cli")
    rows = ablation_corpus(random.Random(7), sentences=50)
    (root / "train.src").write_text(
        "".join(" ".join(src) + "\n" for src, _, _ in rows), encoding="utf-8"
    )
    (root / "train.tgt").write_text(
        "".join(" ".join(tgt) + "\n" for _, tgt, _ in rows), encoding="utf-8"
    )
    (root / "train.aln").write_text(
        "".join(" ".join(f"{i}-{j}" for i, j in links) + "\n" for _, _, links in rows),
        encoding="utf-8",
    )
    scorer = NgramScorer.train([tgt for _, tgt, _ in rows], order=2, k=0.5)
    with open(root / "scorer.ngram", "w", encoding="utf-8") as handle:
        scorer.save(handle)
    assert (
        main(
            [
                "extract",
                "--source", str(root / "train.src"),
                "--target", str(root / "train.tgt"),
                "--alignments", str(root / "train.aln"),
                "--phrase-table", str(root / "table.txt"),
                "--insertion-vocab", str(root / "ins.txt"),
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "train-empty",
                "--source", str(root / "train.src"),
                "--alignments", str(root / "train.aln"),
                "--output", str(root / "empty.model"),
            ]
        )
        == 0
    )
    return {"root": root, "rows": rows}


def decode_args(workdir, *extra):
    root = workdir["root"]
    return [
        "decode",
        "--phrase-table", str(root / "table.txt"),
        "--scorer", str(root / "scorer.ngram"),
        *extra,
    ]


def test_extract_matches_library_call(workdir):
    rows = workdir["rows"]
    corpus = [(src, tgt, links) for src, tgt, links in rows]
    expected = {(e.source, e.target): e.prob for e in extract_phrase_table(corpus)}
    with open(workdir["root"] / "table.txt", encoding="utf-8") as handle:
        loaded = {(e.source, e.target): e.prob for e in load_phrase_table(handle)}
    # the file format keeps six decimals, so compare at that precision
    assert loaded == pytest.approx(expected, abs=5e-7)


def test_extract_wrote_insertion_vocab(workdir):
    text = (workdir["root"] / "ins.txt").read_text(encoding="utf-8")
    assert text.splitlines()[0].split("\t")[0] == "de"


def test_trained_empty_model_flags_ga(workdir):
    with open(workdir["root"] / "empty.model", encoding="utf-8") as handle:
        model = load_empty_model(handle)
    assert model.score_omission(("als", "ga", "baum"), 2) > 0.5
    assert model.score_omission(("als", "ga", "baum"), 1) < 0.5


def test_decode_maps_lines_to_records(workdir, tmp_path, capsys):
    source = tmp_path / "in.txt"
    source.write_text("als baum\nchef\n", encoding="utf-8")
    assert main(decode_args(workdir, "--input", str(source))) == 0
    out = capsys.readouterr().out
    records = out.splitlines()
    assert len(records) == 2
    for record in records:
        translation, alignment, score = record.split("\t")
        assert translation
        float(score)
        PhraseAlignment.from_line(alignment)


def test_pipeline_closure_regular_options_come_from_table(workdir, tmp_path, capsys):
    root = workdir["root"]
    with open(root / "table.txt", encoding="utf-8") as handle:
        table = load_phrase_table(handle)
    sources = [src for src, _, _ in workdir["rows"]]
    source = tmp_path / "in.txt"
    source.write_text("".join(" ".join(s) + "\n" for s in sources), encoding="utf-8")
    assert main(decode_args(workdir, "--input", str(source))) == 0
    records = capsys.readouterr().out.splitlines()
    assert len(records) == len(sources)
    for tokens, record in zip(sources, records):
        translation, alignment_text, _ = record.split("\t")
        words = translation.split()
        for link in PhraseAlignment.from_line(alignment_text).links:
            if link.source_empty or link.target_empty:
                continue
            src_phrase = tuple(tokens[link.i_b - 1 : link.i_e])
            tgt_phrase = tuple(words[link.j_b - 1 : link.j_e])
            assert any(
                entry.target == tgt_phrase for entry in table.lookup(src_phrase)
            ), (src_phrase, tgt_phrase)


def test_decode_diagnostic_and_exit_codes(workdir, tmp_path, capsys):
    source = tmp_path / "in.txt"
    source.write_text("als unbekannt\nchef\n", encoding="utf-8")
    code = main(decode_args(workdir, "--input", str(source)))
    out = capsys.readouterr().out.splitlines()
    assert code == 1
    assert out[0].startswith("# line 1: no derivation:")
    assert "\t" in out[1]
    assert main(decode_args(workdir, "--input", str(source), "--allow-failures")) == 0


def test_decode_crossing_tags_diagnostic(workdir, tmp_path, capsys):
    source = tmp_path / "in.txt"
    source.write_text("<c1> als <c2> baum </c1> chef </c2>\n", encoding="utf-8")
    code = main(decode_args(workdir, "--input", str(source), "--structured"))
    out = capsys.readouterr().out.splitlines()
    assert code == 1
    assert out[0].startswith("# line 1: markup error:")


def test_decode_structured_and_strip_tags(workdir, tmp_path, capsys):
    source = tmp_path / "in.txt"
    source.write_text("<c1> als baum </c1> chef\n", encoding="utf-8")
    assert main(decode_args(workdir, "--input", str(source), "--structured")) == 0
    tagged = capsys.readouterr().out.splitlines()[0].split("\t")[0].split()
    assert "<c1>" in tagged and "</c1>" in tagged
    assert main(
        decode_args(workdir, "--input", str(source), "--structured", "--strip-tags")
    ) == 0
    stripped = capsys.readouterr().out.splitlines()[0].split("\t")[0].split()
    assert not any(is_tag_token(t) for t in stripped)
    assert stripped == [t for t in tagged if not is_tag_token(t)]


def test_decode_lexical_constraints(workdir, tmp_path, capsys):
    source = tmp_path / "in.txt"
    source.write_text("als baum chef\n", encoding="utf-8")
    pins = tmp_path / "cons.txt"
    pins.write_text("baum ||| pinned phrase\n", encoding="utf-8")
    assert main(
        decode_args(workdir, "--input", str(source), "--lexical-constraints", str(pins))
    ) == 0
    translation, alignment_text, _ = capsys.readouterr().out.splitlines()[0].split("\t")
    words = translation.split()
    links = PhraseAlignment.from_line(alignment_text).links
    pinned = [l for l in links if (l.i_b, l.i_e) == (2, 2)]
    assert len(pinned) == 1
    assert words[pinned[0].j_b - 1 : pinned[0].j_e] == ["pinned", "phrase"]


def test_decode_occurrences_first_vs_all(workdir, tmp_path, capsys):
    source = tmp_path / "in.txt"
    source.write_text("als als\n", encoding="utf-8")
    pins = tmp_path / "cons.txt"
    pins.write_text("als ||| once\n", encoding="utf-8")
    assert main(
        decode_args(
            workdir, "--input", str(source),
            "--lexical-constraints", str(pins), "--occurrences", "first",
        )
    ) == 0
    translation, alignment_text, _ = capsys.readouterr().out.splitlines()[0].split("\t")
    words = translation.split()
    assert words.count("once") == 1
    links = PhraseAlignment.from_line(alignment_text).links
    pinned = [l for l in links if (l.i_b, l.i_e) == (1, 1)]
    assert len(pinned) == 1
    assert words[pinned[0].j_b - 1 : pinned[0].j_e] == ["once"]
    assert main(
        decode_args(
            workdir, "--input", str(source),
            "--lexical-constraints", str(pins), "--occurrences", "all",
        )
    ) == 0
    all_out = capsys.readouterr().out.splitlines()[0]
    words = all_out.split("\t")[0].split()
    assert words.count("once") == 2


def test_decode_reads_stdin(workdir, monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO("chef\n"))
    assert main(decode_args(workdir)) == 0
    assert len(capsys.readouterr().out.splitlines()) == 1


def test_decode_is_byte_deterministic(workdir, tmp_path):
    source = tmp_path / "in.txt"
    source.write_text(
        "".join(" ".join(src) + "\n" for src, _, _ in workdir["rows"][:10]),
        encoding="utf-8",
    )
    outputs = []
    for run, workers in enumerate(("1", "1", "3")):
        path = tmp_path / f"out{run}.txt"
        assert main(
            decode_args(
                workdir, "--input", str(source), "--output", str(path),
                "--workers", workers,
                "--empty-model", str(workdir["root"] / "empty.model"),
                "--insertion-vocab", str(workdir["root"] / "ins.txt"),
            )
        ) == 0
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_decode_stats_line(workdir, tmp_path, capsys):
    source = tmp_path / "in.txt"
    source.write_text("chef\n", encoding="utf-8")
    assert main(decode_args(workdir, "--input", str(source), "--stats")) == 0
    err = capsys.readouterr().err
    assert "translate_ops=" in err and "sentences=1" in err


def test_config_file_and_flag_precedence(workdir, tmp_path, capsys):
    source = tmp_path / "in.txt"
    source.write_text("chef\n", encoding="utf-8")
    config = tmp_path / "settings.conf"
    config.write_text("beam = 0\nworkers = 1  # comment\n", encoding="utf-8")
    # config alone: beam 0 is rejected as a config error
    code = main(decode_args(workdir, "--input", str(source), "--config", str(config)))
    assert code == 2
    capsys.readouterr()
    # a flag overrides the config value, so the same file is now fine
    code = main(
        decode_args(workdir, "--input", str(source), "--config", str(config), "--beam", "4")
    )
    assert code == 0
    capsys.readouterr()
    bad = tmp_path / "bad.conf"
    bad.write_text("just some words\n", encoding="utf-8")
    assert main(decode_args(workdir, "--input", str(source), "--config", str(bad))) == 2


def test_usage_errors_exit_2(workdir, tmp_path, capsys):
    assert main(["decode"]) == 2
    assert main(decode_args(workdir, "--workers", "0")) == 2
    assert main([]) == 2
    with pytest.raises(SystemExit) as info:
        main(["decode", "--no-such-flag"])
    assert info.value.code == 2
    capsys.readouterr()


def test_data_errors_exit_3(workdir, tmp_path, capsys):
    bad_table = tmp_path / "bad_table.txt"
    bad_table.write_text("als ||| tree ||| not-a-number\n", encoding="utf-8")
    code = main(
        [
            "decode",
            "--phrase-table", str(bad_table),
            "--scorer", str(workdir["root"] / "scorer.ngram"),
            "--input", str(bad_table),
        ]
    )
    assert code == 3
    assert "bad_table" in capsys.readouterr().err


def test_missing_file_exits_2(workdir, capsys):
    code = main(decode_args(workdir, "--input", "/nonexistent/nowhere.txt"))
    assert code == 2
    capsys.readouterr()


def test_train_empty_mismatch_exits_3(workdir, tmp_path, capsys):
    short = tmp_path / "short.aln"
    short.write_text("1-1\n", encoding="utf-8")
    code = main(
        [
            "train-empty",
            "--source", str(workdir["root"] / "train.src"),
            "--alignments", str(short),
            "--output", str(tmp_path / "m.model"),
        ]
    )
    assert code == 3
    assert "alignment lines" in capsys.readouterr().err


def test_train_empty_zero_epochs_warns(workdir, tmp_path, capsys):
    code = main(
        [
            "train-empty",
            "--source", str(workdir["root"] / "train.src"),
            "--alignments", str(workdir["root"] / "train.aln"),
            "--output", str(tmp_path / "m.model"),
            "--epochs", "0",
        ]
    )
    captured = capsys.readouterr()
    assert code == 0
    assert "warning" in captured.err
    with open(tmp_path / "m.model", encoding="utf-8") as handle:
        model = load_empty_model(handle)
    assert all(w == 0.0 for w in model.weights.values())


def test_train_empty_reports_loss_and_accuracy(workdir, tmp_path, capsys):
    code = main(
        [
            "train-empty",
            "--source", str(workdir["root"] / "train.src"),
            "--alignments", str(workdir["root"] / "train.aln"),
            "--output", str(tmp_path / "m.model"),
            "--holdout", "0.2",
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "final loss" in out
    assert "held-out accuracy" in out


def test_train_empty_loss_plot(workdir, tmp_path):
    plot = tmp_path / "loss.png"
    code = main(
        [
            "train-empty",
            "--source", str(workdir["root"] / "train.src"),
            "--alignments", str(workdir["root"] / "train.aln"),
            "--output", str(tmp_path / "m.model"),
            "--epochs", "20",
            "--loss-plot", str(plot),
        ]
    )
    assert code == 0
    assert plot.stat().st_size > 0


def test_extract_threshold_one_gives_empty_vocab(workdir, tmp_path, capsys):
    root = workdir["root"]
    code = main(
        [
            "extract",
            "--source", str(root / "train.src"),
            "--target", str(root / "train.tgt"),
            "--alignments", str(root / "train.aln"),
            "--phrase-table", str(tmp_path / "t.txt"),
            "--insertion-vocab", str(tmp_path / "v.txt"),
            "--threshold", "1.0",
        ]
    )
    assert code == 0
    assert (tmp_path / "v.txt").read_text(encoding="utf-8") == ""
    capsys.readouterr()


def test_extract_max_phrase_len_one(workdir, tmp_path, capsys):
    root = workdir["root"]
    code = main(
        [
            "extract",
            "--source", str(root / "train.src"),
            "--target", str(root / "train.tgt"),
            "--alignments", str(root / "train.aln"),
            "--phrase-table", str(tmp_path / "t.txt"),
            "--max-phrase-len", "1",
        ]
    )
    assert code == 0
    with open(tmp_path / "t.txt", encoding="utf-8") as handle:
        table = load_phrase_table(handle)
    assert all(len(e.source) == 1 and len(e.target) == 1 for e in table)
    capsys.readouterr()


def test_extract_bad_alignment_exits_3(workdir, tmp_path, capsys):
    root = workdir["root"]
    bad = tmp_path / "bad.aln"
    lines = (root / "train.aln").read_text(encoding="utf-8").splitlines()
    lines[2] = "1-1 9-9"
    bad.write_text("\n".join(lines) + "\n", encoding="utf-8")
    code = main(
        [
            "extract",
            "--source", str(root / "train.src"),
            "--target", str(root / "train.tgt"),
            "--alignments", str(bad),
            "--phrase-table", str(tmp_path / "t.txt"),
        ]
    )
    assert code == 3
    assert "line 3" in capsys.readouterr().err


def test_bleu_subcommand(workdir, tmp_path, capsys):
    hyp = tmp_path / "hyp.txt"
    ref = tmp_path / "ref.txt"
    hyp.write_text("a b c d\n", encoding="utf-8")
    ref.write_text("a b c d e\n", encoding="utf-8")
    assert main(["bleu", "--hypothesis", str(hyp), "--reference", str(ref)]) == 0
    assert capsys.readouterr().out.startswith("BLEU = 77.88")
    ref.write_text("a b c d e\nextra line\n", encoding="utf-8")
    assert main(["bleu", "--hypothesis", str(hyp), "--reference", str(ref)]) == 3
    capsys.readouterr()


def test_oracle_check_subcommand(capsys):
    assert main(["oracle-check", "--instances", "5", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "5 instances" in out and "5 passed" in out
