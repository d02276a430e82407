"""Accuracy measurement, lexicon counts, correlations, dialogs, artifacts."""

import numpy as np
import pytest

from refplay.data import generate_shapes
from refplay.evaluation import (
    build_lexicon,
    diagonal_dominance,
    dump_dialogs,
    matrix_cosine,
    measure_accuracy,
    message_correlation,
    save_curves,
    save_heatmap,
    split_messages,
    word_names_item,
    write_matrix_csv,
    write_summary,
)
from refplay.game import ConstantSpeaker, GameConfig, RandomSpeaker
from refplay.oracle import ShapesOracle, build_rsa_oracle

GC = GameConfig(message_len=3, vocab_size=30)


def test_measure_accuracy_oracle_pair_is_exact(shapes):
    oracle = ShapesOracle(shapes)
    rep = measure_accuracy(oracle, oracle, shapes, "test", GC, n_resamples=5,
                           rng=np.random.default_rng(0), pairing="oracle/oracle")
    assert rep.mean == 100.0
    assert rep.ci95 == 0.0
    assert np.all(rep.resamples == 100.0)
    assert "oracle/oracle" in str(rep)


def test_measure_accuracy_reproducible(shapes):
    oracle = ShapesOracle(shapes)
    spk = RandomSpeaker(GC, np.random.default_rng(3))
    a = measure_accuracy(spk, oracle, shapes, "dev", GC, n_resamples=10,
                         rng=np.random.default_rng(5))
    spk = RandomSpeaker(GC, np.random.default_rng(3))
    b = measure_accuracy(spk, oracle, shapes, "dev", GC, n_resamples=10,
                         rng=np.random.default_rng(5))
    assert np.array_equal(a.resamples, b.resamples)
    assert a.mean == b.mean and a.ci95 == b.ci95


def test_measure_accuracy_single_resample_has_no_interval(shapes):
    oracle = ShapesOracle(shapes)
    rep = measure_accuracy(oracle, oracle, shapes, "dev", GC, n_resamples=1)
    assert rep.n_resamples == 1 and rep.ci95 == 0.0


# -- lexicon -----------------------------------------------------------------


def test_oracle_lexicon_structure(shapes):
    lex = build_lexicon(ShapesOracle(shapes), shapes, "train", GC)
    counts = lex.counts
    assert counts.shape == (30, 30)
    feats = shapes.feature_matrix(shapes.split_ids("train"))
    per_attr = feats.sum(axis=0).astype(np.int64)
    # word k is said exactly when the referent carries attribute k
    assert np.array_equal(np.diag(counts), per_attr)
    # off-diagonal cells within one attribute group are impossible
    for g in range(3):
        block = counts[10 * g : 10 * (g + 1), 10 * g : 10 * (g + 1)]
        assert np.array_equal(block, np.diag(np.diag(block)))
    # column sums hit the (#rounds carrying j) * w bound exactly here
    assert np.array_equal(counts.sum(axis=0), per_attr * 3)
    assert diagonal_dominance(lex) == 30


def test_constant_speaker_lexicon_is_rank_one(shapes):
    lex = build_lexicon(ConstantSpeaker([4, 4, 9]), shapes, "dev", GC)
    nz_rows = np.flatnonzero(lex.counts.sum(axis=1))
    assert set(nz_rows) == {4, 9}
    assert np.array_equal(lex.counts[4], 2 * lex.counts[9])
    assert np.linalg.matrix_rank(lex.counts) == 1


def test_split_messages_covers_split_in_order(shapes):
    oracle = ShapesOracle(shapes)
    ids, msgs = split_messages(oracle, shapes, "dev", GC)
    assert np.array_equal(ids, shapes.split_ids("dev"))
    assert msgs.shape == (len(ids), 3)
    for row, i in enumerate(ids):
        assert msgs[row].tolist() == oracle.speak(shapes.item(i))


def test_matrix_cosine_bounds_and_symmetry():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(5, 5)), rng.normal(size=(5, 5))
    assert matrix_cosine(a, b) == pytest.approx(matrix_cosine(b, a))
    assert -1.0 <= matrix_cosine(a, b) <= 1.0
    assert matrix_cosine(a, a) == pytest.approx(1.0)
    assert matrix_cosine(a, -a) == pytest.approx(-1.0)
    assert matrix_cosine(np.zeros((2, 2)), a[:2, :2]) == 0.0


# -- message correlation -------------------------------------------------------


def test_oracle_message_correlation_block_structure(shapes):
    m = message_correlation(ShapesOracle(shapes), shapes, "dev", GC)
    assert m.shape == (30, 30)
    assert np.allclose(m, m.T)
    assert m.min() >= 0.0 and m.max() <= 1.0
    # items sharing attribute f overlap in at least that word
    diag = np.diag(m)
    observed = shapes.feature_matrix(shapes.split_ids("dev")).sum(axis=0) >= 2
    assert np.all(diag[observed] >= 1.0 / 3.0)
    # same-group different-value pairs can never share that group's word
    cross = m[0, 1] if observed[0] and observed[1] else None
    if cross is not None:
        assert diag[observed].min() > m[0, 1]


def test_correlation_sampled_path_close_to_exact(shapes):
    # force the sampling branch with a tiny cap and compare loosely
    oracle = ShapesOracle(shapes)
    exact = message_correlation(oracle, shapes, "dev", GC)
    sampled = message_correlation(oracle, shapes, "train", GC,
                                  rng=np.random.default_rng(0), max_pairs=60_000)
    assert sampled.shape == (30, 30)
    # dev and train share the generating process; block means should agree
    assert abs(np.diag(exact).mean() - np.diag(sampled).mean()) < 0.05


# -- dialogs -------------------------------------------------------------------


def test_dialogs_empty_has_header_only(shapes):
    out = dump_dialogs(ShapesOracle(shapes), ShapesOracle(shapes), shapes, 0, GC,
                       pairing="o/o")
    assert out.startswith("#dialogs pairing=o/o split=test n=0\n")
    assert out.count("===") == 0


def test_oracle_dialog_words_all_starred(shapes):
    oracle = ShapesOracle(shapes)
    out = dump_dialogs(oracle, oracle, shapes, 4, GC, rng=np.random.default_rng(1),
                       truth_oracle=oracle)
    lines = [l for l in out.splitlines() if l.startswith("message:")]
    assert len(lines) == 4
    for line in lines:
        words = line.split()[1:]
        assert all(w.endswith("*") for w in words), line
    assert out.count("reward: +1") == 4


def test_random_speaker_dialog_has_unstarred_words(shapes):
    oracle = ShapesOracle(shapes)
    spk = RandomSpeaker(GC, np.random.default_rng(2))
    out = dump_dialogs(spk, oracle, shapes, 6, GC, rng=np.random.default_rng(3),
                       truth_oracle=oracle)
    words = [w for l in out.splitlines() if l.startswith("message:")
             for w in l.split()[1:]]
    assert any(not w.endswith("*") for w in words)


def test_word_names_item_for_both_oracles(shapes, toy_concepts):
    shapes_oracle = ShapesOracle(shapes)
    item = shapes.item(shapes.ids[0])
    feats = np.flatnonzero(item.features)
    assert word_names_item(shapes_oracle, int(feats[0]), item)
    assert not word_names_item(shapes_oracle, int((feats[0] + 1) % 30), item)
    rsa = build_rsa_oracle(toy_concepts, vocab_size=4, msg_len=2)
    it0 = toy_concepts.item(0)
    # word 3 maps to augmented column 4 = category 0, which item 0 carries
    assert word_names_item(rsa, 3, it0)
    # word 2 maps to raw attribute 3, absent from item 0
    assert not word_names_item(rsa, 2, it0)


def test_concepts_dialog_runs_with_names(synth):
    rsa = build_rsa_oracle(synth)
    gc = GameConfig(message_len=10, vocab_size=100)
    out = dump_dialogs(rsa, rsa, synth, 2, gc, rng=np.random.default_rng(0),
                       truth_oracle=rsa)
    assert out.count("===") == 2
    assert ":" in out.splitlines()[2]  # items render as id:name


# -- artifact files -------------------------------------------------------------


def test_matrix_csv_roundtrippable(tmp_path):
    m = np.arange(6).reshape(2, 3)
    path = tmp_path / "m.csv"
    write_matrix_csv(m, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",a0,a1,a2"
    assert lines[1] == "0,0,1,2"
    back = np.loadtxt(path, delimiter=",", skiprows=1, usecols=(1, 2, 3))
    assert np.array_equal(back, m)


def test_summary_file_sorted_and_formatted(tmp_path):
    path = tmp_path / "s.tsv"
    write_summary({"b_acc": 99.125, "a_name": "run", "c_n": 3}, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "a_name\trun"
    assert lines[1] == "b_acc\t99.125000"
    assert lines[2] == "c_n\t3"


def test_heatmap_and_curves_render_png(tmp_path, shapes):
    from refplay.agent import Agent
    from refplay.training import LossConfig, TrainSchedule, train_emergent

    hm = tmp_path / "lex.png"
    save_heatmap(np.random.default_rng(0).random((30, 30)), hm, title="lexicon")
    assert hm.read_bytes()[:4] == b"\x89PNG"

    a = Agent("lstm", 30, 30, 3, seed=1)
    b = Agent("lstm", 30, 30, 3, seed=2)
    rec = train_emergent(a, b, shapes, TrainSchedule(max_epochs=2, batch_size=512),
                         LossConfig(), seed=1)
    cv = tmp_path / "curves.png"
    save_curves(rec, cv)
    assert cv.read_bytes()[:4] == b"\x89PNG"
