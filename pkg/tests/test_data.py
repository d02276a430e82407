"""Dataset generators, the XML loader, and the text round trip."""

import numpy as np
import pytest

from refplay.data import (
    CONCEPTS_F,
    SHAPES_F,
    SHAPES_SPLITS,
    dumps_dataset,
    generate_shapes,
    load_concepts,
    load_dataset,
    save_dataset,
    synth_concepts,
)
from refplay.errors import ConfigError, DataParseError, SchemaError


def test_shapes_enumerates_product_space(shapes):
    assert len(shapes) == 1000
    assert shapes.feature_dim == SHAPES_F
    assert shapes.vocab_size == 30
    # bijection: every attribute combination appears exactly once
    seen = {tuple(np.flatnonzero(row)) for row in shapes.features}
    assert len(seen) == 1000
    for combo in seen:
        assert len(combo) == 3
        a_blocks = [f // 10 for f in combo]
        assert a_blocks == [0, 1, 2]


def test_shapes_split_sizes_and_disjointness(shapes):
    sizes = tuple(len(shapes.splits[k]) for k in ("train", "dev", "test"))
    assert sizes == SHAPES_SPLITS
    all_ids = np.concatenate([shapes.splits[k] for k in ("train", "dev", "test")])
    assert len(np.unique(all_ids)) == 1000


def test_shapes_deterministic():
    a, b = generate_shapes(3), generate_shapes(3)
    assert np.array_equal(a.features, b.features)
    for k in ("train", "dev", "test"):
        assert np.array_equal(a.splits[k], b.splits[k])
    c = generate_shapes(4)
    assert not np.array_equal(a.splits["train"], c.splits["train"])


def test_shapes_test_vectors_unseen(shapes):
    train_vecs = {shapes.features[shapes.row(i)].tobytes() for i in shapes.splits["train"]}
    for i in shapes.splits["test"]:
        assert shapes.features[shapes.row(i)].tobytes() not in train_vecs


def test_synth_concepts_dimensions(synth):
    assert len(synth) == 565
    assert synth.feature_dim == CONCEPTS_F
    assert synth.vocab_size == 100
    assert synth.n_categories == 20
    sizes = tuple(len(synth.splits[k]) for k in ("train", "dev", "test"))
    assert sizes == (455, 55, 55)


def test_synth_concepts_category_structure(synth):
    """Items sharing a category must look more alike than strangers."""
    X = synth.features.astype(np.float64)
    X = X / np.linalg.norm(X, axis=1, keepdims=True)
    sim = X @ X.T
    cats = synth.categories
    same = cats[:, None] == cats[None, :]
    off_diag = ~np.eye(len(synth), dtype=bool)
    intra = sim[same & off_diag].mean()
    inter = sim[~same].mean()
    assert intra > inter


def test_synth_concepts_edges_and_determinism():
    tiny = synth_concepts(5, n_categories=2, n_items=2)
    assert len(tiny) == 2
    assert len(set(tiny.categories.tolist())) == 2
    a = synth_concepts(9, n_categories=4, n_items=40)
    b = synth_concepts(9, n_categories=4, n_items=40)
    assert np.array_equal(a.features, b.features)
    with pytest.raises(ConfigError):
        synth_concepts(1, n_categories=5, n_items=3)


CORPUS = """<concepts>
  <concept name="pelican" category="bird">
    <attribute>has_long_neck</attribute>
    <attribute>flies</attribute>
  </concept>
  <concept name="sparrow" category="bird">
    <attribute>flies</attribute>
    <attribute>is_small</attribute>
  </concept>
  <concept name="fork" category="tool">
    <attribute>made_of_steel</attribute>
    <attribute>has_prongs</attribute>
  </concept>
  <concept name="hammer" category="tool">
    <attribute>made_of_steel</attribute>
    <attribute>is_heavy</attribute>
  </concept>
</concepts>
"""


def test_load_concepts_toy_corpus(tmp_path):
    path = tmp_path / "corpus.xml"
    path.write_text(CORPUS)
    ds = load_concepts(path)
    assert len(ds) == 4
    assert ds.n_categories == 2
    # attribute universe is the sorted union
    assert ds.feature_dim == 6
    pelican = ds.item(ds.ids[ds.names.index("pelican")])
    assert pelican.features.sum() == 2
    total = sum(len(ds.splits[k]) for k in ("train", "dev", "test"))
    assert total == 4


def test_load_concepts_split_seed_recorded(tmp_path):
    path = tmp_path / "corpus.xml"
    path.write_text(CORPUS)
    assert load_concepts(path, split_seed=1).seed == 1


def test_load_concepts_malformed_xml(tmp_path):
    path = tmp_path / "bad.xml"
    path.write_text("<concepts><concept name='x' category='y'>")
    with pytest.raises(DataParseError):
        load_concepts(path)


def test_load_concepts_empty_file(tmp_path):
    path = tmp_path / "empty.xml"
    path.write_text("")
    with pytest.raises(DataParseError):
        load_concepts(path)


def test_load_concepts_wrong_root(tmp_path):
    path = tmp_path / "root.xml"
    path.write_text("<items></items>")
    with pytest.raises(DataParseError):
        load_concepts(path)


def test_load_concepts_attributeless_item(tmp_path):
    path = tmp_path / "zero.xml"
    path.write_text(
        "<concepts><concept name='ghost' category='spirit'></concept></concepts>"
    )
    with pytest.raises(SchemaError):
        load_concepts(path)


def test_load_concepts_missing_category(tmp_path):
    path = tmp_path / "nocat.xml"
    path.write_text(
        "<concepts><concept name='x'><attribute>a</attribute></concept></concepts>"
    )
    with pytest.raises(SchemaError):
        load_concepts(path)


def test_roundtrip_shapes(tmp_path, shapes):
    path = tmp_path / "shapes.tsv"
    save_dataset(shapes, path)
    back = load_dataset(path)
    assert back.family == "shapes"
    assert np.array_equal(back.features, shapes.features)
    assert np.array_equal(back.ids, shapes.ids)
    for k in ("train", "dev", "test"):
        assert np.array_equal(np.sort(back.splits[k]), np.sort(shapes.splits[k]))
    # serialization is canonical: dumping the loaded copy is bit-identical
    assert dumps_dataset(back) == dumps_dataset(shapes)


def test_roundtrip_synth(tmp_path, synth):
    path = tmp_path / "synth.tsv"
    save_dataset(synth, path)
    back = load_dataset(path)
    assert np.array_equal(back.features, synth.features)
    assert np.array_equal(back.categories, synth.categories)
    assert back.n_categories == synth.n_categories


def test_load_dataset_rejects_missing_header(tmp_path):
    path = tmp_path / "noheader.tsv"
    path.write_text("0\ttrain\t-\t1,2\n")
    with pytest.raises(DataParseError):
        load_dataset(path)


def test_load_dataset_rejects_bad_split(tmp_path, shapes):
    path = tmp_path / "badsplit.tsv"
    text = dumps_dataset(shapes).replace("\ttrain\t", "\tvalidation\t", 1)
    path.write_text(text)
    with pytest.raises(DataParseError):
        load_dataset(path)


def test_load_dataset_rejects_out_of_range_feature(tmp_path, toy_concepts):
    path = tmp_path / "oob.tsv"
    lines = dumps_dataset(toy_concepts).splitlines()
    lines[1] = lines[1].rsplit("\t", 1)[0] + "\t0,99"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError):
        load_dataset(path)


def test_validate_catches_degenerate_items(toy_concepts):
    toy_concepts.validate()  # healthy
    broken = toy_concepts
    broken.features = broken.features.copy()
    broken.features[0, :] = 0
    with pytest.raises(SchemaError):
        broken.validate()
