"""Datasets for the reference game.

Two item families are supported. *Shapes* items have 3 attributes with 10
values each, laid out so that attribute ``a`` taking value ``v`` sets
feature ``10*a + v``; this makes the ground-truth lexicon the identity
mapping between words and features. *Concepts*-style items are bags of 597
binary attributes with a hidden category label, either parsed from an XML
corpus or generated synthetically with per-category attribute profiles.
"""

from __future__ import annotations

import io
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DataParseError, SchemaError

SHAPES_ATTRS = 3
SHAPES_VALUES = 10
SHAPES_F = SHAPES_ATTRS * SHAPES_VALUES
SHAPES_V = 30
SHAPES_SPLITS = (800, 100, 100)

CONCEPTS_F = 597
CONCEPTS_V = 100
CONCEPTS_SPLITS = (455, 55, 55)

SPLIT_NAMES = ("train", "dev", "test")


@dataclass(frozen=True)
class Item:
    """One referent: a binary feature vector plus an optional category."""

    id: int
    features: np.ndarray  # uint8 vector of length F
    category: Optional[int] = None
    name: Optional[str] = None

    def feature_indices(self):
        return np.flatnonzero(self.features)


@dataclass
class Dataset:
    family: str
    feature_dim: int
    vocab_size: int
    seed: int
    ids: np.ndarray                 # (n,) stable item ids
    features: np.ndarray            # (n, F) uint8
    splits: dict                    # split name -> ndarray of item ids
    categories: Optional[np.ndarray] = None   # (n,) int, or None
    names: Optional[list] = None
    n_categories: int = 0
    _row_of: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._row_of:
            self._row_of = {int(i): r for r, i in enumerate(self.ids)}

    def __len__(self):
        return len(self.ids)

    def row(self, item_id):
        return self._row_of[int(item_id)]

    def rows(self, item_ids):
        return np.array([self._row_of[int(i)] for i in np.asarray(item_ids).ravel()]).reshape(
            np.asarray(item_ids).shape
        )

    def item(self, item_id) -> Item:
        r = self.row(item_id)
        cat = int(self.categories[r]) if self.categories is not None else None
        name = self.names[r] if self.names is not None else None
        return Item(int(self.ids[r]), self.features[r], cat, name)

    def split_ids(self, split):
        if split not in self.splits:
            raise ConfigError(f"unknown split {split!r}")
        return self.splits[split]

    def feature_matrix(self, item_ids, dtype=np.float64):
        """Feature rows for the given ids, any leading shape."""
        item_ids = np.asarray(item_ids)
        rows = self.rows(item_ids.ravel())
        return self.features[rows].reshape(item_ids.shape + (self.feature_dim,)).astype(dtype)

    def validate(self):
        seen = set()
        for name in SPLIT_NAMES:
            ids = set(int(i) for i in self.splits[name])
            if seen & ids:
                raise SchemaError("splits are not disjoint")
            seen |= ids
        if len(seen) != len(self.ids):
            raise SchemaError("splits do not cover the dataset")
        if (self.features.sum(axis=1) == 0).any():
            raise SchemaError("item with all-zero attributes")
        train_vecs = {self.features[self.row(i)].tobytes() for i in self.splits["train"]}
        for i in self.splits["test"]:
            if self.features[self.row(i)].tobytes() in train_vecs:
                raise SchemaError(f"test item {int(i)} duplicates a train feature vector")


def _partition(ids, sizes, rng):
    order = rng.permutation(len(ids))
    shuffled = np.asarray(ids)[order]
    a, b, c = sizes
    return {
        "train": np.sort(shuffled[:a]),
        "dev": np.sort(shuffled[a : a + b]),
        "test": np.sort(shuffled[a + b : a + b + c]),
    }


def scaled_split_sizes(n_items, ratios=CONCEPTS_SPLITS):
    total = sum(ratios)
    train = int(round(n_items * ratios[0] / total))
    dev = int(round(n_items * ratios[1] / total))
    dev = min(dev, n_items - train)
    return (train, dev, n_items - train - dev)


def generate_shapes(seed: int) -> Dataset:
    """Enumerate all 10x10x10 attribute combinations and split 800/100/100."""
    rng = np.random.default_rng(seed)
    n = SHAPES_VALUES ** SHAPES_ATTRS
    feats = np.zeros((n, SHAPES_F), dtype=np.uint8)
    names = []
    for i in range(n):
        vals = (i // 100, (i // 10) % 10, i % 10)
        for a, v in enumerate(vals):
            feats[i, SHAPES_VALUES * a + v] = 1
        names.append("-".join(str(v) for v in vals))
    ids = np.arange(n)
    ds = Dataset(
        family="shapes",
        feature_dim=SHAPES_F,
        vocab_size=SHAPES_V,
        seed=seed,
        ids=ids,
        features=feats,
        splits=_partition(ids, SHAPES_SPLITS, rng),
        names=names,
    )
    ds.validate()
    return ds


def synth_concepts(seed: int, n_categories: int = 20, n_items: int = 565) -> Dataset:
    """Synthetic Concepts-style corpus.

    Each category gets 30 "core" attributes present with probability 0.9;
    every other attribute appears with probability 0.02, so attributes
    co-occur within categories.
    """
    if n_categories < 2 or n_items < n_categories:
        raise ConfigError("need n_items >= n_categories >= 2")
    rng = np.random.default_rng(seed)
    cores = [rng.choice(CONCEPTS_F, size=30, replace=False) for _ in range(n_categories)]
    cats = np.sort(np.concatenate([np.arange(n_categories),
                                   rng.integers(0, n_categories, size=n_items - n_categories)]))
    feats = np.zeros((n_items, CONCEPTS_F), dtype=np.uint8)
    seen_vecs = set()
    for i in range(n_items):
        probs = np.full(CONCEPTS_F, 0.02)
        probs[cores[cats[i]]] = 0.9
        for _ in range(100):
            vec = (rng.random(CONCEPTS_F) < probs).astype(np.uint8)
            if vec.any() and vec.tobytes() not in seen_vecs:
                break
        else:
            raise SchemaError("could not draw a unique non-empty item")
        feats[i] = vec
        seen_vecs.add(vec.tobytes())
    ids = np.arange(n_items)
    ds = Dataset(
        family="concepts",
        feature_dim=CONCEPTS_F,
        vocab_size=CONCEPTS_V,
        seed=seed,
        ids=ids,
        features=feats,
        splits=_partition(ids, scaled_split_sizes(n_items), rng),
        categories=cats,
        n_categories=n_categories,
    )
    ds.validate()
    return ds


def load_concepts(path, split_seed: int = 1) -> Dataset:
    """Parse a Concepts attribute corpus.

    Expected XML shape::

        <concepts>
          <concept name="pelican" category="bird">
            <attribute>has_long_neck</attribute>
            ...
          </concept>
        </concepts>

    The attribute universe is the sorted union of attribute strings; the
    split is a seeded random 455/55/55 partition (scaled when the corpus
    has a different item count).
    """
    try:
        tree = ET.parse(path)
    except ET.ParseError as e:
        raise DataParseError(f"malformed concepts XML {path}: {e}") from e
    root = tree.getroot()
    if root.tag != "concepts":
        raise DataParseError(f"expected root element <concepts>, got <{root.tag}>")
    records = []
    for el in root:
        if el.tag != "concept":
            raise DataParseError(f"unexpected element <{el.tag}> under <concepts>")
        name = el.get("name")
        cat = el.get("category")
        if not name or not cat:
            raise SchemaError(f"<concept> missing name/category attributes (name={name!r})")
        attrs = sorted({(a.text or "").strip() for a in el.findall("attribute")} - {""})
        if not attrs:
            raise SchemaError(f"concept {name!r} has no attributes")
        records.append((name, cat, attrs))
    if not records:
        raise SchemaError("corpus contains no concepts")

    attr_names = sorted({a for _, _, attrs in records for a in attrs})
    attr_index = {a: i for i, a in enumerate(attr_names)}
    cat_names = sorted({c for _, c, _ in records})
    cat_index = {c: i for i, c in enumerate(cat_names)}

    n = len(records)
    feats = np.zeros((n, len(attr_names)), dtype=np.uint8)
    cats = np.zeros(n, dtype=np.int64)
    names = []
    for i, (name, cat, attrs) in enumerate(records):
        for a in attrs:
            feats[i, attr_index[a]] = 1
        cats[i] = cat_index[cat]
        names.append(name)

    rng = np.random.default_rng(split_seed)
    ids = np.arange(n)
    ds = Dataset(
        family="concepts",
        feature_dim=len(attr_names),
        vocab_size=CONCEPTS_V,
        seed=split_seed,
        ids=ids,
        features=feats,
        splits=_partition(ids, scaled_split_sizes(n), rng),
        categories=cats,
        names=names,
        n_categories=len(cat_names),
    )
    ds.validate()
    return ds


# -- text serialization -------------------------------------------------------
#
# One header line (F, V, split sizes, seed), then one line per item:
#   id<TAB>split<TAB>category<TAB>comma-separated feature indices


def save_dataset(ds: Dataset, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_dataset(ds))


def dumps_dataset(ds: Dataset) -> str:
    buf = io.StringIO()
    sizes = {name: len(ds.splits[name]) for name in SPLIT_NAMES}
    buf.write(
        f"#refplay-dataset\tfamily={ds.family}\tF={ds.feature_dim}\tV={ds.vocab_size}"
        f"\ttrain={sizes['train']}\tdev={sizes['dev']}\ttest={sizes['test']}"
        f"\tseed={ds.seed}\tcategories={ds.n_categories}\n"
    )
    split_of = {}
    for name in SPLIT_NAMES:
        for i in ds.splits[name]:
            split_of[int(i)] = name
    for r, item_id in enumerate(ds.ids):
        cat = str(int(ds.categories[r])) if ds.categories is not None else "-"
        feats = ",".join(str(j) for j in np.flatnonzero(ds.features[r]))
        buf.write(f"{int(item_id)}\t{split_of[int(item_id)]}\t{cat}\t{feats}\n")
    return buf.getvalue()


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith("#refplay-dataset"):
        raise DataParseError(f"{path}: missing dataset header line")
    header = {}
    for tok in lines[0].split("\t")[1:]:
        k, _, v = tok.partition("=")
        header[k] = v
    try:
        F = int(header["F"])
        V = int(header["V"])
        seed = int(header["seed"])
        n_cats = int(header.get("categories", "0"))
        family = header["family"]
    except (KeyError, ValueError) as e:
        raise DataParseError(f"{path}: bad dataset header: {e}") from e

    ids, feats, cats, splits = [], [], [], {n: [] for n in SPLIT_NAMES}
    has_cats = False
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise DataParseError(f"{path}:{ln}: expected 4 tab-separated fields")
        item_id, split, cat, featstr = parts
        if split not in SPLIT_NAMES:
            raise DataParseError(f"{path}:{ln}: unknown split {split!r}")
        vec = np.zeros(F, dtype=np.uint8)
        for tok in featstr.split(","):
            j = int(tok)
            if not 0 <= j < F:
                raise SchemaError(f"{path}:{ln}: feature index {j} out of range")
            vec[j] = 1
        ids.append(int(item_id))
        feats.append(vec)
        if cat != "-":
            has_cats = True
            cats.append(int(cat))
        else:
            cats.append(-1)
        splits[split].append(int(item_id))

    ds = Dataset(
        family=family,
        feature_dim=F,
        vocab_size=V,
        seed=seed,
        ids=np.array(ids),
        features=np.array(feats, dtype=np.uint8),
        splits={n: np.array(v) for n, v in splits.items()},
        categories=np.array(cats) if has_cats else None,
        n_categories=n_cats,
    )
    expected = {n: int(header[n]) for n in SPLIT_NAMES}
    actual = {n: len(ds.splits[n]) for n in SPLIT_NAMES}
    if expected != actual:
        raise SchemaError(f"{path}: split sizes {actual} do not match header {expected}")
    ds.validate()
    return ds
