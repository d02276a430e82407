"""Deterministic ground-truth agents.

The Shapes oracle speaks through a diagonal word/feature lexicon (word k
names feature k) and listens by feature overlap. The Concepts oracle is a
rational speaker built on a literal listener: it precomputes, for every
item, the 10 words that best single the item out, caps the vocabulary at
the 100 most used words, and listens by bag-of-words dot products against
its own messages. All argmax ties break toward the lowest index.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .data import Dataset, SHAPES_ATTRS, SHAPES_V, SHAPES_VALUES
from .errors import ConfigError, DataParseError


def overlap_listen(message, context_features, lexicon):
    """Pick the context item whose features most overlap the message.

    The message is reduced to a bag of word counts (order is ignored),
    projected into feature space through the lexicon, and dotted with each
    item's feature vector. Lowest index wins ties.
    """
    V = lexicon.shape[0]
    bag = np.bincount(np.asarray(message), minlength=V).astype(np.float64)
    msg_feat = bag @ lexicon
    scores = context_features.astype(np.float64) @ msg_feat
    return int(np.argmax(scores))


class ShapesOracle:
    """Diagonal-lexicon speaker/listener over Shapes items."""

    def __init__(self, dataset: Dataset):
        if dataset.family != "shapes":
            raise ConfigError("ShapesOracle requires a shapes dataset")
        self.dataset = dataset
        self.lexicon = np.eye(SHAPES_V)
        self.message_len = SHAPES_ATTRS
        self.vocab_size = SHAPES_V

    def speak(self, item):
        feats = np.flatnonzero(item.features)
        return [int(f) for f in np.sort(feats)]

    def listen(self, message, items):
        feats = np.stack([it.features for it in items])
        return overlap_listen(message, feats, self.lexicon)

    # batched game interface

    def speak_batch(self, ids, X):
        B = X.shape[0]
        msgs = np.empty((B, SHAPES_ATTRS), dtype=np.int64)
        for a in range(SHAPES_ATTRS):
            block = X[:, SHAPES_VALUES * a : SHAPES_VALUES * (a + 1)]
            msgs[:, a] = SHAPES_VALUES * a + np.argmax(block, axis=1)
        return msgs

    def choose_batch(self, msgs, ctx_ids, ctx_X):
        B, w = msgs.shape
        bags = np.zeros((B, SHAPES_V))
        np.add.at(bags, (np.repeat(np.arange(B), w), msgs.ravel()), 1.0)
        msg_feat = bags @ self.lexicon
        scores = np.einsum("bf,bkf->bk", msg_feat, ctx_X)
        return np.argmax(scores, axis=1)


# -- rational-speaker oracle for Concepts --------------------------------------


@dataclass
class RsaOracle:
    """Precomputed rational-speaker messages over a capped vocabulary.

    ``vocab_map[k]`` gives the augmented-feature index (raw attribute, or
    ``n_features + category``) that word k stands for. ``messages`` maps
    item id -> length-``message_len`` word-id array.
    """

    vocab_size: int
    message_len: int
    n_features: int
    n_categories: int
    vocab_map: np.ndarray          # (vocab_size,) augmented feature index per word
    messages: dict                 # item id -> np.ndarray (message_len,)
    literal_lexicon: np.ndarray    # (vocab_size, n_aug) one-hot rows

    def speak(self, item):
        return [int(w) for w in self.message_for(item.id)]

    def message_for(self, item_id):
        try:
            return self.messages[int(item_id)]
        except KeyError:
            raise ConfigError(f"item {item_id} unknown to the oracle") from None

    def listen(self, message, items):
        own = np.stack([self._bag(self.message_for(it.id)) for it in items])
        scores = own @ self._bag(message)
        return int(np.argmax(scores))

    def _bag(self, message):
        return np.bincount(np.asarray(message), minlength=self.vocab_size).astype(np.float64)

    # batched game interface

    def speak_batch(self, ids, X):
        return np.stack([self.message_for(i) for i in np.asarray(ids).ravel()])

    def choose_batch(self, msgs, ctx_ids, ctx_X):
        B, k = ctx_ids.shape
        own = np.stack(
            [self._bag(self.message_for(i)) for i in ctx_ids.ravel()]
        ).reshape(B, k, self.vocab_size)
        incoming = np.zeros((B, self.vocab_size))
        np.add.at(
            incoming,
            (np.repeat(np.arange(B), msgs.shape[1]), msgs.ravel()),
            1.0,
        )
        scores = np.einsum("bkv,bv->bk", own, incoming)
        return np.argmax(scores, axis=1)


def _augment(dataset: Dataset):
    """Append a one-hot category block to every item's attributes."""
    n, F = dataset.features.shape
    C = dataset.n_categories
    aug = np.zeros((n, F + C))
    aug[:, :F] = dataset.features
    aug[np.arange(n), F + dataset.categories] = 1.0
    return aug


def _speaker_scores(presence):
    """Literal-listener identification probability of each item per word.

    P(item | word) is the item's share of the word's feature column; a word
    carried by no item scores uniformly across items.
    """
    counts = presence.sum(axis=0)
    safe = np.where(counts > 0, counts, 1.0)
    scores = presence / safe
    n = presence.shape[0]
    scores[:, counts == 0] = 1.0 / n
    return scores


def _greedy_messages(scores, msg_len, mask_factor=1e-9):
    """Pick ``msg_len`` words per item by repeated argmax; a selected word's
    score is multiplied by ``mask_factor`` so it repeats only once every
    positive-scoring word has been used."""
    n = scores.shape[0]
    msgs = np.empty((n, msg_len), dtype=np.int64)
    for i in range(n):
        s = scores[i].copy()
        for t in range(msg_len):
            w = int(np.argmax(s))
            msgs[i, t] = w
            s[w] *= mask_factor
    return msgs


def build_rsa_oracle(dataset: Dataset, vocab_size: int = 100, msg_len: int = 10) -> RsaOracle:
    """Build the rational-speaker oracle from a categorized dataset.

    Messages are produced over category-augmented attributes, the
    vocabulary is capped to the ``vocab_size`` most used words, and the
    speaker is re-run over the retained words. Uses the whole dataset
    (train, dev and test items alike).
    """
    if dataset.categories is None:
        raise ConfigError("the rational-speaker oracle needs category labels")
    aug = _augment(dataset)
    scores = _speaker_scores(aug)
    first_pass = _greedy_messages(scores, msg_len)

    usage = np.bincount(first_pass.ravel(), minlength=aug.shape[1])
    used = np.flatnonzero(usage > 0)
    n_keep = min(vocab_size, len(used))
    # most used first, feature index breaking ties
    order = np.lexsort((np.arange(len(usage)), -usage))
    keep = np.sort(order[:n_keep])

    retained = aug[:, keep]
    second_pass = _greedy_messages(_speaker_scores(retained), msg_len)

    lexicon = np.zeros((n_keep, aug.shape[1]))
    lexicon[np.arange(n_keep), keep] = 1.0
    messages = {int(i): second_pass[r] for r, i in enumerate(dataset.ids)}
    return RsaOracle(
        vocab_size=n_keep,
        message_len=msg_len,
        n_features=dataset.feature_dim,
        n_categories=dataset.n_categories,
        vocab_map=keep,
        messages=messages,
        literal_lexicon=lexicon,
    )


def save_rsa_oracle(oracle: RsaOracle, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_rsa_oracle(oracle))


def dumps_rsa_oracle(oracle: RsaOracle) -> str:
    buf = io.StringIO()
    vm = ",".join(str(int(v)) for v in oracle.vocab_map)
    buf.write(
        f"#refplay-rsa-oracle\tV={oracle.vocab_size}\tw={oracle.message_len}"
        f"\tF={oracle.n_features}\tC={oracle.n_categories}\tvocab_map={vm}\n"
    )
    for item_id in sorted(oracle.messages):
        words = "\t".join(str(int(w)) for w in oracle.messages[item_id])
        buf.write(f"{item_id}\t{words}\n")
    return buf.getvalue()


def load_rsa_oracle(path) -> RsaOracle:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].startswith("#refplay-rsa-oracle"):
        raise DataParseError(f"{path}: missing oracle header")
    header = dict(tok.partition("=")[::2] for tok in lines[0].split("\t")[1:])
    V = int(header["V"])
    w = int(header["w"])
    F = int(header["F"])
    C = int(header["C"])
    vocab_map = np.array([int(t) for t in header["vocab_map"].split(",")])
    messages = {}
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = [int(t) for t in line.split("\t")]
        messages[parts[0]] = np.array(parts[1:], dtype=np.int64)
        if len(parts) - 1 != w:
            raise DataParseError(f"{path}: message for item {parts[0]} has wrong length")
    lexicon = np.zeros((V, F + C))
    lexicon[np.arange(V), vocab_map] = 1.0
    return RsaOracle(
        vocab_size=V,
        message_len=w,
        n_features=F,
        n_categories=C,
        vocab_map=vocab_map,
        messages=messages,
        literal_lexicon=lexicon,
    )


def oracle_for(dataset: Dataset):
    """The ground-truth agent pair appropriate to a dataset family."""
    if dataset.family == "shapes":
        return ShapesOracle(dataset)
    return build_rsa_oracle(dataset)
