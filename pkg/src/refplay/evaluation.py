"""Accuracy measurement, lexicon inspection and dialog transcripts.

Accuracy follows the resampling protocol: the referent set is fixed (every
item of the split), the distractors are redrawn per resample, policies run
argmax, and the report carries a normal-approximation 95% interval over
the resample means. Lexicon counts pair every produced word with every
attribute of the referent, which deliberately records ambient
co-occurrence alongside real word/attribute associations.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError
from .game import GameConfig, play_batch
from .oracle import RsaOracle, ShapesOracle


@dataclass
class AccuracyReport:
    mean: float                # percent
    ci95: float                # half-width, percent
    n_resamples: int
    pairing: str
    resamples: np.ndarray      # per-resample accuracies, percent

    def __str__(self):
        return f"{self.pairing}: {self.mean:.1f} +/- {self.ci95:.1f} (n={self.n_resamples})"


def measure_accuracy(speaker, listener, dataset: Dataset, split: str,
                     game_cfg: GameConfig, n_resamples: int = 100, rng=None,
                     pairing: str = "") -> AccuracyReport:
    """Mean argmax accuracy over n_resamples passes of the whole split.

    Each pass keeps the referents (every split item once) and redraws the
    distractors.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    accs = np.empty(n_resamples)
    for r in range(n_resamples):
        _, choices, ref_pos, _ = play_batch(speaker, listener, dataset, split,
                                            game_cfg, rng)
        accs[r] = 100.0 * float(np.mean(choices == ref_pos))
    mean = float(np.mean(accs))
    if n_resamples > 1:
        ci = 1.96 * float(np.std(accs, ddof=1)) / np.sqrt(n_resamples)
    else:
        ci = 0.0
    return AccuracyReport(mean, ci, n_resamples, pairing, accs)


# -- lexicon counts -------------------------------------------------------


@dataclass
class LexiconCounts:
    counts: np.ndarray         # (V, F) ints; cell (i, j): word i said of a referent with attribute j
    n_rounds: int
    msg_len: int


def split_messages(speaker, dataset: Dataset, split: str, game_cfg: GameConfig):
    """Argmax message for every item of the split, in split order."""
    from .game import emit_batch

    ids = dataset.split_ids(split)
    X = dataset.feature_matrix(ids)
    msgs = emit_batch(speaker, ids, X, rng=np.random.default_rng(0), mode="argmax")
    return ids, np.asarray(msgs, dtype=np.int64)


def build_lexicon(speaker, dataset: Dataset, split: str, game_cfg: GameConfig,
                  vocab_size=None) -> LexiconCounts:
    """Word/attribute co-occurrence counts over one argmax pass of a split."""
    V = vocab_size if vocab_size is not None else game_cfg.vocab_size
    ids, msgs = split_messages(speaker, dataset, split, game_cfg)
    F = dataset.feature_dim
    counts = np.zeros((V, F), dtype=np.int64)
    feats = dataset.feature_matrix(ids).astype(bool)
    for row in range(len(ids)):
        attrs = np.flatnonzero(feats[row])
        for w in msgs[row]:
            counts[w, attrs] += 1
    return LexiconCounts(counts, n_rounds=len(ids), msg_len=msgs.shape[1])


def diagonal_dominance(lex: LexiconCounts) -> int:
    """Number of attributes whose most frequent word is the attribute's own
    index (meaningful when V >= F and word k names feature k)."""
    hits = 0
    for j in range(lex.counts.shape[1]):
        col = lex.counts[:, j]
        if col.sum() > 0 and int(np.argmax(col)) == j:
            hits += 1
    return hits


def matrix_cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity between two matrices flattened to vectors."""
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        return 0.0
    return float(x @ y / (nx * ny))


# -- message correlation ---------------------------------------------------


def message_correlation(speaker, dataset: Dataset, split: str,
                        game_cfg: GameConfig, rng=None,
                        max_pairs: int = 100_000) -> np.ndarray:
    """F x F matrix of mean message overlap between attribute carriers.

    Cell (f, g) averages, over ordered item pairs x != y with f in x and
    g in y, the bag-of-words overlap |bag(m_x) ^ bag(m_y)| / w. All pairs
    are used for splits of up to 200 items, max_pairs samples otherwise.
    Symmetric, entries in [0, 1]; attribute pairs never observed get 0.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    ids, msgs = split_messages(speaker, dataset, split, game_cfg)
    n, w = msgs.shape
    V = game_cfg.vocab_size
    bags = np.zeros((n, V), dtype=np.int64)
    np.add.at(bags, (np.repeat(np.arange(n), w), msgs.ravel()), 1)
    A = dataset.feature_matrix(ids)                       # (n, F) 0/1
    if n <= 200:
        overlap = np.minimum(bags[:, None, :], bags[None, :, :]).sum(axis=2) / w
        np.fill_diagonal(overlap, 0.0)
        pair_count = np.ones((n, n)) - np.eye(n)
        sums = A.T @ overlap @ A
        cnts = A.T @ pair_count @ A
    else:
        xs = rng.integers(0, n, size=max_pairs)
        ys = rng.integers(0, n, size=max_pairs)
        keep = xs != ys
        xs, ys = xs[keep], ys[keep]
        ov = np.minimum(bags[xs], bags[ys]).sum(axis=1) / w
        sums = A[xs].T @ (ov[:, None] * A[ys])
        cnts = A[xs].T @ A[ys]
        sums = sums + sums.T
        cnts = cnts + cnts.T
    out = np.divide(sums, cnts, out=np.zeros_like(sums, dtype=np.float64),
                    where=cnts > 0)
    return out


# -- dialog transcripts ----------------------------------------------------


def word_names_item(oracle, word: int, item) -> bool:
    """Whether a word is ground-truth for the item under an oracle lexicon."""
    if isinstance(oracle, ShapesOracle):
        return bool(item.features[word])
    if isinstance(oracle, RsaOracle):
        f = int(oracle.vocab_map[word])
        if f < oracle.n_features:
            return bool(item.features[f])
        return item.category == f - oracle.n_features
    return False


def _item_label(item):
    return f"{item.id}:{item.name}" if item.name else str(item.id)


def dump_dialogs(speaker, listener, dataset: Dataset, n: int,
                 game_cfg: GameConfig, rng=None, truth_oracle=None,
                 split: str = "test", pairing: str = "") -> str:
    """Render n argmax rounds; words the referent actually carries under
    the oracle lexicon are starred."""
    if rng is None:
        rng = np.random.default_rng(0)
    buf = io.StringIO()
    buf.write(f"#dialogs pairing={pairing or 'unnamed'} split={split} n={n}\n")
    if n == 0:
        return buf.getvalue()
    split_ids = dataset.split_ids(split)
    refs = split_ids[rng.integers(0, len(split_ids), size=n)]
    msgs, choices, ref_pos, ctx_ids = play_batch(speaker, listener, dataset,
                                                 split, game_cfg, rng,
                                                 referent_ids=refs)
    for r in range(n):
        referent = dataset.item(refs[r])
        buf.write(f"=== round {r + 1}\n")
        cells = []
        for pos, i in enumerate(ctx_ids[r]):
            lab = _item_label(dataset.item(i))
            cells.append(f"[{lab}]" if pos == ref_pos[r] else lab)
        buf.write("context: " + "  ".join(cells) + "\n")
        words = []
        for wd in msgs[r]:
            star = "*" if truth_oracle is not None and \
                word_names_item(truth_oracle, int(wd), referent) else ""
            words.append(f"{wd}{star}")
        buf.write("message: " + " ".join(words) + "\n")
        picked = dataset.item(ctx_ids[r][choices[r]])
        reward = game_cfg.reward_win if choices[r] == ref_pos[r] else game_cfg.reward_lose
        buf.write(f"choice: {_item_label(picked)}  reward: {reward:+d}\n")
    return buf.getvalue()


# -- artifact files --------------------------------------------------------


def write_matrix_csv(matrix: np.ndarray, path, col_prefix: str = "a"):
    m = np.asarray(matrix)
    with open(path, "w", encoding="utf-8") as f:
        f.write("," + ",".join(f"{col_prefix}{j}" for j in range(m.shape[1])) + "\n")
        for i, row in enumerate(m):
            if m.dtype.kind in "iu":
                cells = [str(int(v)) for v in row]
            else:
                cells = [f"{v:.6f}" for v in row]
            f.write(f"{i}," + ",".join(cells) + "\n")


def write_summary(pairs: dict, path):
    """Machine-readable key-value summary, one `key<TAB>value` per line."""
    with open(path, "w", encoding="utf-8") as f:
        for k in sorted(pairs):
            v = pairs[k]
            if isinstance(v, float):
                v = f"{v:.6f}"
            f.write(f"{k}\t{v}\n")


def save_heatmap(matrix: np.ndarray, path, title: str = "",
                 xlabel: str = "attribute", ylabel: str = "word"):
    """Row-max normalized grayscale heatmap rendered to an image file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    m = np.asarray(matrix, dtype=np.float64)
    rmax = m.max(axis=1, keepdims=True)
    norm = np.divide(m, rmax, out=np.zeros_like(m), where=rmax > 0)
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(norm, cmap="gray_r", aspect="auto", interpolation="nearest")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_curves(record, path):
    """Dev accuracy curves (target, novel, rolling) over epochs."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    epochs = [e.epoch for e in record.epochs]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, [e.dev_target for e in record.epochs], label="target dev",
            alpha=0.4)
    ax.plot(epochs, [e.dev_novel for e in record.epochs], label="novel dev",
            alpha=0.4)
    ax.plot(epochs, [e.rolling_target for e in record.epochs],
            label="target rolling")
    ax.plot(epochs, [e.rolling_novel for e in record.epochs],
            label="novel rolling")
    ax.set_xlabel("epoch")
    ax.set_ylabel("dev accuracy (%)")
    ax.set_ylim(0, 101)
    ax.legend(loc="lower right")
    ax.set_title(record.regime)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
