"""The reference game: contexts, rounds, rewards.

A speaker observes only the referent and emits a fixed-length message; a
listener observes the shuffled context plus the message and picks an item.
Both sides are rewarded +1 on a correct pick and -1 otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset
from .errors import ConfigError, ProtocolError


@dataclass
class GameConfig:
    context_size: int = 5
    message_len: int = 3
    vocab_size: int = 30
    reward_win: int = 1
    reward_lose: int = -1

    def __post_init__(self):
        if self.context_size < 2 or self.message_len < 1 or self.vocab_size < 1:
            raise ConfigError(f"invalid game config: {self}")


@dataclass
class Context:
    referent_id: int
    item_ids: list            # context_size ids, referent exactly once, shuffled
    referent_pos: int = field(init=False)

    def __post_init__(self):
        positions = [i for i, x in enumerate(self.item_ids) if x == self.referent_id]
        if len(positions) != 1:
            raise ConfigError("referent must appear exactly once in the context")
        self.referent_pos = positions[0]


@dataclass
class Round:
    context: Context
    message: list
    choice: int
    reward: int


def sample_context(dataset: Dataset, split: str, cfg: GameConfig, rng, referent_id=None) -> Context:
    """Draw a context: a referent plus distinct same-split distractors, shuffled."""
    ids = dataset.split_ids(split)
    k = cfg.context_size
    if len(ids) < k:
        raise ConfigError(f"split {split!r} has {len(ids)} items, need {k}")
    if referent_id is None:
        referent_id = int(ids[rng.integers(len(ids))])
    ref_pos = int(np.searchsorted(ids, referent_id))
    if ref_pos >= len(ids) or ids[ref_pos] != referent_id:
        raise ConfigError(f"referent {referent_id} not in split {split!r}")
    picks = rng.choice(len(ids) - 1, size=k - 1, replace=False)
    picks[picks >= ref_pos] += 1
    members = [referent_id] + [int(ids[j]) for j in picks]
    order = rng.permutation(k)
    return Context(referent_id, [members[j] for j in order])


def sample_context_batch(dataset, split, cfg, rng, referent_ids):
    """Vectorized context sampling for a batch of referents.

    Returns (ids (B,k), referent_pos (B,)). Distractors are drawn without
    replacement from the same split; order is shuffled per row.
    """
    split_ids = dataset.split_ids(split)
    n = len(split_ids)
    k = cfg.context_size
    if n < k:
        raise ConfigError(f"split {split!r} has {n} items, need {k}")
    B = len(referent_ids)
    out = np.empty((B, k), dtype=np.int64)
    ref_pos = np.empty(B, dtype=np.int64)
    for b, rid in enumerate(referent_ids):
        p = int(np.searchsorted(split_ids, rid))
        picks = rng.choice(n - 1, size=k - 1, replace=False)
        picks[picks >= p] += 1
        members = np.concatenate(([rid], split_ids[picks]))
        order = rng.permutation(k)
        out[b] = members[order]
        ref_pos[b] = int(np.nonzero(order == 0)[0][0])
    return out, ref_pos


def compute_reward(referent: int, choice: int, cfg: GameConfig = None) -> int:
    win = cfg.reward_win if cfg is not None else 1
    lose = cfg.reward_lose if cfg is not None else -1
    return win if referent == choice else lose


def play_round(speaker, listener, context: Context, dataset: Dataset, cfg: GameConfig) -> Round:
    """One game round. The speaker sees only the referent; the listener sees
    the shuffled context and the message."""
    said = speaker.speak(dataset.item(context.referent_id))
    message = [int(w) for w in getattr(said, "actions", said)]
    if len(message) != cfg.message_len:
        raise ProtocolError(
            f"speaker produced {len(message)} words, game expects {cfg.message_len}"
        )
    items = [dataset.item(i) for i in context.item_ids]
    heard = listener.listen(message, items)
    choice = int(getattr(heard, "actions", heard))
    reward = compute_reward(context.referent_pos, choice, cfg)
    return Round(context, message, choice, reward)


def emit_batch(speaker, ref_ids, X_ref, rng=None, mode="argmax"):
    """Messages for a batch of referents from an Agent or a scripted player."""
    from .agent import Agent

    if isinstance(speaker, Agent):
        ids, _, _ = speaker.speak_batch(X_ref, rng=rng, mode=mode)
        return ids
    return np.asarray(speaker.speak_batch(ref_ids, X_ref), dtype=np.int64)


def pick_batch(listener, msgs, ctx_ids, ctx_X, rng=None, mode="argmax"):
    """Choices for a batch of contexts from an Agent or a scripted player."""
    from .agent import Agent

    if isinstance(listener, Agent):
        choices, _, _ = listener.listen_batch(msgs, ctx_X, rng=rng, mode=mode)
        return choices
    return np.asarray(listener.choose_batch(msgs, ctx_ids, ctx_X), dtype=np.int64)


def play_batch(speaker, listener, dataset, split, cfg, rng, referent_ids=None,
               mode="argmax"):
    """Play one round per referent (every split item once by default).

    Returns (msgs (B,w), choices (B,), referent_pos (B,), ctx_ids (B,k)).
    Graph-free: meant for evaluation probes, not for training losses.
    """
    from . import autodiff as ad

    if referent_ids is None:
        referent_ids = dataset.split_ids(split)
    ctx_ids, ref_pos = sample_context_batch(dataset, split, cfg, rng, referent_ids)
    X_ref = dataset.feature_matrix(referent_ids)
    ctx_X = dataset.feature_matrix(ctx_ids)
    with ad.no_grad():
        msgs = emit_batch(speaker, referent_ids, X_ref, rng=rng, mode=mode)
        choices = pick_batch(listener, msgs, ctx_ids, ctx_X, rng=rng, mode=mode)
    return msgs, choices, ref_pos, ctx_ids


def pair_accuracy(speaker, listener, dataset, split, cfg, rng, mode="argmax") -> float:
    """Percent accuracy of one argmax pass over a split, fresh distractors."""
    _, choices, ref_pos, _ = play_batch(speaker, listener, dataset, split, cfg, rng,
                                        mode=mode)
    return 100.0 * float(np.mean(choices == ref_pos))


def round_to_tsv(rnd: Round) -> str:
    ctx = ",".join(str(i) for i in rnd.context.item_ids)
    msg = ",".join(str(w) for w in rnd.message)
    return f"{ctx}\t{msg}\t{rnd.choice}\t{rnd.reward}"


def write_transcript(rounds: Sequence[Round], path):
    with open(path, "w", encoding="utf-8") as f:
        f.write("#context_ids\tmessage\tchoice\treward\n")
        for rnd in rounds:
            f.write(round_to_tsv(rnd) + "\n")


# -- simple baseline players --------------------------------------------------


class RandomSpeaker:
    """Emits uniform random words; the chance-level baseline."""

    def __init__(self, cfg: GameConfig, rng):
        self.cfg = cfg
        self.rng = rng

    def speak(self, item):
        return list(self.rng.integers(0, self.cfg.vocab_size, size=self.cfg.message_len))

    def speak_batch(self, ids, X):
        return self.rng.integers(0, self.cfg.vocab_size, size=(len(ids), self.cfg.message_len))


class RandomListener:
    def __init__(self, cfg: GameConfig, rng):
        self.cfg = cfg
        self.rng = rng

    def listen(self, message, items):
        return int(self.rng.integers(len(items)))

    def choose_batch(self, msgs, ctx_ids, ctx_X):
        return self.rng.integers(0, ctx_ids.shape[1], size=len(msgs))


class ConstantSpeaker:
    """Always says the same message; carries no information."""

    def __init__(self, message):
        self.message = list(message)

    def speak(self, item):
        return list(self.message)

    def speak_batch(self, ids, X):
        return np.tile(np.asarray(self.message), (len(ids), 1))
