"""Learning agents: embeddings, codecs and the two game roles.

One agent owns a single item embedding and a single word embedding, used
both when speaking and when listening. That sharing is deliberate: training
one role moves the representations the other role reads, which is what
lets a listener-trained agent speak (and vice versa).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, NumericError
from .nets import ARCHITECTURES, ParamStore, make_decoder, make_encoder

CHECKPOINT_MAGIC = b"RFPLAY01"

MODES = ("sample", "argmax")


@dataclass
class PolicyOutput:
    """Actions with their log-probabilities and policy entropies, detached."""

    actions: object            # word id list when speaking, item index when listening
    logprobs: np.ndarray
    entropy: np.ndarray


class Agent:
    def __init__(self, arch: str, feature_dim: int, vocab_size: int,
                 msg_len: int, d: int = 64, seed: int = 0,
                 tied_output: bool = True):
        if arch not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {arch!r}")
        self.arch = arch
        self.feature_dim = feature_dim
        self.vocab_size = vocab_size
        self.msg_len = msg_len
        self.d = d
        self.seed = seed
        self.tied_output = tied_output
        init_rng, self.rng = [
            np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)
        ]
        self.store = ParamStore(d, init_rng)
        self.E_item = self.store.weight("E_item", (feature_dim, d))
        self.E_word = self.store.weight("E_word", (vocab_size, d))
        self.decoder = make_decoder(arch, self.store, "dec", d, vocab_size,
                                    max_len=msg_len + 1, tied=tied_output)
        self.encoder = make_encoder(arch, self.store, "enc", d, max_len=msg_len)

    # -- embeddings -------------------------------------------------------

    def embed_items(self, X):
        """Linear item embedding (no bias): rows of X are feature vectors."""
        return ad.as_tensor(np.asarray(X, dtype=np.float64)) @ self.E_item

    def embed_words(self, ids):
        return ad.embedding(self.E_word, np.asarray(ids))

    # -- speaking ---------------------------------------------------------

    def speak_batch(self, X, rng=None, mode: str = "sample", training: bool = False):
        """Emit one message per feature row.

        Returns (ids (B, w) int64, logprobs Tensor (B, w), entropy Tensor
        (B, w)); the tensors stay on the graph for policy-gradient losses.
        """
        _check_mode(mode)
        rng = self.rng if rng is None else rng
        item_vecs = self.embed_items(X)
        ids, logp, ent = self.decoder.sample(
            item_vecs, self.E_word, self.msg_len, rng,
            greedy=(mode == "argmax"), training=training,
        )
        self._check_finite(logp.data, "speaking")
        return ids, logp, ent

    def speak_logprobs(self, X, msgs, rng=None, training: bool = False):
        """Per-word log-probability of reproducing given messages (no sampling)."""
        rng = self.rng if rng is None else rng
        item_vecs = self.embed_items(X)
        logp = self.decoder.logprobs(item_vecs, self.E_word,
                                     np.asarray(msgs, dtype=np.int64),
                                     rng=rng, training=training)
        self._check_finite(logp.data, "speaking")
        return logp

    def speak(self, item, mode: str = "sample", rng=None) -> PolicyOutput:
        """Single-item convenience wrapper; returns detached numbers."""
        with ad.no_grad():
            ids, logp, ent = self.speak_batch(
                np.asarray(item.features, dtype=np.float64)[None, :],
                rng=rng, mode=mode,
            )
        return PolicyOutput([int(w) for w in ids[0]], logp.data[0].copy(),
                            ent.data[0].copy())

    # -- listening --------------------------------------------------------

    def listen_batch(self, msgs, ctx_X, rng=None, mode: str = "sample",
                     training: bool = False):
        """Pick one context item per row.

        msgs: (B, w) word ids; ctx_X: (B, k, F) context features. Returns
        (choices (B,), logprob Tensor (B,), entropy Tensor (B,)).
        """
        _check_mode(mode)
        rng = self.rng if rng is None else rng
        msgs = np.asarray(msgs, dtype=np.int64)
        B, k, _ = ctx_X.shape
        msg_vec = self.encoder.encode(self.embed_words(msgs), rng=rng,
                                      training=training)
        ctx_vecs = self.embed_items(ctx_X.reshape(B * k, -1)).reshape((B, k, self.d))
        scores = (ctx_vecs @ msg_vec.reshape((B, self.d, 1))).reshape((B, k))
        logp = ad.log_softmax(scores)
        self._check_finite(logp.data, "listening")
        if mode == "argmax":
            choices = np.argmax(logp.data, axis=-1)
        else:
            cum = np.cumsum(np.exp(logp.data), axis=-1)
            u = rng.random(B)[:, None] * cum[:, -1:]
            choices = np.minimum((cum < u).sum(axis=-1), k - 1)
        chosen_logp = ad.take_last_axis(logp, choices)
        ent = -(logp.exp() * logp).sum(axis=-1)
        return choices, chosen_logp, ent

    def listen(self, message, items, mode: str = "sample", rng=None) -> PolicyOutput:
        with ad.no_grad():
            ctx_X = np.stack([np.asarray(it.features, dtype=np.float64) for it in items])
            choices, logp, ent = self.listen_batch(
                np.asarray(message, dtype=np.int64)[None, :], ctx_X[None, :, :],
                rng=rng, mode=mode,
            )
        return PolicyOutput(int(choices[0]), logp.data[0].copy(), ent.data[0].copy())

    def listen_probs(self, msgs, ctx_X):
        """Choice distribution over each row's context items, as (B, k)."""
        with ad.no_grad():
            msgs = np.asarray(msgs, dtype=np.int64)
            B, k, _ = ctx_X.shape
            msg_vec = self.encoder.encode(self.embed_words(msgs))
            ctx_vecs = self.embed_items(ctx_X.reshape(B * k, -1)).reshape((B, k, self.d))
            scores = (ctx_vecs @ msg_vec.reshape((B, self.d, 1))).reshape((B, k))
            return ad.softmax(scores).data.copy()

    # -- bookkeeping ------------------------------------------------------

    def zero_grad(self):
        self.store.zero_grad()

    def snapshot(self):
        return {name: t.data.copy() for name, t in self.store.items()}

    def restore(self, snap):
        for name, t in self.store.items():
            t.data[...] = snap[name]

    def _check_finite(self, arr, role):
        if np.all(np.isfinite(arr)):
            return
        bad = [name for name, t in self.store.items()
               if not np.all(np.isfinite(t.data))]
        raise NumericError(
            f"non-finite logits while {role}"
            + (f"; non-finite parameters: {', '.join(bad)}" if bad else "")
        )


def _check_mode(mode):
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")


# -- checkpoints ----------------------------------------------------------


def save_checkpoint(agent: Agent, path):
    """Magic, JSON header with a tensor manifest, then all parameters as a
    flat little-endian float32 blob in manifest order."""
    manifest = [{"name": name, "shape": list(t.data.shape)}
                for name, t in agent.store.items()]
    header = {
        "arch": agent.arch,
        "feature_dim": agent.feature_dim,
        "vocab_size": agent.vocab_size,
        "msg_len": agent.msg_len,
        "d": agent.d,
        "seed": agent.seed,
        "tied_output": agent.tied_output,
        "tensors": manifest,
    }
    blob = np.concatenate(
        [t.data.astype("<f4").ravel() for _, t in agent.store.items()]
    ).tobytes()
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(payload)))
        f.write(payload)
        f.write(blob)


def load_checkpoint(path) -> Agent:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ConfigError(f"{path}: not an agent checkpoint")
    off = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = json.loads(raw[off : off + hlen].decode("utf-8"))
    off += hlen
    agent = Agent(header["arch"], header["feature_dim"], header["vocab_size"],
                  header["msg_len"], d=header["d"], seed=header["seed"],
                  tied_output=header.get("tied_output", True))
    flat = np.frombuffer(raw[off:], dtype="<f4")
    pos = 0
    names = {m["name"]: tuple(m["shape"]) for m in header["tensors"]}
    if set(names) != set(dict(agent.store.items())):
        raise ConfigError(f"{path}: tensor manifest does not match architecture")
    for m in header["tensors"]:
        t = agent.store[m["name"]]
        n = int(np.prod(m["shape"], dtype=np.int64)) if m["shape"] else 1
        if tuple(m["shape"]) != t.data.shape:
            raise ConfigError(f"{path}: shape mismatch for {m['name']}")
        t.data[...] = flat[pos : pos + n].astype(np.float64).reshape(t.data.shape)
        pos += n
    if pos != flat.size:
        raise ConfigError(f"{path}: parameter blob has trailing data")
    return agent
