"""Message codecs built on the tape: LSTM and transformer variants.

Every component takes its parameters from a shared ParamStore so that an
agent's speaker and listener heads can be enumerated, checkpointed and
updated as one flat collection. Hidden size, embedding size and the
feed-forward width are all d (64 by default); both transformer blocks use
a single attention head and sinusoidal positional encodings with dropout
0.1 on the encoded input (no dropout anywhere else).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError

ARCHITECTURES = ("lstm", "transformer")


class ParamStore:
    """Named parameter registry; insertion order fixes the checkpoint layout.

    Weight matrices draw from uniform(-1/sqrt(d), 1/sqrt(d)); biases start
    at zero, layer-norm gains at one.
    """

    def __init__(self, d: int, rng):
        self.d = d
        self.scale = 1.0 / np.sqrt(d)
        self.rng = rng
        self.params: dict[str, Tensor] = {}

    def weight(self, name, shape):
        return self._add(name, self.rng.uniform(-self.scale, self.scale, size=shape))

    def zeros(self, name, shape):
        return self._add(name, np.zeros(shape))

    def ones(self, name, shape):
        return self._add(name, np.ones(shape))

    def _add(self, name, data):
        if name in self.params:
            raise ConfigError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        return t

    def __getitem__(self, name):
        return self.params[name]

    def items(self):
        return self.params.items()

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def n_params(self):
        return sum(int(t.data.size) for t in self.params.values())

    def check_finite(self):
        for name, t in self.params.items():
            if not np.all(np.isfinite(t.data)):
                raise ConfigError(f"non-finite values in parameter {name}")


def sinusoid_table(max_len: int, d: int) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    i = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * np.floor(i / 2.0)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def layer_norm(x, gain, bias, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt() * gain + bias


def causal_mask(n: int) -> np.ndarray:
    return np.triu(np.full((n, n), -1e9), k=1)


def _rows(vec, batch):
    """Broadcast a (d,) parameter to (batch, d)."""
    d = vec.shape[0]
    return vec.reshape((1, d)) + ad.as_tensor(np.zeros((batch, d)))


def _draw(logp: np.ndarray, rng, greedy: bool) -> np.ndarray:
    """Sample one category per row from log-probabilities (or argmax)."""
    if greedy:
        return np.argmax(logp, axis=-1)
    cum = np.cumsum(np.exp(logp), axis=-1)
    u = rng.random(logp.shape[0])[:, None] * cum[:, -1:]
    return np.minimum((cum < u).sum(axis=-1), logp.shape[-1] - 1)


def _entropy_column(logp):
    """Per-row entropy of a (B, V) log-distribution, shaped (B, 1)."""
    ent = -(logp.exp() * logp).sum(axis=-1)
    return ent.reshape((ent.shape[0], 1))


# -- LSTM ----------------------------------------------------------------------


class LSTMCell:
    def __init__(self, store: ParamStore, prefix: str, in_dim: int, hidden: int):
        self.hidden = hidden
        self.W_x = store.weight(f"{prefix}.W_x", (in_dim, 4 * hidden))
        self.W_h = store.weight(f"{prefix}.W_h", (hidden, 4 * hidden))
        self.b = store.zeros(f"{prefix}.b", (4 * hidden,))

    def step(self, x, h, c):
        z = x @ self.W_x + h @ self.W_h + self.b
        n = self.hidden
        i = z[:, :n].sigmoid()
        f = z[:, n : 2 * n].sigmoid()
        g = z[:, 2 * n : 3 * n].tanh()
        o = z[:, 3 * n :].sigmoid()
        c_next = f * c + i * g
        h_next = o * c_next.tanh()
        return h_next, c_next


class LSTMEncoder:
    """Run the message through the recurrence; the final hidden state is
    the message representation."""

    def __init__(self, store: ParamStore, prefix: str, d: int):
        self.d = d
        self.cell = LSTMCell(store, f"{prefix}.cell", d, d)

    def encode(self, word_vecs, rng=None, training=False):
        B, w, _ = word_vecs.shape
        h = ad.as_tensor(np.zeros((B, self.d)))
        c = ad.as_tensor(np.zeros((B, self.d)))
        for t in range(w):
            h, c = self.cell.step(ad.select(word_vecs, 1, t), h, c)
        return h


class LSTMDecoder:
    """Autoregressive word emitter seeded by the item representation.

    The item embedding initializes the hidden state; step 1 reads a
    learned start token and later steps read the embedding of the word
    just emitted. With tied=True word logits score the hidden state
    against the shared word table, so production and comprehension read
    the same vectors; untied allocates a separate output matrix and the
    shared table serves only as the input embedding.
    """

    def __init__(self, store: ParamStore, prefix: str, d: int, vocab: int,
                 tied: bool = True):
        self.d = d
        self.vocab = vocab
        self.start = store.weight(f"{prefix}.start", (d,))
        self.cell = LSTMCell(store, f"{prefix}.cell", d, d)
        self.W_out = None if tied else store.weight(f"{prefix}.W_out", (vocab, d))

    def _logit_table(self, word_table):
        return (word_table if self.W_out is None else self.W_out).swapaxes(0, 1)

    def sample(self, item_vecs, word_table, msg_len, rng, greedy=False,
               training=False):
        """Emit a message per row. Returns (ids (B, w), logp Tensor (B, w),
        entropy Tensor (B, w))."""
        B = item_vecs.shape[0]
        h = item_vecs
        c = ad.as_tensor(np.zeros((B, self.d)))
        x = _rows(self.start, B)
        W = self._logit_table(word_table)
        ids = np.empty((B, msg_len), dtype=np.int64)
        logps, ents = [], []
        for t in range(msg_len):
            h, c = self.cell.step(x, h, c)
            logp = ad.log_softmax(h @ W)
            ids[:, t] = _draw(logp.data, rng, greedy)
            logps.append(ad.take_last_axis(logp, ids[:, t]).reshape((B, 1)))
            ents.append(_entropy_column(logp))
            x = ad.embedding(word_table, ids[:, t])
        return ids, ad.concat(logps, 1), ad.concat(ents, 1)

    def logprobs(self, item_vecs, word_table, msgs, rng=None, training=False):
        """Teacher-forced log-probability of each word of given messages."""
        B, w = msgs.shape
        h = item_vecs
        c = ad.as_tensor(np.zeros((B, self.d)))
        x = _rows(self.start, B)
        W = self._logit_table(word_table)
        cols = []
        for t in range(w):
            h, c = self.cell.step(x, h, c)
            logp = ad.log_softmax(h @ W)
            cols.append(ad.take_last_axis(logp, msgs[:, t]).reshape((B, 1)))
            if t + 1 < w:
                x = ad.embedding(word_table, msgs[:, t])
        return ad.concat(cols, 1)


# -- transformer ---------------------------------------------------------------


class Attention:
    """Single-head scaled dot-product attention with output projection."""

    def __init__(self, store: ParamStore, prefix: str, d: int):
        self.d = d
        self.W_q = store.weight(f"{prefix}.W_q", (d, d))
        self.W_k = store.weight(f"{prefix}.W_k", (d, d))
        self.W_v = store.weight(f"{prefix}.W_v", (d, d))
        self.W_o = store.weight(f"{prefix}.W_o", (d, d))

    def __call__(self, q_in, kv_in, mask=None):
        q = q_in @ self.W_q
        k = kv_in @ self.W_k
        v = kv_in @ self.W_v
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(self.d))
        if mask is not None:
            scores = scores + ad.as_tensor(mask)
        return (ad.softmax(scores) @ v) @ self.W_o


class FeedForward:
    def __init__(self, store: ParamStore, prefix: str, d: int, width: int):
        self.W1 = store.weight(f"{prefix}.W1", (d, width))
        self.b1 = store.zeros(f"{prefix}.b1", (width,))
        self.W2 = store.weight(f"{prefix}.W2", (width, d))
        self.b2 = store.zeros(f"{prefix}.b2", (d,))

    def __call__(self, x):
        return (x @ self.W1 + self.b1).relu() @ self.W2 + self.b2


class _LayerNormParams:
    def __init__(self, store: ParamStore, prefix: str, d: int):
        self.gain = store.ones(f"{prefix}.g", (d,))
        self.bias = store.zeros(f"{prefix}.b", (d,))

    def __call__(self, x):
        return layer_norm(x, self.gain, self.bias)


class TransformerEncoder:
    """One pre-norm block over the word sequence, mean-pooled.

    Normalization sits on each sublayer's input with the residual outside;
    a fresh agent therefore keeps near-uniform output distributions, which
    the post-norm arrangement does not under this initialization.
    """

    def __init__(self, store: ParamStore, prefix: str, d: int, ff_width=None,
                 max_len: int = 32, pe_dropout: float = 0.1):
        self.d = d
        self.pe = sinusoid_table(max_len, d)
        self.pe_dropout = pe_dropout
        self.attn = Attention(store, f"{prefix}.attn", d)
        self.ff = FeedForward(store, f"{prefix}.ff", d, ff_width or d)
        self.ln1 = _LayerNormParams(store, f"{prefix}.ln1", d)
        self.ln2 = _LayerNormParams(store, f"{prefix}.ln2", d)

    def encode(self, word_vecs, rng=None, training=False):
        B, w, d = word_vecs.shape
        x = word_vecs + ad.as_tensor(self.pe[:w])
        x = ad.dropout(x, self.pe_dropout, rng, training)
        h = self.ln1(x)
        x = x + self.attn(h, h)
        x = x + self.ff(self.ln2(x))
        return x.mean(axis=1)


class TransformerDecoder:
    """Causal stream over emitted words attending a one-element memory.

    The item representation is the whole memory; the token stream starts
    from a learned start embedding and grows by one emitted word per step.
    Word logits score stream states against the shared word table (same
    tying as the LSTM decoder) divided by sqrt(d): stream vectors carry
    positional-encoding magnitude, so unscaled scores would start the
    policy far from uniform.
    """

    def __init__(self, store: ParamStore, prefix: str, d: int, vocab: int,
                 ff_width=None, max_len: int = 32, pe_dropout: float = 0.1,
                 tied: bool = True):
        self.d = d
        self.vocab = vocab
        self.pe = sinusoid_table(max_len, d)
        self.pe_dropout = pe_dropout
        self.start = store.weight(f"{prefix}.start", (d,))
        self.self_attn = Attention(store, f"{prefix}.self_attn", d)
        self.cross_attn = Attention(store, f"{prefix}.cross_attn", d)
        self.ff = FeedForward(store, f"{prefix}.ff", d, ff_width or d)
        self.ln1 = _LayerNormParams(store, f"{prefix}.ln1", d)
        self.ln2 = _LayerNormParams(store, f"{prefix}.ln2", d)
        self.ln3 = _LayerNormParams(store, f"{prefix}.ln3", d)
        self.ln_mem = _LayerNormParams(store, f"{prefix}.ln_mem", d)
        self.W_out = None if tied else store.weight(f"{prefix}.W_out", (vocab, d))

    def _logit_table(self, word_table):
        table = word_table if self.W_out is None else self.W_out
        return table.swapaxes(0, 1) * ad.as_tensor(1.0 / np.sqrt(self.d))

    def _stream(self, item_vecs, prefix_vecs, rng, training):
        B, n, d = prefix_vecs.shape
        x = prefix_vecs + ad.as_tensor(self.pe[:n])
        x = ad.dropout(x, self.pe_dropout, rng, training)
        h = self.ln1(x)
        x = x + self.self_attn(h, h, mask=causal_mask(n))
        # normalizing the memory keeps the item signal on the stream's
        # scale; raw item embeddings are an order of magnitude smaller
        # than the positional encodings and would be drowned out
        memory = self.ln_mem(item_vecs.reshape((B, 1, d)))
        x = x + self.cross_attn(self.ln2(x), memory)
        x = x + self.ff(self.ln3(x))
        return x

    def _prefix(self, word_table, ids, upto, batch):
        """Stack [start, emb(ids[:, :upto])] along time."""
        parts = [_rows(self.start, batch).reshape((batch, 1, self.d))]
        if upto > 0:
            parts.append(ad.embedding(word_table, ids[:, :upto]))
        return ad.concat(parts, 1) if len(parts) > 1 else parts[0]

    def sample(self, item_vecs, word_table, msg_len, rng, greedy=False,
               training=False):
        B = item_vecs.shape[0]
        W = self._logit_table(word_table)
        ids = np.empty((B, msg_len), dtype=np.int64)
        logps, ents = [], []
        for t in range(msg_len):
            stream = self._stream(item_vecs, self._prefix(word_table, ids, t, B),
                                  rng, training)
            logp = ad.log_softmax(ad.select(stream, 1, t) @ W)
            ids[:, t] = _draw(logp.data, rng, greedy)
            logps.append(ad.take_last_axis(logp, ids[:, t]).reshape((B, 1)))
            ents.append(_entropy_column(logp))
        return ids, ad.concat(logps, 1), ad.concat(ents, 1)

    def logprobs(self, item_vecs, word_table, msgs, rng=None, training=False):
        B, w = msgs.shape
        stream = self._stream(item_vecs, self._prefix(word_table, msgs, w - 1, B),
                              rng, training)
        logits = stream @ self._logit_table(word_table)
        return ad.take_last_axis(ad.log_softmax(logits), msgs)


def make_decoder(arch: str, store: ParamStore, prefix: str, d: int, vocab: int,
                 max_len: int = 32, tied: bool = True):
    if arch == "lstm":
        return LSTMDecoder(store, prefix, d, vocab, tied=tied)
    if arch == "transformer":
        return TransformerDecoder(store, prefix, d, vocab, max_len=max_len,
                                  tied=tied)
    raise ConfigError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")


def make_encoder(arch: str, store: ParamStore, prefix: str, d: int,
                 max_len: int = 32):
    if arch == "lstm":
        return LSTMEncoder(store, prefix, d)
    if arch == "transformer":
        return TransformerEncoder(store, prefix, d, max_len=max_len)
    raise ConfigError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
