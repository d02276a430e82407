"""Training regimes: emergent pairs, one-sided oracle supervision, and
limited supervision with teacher reproduction.

All regimes share the same machinery: REINFORCE with a running reward
baseline and optional entropy bonus, optional self-play on the same
referents as the direct round (distractors resampled), dev accuracy for
both roles tracked as rolling means whose sum drives model selection,
early stopping and reduce-on-plateau learning rates. The limited regime
restricts direct interaction to M frozen (referent, distractor-set)
examples for N passes and can replay cached oracle messages as a
speaking NLL ("teacher") loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .agent import Agent
from .errors import ConfigError, NumericError, TrainingDivergence
from .game import GameConfig, emit_batch, pair_accuracy, pick_batch, sample_context_batch
from .optim import PlateauSchedule, RMSProp

ROLES = ("speaker", "listener")


BASELINE_SCOPES = ("agent", "role", "channel")

BASELINE_ON = ("reward", "loss")


@dataclass
class LossConfig:
    beta: float = 0.001
    use_selfplay: bool = True
    use_teacher: bool = False
    teacher_on_failure_only: bool = False
    baseline_decay: float = 0.99
    baseline_scope: str = "agent"
    baseline_on: str = "reward"

    def __post_init__(self):
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.baseline_scope not in BASELINE_SCOPES:
            raise ConfigError(
                f"baseline_scope must be one of {BASELINE_SCOPES}, "
                f"got {self.baseline_scope!r}")
        if self.baseline_on not in BASELINE_ON:
            raise ConfigError(
                f"baseline_on must be one of {BASELINE_ON}, "
                f"got {self.baseline_on!r}")


@dataclass
class TrainSchedule:
    max_epochs: int = 2000
    batch_size: int = 64
    rolling_window: int = 25
    early_stop_patience: int = 1000
    plateau_patience: int | None = None     # None = never reduce
    lr: float = 1e-3
    plateau_factor: float = 0.5
    min_lr: float = 1e-5

    def __post_init__(self):
        if self.rolling_window < 1:
            raise ConfigError("rolling_window must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


class BaselineBank:
    """Exponential moving average used as the REINFORCE baseline.

    scope="agent" pools one mean per agent across roles and channels: a
    stream that saturates (direct rounds at reward +1) keeps a positive
    advantage for as long as any other stream lags, so supervision keeps
    pulling while self-play catches up. "role" and "channel" split the
    mean further and center each stream on itself instead.

    on="reward" tracks mean raw reward; on="loss" tracks the mean value
    of previous policy losses. A loss mean shrinks as policies sharpen
    (the log-probabilities of chosen actions approach zero), so winning
    actions keep a positive advantage even at reward saturation instead
    of coasting once the mean reward reaches the ceiling.
    """

    def __init__(self, decay: float = 0.99, scope: str = "agent",
                 on: str = "reward"):
        if scope not in BASELINE_SCOPES:
            raise ConfigError(
                f"baseline scope must be one of {BASELINE_SCOPES}, got {scope!r}")
        if on not in BASELINE_ON:
            raise ConfigError(
                f"baseline on must be one of {BASELINE_ON}, got {on!r}")
        self.decay = decay
        self.scope = scope
        self.on = on
        self.values: dict = {}

    def _key(self, agent, role, channel):
        if self.scope == "agent":
            return (id(agent),)
        if self.scope == "role":
            return (id(agent), role)
        return (id(agent), role, channel)

    def read(self, agent, role, channel: str = "direct") -> float:
        return self.values.get(self._key(agent, role, channel), 0.0)

    def update(self, agent, role, rewards, channel: str = "direct",
               loss_value: float | None = None):
        if self.on == "loss":
            if loss_value is None:
                raise ConfigError("loss-mean baseline needs loss_value")
            m = float(loss_value)
        else:
            m = float(np.mean(rewards))
        old = self.read(agent, role, channel)
        new = self.decay * old + (1.0 - self.decay) * m
        if not np.isfinite(new):
            raise NumericError("baseline became non-finite")
        self.values[self._key(agent, role, channel)] = new


class TeacherCache:
    """Frozen (referent, oracle message, context) triples keyed by example.

    Messages are stored exactly as the oracle produced them and contexts
    are never resampled; re-adding a key is a no-op.
    """

    def __init__(self):
        self._entries: dict = {}

    def add(self, key, features, message, ctx_ids):
        if key not in self._entries:
            self._entries[key] = (
                np.asarray(features, dtype=np.float64).copy(),
                np.asarray(message, dtype=np.int64).copy(),
                np.asarray(ctx_ids, dtype=np.int64).copy(),
            )

    def __len__(self):
        return len(self._entries)

    def arrays(self):
        """(features (M, F), messages (M, w)) in insertion-key order."""
        keys = sorted(self._entries)
        X = np.stack([self._entries[k][0] for k in keys])
        msgs = np.stack([self._entries[k][1] for k in keys])
        return X, msgs


# -- losses ---------------------------------------------------------------


def reinforce_loss(logprobs, entropy, rewards, baseline: float, beta: float):
    """Score-function estimator: sum over a round's actions of
    -logprob * (r - baseline), minus beta times summed entropy, averaged
    over the batch. The baseline is read before any update from this round.
    """
    adv = np.asarray(rewards, dtype=np.float64) - baseline
    if logprobs.ndim == 2:
        per_round = logprobs.sum(axis=1)
        per_ent = entropy.sum(axis=1)
    else:
        per_round = logprobs
        per_ent = entropy
    return (per_round * ad.as_tensor(-adv) - beta * per_ent).mean()


def teacher_loss(agent: Agent, cache: TeacherCache, rng=None, training: bool = True):
    """Summed per-word NLL of reproducing every cached oracle message."""
    if len(cache) == 0:
        raise ConfigError("teacher loss needs a nonempty cache")
    X, msgs = cache.arrays()
    logp = agent.speak_logprobs(X, msgs, rng=rng, training=training)
    return -(logp.sum())


def selfplay_step(agent: Agent, referent_ids, X_ref, dataset, split, game_cfg,
                  data_rng, agent_rng, cfg: LossConfig, bank: BaselineBank):
    """Speaker and listener self-play terms on one referent batch.

    The agent speaks to its own listener head; both terms share the round
    reward. Distractors are drawn fresh. Returns (loss node, rewards).
    """
    ctx_ids, ref_pos = sample_context_batch(dataset, split, game_cfg, data_rng,
                                            referent_ids)
    ctx_X = dataset.feature_matrix(ctx_ids)
    msgs, logp_s, ent_s = agent.speak_batch(X_ref, rng=agent_rng, mode="sample",
                                            training=True)
    choices, logp_l, ent_l = agent.listen_batch(msgs, ctx_X, rng=agent_rng,
                                                mode="sample", training=True)
    rewards = np.where(choices == ref_pos, game_cfg.reward_win, game_cfg.reward_lose)
    loss_s = reinforce_loss(logp_s, ent_s, rewards,
                            bank.read(agent, "speaker", "self"), cfg.beta)
    loss_l = reinforce_loss(logp_l, ent_l, rewards,
                            bank.read(agent, "listener", "self"), cfg.beta)
    # one EMA step per distinct stream; under pooled scopes both role
    # entries resolve to the same key and the round counts once
    bank.update(agent, "speaker", rewards, "self",
                loss_value=float(loss_s.data))
    if bank._key(agent, "listener", "self") != bank._key(agent, "speaker", "self"):
        bank.update(agent, "listener", rewards, "self",
                    loss_value=float(loss_l.data))
    return loss_s + loss_l, rewards


# -- run records ----------------------------------------------------------


@dataclass
class EpochStats:
    epoch: int
    lr: float
    steps: int
    loss_direct: float
    loss_selfplay: float
    loss_teacher: float
    train_acc: float
    train_reward: float
    dev_target: float
    dev_novel: float
    rolling_target: float
    rolling_novel: float


@dataclass
class RunRecord:
    regime: str
    config: dict
    seed: int
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = float("-inf")
    stop_reason: str = ""
    n_params: int = 0


LOG_COLUMNS = ("epoch", "lr", "steps", "loss_direct", "loss_selfplay",
               "loss_teacher", "train_acc", "train_reward", "dev_target",
               "dev_novel", "rolling_target", "rolling_novel")


def write_run_log(record: RunRecord, path):
    """Line-oriented epoch log; floats at fixed precision so identical runs
    produce identical bytes."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("#" + "\t".join(LOG_COLUMNS) + "\n")
        for e in record.epochs:
            cells = [str(e.epoch), f"{e.lr:.8f}", str(e.steps)]
            cells += [f"{v:.6f}" for v in
                      (e.loss_direct, e.loss_selfplay, e.loss_teacher,
                       e.train_acc, e.train_reward, e.dev_target, e.dev_novel,
                       e.rolling_target, e.rolling_novel)]
            f.write("\t".join(cells) + "\n")


class _Tracker:
    """Rolling-mean model selection, early stop and plateau bookkeeping."""

    def __init__(self, schedule: TrainSchedule, agents, optimizers):
        self.schedule = schedule
        self.agents = list(agents)
        self.plateaus = [
            PlateauSchedule(opt, patience=schedule.plateau_patience,
                            factor=schedule.plateau_factor,
                            min_lr=schedule.min_lr)
            for opt in optimizers
        ]
        self.window_target: list = []
        self.window_novel: list = []
        self.rolling_history: list = []
        self.best = float("-inf")
        self.best_epoch = -1
        self.best_snaps = None
        self.stale = 0

    def rolling(self, window):
        w = self.schedule.rolling_window
        tail = window[-w:]
        return float(np.mean(tail)) if tail else float("nan")

    def end_epoch(self, epoch, dev_target, dev_novel):
        """Record dev accuracies; returns (rolling_target, rolling_novel,
        stop) where stop is True when early-stopping patience ran out.

        Model selection, early stopping and plateau detection all follow
        the sum of the two roles' rolling means, so a snapshot is kept
        when combined cross-role performance peaks, not when the trained
        role alone does.
        """
        self.window_target.append(dev_target)
        self.window_novel.append(dev_novel)
        roll_t = self.rolling(self.window_target)
        roll_n = self.rolling(self.window_novel)
        self.rolling_history.append(roll_t)
        metric = roll_t + roll_n
        if metric > self.best:
            self.best = metric
            self.best_epoch = epoch
            self.best_snaps = [a.snapshot() for a in self.agents]
            self.stale = 0
        else:
            self.stale += 1
        for p in self.plateaus:
            p.update(metric)
        stop = self.stale > self.schedule.early_stop_patience
        return roll_t, roll_n, stop

    def direct_converged(self, span: int = 200, tol: float = 0.1) -> bool:
        # the N=None direct phase ends on the *target* rolling mean alone
        h = self.rolling_history
        return len(h) > span and (h[-1] - h[-1 - span]) < tol

    def restore_best(self):
        if self.best_snaps is not None:
            for agent, snap in zip(self.agents, self.best_snaps):
                agent.restore(snap)


def _check_finite_loss(loss, epoch, label):
    if not np.isfinite(loss.data):
        raise TrainingDivergence(f"non-finite {label} loss at epoch {epoch}")


def _batches(order, batch_size):
    for i in range(0, len(order), batch_size):
        yield order[i : i + batch_size]


def _rngs(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _dev_probe(target_pair, novel_pair, dataset, game_cfg, rng):
    t = pair_accuracy(target_pair[0], target_pair[1], dataset, "dev", game_cfg, rng)
    n = pair_accuracy(novel_pair[0], novel_pair[1], dataset, "dev", game_cfg, rng)
    return t, n


# -- regimes --------------------------------------------------------------


def train_emergent(agent_a: Agent, agent_b: Agent, dataset, schedule: TrainSchedule,
                   cfg: LossConfig, game_cfg: GameConfig = None, seed: int = 0,
                   log=None) -> RunRecord:
    """A speaks, B listens; both learn from the shared reward.

    The target pairing is A-speaks/B-listens; the novel pairing swaps the
    roles (B speaks to A). Self-play, when enabled, runs for both agents
    on the same referents. Agents end up restored to the best snapshot by
    the summed rolling dev accuracy of the two pairings.
    """
    game_cfg = game_cfg or GameConfig(vocab_size=agent_a.vocab_size,
                                      message_len=agent_a.msg_len)
    data_rng, rng_a, rng_b, eval_rng = _rngs(seed, 4)
    opt_a = RMSProp(agent_a.store, lr=schedule.lr)
    opt_b = RMSProp(agent_b.store, lr=schedule.lr)
    bank = BaselineBank(cfg.baseline_decay, cfg.baseline_scope)
    tracker = _Tracker(schedule, [agent_a, agent_b], [opt_a, opt_b])
    record = RunRecord("emergent", _config_dict(schedule, cfg, game_cfg), seed,
                       n_params=agent_a.store.n_params() + agent_b.store.n_params())

    train_ids = dataset.split_ids("train")
    for epoch in range(1, schedule.max_epochs + 1):
        order = train_ids[data_rng.permutation(len(train_ids))]
        sums = _EpochSums()
        for chunk in _batches(order, schedule.batch_size):
            ctx_ids, ref_pos = sample_context_batch(dataset, "train", game_cfg,
                                                    data_rng, chunk)
            X_ref = dataset.feature_matrix(chunk)
            ctx_X = dataset.feature_matrix(ctx_ids)
            msgs, logp_s, ent_s = agent_a.speak_batch(X_ref, rng=rng_a,
                                                      mode="sample", training=True)
            choices, logp_l, ent_l = agent_b.listen_batch(msgs, ctx_X, rng=rng_b,
                                                          mode="sample", training=True)
            rewards = np.where(choices == ref_pos, game_cfg.reward_win,
                               game_cfg.reward_lose)
            loss_a = reinforce_loss(logp_s, ent_s, rewards,
                                    bank.read(agent_a, "speaker"), cfg.beta)
            loss_b = reinforce_loss(logp_l, ent_l, rewards,
                                    bank.read(agent_b, "listener"), cfg.beta)
            bank.update(agent_a, "speaker", rewards)
            bank.update(agent_b, "listener", rewards)
            sums.direct(loss_a.data + loss_b.data, rewards)
            if cfg.use_selfplay:
                sp_a, _ = selfplay_step(agent_a, chunk, X_ref, dataset, "train",
                                        game_cfg, data_rng, rng_a, cfg, bank)
                sp_b, _ = selfplay_step(agent_b, chunk, X_ref, dataset, "train",
                                        game_cfg, data_rng, rng_b, cfg, bank)
                sums.selfplay(sp_a.data + sp_b.data)
                loss_a = loss_a + sp_a
                loss_b = loss_b + sp_b
            for agent, loss, opt in ((agent_a, loss_a, opt_a),
                                     (agent_b, loss_b, opt_b)):
                _check_finite_loss(loss, epoch, "training")
                agent.zero_grad()
                loss.backward()
                opt.step()
                sums.steps += 1
        dev_t, dev_n = _dev_probe((agent_a, agent_b), (agent_b, agent_a),
                                  dataset, game_cfg, eval_rng)
        stop = _finish_epoch(record, tracker, sums, epoch, opt_a.lr, dev_t, dev_n, log)
        if stop:
            break
    else:
        record.stop_reason = "max_epochs"
    _finalize(record, tracker)
    return record


def train_oracle(agent: Agent, oracle, role: str, dataset, schedule: TrainSchedule,
                 cfg: LossConfig, game_cfg: GameConfig = None, seed: int = 0,
                 log=None) -> RunRecord:
    """Unlimited one-directional interaction with a ground-truth partner.

    role is the agent's trained role; dev tracking covers the trained
    (target) pairing and the untrained (novel) one, both against the
    oracle. Model selection follows the summed rolling mean of the two.
    """
    if role not in ROLES:
        raise ConfigError(f"role must be one of {ROLES}, got {role!r}")
    game_cfg = game_cfg or GameConfig(vocab_size=agent.vocab_size,
                                      message_len=agent.msg_len)
    data_rng, agent_rng, eval_rng = _rngs(seed, 3)
    opt = RMSProp(agent.store, lr=schedule.lr)
    bank = BaselineBank(cfg.baseline_decay, cfg.baseline_scope)
    tracker = _Tracker(schedule, [agent], [opt])
    record = RunRecord(f"oracle-{role}", _config_dict(schedule, cfg, game_cfg),
                       seed, n_params=agent.store.n_params())

    train_ids = dataset.split_ids("train")
    for epoch in range(1, schedule.max_epochs + 1):
        order = train_ids[data_rng.permutation(len(train_ids))]
        sums = _EpochSums()
        for chunk in _batches(order, schedule.batch_size):
            loss = _direct_oracle_loss(agent, oracle, role, chunk, dataset,
                                       game_cfg, data_rng, agent_rng, cfg, bank,
                                       sums)
            if cfg.use_selfplay:
                sp, _ = selfplay_step(agent, chunk, dataset.feature_matrix(chunk),
                                      dataset, "train", game_cfg, data_rng,
                                      agent_rng, cfg, bank)
                sums.selfplay(sp.data)
                loss = loss + sp
            _check_finite_loss(loss, epoch, "training")
            agent.zero_grad()
            loss.backward()
            opt.step()
            sums.steps += 1
        dev_t, dev_n = _oracle_probe(agent, oracle, role, dataset, game_cfg, eval_rng)
        stop = _finish_epoch(record, tracker, sums, epoch, opt.lr, dev_t, dev_n, log)
        if stop:
            break
    else:
        record.stop_reason = "max_epochs"
    _finalize(record, tracker)
    return record


def train_limited(agent: Agent, oracle, role: str, dataset, M: int, N,
                  schedule: TrainSchedule, cfg: LossConfig,
                  game_cfg: GameConfig = None, seed: int = 0, log=None) -> RunRecord:
    """Direct interaction restricted to M frozen examples for N passes.

    Each of the M examples fixes a referent and a distractor set, both
    frozen for the whole run. N=None repeats direct passes until the
    rolling target metric converges (< 0.1 improvement over 200 epochs).
    Oracle messages seen in direct rounds are cached; every epoch the
    agent additionally self-plays over the full train split (when enabled)
    and reproduces the cache under the teacher loss.
    """
    if role not in ROLES:
        raise ConfigError(f"role must be one of {ROLES}, got {role!r}")
    train_ids = dataset.split_ids("train")
    if M > len(train_ids):
        raise ConfigError(f"M={M} exceeds train split size {len(train_ids)}")
    game_cfg = game_cfg or GameConfig(vocab_size=agent.vocab_size,
                                      message_len=agent.msg_len)
    data_rng, agent_rng, eval_rng = _rngs(seed, 3)
    opt = RMSProp(agent.store, lr=schedule.lr)
    bank = BaselineBank(cfg.baseline_decay, cfg.baseline_scope)
    tracker = _Tracker(schedule, [agent], [opt])
    record = RunRecord(f"limited-{role}", _config_dict(schedule, cfg, game_cfg),
                       seed, n_params=agent.store.n_params())
    record.config.update({"M": int(M), "N": None if N is None else int(N)})

    # the M frozen examples, drawn once
    ex_ref = train_ids[data_rng.choice(len(train_ids), size=M, replace=False)]
    ex_ctx, ex_pos = sample_context_batch(dataset, "train", game_cfg, data_rng, ex_ref)
    ex_X = dataset.feature_matrix(ex_ref)
    ex_ctx_X = dataset.feature_matrix(ex_ctx)
    oracle_msgs = np.asarray(oracle.speak_batch(ex_ref, ex_X), dtype=np.int64)
    cache = TeacherCache()

    passes_done = 0
    for epoch in range(1, schedule.max_epochs + 1):
        sums = _EpochSums()
        direct_now = (N is None and not tracker.direct_converged()) or \
                     (N is not None and passes_done < N)
        if direct_now:
            order = data_rng.permutation(M)
            for idx in _batches(order, schedule.batch_size):
                loss = _direct_frozen_loss(agent, oracle, role, idx, ex_X, ex_ctx,
                                           ex_ctx_X, ex_pos, oracle_msgs, game_cfg,
                                           agent_rng, cfg, bank, sums, cache)
                _check_finite_loss(loss, epoch, "direct")
                agent.zero_grad()
                loss.backward()
                opt.step()
                sums.steps += 1
            passes_done += 1
        if cfg.use_selfplay:
            order = train_ids[data_rng.permutation(len(train_ids))]
            for chunk in _batches(order, schedule.batch_size):
                sp, _ = selfplay_step(agent, chunk, dataset.feature_matrix(chunk),
                                      dataset, "train", game_cfg, data_rng,
                                      agent_rng, cfg, bank)
                _check_finite_loss(sp, epoch, "self-play")
                sums.selfplay(sp.data)
                agent.zero_grad()
                sp.backward()
                opt.step()
                sums.steps += 1
        if cfg.use_teacher and len(cache) > 0:
            tl = teacher_loss(agent, cache, rng=agent_rng, training=True)
            _check_finite_loss(tl, epoch, "teacher")
            sums.teacher(tl.data)
            agent.zero_grad()
            tl.backward()
            opt.step()
            sums.steps += 1
        dev_t, dev_n = _oracle_probe(agent, oracle, role, dataset, game_cfg, eval_rng)
        stop = _finish_epoch(record, tracker, sums, epoch, opt.lr, dev_t, dev_n, log)
        if stop:
            break
        if sums.steps == 0:
            record.stop_reason = "exhausted"
            break
    else:
        record.stop_reason = "max_epochs"
    _finalize(record, tracker)
    return record


def _direct_oracle_loss(agent, oracle, role, chunk, dataset, game_cfg, data_rng,
                        agent_rng, cfg, bank, sums):
    ctx_ids, ref_pos = sample_context_batch(dataset, "train", game_cfg, data_rng,
                                            chunk)
    X_ref = dataset.feature_matrix(chunk)
    ctx_X = dataset.feature_matrix(ctx_ids)
    if role == "speaker":
        msgs, logp, ent = agent.speak_batch(X_ref, rng=agent_rng, mode="sample",
                                            training=True)
        choices = pick_batch(oracle, msgs, ctx_ids, ctx_X)
    else:
        msgs = emit_batch(oracle, chunk, X_ref)
        choices, logp, ent = agent.listen_batch(msgs, ctx_X, rng=agent_rng,
                                                mode="sample", training=True)
    rewards = np.where(choices == ref_pos, game_cfg.reward_win, game_cfg.reward_lose)
    loss = reinforce_loss(logp, ent, rewards, bank.read(agent, role), cfg.beta)
    bank.update(agent, role, rewards)
    sums.direct(loss.data, rewards)
    return loss


def _direct_frozen_loss(agent, oracle, role, idx, ex_X, ex_ctx, ex_ctx_X, ex_pos,
                        oracle_msgs, game_cfg, agent_rng, cfg, bank, sums, cache):
    """One direct batch over frozen examples selected by index array idx."""
    X_ref = ex_X[idx]
    ctx_ids = ex_ctx[idx]
    ctx_X = ex_ctx_X[idx]
    ref_pos = ex_pos[idx]
    if role == "speaker":
        msgs, logp, ent = agent.speak_batch(X_ref, rng=agent_rng, mode="sample",
                                            training=True)
        choices = pick_batch(oracle, msgs, ctx_ids, ctx_X)
    else:
        msgs = oracle_msgs[idx]
        choices, logp, ent = agent.listen_batch(msgs, ctx_X, rng=agent_rng,
                                                mode="sample", training=True)
    rewards = np.where(choices == ref_pos, game_cfg.reward_win, game_cfg.reward_lose)
    loss = reinforce_loss(logp, ent, rewards, bank.read(agent, role), cfg.beta)
    bank.update(agent, role, rewards)
    sums.direct(loss.data, rewards)
    if cfg.use_teacher:
        for row, i in enumerate(idx):
            if cfg.teacher_on_failure_only and rewards[row] > 0:
                continue
            cache.add(int(i), ex_X[i], oracle_msgs[i], ex_ctx[i])
    return loss


def _oracle_probe(agent, oracle, role, dataset, game_cfg, rng):
    if role == "speaker":
        return (pair_accuracy(agent, oracle, dataset, "dev", game_cfg, rng),
                pair_accuracy(oracle, agent, dataset, "dev", game_cfg, rng))
    return (pair_accuracy(oracle, agent, dataset, "dev", game_cfg, rng),
            pair_accuracy(agent, oracle, dataset, "dev", game_cfg, rng))


class _EpochSums:
    def __init__(self):
        self.steps = 0
        self.n_direct = 0
        self.sum_direct = 0.0
        self.sum_reward = 0.0
        self.n_correct = 0.0
        self.n_rounds = 0
        self.n_sp = 0
        self.sum_sp = 0.0
        self.sum_teacher = float("nan")

    def direct(self, loss_val, rewards):
        self.n_direct += 1
        self.sum_direct += float(loss_val)
        self.sum_reward += float(np.sum(rewards))
        self.n_correct += float(np.sum(rewards > 0))
        self.n_rounds += len(rewards)

    def selfplay(self, loss_val):
        self.n_sp += 1
        self.sum_sp += float(loss_val)

    def teacher(self, loss_val):
        self.sum_teacher = float(loss_val)

    def stats(self):
        loss_d = self.sum_direct / self.n_direct if self.n_direct else float("nan")
        loss_sp = self.sum_sp / self.n_sp if self.n_sp else float("nan")
        acc = 100.0 * self.n_correct / self.n_rounds if self.n_rounds else float("nan")
        rew = self.sum_reward / self.n_rounds if self.n_rounds else float("nan")
        return loss_d, loss_sp, self.sum_teacher, acc, rew


def _finish_epoch(record, tracker, sums, epoch, lr, dev_t, dev_n, log):
    roll_t, roll_n, stop = tracker.end_epoch(epoch, dev_t, dev_n)
    loss_d, loss_sp, loss_te, acc, rew = sums.stats()
    record.epochs.append(EpochStats(epoch, lr, sums.steps, loss_d, loss_sp,
                                    loss_te, acc, rew, dev_t, dev_n, roll_t,
                                    roll_n))
    if log is not None:
        log(record.epochs[-1])
    if stop:
        record.stop_reason = "early_stop"
    return stop


def _finalize(record, tracker):
    record.best_epoch = tracker.best_epoch
    record.best_metric = tracker.best
    tracker.restore_best()
    if not record.stop_reason:
        record.stop_reason = "max_epochs"


def _config_dict(schedule: TrainSchedule, cfg: LossConfig, game_cfg: GameConfig):
    out = {}
    for obj in (schedule, cfg, game_cfg):
        for k, v in vars(obj).items():
            out[k] = v
    return out


# -- hyperparameter search -------------------------------------------------


@dataclass
class SweepTrial:
    config: dict
    score: float
    record: object


@dataclass
class SweepResult:
    best_config: dict
    best_score: float
    trials: list


def hyperparameter_sweep(space: dict, run_trial, n_samples: int = 10,
                         rng=None) -> SweepResult:
    """Uniformly sample configs from a discrete space and rank them.

    space maps a name to its candidate values; run_trial(config) returns
    (score, record) where score is the summed dev accuracy over the
    evaluated roles. Ties keep the earliest trial.
    """
    if not space:
        raise ConfigError("sweep space is empty")
    for k, vals in space.items():
        if len(vals) == 0:
            raise ConfigError(f"sweep dimension {k!r} has no values")
    rng = np.random.default_rng(0) if rng is None else rng
    trials = []
    for _ in range(n_samples):
        config = {k: space[k][int(rng.integers(len(space[k])))]
                  for k in sorted(space)}
        score, rec = run_trial(config)
        trials.append(SweepTrial(config, float(score), rec))
    best = max(trials, key=lambda t: t.score)
    return SweepResult(best.config, best.score, trials)
