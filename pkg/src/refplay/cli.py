"""Command-line entry point: dataset generation, training runs, sweeps.

Run directories are self-describing: a config snapshot plus the seed
regenerate every artifact byte for byte. Exit codes: 0 success, 1 usage or
config problem, 2 divergence during training.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import evaluation as ev
from .agent import Agent, save_checkpoint
from .errors import ConfigError, NumericError, RefplayError
from .game import GameConfig
from .oracle import oracle_for
from .training import (BASELINE_SCOPES, LossConfig, TrainSchedule,
                       hyperparameter_sweep, train_emergent, train_limited,
                       train_oracle, write_run_log)

OUT_ROOT_ENV = "REFPLAY_OUT"

REGIMES = ("emergent", "oracle", "limited")

# config keys: name -> (required, validator description)
_COMMON_KEYS = {
    "dataset", "arch", "regime", "role", "M", "N", "selfplay", "teacher",
    "teacher_on_failure_only", "beta", "baseline_scope", "lr", "seed",
    "max_epochs", "batch_size", "plateau_patience", "early_stop_patience",
    "context_size", "rolling_window", "d", "out", "n_resamples", "dialogs",
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="refplay",
                description="Reference-game agents that learn a language "
                            "from oracles and from each other.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate or import a dataset file",
                       parents=[], add_help=True)
    g.add_argument("family", choices=["shapes", "concepts-synth", "concepts"])
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out", default=None, help="output TSV path")
    g.add_argument("--xml", default=None, help="concepts corpus XML")
    g.add_argument("--split-seed", type=int, default=1,
                   help="split shuffling seed for imported corpora")
    g.add_argument("--items", type=int, default=565,
                   help="synthetic corpus size")
    g.add_argument("--categories", type=int, default=20,
                   help="synthetic corpus category count")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="run one training configuration")
    t.add_argument("--config", required=True, help="JSON run config")
    t.add_argument("--seed", type=int, default=None, help="override config seed")
    t.add_argument("--out", default=None, help="override output directory")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="sample and rank hyperparameter configs")
    s.add_argument("--config", required=True,
                   help="JSON with base config, space, n_samples, sweep_seed")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"refplay: divergence: {exc}", file=sys.stderr)
        return 2
    except (RefplayError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"refplay: error: {exc}", file=sys.stderr)
        return 1


def _out_path(raw, default_name) -> Path:
    """Resolve an output location under the optional output-root override."""
    p = Path(raw) if raw else Path(default_name)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


# -- gen-data ---------------------------------------------------------------


def cmd_gen_data(args) -> int:
    if args.family == "shapes":
        ds = data_mod.generate_shapes(seed=args.seed)
        default = f"shapes-{args.seed}.tsv"
    elif args.family == "concepts-synth":
        ds = data_mod.synth_concepts(seed=args.seed, n_categories=args.categories,
                                     n_items=args.items)
        default = f"concepts-synth-{args.seed}.tsv"
    else:
        if not args.xml:
            print("refplay: error: concepts needs --xml", file=sys.stderr)
            return 1
        ds = data_mod.load_concepts(args.xml, split_seed=args.split_seed)
        default = "concepts.tsv"
    out = _out_path(args.out, default)
    out.parent.mkdir(parents=True, exist_ok=True)
    data_mod.save_dataset(ds, out)
    print(f"wrote {out} ({len(ds.ids)} items, F={ds.feature_dim})")
    return 0


# -- train -------------------------------------------------------------------


_DEFAULTS = {
    "dataset": None, "arch": "transformer", "regime": "emergent",
    "role": None, "M": None, "N": 10, "selfplay": True, "teacher": False,
    "teacher_on_failure_only": False, "beta": 0.001, "baseline_scope": "agent",
    "lr": 1e-3, "seed": 2,
    "max_epochs": 2000, "batch_size": 64, "plateau_patience": None,
    "early_stop_patience": 1000, "context_size": 5, "rolling_window": 25,
    "d": 64, "out": None, "n_resamples": 100, "dialogs": 10,
}


def validate_config(cfg: dict) -> dict:
    """Fill defaults and type-check; every offending key is reported."""
    problems = [f"{k!r}: unknown key" for k in cfg if k not in _COMMON_KEYS]
    out = {**_DEFAULTS, **cfg}

    def bad(key, why):
        problems.append(f"{key!r}: {why}")

    def check_int(key, optional=False, lo=None):
        v = out[key]
        if v is None and optional:
            return
        if isinstance(v, bool) or not isinstance(v, int):
            bad(key, "expected an integer")
        elif lo is not None and v < lo:
            bad(key, f"must be >= {lo}")

    def check_num(key, lo=None):
        v = out[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            bad(key, "expected a number")
        elif lo is not None and v < lo:
            bad(key, f"must be >= {lo}")

    if out["dataset"] is None:
        bad("dataset", "required")
    elif not isinstance(out["dataset"], (str, dict)):
        bad("dataset", "expected a file path or a family spec")
    if out["arch"] not in ("lstm", "transformer"):
        bad("arch", "must be lstm or transformer")
    if out["regime"] not in REGIMES:
        bad("regime", f"must be one of {REGIMES}")
    elif out["regime"] in ("oracle", "limited") and out["role"] not in (
            "speaker", "listener"):
        bad("role", "required for oracle/limited: speaker or listener")
    if out["regime"] == "limited":
        check_int("M", lo=1)
    elif "M" in cfg and cfg["M"] is not None:
        bad("M", "only valid for the limited regime")
    if "N" in cfg and out["regime"] != "limited" and cfg["N"] is not None:
        bad("N", "only valid for the limited regime")
    check_int("N", optional=True, lo=1)
    for key in ("selfplay", "teacher", "teacher_on_failure_only"):
        if not isinstance(out[key], bool):
            bad(key, "expected true/false")
    check_num("beta", lo=0.0)
    if out["baseline_scope"] not in BASELINE_SCOPES:
        bad("baseline_scope", f"must be one of {BASELINE_SCOPES}")
    check_num("lr", lo=0.0)
    check_int("seed")
    check_int("max_epochs", lo=1)
    check_int("batch_size", lo=1)
    check_int("plateau_patience", optional=True, lo=1)
    check_int("early_stop_patience", lo=1)
    check_int("context_size", lo=2)
    check_int("rolling_window", lo=1)
    check_int("d", lo=1)
    check_int("n_resamples", lo=1)
    check_int("dialogs", lo=0)
    if out["out"] is not None and not isinstance(out["out"], str):
        bad("out", "expected a string path")
    if problems:
        raise ConfigError("invalid config: " + "; ".join(sorted(problems)))
    return out


def _resolve_dataset(spec):
    if isinstance(spec, str):
        return data_mod.load_dataset(spec)
    fam = spec.get("family")
    if fam == "shapes":
        return data_mod.generate_shapes(seed=spec.get("seed", 1))
    if fam == "concepts-synth":
        return data_mod.synth_concepts(seed=spec.get("seed", 1),
                                       n_categories=spec.get("categories", 20),
                                       n_items=spec.get("items", 565))
    if fam == "concepts":
        return data_mod.load_concepts(spec["xml"],
                                      split_seed=spec.get("split_seed", 1))
    raise ConfigError(f"unknown dataset family {fam!r}")


def _agent_seeds(seed, n):
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1)[0]) for c in ss.spawn(n)]


def run_training(cfg: dict, out_dir: Path) -> dict:
    """Execute one validated config; writes all artifacts; returns summary."""
    dataset = _resolve_dataset(cfg["dataset"])
    oracle = oracle_for(dataset)
    vocab = oracle.vocab_size
    msg_len = oracle.message_len
    game_cfg = GameConfig(context_size=cfg["context_size"], message_len=msg_len,
                          vocab_size=vocab)
    schedule = TrainSchedule(max_epochs=cfg["max_epochs"],
                             batch_size=cfg["batch_size"],
                             rolling_window=cfg["rolling_window"],
                             early_stop_patience=cfg["early_stop_patience"],
                             plateau_patience=cfg["plateau_patience"],
                             lr=cfg["lr"])
    loss_cfg = LossConfig(beta=cfg["beta"], use_selfplay=cfg["selfplay"],
                          use_teacher=cfg["teacher"],
                          teacher_on_failure_only=cfg["teacher_on_failure_only"],
                          baseline_scope=cfg["baseline_scope"])
    seed = cfg["seed"]
    out_dir.mkdir(parents=True, exist_ok=True)

    if cfg["regime"] == "emergent":
        sa, sb = _agent_seeds(seed, 2)
        agent_a = Agent(cfg["arch"], dataset.feature_dim, vocab, msg_len,
                        d=cfg["d"], seed=sa)
        agent_b = Agent(cfg["arch"], dataset.feature_dim, vocab, msg_len,
                        d=cfg["d"], seed=sb)
        record = train_emergent(agent_a, agent_b, dataset, schedule, loss_cfg,
                                game_cfg, seed=seed)
        pairings = {"target": (agent_a, agent_b), "novel": (agent_b, agent_a)}
        speakers = {"target": agent_a, "novel": agent_b}
        save_checkpoint(agent_a, out_dir / "agent_a.ckpt")
        save_checkpoint(agent_b, out_dir / "agent_b.ckpt")
    else:
        (sa,) = _agent_seeds(seed, 1)
        agent = Agent(cfg["arch"], dataset.feature_dim, vocab, msg_len,
                      d=cfg["d"], seed=sa)
        role = cfg["role"]
        if cfg["regime"] == "oracle":
            record = train_oracle(agent, oracle, role, dataset, schedule,
                                  loss_cfg, game_cfg, seed=seed)
        else:
            record = train_limited(agent, oracle, role, dataset, cfg["M"],
                                   cfg["N"], schedule, loss_cfg, game_cfg,
                                   seed=seed)
        if role == "speaker":
            pairings = {"target": (agent, oracle), "novel": (oracle, agent)}
        else:
            pairings = {"target": (oracle, agent), "novel": (agent, oracle)}
        speakers = {name: pair[0] for name, pair in pairings.items()}
        save_checkpoint(agent, out_dir / "agent.ckpt")

    write_run_log(record, out_dir / "log.tsv")
    with open(out_dir / "config.json", "w", encoding="utf-8") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
        f.write("\n")

    summary = {
        "regime": record.regime, "seed": seed, "best_epoch": record.best_epoch,
        "best_rolling_dev": record.best_metric, "stop_reason": record.stop_reason,
        "n_params": record.n_params, "epochs_run": len(record.epochs),
    }
    eval_rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    lines = ["#split\tpairing\tmean\tci95\tn_resamples"]
    for split in ("dev", "test"):
        for name, (spk, lst) in sorted(pairings.items()):
            rep = ev.measure_accuracy(spk, lst, dataset, split, game_cfg,
                                      n_resamples=cfg["n_resamples"],
                                      rng=eval_rng, pairing=f"{split}/{name}")
            lines.append(f"{split}\t{name}\t{rep.mean:.6f}\t{rep.ci95:.6f}"
                         f"\t{rep.n_resamples}")
            summary[f"acc_{split}_{name}"] = rep.mean
            summary[f"ci_{split}_{name}"] = rep.ci95
    (out_dir / "metrics.tsv").write_text("\n".join(lines) + "\n",
                                         encoding="utf-8")

    for name, spk in sorted(speakers.items()):
        lex = ev.build_lexicon(spk, dataset, "test", game_cfg)
        ev.write_matrix_csv(lex.counts, out_dir / f"lexicon_{name}.csv")
        ev.save_heatmap(lex.counts, out_dir / f"lexicon_{name}.png",
                        title=f"word/attribute counts ({name} speaker)")
        summary[f"diagonal_dominance_{name}"] = ev.diagonal_dominance(lex)
    corr = ev.message_correlation(speakers["target"], dataset, "test", game_cfg,
                                  rng=np.random.default_rng(seed))
    ev.write_matrix_csv(corr, out_dir / "correlation.csv")
    ev.save_heatmap(corr, out_dir / "correlation.png",
                    title="message overlap by attribute pair",
                    xlabel="attribute", ylabel="attribute")
    ev.save_curves(record, out_dir / "curves.png")

    spk, lst = pairings["target"]
    text = ev.dump_dialogs(spk, lst, dataset, cfg["dialogs"], game_cfg,
                           rng=np.random.default_rng(seed + 1),
                           truth_oracle=oracle, split="test", pairing="target")
    (out_dir / "dialogs.txt").write_text(text, encoding="utf-8")
    ev.write_summary(summary, out_dir / "summary.kv")
    return summary


def cmd_train(args) -> int:
    with open(args.config, "r", encoding="utf-8") as f:
        raw = json.load(f)
    cfg = validate_config(raw)
    if args.seed is not None:
        cfg["seed"] = args.seed
    out_dir = _out_path(args.out or cfg.get("out"),
                        f"runs/{cfg['regime']}-{cfg['arch']}-s{cfg['seed']}")
    summary = run_training(cfg, out_dir)
    keys = ("acc_test_target", "acc_test_novel", "best_epoch", "stop_reason")
    brief = ", ".join(f"{k}={summary[k]}" for k in keys if k in summary)
    print(f"run complete: {out_dir} ({brief})")
    return 0


# -- sweep ---------------------------------------------------------------------


def cmd_sweep(args) -> int:
    with open(args.config, "r", encoding="utf-8") as f:
        spec = json.load(f)
    base = spec.get("base")
    space = spec.get("space")
    if not isinstance(base, dict) or not isinstance(space, dict) or not space:
        raise ConfigError(
            "sweep config needs 'base' (dict) and a nonempty 'space' (dict)")
    n_samples = spec.get("n_samples", 10)
    sweep_seed = spec.get("sweep_seed", 0)
    out_dir = _out_path(args.out or spec.get("out"), "runs/sweep")
    out_dir.mkdir(parents=True, exist_ok=True)

    counter = [0]

    def run_trial(sampled):
        cfg = validate_config({**base, **sampled})
        trial_dir = out_dir / f"trial-{counter[0]:02d}"
        counter[0] += 1
        summary = run_training(cfg, trial_dir)
        score = summary.get("acc_dev_target", 0.0) + summary.get(
            "acc_dev_novel", 0.0)
        return score, summary

    result = hyperparameter_sweep(space, run_trial, n_samples=n_samples,
                                  rng=np.random.default_rng(sweep_seed))
    lines = ["#rank\tscore\tconfig"]
    ranked = sorted(result.trials, key=lambda t: -t.score)
    for rank, trial in enumerate(ranked, 1):
        lines.append(f"{rank}\t{trial.score:.6f}\t"
                     f"{json.dumps(trial.config, sort_keys=True)}")
    (out_dir / "ranking.tsv").write_text("\n".join(lines) + "\n",
                                         encoding="utf-8")
    with open(out_dir / "best_config.json", "w", encoding="utf-8") as f:
        json.dump({**base, **result.best_config}, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"sweep complete: best score {result.best_score:.2f} "
          f"with {json.dumps(result.best_config, sort_keys=True)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
