"""Command-line entry point: generate populations, run simulations, sweep
strategies, and export analyses."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from . import datagen, engine, metrics
from .core import RngStream
from .embeddings import Wordbase, load_embedding_table, load_wordbase

log = logging.getLogger("newsim")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _config_key_epilog():
    lines = ["config keys (defaults):"]
    for f in dataclasses.fields(engine.SimConfig):
        lines.append(f"  {f.name} = {f.default}")
    return "\n".join(lines)


def _load_config(path, **overrides):
    if path is None:
        data = {}
    else:
        cfg = engine.load_config(path)
        data = cfg.to_dict()
        # a strategy override re-derives the channel budgets from scratch
        new_strategy = overrides.get("strategy")
        if new_strategy is not None and new_strategy != data.get("strategy"):
            for key in ("algo_slots", "cold_slots", "breaking_slots", "promo_slots"):
                data.pop(key, None)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return engine.SimConfig.from_dict(data)


def _real_data_population(cfg, args):
    """Population from an interaction log plus per-news latent vectors.

    The embeddings file must key its vectors by decimal news id. An optional
    creators CSV ("news_id,creator_id") yields exact creator latents;
    otherwise the creator mixture is fitted on the news vectors directly.
    """
    table = load_embedding_table(args.embeddings)
    interactions = datagen.load_interaction_log(args.interactions)
    news_latents = np.zeros((interactions.n_news, table.dim))
    for n in range(interactions.n_news):
        token = str(n)
        if token not in table:
            raise ValueError(f"news id {n} missing from embeddings file")
        news_latents[n] = table.vector(token)
    rngs = engine.make_rng_streams(cfg.seed)
    rng = rngs["population"]
    prop = datagen.estimate_propensity(interactions, args.eta, args.theta_min)
    user_latents, excluded = datagen.fit_unbiased_bpr(
        interactions, news_latents, prop, datagen.BprConfig(), rng
    )
    if excluded:
        log.warning("excluded %d users without positive records", len(excluded))
        user_latents = np.delete(user_latents, excluded, axis=0)
    if args.creators:
        by_creator = {}
        with open(args.creators, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "news_id,creator_id":
                raise ValueError(f"{args.creators}: expected header 'news_id,creator_id'")
            for line in fh:
                if not line.strip():
                    continue
                n, c = (int(x) for x in line.strip().split(","))
                by_creator.setdefault(c, []).append(news_latents[n])
        creator_latents = np.stack(
            [v for _, v in sorted(datagen.creator_latents_from_news(by_creator).items())]
        )
    else:
        creator_latents = news_latents
    em = datagen.EmConfig()
    T = cfg.bootstrap_components
    gmm_users, _ = datagen.fit_gmm(user_latents, T, em, rng)
    gmm_creators, _ = datagen.fit_gmm(creator_latents, T, em, rng)
    return datagen.sample_population(
        gmm_users, gmm_creators, cfg.n_users, cfg.n_creators, cfg.hyper_config(), rng
    )


def _save_wordbase_file(wordbase, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(wordbase)} {wordbase.vectors.shape[1]}\n")
        for token, vec in zip(wordbase.tokens, wordbase.vectors):
            fh.write(token + " " + " ".join(format(v, ".9g") for v in vec) + "\n")


def cmd_generate(args):
    cfg = _load_config(args.config, seed=args.seed)
    if bool(args.embeddings) != bool(args.interactions):
        raise UsageError("real-data mode needs both --embeddings and --interactions")
    if args.embeddings:
        pop = _real_data_population(cfg, args)
        wordbase = None
    else:
        pop, wordbase = engine.generate_population(cfg)
    pop.save(args.out)
    if wordbase is not None:
        _save_wordbase_file(wordbase, os.path.splitext(args.out)[0] + "_wordbase.txt")
    summary = {
        "n_users": pop.n_users,
        "n_creators": pop.n_creators,
        "d_latent": pop.d_latent,
        "components": None if pop.topic_weights is None else len(pop.topic_weights),
    }
    print(json.dumps(summary))
    return EXIT_OK


def cmd_simulate(args):
    cfg = _load_config(args.config, seed=args.seed, strategy=args.strategy)
    population = datagen.SyntheticPopulation.load(args.population) if args.population else None

    def progress(report):
        print(
            f"round {report.round:3d}: likes={report.total_likes} "
            f"gini_users={report.gini_users:.3f} covered={report.users_covered}",
            file=sys.stderr,
        )

    engine.run_simulation(cfg, out_dir=args.out_dir, population=population, progress=progress)
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load_config(args.config)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    if not strategies:
        raise UsageError("--strategies must name at least one strategy")
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    merged_path = os.path.join(args.out_dir, "merged.csv")
    os.makedirs(args.out_dir, exist_ok=True)
    metric_names = [n for n in metrics.RoundReport.header() if n != "round"]
    with open(merged_path, "w", encoding="utf-8") as merged:
        merged.write("strategy,run,round,metric,value\n")
        for strategy in strategies:
            for run in range(args.repeats):
                run_cfg = _load_config(args.config, strategy=strategy, seed=cfg.seed + run)
                run_dir = os.path.join(args.out_dir, strategy, f"run{run:02d}")
                _, reports = engine.run_simulation(run_cfg, out_dir=run_dir)
                for report in reports:
                    for name in metric_names:
                        v = getattr(report, name)
                        cell = "" if v is None else format(float(v), ".9g")
                        merged.write(f"{strategy},{run},{report.round},{name},{cell}\n")
                print(f"finished {strategy} run {run}", file=sys.stderr)
    return EXIT_OK


def _wordbase_from_args(args):
    table = load_embedding_table(args.embeddings)
    if args.wordbase:
        return load_wordbase(args.wordbase, table)
    return Wordbase(tokens=list(table.tokens), vectors=table.vectors)


def cmd_explain(args):
    state, _cfg = engine.restore(args.snapshot)
    wordbase = _wordbase_from_args(args)
    if args.users:
        user_ids = [int(u) for u in args.users.split(",")]
    else:
        rng = RngStream(_cfg.seed, "explain")
        user_ids = sorted(int(u) for u in rng.choice(len(state.users), size=min(6, len(state.users)), replace=False))
    engine.export_user_explanations(state, wordbase, user_ids, k=args.k, path=args.out)
    return EXIT_OK


def cmd_project(args):
    state, _cfg = engine.restore(args.snapshot)
    engine.export_latent_projection(state, k=args.k, path=args.out)
    return EXIT_OK


def cmd_validate_config(args):
    engine.load_config(args.config)
    print("ok")
    return EXIT_OK


class UsageError(Exception):
    pass


def build_parser():
    parser = argparse.ArgumentParser(
        prog="newsim",
        description="Multi-agent news recommendation ecosystem simulator.",
        epilog=_config_key_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic population")
    p.add_argument("--config", help="config file (flat key=value or JSON)")
    p.add_argument("--embeddings", help="per-news vectors keyed by news id (real-data mode)")
    p.add_argument("--interactions", help="interaction log CSV (real-data mode)")
    p.add_argument("--creators", help="optional news_id,creator_id CSV (real-data mode)")
    p.add_argument("--eta", type=float, default=0.5, help="propensity exponent")
    p.add_argument("--theta-min", type=float, default=0.01, help="propensity floor")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--out", required=True, help="population snapshot path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("simulate", help="run one simulation")
    p.add_argument("--config", help="config file")
    p.add_argument("--population", help="population snapshot (omit to bootstrap)")
    p.add_argument("--strategy", choices=engine.STRATEGIES, help="recommendation strategy")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run several strategies with repeats")
    p.add_argument("--config", help="config file")
    p.add_argument("--strategies", required=True, help="comma-separated strategy names")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("explain", help="textual explanation of user latents")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--wordbase", help="token-per-line subset (defaults to all tokens)")
    p.add_argument("--users", help="comma-separated user ids (default: 6 sampled)")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("project", help="export a PCA projection of the latent space")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("validate-config", help="validate a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate_config)

    return parser


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, engine.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
