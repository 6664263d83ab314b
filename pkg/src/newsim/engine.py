"""Round-loop orchestration: configuration, initialization, the creator ->
recommender -> user cycle, persistence, and analysis exports."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import agents, datagen, metrics, recsys
from .core import RngStream, pca_project
from .embeddings import nearest_words

log = logging.getLogger(__name__)

STRATEGIES = ("default", "cold-affinity", "breaking", "promo-creator", "promo-topic")

SNAPSHOT_VERSION = 1

RNG_STREAMS = ("population", "creators", "recsys", "users", "metrics", "promotion")


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


@dataclass
class SimConfig:
    """Full run configuration; defaults follow the reference setup."""

    seed: int = 0
    n_users: int = 10000
    n_creators: int = 1000
    rounds: int = 100
    news_per_creator: int = 5  # K: news per creator per round
    active_rounds: int = 5  # S: rounds a news item stays recommendable
    list_length: int = 100  # L: recommendation slots per user per round
    n_click: int = 10
    p_like: float = 0.1
    delta: float = 0.1  # latent-space step magnitude
    eps: float = 1e-8
    d_latent: int = 25
    # agent hyper-parameter distributions
    threshold_mean: float = 0.3
    threshold_std: float = 0.1
    alpha_mean: float = 0.5
    alpha_std: float = 0.1
    rho_user_mean: float = 0.5
    rho_user_std: float = 0.1
    rho_creator_mean: float = 0.5
    rho_creator_std: float = 0.1
    # strategy and channel budgets
    strategy: str = "default"
    algo_slots: int = 80
    cold_slots: int = 20
    breaking_slots: int = 0
    promo_slots: int = 0
    promo_reset_interval: int = 10
    promo_creator_count: int = 5
    promo_topic_count: int = 1
    # ranking-model training
    learning_rate: float = 1e-3
    batch_size: int = 1024
    max_epochs: int = 100
    patience: int = 3
    neg_ratio: int = 9
    split_train: float = 0.8
    split_val: float = 0.1
    split_test: float = 0.1
    d_embed: int = 64
    l2: float = 1e-5
    mrr_candidates: int = 100
    # bootstrap latent space
    bootstrap_components: int = 5
    bootstrap_spread: float = 3.0
    bootstrap_cov_scale: float = 1.0
    wordbase_per_component: int = 0
    # metrics and exports
    jaccard_pair_budget: int = 100000
    projection_interval: int = 0  # 0 disables per-round projection export
    debug_checks: bool = False

    # budgets that strategies apply when the config file does not set them
    STRATEGY_BUDGETS = {
        "default": dict(algo_slots=80, cold_slots=20, breaking_slots=0, promo_slots=0),
        "cold-affinity": dict(algo_slots=80, cold_slots=20, breaking_slots=0, promo_slots=0),
        "breaking": dict(algo_slots=60, cold_slots=20, breaking_slots=20, promo_slots=0),
        "promo-creator": dict(algo_slots=60, cold_slots=20, breaking_slots=0, promo_slots=20),
        "promo-topic": dict(algo_slots=60, cold_slots=20, breaking_slots=0, promo_slots=20),
    }

    def validate(self):
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        for name in (
            "n_users",
            "n_creators",
            "rounds",
            "news_per_creator",
            "active_rounds",
            "list_length",
            "n_click",
            "d_latent",
            "d_embed",
            "promo_reset_interval",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"unknown strategy {self.strategy!r}; valid: {', '.join(STRATEGIES)}"
            )
        budgets = self.algo_slots + self.cold_slots + self.breaking_slots + self.promo_slots
        if budgets != self.list_length:
            raise ConfigError(
                f"channel budgets sum to {budgets}, must equal list_length {self.list_length}"
            )
        if abs(self.split_train + self.split_val + self.split_test - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")
        if not 0 <= self.p_like <= 1:
            raise ConfigError("p_like must lie in [0, 1]")
        if self.delta <= 0 or self.eps <= 0:
            raise ConfigError("delta and eps must be positive")
        return self

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged = dict(data)
        strategy = merged.get("strategy", "default")
        if strategy in cls.STRATEGY_BUDGETS:
            for key, value in cls.STRATEGY_BUDGETS[strategy].items():
                merged.setdefault(key, value)
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in merged:
                continue
            raw = merged[f.name]
            try:
                if f.type == "bool":
                    kwargs[f.name] = (
                        raw if isinstance(raw, bool) else str(raw).lower() in ("1", "true", "yes")
                    )
                elif f.type == "int":
                    kwargs[f.name] = int(raw)
                elif f.type == "float":
                    kwargs[f.name] = float(raw)
                else:
                    kwargs[f.name] = raw
            except (TypeError, ValueError):
                raise ConfigError(f"config key {f.name}: cannot parse {raw!r}") from None
        return cls(**kwargs).validate()

    def to_dict(self):
        return dataclasses.asdict(self)

    def train_config(self):
        return recsys.TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            neg_ratio=self.neg_ratio,
            split=(self.split_train, self.split_val, self.split_test),
            d_embed=self.d_embed,
            l2=self.l2,
            n_candidates=self.mrr_candidates,
        )

    def hyper_config(self):
        return datagen.HyperConfig(
            threshold_mean=self.threshold_mean,
            threshold_std=self.threshold_std,
            alpha_mean=self.alpha_mean,
            alpha_std=self.alpha_std,
            rho_user_mean=self.rho_user_mean,
            rho_user_std=self.rho_user_std,
            rho_creator_mean=self.rho_creator_mean,
            rho_creator_std=self.rho_creator_std,
        )

    def bootstrap_config(self):
        return datagen.BootstrapConfig(
            components=self.bootstrap_components,
            d_latent=self.d_latent,
            spread=self.bootstrap_spread,
            cov_scale=self.bootstrap_cov_scale,
            wordbase_per_component=self.wordbase_per_component,
        )


def load_config(path):
    """Parse a config file: flat "key = value" lines (# comments) or JSON with
    the same keys. Unknown keys are rejected; defaults fill the rest."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: JSON config must be an object")
    else:
        data = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in data:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            data[key] = value
    return SimConfig.from_dict(data)


# ---------------------------------------------------------------------------
# simulation state


@dataclass
class SimState:
    round: int
    users: list
    creators: list
    news: list  # NewsItem, id == index
    like_events_by_round: list  # per round: list of (user_id, news_id, channel)
    user_creator_likes: list  # per user: {creator_id: cumulative LIKE count}
    prev_algo_recommended: set = field(default_factory=set)
    promoted_creators: list | None = None
    promoted_topics: list | None = None  # topic component means
    promo_round: int = -1
    topic_means: np.ndarray | None = None
    reports: list = field(default_factory=list)
    rngs: dict = field(default_factory=dict)

    def active_news(self, round_idx):
        return [n for n in self.news if n.active_at(round_idx)]

    def check_integrity(self):
        """Referential-integrity and invariant sweep; raises on violation."""
        n_news = len(self.news)
        for idx, item in enumerate(self.news):
            assert item.id == idx, "news ids must be dense indices"
            assert 0 <= item.creator_id < len(self.creators)
            assert item.quality >= 0
            assert np.all(np.isfinite(item.latent))
        for user in self.users:
            assert user.liked <= user.clicked, "liked must be a subset of clicked"
            assert all(0 <= n < n_news for n in user.clicked)
            assert np.all(np.isfinite(user.latent))
        for creator in self.creators:
            assert all(0 <= n < n_news for n in creator.news_ids)
            assert all(self.news[n].creator_id == creator.id for n in creator.news_ids)
        for events in self.like_events_by_round:
            for u, n, _ in events:
                assert 0 <= u < len(self.users) and 0 <= n < n_news


def make_rng_streams(seed):
    return {name: RngStream(seed, name) for name in RNG_STREAMS}


def initialize_simulation(pop, cfg, rngs=None):
    """Build the round-0 state: creators seed the news pool around their own
    latents, the recommender issues uniformly random lists, users respond."""
    if rngs is None:
        rngs = make_rng_streams(cfg.seed)
    users = [
        agents.UserState(
            id=i,
            latent=pop.user_latents[i].copy(),
            threshold=float(pop.thresholds[i]),
            alpha=float(pop.alphas[i]),
            rho=float(pop.rho_users[i]),
        )
        for i in range(pop.n_users)
    ]
    creators = [
        agents.CreatorState(
            id=i, latent=pop.creator_latents[i].copy(), rho=float(pop.rho_creators[i])
        )
        for i in range(pop.n_creators)
    ]
    state = SimState(
        round=0,
        users=users,
        creators=creators,
        news=[],
        like_events_by_round=[],
        user_creator_likes=[dict() for _ in range(pop.n_users)],
        topic_means=None if pop.topic_means is None else pop.topic_means.copy(),
        rngs=rngs,
    )
    creators_rng = rngs["creators"]
    for creator in creators:
        anchors = [creator.latent] * cfg.news_per_creator
        items = agents.creator_produce_news(
            creator,
            anchors,
            cfg.delta,
            cfg.n_click,
            cfg.p_like,
            0,
            cfg.active_rounds,
            len(state.news),
            creators_rng,
        )
        for item in items:
            creator.news_ids.append(item.id)
            state.news.append(item)
    # uniformly random initial lists, one per user, sampled without replacement
    all_ids = np.arange(len(state.news))
    recsys_rng = rngs["recsys"]
    slates = []
    length = min(cfg.list_length, len(all_ids))
    if length < cfg.list_length:
        log.warning("only %d news exist; initial lists truncated", length)
    for _ in users:
        picks = recsys_rng.choice(all_ids, size=length, replace=False)
        slates.append([(int(n), "algorithmic") for n in picks])
    _respond_users(state, cfg, slates, 0)
    _update_creator_likes(state, 0)
    if cfg.debug_checks:
        state.check_integrity()
    return state


def _update_creator_likes(state, round_idx):
    for creator in state.creators:
        creator.last_round_likes = sum(
            state.news[n].likes_in(round_idx) for n in creator.news_ids
        )


def _respond_users(state, cfg, slates, round_idx):
    """Users click, decide LIKEs, and drift; records all per-round bookkeeping.

    Returns (liked cosines, per-channel LIKE counts, max displacement norm).
    """
    q_max = agents.max_quality(cfg.news_per_creator, cfg.n_users)
    users_rng = state.rngs["users"]
    events = []
    liked_cosines = []
    channel_likes = {c: 0 for c in metrics.CHANNELS}
    max_disp = 0.0
    for user, slate in zip(state.users, slates):
        if not slate:
            continue
        rec_ids = [n for n, _ in slate]
        channel_of = dict(slate)
        latents = np.stack([state.news[n].latent for n in rec_ids])
        clicked = agents.user_click(user, rec_ids, latents, cfg.n_click, users_rng)
        read = []
        for nid in clicked:
            news = state.news[nid]
            user.clicked.add(nid)
            sim = float(
                np.dot(user.latent, news.latent)
                / (np.linalg.norm(user.latent) * np.linalg.norm(news.latent))
            )
            liked, utility = agents.user_like(user, news, q_max, sim=sim)
            read.append((news, liked, utility))
            if liked:
                user.liked.add(nid)
                news.likes_by_round[round_idx] = news.likes_in(round_idx) + 1
                events.append((user.id, nid, channel_of[nid]))
                channel_likes[channel_of[nid]] += 1
                liked_cosines.append(sim)
                counts = state.user_creator_likes[user.id]
                counts[news.creator_id] = counts.get(news.creator_id, 0) + 1
        new_latent = agents.user_drift(user, read, cfg.delta, cfg.eps)
        max_disp = max(max_disp, float(np.linalg.norm(new_latent - user.latent)))
        user.latent = new_latent
    state.like_events_by_round.append(events)
    return liked_cosines, channel_likes, max_disp


def _refresh_promotion(state, cfg, round_idx):
    if cfg.promo_slots == 0:
        return
    if state.promo_round >= 0 and round_idx - state.promo_round < cfg.promo_reset_interval:
        return
    rng = state.rngs["promotion"]
    if cfg.strategy == "promo-creator":
        count = min(cfg.promo_creator_count, len(state.creators))
        picks = rng.choice(len(state.creators), size=count, replace=False)
        state.promoted_creators = sorted(int(c) for c in picks)
    elif cfg.strategy == "promo-topic":
        if state.topic_means is None:
            raise RuntimeError("topic promotion needs mixture component means")
        count = min(cfg.promo_topic_count, len(state.topic_means))
        picks = rng.choice(len(state.topic_means), size=count, replace=False)
        state.promoted_topics = [state.topic_means[int(t)] for t in sorted(picks)]
    state.promo_round = round_idx


def run_round(state, cfg, observer=None):
    """Advance the simulation by one round (creators -> recommender -> users)."""
    r = state.round + 1
    recsys_rng = state.rngs["recsys"]
    creators_rng = state.rngs["creators"]

    # 1) creators anchor on last round's winners and produce fresh news
    fresh_ids = []
    for creator in state.creators:
        owned = [state.news[n] for n in creator.news_ids]
        last_likes = [n.likes_in(r - 1) for n in owned]
        anchor_ids = agents.creator_select_topics(
            creator, owned, last_likes, cfg.news_per_creator, cfg.eps, creators_rng
        )
        anchors = [state.news[a].latent for a in anchor_ids]
        items = agents.creator_produce_news(
            creator,
            anchors,
            cfg.delta,
            cfg.n_click,
            cfg.p_like,
            r,
            cfg.active_rounds,
            len(state.news),
            creators_rng,
        )
        for item in items:
            creator.news_ids.append(item.id)
            state.news.append(item)
            fresh_ids.append(item.id)

    active_items = state.active_news(r)
    active_ids = [n.id for n in active_items]
    active_set = set(active_ids)
    news_creator = {n.id: n.creator_id for n in active_items}

    # 2) train the ranking model on LIKE history restricted to active news
    all_events = [(u, n) for events in state.like_events_by_round for u, n, _ in events]
    liked_ever = {u.id: u.liked for u in state.users if u.liked}
    model = None
    if all_events:
        try:
            train, val, _test, _skipped = recsys.build_training_set(
                all_events,
                liked_ever,
                active_set,
                cfg.neg_ratio,
                (cfg.split_train, cfg.split_val, cfg.split_test),
                recsys_rng,
            )
            model = recsys.train_ranking_model(
                train, val, cfg.train_config(), recsys_rng, active_set, liked_ever
            )
        except recsys.ColdSystemError:
            model = None

    # 3) shared channels: breaking news and promotion pools
    breaking = []
    if cfg.breaking_slots > 0:
        carried = [n.id for n in active_items if n.created_round < r]
        prev_likes = {n: state.news[n].likes_in(r - 1) for n in carried}
        breaking = recsys.recommend_breaking(
            state.prev_algo_recommended, carried, prev_likes, cfg.breaking_slots
        )
    promo = []
    if cfg.promo_slots > 0:
        _refresh_promotion(state, cfg, r)
        pool = {n.id: (n.creator_id, n.latent) for n in active_items}
        if cfg.strategy == "promo-creator":
            promo = recsys.recommend_promotion(
                "creator", state.promoted_creators, pool, cfg.promo_slots, recsys_rng
            )
        else:
            promo = recsys.recommend_promotion(
                "topic", state.promoted_topics, pool, cfg.promo_slots, recsys_rng
            )
    cold_mode = "affinity" if cfg.strategy == "cold-affinity" else "random"
    cold_tag = "cold-affinity" if cold_mode == "affinity" else "cold-random"

    # 4) per-user slates
    slates = []
    algo_shown = set()
    algo_cache = {}
    for user in state.users:
        eligible = [n for n in active_ids if n not in user.clicked]
        if model is None:
            picks = recsys_rng.permutation(eligible)[: cfg.list_length]
            slate = [(int(n), "algorithmic") for n in picks]
        else:
            ranked = recsys.recommend_algorithmic(
                model, user.id, active_ids, user.clicked, recsys_rng, cache=algo_cache
            )
            algo = ranked[: cfg.algo_slots]
            backfill = ranked[cfg.algo_slots :]
            cold = recsys.recommend_cold_start(
                cold_mode,
                fresh_ids,
                news_creator,
                state.user_creator_likes[user.id],
                cfg.cold_slots,
                recsys_rng,
            )
            channels = [
                ("algorithmic", algo),
                ("breaking", breaking),
                ("promotion", promo),
                (cold_tag, cold),
            ]
            slate = recsys.merge_slate(
                channels, cfg.list_length, backfill, eligible, recsys_rng
            )
        slates.append(slate)
        algo_shown.update(n for n, tag in slate if tag == "algorithmic")

    # 5) users respond and drift
    liked_cosines, channel_likes, max_disp = _respond_users(state, cfg, slates, r)
    _update_creator_likes(state, r)
    state.prev_algo_recommended = algo_shown

    # 6) metrics
    report = _round_report(state, cfg, r, model, active_items, liked_cosines, channel_likes)
    state.reports.append(report)
    state.round = r
    if cfg.debug_checks:
        state.check_integrity()
    if observer is not None:
        observer(
            {
                "round": r,
                "slates": slates,
                "active_set": active_set,
                "max_displacement": max_disp,
                "channel_likes": channel_likes,
                "model": model,
            }
        )
    return state


def _round_report(state, cfg, r, model, active_items, liked_cosines, channel_likes):
    events = state.like_events_by_round[r]
    user_likes = np.zeros(len(state.users))
    news_likes_map = {}
    for u, n, _ in events:
        user_likes[u] += 1
        news_likes_map[n] = news_likes_map.get(n, 0) + 1
    qualities = np.array([n.quality for n in active_items])
    news_likes = np.array([float(n.likes_in(r)) for n in active_items])
    creator_likes = np.array([float(c.last_round_likes) for c in state.creators])
    users_cov, news_cov = metrics.coverage(
        model, range(len(state.users)), [n.id for n in active_items]
    )
    avg_q, weighted_q = metrics.quality_stats(qualities, news_likes)
    window = state.like_events_by_round[max(0, r - cfg.active_rounds + 1) : r + 1]
    liked_sets = [set() for _ in state.users]
    for round_events in window:
        for u, n, _ in round_events:
            liked_sets[u].add(n)
    jaccard = metrics.jaccard_homogenization(
        liked_sets, cfg.jaccard_pair_budget, state.rngs["metrics"]
    )
    total = int(user_likes.sum())
    return metrics.RoundReport(
        round=r,
        total_likes=total,
        avg_likes_per_user=total / len(state.users),
        gini_users=metrics.gini(user_likes),
        gini_news=metrics.gini(news_likes) if len(news_likes) else 0.0,
        gini_creators=metrics.gini(creator_likes),
        users_covered=users_cov,
        news_covered=news_cov,
        avg_quality=avg_q,
        like_weighted_quality=weighted_q,
        quality_like_correlation=metrics.popularity_quality_correlation(
            qualities, news_likes
        ),
        jaccard=jaccard,
        user_news_cosine=metrics.user_news_similarity(liked_cosines),
        likes_algorithmic=channel_likes["algorithmic"],
        likes_cold_random=channel_likes["cold-random"],
        likes_cold_affinity=channel_likes["cold-affinity"],
        likes_breaking=channel_likes["breaking"],
        likes_promotion=channel_likes["promotion"],
    )


# ---------------------------------------------------------------------------
# full runs and persistence


def generate_population(cfg, rngs=None):
    """Bootstrap a synthetic population straight from config (no source data).

    Returns (population, wordbase or None).
    """
    if rngs is None:
        rngs = make_rng_streams(cfg.seed)
    rng = rngs["population"]
    gmm_users, gmm_creators, wordbase = datagen.bootstrap_latent_space(
        cfg.bootstrap_config(), rng
    )
    pop = datagen.sample_population(
        gmm_users, gmm_creators, cfg.n_users, cfg.n_creators, cfg.hyper_config(), rng
    )
    return pop, wordbase


def run_simulation(cfg, out_dir=None, population=None, state=None, observer=None, progress=None):
    """Initialize (unless resuming from `state`) and run cfg.rounds rounds.

    Streams the metrics CSV row by row when out_dir is given, exports periodic
    latent projections, and writes a final snapshot. Returns (state, reports).
    """
    cfg.validate()
    metrics_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.csv")
    if state is None:
        if population is None:
            population, _wb = generate_population(cfg)
        state = initialize_simulation(population, cfg)
        if metrics_path:
            with open(metrics_path, "w", encoding="utf-8") as fh:
                fh.write(",".join(metrics.RoundReport.header()) + "\n")
    first_new = len(state.reports)
    while state.round < cfg.rounds:
        run_round(state, cfg, observer=observer)
        report = state.reports[-1]
        if metrics_path:
            with open(metrics_path, "a", encoding="utf-8") as fh:
                fh.write(report.to_csv_row() + "\n")
                fh.flush()
        if (
            out_dir is not None
            and cfg.projection_interval > 0
            and state.round % cfg.projection_interval == 0
        ):
            export_latent_projection(
                state, 2, os.path.join(out_dir, f"projection_round_{state.round:04d}.csv")
            )
        if progress is not None:
            progress(report)
    if out_dir is not None:
        snapshot(state, cfg, os.path.join(out_dir, "snapshot.json"))
    return state, state.reports[first_new:]


def snapshot(state, cfg, path):
    """Write a versioned, self-describing JSON snapshot including RNG positions."""
    payload = {
        "version": SNAPSHOT_VERSION,
        "kind": "simulation-state",
        "round": state.round,
        "config": cfg.to_dict(),
        "users": [
            {
                "latent": u.latent.tolist(),
                "threshold": u.threshold,
                "alpha": u.alpha,
                "rho": u.rho,
                "clicked": sorted(u.clicked),
                "liked": sorted(u.liked),
            }
            for u in state.users
        ],
        "creators": [
            {
                "latent": c.latent.tolist(),
                "rho": c.rho,
                "news_ids": list(c.news_ids),
                "last_round_likes": c.last_round_likes,
            }
            for c in state.creators
        ],
        "news": [
            {
                "creator_id": n.creator_id,
                "latent": n.latent.tolist(),
                "quality": n.quality,
                "created_round": n.created_round,
                "active_rounds": n.active_rounds,
                "likes_by_round": {str(k): v for k, v in sorted(n.likes_by_round.items())},
            }
            for n in state.news
        ],
        "like_events_by_round": [
            [[u, n, c] for u, n, c in events] for events in state.like_events_by_round
        ],
        "user_creator_likes": [
            {str(k): v for k, v in sorted(d.items())} for d in state.user_creator_likes
        ],
        "prev_algo_recommended": sorted(state.prev_algo_recommended),
        "promoted_creators": state.promoted_creators,
        "promoted_topics": None
        if state.promoted_topics is None
        else [t.tolist() for t in state.promoted_topics],
        "promo_round": state.promo_round,
        "topic_means": None if state.topic_means is None else state.topic_means.tolist(),
        "reports": [r.to_csv_row() for r in state.reports],
        "rngs": {name: _jsonable_rng_state(s.get_state()) for name, s in state.rngs.items()},
    }
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
    os.replace(tmp, path)


def _jsonable_rng_state(st):
    # PCG64 state dicts contain nested ints beyond JSON's native range; fine as-is
    return json.loads(json.dumps(st))


def restore(path):
    """Load a snapshot; returns (state, config). Rejects version mismatches and
    truncated files without producing partial state."""
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: corrupt snapshot: {exc}") from None
    if payload.get("kind") != "simulation-state":
        raise ValueError(f"{path}: not a simulation snapshot")
    if payload.get("version") != SNAPSHOT_VERSION:
        raise ValueError(
            f"{path}: snapshot version {payload.get('version')} != {SNAPSHOT_VERSION}"
        )
    cfg = SimConfig.from_dict(payload["config"])
    users = [
        agents.UserState(
            id=i,
            latent=np.asarray(u["latent"], dtype=float),
            threshold=u["threshold"],
            alpha=u["alpha"],
            rho=u["rho"],
            clicked=set(u["clicked"]),
            liked=set(u["liked"]),
        )
        for i, u in enumerate(payload["users"])
    ]
    creators = [
        agents.CreatorState(
            id=i,
            latent=np.asarray(c["latent"], dtype=float),
            rho=c["rho"],
            news_ids=list(c["news_ids"]),
            last_round_likes=c["last_round_likes"],
        )
        for i, c in enumerate(payload["creators"])
    ]
    news = [
        agents.NewsItem(
            id=i,
            creator_id=n["creator_id"],
            latent=np.asarray(n["latent"], dtype=float),
            quality=n["quality"],
            created_round=n["created_round"],
            active_rounds=n["active_rounds"],
            likes_by_round={int(k): v for k, v in n["likes_by_round"].items()},
        )
        for i, n in enumerate(payload["news"])
    ]
    state = SimState(
        round=payload["round"],
        users=users,
        creators=creators,
        news=news,
        like_events_by_round=[
            [(u, n, c) for u, n, c in events] for events in payload["like_events_by_round"]
        ],
        user_creator_likes=[
            {int(k): v for k, v in d.items()} for d in payload["user_creator_likes"]
        ],
        prev_algo_recommended=set(payload["prev_algo_recommended"]),
        promoted_creators=payload["promoted_creators"],
        promoted_topics=None
        if payload["promoted_topics"] is None
        else [np.asarray(t, dtype=float) for t in payload["promoted_topics"]],
        promo_round=payload["promo_round"],
        topic_means=None
        if payload["topic_means"] is None
        else np.asarray(payload["topic_means"], dtype=float),
        reports=[metrics.RoundReport.from_csv_row(r) for r in payload["reports"]],
        rngs=make_rng_streams(cfg.seed),
    )
    for name, st in payload["rngs"].items():
        state.rngs[name].set_state(st)
    return state, cfg


# ---------------------------------------------------------------------------
# analysis exports


def export_latent_projection(state, k=2, path=None):
    """PCA projection of user and active-news latents for one round.

    Rows: id, kind (user/news), in_loop (user has at least one LIKE), LIKE
    count, then k projected coordinates. Returns the rows; writes CSV when a
    path is given.
    """
    active = state.active_news(state.round)
    points = np.vstack(
        [np.stack([u.latent for u in state.users])]
        + ([np.stack([n.latent for n in active])] if active else [])
    )
    coords, _ = pca_project(points, k)
    rows = []
    for i, user in enumerate(state.users):
        rows.append(
            (user.id, "user", int(bool(user.liked)), len(user.liked), *coords[i])
        )
    for j, item in enumerate(active):
        c = coords[len(state.users) + j]
        rows.append((item.id, "news", 0, item.total_likes, *c))
    if path is not None:
        header = ["id", "kind", "in_loop", "likes"] + [f"c{i}" for i in range(k)]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                cells = [str(row[0]), row[1], str(row[2]), str(row[3])]
                cells += [format(float(v), ".9g") for v in row[4:]]
                fh.write(",".join(cells) + "\n")
    return rows


def export_user_explanations(state, wordbase, user_ids, k=3, path=None):
    """Nearest-word explanation of selected users' current latent vectors.

    Long-format rows: (round, user_id, rank, token, cosine).
    """
    if wordbase is None or len(wordbase) == 0:
        raise ValueError("a wordbase is required for textual explanations")
    rows = []
    for uid in user_ids:
        words = nearest_words(state.users[uid].latent, k, wordbase)
        for rank, (token, sim) in enumerate(words, start=1):
            rows.append((state.round, uid, rank, token, sim))
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("round,user_id,rank,token,cosine\n")
            for r, uid, rank, token, sim in rows:
                fh.write(f"{r},{uid},{rank},{token},{format(sim, '.9g')}\n")
    return rows
