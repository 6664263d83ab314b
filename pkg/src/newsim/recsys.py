"""The recommender agent: per-round pairwise-ranking training with MRR@5 early
stopping, and the five recommendation channels merged into fixed-length slates."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

log = logging.getLogger(__name__)


class ColdSystemError(RuntimeError):
    """No positive interactions exist yet; the engine falls back to random slates."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 1024
    max_epochs: int = 100
    patience: int = 3
    neg_ratio: int = 9
    split: tuple = (0.8, 0.1, 0.1)
    d_embed: int = 64
    l2: float = 1e-5
    n_candidates: int = 100  # MRR@5 protocol: 1 positive + 99 sampled negatives
    init_scale: float = 0.1

    def validate(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.neg_ratio < 1:
            raise ValueError("neg_ratio must be >= 1")


@dataclass
class PairwiseData:
    """Positive events with their sampled negatives; one row per LIKE event."""

    users: np.ndarray  # (E,)
    pos: np.ndarray  # (E,)
    negs: np.ndarray  # (E, ratio)

    @property
    def n_events(self):
        return len(self.users)

    @property
    def n_pairs(self):
        return self.negs.size

    def pairs(self):
        """Flatten to an (E * ratio, 3) array of (user, pos, neg) pairs."""
        ratio = self.negs.shape[1] if self.n_events else 0
        u = np.repeat(self.users, ratio)
        i = np.repeat(self.pos, ratio)
        j = self.negs.reshape(-1)
        return np.stack([u, i, j], axis=1)


def build_training_set(like_events, liked_ever, active_news_ids, ratio, split, rng):
    """Turn LIKE history into (train, validation, test) pairwise datasets.

    Positives are all LIKE events on currently active news; per positive,
    `ratio` negatives are sampled uniformly from active news the user has
    never liked. The split is random by positive event. Users who liked every
    active news cannot yield negatives and are skipped (returned last).
    """
    active = np.asarray(sorted(active_news_ids))
    events = [(u, n) for u, n in like_events if n in active_news_ids]
    if not events:
        raise ColdSystemError("no LIKE events on active news")
    users_out, pos_out, negs_out = [], [], []
    skipped = set()
    pools = {}
    for u, n in events:
        if u not in pools:
            pools[u] = np.setdiff1d(active, np.fromiter(liked_ever.get(u, ()), dtype=int))
        pool = pools[u]
        if len(pool) == 0:
            skipped.add(u)
            continue
        users_out.append(u)
        pos_out.append(n)
        negs_out.append(rng.choice(pool, size=ratio, replace=True))
    if not users_out:
        raise ColdSystemError("every liking user has liked all active news")
    users_arr = np.asarray(users_out)
    pos_arr = np.asarray(pos_out)
    negs_arr = np.asarray(negs_out)
    E = len(users_arr)
    order = rng.permutation(E)
    n_val = int(E * split[1])
    n_test = int(E * split[2])
    n_train = E - n_val - n_test
    parts = (
        order[:n_train],
        order[n_train : n_train + n_val],
        order[n_train + n_val :],
    )
    datasets = tuple(
        PairwiseData(users=users_arr[idx], pos=pos_arr[idx], negs=negs_arr[idx])
        for idx in parts
    )
    if skipped:
        log.info("skipped %d users with no negative candidates", len(skipped))
    return datasets[0], datasets[1], datasets[2], sorted(skipped)


@dataclass
class RankingModel:
    """Embedding-space ranking model over the ids seen in the pairwise dataset."""

    user_ids: np.ndarray
    news_ids: np.ndarray
    user_emb: np.ndarray  # (nu, d_embed)
    news_emb: np.ndarray  # (nn, d_embed)
    user_index: dict = field(default_factory=dict, repr=False)
    news_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.user_index:
            self.user_index = {int(u): i for i, u in enumerate(self.user_ids)}
        if not self.news_index:
            self.news_index = {int(n): i for i, n in enumerate(self.news_ids)}

    @property
    def d_embed(self):
        return self.user_emb.shape[1]

    @property
    def covered_users(self):
        return set(self.user_index)

    @property
    def covered_news(self):
        return set(self.news_index)

    def score(self, user_id, news_ids):
        """Dot-product scores of one user against a list of covered news ids."""
        u = self.user_emb[self.user_index[user_id]]
        rows = self.news_emb[[self.news_index[n] for n in news_ids]]
        return rows @ u

    def save(self, path):
        payload = {
            "version": 1,
            "kind": "ranking-model",
            "d_embed": self.d_embed,
            "user_ids": self.user_ids.tolist(),
            "news_ids": self.news_ids.tolist(),
            "user_emb": self.user_emb.tolist(),
            "news_emb": self.news_emb.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("kind") != "ranking-model" or payload.get("version") != 1:
            raise ValueError(f"{path}: not a version-1 ranking model snapshot")
        return cls(
            user_ids=np.asarray(payload["user_ids"], dtype=int),
            news_ids=np.asarray(payload["news_ids"], dtype=int),
            user_emb=np.asarray(payload["user_emb"], dtype=float),
            news_emb=np.asarray(payload["news_emb"], dtype=float),
        )


def ranking_loss_and_grad(user_emb, news_emb, pairs, l2):
    """Negated pairwise ranking objective -mean ln sigmoid(s_ui - s_uj) plus L2,
    with gradients w.r.t. both embedding matrices. Pure function for checking."""
    u, i, j = pairs[:, 0], pairs[:, 1], pairs[:, 2]
    diff = news_emb[i] - news_emb[j]
    s = np.einsum("pd,pd->p", user_emb[u], diff)
    loss = (
        -np.mean(log_expit(s))
        + l2 * (np.sum(user_emb**2) + np.sum(news_emb**2))
    )
    coef = -expit(-s) / len(pairs)
    grad_u = np.zeros_like(user_emb)
    grad_v = np.zeros_like(news_emb)
    np.add.at(grad_u, u, coef[:, None] * diff)
    np.add.at(grad_v, i, coef[:, None] * user_emb[u])
    np.add.at(grad_v, j, -coef[:, None] * user_emb[u])
    grad_u += 2 * l2 * user_emb
    grad_v += 2 * l2 * news_emb
    return loss, grad_u, grad_v


class _Adam:
    """Standard adaptive-moment optimizer (decay 0.9/0.999, eps 1e-8)."""

    def __init__(self, shape, lr):
        self.lr = lr
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = 0.9 * self.m + 0.1 * grad
        self.v = 0.999 * self.v + 0.001 * grad**2
        m_hat = self.m / (1 - 0.9**self.t)
        v_hat = self.v / (1 - 0.999**self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + 1e-8)


def train_ranking_model(train, val, cfg, rng, active_news_ids=None, liked_ever=None):
    """Fit the ranking model with Adam, early-stopping on validation MRR@5.

    Embeddings exist for every id appearing in any split passed to the model
    (the covered sets); only training pairs update them. Returns the
    parameters from the best validation epoch (final epoch when there is no
    validation data).
    """
    cfg.validate()
    if train.n_events == 0:
        raise ValueError("empty training set")
    all_users = np.unique(np.concatenate([train.users, val.users]))
    all_news = np.unique(
        np.concatenate([train.pos, train.negs.reshape(-1), val.pos, val.negs.reshape(-1)])
    )
    model = RankingModel(
        user_ids=all_users,
        news_ids=all_news,
        user_emb=rng.normal(0.0, cfg.init_scale, size=(len(all_users), cfg.d_embed)),
        news_emb=rng.normal(0.0, cfg.init_scale, size=(len(all_news), cfg.d_embed)),
    )
    pairs = train.pairs()
    pairs = np.stack(
        [
            np.vectorize(model.user_index.__getitem__)(pairs[:, 0]),
            np.vectorize(model.news_index.__getitem__)(pairs[:, 1]),
            np.vectorize(model.news_index.__getitem__)(pairs[:, 2]),
        ],
        axis=1,
    )
    opt_u = _Adam(model.user_emb.shape, cfg.learning_rate)
    opt_v = _Adam(model.news_emb.shape, cfg.learning_rate)
    use_val = val.n_events > 0 and active_news_ids is not None
    val_pools = _never_liked_pools(val.users, active_news_ids, liked_ever or {}) if use_val else None
    best_mrr = -np.inf
    best = None
    stale = 0
    n_pairs = len(pairs)
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(n_pairs)
        for start in range(0, n_pairs, cfg.batch_size):
            batch = pairs[order[start : start + cfg.batch_size]]
            loss, grad_u, grad_v = ranking_loss_and_grad(
                model.user_emb, model.news_emb, batch, cfg.l2
            )
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite training loss at epoch {epoch}, batch offset {start}"
                )
            opt_u.step(model.user_emb, grad_u)
            opt_v.step(model.news_emb, grad_v)
        if use_val:
            mrr = evaluate_mrr_at_5(
                model, val, active_news_ids, liked_ever or {}, cfg.n_candidates, rng,
                pools=val_pools,
            )
            if mrr > best_mrr:
                best_mrr = mrr
                best = (model.user_emb.copy(), model.news_emb.copy())
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    if best is not None:
        model.user_emb, model.news_emb = best
    return model


def _never_liked_pools(users, active_news_ids, liked_ever):
    """Per-user candidate pools: active news the user has never liked."""
    active = np.asarray(sorted(active_news_ids))
    pools = {}
    for u in np.unique(users):
        u = int(u)
        pools[u] = np.setdiff1d(active, np.fromiter(liked_ever.get(u, ()), dtype=int))
    return pools


def evaluate_mrr_at_5(model, eval_data, active_news_ids, liked_ever, n_candidates, rng, pools=None):
    """Mean reciprocal rank truncated at 5.

    Each positive is ranked against n_candidates - 1 active news the user
    never liked (sampled without replacement), descending by score with ties
    to the smaller id. Uncovered ids score 0.
    """
    if eval_data.n_events == 0:
        raise ValueError("empty evaluation set")
    if pools is None:
        pools = _never_liked_pools(eval_data.users, active_news_ids, liked_ever)
    # fast id -> embedding row lookup (news ids are small dense integers)
    row_of = np.full(int(max(active_news_ids, default=0)) + 1, -1, dtype=int)
    for n, k in model.news_index.items():
        if n < len(row_of):
            row_of[n] = k
    total = 0.0
    for u, i in zip(eval_data.users, eval_data.pos):
        u, i = int(u), int(i)
        pool = pools[u]
        pool = pool[pool != i]
        k = min(n_candidates - 1, len(pool))
        sampled = rng.choice(pool, size=k, replace=False) if k else np.empty(0, dtype=int)
        if u in model.user_index:
            uvec = model.user_emb[model.user_index[u]]
            rows = row_of[sampled]
            neg_scores = np.where(rows >= 0, model.news_emb[rows] @ uvec, 0.0)
            pos_score = model.news_emb[row_of[i]] @ uvec if row_of[i] >= 0 else 0.0
        else:
            neg_scores = np.zeros(len(sampled))
            pos_score = 0.0
        rank = 1 + int(np.sum(neg_scores > pos_score))
        rank += int(np.sum((neg_scores == pos_score) & (sampled < i)))
        if rank <= 5:
            total += 1.0 / rank
    return total / eval_data.n_events


# ---------------------------------------------------------------------------
# recommendation channels


def recommend_algorithmic(model, user_id, active_news_ids, clicked, rng, cache=None):
    """Full algorithmic ranking for one user (callers slice off the slot budget
    and use the remainder as backfill).

    Covered users get active covered news minus already-clicked, by descending
    score with ties to the smaller id; uncovered users get a uniform shuffle
    of the active news they have not clicked. A shared `cache` dict may be
    passed across calls within one round to reuse the candidate embeddings.
    """
    if model is not None and user_id in model.covered_users:
        if cache is not None and "candidates" in cache:
            cand_ids, cand_emb = cache["candidates"]
        else:
            cand_ids = np.asarray(
                [n for n in sorted(active_news_ids) if n in model.news_index], dtype=int
            )
            cand_emb = model.news_emb[[model.news_index[int(n)] for n in cand_ids]]
            if cache is not None:
                cache["candidates"] = (cand_ids, cand_emb)
        if clicked:
            keep = ~np.isin(cand_ids, np.fromiter(clicked, dtype=int))
            cand_ids, cand_emb = cand_ids[keep], cand_emb[keep]
        if cand_ids.size == 0:
            return []
        scores = cand_emb @ model.user_emb[model.user_index[user_id]]
        order = np.lexsort((cand_ids, -scores))
        return [int(n) for n in cand_ids[order]]
    eligible = sorted(n for n in active_news_ids if n not in clicked)
    return [int(n) for n in rng.permutation(eligible)]


def recommend_cold_start(mode, fresh_news_ids, news_creator, creator_like_counts, slots, rng):
    """Cold-start channel over this round's fresh news.

    random mode: uniform sample. affinity mode: fresh news of creators the
    user has historically liked come first (by descending LIKE count, ties to
    the smaller id), padded with random fresh news.
    """
    fresh = sorted(fresh_news_ids)
    if len(fresh) <= slots and mode == "random":
        return [int(n) for n in rng.permutation(fresh)]
    if mode == "random":
        return [int(n) for n in rng.choice(fresh, size=slots, replace=False)]
    if mode != "affinity":
        raise ValueError(f"unknown cold-start mode {mode!r}")
    scored = [n for n in fresh if creator_like_counts.get(news_creator[n], 0) > 0]
    scored.sort(key=lambda n: (-creator_like_counts[news_creator[n]], n))
    rest = [n for n in fresh if creator_like_counts.get(news_creator[n], 0) == 0]
    out = scored[:slots]
    if len(out) < slots:
        pad = rng.permutation(rest)
        out.extend(int(n) for n in pad[: slots - len(out)])
    return out


def recommend_breaking(prev_algo_recommended, candidate_news_ids, prev_round_likes, slots):
    """The most-liked news of the previous round that no user's algorithmic
    channel showed, ties to the smaller id. Shared by all users."""
    qualifying = sorted(n for n in candidate_news_ids if n not in prev_algo_recommended)
    qualifying.sort(key=lambda n: (-prev_round_likes.get(n, 0), n))
    return qualifying[:slots]


def recommend_promotion(mode, promoted, active_news, slots, rng):
    """Promotion channel shared by all users.

    creator mode: uniform sample of active news by the promoted creators.
    topic mode: active news nearest (max cosine) to any promoted topic mean.
    `active_news` maps news id -> (creator id, latent vector).
    """
    if mode == "creator":
        pool = sorted(n for n, (c, _) in active_news.items() if c in promoted)
        if len(pool) <= slots:
            return pool
        return sorted(int(n) for n in rng.choice(pool, size=slots, replace=False))
    if mode != "topic":
        raise ValueError(f"unknown promotion mode {mode!r}")
    means = np.asarray(promoted, dtype=float)
    norms = np.linalg.norm(means, axis=1)
    ids = sorted(active_news)
    sims = []
    for n in ids:
        v = active_news[n][1]
        nv = np.linalg.norm(v)
        if nv == 0:
            sims.append(-np.inf)
            continue
        sims.append(float(np.max(means @ v / (norms * nv))))
    order = sorted(range(len(ids)), key=lambda k: (-sims[k], ids[k]))
    return [ids[k] for k in order[:slots]]


def merge_slate(channels, L, backfill, eligible_pool, rng):
    """Concatenate channel outputs in priority order, dropping duplicates in
    favor of the earliest channel, then backfill to L from the algorithmic
    channel's next-best candidates and finally random eligible news.

    `channels` is an ordered list of (channel name, news ids). Returns a list
    of (news id, channel tag).
    """
    out = []
    seen = set()
    for name, ids in channels:
        for n in ids:
            if n not in seen and len(out) < L:
                seen.add(n)
                out.append((int(n), name))
    for n in backfill:
        if len(out) >= L:
            break
        if n not in seen:
            seen.add(n)
            out.append((int(n), "algorithmic"))
    if len(out) < L:
        spare = [n for n in sorted(eligible_pool) if n not in seen]
        for n in rng.permutation(spare):
            if len(out) >= L:
                break
            seen.add(int(n))
            out.append((int(n), "algorithmic"))
    return out
