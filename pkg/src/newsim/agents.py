"""Behavioral policies: news creation, click selection, LIKE decision, interest drift."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import cosine_rows, sample_gaussian_vector, softmax


@dataclass
class NewsItem:
    id: int
    creator_id: int
    latent: np.ndarray
    quality: float  # log(D^C + 1) at creation, natural log
    created_round: int
    active_rounds: int
    likes_by_round: dict = field(default_factory=dict)

    @property
    def active_until(self):
        return self.created_round + self.active_rounds - 1

    def active_at(self, round_idx):
        return self.created_round <= round_idx <= self.active_until

    def likes_in(self, round_idx):
        return self.likes_by_round.get(round_idx, 0)

    @property
    def total_likes(self):
        return sum(self.likes_by_round.values())


@dataclass
class UserState:
    id: int
    latent: np.ndarray
    threshold: float  # expected utility threshold, >= 0
    alpha: float  # content-vs-quality preference, >= 0
    rho: float  # concentration, >= 0
    clicked: set = field(default_factory=set)
    liked: set = field(default_factory=set)


@dataclass
class CreatorState:
    id: int
    latent: np.ndarray
    rho: float  # concentration in [0, 1]
    news_ids: list = field(default_factory=list)
    last_round_likes: int = 0  # D^C: LIKEs on owned news in the previous round


def creator_select_topics(creator, owned_news, last_likes, K, eps, rng):
    """Pick K anchor news ids (with replacement) from the creator's own news.

    `last_likes[j]` is news j's previous-round LIKE count; selection
    probability is softmax over exp(-(1 - rho) / (D + eps)), so likelier
    anchors are last round's winners. All owned news are eligible, including
    expired ones.
    """
    if not owned_news:
        raise ValueError(f"creator {creator.id} owns no news")
    if len(last_likes) != len(owned_news):
        raise ValueError("last_likes must align with owned_news")
    ids = np.array([n.id for n in owned_news])
    d = np.asarray(last_likes, dtype=float)
    scores = np.exp(-(1.0 - creator.rho) / (d + eps))
    probs = softmax(scores)
    picks = rng.choice(len(ids), size=K, replace=True, p=probs)
    return [int(ids[i]) for i in picks]


def creator_produce_news(
    creator, anchor_latents, delta, n_click, p_like, round_idx, active_rounds, next_id, rng
):
    """Create one news item per anchor, all sharing quality log(D^C + 1).

    D^C is the creator's previous-round LIKE total; at round 0 it is drawn
    from Binomial(n_click, p_like). Latents are isotropic Gaussian around each
    anchor with std rho^C * delta.
    """
    if round_idx == 0:
        d_c = int(rng.binomial(n_click, p_like))
    else:
        d_c = creator.last_round_likes
    quality = math.log(d_c + 1)
    items = []
    for k, anchor in enumerate(anchor_latents):
        latent = sample_gaussian_vector(anchor, creator.rho * delta, rng)
        items.append(
            NewsItem(
                id=next_id + k,
                creator_id=creator.id,
                latent=latent,
                quality=quality,
                created_round=round_idx,
                active_rounds=active_rounds,
            )
        )
    return items


def user_click(user, rec_ids, rec_latents, n_click, rng):
    """Sample n_click distinct news from softmax(rho^U * cosine), renormalizing
    after each draw. Lists shorter than n_click are clicked in full."""
    m = len(rec_ids)
    if m == 0:
        raise ValueError("empty recommendation list")
    if m <= n_click:
        return list(rec_ids)
    sims = cosine_rows(rec_latents, user.latent)
    probs = softmax(user.rho * sims)
    clicked = []
    probs = probs.copy()
    for _ in range(n_click):
        probs = probs / probs.sum()
        idx = int(rng.choice(m, p=probs))
        clicked.append(rec_ids[idx])
        probs[idx] = 0.0
    return clicked


def user_like(user, news, q_max, sim=None):
    """LIKE decision: utility = alpha*cosine + (1-alpha)*Q/q_max, liked iff > threshold.

    Returns (liked, utility). `sim` lets callers pass a precomputed cosine.
    """
    if sim is None:
        sim = float(cosine_rows(news.latent[None, :], user.latent)[0])
    utility = user.alpha * sim + (1.0 - user.alpha) * news.quality / q_max
    return utility > user.threshold, utility


def user_drift(user, read_items, delta, eps):
    """Round-end preference update from this round's clicked items.

    Each (news, liked, utility) item contributes a step of length at most
    `delta` toward (liked) or away from (not liked) the news latent, damped by
    exp(-rho^U / (max(utility, 0) + eps)). All steps use the round-start
    latent, so the update is independent of click order. Returns the new latent.
    """
    start = user.latent
    total = np.zeros_like(start)
    for news, liked, utility in read_items:
        direction = news.latent - start
        norm = np.linalg.norm(direction)
        if norm == 0:
            continue
        sign = 1.0 if liked else -1.0
        step = math.exp(-user.rho / (max(utility, 0.0) + eps))
        total += sign * delta * (direction / norm) * step
    return start + total


def max_quality(news_per_creator, n_users):
    """Normalizer for the quality utility term: log(K * N + 1)."""
    return math.log(news_per_creator * n_users + 1)
