"""Synthetic population pipeline: debiased user latents, creator latents, GMM
fitting/sampling, and a dataset-free bootstrap mode."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit, logsumexp

from .embeddings import Wordbase

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# interaction logs and propensity


@dataclass
class InteractionLog:
    """Historical (user, news, positive) records from an original platform."""

    users: np.ndarray
    news: np.ndarray
    positive: np.ndarray
    n_users: int
    n_news: int

    def __len__(self):
        return len(self.users)


def load_interaction_log(path):
    """Read a "user_id,news_id,positive" CSV into an InteractionLog."""
    users, news, positive = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["user_id", "news_id", "positive"]:
            raise ValueError(f"{path}: expected header 'user_id,news_id,positive'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                u, n, p = int(row[0]), int(row[1]), int(row[2])
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from None
            if u < 0 or n < 0 or p not in (0, 1):
                raise ValueError(f"{path}:{lineno}: out-of-range values {row!r}")
            users.append(u)
            news.append(n)
            positive.append(p)
    if not users:
        raise ValueError(f"{path}: empty interaction log")
    users = np.asarray(users)
    news = np.asarray(news)
    positive = np.asarray(positive)
    return InteractionLog(
        users=users,
        news=news,
        positive=positive,
        n_users=int(users.max()) + 1,
        n_news=int(news.max()) + 1,
    )


@dataclass
class PropensityModel:
    """Per-news exposure propensity in (0, 1], floored at theta_min."""

    theta: np.ndarray
    theta_min: float
    eta: float


def estimate_propensity(interactions, eta, theta_min):
    """Popularity-power propensities: theta_i = max(theta_min, (c_i / c_max)^eta).

    c_i counts news i's positive records. eta=0 disables debiasing.
    """
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    if not 0 < theta_min <= 1:
        raise ValueError("theta_min must lie in (0, 1]")
    if len(interactions) == 0:
        raise ValueError("empty interaction log")
    counts = np.bincount(
        interactions.news[interactions.positive == 1], minlength=interactions.n_news
    ).astype(float)
    c_max = counts.max()
    if c_max == 0:
        raise ValueError("interaction log has no positive records")
    theta = np.maximum(theta_min, (counts / c_max) ** eta)
    return PropensityModel(theta=theta, theta_min=theta_min, eta=eta)


# ---------------------------------------------------------------------------
# unbiased pairwise-ranking learning of user latents


@dataclass
class BprConfig:
    learning_rate: float = 0.05
    epochs: int = 50
    batch_size: int = 256
    l2: float = 1e-4
    neg_per_pos: int = 9


def bpr_loss_and_grad(user_latents, pairs, weights, news_latents, l2):
    """Negated debiased pairwise-ranking objective and its gradient w.r.t. user latents.

    `pairs` is an (P, 3) array of (user, pos news, neg news); `weights` the
    per-pair importance weights (1/theta_pos for sampled pairs). Minimizing
    this loss maximizes the weighted mean of ln sigmoid(S_ui - S_uj) minus an
    L2 penalty on the user latents.
    """
    u, i, j = pairs[:, 0], pairs[:, 1], pairs[:, 2]
    diff = news_latents[i] - news_latents[j]
    s = np.einsum("pd,pd->p", user_latents[u], diff)
    loss = -np.mean(weights * log_expit(s)) + l2 * np.sum(user_latents**2)
    coef = -(weights * expit(-s)) / len(pairs)
    grad = np.zeros_like(user_latents)
    np.add.at(grad, u, coef[:, None] * diff)
    grad += 2 * l2 * user_latents
    return loss, grad


def build_pairwise_data(interactions, prop, neg_per_pos, rng):
    """Per positive (u, i), sample negatives uniformly from news u has no
    positive record for. Returns (pairs, weights, excluded user ids)."""
    pos_by_user = {}
    for u, n, p in zip(interactions.users, interactions.news, interactions.positive):
        if p == 1:
            pos_by_user.setdefault(int(u), set()).add(int(n))
    excluded = sorted(set(range(interactions.n_users)) - set(pos_by_user))
    all_news = np.arange(interactions.n_news)
    pairs = []
    weights = []
    for u in sorted(pos_by_user):
        positives = pos_by_user[u]
        candidates = np.setdiff1d(all_news, np.fromiter(positives, dtype=int))
        if len(candidates) == 0:
            log.warning("user %d has positives on every news; skipped", u)
            continue
        for i in sorted(positives):
            negs = rng.choice(candidates, size=neg_per_pos, replace=True)
            for j in negs:
                pairs.append((u, i, int(j)))
                weights.append(1.0 / prop.theta[i])
    return np.asarray(pairs), np.asarray(weights), excluded


def fit_unbiased_bpr(interactions, news_latents, prop, cfg, rng):
    """Learn user latent vectors by stochastic gradient descent on the debiased
    pairwise objective; news latents stay frozen.

    Returns (user latent matrix, excluded user ids). Users without positives
    keep their random initialization and are reported as excluded.
    """
    news_latents = np.asarray(news_latents, dtype=float)
    d = news_latents.shape[1]
    pairs, weights, excluded = build_pairwise_data(interactions, prop, cfg.neg_per_pos, rng)
    if len(pairs) == 0:
        raise ValueError("no positive interactions to train on")
    user_latents = rng.normal(0.0, 0.1, size=(interactions.n_users, d))
    n_pairs = len(pairs)
    for _ in range(cfg.epochs):
        order = rng.permutation(n_pairs)
        for start in range(0, n_pairs, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, grad = bpr_loss_and_grad(
                user_latents, pairs[batch], weights[batch], news_latents, cfg.l2
            )
            user_latents -= cfg.learning_rate * grad
    return user_latents, excluded


def creator_latents_from_news(news_by_creator):
    """Creator latent = unweighted mean of the creator's news latent vectors."""
    out = {}
    for creator, vectors in news_by_creator.items():
        if len(vectors) == 0:
            raise ValueError(f"creator {creator!r} has no news")
        out[creator] = np.mean(np.asarray(vectors, dtype=float), axis=0)
    return out


# ---------------------------------------------------------------------------
# Gaussian mixture fitting and sampling


@dataclass
class GmmModel:
    """Diagonal-covariance Gaussian mixture."""

    weights: np.ndarray  # (T,)
    means: np.ndarray  # (T, d)
    variances: np.ndarray  # (T, d)

    @property
    def n_components(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.means.shape[1]

    def component_log_prob(self, X):
        """(n, T) log density of each point under each component (incl. weight)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        d = self.dim
        out = np.empty((len(X), self.n_components))
        for t in range(self.n_components):
            var = self.variances[t]
            diff = X - self.means[t]
            out[:, t] = (
                np.log(self.weights[t])
                - 0.5 * (d * np.log(2 * np.pi) + np.sum(np.log(var)))
                - 0.5 * np.sum(diff**2 / var, axis=1)
            )
        return out

    def log_likelihood(self, X):
        return float(np.sum(logsumexp(self.component_log_prob(X), axis=1)))

    def sample(self, n, rng):
        """Two-step draw: component from the mixing weights, then the Gaussian.

        Returns (points (n, d), component indices (n,)).
        """
        comps = rng.choice(self.n_components, size=n, replace=True, p=self.weights)
        noise = rng.normal(0.0, 1.0, size=(n, self.dim))
        points = self.means[comps] + noise * np.sqrt(self.variances[comps])
        return points, comps

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            weights=np.asarray(d["weights"], dtype=float),
            means=np.asarray(d["means"], dtype=float),
            variances=np.asarray(d["variances"], dtype=float),
        )


@dataclass
class EmConfig:
    max_iter: int = 200
    tol: float = 1e-7
    var_floor: float = 1e-6


def _kmeanspp_init(X, T, rng):
    n = len(X)
    means = np.empty((T, X.shape[1]))
    first = int(rng.integers(0, n))
    means[0] = X[first]
    d2 = np.sum((X - means[0]) ** 2, axis=1)
    for t in range(1, T):
        total = d2.sum()
        if total == 0:
            idx = int(rng.integers(0, n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        means[t] = X[idx]
        d2 = np.minimum(d2, np.sum((X - means[t]) ** 2, axis=1))
    return means


def fit_gmm(latents, T, cfg, rng):
    """EM for a diagonal-covariance GMM with k-means++ initialization.

    Iterates until the log-likelihood improvement drops below cfg.tol or
    cfg.max_iter is reached. A component that loses essentially all
    responsibility mass is re-seeded at the currently worst-explained point.
    Returns (model, log-likelihood history).
    """
    X = np.asarray(latents, dtype=float)
    n, d = X.shape
    if T < 1:
        raise ValueError("T must be >= 1")
    if n < T:
        raise ValueError(f"need at least T={T} samples, got {n}")
    data_var = np.maximum(X.var(axis=0), cfg.var_floor)
    model = GmmModel(
        weights=np.full(T, 1.0 / T),
        means=_kmeanspp_init(X, T, rng),
        variances=np.tile(data_var, (T, 1)),
    )
    history = []
    for _ in range(cfg.max_iter):
        log_p = model.component_log_prob(X)  # (n, T)
        log_norm = logsumexp(log_p, axis=1)
        history.append(float(np.sum(log_norm)))
        resp = np.exp(log_p - log_norm[:, None])
        mass = resp.sum(axis=0)
        dead = np.flatnonzero(mass < 1e-10)
        if len(dead):
            worst = int(np.argmin(log_norm))
            for t in dead:
                log.warning("re-seeding degenerate GMM component %d", t)
                model.means[t] = X[worst]
                model.variances[t] = data_var
                model.weights[t] = 1.0 / n
            model.weights /= model.weights.sum()
            continue
        model.weights = mass / n
        model.means = (resp.T @ X) / mass[:, None]
        for t in range(T):
            diff = X - model.means[t]
            var = (resp[:, t][:, None] * diff**2).sum(axis=0) / mass[t]
            model.variances[t] = np.maximum(var, cfg.var_floor)
        if len(history) >= 2 and history[-1] - history[-2] < cfg.tol:
            break
    return model, history


# ---------------------------------------------------------------------------
# population sampling


@dataclass
class HyperConfig:
    """Gaussian hyper-parameter distributions for the synthetic agents,
    clipped into their valid ranges after sampling."""

    threshold_mean: float = 0.3
    threshold_std: float = 0.1
    alpha_mean: float = 0.5
    alpha_std: float = 0.1
    rho_user_mean: float = 0.5
    rho_user_std: float = 0.1
    rho_creator_mean: float = 0.5
    rho_creator_std: float = 0.1


@dataclass
class SyntheticPopulation:
    user_latents: np.ndarray  # (N, d)
    creator_latents: np.ndarray  # (M, d)
    thresholds: np.ndarray  # (N,) >= 0
    alphas: np.ndarray  # (N,) >= 0
    rho_users: np.ndarray  # (N,) >= 0
    rho_creators: np.ndarray  # (M,) in [0, 1]
    topic_means: np.ndarray | None = None  # mixture component means, for topic promotion
    topic_weights: np.ndarray | None = None
    user_components: np.ndarray | None = None
    creator_components: np.ndarray | None = None

    @property
    def n_users(self):
        return len(self.user_latents)

    @property
    def n_creators(self):
        return len(self.creator_latents)

    @property
    def d_latent(self):
        return self.user_latents.shape[1]

    def save(self, path):
        payload = {
            "version": 1,
            "kind": "population",
            "d_latent": self.d_latent,
            "user_latents": self.user_latents.tolist(),
            "creator_latents": self.creator_latents.tolist(),
            "thresholds": self.thresholds.tolist(),
            "alphas": self.alphas.tolist(),
            "rho_users": self.rho_users.tolist(),
            "rho_creators": self.rho_creators.tolist(),
            "topic_means": None if self.topic_means is None else self.topic_means.tolist(),
            "topic_weights": None if self.topic_weights is None else self.topic_weights.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("kind") != "population" or payload.get("version") != 1:
            raise ValueError(f"{path}: not a version-1 population snapshot")
        opt = lambda key: (
            None if payload.get(key) is None else np.asarray(payload[key], dtype=float)
        )
        return cls(
            user_latents=np.asarray(payload["user_latents"], dtype=float),
            creator_latents=np.asarray(payload["creator_latents"], dtype=float),
            thresholds=np.asarray(payload["thresholds"], dtype=float),
            alphas=np.asarray(payload["alphas"], dtype=float),
            rho_users=np.asarray(payload["rho_users"], dtype=float),
            rho_creators=np.asarray(payload["rho_creators"], dtype=float),
            topic_means=opt("topic_means"),
            topic_weights=opt("topic_weights"),
        )


def _clipped_normal(mean, std, lo, hi, size, rng):
    return np.clip(rng.normal(mean, std, size=size), lo, hi)


def sample_population(gmm_users, gmm_creators, N, M, hyper, rng):
    """Draw N synthetic users and M creators from the fitted mixtures, plus
    their per-agent hyper-parameters."""
    if N < 1 or M < 1:
        raise ValueError("population sizes must be positive")
    user_latents, user_comps = gmm_users.sample(N, rng)
    creator_latents, creator_comps = gmm_creators.sample(M, rng)
    return SyntheticPopulation(
        user_latents=user_latents,
        creator_latents=creator_latents,
        thresholds=_clipped_normal(
            hyper.threshold_mean, hyper.threshold_std, 0.0, np.inf, N, rng
        ),
        alphas=_clipped_normal(hyper.alpha_mean, hyper.alpha_std, 0.0, np.inf, N, rng),
        rho_users=_clipped_normal(
            hyper.rho_user_mean, hyper.rho_user_std, 0.0, np.inf, N, rng
        ),
        rho_creators=_clipped_normal(
            hyper.rho_creator_mean, hyper.rho_creator_std, 0.0, 1.0, M, rng
        ),
        topic_means=gmm_users.means.copy(),
        topic_weights=gmm_users.weights.copy(),
        user_components=user_comps,
        creator_components=creator_comps,
    )


# ---------------------------------------------------------------------------
# dataset-free bootstrap


@dataclass
class BootstrapConfig:
    components: int = 5
    d_latent: int = 25
    spread: float = 3.0  # scale of component mean placement
    cov_scale: float = 1.0  # per-coordinate std within a component
    wordbase_per_component: int = 0  # 0 disables the synthetic wordbase


def bootstrap_latent_space(cfg, rng):
    """Construct user and creator mixtures without any source dataset.

    Component means are drawn at the configured spread (re-drawn until they
    are at least spread/2 apart), covariances are isotropic. Optionally emits
    a synthetic wordbase of labeled cluster points so textual explanation
    stays exercisable. Returns (gmm_users, gmm_creators, wordbase or None).
    """
    T, d = cfg.components, cfg.d_latent
    if T < 1 or d < 1:
        raise ValueError("components and d_latent must be positive")
    if cfg.spread == 0 or T == 1:
        means = np.zeros((T, d))
        if T > 1:
            raise ValueError("spread must be positive for more than one component")
    else:
        for _ in range(100):
            means = rng.normal(0.0, cfg.spread, size=(T, d))
            dist = np.linalg.norm(means[:, None] - means[None, :], axis=2)
            np.fill_diagonal(dist, np.inf)
            if dist.min() >= cfg.spread / 2:
                break
        else:
            raise RuntimeError("could not place well-separated component means")
    weights = np.full(T, 1.0 / T)
    variances = np.full((T, d), cfg.cov_scale**2)
    gmm_users = GmmModel(weights=weights.copy(), means=means.copy(), variances=variances.copy())
    gmm_creators = GmmModel(
        weights=weights.copy(), means=means.copy(), variances=variances.copy()
    )
    wordbase = None
    if cfg.wordbase_per_component > 0:
        tokens = []
        vectors = []
        for t in range(T):
            for i in range(cfg.wordbase_per_component):
                tokens.append(f"topic{t:02d}_word{i:03d}")
                vectors.append(means[t] + rng.normal(0.0, cfg.cov_scale, size=d))
        wordbase = Wordbase(tokens=tokens, vectors=np.asarray(vectors))
    return gmm_users, gmm_creators, wordbase
