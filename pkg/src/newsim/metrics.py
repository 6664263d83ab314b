"""Per-round analysis battery: interaction, coverage, quality, homogenization, latent metrics."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

CHANNELS = ("algorithmic", "cold-random", "cold-affinity", "breaking", "promotion")


def gini(values):
    """Gini index of a nonnegative array via the O(n log n) sorted formula.

    Equals sum_ij |x_i - x_j| / (2 n^2 mean). All-zero input is defined as 0.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("gini expects a non-empty 1-d array")
    if np.any(x < 0):
        raise ValueError("gini undefined for negative values")
    total = x.sum()
    if total == 0:
        return 0.0
    n = x.size
    xs = np.sort(x)
    ranks = np.arange(1, n + 1, dtype=float)
    return float(np.sum((2 * ranks - n - 1) * xs) / (n * total))


def jaccard_homogenization(liked_sets, pair_budget, rng):
    """Mean pairwise Jaccard overlap of users' liked-news sets.

    Only non-empty sets participate. Exact over all pairs when their count is
    within `pair_budget`, otherwise estimated over `pair_budget` sampled pairs.
    Returns None when fewer than 2 non-empty sets exist.
    """
    sets = [s for s in liked_sets if s]
    m = len(sets)
    if m < 2:
        return None
    n_pairs = m * (m - 1) // 2
    if n_pairs <= pair_budget:
        total = 0.0
        for i in range(m):
            for j in range(i + 1, m):
                inter = len(sets[i] & sets[j])
                union = len(sets[i]) + len(sets[j]) - inter
                total += inter / union
        return total / n_pairs
    left = rng.integers(0, m, size=pair_budget)
    right = rng.integers(0, m - 1, size=pair_budget)
    right[right >= left] += 1  # distinct partner, still uniform
    total = 0.0
    for i, j in zip(left, right):
        inter = len(sets[i] & sets[j])
        union = len(sets[i]) + len(sets[j]) - inter
        total += inter / union
    return total / pair_budget


def coverage(model, user_ids, active_news_ids):
    """Counts of existing users / active news covered by the trained ranking model."""
    if model is None:
        return 0, 0
    users = model.covered_users & set(user_ids)
    news = model.covered_news & set(active_news_ids)
    return len(users), len(news)


def quality_stats(qualities, likes):
    """(unweighted mean quality, LIKE-weighted mean quality or None if no LIKEs)."""
    q = np.asarray(qualities, dtype=float)
    w = np.asarray(likes, dtype=float)
    if q.size == 0:
        raise ValueError("quality_stats needs at least one active news")
    avg = float(q.mean())
    total = w.sum()
    weighted = float(np.dot(q, w) / total) if total > 0 else None
    return avg, weighted


def popularity_quality_correlation(qualities, likes):
    """Pearson r between quality and LIKE count; None when either is constant."""
    q = np.asarray(qualities, dtype=float)
    w = np.asarray(likes, dtype=float)
    if q.size < 2:
        return None
    if np.ptp(q) == 0 or np.ptp(w) == 0:
        return None
    return float(np.corrcoef(q, w)[0, 1])


def user_news_similarity(cosines):
    """Mean cosine over this round's (user, liked news) events; None when empty."""
    if len(cosines) == 0:
        return None
    return float(np.mean(cosines))


@dataclass
class RoundReport:
    """All per-round metrics; one CSV row. Missing values are None (empty cells)."""

    round: int
    total_likes: int
    avg_likes_per_user: float
    gini_users: float
    gini_news: float
    gini_creators: float
    users_covered: int
    news_covered: int
    avg_quality: float
    like_weighted_quality: float | None
    quality_like_correlation: float | None
    jaccard: float | None
    user_news_cosine: float | None
    likes_algorithmic: int
    likes_cold_random: int
    likes_cold_affinity: int
    likes_breaking: int
    likes_promotion: int

    INT_FIELDS = {
        "round",
        "total_likes",
        "users_covered",
        "news_covered",
        "likes_algorithmic",
        "likes_cold_random",
        "likes_cold_affinity",
        "likes_breaking",
        "likes_promotion",
    }

    @classmethod
    def header(cls):
        return [f.name for f in fields(cls)]

    def to_csv_row(self):
        cells = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                cells.append("")
            elif f.name in self.INT_FIELDS:
                cells.append(str(int(v)))
            else:
                cells.append(format(float(v), ".9g"))
        return ",".join(cells)

    @classmethod
    def from_csv_row(cls, row):
        names = cls.header()
        cells = row.rstrip("\n").split(",")
        if len(cells) != len(names):
            raise ValueError(f"expected {len(names)} cells, got {len(cells)}")
        kwargs = {}
        for name, cell in zip(names, cells):
            if cell == "":
                kwargs[name] = None
            elif name in cls.INT_FIELDS:
                kwargs[name] = int(cell)
            else:
                kwargs[name] = float(cell)
        return cls(**kwargs)
