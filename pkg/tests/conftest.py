"""Shared fixtures: the desk-scale configuration and cached simulation runs."""

import numpy as np
import pytest

from newsim import engine
from newsim.core import RngStream

# Desk-scale preset: small enough for the full battery to run in minutes while
# still exhibiting the ecosystem's start-up / growth / maturity phases. The
# active window and click budget are scaled down with the population so the
# start-up transient fits inside the 30-round horizon.
DESK = {
    "n_users": 500,
    "n_creators": 50,
    "rounds": 30,
    "d_latent": 25,
    "d_embed": 32,
    "active_rounds": 3,
    "n_click": 5,
}

DESK_SEED = 1
DESK_REPEATS = 3


def desk_config(seed=DESK_SEED, **overrides):
    data = dict(DESK, seed=seed)
    data.update(overrides)
    return engine.SimConfig.from_dict(data)


def tiny_config(seed=0, **overrides):
    """A few-second configuration for unit-level engine tests."""
    data = {
        "seed": seed,
        "n_users": 40,
        "n_creators": 8,
        "rounds": 3,
        "d_latent": 8,
        "d_embed": 8,
        "list_length": 20,
        "algo_slots": 16,
        "cold_slots": 4,
        "n_click": 4,
        "max_epochs": 5,
        "batch_size": 64,
    }
    data.update(overrides)
    return engine.SimConfig.from_dict(data)


class InvariantObserver:
    """Per-round structural checks recorded during a simulation run."""

    def __init__(self, state, cfg):
        self.state = state
        self.cfg = cfg
        self.violations = []

    def _check(self, ok, message):
        if not ok:
            self.violations.append(message)

    def __call__(self, payload):
        state, cfg = self.state, self.cfg
        r = payload["round"]
        active = payload["active_set"]
        for uid, slate in enumerate(payload["slates"]):
            ids = [n for n, _ in slate]
            self._check(len(ids) == len(set(ids)), f"round {r}: duplicate slate entry for user {uid}")
            self._check(set(ids) <= active, f"round {r}: inactive news in slate for user {uid}")
        events = state.like_events_by_round[r]
        news_total = sum(n.likes_in(r) for n in state.news)
        creator_total = sum(c.last_round_likes for c in state.creators)
        channel_total = sum(payload["channel_likes"].values())
        self._check(
            len(events) == news_total == creator_total == channel_total,
            f"round {r}: LIKE totals disagree "
            f"({len(events)}, {news_total}, {creator_total}, {channel_total})",
        )
        for user in state.users:
            self._check(user.liked <= user.clicked, f"round {r}: user {user.id} liked unclicked news")
        bound = cfg.n_click * cfg.delta
        self._check(
            payload["max_displacement"] <= bound + 1e-9,
            f"round {r}: displacement {payload['max_displacement']:.4f} exceeds {bound:.4f}",
        )
        report = state.reports[-1]
        for name in ("gini_users", "gini_news", "gini_creators", "jaccard"):
            v = getattr(report, name)
            if v is not None:
                self._check(0.0 <= v <= 1.0, f"round {r}: {name}={v} outside [0, 1]")


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    """The three desk-scale repeats, each with its metrics CSV on disk.

    Returns a list of dicts with the config, final state, reports, metrics
    path, and the invariant violations observed while running.
    """
    runs = []
    for rep in range(DESK_REPEATS):
        cfg = desk_config(seed=DESK_SEED + rep)
        out_dir = tmp_path_factory.mktemp(f"desk_run{rep}")
        population, _ = engine.generate_population(cfg)
        state = engine.initialize_simulation(population, cfg)
        observer = InvariantObserver(state, cfg)
        state, reports = engine.run_simulation(
            cfg, out_dir=str(out_dir), state=state, observer=observer
        )
        # round 0 is produced by initialization, before the observer attaches
        with open(out_dir / "metrics.csv", "w", encoding="utf-8") as fh:
            fh.write(",".join(reports[0].header()) + "\n")
            for rp in reports:
                fh.write(rp.to_csv_row() + "\n")
        runs.append(
            {
                "cfg": cfg,
                "state": state,
                "reports": reports,
                "metrics_path": out_dir / "metrics.csv",
                "violations": observer.violations,
            }
        )
    return runs


def fresh_rng(name="test", seed=0):
    return RngStream(seed, name)


def random_unit_vector(rng, d):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)
