"""Ranking model training, evaluation, and the recommendation channels."""

import numpy as np
import pytest

from newsim.core import RngStream
from newsim.recsys import (
    ColdSystemError,
    PairwiseData,
    RankingModel,
    TrainConfig,
    _Adam,
    build_training_set,
    evaluate_mrr_at_5,
    merge_slate,
    ranking_loss_and_grad,
    recommend_algorithmic,
    recommend_breaking,
    recommend_cold_start,
    recommend_promotion,
    train_ranking_model,
)


def make_model(user_ids, news_ids, rng=None, d=4):
    rng = rng or RngStream(0, "m")
    return RankingModel(
        user_ids=np.asarray(user_ids),
        news_ids=np.asarray(news_ids),
        user_emb=rng.normal(size=(len(user_ids), d)),
        news_emb=rng.normal(size=(len(news_ids), d)),
    )


class TestBuildTrainingSet:
    def test_splits_and_negative_sampling(self):
        events = [(u, n) for u in range(20) for n in (u % 5, (u + 1) % 5)]
        liked_ever = {}
        for u, n in events:
            liked_ever.setdefault(u, set()).add(n)
        active = set(range(10))
        train, val, test, skipped = build_training_set(
            events, liked_ever, active, ratio=3, split=(0.8, 0.1, 0.1), rng=RngStream(0, "t")
        )
        total = train.n_events + val.n_events + test.n_events
        assert total == len(events)
        assert val.n_events == int(len(events) * 0.1)
        assert test.n_events == int(len(events) * 0.1)
        assert skipped == []
        for ds in (train, val, test):
            assert ds.negs.shape[1] == 3 or ds.n_events == 0
            for u, negs in zip(ds.users, ds.negs):
                for j in negs:
                    assert j in active
                    assert j not in liked_ever[u]

    def test_inactive_positives_dropped(self):
        events = [(0, 5), (0, 99)]
        train, val, test, _ = build_training_set(
            events, {0: {5, 99}}, set(range(10)), 2, (1.0, 0.0, 0.0), RngStream(0, "t")
        )
        assert train.n_events == 1
        assert train.pos[0] == 5

    def test_user_with_no_negative_pool_skipped(self):
        events = [(0, 0), (1, 0)]
        liked = {0: {0, 1}, 1: {0}}
        train, _, _, skipped = build_training_set(
            events, liked, {0, 1}, 2, (1.0, 0.0, 0.0), RngStream(0, "t")
        )
        assert skipped == [0]
        assert list(train.users) == [1]

    def test_no_usable_events_raises(self):
        with pytest.raises(ColdSystemError):
            build_training_set([(0, 99)], {0: {99}}, {1, 2}, 2, (0.8, 0.1, 0.1), RngStream(0, "t"))
        with pytest.raises(ColdSystemError):
            build_training_set(
                [(0, 1)], {0: {1, 2}}, {1, 2}, 2, (0.8, 0.1, 0.1), RngStream(0, "t")
            )

    def test_pairs_flattening(self):
        data = PairwiseData(
            users=np.array([1, 2]), pos=np.array([10, 20]), negs=np.array([[5, 6], [7, 8]])
        )
        assert data.n_pairs == 4
        expected = [(1, 10, 5), (1, 10, 6), (2, 20, 7), (2, 20, 8)]
        assert [tuple(p) for p in data.pairs()] == expected


class TestRankingGradient:
    def finite_difference(self, user_emb, news_emb, pairs, l2, h=1e-6):
        gu = np.zeros_like(user_emb)
        gv = np.zeros_like(news_emb)
        for idx in np.ndindex(user_emb.shape):
            up, dn = user_emb.copy(), user_emb.copy()
            up[idx] += h
            dn[idx] -= h
            lp, _, _ = ranking_loss_and_grad(up, news_emb, pairs, l2)
            lm, _, _ = ranking_loss_and_grad(dn, news_emb, pairs, l2)
            gu[idx] = (lp - lm) / (2 * h)
        for idx in np.ndindex(news_emb.shape):
            up, dn = news_emb.copy(), news_emb.copy()
            up[idx] += h
            dn[idx] -= h
            lp, _, _ = ranking_loss_and_grad(user_emb, up, pairs, l2)
            lm, _, _ = ranking_loss_and_grad(user_emb, dn, pairs, l2)
            gv[idx] = (lp - lm) / (2 * h)
        return gu, gv

    def test_gradients_match_central_differences(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            nu, nn, d, P = 3, 5, 3, 10
            user_emb = rng.normal(size=(nu, d))
            news_emb = rng.normal(size=(nn, d))
            pairs = np.stack(
                [rng.integers(0, nu, P), rng.integers(0, nn, P), rng.integers(0, nn, P)],
                axis=1,
            )
            _, gu, gv = ranking_loss_and_grad(user_emb, news_emb, pairs, 1e-3)
            fu, fv = self.finite_difference(user_emb, news_emb, pairs, 1e-3)
            denom = max(np.abs(fu).max(), np.abs(fv).max(), 1e-8)
            assert np.abs(gu - fu).max() / denom < 1e-4
            assert np.abs(gv - fv).max() / denom < 1e-4

    def test_loss_decreases_under_gradient_step(self):
        rng = np.random.default_rng(1)
        user_emb = rng.normal(size=(4, 3))
        news_emb = rng.normal(size=(6, 3))
        pairs = np.array([[0, 1, 2], [1, 3, 4], [2, 5, 0]])
        l0, gu, gv = ranking_loss_and_grad(user_emb, news_emb, pairs, 1e-4)
        l1, _, _ = ranking_loss_and_grad(user_emb - 0.01 * gu, news_emb - 0.01 * gv, pairs, 1e-4)
        assert l1 < l0


class TestAdam:
    def test_first_step_magnitude_is_learning_rate(self):
        # after bias correction the first step is lr * g / (|g| + eps)
        opt = _Adam((2,), lr=0.01)
        params = np.zeros(2)
        opt.step(params, np.array([1.0, -3.0]))
        assert params == pytest.approx([-0.01, 0.01], abs=1e-6)

    def test_matches_reference_implementation(self):
        opt = _Adam((3,), lr=0.05)
        params = np.ones(3)
        m = np.zeros(3)
        v = np.zeros(3)
        ref = np.ones(3)
        rng = np.random.default_rng(0)
        for t in range(1, 20):
            g = rng.normal(size=3)
            opt.step(params, g)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g**2
            ref -= 0.05 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert params == pytest.approx(ref)


class TestMrr:
    def oracle(self, model, eval_data, active, liked_ever, n_candidates, rng):
        """Brute-force protocol replay: explicit candidate list, full sort."""
        active_sorted = np.asarray(sorted(active))
        pools = {}
        total = 0.0
        for u, i in zip(eval_data.users, eval_data.pos):
            u, i = int(u), int(i)
            if u not in pools:
                pools[u] = np.setdiff1d(
                    active_sorted, np.fromiter(liked_ever.get(u, ()), dtype=int)
                )
            pool = pools[u][pools[u] != i]
            k = min(n_candidates - 1, len(pool))
            sampled = rng.choice(pool, size=k, replace=False) if k else []
            candidates = [i] + [int(x) for x in sampled]
            scores = {}
            if u in model.user_index:
                for c in candidates:
                    if c in model.news_index:
                        scores[c] = float(model.score(u, [c])[0])
            ranked = sorted(candidates, key=lambda c: (-scores.get(c, 0.0), c))
            rank = ranked.index(i) + 1
            if rank <= 5:
                total += 1.0 / rank
        return total / eval_data.n_events

    def random_fixture(self, rng):
        n_users = int(rng.integers(2, 8))
        n_news = int(rng.integers(10, 30))
        model = make_model(range(n_users), range(0, n_news, 2))
        E = int(rng.integers(1, 10))
        users = rng.integers(0, n_users, E)
        pos = rng.integers(0, n_news, E)
        data = PairwiseData(users=users, pos=pos, negs=np.zeros((E, 1), dtype=int))
        liked_ever = {int(u): {int(p)} for u, p in zip(users, pos)}
        active = set(range(n_news))
        return model, data, active, liked_ever

    def test_matches_oracle_on_random_fixtures(self):
        meta = np.random.default_rng(0)
        for trial in range(100):
            model, data, active, liked_ever = self.random_fixture(meta)
            n_candidates = int(meta.integers(2, 12))
            got = evaluate_mrr_at_5(
                model, data, active, liked_ever, n_candidates, RngStream(trial, "mrr")
            )
            expected = self.oracle(
                model, data, active, liked_ever, n_candidates, RngStream(trial, "mrr")
            )
            assert got == expected

    def test_perfect_model_scores_one(self):
        model = make_model([0], [0, 1, 2, 3])
        model.user_emb = np.array([[1.0, 0, 0, 0]])
        model.news_emb = np.array([[9.0, 0, 0, 0], [1, 0, 0, 0], [2, 0, 0, 0], [3, 0, 0, 0]])
        data = PairwiseData(
            users=np.array([0]), pos=np.array([0]), negs=np.zeros((1, 1), dtype=int)
        )
        got = evaluate_mrr_at_5(model, data, {0, 1, 2, 3}, {0: {0}}, 100, RngStream(0, "m"))
        assert got == 1.0

    def test_rank_beyond_five_counts_zero(self):
        model = make_model([0], list(range(8)))
        model.user_emb = np.array([[1.0, 0, 0, 0]])
        emb = np.zeros((8, 4))
        emb[:, 0] = [0.0, 1, 2, 3, 4, 5, 6, 7]  # positive news 0 ranks last
        model.news_emb = emb
        data = PairwiseData(
            users=np.array([0]), pos=np.array([0]), negs=np.zeros((1, 1), dtype=int)
        )
        got = evaluate_mrr_at_5(model, data, set(range(8)), {0: {0}}, 100, RngStream(0, "m"))
        assert got == 0.0

    def test_ties_rank_smaller_id_first(self):
        model = make_model([0], [0, 1])
        model.user_emb = np.array([[1.0, 0, 0, 0]])
        model.news_emb = np.zeros((2, 4))  # all scores tie at 0
        # positive id 1 loses the tie to candidate id 0
        data = PairwiseData(
            users=np.array([0]), pos=np.array([1]), negs=np.zeros((1, 1), dtype=int)
        )
        got = evaluate_mrr_at_5(model, data, {0, 1}, {0: {1}}, 100, RngStream(0, "m"))
        assert got == 0.5


class TestTraining:
    def synthetic_preferences(self, n_users=12, n_news=16, seed=0):
        """Block structure: even users like even news, odd users odd news."""
        rng = RngStream(seed, "data")
        events = []
        for u in range(n_users):
            for n in range(n_news):
                if n % 2 == u % 2 and rng.random() < 0.8:
                    events.append((u, n))
        liked_ever = {}
        for u, n in events:
            liked_ever.setdefault(u, set()).add(n)
        return events, liked_ever, set(range(n_news))

    def test_learns_block_structure(self):
        events, liked_ever, active = self.synthetic_preferences()
        rng = RngStream(0, "t")
        train, val, _, _ = build_training_set(events, liked_ever, active, 4, (0.8, 0.2, 0.0), rng)
        cfg = TrainConfig(d_embed=8, max_epochs=40, batch_size=64, patience=5)
        model = train_ranking_model(train, val, cfg, rng, active, liked_ever)
        hits = 0
        checks = 0
        for u in model.user_index:
            for n in model.news_index:
                score = model.score(u, [n])[0]
                opposite = [m for m in model.news_index if m % 2 != n % 2]
                if not opposite or n % 2 != u % 2:
                    continue
                checks += 1
                if score > np.mean([model.score(u, [m])[0] for m in opposite]):
                    hits += 1
        assert checks > 0
        assert hits / checks > 0.8

    def test_covered_sets_are_train_and_validation_ids(self):
        events, liked_ever, active = self.synthetic_preferences()
        rng = RngStream(1, "t")
        train, val, _, _ = build_training_set(events, liked_ever, active, 2, (0.9, 0.1, 0.0), rng)
        model = train_ranking_model(
            train, val, TrainConfig(d_embed=4, max_epochs=2), rng, active, liked_ever
        )
        expected_users = set(int(u) for u in np.concatenate([train.users, val.users]))
        assert model.covered_users == expected_users

    def test_empty_training_set_rejected(self):
        empty = PairwiseData(
            users=np.empty(0, dtype=int),
            pos=np.empty(0, dtype=int),
            negs=np.empty((0, 1), dtype=int),
        )
        with pytest.raises(ValueError):
            train_ranking_model(empty, empty, TrainConfig(), RngStream(0, "t"))

    def test_model_save_load_roundtrip(self, tmp_path):
        model = make_model([3, 7], [1, 4, 9])
        path = tmp_path / "model.json"
        model.save(str(path))
        back = RankingModel.load(str(path))
        assert np.array_equal(back.user_ids, model.user_ids)
        assert np.allclose(back.news_emb, model.news_emb)
        assert back.score(7, [4, 9]) == pytest.approx(model.score(7, [4, 9]))


class TestAlgorithmicChannel:
    def test_ranks_by_score_with_id_tiebreak(self):
        model = make_model([0], [5, 6, 7, 8])
        model.user_emb = np.array([[1.0, 0, 0, 0]])
        model.news_emb = np.array(
            [[2.0, 0, 0, 0], [3.0, 0, 0, 0], [3.0, 0, 0, 0], [1.0, 0, 0, 0]]
        )
        got = recommend_algorithmic(model, 0, {5, 6, 7, 8}, set(), RngStream(0, "r"))
        assert got == [6, 7, 5, 8]

    def test_excludes_clicked_and_uncovered(self):
        model = make_model([0], [5, 6])
        got = recommend_algorithmic(model, 0, {5, 6, 99}, {5}, RngStream(0, "r"))
        assert got == [6]  # 5 clicked, 99 not in the model

    def test_cache_reuse_gives_identical_ranking(self):
        model = make_model([0, 1], range(10))
        cache = {}
        a = recommend_algorithmic(model, 0, set(range(10)), {3}, RngStream(0, "r"), cache=cache)
        b = recommend_algorithmic(model, 0, set(range(10)), {3}, RngStream(0, "r"), cache=cache)
        no_cache = recommend_algorithmic(model, 0, set(range(10)), {3}, RngStream(0, "r"))
        assert a == b == no_cache

    def test_uncovered_user_gets_shuffled_eligible(self):
        model = make_model([0], [1, 2])
        got = recommend_algorithmic(model, 42, {1, 2, 3}, {2}, RngStream(0, "r"))
        assert sorted(got) == [1, 3]

    def test_no_model_is_random_permutation(self):
        got = recommend_algorithmic(None, 0, {1, 2, 3}, set(), RngStream(0, "r"))
        assert sorted(got) == [1, 2, 3]


class TestColdStart:
    def test_random_mode_samples_fresh(self):
        got = recommend_cold_start("random", {10, 11, 12, 13}, {}, {}, 2, RngStream(0, "r"))
        assert len(got) == 2
        assert set(got) <= {10, 11, 12, 13}

    def test_affinity_ranks_liked_creators_first(self):
        fresh = {10, 11, 12, 13}
        news_creator = {10: 0, 11: 1, 12: 2, 13: 1}
        creator_likes = {1: 5, 2: 2}
        got = recommend_cold_start(
            "affinity", fresh, news_creator, creator_likes, 3, RngStream(0, "r")
        )
        # creator 1 (5 likes) first by id, then creator 2 (2 likes)
        assert got == [11, 13, 12]

    def test_affinity_pads_with_random_fresh(self):
        fresh = {10, 11, 12}
        news_creator = {10: 0, 11: 1, 12: 2}
        got = recommend_cold_start("affinity", fresh, news_creator, {1: 3}, 3, RngStream(0, "r"))
        assert got[0] == 11
        assert sorted(got) == [10, 11, 12]

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            recommend_cold_start("popular", {1}, {}, {}, 1, RngStream(0, "r"))


class TestBreakingChannel:
    def test_most_liked_unshown_news(self):
        got = recommend_breaking(
            prev_algo_recommended={1},
            candidate_news_ids={1, 2, 3, 4},
            prev_round_likes={1: 10, 2: 3, 3: 7, 4: 7},
            slots=2,
        )
        assert got == [3, 4]  # 1 was shown; 3 and 4 tie at 7, then id order

    def test_fewer_candidates_than_slots(self):
        assert recommend_breaking(set(), {5}, {5: 1}, 3) == [5]


class TestPromotionChannel:
    def test_creator_mode_filters_by_promoted(self):
        active = {i: (i % 3, np.ones(2)) for i in range(9)}
        got = recommend_promotion("creator", {1}, active, 10, RngStream(0, "r"))
        assert got == [1, 4, 7]

    def test_topic_mode_picks_nearest_news(self):
        active = {
            0: (0, np.array([1.0, 0.0])),
            1: (0, np.array([0.0, 1.0])),
            2: (0, np.array([0.9, 0.1])),
        }
        got = recommend_promotion("topic", [np.array([1.0, 0.0])], active, 2, RngStream(0, "r"))
        assert got == [0, 2]

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            recommend_promotion("viral", [], {}, 1, RngStream(0, "r"))


class TestMergeSlate:
    def test_priority_order_and_dedup(self):
        channels = [
            ("algorithmic", [1, 2]),
            ("breaking", [2, 3]),
            ("promotion", [3, 4]),
            ("cold-random", [1, 5]),
        ]
        got = merge_slate(channels, 10, [], {1, 2, 3, 4, 5}, RngStream(0, "r"))
        assert got == [
            (1, "algorithmic"),
            (2, "algorithmic"),
            (3, "breaking"),
            (4, "promotion"),
            (5, "cold-random"),
        ]

    def test_backfill_from_algorithmic_remainder(self):
        channels = [("algorithmic", [1]), ("cold-random", [2])]
        got = merge_slate(channels, 4, [3, 4, 5], {1, 2, 3, 4, 5}, RngStream(0, "r"))
        assert got == [(1, "algorithmic"), (2, "cold-random"), (3, "algorithmic"), (4, "algorithmic")]

    def test_random_fill_when_backfill_exhausted(self):
        channels = [("algorithmic", [1])]
        got = merge_slate(channels, 3, [], {1, 2, 3, 4}, RngStream(0, "r"))
        ids = [n for n, _ in got]
        assert len(got) == 3
        assert len(set(ids)) == 3
        assert 1 in ids

    def test_never_exceeds_length(self):
        channels = [("algorithmic", list(range(50)))]
        got = merge_slate(channels, 10, [], set(range(50)), RngStream(0, "r"))
        assert len(got) == 10
