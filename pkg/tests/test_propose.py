import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cutoff_oracle, merge_oracle, nearest_rank_oracle, nms_oracle
from granalign.core import FrameIndexSpan, PipelineConfig, TimeSpan, temporal_iou
from granalign.errors import EmptySeries
from granalign.propose import (filter_low_spans, histogram_cutoff, merge_frames, nearest_rank_percentile,
                               nms, propose, score_spans, select_high_frames, span_mean)
from granalign.score import FrameScoreSeries


def series(values, vid="v", qid="q"):
    return FrameScoreSeries(vid, qid, np.asarray(values, dtype=float))


class TestSelectHighFrames:
    def test_hand_cutoff(self):
        # cutoff = 0.05 + (10 - 8) / 10 * (0.95 - 0.05) = 0.23
        s = np.array([0.05, 0.25, 0.95])
        assert histogram_cutoff(s, 10, 8) == pytest.approx(0.23)
        assert select_high_frames(s, 10, 8) == [1, 2]

    def test_constant(self):
        assert select_high_frames([0.4] * 5, 10, 8) == [0, 1, 2, 3, 4]

    def test_all_bins(self):
        assert select_high_frames([0.3, 0.1, 0.9], 10, 10) == [0, 1, 2]

    def test_empty(self):
        with pytest.raises(EmptySeries):
            select_high_frames([], 10, 8)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=60), st.integers(1, 12), st.data())
    def test_matches_formula(self, scores, bins, data):
        top = data.draw(st.integers(1, bins))
        got = select_high_frames(scores, bins, top)
        lo, hi = min(scores), max(scores)
        if lo == hi:
            assert got == list(range(len(scores)))
        else:
            cut = lo + (bins - top) / bins * (hi - lo)
            assert got == [i for i, s in enumerate(scores) if s >= cut]

    def test_agrees_with_binning_oracle_away_from_edges(self):
        rng = random.Random(5)
        for _ in range(200):
            scores = [rng.random() for _ in range(rng.randint(2, 80))]
            lo, hi = min(scores), max(scores)
            width = (hi - lo) / 10
            # skip draws that land within rounding distance of a bin edge
            if any(abs(((s - lo) / width) - round((s - lo) / width)) < 1e-9 for s in scores if s not in (lo, hi)):
                continue
            assert select_high_frames(scores, 10, 8) == cutoff_oracle(scores, 10, 8)


class TestMergeFrames:
    @pytest.mark.parametrize("sel,tau,expected", [
        ([2, 3, 4, 9, 10], 6, [(2, 10)]),
        ([2, 3, 4, 9, 10], 2, [(2, 4), (9, 10)]),
        ([5], 0, [(5, 5)]),
        ([5], 8, [(5, 5)]),
        ([], 3, []),
    ])
    def test_examples(self, sel, tau, expected):
        assert merge_oracle(sel, tau) == expected
        assert [(s.start_idx, s.end_idx) for s in merge_frames(sel, tau)] == expected

    def test_gap_equal_tau_bridges(self):
        assert len(merge_frames([0, 4], 3)) == 1
        assert len(merge_frames([0, 5], 3)) == 2

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            merge_frames([3, 1], 2)

    @given(st.sets(st.integers(0, 120), max_size=40), st.integers(0, 8))
    def test_properties(self, sel, tau):
        spans = merge_frames(sorted(sel), tau)
        for a, b in zip(spans, spans[1:]):
            assert a.end_idx < b.start_idx
        covered = {i for s in spans for i in s.indices()}
        assert set(sel) <= covered
        assert [(s.start_idx, s.end_idx) for s in spans] == merge_oracle(sel, tau)


class TestFilterLowSpans:
    def test_percentile_example(self):
        scores = [round(0.1 * i, 1) for i in range(1, 11)]
        assert nearest_rank_oracle(scores, 20) == 0.2
        assert nearest_rank_percentile(scores, 20) == 0.2

    def test_drop_and_keep(self):
        # frames 0..9 scored 0.1..1.0
        scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
        low = FrameIndexSpan(0, 1)   # mean 0.15
        edge = FrameIndexSpan(1, 1)  # mean 0.2
        assert span_mean(np.array(scores), low) == pytest.approx(0.15)
        kept = filter_low_spans([low, edge], scores, 20)
        assert kept == [edge]

    def test_n_zero_keeps_all(self):
        spans = [FrameIndexSpan(0, 0), FrameIndexSpan(2, 3)]
        assert filter_low_spans(spans, [0.0, 0.5, 0.1, 0.1], 0) == spans

    def test_keep_one_guard(self):
        scores = [0.0, 0.1, 0.9, 0.9, 0.9, 0.9]
        only = [FrameIndexSpan(0, 1)]
        assert filter_low_spans(only, scores, 50) == only
        two = [FrameIndexSpan(0, 0), FrameIndexSpan(1, 1)]
        assert filter_low_spans(two, scores, 50) == [FrameIndexSpan(1, 1)]

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.floats(0, 99.9))
    def test_percentile_oracle(self, values, n):
        assert nearest_rank_percentile(values, n) == nearest_rank_oracle(values, n)


class TestScoreSpans:
    def test_direct_substitution(self):
        # two equal-length spans -> rho = 0.5; frame scores give mu = 0.8
        s = [0.8, 0.8, 0.1, 0.1]
        out = score_spans([FrameIndexSpan(0, 1), FrameIndexSpan(2, 3)], s, 0.3)
        assert out[0].mu == pytest.approx(0.8) and out[0].rho == 0.5
        assert out[0].score == pytest.approx(0.7 * 0.8 + 0.3 * 0.5, abs=1e-12)
        assert out[0].score == pytest.approx(0.71, abs=1e-12)

    def test_lambda_zero(self):
        out = score_spans([FrameIndexSpan(0, 0), FrameIndexSpan(1, 3)], [0.2, 0.4, 0.6, 0.8], 0)
        assert [o.score for o in out] == [o.mu for o in out]

    def test_single_span(self):
        (o,) = score_spans([FrameIndexSpan(1, 2)], [0.0, 0.5, 0.7], 0.3)
        assert o.rho == 1.0 and o.score == (1 - 0.3) * o.mu + 0.3

    def test_rho_sum(self):
        rng = random.Random(1)
        for _ in range(100):
            starts = sorted(rng.sample(range(0, 200, 3), rng.randint(1, 20)))
            spans = [FrameIndexSpan(a, a + rng.randint(0, 2)) for a in starts]
            out = score_spans(spans, [rng.random() for _ in range(210)], rng.random())
            assert sum(o.rho for o in out) == pytest.approx(1.0, abs=1e-9)


def ts(a, b):
    return TimeSpan(a, b)


class TestNms:
    def test_example(self):
        items = [(ts(0, 10), 0.9), (ts(0, 9), 0.8), (ts(20, 30), 0.7)]
        assert temporal_iou(ts(0, 10), ts(0, 9)) == pytest.approx(0.9)
        expected = [(ts(0, 10), 0.9), (ts(20, 30), 0.7)]
        assert nms_oracle(items, 0.85) == expected
        assert nms(items, 0.85) == expected

    def test_duplicates(self):
        assert nms([(ts(1, 5), 0.4), (ts(1, 5), 0.6)], 0.9) == [(ts(1, 5), 0.6)]

    def test_disjoint_all_kept(self):
        items = [(ts(0, 1), 0.1), (ts(2, 3), 0.3), (ts(4, 5), 0.2)]
        assert nms(items, 0.5) == [(ts(2, 3), 0.3), (ts(4, 5), 0.2), (ts(0, 1), 0.1)]

    def test_exact_threshold_kept(self):
        a, b = ts(0, 10), ts(0, 5)  # IoU 0.5
        assert len(nms([(a, 0.9), (b, 0.8)], 0.5)) == 2

    def test_tie_order(self):
        items = [(ts(5, 6), 0.5), (ts(0, 2), 0.5), (ts(0, 4), 0.5)]
        assert nms(items, 1.0) == [(ts(0, 4), 0.5), (ts(0, 2), 0.5), (ts(5, 6), 0.5)]

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.integers(0, 40), st.integers(0, 15), st.sampled_from([0.1, 0.5, 0.7, 0.9])),
                    max_size=25),
           st.sampled_from([0.3, 0.5, 0.9, 1.0]))
    def test_pairwise_iou_bound(self, raw, theta):
        items = [(ts(a, a + l), sc) for a, l, sc in raw]
        kept = nms(items, theta)
        for i in range(len(kept)):
            for j in range(i + 1, len(kept)):
                assert temporal_iou(kept[i][0], kept[j][0]) <= theta + 1e-12


class TestPropose:
    def test_constant_series(self):
        pred = propose(series([0.5] * 30), PipelineConfig())
        assert len(pred.spans) == 1
        assert pred.scored[0].span == FrameIndexSpan(0, 29)
        assert pred.top.span == TimeSpan(0, 60)

    def test_plateau(self):
        rng = np.random.default_rng(0)
        vals = 0.1 + 0.02 * rng.random(100)
        vals[40:61] = 0.9
        pred = propose(series(vals), PipelineConfig())
        assert pred.scored[0].span == FrameIndexSpan(40, 60)
        assert pred.top.span == TimeSpan(80, 122)

    def test_empty(self):
        with pytest.raises(EmptySeries):
            propose(series([]), PipelineConfig())

    def test_ranked_and_deterministic(self):
        rng = np.random.default_rng(3)
        s = series(rng.random(80))
        a, b = propose(s, PipelineConfig()), propose(s, PipelineConfig())
        assert a.spans == b.spans
        scores = [r.score for r in a.spans]
        assert scores == sorted(scores, reverse=True)
        assert a.saliency is s
