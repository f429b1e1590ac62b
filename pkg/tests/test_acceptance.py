"""Acceptance checks. Each test prints one PASS/FAIL line with its tolerance.

Run just these with ``pytest tests/test_acceptance.py -v``; the lines are
printed even when output capture is on. ``python3 tests/test_acceptance.py``
prints the same lines without pytest.
"""

import contextlib
import io
import json
import math
import random
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from conftest import build_g_fixture  # noqa: E402
from oracles import cutoff_oracle, merge_oracle, nms_oracle  # noqa: E402

from granalign.cli import main as cli_main  # noqa: E402
from granalign.core import FrameIndexSpan, PipelineConfig, TimeSpan, temporal_iou  # noqa: E402
from granalign.metrics import GroundTruth, evaluate, recall_at_1  # noqa: E402
from granalign.propose import merge_frames, nms, score_spans, select_high_frames, span_mean  # noqa: E402
from granalign.rewrite import RewriteSet  # noqa: E402
from granalign.score import frame_score  # noqa: E402

DATA = Path(__file__).parent / "data"


def report(capsys, name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    with capsys.disabled():
        print(f"\n{line}", flush=True)
    assert ok, line


# --- frame score -------------------------------------------------------------

def check_frame_score():
    hand = [
        ([(0.6, 0.8)], 0.7),
        ([(0.5, 0.5), (0.5, 0.5)], 0.5),
        ([(0.9, 0.7), (0.8, 0.6), (1.0, 0.0)], 4.0 / 6.0),
    ]
    t0 = time.perf_counter()
    worst = 0.0
    for pairs, expected in hand:
        rs, caps, emb = build_g_fixture(pairs)
        worst = max(worst, abs(frame_score(rs, caps, 0, emb) - expected))
    rng = random.Random(11)
    perm_ok = True
    for _ in range(500):
        pairs = [(rng.random(), rng.random()) for _ in range(rng.randint(1, 6))]
        rs, caps, emb = build_g_fixture(pairs)
        shuffled = list(rs.pairs)
        rng.shuffle(shuffled)
        a = frame_score(rs, caps, 0, emb)
        b = frame_score(RewriteSet(rs.original, tuple(shuffled)), caps, 0, emb)
        perm_ok &= a == b and abs(a - math.fsum(g for p in pairs for g in p) / (2 * len(pairs))) <= 1e-9
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and perm_ok and dt < 1.0
    return ok, f"hand max err {worst:.1e} (tol 1e-9), 500 permutation cases {'ok' if perm_ok else 'BROKEN'}, {dt:.2f}s (< 1s)"


def test_frame_score_suite(capsys):
    report(capsys, "frame score (mean of 2m similarity terms)", *check_frame_score())


# --- span score --------------------------------------------------------------

def check_span_score():
    t0 = time.perf_counter()
    s = np.array([0.8, 0.8, 0.1, 0.1])
    single = score_spans([FrameIndexSpan(0, 1)], s, 0.3)[0]
    # one span has rho = 1; the hand value 0.7*0.8 + 0.3*0.5 = 0.71 needs rho = 0.5
    two = score_spans([FrameIndexSpan(0, 1), FrameIndexSpan(2, 3)], s, 0.3)[0]
    worst = max(abs(single.score - (0.7 * 0.8 + 0.3)), abs(two.score - 0.71))
    rng = random.Random(12)
    props = True
    for _ in range(500):
        n = rng.randint(1, 120)
        scores = np.array([rng.random() for _ in range(n)])
        cuts = sorted(rng.sample(range(n), rng.randint(1, min(n, 8))))
        spans = [FrameIndexSpan(c, rng.randint(c, nxt - 1)) for c, nxt in zip(cuts, cuts[1:] + [n])]
        lam = rng.random()
        total = sum(sp.end_idx - sp.start_idx + 1 for sp in spans)
        got = score_spans(spans, scores, lam)
        for sp, g in zip(spans, got):
            length = sp.end_idx - sp.start_idx + 1
            mu = sum(scores[sp.start_idx:sp.end_idx + 1]) / length
            worst = max(worst, abs(g.score - ((1 - lam) * mu + lam * length / total)))
        props &= abs(math.fsum(g.rho for g in got) - 1.0) <= 1e-12
        props &= all(g.score == g.mu for g in score_spans(spans, scores, 0.0))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and props and dt < 1.0
    return ok, (f"max err vs direct substitution {worst:.1e} (tol 1e-12), 500 batches lambda=0 collapse and "
                f"sum(rho)=1 {'ok' if props else 'BROKEN'}, {dt:.2f}s (< 1s)")


def test_span_score_suite(capsys):
    report(capsys, "span score ((1-lambda)*mu + lambda*rho)", *check_span_score())


# --- NMS ---------------------------------------------------------------------

def check_nms():
    rng = random.Random(13)
    t0 = time.perf_counter()
    mismatches = 0
    for k in range(1000):
        n = rng.randint(0, 50)
        items = []
        for _ in range(n):
            # coarse grids force score ties and duplicate extents
            a = rng.randint(0, 40) / 2
            b = a + rng.randint(0, 20) / 2
            items.append((TimeSpan(a, b), rng.choice([rng.random(), round(rng.random(), 1)])))
        theta = rng.choice([0.3, 0.5, 0.7, 0.9, 1.0, round(rng.uniform(0.05, 1.0), 2)])
        if nms(items, theta) != nms_oracle(items, theta):
            mismatches += 1
    dt = time.perf_counter() - t0
    return mismatches == 0 and dt < 5.0, f"{1000 - mismatches}/1000 instances equal the O(n^2) reference, {dt:.2f}s (< 5s)"


def test_nms_oracle(capsys):
    report(capsys, "NMS vs reference", *check_nms())


# --- merge -------------------------------------------------------------------

def check_merge():
    rng = random.Random(14)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(1000):
        sel = sorted(rng.sample(range(120), rng.randint(0, 40)))
        tau = rng.randint(0, 8)
        got = [(s.start_idx, s.end_idx) for s in merge_frames(sel, tau)]
        bad += got != merge_oracle(sel, tau)
    dt = time.perf_counter() - t0
    return bad == 0 and dt < 5.0, f"{1000 - bad}/1000 index sets equal brute force (tau 0..8), {dt:.2f}s (< 5s)"


def test_merge_oracle(capsys):
    report(capsys, "merge_frames vs brute force", *check_merge())


# --- high-frame selection -----------------------------------------------------

def check_select():
    rng = random.Random(15)
    bad = 0
    binned_checked = 0
    for _ in range(500):
        scores = [rng.random() for _ in range(rng.randint(1, 100))]
        bins = rng.randint(1, 12)
        top = rng.randint(1, bins)
        lo, hi = min(scores), max(scores)
        cut = lo + (bins - top) / bins * (hi - lo)
        expected = [i for i, s in enumerate(scores) if s >= cut] if hi > lo else list(range(len(scores)))
        got = select_high_frames(scores, bins, top)
        bad += got != expected
        width = (hi - lo) / bins if hi > lo else 1.0
        near_edge = any(abs((s - lo) / width - round((s - lo) / width)) < 1e-9 for s in scores if lo < s < hi)
        if not near_edge:
            binned_checked += 1
            bad += got != cutoff_oracle(scores, bins, top)
    const_ok = all(select_high_frames([c] * n, 10, 8) == list(range(n)) for c, n in ((0.0, 1), (0.4, 7), (1.0, 50)))
    ok = bad == 0 and const_ok
    return ok, (f"500 random series match the cutoff formula exactly ({binned_checked} also match explicit binning), "
                f"constant series select all {'ok' if const_ok else 'BROKEN'}")


def test_select_high_frames(capsys):
    report(capsys, "select_high_frames", *check_select())


# --- metric fixture ----------------------------------------------------------

def check_metric_fixture():
    fx = json.loads((DATA / "metric_fixture.json").read_text())
    preds, gts, sal = {}, {}, {}
    for q in fx["queries"]:
        preds[q["qid"]] = [(TimeSpan(s, e), sc) for s, e, sc in q["pred"]]
        gts[q["qid"]] = GroundTruth(q["qid"], tuple(TimeSpan(s, e) for s, e in q["gt"]), tuple(q["labels"]))
        sal[q["qid"]] = q["saliency"]
    row = evaluate(preds, gts, saliency=sal).table_row()
    diffs = {k: round(row[k], 2) for k, v in fx["expected"].items() if round(row[k], 2) != v}
    detail = ", ".join(f"{k}={round(row[k], 2):.2f}" for k in fx["expected"])
    return not diffs, f"{detail} (exact to 2 dp){'; mismatched ' + str(diffs) if diffs else ''}"


def test_metric_fixture(capsys):
    report(capsys, "5-query metric fixture", *check_metric_fixture())


# --- R1 monotonicity ---------------------------------------------------------

def check_r1_monotone():
    rng = random.Random(16)
    ts = [i / 20 for i in range(1, 20)]
    bad = 0
    for _ in range(100):
        preds, gts = {}, {}
        for i in range(rng.randint(1, 15)):
            q = f"q{i}"
            a = rng.uniform(0, 100)
            gts[q] = GroundTruth(q, (TimeSpan(a, a + rng.uniform(1, 40)),))
            b = a + rng.uniform(-20, 20)
            preds[q] = [(TimeSpan(max(0.0, b), max(0.0, b) + rng.uniform(1, 40)), 1.0)]
        vals = [recall_at_1(preds, gts, t) for t in ts]
        bad += any(x < y for x, y in zip(vals, vals[1:]))
    return bad == 0, f"R1@t non-increasing over t in 0.05..0.95 on {100 - bad}/100 random sets"


def test_r1_monotone(capsys):
    report(capsys, "R1 monotonicity", *check_r1_monotone())


# --- end to end --------------------------------------------------------------

def check_end_to_end():
    with tempfile.TemporaryDirectory() as tmp:
        outs = []
        for name in ("a", "b"):
            with contextlib.redirect_stdout(io.StringIO()):
                code = cli_main(["run", "--dataset", "synthetic", "--seed", "0", "--out", f"{tmp}/{name}"])
            if code != 0:
                return False, f"run exited {code}"
            outs.append(Path(tmp, name, "predictions.jsonl").read_bytes())
        identical = outs[0] == outs[1]
        first = json.loads(outs[0].decode().splitlines()[0])
        s, e, _ = first["pred_relevant_windows"][0]
        # planted frames 40..60 at 0.5 fps cover [80 s, 122 s)
        iou = temporal_iou(TimeSpan(s, e), TimeSpan(40 / 0.5, 61 / 0.5))
    ok = identical and iou >= 0.7
    return ok, f"byte-identical predictions {identical}, top-1 [{s}, {e}] IoU with frames [40,60] = {iou:.3f} (>= 0.7)"


def test_end_to_end_determinism(capsys):
    report(capsys, "end-to-end mock run", *check_end_to_end())


# --- affine invariance -------------------------------------------------------

def check_affine():
    rng = random.Random(17)
    cfg = PipelineConfig()
    bad = 0
    for _ in range(100):
        n = rng.randint(2, 150)
        s = np.array([rng.random() for _ in range(n)])
        a, b = rng.uniform(0.2, 5.0), rng.uniform(-1.0, 1.0)
        t = a * s + b
        sel_s = select_high_frames(s, cfg.histogram_bins, cfg.histogram_top_bins)
        sel_t = select_high_frames(t, cfg.histogram_bins, cfg.histogram_top_bins)
        spans = merge_frames(sel_s, cfg.merge_gap)
        rank_s = sorted(range(len(spans)), key=lambda i: (-span_mean(s, spans[i]), i))
        rank_t = sorted(range(len(spans)), key=lambda i: (-span_mean(t, spans[i]), i))
        bad += sel_s != sel_t or rank_s != rank_t
    return bad == 0, f"selection and mu-ranking unchanged under a*S+b (a>0) on {100 - bad}/100 series"


def test_affine_invariance(capsys):
    report(capsys, "positive affine invariance", *check_affine())


# --- defaults / documented targets -------------------------------------------

PUBLISHED_DEFAULTS = {"fps": 0.5, "top_k_percent": 10, "num_rewrites": 3, "merge_gap": 6, "bottom_percent": 20,
                  "length_weight": 0.3, "nms_iou": 0.9, "histogram_bins": 10, "histogram_top_bins": 8}
REAL_PROVIDER_TARGETS = {"R1@0.5": 61.94, "R1@0.7": 41.81, "mAP@avg": 39.12}


def check_defaults():
    got = PipelineConfig().to_dict()
    diffs = {k: (got[k], v) for k, v in PUBLISHED_DEFAULTS.items() if got[k] != v}
    targets = ", ".join(f"{k}~{v}" for k, v in REAL_PROVIDER_TARGETS.items())
    return not diffs, (f"defaults {'match' if not diffs else 'differ ' + str(diffs)}; "
                       f"QVHighlights val targets with real providers ({targets}) are documented, not run here")


def test_defaults_and_documented_targets(capsys):
    report(capsys, "default hyperparameters", *check_defaults())


CHECKS = [
    ("frame score (mean of 2m similarity terms)", check_frame_score),
    ("span score ((1-lambda)*mu + lambda*rho)", check_span_score),
    ("NMS vs reference", check_nms),
    ("merge_frames vs brute force", check_merge),
    ("select_high_frames", check_select),
    ("5-query metric fixture", check_metric_fixture),
    ("R1 monotonicity", check_r1_monotone),
    ("end-to-end mock run", check_end_to_end),
    ("positive affine invariance", check_affine),
    ("default hyperparameters", check_defaults),
]

if __name__ == "__main__":
    failed = 0
    for name, fn in CHECKS:
        ok, detail = fn()
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    sys.exit(1 if failed else 0)
