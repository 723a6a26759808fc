"""Acceptance suite: one test per criterion, each printing PASS on exit.

Criterion 8 trains the full synthetic end-to-end task and dominates the
runtime (a few minutes); everything else is seconds.
"""

import math
import time

import numpy as np
import pytest

from cxrvqa import autodiff as ad
from cxrvqa.autodiff import Tensor
from cxrvqa.fixtures import FixtureConfig, synth_fixtures
from cxrvqa.kg import build_cooccurrence, load_anatomical_kg, merge_kgs
from cxrvqa.lexicon import load_lexicon
from cxrvqa.metrics import auc_binary, auc_micro, evaluate_scores, top_answers
from cxrvqa.model import (
    ModelConfig,
    VqaModel,
    assemble_batch,
    fit_token_vocab,
    fuse_answers,
    prepare_study,
)
from cxrvqa.nn import finite_difference_check, lr_schedule
from cxrvqa.qa import QaConfig, build_vocabulary, generate_qa, split_dataset
from cxrvqa.relation_graphs import DEFAULT_SPATIAL_T, Roi, RoiSet, classify_spatial
from cxrvqa.reports import SynthConfig, extract_keyinfo, synth_corpus
from cxrvqa.training import (
    TrainConfig,
    evaluate_model,
    make_samples,
    prepare_studies,
    train,
)

pytestmark = pytest.mark.acceptance


def _report(criterion: str) -> None:
    print(f"\nACCEPTANCE {criterion}: PASS", flush=True)


# -------------------------------------------------------------------------
# 1. Parser round-trip
# -------------------------------------------------------------------------


def test_criterion_1_parser_round_trip():
    lex = load_lexicon()
    start = time.time()
    corpus = synth_corpus(1000, 1, lex)
    mismatches = sum(1 for report, truth in corpus if extract_keyinfo(report, lex) != truth)
    elapsed = time.time() - start
    assert mismatches == 0, f"{mismatches} of 1000 reports failed to round-trip"
    assert elapsed < 10.0, f"round-trip took {elapsed:.1f}s (budget 10s)"
    _report("1 parser-round-trip (1000 reports, exact, %.1fs)" % elapsed)


# -------------------------------------------------------------------------
# 2. Spatial oracle
# -------------------------------------------------------------------------


def _oracle_classify(box_i, box_j, t):
    xi, yi, wi, hi = box_i
    xj, yj, wj, hj = box_j
    if xi >= xj and yi >= yj and xi + wi <= xj + wj and yi + hi <= yj + hj:
        return 1
    if xj >= xi and yj >= yi and xj + wj <= xi + wi and yj + hj <= yi + hi:
        return 2
    ix = max(0.0, min(xi + wi, xj + wj) - max(xi, xj))
    iy = max(0.0, min(yi + hi, yj + hj) - max(yi, yj))
    inter = ix * iy
    union = wi * hi + wj * hj - inter
    if union > 0 and inter / union >= 0.5:
        return 3
    cxi, cyi, cxj, cyj = xi + wi / 2, yi + hi / 2, xj + wj / 2, yj + hj / 2
    if math.dist((cxi, cyi), (cxj, cyj)) > t:
        return 0
    angle = math.degrees(math.atan2(cyj - cyi, cxj - cxi)) % 360.0
    return 4 + min(7, int(angle // 45))


def test_criterion_2_spatial_oracle():
    rng = np.random.default_rng(20240515)
    t = DEFAULT_SPATIAL_T

    def random_box():
        x, y = rng.uniform(0.0, 0.8, 2)
        return (float(x), float(y), float(rng.uniform(0.01, 1 - x)), float(rng.uniform(0.01, 1 - y)))

    agreements = 0
    for _ in range(1000):
        bi, bj = random_box(), random_box()
        forward = classify_spatial(bi, bj, t)
        backward = classify_spatial(bj, bi, t)
        assert forward == _oracle_classify(bi, bj, t)
        assert backward == _oracle_classify(bj, bi, t)
        assert (forward == 1) == (backward == 2)
        assert (forward == 2) == (backward == 1)
        agreements += 1
    assert agreements == 1000
    _report("2 spatial-oracle (1000 pairs, 100% agreement + duality)")


# -------------------------------------------------------------------------
# 3. Co-occurrence oracle
# -------------------------------------------------------------------------


def test_criterion_3_cooccurrence_oracle():
    lex = load_lexicon()
    corpus = [rec for _, rec in synth_corpus(10_000, 13, lex)]
    t = 0.001
    kg = build_cooccurrence(corpus, t=t)
    counts: dict[tuple[int, int], int] = {}
    for record in corpus:
        ids = sorted(set(record.present_ids()))
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                counts[(ids[a], ids[b])] = counts.get((ids[a], ids[b]), 0) + 1
    expected = {pair: c / len(corpus) for pair, c in counts.items() if c / len(corpus) > t}
    assert kg.undirected_edge_count() == len(expected)
    for (i, j), c_ij in expected.items():
        ia = kg.node_index(lex.canonical_name(i))
        ib = kg.node_index(lex.canonical_name(j))
        stored = dict(kg.edges[(ia, ib)])[2]
        assert stored == c_ij  # both sides compute count/N in float64
        assert 0.0 <= stored <= 1.0
    _report(f"3 cooccurrence-oracle (10000 records, {len(expected)} edges, exact)")


# -------------------------------------------------------------------------
# 4. Gradient suite
# -------------------------------------------------------------------------


def test_criterion_4_full_model_gradients():
    start = time.time()
    rng = np.random.default_rng(42)
    kg = load_anatomical_kg()
    names = ["heart", "left lung", "right lung", "cardiomegaly", "pleural effusion"]
    rois = []
    for i in range(5):
        x, y = rng.uniform(0.05, 0.5, 2)
        w, h = rng.uniform(0.1, 0.3, 2)
        rois.append(Roi((x, y, min(w, 1 - x - 1e-3), min(h, 1 - y - 1e-3)), names[i], rng.normal(size=8)))
    roiset = RoiSet(image_id="gc-img", study_id="gc", rois=tuple(rois))
    config = ModelConfig(d_o=8, d=16, d_q=16, heads=2, layers=2,
                         embed_fixed=8, embed_learned=8, seed=3)
    questions = ["is there pleural effusion?", "what level is the edema?"]
    model = VqaModel(config, fit_token_vocab(questions), [f"answer{i}" for i in range(8)])
    study = prepare_study(roiset, kg, config.spatial_t)
    targets = np.zeros((2, 8))
    targets[0, 0] = targets[1, 3] = 1.0
    batch = assemble_batch([study, study], [model.token_ids(q) for q in questions], targets)
    err = finite_difference_check(lambda: model.loss(batch), model.store, max_coords=64)
    elapsed = time.time() - start
    assert err < 1e-4, f"gradient error {err:.3e}"
    assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s (budget 60s)"
    n_groups = len(model.store)
    _report(f"4 gradient-suite ({n_groups} parameter groups, max err {err:.2e}, {elapsed:.0f}s)")


# -------------------------------------------------------------------------
# 5. Attention invariants
# -------------------------------------------------------------------------


def test_criterion_5_attention_invariants():
    kg = load_anatomical_kg()
    rng = np.random.default_rng(314)
    config = ModelConfig(d_o=8, d=16, d_q=16, heads=2, layers=2,
                         embed_fixed=8, embed_learned=8, seed=5)
    questions = ["is there pleural effusion?", "is this image normal?"]
    model = VqaModel(config, fit_token_vocab(questions), ["yes", "no", "small", "left"])
    names = [n.name for n in kg.nodes]
    for trial in range(100):
        n = int(rng.integers(2, 7))
        rois = []
        for _ in range(n):
            x, y = rng.uniform(0.0, 0.7, 2)
            w = float(rng.uniform(0.05, 1 - x - 1e-6))
            h = float(rng.uniform(0.05, 1 - y - 1e-6))
            rois.append(Roi((float(x), float(y), w, h),
                            names[int(rng.integers(0, len(names)))], rng.normal(size=8)))
        roiset = RoiSet(image_id=f"t{trial}", study_id=f"t{trial}", rois=tuple(rois))
        study = prepare_study(roiset, kg, config.spatial_t)
        question = questions[trial % 2]
        batch = assemble_batch([study], [model.token_ids(question)])
        logits, attn = model.forward(batch)
        for modality, layers in attn.items():
            for matrix in layers:
                a = matrix[0]
                np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-12)
                if modality == "implicit":
                    assert np.all(np.diag(a) == 0.0)
                else:
                    allowed = study.masks[modality]["nbr"] != 0
                    assert np.all(a[~allowed] == 0.0)
        # degenerate fusion must be bit-equal to the implicit head
        x = Tensor(rng.normal(size=(1, 4)))
        assert fuse_answers(x, Tensor(rng.normal(size=(1, 4))), Tensor(rng.normal(size=(1, 4))), 0.0, 0.0) is x
        # permutation equivariance of the fused logits
        perm = rng.permutation(n)
        permuted = RoiSet(
            image_id=roiset.image_id, study_id=roiset.study_id,
            rois=tuple(roiset.rois[i] for i in perm),
        )
        p_batch = assemble_batch([prepare_study(permuted, kg, config.spatial_t)],
                                 [model.token_ids(question)])
        p_logits, _ = model.forward(p_batch)
        np.testing.assert_allclose(p_logits.data, logits.data, atol=1e-10)
    _report("5 attention-invariants (100 random configurations)")


# -------------------------------------------------------------------------
# 6. Learning-rate schedule
# -------------------------------------------------------------------------


def test_criterion_6_schedule():
    assert lr_schedule(1) == pytest.approx(0.0005)
    assert lr_schedule(4) == pytest.approx(0.002)
    assert lr_schedule(2) == pytest.approx(0.0005 + (0.002 - 0.0005) / 3)
    assert lr_schedule(3) == pytest.approx(0.0005 + 2 * (0.002 - 0.0005) / 3)
    warmup = [lr_schedule(e) for e in (1, 2, 3, 4)]
    diffs = np.diff(warmup)
    np.testing.assert_allclose(diffs, diffs[0])  # linear warm-up
    tail = [lr_schedule(e) for e in range(15, 60)]
    assert all(a >= b for a, b in zip(tail, tail[1:]))
    _report("6 lr-schedule (0.0005 @1, 0.002 @4, linear warm-up, decaying from 15)")


# -------------------------------------------------------------------------
# 7. AUC oracle
# -------------------------------------------------------------------------


def _pairwise_auc(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def test_criterion_7_auc_oracle():
    rng = np.random.default_rng(777)
    for trial in range(10):
        scores = rng.random(200)
        if trial % 2:
            scores = np.round(scores, 1)
        labels = (rng.random(200) > 0.5).astype(int)
        labels[0], labels[1] = 0, 1
        assert auc_binary(scores, labels) == pytest.approx(_pairwise_auc(scores, labels), abs=1e-9)
        assert auc_binary(np.exp(4 * scores), labels) == pytest.approx(
            auc_binary(scores, labels), abs=1e-12
        )
    matrix_scores = rng.random((200, 5))
    matrix_labels = (rng.random((200, 5)) > 0.6).astype(int)
    assert auc_micro(matrix_scores, matrix_labels) == pytest.approx(
        _pairwise_auc(matrix_scores.reshape(-1), matrix_labels.reshape(-1)), abs=1e-9
    )
    report = evaluate_scores(matrix_scores, matrix_labels)
    per_class = [
        _pairwise_auc(matrix_scores[:, k], matrix_labels[:, k])
        for k in range(5)
        if matrix_labels[:, k].min() != matrix_labels[:, k].max()
    ]
    assert report.auc_macro == pytest.approx(float(np.mean(per_class)), abs=1e-9)
    _report("7 auc-oracle (200-sample pairwise counting, 1e-9)")


# -------------------------------------------------------------------------
# 8. End-to-end synthetic task
# -------------------------------------------------------------------------


def test_criterion_8_end_to_end_synthetic_task():
    start = time.time()
    lex = load_lexicon()
    pool = (0, 2, 4, 8, 1, 10)
    synth_cfg = SynthConfig(
        abnormality_ids=pool,
        levels=("small", "mild", "moderate", "severe"),
        locations_pre=("left", "right"),
        locations_post=(),
        types=("linear", "patchy"),
        max_present=2,
        max_absent=1,
        p_normal=0.15,
        p_level=0.7,
        p_location=0.7,
        p_type=0.4,
    )
    corpus = synth_corpus(500, 11, lex, synth_cfg)
    pairs = []
    for report, record in corpus:
        pairs.extend(generate_qa(record, report, lex, seed=5, cfg=QaConfig(negative_pool=pool)))
    vocab, filtered = build_vocabulary(pairs, min_count=2)
    split = split_dataset(filtered)
    kg = merge_kgs(load_anatomical_kg(), build_cooccurrence([r for _, r in corpus], t=0.01))
    fixtures = synth_fixtures(corpus, FixtureConfig(d_o=64), seed=3)
    config = ModelConfig(d_o=64, d=64, d_q=64, heads=4, layers=2, seed=7)
    model = VqaModel(config, fit_token_vocab([p.question for p in filtered]), list(vocab.labels))
    studies = prepare_studies(fixtures, kg, config)
    history = train(model, split, vocab, studies, TrainConfig(epochs=20, batch_size=64, seed=1))
    test_samples = make_samples(split.test, vocab, model, studies)
    scores, labels = evaluate_model(model, test_samples, studies)
    report = evaluate_scores(scores, labels, list(vocab.labels))
    elapsed = time.time() - start

    # ablation direction is reported, not asserted (margins are in-noise at
    # this scale)
    single = {}
    for name, (a, b) in {"implicit": (0.0, 0.0), "spatial": (1.0, 0.0), "semantic": (0.0, 1.0)}.items():
        model.config.fusion_alpha, model.config.fusion_beta = a, b
        s, l = evaluate_model(model, test_samples, studies)
        single[name] = evaluate_scores(s, l, list(vocab.labels)).auc_micro
    model.config.fusion_alpha = model.config.fusion_beta = 1.0 / 3.0
    print(
        f"\n  combined micro {report.auc_micro:.4f} vs single-graph micro "
        + ", ".join(f"{k} {v:.4f}" for k, v in single.items()),
        flush=True,
    )

    assert len(history) == 20
    assert report.auc_micro >= 0.95, f"test micro-AUC {report.auc_micro:.4f} < 0.95"
    assert report.auc_macro >= 0.90, f"test macro-AUC {report.auc_macro:.4f} < 0.90"
    assert elapsed < 900, f"end-to-end run took {elapsed:.0f}s (budget 900s)"
    _report(
        f"8 end-to-end (500 studies, 20 epochs: micro {report.auc_micro:.4f}, "
        f"macro {report.auc_macro:.4f}, {elapsed:.0f}s)"
    )


# -------------------------------------------------------------------------
# 9. Overfit sanity
# -------------------------------------------------------------------------


def test_criterion_9_overfit_sanity():
    from cxrvqa.qa import DatasetSplit

    lex = load_lexicon()
    pool = (0, 2, 4, 8)
    synth_cfg = SynthConfig(abnormality_ids=pool, levels=("small", "moderate"),
                            locations_pre=("left", "right"), locations_post=(), types=(),
                            max_present=2, max_absent=1, p_normal=0.2)
    corpus = synth_corpus(12, 5, lex, synth_cfg)
    pairs = []
    for report, record in corpus:
        pairs.extend(generate_qa(record, report, lex, seed=1, cfg=QaConfig(negative_pool=pool)))
    vocab, filtered = build_vocabulary(pairs, min_count=2)
    kg = merge_kgs(load_anatomical_kg(), build_cooccurrence([r for _, r in corpus], t=0.01))
    fixtures = synth_fixtures(corpus, FixtureConfig(d_o=16), seed=2)
    config = ModelConfig(d_o=16, d=16, d_q=16, heads=2, layers=2,
                         embed_fixed=16, embed_learned=16, seed=9)
    model = VqaModel(config, fit_token_vocab([p.question for p in filtered]), list(vocab.labels))
    studies = prepare_studies(fixtures, kg, config)
    one_batch = DatasetSplit(tuple(filtered[:8]), (), ())
    cfg = TrainConfig(epochs=200, batch_size=8, seed=0, schedule="constant", lr=0.01, shuffle=False)
    history = train(model, one_batch, vocab, studies, cfg)
    losses = [h["train_loss"] for h in history]
    below_at = next((i + 1 for i, l in enumerate(losses) if l < 0.01), None)
    assert below_at is not None and below_at <= 200, f"loss never dropped below 0.01: min {min(losses):.4f}"
    _report(f"9 overfit-sanity (loss < 0.01 at step {below_at})")


# -------------------------------------------------------------------------
# 10. Service contract
# -------------------------------------------------------------------------


def test_criterion_10_service_contract(service_world):
    from fastapi.testclient import TestClient

    from cxrvqa.service import build_service, create_app

    service = build_service(
        service_world["checkpoint"], service_world["fixture_dir"], service_world["kg_path"]
    )
    client = TestClient(create_app(service))
    studies = client.get("/api/v1/studies")
    assert studies.status_code == 200
    study_id = studies.json()[0]["study_id"]
    detail = client.get(f"/api/v1/studies/{study_id}")
    assert detail.status_code == 200 and detail.json()["n"] >= 1
    created = client.post("/api/v1/sessions", json={"study_id": study_id})
    assert created.status_code == 201
    sid = created.json()["session_id"]
    ask = lambda q: client.post(f"/api/v1/sessions/{sid}/ask", json={"question": q})
    first = ask("is there any evidence of cardiomegaly in this image?")
    assert first.status_code == 200
    body = first.json()
    assert len(body["top_answers"]) <= 4
    assert all(a["score"] > 0.04 for a in body["top_answers"])
    second = ask("where is the atelectasis?")
    repeat = ask("where is the atelectasis?")
    assert second.json()["top_answers"] == repeat.json()["top_answers"]
    session = client.get(f"/api/v1/sessions/{sid}").json()
    assert [t["turn_index"] for t in session["turns"]] == [0, 1, 2]
    assert client.get("/api/v1/studies/ghost").status_code == 404
    # golden-file comparisons for all five endpoints live in test_service.py
    _report("10 service-contract (5 endpoints, top-4 rule, dense turns, deterministic)")
