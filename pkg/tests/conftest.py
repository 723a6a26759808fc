import numpy as np
import pytest

from cxrvqa.fixtures import FixtureConfig, FixtureStore, synth_fixtures
from cxrvqa.kg import build_cooccurrence, load_anatomical_kg, merge_kgs, write_kg
from cxrvqa.lexicon import load_lexicon
from cxrvqa.model import ModelConfig, VqaModel, fit_token_vocab
from cxrvqa.qa import QaConfig, build_vocabulary, generate_qa
from cxrvqa.reports import SynthConfig, synth_corpus

SERVICE_POOL = (0, 2, 4, 8)
SERVICE_QUESTIONS = [
    "is there any evidence of cardiomegaly in this image?",
    "is there pleural effusion?",
    "where is the atelectasis?",
    "what level is the edema?",
    "is this image normal?",
    "which view is this image taken?",
]


@pytest.fixture(scope="session")
def service_world(tmp_path_factory):
    """Deterministic corpus, fixtures on disk, KG file, and a tiny model."""
    root = tmp_path_factory.mktemp("service_world")
    lex = load_lexicon()
    synth_cfg = SynthConfig(
        abnormality_ids=SERVICE_POOL,
        levels=("small", "moderate"),
        locations_pre=("left", "right"),
        locations_post=(),
        types=(),
        max_present=2,
        max_absent=1,
        p_normal=0.2,
    )
    corpus = synth_corpus(12, 21, lex, synth_cfg)
    pairs = []
    for rep, rec in corpus:
        pairs.extend(generate_qa(rec, rep, lex, seed=2, cfg=QaConfig(negative_pool=SERVICE_POOL)))
    vocab, filtered = build_vocabulary(pairs, min_count=1)
    fixtures = synth_fixtures(corpus, FixtureConfig(d_o=16), seed=4)
    fixture_dir = root / "fixtures"
    store = FixtureStore(fixture_dir)
    for roiset in fixtures.values():
        store.save(roiset)
    kg = merge_kgs(load_anatomical_kg(), build_cooccurrence([r for _, r in corpus], t=0.01))
    kg_path = root / "kg.txt"
    write_kg(kg, kg_path)
    config = ModelConfig(
        d_o=16, d=16, d_q=16, heads=2, layers=2, embed_fixed=16, embed_learned=16, seed=13
    )
    token_vocab = fit_token_vocab([p.question for p in filtered] + SERVICE_QUESTIONS)
    model = VqaModel(config, token_vocab, list(vocab.labels))
    checkpoint = root / "model"
    model.save(checkpoint)
    return {
        "root": root,
        "corpus": corpus,
        "fixture_dir": fixture_dir,
        "kg_path": kg_path,
        "checkpoint": checkpoint,
        "vocab": vocab,
        "pairs": filtered,
    }
