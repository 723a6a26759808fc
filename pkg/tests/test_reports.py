import pytest
import numpy as np

from cxrvqa.lexicon import load_lexicon
from cxrvqa.reports import (
    KeyInfoRecord,
    ParserConfig,
    Report,
    SynthConfig,
    bind_attributes,
    build_scene_graph,
    detect_negation,
    extract_keyinfo,
    scene_graph_to_findings,
    split_sentences,
    synth_corpus,
)


@pytest.fixture(scope="module")
def lex():
    return load_lexicon()


def make_report(text, view="pa"):
    return Report(study_id="s0", image_ids=("s0-img",), view=view, text=text)


class TestReportType:
    def test_requires_study_id(self):
        with pytest.raises(ValueError):
            Report(study_id="", image_ids=("i",), view="pa", text="x")

    def test_requires_image(self):
        with pytest.raises(ValueError):
            Report(study_id="s", image_ids=(), view="pa", text="x")

    def test_unknown_view_allowed(self):
        assert make_report("x", view="unknown").view == "unknown"


class TestSentenceSplitting:
    def test_terminators(self):
        text = "one. two! three? four"
        spans = split_sentences(text)
        assert [text[a:b].strip() for a, b in spans] == ["one.", "two!", "three?", "four"]

    def test_abbreviation_like_period_without_space_stays(self):
        text = "a.b. stays together"
        assert len(split_sentences(text)) == 2  # split happens after "a.b."


class TestNegation:
    def test_no_before_span(self):
        s = "no pleural effusion"
        assert detect_negation(s, (3, 19)) is False

    def test_no_cue(self):
        s = "pleural effusion is present"
        assert detect_negation(s, (0, 16)) is True

    def test_scope_break_but(self):
        s = "no pneumothorax, but small effusion"
        span = (s.index("effusion"), s.index("effusion") + len("effusion"))
        assert detect_negation(s, span) is True

    def test_scope_break_semicolon(self):
        s = "no pneumothorax; small effusion"
        span = (s.index("effusion"), s.index("effusion") + len("effusion"))
        assert detect_negation(s, span) is True

    def test_cue_word_boundary(self):
        # "normal" contains "no" but is not a cue
        s = "normal effusion contour"
        span = (s.index("effusion"), s.index("effusion") + len("effusion"))
        assert detect_negation(s, span) is True

    def test_multiword_cue(self):
        s = "free of pleural effusion"
        span = (s.index("pleural"), s.index("pleural") + len("pleural effusion"))
        assert detect_negation(s, span) is False

    def test_cue_after_span_does_not_negate(self):
        s = "effusion was not expected"
        assert detect_negation(s, (0, 8)) is True


class TestAttributeBinding:
    def test_level_and_location_pre(self, lex):
        s = "small left pleural effusion"
        span = (s.index("pleural"), len(s))
        level, loc_pre, loc_post, ab_type = bind_attributes(s, span, lex)
        assert (level, loc_pre, loc_post, ab_type) == ("small", "left", None, None)

    def test_location_post(self, lex):
        s = "atelectasis in the left lower lobe"
        span = (0, len("atelectasis"))
        level, loc_pre, loc_post, ab_type = bind_attributes(s, span, lex)
        assert loc_post == "the left lower lobe"
        assert (level, loc_pre, ab_type) == (None, None, None)

    def test_bare_mention_has_no_attributes(self, lex):
        s = "pleural effusion"
        assert bind_attributes(s, (0, len(s)), lex) == (None, None, None, None)

    def test_window_limit(self, lex):
        cfg = ParserConfig(window_tokens=2)
        s = "small and very definitely truly chronic effusion"
        span = (s.index("effusion"), len(s))
        level, *_ = bind_attributes(s, span, lex, cfg)
        assert level is None  # "small" is 6 tokens away, window is 2

    def test_attribute_inside_other_mention_not_stolen(self, lex):
        # "lung" inside "lung opacity" must not become a location for edema
        r = make_report("lung opacity and edema.")
        rec = extract_keyinfo(r, lex)
        by_id = {f.abnormality_id: f for f in rec.findings}
        assert by_id[4].location_pre is None


class TestExtractKeyinfo:
    def test_spec_trace(self, lex):
        r = make_report("There is a small left pleural effusion. No pneumothorax.")
        rec = extract_keyinfo(r, lex)
        assert len(rec.findings) == 2
        effusion, pneumo = rec.findings
        assert (effusion.abnormality_id, effusion.present) == (0, True)
        assert (effusion.level, effusion.location_pre) == ("small", "left")
        assert (pneumo.abnormality_id, pneumo.present) == (8, False)
        assert rec.is_normal is False

    def test_clear_lungs_is_normal(self, lex):
        rec = extract_keyinfo(make_report("Lungs are clear."), lex)
        assert rec.findings == ()
        assert rec.is_normal is True

    def test_nearest_level_binds_per_abnormality(self, lex):
        r = make_report("Moderate pulmonary edema and moderate cardiomegaly.")
        rec = extract_keyinfo(r, lex)
        assert [(f.abnormality_id, f.level) for f in rec.findings] == [
            (4, "moderate"),
            (2, "moderate"),
        ]

    def test_findings_sorted_by_evidence(self, lex):
        r = make_report("Edema persists. Cardiomegaly is stable.")
        rec = extract_keyinfo(r, lex)
        starts = [f.evidence[0] for f in rec.findings]
        assert starts == sorted(starts)

    def test_evidence_spans_point_at_mentions(self, lex):
        r = make_report("There is a small left pleural effusion. No pneumothorax.")
        rec = extract_keyinfo(r, lex)
        text = r.text.lower()
        for f in rec.findings:
            assert text[f.evidence[0] : f.evidence[1]] in lex.entry(f.abnormality_id).synonyms

    def test_one_finding_per_abnormality_per_sentence(self, lex):
        r = make_report("effusion with layering pleural fluid.")
        rec = extract_keyinfo(r, lex)
        assert [f.abnormality_id for f in rec.findings] == [0]


class TestSceneGraph:
    def test_direct_mapping(self, lex):
        rec = extract_keyinfo(make_report("small pleural effusion."), lex)
        graph = build_scene_graph(rec)
        kinds = [k for k, _ in graph.nodes]
        assert kinds == ["abnormality", "level"]
        assert graph.edges == ((0, "has_level", 1),)

    def test_empty_record(self):
        graph = build_scene_graph(KeyInfoRecord("s", ()))
        assert graph.nodes == () and graph.edges == ()

    def test_attribute_nodes_not_shared(self, lex):
        r = make_report("left pleural effusion. left atelectasis.")
        rec = extract_keyinfo(r, lex)
        graph = build_scene_graph(rec)
        location_nodes = [i for i, (k, v) in enumerate(graph.nodes) if k == "location"]
        assert len(location_nodes) == 2

    def test_round_trip_identity(self, lex):
        corpus = synth_corpus(40, 5, lex)
        for _, rec in corpus:
            graph = build_scene_graph(rec)
            assert scene_graph_to_findings(graph, lex) == rec.findings


class TestSynthCorpus:
    def test_round_trip_holds(self, lex):
        for report, truth in synth_corpus(200, 7, lex):
            assert extract_keyinfo(report, lex) == truth

    def test_n_must_be_positive(self, lex):
        with pytest.raises(ValueError):
            synth_corpus(0, 1, lex)

    def test_study_ids_distinct(self, lex):
        corpus = synth_corpus(1000, 1, lex)
        assert len({r.study_id for r, _ in corpus}) == 1000

    def test_deterministic_per_seed(self, lex):
        a = synth_corpus(25, 3, lex)
        b = synth_corpus(25, 3, lex)
        assert a == b

    def test_is_normal_iff_no_present_finding(self, lex):
        for _, rec in synth_corpus(150, 9, lex):
            assert rec.is_normal == (not any(f.present for f in rec.findings))

    def test_restricted_pool(self, lex):
        cfg = SynthConfig(abnormality_ids=(0, 2))
        for _, rec in synth_corpus(50, 2, lex, cfg):
            assert all(f.abnormality_id in (0, 2) for f in rec.findings)
