"""Free-text report -> KeyInfo scene-graph extraction.

A report is segmented into sentences; abnormality keywords are matched per
sentence, negation cues flip the presence flag, and level/location/type
attributes are bound from token windows around each abnormality mention.
A seeded synthetic corpus generator renders reports from the same rule
family so the extraction can be tested by exact round-trip.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .lexicon import CANONICAL_NAMES, Lexicon, match_abnormalities, match_attribute

VIEWS = ("pa", "ap", "unknown")

DEFAULT_NEGATION_CUES = (
    "no",
    "without",
    "free of",
    "clear of",
    "resolved",
    "rule out",
    "negative for",
)
DEFAULT_SCOPE_BREAKS = ("but", ";")


@dataclass(frozen=True)
class Report:
    study_id: str
    image_ids: tuple[str, ...]
    view: str
    text: str

    def __post_init__(self) -> None:
        if not self.study_id:
            raise ValueError("study_id must be non-empty")
        if not self.image_ids:
            raise ValueError("report needs at least one image id")
        if self.view not in VIEWS:
            raise ValueError(f"view must be one of {VIEWS}, got {self.view!r}")


@dataclass(frozen=True)
class Finding:
    abnormality_id: int
    present: bool
    level: str | None = None
    location_pre: str | None = None
    location_post: str | None = None
    ab_type: str | None = None
    evidence: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class KeyInfoRecord:
    study_id: str
    findings: tuple[Finding, ...]

    @property
    def is_normal(self) -> bool:
        return not any(f.present for f in self.findings)

    def present_ids(self) -> list[int]:
        """Abnormality ids with a present finding, in evidence order."""
        out: list[int] = []
        for f in self.findings:
            if f.present and f.abnormality_id not in out:
                out.append(f.abnormality_id)
        return out

    def absent_ids(self) -> list[int]:
        present = set(self.present_ids())
        out: list[int] = []
        for f in self.findings:
            if not f.present and f.abnormality_id not in present and f.abnormality_id not in out:
                out.append(f.abnormality_id)
        return out


@dataclass(frozen=True)
class SceneGraph:
    """Typed nodes + (subject, relation, object) edges for one record."""

    nodes: tuple[tuple[str, str], ...]  # (kind, value); kind: abnormality|level|location|type
    edges: tuple[tuple[int, str, int], ...]  # (node index, relation, node index)
    # per-node finding payloads needed for exact reconstruction
    meta: tuple[dict, ...] = ()


@dataclass(frozen=True)
class ParserConfig:
    window_tokens: int = 6
    negation_cues: tuple[str, ...] = DEFAULT_NEGATION_CUES
    scope_breaks: tuple[str, ...] = DEFAULT_SCOPE_BREAKS


_SENTENCE_RE = re.compile(r"[.!?](?=\s|$)")
_TOKEN_RE = re.compile(r"[a-z0-9][a-z0-9'-]*")


def split_sentences(text: str) -> list[tuple[int, int]]:
    """(start, end) spans of sentences; the terminator stays inside the span."""
    spans: list[tuple[int, int]] = []
    start = 0
    for m in _SENTENCE_RE.finditer(text):
        end = m.end()
        if text[start:end].strip():
            spans.append((start, end))
        start = end
    if text[start:].strip():
        spans.append((start, len(text)))
    return spans


def _tokens(text: str, offset: int = 0) -> list[tuple[int, int, str]]:
    return [(m.start() + offset, m.end() + offset, m.group()) for m in _TOKEN_RE.finditer(text)]


def detect_negation(sentence: str, span: tuple[int, int], cfg: ParserConfig | None = None) -> bool:
    """True when the mention at ``span`` is asserted present.

    Absent iff a negation cue occurs before the span in the same sentence
    with no scope break ("but", ";") between the cue and the span.
    """
    cfg = cfg or ParserConfig()
    prefix = sentence[: span[0]]
    cue_end = -1
    for cue in cfg.negation_cues:
        for m in re.finditer(r"(?<![a-z0-9])" + re.escape(cue) + r"(?![a-z0-9])", prefix):
            cue_end = max(cue_end, m.end())
    if cue_end < 0:
        return True
    between = prefix[cue_end:]
    for brk in cfg.scope_breaks:
        if brk == ";":
            if ";" in between:
                return True
        elif re.search(r"(?<![a-z0-9])" + re.escape(brk) + r"(?![a-z0-9])", between):
            return True
    return False


def bind_attributes(
    sentence: str,
    ab_span: tuple[int, int],
    lex: Lexicon,
    cfg: ParserConfig | None = None,
    all_ab_spans: list[tuple[int, int]] | None = None,
) -> tuple[str | None, str | None, str | None, str | None]:
    """Bind (level, location_pre, location_post, type) for one mention.

    Level/type/location_pre are searched in ``cfg.window_tokens`` tokens
    before the mention, location_post after. Nearest match per role wins;
    a keyword shared by several mentions goes to the nearest one (ties to
    the earlier mention) -- callers pass ``all_ab_spans`` for that rule.
    """
    cfg = cfg or ParserConfig()
    spans = all_ab_spans if all_ab_spans is not None else [ab_span]
    assigned = assign_attributes(sentence, spans, lex, cfg)
    return assigned[spans.index(ab_span)]


def _token_distance(toks: list[tuple[int, int, str]], a: tuple[int, int], b: tuple[int, int]) -> int:
    """Number of tokens strictly between spans a and b (a before b)."""
    return sum(1 for ts, te, _ in toks if ts >= a[1] and te <= b[0])


def assign_attributes(
    sentence: str,
    ab_spans: list[tuple[int, int]],
    lex: Lexicon,
    cfg: ParserConfig,
) -> list[tuple[str | None, str | None, str | None, str | None]]:
    """Attribute binding for every abnormality mention of one sentence."""
    toks = _tokens(sentence)
    results: list[dict[str, tuple[str, int] | None]] = [
        {"level": None, "location_pre": None, "location_post": None, "type": None}
        for _ in ab_spans
    ]
    for role in ("level", "location_pre", "location_post", "type"):
        for attr_span, phrase in match_attribute(sentence, role, lex):
            # attribute keywords inside any abnormality mention are not free
            if any(attr_span[0] < e and s < attr_span[1] for s, e in ab_spans):
                continue
            before = role != "location_post"
            best: tuple[int, int] | None = None  # (distance, mention index)
            for idx, ab_span in enumerate(ab_spans):
                if before:
                    if attr_span[1] > ab_span[0]:
                        continue
                    dist = _token_distance(toks, attr_span, ab_span)
                else:
                    if attr_span[0] < ab_span[1]:
                        continue
                    dist = _token_distance(toks, ab_span, attr_span)
                if dist > cfg.window_tokens:
                    continue
                if best is None or dist < best[0]:
                    best = (dist, idx)
            if best is None:
                continue
            dist, idx = best
            current = results[idx][role]
            if current is None or dist < current[1]:
                results[idx][role] = (phrase, dist)
    out = []
    for r in results:
        out.append(
            tuple(r[role][0] if r[role] else None for role in ("level", "location_pre", "location_post", "type"))
        )
    return out


def extract_keyinfo(report: Report, lex: Lexicon, cfg: ParserConfig | None = None) -> KeyInfoRecord:
    """Extract the KeyInfo scene graph from one report.

    Deterministic; degenerate reports yield an empty finding list.
    """
    cfg = cfg or ParserConfig()
    text = report.text.lower()
    findings: list[Finding] = []
    for s_start, s_end in split_sentences(text):
        sentence = text[s_start:s_end]
        mentions = match_abnormalities(sentence, lex)
        # at most one finding per (abnormality, sentence): first mention wins
        seen_ids: set[int] = set()
        kept: list[tuple[tuple[int, int], int]] = []
        for span, abn_id in mentions:
            if abn_id in seen_ids:
                continue
            seen_ids.add(abn_id)
            kept.append((span, abn_id))
        if not kept:
            continue
        spans = [span for span, _ in kept]
        bound = assign_attributes(sentence, spans, lex, cfg)
        for (span, abn_id), (level, loc_pre, loc_post, ab_type) in zip(kept, bound):
            present = detect_negation(sentence, span, cfg)
            findings.append(
                Finding(
                    abnormality_id=abn_id,
                    present=present,
                    level=level,
                    location_pre=loc_pre,
                    location_post=loc_post,
                    ab_type=ab_type,
                    evidence=(s_start + span[0], s_start + span[1]),
                )
            )
    findings.sort(key=lambda f: f.evidence[0])
    return KeyInfoRecord(study_id=report.study_id, findings=tuple(findings))


def build_scene_graph(record: KeyInfoRecord) -> SceneGraph:
    """Findings -> typed node/edge graph; attribute nodes are per-finding."""
    nodes: list[tuple[str, str]] = []
    edges: list[tuple[int, str, int]] = []
    meta: list[dict] = []
    for f in record.findings:
        abn_idx = len(nodes)
        nodes.append(("abnormality", str(f.abnormality_id)))
        meta.append({"present": f.present, "evidence": list(f.evidence)})
        for relation, kind, value in (
            ("has_level", "level", f.level),
            ("has_location", "location", f.location_pre),
            ("has_location", "location", f.location_post),
            ("has_type", "type", f.ab_type),
        ):
            if value is None:
                continue
            attr_idx = len(nodes)
            nodes.append((kind, value))
            meta.append({})
            edges.append((abn_idx, relation, attr_idx))
    return SceneGraph(tuple(nodes), tuple(edges), tuple(meta))


def scene_graph_to_findings(graph: SceneGraph, lex: Lexicon) -> tuple[Finding, ...]:
    """Inverse of :func:`build_scene_graph` (exact reconstruction)."""
    findings: list[Finding] = []
    for idx, (kind, value) in enumerate(graph.nodes):
        if kind != "abnormality":
            continue
        info = graph.meta[idx]
        level = loc_pre = loc_post = ab_type = None
        for subj, relation, obj in graph.edges:
            if subj != idx:
                continue
            okind, ovalue = graph.nodes[obj]
            if relation == "has_level":
                level = ovalue
            elif relation == "has_type":
                ab_type = ovalue
            elif relation == "has_location":
                if ovalue in lex.attributes.locations_pre and loc_pre is None:
                    loc_pre = ovalue
                else:
                    loc_post = ovalue
        findings.append(
            Finding(
                abnormality_id=int(value),
                present=bool(info["present"]),
                level=level,
                location_pre=loc_pre,
                location_post=loc_post,
                ab_type=ab_type,
                evidence=tuple(info["evidence"]),
            )
        )
    findings.sort(key=lambda f: f.evidence[0])
    return tuple(findings)


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

NORMAL_SENTENCES = (
    "lungs are clear.",
    "the lungs are well expanded.",
    "cardiomediastinal contours are within normal limits.",
)

NEGATION_TEMPLATES = (
    "no {abn}.",
    "there is no {abn}.",
    "no evidence of {abn}.",
)


@dataclass(frozen=True)
class SynthConfig:
    """Controls the sampling pools of the synthetic report generator."""

    abnormality_ids: tuple[int, ...] = tuple(range(30))
    levels: tuple[str, ...] = ("small", "mild", "moderate", "severe", "minimal")
    locations_pre: tuple[str, ...] = ("left", "right", "bilateral", "retrocardiac")
    locations_post: tuple[str, ...] = (
        "the left lower lobe",
        "the right lower lobe",
        "the left upper lobe",
        "the right upper lobe",
        "the lung bases",
    )
    types: tuple[str, ...] = ("linear", "patchy", "focal", "interstitial")
    max_present: int = 3
    max_absent: int = 2
    p_normal: float = 0.2
    p_level: float = 0.6
    p_location: float = 0.6
    p_type: float = 0.3
    study_prefix: str = "synth"


def _surface_form(abn_id: int) -> str:
    # Canonical names are safe to embed in templates; arbitrary synonyms
    # could collide with attribute keywords or read ungrammatically.
    return CANONICAL_NAMES[abn_id]


def _render_present(
    finding_plan: dict, lex: Lexicon, rng: np.random.Generator
) -> tuple[str, int, dict]:
    """Render one present-finding sentence; returns (text, span offset of the
    abnormality surface inside the text, plan)."""
    abn = finding_plan["surface"]
    level = finding_plan["level"]
    loc_pre = finding_plan["location_pre"]
    loc_post = finding_plan["location_post"]
    ab_type = finding_plan["ab_type"]
    pre_words = [w for w in (level, loc_pre, ab_type) if w]
    # order before the keyword: level, location, type (nearest last)
    prefix = " ".join(pre_words)
    style = int(rng.integers(0, 2))
    if style == 0:
        lead = "there is a " if prefix else "there is "
        body = f"{lead}{prefix + ' ' if prefix else ''}{abn}"
        tail = f" in {loc_post}" if loc_post else ""
        sentence = f"{body}{tail}."
    else:
        body = f"{prefix + ' ' if prefix else ''}{abn}"
        tail = f" in {loc_post}" if loc_post else ""
        sentence = f"{body}{tail} is seen."
    offset = sentence.index(abn)
    return sentence, offset, finding_plan


def synth_corpus(
    n: int,
    seed: int,
    lex: Lexicon,
    cfg: SynthConfig | None = None,
) -> list[tuple[Report, KeyInfoRecord]]:
    """Generate ``n`` (report, ground-truth record) pairs, deterministic per seed.

    Every rendered report round-trips exactly through
    :func:`extract_keyinfo` on the default parser configuration.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(seed)
    out: list[tuple[Report, KeyInfoRecord]] = []
    for i in range(n):
        study_id = f"{cfg.study_prefix}-{i:06d}"
        view = "pa" if rng.random() < 0.5 else "ap"
        sentences: list[str] = []
        findings: list[Finding] = []
        if rng.random() < cfg.p_normal:
            sentences.append(NORMAL_SENTENCES[int(rng.integers(0, len(NORMAL_SENTENCES)))])
        else:
            n_present = int(rng.integers(1, cfg.max_present + 1))
            n_absent = int(rng.integers(0, cfg.max_absent + 1))
            ids = rng.permutation(np.array(cfg.abnormality_ids))[: n_present + n_absent]
            present_ids = [int(x) for x in ids[:n_present]]
            absent_ids = [int(x) for x in ids[n_present:]]
            for abn_id in present_ids:
                plan = {
                    "abn_id": abn_id,
                    "surface": _surface_form(abn_id),
                    "level": None,
                    "location_pre": None,
                    "location_post": None,
                    "ab_type": None,
                }
                if cfg.levels and rng.random() < cfg.p_level:
                    plan["level"] = str(cfg.levels[int(rng.integers(0, len(cfg.levels)))])
                if rng.random() < cfg.p_location:
                    pools = []
                    if cfg.locations_pre:
                        pools.append("pre")
                    if cfg.locations_post:
                        pools.append("post")
                    if pools:
                        which = pools[int(rng.integers(0, len(pools)))]
                        if which == "pre":
                            plan["location_pre"] = str(
                                cfg.locations_pre[int(rng.integers(0, len(cfg.locations_pre)))]
                            )
                        else:
                            plan["location_post"] = str(
                                cfg.locations_post[int(rng.integers(0, len(cfg.locations_post)))]
                            )
                if cfg.types and rng.random() < cfg.p_type:
                    plan["ab_type"] = str(cfg.types[int(rng.integers(0, len(cfg.types)))])
                sentence, abn_offset, plan = _render_present(plan, lex, rng)
                offset = sum(len(s) + 1 for s in sentences)
                findings.append(
                    Finding(
                        abnormality_id=plan["abn_id"],
                        present=True,
                        level=plan["level"],
                        location_pre=plan["location_pre"],
                        location_post=plan["location_post"],
                        ab_type=plan["ab_type"],
                        evidence=(offset + abn_offset, offset + abn_offset + len(plan["surface"])),
                    )
                )
                sentences.append(sentence)
            for abn_id in absent_ids:
                surface = _surface_form(abn_id)
                template = NEGATION_TEMPLATES[int(rng.integers(0, len(NEGATION_TEMPLATES)))]
                sentence = template.format(abn=surface)
                offset = sum(len(s) + 1 for s in sentences)
                abn_offset = sentence.index(surface)
                findings.append(
                    Finding(
                        abnormality_id=abn_id,
                        present=False,
                        evidence=(offset + abn_offset, offset + abn_offset + len(surface)),
                    )
                )
                sentences.append(sentence)
        text = " ".join(sentences)
        report = Report(
            study_id=study_id,
            image_ids=(f"{study_id}-img0",),
            view=view,
            text=text,
        )
        findings.sort(key=lambda f: f.evidence[0])
        out.append((report, KeyInfoRecord(study_id=study_id, findings=tuple(findings))))
    return out


# ---------------------------------------------------------------------------
# JSON-lines IO
# ---------------------------------------------------------------------------


def report_to_json(report: Report) -> dict:
    return {
        "study_id": report.study_id,
        "image_ids": list(report.image_ids),
        "view": report.view,
        "text": report.text,
    }


def report_from_json(obj: dict) -> Report:
    return Report(
        study_id=obj["study_id"],
        image_ids=tuple(obj["image_ids"]),
        view=obj.get("view", "unknown"),
        text=obj["text"],
    )


def record_to_json(record: KeyInfoRecord) -> dict:
    return {
        "study_id": record.study_id,
        "is_normal": record.is_normal,
        "findings": [
            {
                "abnormality_id": f.abnormality_id,
                "present": f.present,
                "level": f.level,
                "location_pre": f.location_pre,
                "location_post": f.location_post,
                "type": f.ab_type,
                "evidence": list(f.evidence),
            }
            for f in record.findings
        ],
    }


def record_from_json(obj: dict) -> KeyInfoRecord:
    return KeyInfoRecord(
        study_id=obj["study_id"],
        findings=tuple(
            Finding(
                abnormality_id=f["abnormality_id"],
                present=f["present"],
                level=f.get("level"),
                location_pre=f.get("location_pre"),
                location_post=f.get("location_post"),
                ab_type=f.get("type"),
                evidence=tuple(f.get("evidence", (0, 0))),
            )
            for f in obj["findings"]
        ),
    )


def write_jsonl(path: str | Path, objs: Iterator[dict] | list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
