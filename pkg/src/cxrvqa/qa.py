"""Question-answer pair generation from KeyInfo records.

Six question families (abnormality, presence, view, location, level,
type) rendered from per-study templates, plus answer-vocabulary
construction, the sequential 8:1:1 split, per-type statistics, and the
human-validation sampling harness.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lexicon import CANONICAL_NAMES, Lexicon
from .reports import KeyInfoRecord, Report

QTYPES = ("abnormality", "presence", "view", "location", "level", "type")

SIDE_PHRASES = {"left", "right", "left-sided", "right-sided", "bilateral"}
LEFT_PHRASES = {"left", "left-sided", "bilateral"}
RIGHT_PHRASES = {"right", "right-sided", "bilateral"}


@dataclass(frozen=True)
class QAPair:
    study_id: str
    qtype: str
    question: str
    answers: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.qtype not in QTYPES:
            raise ValueError(f"unknown question type {self.qtype!r}")
        if not self.answers:
            raise ValueError("answers must be non-empty")


@dataclass(frozen=True)
class AnswerVocabulary:
    labels: tuple[str, ...]
    counts: dict[str, int] = field(compare=False, default_factory=dict)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[QAPair, ...]
    val: tuple[QAPair, ...]
    test: tuple[QAPair, ...]


@dataclass(frozen=True)
class QaConfig:
    """Per-study emission policy knobs."""

    max_negative_presence: int = 3
    # ids eligible for sampled "no" presence questions; None = whole lexicon
    negative_pool: tuple[int, ...] | None = None


def generate_qa(
    record: KeyInfoRecord,
    report: Report,
    lex: Lexicon,
    seed: int = 0,
    cfg: QaConfig | None = None,
) -> list[QAPair]:
    """Render all QA pairs for one study; deterministic per seed.

    Every answer is reconstructible from the record (plus the report's
    view metadata). View questions are skipped when the view is unknown.
    """
    cfg = cfg or QaConfig()
    rng = np.random.default_rng((seed, _stable_hash(record.study_id)))
    pairs: list[QAPair] = []
    sid = record.study_id
    present = record.present_ids()
    negated = record.absent_ids()

    # --- abnormality ---
    if present:
        names = tuple(CANONICAL_NAMES[i] for i in present)
        pairs.append(QAPair(sid, "abnormality", "what abnormalities are seen in the image?", names))
    pairs.append(
        QAPair(sid, "abnormality", "is this image normal?", ("yes",) if record.is_normal else ("no",))
    )

    # --- presence ---
    for abn_id in present:
        pairs.append(
            QAPair(sid, "presence", f"is there {CANONICAL_NAMES[abn_id]}?", ("yes",))
        )
    n_negatives = min(max(1, len(present)), cfg.max_negative_presence)
    negative_ids = list(negated[:n_negatives])
    if len(negative_ids) < n_negatives:
        pool = cfg.negative_pool if cfg.negative_pool is not None else tuple(CANONICAL_NAMES)
        candidates = sorted(set(pool) - set(present) - set(negative_ids))
        if candidates:
            extra = rng.choice(
                np.array(candidates), size=min(n_negatives - len(negative_ids), len(candidates)), replace=False
            )
            negative_ids.extend(int(x) for x in extra)
    for abn_id in negative_ids:
        pairs.append(
            QAPair(sid, "presence", f"is there {CANONICAL_NAMES[abn_id]}?", ("no",))
        )

    # --- view ---
    if report.view != "unknown":
        pairs.append(QAPair(sid, "view", "which view is this image taken?", (report.view,)))
        closed = "pa" if rng.random() < 0.5 else "ap"
        answer = "yes" if report.view == closed else "no"
        pairs.append(QAPair(sid, "view", f"is this {closed} view?", (answer,)))

    # --- location / level / type, one per finding carrying the attribute ---
    asked: set[tuple[str, int]] = set()
    for f in record.findings:
        if not f.present:
            continue
        abn = CANONICAL_NAMES[f.abnormality_id]
        locations = tuple(p for p in (f.location_pre, f.location_post) if p)
        if locations and ("location", f.abnormality_id) not in asked:
            asked.add(("location", f.abnormality_id))
            pairs.append(QAPair(sid, "location", f"where is the {abn}?", locations))
            if f.location_pre in SIDE_PHRASES:
                side = "left" if rng.random() < 0.5 else "right"
                yes = f.location_pre in (LEFT_PHRASES if side == "left" else RIGHT_PHRASES)
                pairs.append(
                    QAPair(
                        sid,
                        "location",
                        f"is the {abn} located on the {side}?",
                        ("yes",) if yes else ("no",),
                    )
                )
        if f.level and ("level", f.abnormality_id) not in asked:
            asked.add(("level", f.abnormality_id))
            pairs.append(QAPair(sid, "level", f"what level is the {abn}?", (f.level,)))
        if f.ab_type and ("type", f.abnormality_id) not in asked:
            asked.add(("type", f.abnormality_id))
            pairs.append(QAPair(sid, "type", f"what type is the {abn}?", (f.ab_type,)))
    return pairs


def _stable_hash(s: str) -> int:
    h = 2166136261
    for ch in s.encode("utf-8"):
        h = (h ^ ch) * 16777619 % (1 << 32)
    return h


def build_vocabulary(
    pairs: list[QAPair], min_count: int = 2
) -> tuple[AnswerVocabulary, list[QAPair]]:
    """Drop answers rarer than ``min_count``; drop pairs left with none.

    Vocabulary is ordered by descending count, then lexicographically.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for pair in pairs:
        counts.update(pair.answers)
    kept = {label for label, c in counts.items() if c >= min_count}
    labels = tuple(sorted(kept, key=lambda l: (-counts[l], l)))
    filtered: list[QAPair] = []
    for pair in pairs:
        answers = tuple(a for a in pair.answers if a in kept)
        if answers:
            filtered.append(QAPair(pair.study_id, pair.qtype, pair.question, answers))
    vocab = AnswerVocabulary(labels, {l: counts[l] for l in labels})
    return vocab, filtered


def split_dataset(pairs: list[QAPair]) -> DatasetSplit:
    """Sequential 8:1:1 split by study: floor(0.8n) / floor(0.1n) / rest."""
    study_order: list[str] = []
    by_study: dict[str, list[QAPair]] = {}
    for pair in pairs:
        if pair.study_id not in by_study:
            study_order.append(pair.study_id)
            by_study[pair.study_id] = []
        by_study[pair.study_id].append(pair)
    n = len(study_order)
    if n < 10:
        raise ValueError(f"need at least 10 studies to split 8:1:1, got {n}")
    n_train = int(0.8 * n)
    n_val = int(0.1 * n)
    train_ids = study_order[:n_train]
    val_ids = study_order[n_train : n_train + n_val]
    test_ids = study_order[n_train + n_val :]

    def _collect(ids: list[str]) -> tuple[QAPair, ...]:
        out: list[QAPair] = []
        for sid in ids:
            out.extend(by_study[sid])
        return tuple(out)

    return DatasetSplit(_collect(train_ids), _collect(val_ids), _collect(test_ids))


def dataset_stats(pairs: list[QAPair]) -> dict[str, int]:
    stats = {qtype: 0 for qtype in QTYPES}
    for pair in pairs:
        stats[pair.qtype] += 1
    return stats


def sample_for_validation(
    pairs: list[QAPair],
    n: int,
    seed: int,
    reports: dict[str, Report] | None = None,
    records: dict[str, KeyInfoRecord] | None = None,
) -> list[dict]:
    """Uniform sample without replacement for human review.

    Each row carries the question, answers, and (when the source report
    and record are supplied) the report text plus the evidence span of
    the finding the question is about.
    """
    if n > len(pairs):
        raise ValueError(f"sample size {n} exceeds {len(pairs)} pairs")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(pairs), size=n, replace=False) if n else np.array([], dtype=int)
    rows = []
    for i in sorted(int(j) for j in idx):
        pair = pairs[i]
        row = {
            "study_id": pair.study_id,
            "qtype": pair.qtype,
            "question": pair.question,
            "answers": list(pair.answers),
            "report_text": None,
            "evidence": None,
        }
        if reports and pair.study_id in reports:
            row["report_text"] = reports[pair.study_id].text
        if records and pair.study_id in records:
            row["evidence"] = _evidence_for(pair, records[pair.study_id])
        rows.append(row)
    return rows


def _evidence_for(pair: QAPair, record: KeyInfoRecord) -> list[int] | None:
    for abn_id, name in CANONICAL_NAMES.items():
        if name in pair.question:
            for f in record.findings:
                if f.abnormality_id == abn_id:
                    return list(f.evidence)
    if record.findings:
        return list(record.findings[0].evidence)
    return None


def qa_to_json(pair: QAPair) -> dict:
    return {
        "study_id": pair.study_id,
        "qtype": pair.qtype,
        "question": pair.question,
        "answers": list(pair.answers),
    }


def qa_from_json(obj: dict) -> QAPair:
    return QAPair(obj["study_id"], obj["qtype"], obj["question"], tuple(obj["answers"]))


def write_vocabulary(vocab: AnswerVocabulary, path: str | Path) -> None:
    Path(path).write_text("".join(f"{label}\n" for label in vocab.labels), encoding="utf-8")


def read_vocabulary(path: str | Path) -> AnswerVocabulary:
    labels = tuple(
        line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()
    )
    return AnswerVocabulary(labels)
