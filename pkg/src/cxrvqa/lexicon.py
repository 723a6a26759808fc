"""Abnormality/attribute keyword tables and span matching over report text.

The bundled default tables live in ``data/abnormalities.txt`` and
``data/attributes.txt``. Matching is deterministic, longest-first, and
anchored at word boundaries, so "effusions" never half-matches as
"effusion".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_ABNORMALITIES = DATA_DIR / "abnormalities.txt"
DEFAULT_ATTRIBUTES = DATA_DIR / "attributes.txt"

ATTRIBUTE_ROLES = ("level", "location_pre", "location_post", "type")

# Display name per abnormality id, used for question/answer rendering and
# as the disease node name in the knowledge graphs.
CANONICAL_NAMES = {
    0: "pleural effusion",
    1: "atelectasis",
    2: "cardiomegaly",
    3: "enlargement of the cardiac silhouette",
    4: "edema",
    5: "hernia",
    6: "vascular congestion",
    7: "hilar congestion",
    8: "pneumothorax",
    9: "heart failure",
    10: "lung opacity",
    11: "pneumonia",
    12: "tortuosity of the descending aorta",
    13: "scoliosis",
    14: "gastric distention",
    15: "hypoxemia",
    16: "hypertensive heart disease",
    17: "hematoma",
    18: "tortuosity of the thoracic aorta",
    19: "pulmonary contusion",
    20: "emphysema",
    21: "granuloma",
    22: "calcification",
    23: "pleural thickening",
    24: "thymoma",
    25: "blunting of the costophrenic angle",
    26: "consolidation",
    27: "fracture",
    28: "pneumomediastinum",
    29: "air collection",
}


class LexiconError(ValueError):
    """Raised when a lexicon file violates the format or an invariant."""


@dataclass(frozen=True)
class AbnormalityEntry:
    """One abnormality with its synonym list, longest synonym first."""

    id: int
    synonyms: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.id < 0:
            raise LexiconError(f"negative abnormality id {self.id}")
        if not self.synonyms:
            raise LexiconError(f"abnormality {self.id} has no synonyms")
        for syn in self.synonyms:
            if not syn:
                raise LexiconError(f"abnormality {self.id} has an empty synonym")


@dataclass(frozen=True)
class AttributeLexicon:
    """Phrase lists for the four attribute roles."""

    levels: tuple[str, ...] = ()
    locations_pre: tuple[str, ...] = ()
    locations_post: tuple[str, ...] = ()
    types: tuple[str, ...] = ()

    def phrases(self, role: str) -> tuple[str, ...]:
        if role == "level":
            return self.levels
        if role == "location_pre":
            return self.locations_pre
        if role == "location_post":
            return self.locations_post
        if role == "type":
            return self.types
        raise LexiconError(f"unknown attribute role {role!r}")


@dataclass(frozen=True)
class Lexicon:
    abnormalities: tuple[AbnormalityEntry, ...]
    attributes: AttributeLexicon
    # synonym -> abnormality id, for direct lookups
    synonym_ids: dict[str, int] = field(default_factory=dict, compare=False)

    def entry(self, abnormality_id: int) -> AbnormalityEntry:
        return self.abnormalities[abnormality_id]

    def canonical_name(self, abnormality_id: int) -> str:
        return CANONICAL_NAMES[abnormality_id]

    @property
    def ids(self) -> list[int]:
        return [e.id for e in self.abnormalities]


def _sort_longest_first(phrases: Iterable[str]) -> tuple[str, ...]:
    # Longest first so no earlier synonym is a proper substring of a later
    # one; ties stay in file order (sort is stable).
    seen: list[str] = []
    for p in phrases:
        if p not in seen:
            seen.append(p)
    return tuple(sorted(seen, key=len, reverse=True))


def load_abnormalities(path: str | Path = DEFAULT_ABNORMALITIES) -> tuple[AbnormalityEntry, ...]:
    entries: dict[int, AbnormalityEntry] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "|" not in line:
            raise LexiconError(f"{path}:{lineno}: expected 'id|synonyms', got {line!r}")
        id_part, syn_part = line.split("|", 1)
        try:
            abn_id = int(id_part)
        except ValueError as exc:
            raise LexiconError(f"{path}:{lineno}: bad id {id_part!r}") from exc
        if abn_id in entries:
            raise LexiconError(f"{path}:{lineno}: duplicate id {abn_id}")
        synonyms = [s.strip() for s in syn_part.split(";")]
        if any(not s for s in synonyms):
            raise LexiconError(f"{path}:{lineno}: empty synonym for id {abn_id}")
        entries[abn_id] = AbnormalityEntry(abn_id, _sort_longest_first(synonyms))
    ids = sorted(entries)
    if ids != list(range(len(ids))):
        raise LexiconError(f"{path}: abnormality ids not contiguous from 0: {ids}")
    return tuple(entries[i] for i in ids)


def load_attributes(path: str | Path = DEFAULT_ATTRIBUTES) -> AttributeLexicon:
    by_role: dict[str, list[str]] = {role: [] for role in ATTRIBUTE_ROLES}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "|" not in line:
            raise LexiconError(f"{path}:{lineno}: expected 'role|phrase', got {line!r}")
        role, phrase = line.split("|", 1)
        role, phrase = role.strip(), phrase.strip()
        if role not in by_role:
            raise LexiconError(f"{path}:{lineno}: unknown role {role!r}")
        if not phrase:
            raise LexiconError(f"{path}:{lineno}: empty phrase")
        by_role[role].append(phrase)
    # Role-disjointness: a phrase may not appear under two roles.
    for role_a in ATTRIBUTE_ROLES:
        for role_b in ATTRIBUTE_ROLES:
            if role_a >= role_b:
                continue
            shared = set(by_role[role_a]) & set(by_role[role_b])
            if shared:
                raise LexiconError(
                    f"{path}: phrases in both {role_a} and {role_b}: {sorted(shared)}"
                )
    return AttributeLexicon(
        levels=_sort_longest_first(by_role["level"]),
        locations_pre=_sort_longest_first(by_role["location_pre"]),
        locations_post=_sort_longest_first(by_role["location_post"]),
        types=_sort_longest_first(by_role["type"]),
    )


def load_lexicon(
    abnormalities_path: str | Path = DEFAULT_ABNORMALITIES,
    attributes_path: str | Path = DEFAULT_ATTRIBUTES,
) -> Lexicon:
    """Load both keyword tables and build the combined lexicon."""
    abnormalities = load_abnormalities(abnormalities_path)
    attributes = load_attributes(attributes_path)
    synonym_ids: dict[str, int] = {}
    for entry in abnormalities:
        for syn in entry.synonyms:
            synonym_ids.setdefault(syn, entry.id)
    return Lexicon(abnormalities, attributes, synonym_ids)


def _is_word_char(ch: str) -> bool:
    return ch.isalnum()


def _boundary_ok(text: str, start: int, end: int) -> bool:
    """A match must begin and end at word-character transitions."""
    if start > 0 and _is_word_char(text[start - 1]) and _is_word_char(text[start]):
        return False
    if end < len(text) and _is_word_char(text[end - 1]) and _is_word_char(text[end]):
        return False
    return True


def _match_phrases(
    text: str, candidates: list[tuple[str, int]]
) -> list[tuple[tuple[int, int], int]]:
    """Greedy longest-match scan over ``text``.

    ``candidates`` are (phrase, key) pairs; at each position the longest
    phrase matching at a word boundary wins, equal lengths broken by the
    candidate order. Returns non-overlapping ((start, end), key) spans.
    """
    out: list[tuple[tuple[int, int], int]] = []
    n = len(text)
    pos = 0
    while pos < n:
        if not _is_word_char(text[pos]):
            pos += 1
            continue
        best: tuple[int, int] | None = None  # (length, key)
        for phrase, key in candidates:
            end = pos + len(phrase)
            if end > n or not text.startswith(phrase, pos):
                continue
            if not _boundary_ok(text, pos, end):
                continue
            if best is None or len(phrase) > best[0]:
                best = (len(phrase), key)
        if best is not None:
            length, key = best
            out.append(((pos, pos + length), key))
            pos += length
        else:
            # skip the rest of this word
            while pos < n and _is_word_char(text[pos]):
                pos += 1
    return out


def match_abnormalities(text: str, lex: Lexicon) -> list[tuple[tuple[int, int], int]]:
    """Find abnormality keyword spans in a lowercase sentence.

    Returns non-overlapping ((start, end), abnormality_id) pairs in text
    order. Longest synonym wins at each position; equal-length ties go to
    the lower id.
    """
    candidates: list[tuple[str, int]] = []
    for entry in lex.abnormalities:  # id order = tie-break order
        for syn in entry.synonyms:
            candidates.append((syn, entry.id))
    return _match_phrases(text, candidates)


def match_attribute(text: str, role: str, lex: Lexicon) -> list[tuple[tuple[int, int], str]]:
    """Find attribute keyword spans for one role; returns ((start, end), phrase)."""
    phrases = lex.attributes.phrases(role)
    matches = _match_phrases(text, [(p, i) for i, p in enumerate(phrases)])
    return [(span, phrases[key]) for span, key in matches]
