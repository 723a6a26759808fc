"""Anatomical and disease co-occurrence knowledge graphs.

The anatomical graph ships as a bundled edge-list file (label 1); the
co-occurrence graph is counted from a KeyInfo corpus (label 2, weight =
normalized pair frequency). Merging keeps parallel edges with distinct
labels because the attention model learns per-label biases.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .lexicon import CANONICAL_NAMES
from .reports import KeyInfoRecord

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_ANATOMICAL_KG = DATA_DIR / "anatomical_kg.txt"

NODE_KINDS = ("anatomy", "disease")
LABEL_ANATOMICAL = 1
LABEL_COOCCURRENCE = 2


class KgError(ValueError):
    """Raised on malformed KG files or inconsistent merges."""


@dataclass(frozen=True)
class KGNode:
    name: str
    kind: str
    abnormality_id: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in NODE_KINDS:
            raise KgError(f"unknown node kind {self.kind!r} for {self.name!r}")


@dataclass
class KnowledgeGraph:
    nodes: list[KGNode] = field(default_factory=list)
    # undirected storage: both (i, j) and (j, i) entries present
    edges: dict[tuple[int, int], list[tuple[int, float]]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._index = {n.name: i for i, n in enumerate(self.nodes)}
        if len(self._index) != len(self.nodes):
            raise KgError("duplicate node names")

    def node_index(self, name: str) -> int | None:
        return self._index.get(name)

    def add_node(self, node: KGNode) -> int:
        if node.name in self._index:
            raise KgError(f"duplicate node {node.name!r}")
        self.nodes.append(node)
        self._index[node.name] = len(self.nodes) - 1
        return len(self.nodes) - 1

    def add_edge(self, i: int, j: int, label: int, weight: float = 1.0) -> None:
        if not (0 <= i < len(self.nodes) and 0 <= j < len(self.nodes)):
            raise KgError(f"edge endpoint out of range: ({i}, {j})")
        if label not in (LABEL_ANATOMICAL, LABEL_COOCCURRENCE):
            raise KgError(f"edge label must be 1 or 2, got {label}")
        if not 0.0 <= weight <= 1.0:
            raise KgError(f"edge weight must lie in [0, 1], got {weight}")
        for a, b in ((i, j), (j, i)):
            labels = self.edges.setdefault((a, b), [])
            if all(l != label for l, _ in labels):
                labels.append((label, weight))

    def labels_between(self, name_a: str, name_b: str) -> list[int]:
        ia, ib = self._index.get(name_a), self._index.get(name_b)
        if ia is None or ib is None:
            return []
        return sorted(l for l, _ in self.edges.get((ia, ib), []))

    def undirected_edge_count(self) -> int:
        return sum(len(labels) for (i, j), labels in self.edges.items() if i < j)

    def neighbors(self, i: int) -> list[int]:
        return sorted({j for (a, j) in self.edges if a == i})


def load_anatomical_kg(path: str | Path = DEFAULT_ANATOMICAL_KG) -> KnowledgeGraph:
    """Parse the bundled anatomy/disease edge-list file (label-1 edges)."""
    kg = KnowledgeGraph()
    pending_edges: list[tuple[str, str, int, float, int]] = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("node "):
            tokens = line.split()
            abn_id: int | None = None
            if tokens[-1].isdigit() and len(tokens) >= 4 and tokens[-2] in NODE_KINDS:
                abn_id = int(tokens[-1])
                kind = tokens[-2]
                name = " ".join(tokens[1:-2])
            elif tokens[-1] in NODE_KINDS:
                kind = tokens[-1]
                name = " ".join(tokens[1:-1])
            else:
                raise KgError(f"{path}:{lineno}: bad node declaration {line!r}")
            if not name:
                raise KgError(f"{path}:{lineno}: empty node name")
            if abn_id is not None and abn_id not in CANONICAL_NAMES:
                raise KgError(f"{path}:{lineno}: unknown abnormality id {abn_id}")
            kg.add_node(KGNode(name, kind, abn_id))
        elif " -- " in line:
            left, right = line.split(" -- ", 1)
            tokens = right.split()
            label, weight = LABEL_ANATOMICAL, 1.0
            # optional trailing "label" or "label weight"
            if len(tokens) >= 2 and _is_float(tokens[-1]) and tokens[-2].isdigit():
                weight = float(tokens.pop())
                label = int(tokens.pop())
            elif tokens and tokens[-1].isdigit() and len(tokens) > 1:
                label = int(tokens.pop())
            name_b = " ".join(tokens)
            pending_edges.append((left.strip(), name_b, label, weight, lineno))
        else:
            raise KgError(f"{path}:{lineno}: unrecognized line {line!r}")
    for name_a, name_b, label, weight, lineno in pending_edges:
        ia, ib = kg.node_index(name_a), kg.node_index(name_b)
        if ia is None:
            raise KgError(f"{path}:{lineno}: edge endpoint {name_a!r} not declared")
        if ib is None:
            raise KgError(f"{path}:{lineno}: edge endpoint {name_b!r} not declared")
        kg.add_edge(ia, ib, label, weight)
    return kg


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def build_cooccurrence(
    corpus: list[KeyInfoRecord],
    t: float = 0.05,
    normalization: str = "corpus",
) -> KnowledgeGraph:
    """Disease-disease graph from present-finding co-occurrence counts.

    c_ij = count(i, j) / N under the default "corpus" normalization;
    "conditional" divides by min(count_i, count_j) and "geometric" by
    sqrt(count_i * count_j). An edge (label 2, weight c_ij) is added iff
    c_ij > t.
    """
    if not corpus:
        raise ValueError("corpus must be non-empty")
    if not 0.0 <= t < 1.0:
        raise ValueError(f"threshold must lie in [0, 1), got {t}")
    if normalization not in ("corpus", "conditional", "geometric"):
        raise ValueError(f"unknown normalization {normalization!r}")
    n_studies = len(corpus)
    singles: defaultdict[int, int] = defaultdict(int)
    pair_counts: defaultdict[tuple[int, int], int] = defaultdict(int)
    observed: set[int] = set()
    for record in corpus:
        ids = sorted(set(record.present_ids()))
        observed.update(ids)
        for i in ids:
            singles[i] += 1
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                pair_counts[(ids[a], ids[b])] += 1
    kg = KnowledgeGraph()
    index = {}
    for abn_id in sorted(observed):
        index[abn_id] = kg.add_node(KGNode(CANONICAL_NAMES[abn_id], "disease", abn_id))
    for (i, j), count in sorted(pair_counts.items()):
        if normalization == "corpus":
            c_ij = count / n_studies
        elif normalization == "conditional":
            c_ij = count / min(singles[i], singles[j])
        else:
            c_ij = count / (singles[i] * singles[j]) ** 0.5
        if c_ij > t:
            kg.add_edge(index[i], index[j], LABEL_COOCCURRENCE, c_ij)
    return kg


def merge_kgs(anatomical: KnowledgeGraph, cooccurrence: KnowledgeGraph) -> KnowledgeGraph:
    """Union of nodes and edges; parallel label-1/label-2 edges are kept."""
    merged = KnowledgeGraph()
    for node in anatomical.nodes:
        merged.add_node(node)
    for node in cooccurrence.nodes:
        existing = merged.node_index(node.name)
        if existing is None:
            merged.add_node(node)
        else:
            prior = merged.nodes[existing]
            if prior.kind != node.kind:
                raise KgError(
                    f"node {node.name!r} declared as both {prior.kind} and {node.kind}"
                )
    for source in (anatomical, cooccurrence):
        for (i, j), labels in source.edges.items():
            if i > j:
                continue
            a = merged.node_index(source.nodes[i].name)
            b = merged.node_index(source.nodes[j].name)
            for label, weight in labels:
                merged.add_edge(a, b, label, weight)
    return merged


def write_kg(kg: KnowledgeGraph, path: str | Path) -> None:
    lines = []
    for node in kg.nodes:
        suffix = f" {node.abnormality_id}" if node.abnormality_id is not None else ""
        lines.append(f"node {node.name} {node.kind}{suffix}")
    for (i, j), labels in sorted(kg.edges.items()):
        if i > j:
            continue
        for label, weight in labels:
            lines.append(f"{kg.nodes[i].name} -- {kg.nodes[j].name} {label} {weight:.6f}")
    Path(path).write_text("".join(f"{l}\n" for l in lines), encoding="utf-8")


def read_kg(path: str | Path) -> KnowledgeGraph:
    return load_anatomical_kg(path)
