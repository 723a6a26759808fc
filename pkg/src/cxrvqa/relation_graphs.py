"""Per-image relation graphs over detected ROIs.

Spatial edges use the 11-class geometric scheme (inside, cover, overlap,
8 directional octants; 0 = no edge beyond the distance threshold).
Semantic edges come from the combined knowledge graph (1 = anatomical,
2 = co-occurrence). The implicit graph is fully connected.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kg import KnowledgeGraph

log = logging.getLogger(__name__)

SPATIAL_CLASSES = 12  # labels 0..11; 0 = no edge
DEFAULT_SPATIAL_T = 0.5 * math.sqrt(2.0)  # half the normalized image diagonal
DEFAULT_GEOMETRY_EPS = 1e-6


@dataclass(frozen=True)
class Roi:
    bbox: tuple[float, float, float, float]  # (x, y, w, h), top-left origin
    class_name: str
    feature: np.ndarray

    def __post_init__(self) -> None:
        x, y, w, h = self.bbox
        if w <= 0 or h <= 0:
            raise ValueError(f"box must have positive size, got {self.bbox}")
        if x < 0 or y < 0 or x + w > 1 + 1e-9 or y + h > 1 + 1e-9:
            raise ValueError(f"box must lie inside the unit square, got {self.bbox}")
        if not np.all(np.isfinite(self.feature)):
            raise ValueError("ROI feature contains non-finite values")

    @property
    def center(self) -> tuple[float, float]:
        x, y, w, h = self.bbox
        return (x + w / 2.0, y + h / 2.0)


@dataclass(frozen=True)
class RoiSet:
    image_id: str
    study_id: str
    rois: tuple[Roi, ...]

    def __post_init__(self) -> None:
        if not self.rois:
            raise ValueError("RoiSet needs at least one ROI")
        dims = {r.feature.shape for r in self.rois}
        if len(dims) != 1:
            raise ValueError(f"inconsistent feature lengths: {dims}")

    @property
    def n(self) -> int:
        return len(self.rois)

    @property
    def d_o(self) -> int:
        return int(self.rois[0].feature.shape[0])

    def boxes(self) -> np.ndarray:
        return np.array([r.bbox for r in self.rois], dtype=np.float64)

    def features(self) -> np.ndarray:
        return np.stack([r.feature for r in self.rois]).astype(np.float64)


@dataclass(frozen=True)
class RelationGraph:
    n: int
    labels: np.ndarray  # n x n integer matrix, 0 = no edge
    modality: str
    # (i, j) -> all labels when a pair is adjacent under several relations
    multi_labels: dict[tuple[int, int], tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.modality not in ("spatial", "semantic", "implicit"):
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.labels.shape != (self.n, self.n):
            raise ValueError("label matrix shape mismatch")

    def edge_count(self) -> int:
        return int(np.count_nonzero(self.labels))


def _contains(outer: tuple[float, float, float, float], inner: tuple[float, float, float, float]) -> bool:
    """Boundary-inclusive box containment."""
    ox, oy, ow, oh = outer
    ix, iy, iw, ih = inner
    return ix >= ox and iy >= oy and ix + iw <= ox + ow and iy + ih <= oy + oh


def iou(box_i: tuple[float, float, float, float], box_j: tuple[float, float, float, float]) -> float:
    xi = max(box_i[0], box_j[0])
    yi = max(box_i[1], box_j[1])
    xa = min(box_i[0] + box_i[2], box_j[0] + box_j[2])
    ya = min(box_i[1] + box_i[3], box_j[1] + box_j[3])
    iw, ih = max(0.0, xa - xi), max(0.0, ya - yi)
    inter = iw * ih
    union = box_i[2] * box_i[3] + box_j[2] * box_j[3] - inter
    return inter / union if union > 0 else 0.0


def classify_spatial(
    box_i: tuple[float, float, float, float],
    box_j: tuple[float, float, float, float],
    t: float = DEFAULT_SPATIAL_T,
) -> int:
    """Spatial relation label for the ordered pair (i, j).

    Precedence: containment (1 = i inside j, 2 = i covers j), overlap
    (IoU >= 0.5 -> 3), then one of 8 directional octants (4 + floor(theta
    / 45deg)) when the centers lie within ``t``; 0 otherwise. Exact box
    equality counts as inside.
    """
    if _contains(box_j, box_i):
        return 1
    if _contains(box_i, box_j):
        return 2
    if iou(box_i, box_j) >= 0.5:
        return 3
    cxi, cyi = box_i[0] + box_i[2] / 2.0, box_i[1] + box_i[3] / 2.0
    cxj, cyj = box_j[0] + box_j[2] / 2.0, box_j[1] + box_j[3] / 2.0
    dist = math.hypot(cxj - cxi, cyj - cyi)
    if dist > t:
        return 0
    theta = math.atan2(cyj - cyi, cxj - cxi)
    if theta < 0:
        theta += 2.0 * math.pi
    octant = int(theta / (math.pi / 4.0))
    if octant == 8:  # theta == 2*pi after rounding
        octant = 0
    return 4 + octant


def build_spatial_graph(roiset: RoiSet, t: float = DEFAULT_SPATIAL_T) -> RelationGraph:
    n = roiset.n
    labels = np.zeros((n, n), dtype=np.int64)
    boxes = [r.bbox for r in roiset.rois]
    for i in range(n):
        for j in range(n):
            if i != j:
                labels[i, j] = classify_spatial(boxes[i], boxes[j], t)
    return RelationGraph(n=n, labels=labels, modality="spatial")


def build_semantic_graph(roiset: RoiSet, combined_kg: KnowledgeGraph) -> RelationGraph:
    """Connect ROIs whose KG nodes are adjacent; 2 wins the dense matrix
    when a pair is related under both labels, with both kept in
    ``multi_labels``. Unresolvable class names are logged and isolated."""
    n = roiset.n
    labels = np.zeros((n, n), dtype=np.int64)
    multi: dict[tuple[int, int], tuple[int, ...]] = {}
    node_ids: list[int | None] = []
    for roi in roiset.rois:
        idx = combined_kg.node_index(roi.class_name)
        if idx is None:
            log.warning(
                "ROI class %r (image %s) not in the knowledge graph; isolating node",
                roi.class_name,
                roiset.image_id,
            )
        node_ids.append(idx)
    for i in range(n):
        for j in range(n):
            if i == j or node_ids[i] is None or node_ids[j] is None:
                continue
            edge_labels = combined_kg.edges.get((node_ids[i], node_ids[j]))
            if not edge_labels:
                continue
            ls = tuple(sorted(l for l, _ in edge_labels))
            labels[i, j] = max(ls)
            if len(ls) > 1:
                multi[(i, j)] = ls
    return RelationGraph(n=n, labels=labels, modality="semantic", multi_labels=multi)


def build_implicit_graph(n: int) -> RelationGraph:
    labels = np.ones((n, n), dtype=np.int64) - np.eye(n, dtype=np.int64)
    return RelationGraph(n=n, labels=labels, modality="implicit")


def relative_geometry(
    box_i: tuple[float, float, float, float],
    box_j: tuple[float, float, float, float],
    eps: float = DEFAULT_GEOMETRY_EPS,
) -> np.ndarray:
    """4-vector of log-relative center offsets and size ratios.

    Center distances are clamped below by ``eps`` before the log so
    coincident centers stay finite.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    xi, yi = box_i[0] + box_i[2] / 2.0, box_i[1] + box_i[3] / 2.0
    xj, yj = box_j[0] + box_j[2] / 2.0, box_j[1] + box_j[3] / 2.0
    wi, hi = box_i[2], box_i[3]
    wj, hj = box_j[2], box_j[3]
    return np.array(
        [
            math.log(max(abs(xi - xj), eps) / wi),
            math.log(max(abs(yi - yj), eps) / hi),
            math.log(wj / wi),
            math.log(hj / hi),
        ],
        dtype=np.float64,
    )


def geometry_tensor(boxes: np.ndarray, eps: float = DEFAULT_GEOMETRY_EPS) -> np.ndarray:
    """All-pairs relative geometry, shape (n, n, 4)."""
    n = boxes.shape[0]
    out = np.zeros((n, n, 4), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            out[i, j] = relative_geometry(tuple(boxes[i]), tuple(boxes[j]), eps)
    return out


# ---------------------------------------------------------------------------
# ROI fixture IO: JSON header + flat float32 little-endian sidecar
# ---------------------------------------------------------------------------


def save_roiset(roiset: RoiSet, directory: str | Path) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header_path = directory / f"{roiset.image_id}.json"
    blob_path = directory / f"{roiset.image_id}.bin"
    header = {
        "image_id": roiset.image_id,
        "study_id": roiset.study_id,
        "n": roiset.n,
        "d_o": roiset.d_o,
        "boxes": [list(r.bbox) for r in roiset.rois],
        "class_names": [r.class_name for r in roiset.rois],
    }
    header_path.write_text(json.dumps(header, indent=1), encoding="utf-8")
    feats = roiset.features().astype("<f4")
    blob_path.write_bytes(feats.tobytes())
    return header_path, blob_path


def load_roiset(header_path: str | Path) -> RoiSet:
    header_path = Path(header_path)
    header = json.loads(header_path.read_text(encoding="utf-8"))
    blob_path = header_path.with_suffix(".bin")
    raw = np.frombuffer(blob_path.read_bytes(), dtype="<f4")
    n, d_o = header["n"], header["d_o"]
    if raw.size != n * d_o:
        raise ValueError(
            f"{blob_path}: expected {n * d_o} floats, found {raw.size}"
        )
    feats = raw.reshape(n, d_o).astype(np.float64)
    rois = tuple(
        Roi(bbox=tuple(box), class_name=name, feature=feats[i])
        for i, (box, name) in enumerate(zip(header["boxes"], header["class_names"]))
    )
    return RoiSet(image_id=header["image_id"], study_id=header["study_id"], rois=rois)


def graph_to_json(graph: RelationGraph) -> dict:
    return {
        "modality": graph.modality,
        "n": graph.n,
        "labels": graph.labels.tolist(),
        "multi_labels": {f"{i},{j}": list(ls) for (i, j), ls in graph.multi_labels.items()},
    }
