"""Three-graph relation-aware attention VQA model.

Question tokens feed a GRU encoder; each ROI node carries its visual
feature concatenated with the question vector. Per modality (implicit /
spatial / semantic) a stack of attention layers updates the nodes:
implicit attention mixes a learned pair score with a geometry gate,
explicit attention runs over labeled neighbors with direction-specific
projections and per-label biases. Mean-pooled nodes feed per-modality
answer heads whose logits are fused by an affine combination.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .kg import KnowledgeGraph
from .nn import (
    ParameterStore,
    create_gru_params,
    gru_sequence,
    load_checkpoint,
    save_checkpoint,
    uniform_init,
)
from .relation_graphs import (
    DEFAULT_GEOMETRY_EPS,
    DEFAULT_SPATIAL_T,
    RoiSet,
    build_semantic_graph,
    build_spatial_graph,
    geometry_tensor,
)

MODALITIES = ("implicit", "spatial", "semantic")
N_SPATIAL_LABELS = 12
N_SEMANTIC_LABELS = 3
UNK_TOKEN = "<unk>"

_QUESTION_TOKEN_RE = re.compile(r"[a-z0-9][a-z0-9'-]*")


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; punctuation-only tokens are dropped."""
    return _QUESTION_TOKEN_RE.findall(text.lower())


def fit_token_vocab(questions: list[str]) -> list[str]:
    """UNK plus tokens by first appearance."""
    vocab = [UNK_TOKEN]
    seen = {UNK_TOKEN}
    for q in questions:
        for tok in tokenize(q):
            if tok not in seen:
                seen.add(tok)
                vocab.append(tok)
    return vocab


def load_word_vectors(
    path: str | Path, token_vocab: list[str], dim: int, seed: int = 0
) -> np.ndarray:
    """Fixed-embedding table from a "token v1 v2 ..." text file.

    Tokens absent from the file (UNK included) get seeded random rows, so
    a partial or missing vector file still yields a usable table.
    """
    rng = np.random.default_rng(seed)
    table = rng.normal(0.0, 0.3, size=(len(token_vocab), dim))
    index = {t: i for i, t in enumerate(token_vocab)}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        parts = raw.rstrip().split(" ")
        if len(parts) < 2:
            continue
        token, values = parts[0], parts[1:]
        if token not in index:
            continue
        if len(values) != dim:
            raise ValueError(
                f"{path}:{lineno}: expected {dim} components for {token!r}, got {len(values)}"
            )
        table[index[token]] = np.array([float(v) for v in values])
    return table


@dataclass
class ModelConfig:
    d_o: int = 64
    d: int = 1024
    d_q: int = 1024
    heads: int = 16
    layers: int = 2
    embed_fixed: int = 300
    embed_learned: int = 300
    bidirectional: bool = False
    shared_head_attention: bool = False
    activation_slope: float = 0.2
    geometry_eps: float = DEFAULT_GEOMETRY_EPS
    spatial_t: float = DEFAULT_SPATIAL_T
    fusion_alpha: float = 1.0 / 3.0
    fusion_beta: float = 1.0 / 3.0
    learn_fusion: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.fusion_alpha < 0 or self.fusion_beta < 0:
            raise ValueError("fusion coefficients must be non-negative")
        if self.fusion_alpha + self.fusion_beta > 1.0 + 1e-12:
            raise ValueError("fusion coefficients must satisfy alpha + beta <= 1")
        if self.bidirectional and self.d_q % 2:
            raise ValueError("bidirectional GRU needs an even question dimension")


@dataclass
class StudyInputs:
    """Precomputed per-study arrays the forward pass consumes."""

    study_id: str
    image_id: str
    n: int
    features: np.ndarray  # (n, d_o)
    boxes: np.ndarray  # (n, 4)
    geometry: np.ndarray  # (n, n, 4)
    class_names: list[str]
    masks: dict[str, dict[str, np.ndarray]]  # modality -> mask pack


@dataclass
class Batch:
    token_ids: np.ndarray  # (B, T)
    token_mask: np.ndarray  # (B, T)
    features: np.ndarray  # (B, N, d_o)
    node_mask: np.ndarray  # (B, N)
    geometry: np.ndarray  # (B, N, N, 4)
    masks: dict[str, dict[str, np.ndarray]]
    targets: np.ndarray | None = None  # (B, c) multi-hot

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]


def _explicit_mask_pack(labels: np.ndarray, n_labels: int, multi: dict | None = None) -> dict[str, np.ndarray]:
    """Neighbor/direction masks and the label multi-hot for one graph.

    Direction of the ordered pair (i, j): forward iff labels[i, j] <=
    labels[j, i] (label-based, hence permutation-equivariant); isolated
    rows fall back to a self loop with its own direction class.
    """
    n = labels.shape[0]
    transposed = labels.T
    connected = labels != 0
    fwd = connected & (labels <= transposed)
    bwd = connected & (labels > transposed)
    isolated = ~connected.any(axis=1)
    self_mask = np.zeros((n, n), dtype=bool)
    self_mask[np.diag_indices(n)] = isolated
    nbr = connected | self_mask
    multihot = np.zeros((n, n, n_labels), dtype=np.float64)
    idx = np.nonzero(connected)
    multihot[idx[0], idx[1], labels[idx]] = 1.0
    if multi:
        for (i, j), label_list in multi.items():
            for l in label_list:
                multihot[i, j, l] = 1.0
    return {
        "nbr": nbr.astype(np.float64),
        "dir": np.stack([fwd, bwd, self_mask]).astype(np.float64),
        "multihot": multihot,
    }


def _implicit_mask_pack(n: int) -> dict[str, np.ndarray]:
    pair = 1.0 - np.eye(n)
    return {"pair": pair}


def prepare_study(
    roiset: RoiSet,
    kg: KnowledgeGraph,
    spatial_t: float = DEFAULT_SPATIAL_T,
    geometry_eps: float = DEFAULT_GEOMETRY_EPS,
) -> StudyInputs:
    """Build all per-study constants: graphs, masks, geometry."""
    spatial = build_spatial_graph(roiset, spatial_t)
    semantic = build_semantic_graph(roiset, kg)
    boxes = roiset.boxes()
    return StudyInputs(
        study_id=roiset.study_id,
        image_id=roiset.image_id,
        n=roiset.n,
        features=roiset.features(),
        boxes=boxes,
        geometry=geometry_tensor(boxes, geometry_eps),
        class_names=[r.class_name for r in roiset.rois],
        masks={
            "implicit": _implicit_mask_pack(roiset.n),
            "spatial": _explicit_mask_pack(spatial.labels, N_SPATIAL_LABELS),
            "semantic": _explicit_mask_pack(
                semantic.labels, N_SEMANTIC_LABELS, semantic.multi_labels
            ),
        },
    )


def assemble_batch(
    studies: list[StudyInputs],
    token_ids: list[list[int]],
    targets: np.ndarray | None = None,
) -> Batch:
    """Pad a list of per-sample inputs into one batch."""
    b = len(studies)
    n_max = max(s.n for s in studies)
    t_max = max(len(ids) for ids in token_ids)
    if t_max == 0:
        raise ValueError("empty question in batch")
    ids = np.zeros((b, t_max), dtype=np.int64)
    tmask = np.zeros((b, t_max), dtype=np.float64)
    d_o = studies[0].features.shape[1]
    feats = np.zeros((b, n_max, d_o), dtype=np.float64)
    nmask = np.zeros((b, n_max), dtype=np.float64)
    geom = np.zeros((b, n_max, n_max, 4), dtype=np.float64)
    masks: dict[str, dict[str, list[np.ndarray]]] = {
        "implicit": {"pair": []},
        "spatial": {"nbr": [], "dir": [], "multihot": []},
        "semantic": {"nbr": [], "dir": [], "multihot": []},
    }
    for i, (study, q_ids) in enumerate(zip(studies, token_ids)):
        if not q_ids:
            raise ValueError("empty question in batch")
        ids[i, : len(q_ids)] = q_ids
        tmask[i, : len(q_ids)] = 1.0
        n = study.n
        feats[i, :n] = study.features
        nmask[i, :n] = 1.0
        geom[i, :n, :n] = study.geometry
        pair = np.zeros((n_max, n_max))
        pair[:n, :n] = study.masks["implicit"]["pair"]
        masks["implicit"]["pair"].append(pair)
        for modality, n_labels in (("spatial", N_SPATIAL_LABELS), ("semantic", N_SEMANTIC_LABELS)):
            pack = study.masks[modality]
            nbr = np.zeros((n_max, n_max))
            nbr[:n, :n] = pack["nbr"]
            dirs = np.zeros((3, n_max, n_max))
            dirs[:, :n, :n] = pack["dir"]
            hot = np.zeros((n_max, n_max, n_labels))
            hot[:n, :n] = pack["multihot"]
            masks[modality]["nbr"].append(nbr)
            masks[modality]["dir"].append(dirs)
            masks[modality]["multihot"].append(hot)
    packed = {
        modality: {key: np.stack(vals) for key, vals in groups.items()}
        for modality, groups in masks.items()
    }
    return Batch(
        token_ids=ids,
        token_mask=tmask,
        features=feats,
        node_mask=nmask,
        geometry=geom,
        masks=packed,
        targets=targets,
    )


def node_features(features: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Per-node input rows: each ROI feature concatenated with the
    question vector, shape (N, d_o + d_q)."""
    features = np.asarray(features, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    return np.concatenate([features, np.tile(q, (features.shape[0], 1))], axis=1)


def fuse_answers(a_imp, a_spa, a_sem, alpha: float, beta: float):
    """a_final = (1 - alpha - beta) a_imp + alpha a_spa + beta a_sem.

    The alpha = beta = 0 case returns a_imp itself (bit-exact).
    """
    if alpha < 0 or beta < 0 or alpha + beta > 1.0 + 1e-12:
        raise ValueError("fusion coefficients must be non-negative with alpha + beta <= 1")
    if alpha == 0.0 and beta == 0.0:
        return a_imp
    return ad.add(
        ad.add(ad.scale(a_imp, 1.0 - alpha - beta), ad.scale(a_spa, alpha)),
        ad.scale(a_sem, beta),
    )


class VqaModel:
    """Parameter container plus the batched forward pass."""

    def __init__(
        self,
        config: ModelConfig,
        token_vocab: list[str],
        answer_labels: list[str],
        fixed_vectors: np.ndarray | None = None,
    ):
        if token_vocab[0] != UNK_TOKEN:
            raise ValueError(f"token vocabulary must start with {UNK_TOKEN!r}")
        self.config = config
        self.token_vocab = list(token_vocab)
        self.token_index = {t: i for i, t in enumerate(self.token_vocab)}
        self.answer_labels = list(answer_labels)
        self.store = ParameterStore()
        rng = np.random.default_rng(config.seed)
        v = len(self.token_vocab)
        if fixed_vectors is None:
            # stand-in for pretrained word vectors
            fixed_vectors = rng.normal(0.0, 0.3, size=(v, config.embed_fixed))
        if fixed_vectors.shape != (v, config.embed_fixed):
            raise ValueError(
                f"fixed embedding table must be {(v, config.embed_fixed)}, got {fixed_vectors.shape}"
            )
        self.fixed_table = np.asarray(fixed_vectors, dtype=np.float64)
        self._build_params(rng)

    # ------------------------------------------------------------------
    # parameters
    # ------------------------------------------------------------------

    def _build_params(self, rng: np.random.Generator) -> None:
        cfg = self.config
        store = self.store
        v = len(self.token_vocab)
        c = len(self.answer_labels)
        store.create("encoder.embed", uniform_init(rng, (v, cfg.embed_learned), cfg.embed_learned))
        d_embed = cfg.embed_fixed + cfg.embed_learned
        d_h = cfg.d_q // 2 if cfg.bidirectional else cfg.d_q
        self.gru_fwd = create_gru_params(store, "encoder.gru_f", d_embed, d_h, rng)
        self.gru_bwd = (
            create_gru_params(store, "encoder.gru_b", d_embed, d_h, rng)
            if cfg.bidirectional
            else None
        )
        m_att = 1 if cfg.shared_head_attention else cfg.heads
        for modality in MODALITIES:
            for layer in range(cfg.layers):
                d_in = cfg.d_o + cfg.d_q if layer == 0 else cfg.d
                prefix = f"{modality}.l{layer}"
                store.create(f"{prefix}.U", uniform_init(rng, (d_in, m_att * cfg.d), d_in))
                if modality == "implicit":
                    store.create(f"{prefix}.H", uniform_init(rng, (d_in, m_att * cfg.d), d_in))
                    store.create(f"{prefix}.geo_W", uniform_init(rng, (4, cfg.d), 4))
                    store.create(f"{prefix}.geo_b", np.zeros((1, cfg.d)))
                    store.create(f"{prefix}.w", uniform_init(rng, (cfg.d, m_att), cfg.d))
                    store.create(f"{prefix}.Wm", uniform_init(rng, (d_in, cfg.heads * cfg.d), d_in))
                else:
                    n_labels = N_SPATIAL_LABELS if modality == "spatial" else N_SEMANTIC_LABELS
                    store.create(
                        f"{prefix}.Hdir", uniform_init(rng, (d_in, 3 * m_att * cfg.d), d_in)
                    )
                    store.create(
                        f"{prefix}.Wdir", uniform_init(rng, (d_in, 3 * cfg.heads * cfg.d), d_in)
                    )
                    store.create(f"{prefix}.c", np.zeros((n_labels, m_att)))
                    store.create(f"{prefix}.b", np.zeros((cfg.heads, n_labels, cfg.d)))
                store.create(
                    f"{prefix}.Wo", uniform_init(rng, (cfg.heads * cfg.d, cfg.d), cfg.heads * cfg.d)
                )
            store.create(f"{modality}.head.W1", uniform_init(rng, (cfg.d, cfg.d), cfg.d))
            store.create(f"{modality}.head.b1", np.zeros((1, cfg.d)))
            store.create(f"{modality}.head.W2", uniform_init(rng, (cfg.d, c), cfg.d))
            store.create(f"{modality}.head.b2", np.zeros((1, c)))
        if cfg.learn_fusion:
            store.create("fusion.logits", np.zeros((3, 1)))

    # ------------------------------------------------------------------
    # question encoding
    # ------------------------------------------------------------------

    def token_ids(self, text: str) -> list[int]:
        tokens = tokenize(text)
        if not tokens:
            raise ValueError(f"question has no tokens: {text!r}")
        return [self.token_index.get(t, 0) for t in tokens]

    def encode_question_batch(self, token_ids: np.ndarray, token_mask: np.ndarray) -> Tensor:
        embed = self.store["encoder.embed"]
        xs = []
        for t in range(token_ids.shape[1]):
            fixed = Tensor(self.fixed_table[token_ids[:, t]])
            learned = ad.gather_rows(embed, token_ids[:, t])
            xs.append(ad.concat([fixed, learned], axis=-1))
        return gru_sequence(xs, self.gru_fwd, mask=token_mask, backward_params=self.gru_bwd)

    def encode_question(self, text: str) -> np.ndarray:
        """Encode one question to its d_q vector (deterministic)."""
        ids = np.array([self.token_ids(text)], dtype=np.int64)
        mask = np.ones_like(ids, dtype=np.float64)
        return self.encode_question_batch(ids, mask).data[0]

    # ------------------------------------------------------------------
    # attention layers
    # ------------------------------------------------------------------

    def _split_heads(self, x: Tensor, m: int) -> Tensor:
        b, n, _ = x.shape
        return ad.moveaxis(ad.reshape(x, (b, n, m, -1)), 1, 2)  # (B, m, N, d)

    def _implicit_layer(self, v: Tensor, batch: Batch, layer: int) -> tuple[Tensor, np.ndarray]:
        cfg = self.config
        prefix = f"implicit.l{layer}"
        m_att = 1 if cfg.shared_head_attention else cfg.heads
        pair = batch.masks["implicit"]["pair"][:, None, :, :]  # (B,1,N,N)
        uv = self._split_heads(ad.matmul(v, self.store[f"{prefix}.U"]), m_att)
        hv = self._split_heads(ad.matmul(v, self.store[f"{prefix}.H"]), m_att)
        att_v = ad.matmul(uv, ad.swapaxes(hv, -1, -2))  # (B,m,N,N)
        geo = ad.leaky_relu(
            ad.add(ad.matmul(Tensor(batch.geometry), self.store[f"{prefix}.geo_W"]),
                   self.store[f"{prefix}.geo_b"]),
            cfg.activation_slope,
        )  # (B,N,N,d)
        att_b = ad.relu(ad.moveaxis(ad.matmul(geo, self.store[f"{prefix}.w"]), -1, 1))  # (B,m,N,N)
        row_max = np.max(np.where(pair != 0, att_v.data, -np.inf), axis=-1, keepdims=True)
        row_max = np.where(np.isfinite(row_max), row_max, 0.0)
        # zero the masked lanes before exp so self-pairs cannot overflow
        shifted = ad.mul(ad.sub(att_v, Tensor(row_max)), Tensor(pair))
        numer = ad.mul(ad.mul(att_b, ad.exp(shifted)), Tensor(pair))
        # rescale by the row pivot (a constant, so the ratio is unchanged)
        # to keep the normalizer >= 1; tiny geometry gates would otherwise
        # underflow the denominator and blow up its gradient
        # Rows whose best gated weight is below 1e-30 are numerically dead:
        # the exact ratio gradient there scales like 1/pivot and overflows
        # long before it could inform training, so they take the uniform
        # fallback like fully-closed rows do.
        pivot = np.max(numer.data, axis=-1, keepdims=True)
        live = (pivot > 1e-30).astype(np.float64)
        scaled = ad.mul(numer, Tensor(live / np.maximum(pivot, 1e-30)))
        denom = ad.add(ad.sum_along(scaled, axis=-1, keepdims=True), Tensor(1.0 - live))
        uniform = pair / np.maximum(pair.sum(axis=-1, keepdims=True), 1.0)
        alpha = ad.add(
            ad.mul(ad.div(scaled, denom), Tensor(live)),
            Tensor(uniform * (1.0 - live)),
        )  # (B,m,N,N)
        wv = self._split_heads(ad.matmul(v, self.store[f"{prefix}.Wm"]), cfg.heads)
        heads = ad.leaky_relu(ad.matmul(alpha, wv), cfg.activation_slope)  # (B,M,N,d)
        out = self._project_heads(heads, f"{prefix}.Wo")
        return out, alpha.data.mean(axis=1)

    def _explicit_layer(
        self, v: Tensor, batch: Batch, modality: str, layer: int
    ) -> tuple[Tensor, np.ndarray]:
        cfg = self.config
        prefix = f"{modality}.l{layer}"
        m_att = 1 if cfg.shared_head_attention else cfg.heads
        pack = batch.masks[modality]
        nbr = pack["nbr"][:, None, :, :]  # (B,1,N,N)
        dirs = pack["dir"][:, :, None, :, :]  # (B,3,1,N,N)
        multihot = pack["multihot"]  # (B,N,N,L)
        b, n = nbr.shape[0], nbr.shape[2]
        uv = self._split_heads(ad.matmul(v, self.store[f"{prefix}.U"]), m_att)  # (B,m,N,d)
        hv = ad.matmul(v, self.store[f"{prefix}.Hdir"])  # (B,N,3md)
        hv = ad.moveaxis(ad.reshape(hv, (b, n, 3, m_att, cfg.d)), 1, 3)  # (B,3,m,N,d)
        pair_logits = ad.matmul(
            ad.reshape(uv, (b, 1, m_att, n, cfg.d)), ad.swapaxes(hv, -1, -2)
        )  # (B,3,m,N,N)
        selected = ad.sum_along(ad.mul(pair_logits, Tensor(dirs)), axis=1)  # (B,m,N,N)
        c_term = ad.moveaxis(ad.matmul(Tensor(multihot), self.store[f"{prefix}.c"]), -1, 1)
        logits = ad.add(selected, c_term)
        alpha = ad.masked_softmax(logits, nbr, axis=-1, allow_empty=True)  # (B,m,N,N)
        wv = ad.matmul(v, self.store[f"{prefix}.Wdir"])  # (B,N,3Md)
        wv = ad.moveaxis(ad.reshape(wv, (b, n, 3, cfg.heads, cfg.d)), 1, 3)  # (B,3,M,N,d)
        alpha_dir = ad.mul(ad.reshape(alpha, (b, 1, m_att, n, n)), Tensor(dirs))  # (B,3,m,N,N)
        msg = ad.sum_along(ad.matmul(alpha_dir, wv), axis=1)  # (B,M,N,d)
        # per-label attention mass: mass[b,m,i,l] = sum_j alpha[b,m,i,j] multihot[b,i,j,l]
        n_labels = multihot.shape[-1]
        mass = ad.reshape(
            ad.matmul(ad.reshape(alpha, (b, m_att, n, 1, n)), Tensor(multihot[:, None])),
            (b, m_att, n, n_labels),
        )
        bias = ad.matmul(mass, self.store[f"{prefix}.b"])  # (B,M,N,d) (broadcast over M)
        heads = ad.leaky_relu(ad.add(msg, bias), cfg.activation_slope)
        out = self._project_heads(heads, f"{prefix}.Wo")
        return out, alpha.data.mean(axis=1)

    def _project_heads(self, heads: Tensor, wo_name: str) -> Tensor:
        b, m, n, d = heads.shape
        stacked = ad.reshape(ad.moveaxis(heads, 1, 2), (b, n, m * d))
        return ad.matmul(stacked, self.store[wo_name])

    # ------------------------------------------------------------------
    # full forward
    # ------------------------------------------------------------------

    def forward(self, batch: Batch) -> tuple[Tensor, dict[str, list[np.ndarray]]]:
        """Fused answer logits (B, c) plus per-modality attention maps."""
        cfg = self.config
        q = self.encode_question_batch(batch.token_ids, batch.token_mask)  # (B,d_q)
        b, n = batch.node_mask.shape
        ones = Tensor(batch.node_mask[:, :, None])
        q_rows = ad.mul(ones, ad.reshape(q, (b, 1, cfg.d_q)))  # (B,N,d_q)
        v0 = ad.concat([Tensor(batch.features), q_rows], axis=-1)
        attn: dict[str, list[np.ndarray]] = {m: [] for m in MODALITIES}
        pooled_logits: dict[str, Tensor] = {}
        counts = batch.node_mask.sum(axis=1, keepdims=True)  # (B,1)
        for modality in MODALITIES:
            v = v0
            for layer in range(cfg.layers):
                if modality == "implicit":
                    v, a = self._implicit_layer(v, batch, layer)
                else:
                    v, a = self._explicit_layer(v, batch, modality, layer)
                attn[modality].append(a)
            masked = ad.mul(v, Tensor(batch.node_mask[:, :, None]))
            pooled = ad.div(ad.sum_along(masked, axis=1), Tensor(counts))  # (B,d)
            hidden = ad.leaky_relu(
                ad.add(ad.matmul(pooled, self.store[f"{modality}.head.W1"]),
                       self.store[f"{modality}.head.b1"]),
                cfg.activation_slope,
            )
            pooled_logits[modality] = ad.add(
                ad.matmul(hidden, self.store[f"{modality}.head.W2"]),
                self.store[f"{modality}.head.b2"],
            )
        a_final = self.fuse(
            pooled_logits["implicit"], pooled_logits["spatial"], pooled_logits["semantic"]
        )
        return a_final, attn

    def fuse(self, a_imp: Tensor, a_spa: Tensor, a_sem: Tensor) -> Tensor:
        cfg = self.config
        if cfg.learn_fusion:
            coefs = ad.masked_softmax(
                ad.reshape(self.store["fusion.logits"], (3,)), np.ones(3)
            )
            stacked = ad.concat(
                [ad.reshape(t, (1,) + t.shape) for t in (a_imp, a_spa, a_sem)], axis=0
            )
            return ad.sum_along(ad.mul(ad.reshape(coefs, (3, 1, 1)), stacked), axis=0)
        return fuse_answers(a_imp, a_spa, a_sem, cfg.fusion_alpha, cfg.fusion_beta)

    def loss(self, batch: Batch) -> Tensor:
        if batch.targets is None:
            raise ValueError("batch has no targets")
        logits, _ = self.forward(batch)
        return ad.mean_along(ad.bce_with_logits(logits, batch.targets))

    def predict(self, study: StudyInputs, question: str) -> tuple[np.ndarray, dict[str, list[np.ndarray]]]:
        """Sigmoid answer scores plus per-layer attention for one study."""
        ids = [self.token_ids(question)]
        batch = assemble_batch([study], ids)
        logits, attn = self.forward(batch)
        scores = 1.0 / (1.0 + np.exp(-logits.data[0]))
        attention = {m: [a[0] for a in layers] for m, layers in attn.items()}
        return scores, attention

    # ------------------------------------------------------------------
    # checkpoints
    # ------------------------------------------------------------------

    def hyperparameters(self) -> dict:
        return {
            "config": asdict(self.config),
            "token_vocab": self.token_vocab,
            "answer_labels": self.answer_labels,
        }

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        hyper = self.hyperparameters()
        if extra:
            hyper["extra"] = extra
        # fixed table rides along so checkpoints are self-contained
        hyper["fixed_table"] = self.fixed_table.astype(np.float32).tolist()
        save_checkpoint(path, self.store, hyper)

    @classmethod
    def load(cls, path: str | Path) -> "VqaModel":
        arrays, hyper = load_checkpoint(path)
        config = ModelConfig(**hyper["config"])
        fixed = np.array(hyper["fixed_table"], dtype=np.float64)
        model = cls(config, hyper["token_vocab"], hyper["answer_labels"], fixed_vectors=fixed)
        for name, value in arrays.items():
            model.store[name].data[...] = value
        return model
