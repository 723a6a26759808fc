"""Command-line entry point wiring the full pipeline.

Subcommands: synth-corpus, build-keyinfo, gen-qa, build-cooccurrence,
build-graphs, synth-fixtures, train, eval, sample-validation, serve,
gradcheck. Every subcommand is deterministic given --seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import qa as qa_mod
from . import reports as reports_mod
from .fixtures import FixtureConfig, FixtureStore, synth_fixtures
from .kg import build_cooccurrence, load_anatomical_kg, merge_kgs, read_kg, write_kg
from .lexicon import load_lexicon
from .metrics import evaluate_scores, slice_by_qtype
from .model import ModelConfig, VqaModel, fit_token_vocab, load_word_vectors, prepare_study
from .qa import build_vocabulary, generate_qa, split_dataset
from .relation_graphs import DEFAULT_SPATIAL_T, build_implicit_graph, build_spatial_graph, build_semantic_graph, graph_to_json
from .reports import ParserConfig, Report, SynthConfig, extract_keyinfo, synth_corpus
from .training import TrainConfig, evaluate_model, make_samples, prepare_studies, train


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="deterministic seed")


def _load_reports(path: str) -> list[Report]:
    return [reports_mod.report_from_json(obj) for obj in reports_mod.read_jsonl(path)]


def _load_records(path: str):
    return [reports_mod.record_from_json(obj) for obj in reports_mod.read_jsonl(path)]


def _load_pairs(path: str):
    return [qa_mod.qa_from_json(obj) for obj in reports_mod.read_jsonl(path)]


def cmd_synth_corpus(args) -> int:
    lex = load_lexicon()
    cfg = SynthConfig()
    if args.abnormality_ids:
        cfg = SynthConfig(abnormality_ids=tuple(int(x) for x in args.abnormality_ids.split(",")))
    corpus = synth_corpus(args.n, args.seed, lex, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports_mod.write_jsonl(out / "reports.jsonl", [reports_mod.report_to_json(r) for r, _ in corpus])
    reports_mod.write_jsonl(out / "keyinfo.jsonl", [reports_mod.record_to_json(k) for _, k in corpus])
    print(f"wrote {args.n} studies to {out}/reports.jsonl and {out}/keyinfo.jsonl")
    return 0


def cmd_build_keyinfo(args) -> int:
    lex = load_lexicon()
    cfg = ParserConfig(window_tokens=args.window_tokens)
    records = [extract_keyinfo(r, lex, cfg) for r in _load_reports(args.reports)]
    reports_mod.write_jsonl(args.out, [reports_mod.record_to_json(k) for k in records])
    print(f"extracted key info for {len(records)} reports -> {args.out}")
    if args.truth:
        truth = {t.study_id: t for t in _load_records(args.truth)}
        matched = sum(1 for rec in records if truth.get(rec.study_id) == rec)
        print(f"round-trip match: {matched}/{len(records)}")
        return 0 if matched == len(records) else 1
    return 0


def cmd_gen_qa(args) -> int:
    lex = load_lexicon()
    records = _load_records(args.keyinfo)
    report_map = {r.study_id: r for r in _load_reports(args.reports)}
    pairs = []
    for record in records:
        report = report_map.get(record.study_id)
        if report is None:
            print(f"warning: no report for study {record.study_id}", file=sys.stderr)
            continue
        pairs.extend(generate_qa(record, report, lex, seed=args.seed))
    vocab, filtered = build_vocabulary(pairs, min_count=args.min_count)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports_mod.write_jsonl(out / "qa_pairs.jsonl", [qa_mod.qa_to_json(p) for p in filtered])
    qa_mod.write_vocabulary(vocab, out / "answers.txt")
    stats = qa_mod.dataset_stats(filtered)
    (out / "stats.json").write_text(json.dumps(stats, indent=1), encoding="utf-8")
    print(f"{len(filtered)} QA pairs, {len(vocab)} answers -> {out}")
    print("per-type counts:", json.dumps(stats))
    return 0


def cmd_build_cooccurrence(args) -> int:
    records = _load_records(args.keyinfo)
    kg = build_cooccurrence(records, t=args.threshold, normalization=args.normalization)
    write_kg(kg, args.out)
    print(f"co-occurrence graph: {len(kg.nodes)} nodes, {kg.undirected_edge_count()} edges -> {args.out}")
    return 0


def cmd_build_graphs(args) -> int:
    anatomical = load_anatomical_kg(args.anatomical) if args.anatomical else load_anatomical_kg()
    if args.cooccurrence:
        merged = merge_kgs(anatomical, read_kg(args.cooccurrence))
    else:
        merged = anatomical
    write_kg(merged, args.out)
    print(f"combined graph: {len(merged.nodes)} nodes, {merged.undirected_edge_count()} edges -> {args.out}")
    if args.fixtures and args.dump:
        store = FixtureStore(args.fixtures)
        dump_dir = Path(args.dump)
        dump_dir.mkdir(parents=True, exist_ok=True)
        for study_id in store.study_ids():
            roiset = store.load(study_id)
            graphs = {
                "spatial": graph_to_json(build_spatial_graph(roiset, args.spatial_t)),
                "semantic": graph_to_json(build_semantic_graph(roiset, merged)),
                "implicit": graph_to_json(build_implicit_graph(roiset.n)),
            }
            (dump_dir / f"{study_id}.json").write_text(json.dumps(graphs), encoding="utf-8")
        print(f"dumped per-study graphs for {len(store.study_ids())} studies -> {dump_dir}")
    return 0


def cmd_synth_fixtures(args) -> int:
    reports = _load_reports(args.reports)
    records = {r.study_id: r for r in _load_records(args.keyinfo)}
    corpus = [(rep, records[rep.study_id]) for rep in reports if rep.study_id in records]
    fixtures = synth_fixtures(corpus, FixtureConfig(d_o=args.d_o), seed=args.seed)
    store = FixtureStore(args.out)
    for roiset in fixtures.values():
        store.save(roiset)
    print(f"wrote {len(fixtures)} ROI fixtures -> {args.out}")
    return 0


def _training_setup(args):
    pairs = _load_pairs(args.qa)
    vocab = qa_mod.read_vocabulary(args.answers)
    split = split_dataset(pairs)
    kg = read_kg(args.kg)
    store = FixtureStore(args.fixtures)
    roisets = {sid: store.load(sid) for sid in store.study_ids()}
    config = ModelConfig(
        d_o=args.d_o,
        d=args.d,
        d_q=args.d_q,
        heads=args.heads,
        layers=args.layers,
        seed=args.seed,
        spatial_t=args.spatial_t,
    )
    studies = prepare_studies(roisets, kg, config)
    return pairs, vocab, split, config, studies


def cmd_train(args) -> int:
    pairs, vocab, split, config, studies = _training_setup(args)
    token_vocab = fit_token_vocab([p.question for p in pairs])
    fixed = None
    if args.word_vectors:
        fixed = load_word_vectors(args.word_vectors, token_vocab, config.embed_fixed, args.seed)
    model = VqaModel(config, token_vocab, list(vocab.labels), fixed_vectors=fixed)
    tc = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, seed=args.seed, verbose=True
    )
    history = train(model, split, vocab, studies, tc)
    model.save(args.checkpoint, extra={"history": history})
    print(f"checkpoint -> {args.checkpoint}.json/.bin")
    return 0


def cmd_eval(args) -> int:
    pairs, vocab, split, _config, studies = _training_setup(args)
    model = VqaModel.load(args.checkpoint)
    subset = {"train": split.train, "val": split.val, "test": split.test}[args.split]
    samples = make_samples(subset, vocab, model, studies)
    scores, labels = evaluate_model(model, samples, studies, args.batch_size)
    report = evaluate_scores(scores, labels, list(vocab.labels))
    print(f"{args.split}: micro-AUC {report.auc_micro:.4f} macro-AUC {report.auc_macro:.4f}")
    if args.out:
        payload = report.to_json()
        payload["by_qtype"] = {
            qt: r.to_json() for qt, r in slice_by_qtype(
                [s.qtype for s in samples], scores, labels, list(vocab.labels)
            ).items()
        }
        Path(args.out).write_text(json.dumps(payload, indent=1), encoding="utf-8")
        print(f"per-class table -> {args.out}")
    return 0


def cmd_sample_validation(args) -> int:
    pairs = _load_pairs(args.qa)
    reports = {r.study_id: r for r in _load_reports(args.reports)} if args.reports else None
    records = {r.study_id: r for r in _load_records(args.keyinfo)} if args.keyinfo else None
    rows = qa_mod.sample_for_validation(pairs, args.n, args.seed, reports, records)
    reports_mod.write_jsonl(args.out, rows)
    print(f"wrote {len(rows)} review rows -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_service, create_app

    service = build_service(args.checkpoint, args.fixtures, args.kg, args.session_dir)
    app = create_app(service, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_gradcheck(args) -> int:
    from .kg import load_anatomical_kg
    from .nn import finite_difference_check
    from .model import assemble_batch
    from .relation_graphs import Roi, RoiSet

    rng = np.random.default_rng(args.seed)
    kg = load_anatomical_kg()
    names = ["heart", "left lung", "right lung", "cardiomegaly", "pleural effusion"]
    rois = []
    for i in range(5):
        x, y = rng.uniform(0.05, 0.5, 2)
        w, h = rng.uniform(0.1, 0.3, 2)
        rois.append(Roi((x, y, min(w, 1 - x), min(h, 1 - y)), names[i], rng.normal(size=8)))
    roiset = RoiSet(image_id="gc-img", study_id="gc", rois=tuple(rois))
    config = ModelConfig(
        d_o=8, d=16, d_q=16, heads=2, layers=2, embed_fixed=8, embed_learned=8, seed=args.seed
    )
    questions = ["is there pleural effusion?", "what level is the edema?"]
    model = VqaModel(config, fit_token_vocab(questions), [f"answer{i}" for i in range(8)])
    study = prepare_study(roiset, kg, config.spatial_t)
    targets = np.zeros((2, 8))
    targets[0, 0] = targets[1, 3] = 1.0
    batch = assemble_batch([study, study], [model.token_ids(q) for q in questions], targets)
    err = finite_difference_check(lambda: model.loss(batch), model.store, max_coords=args.coords)
    print(f"max relative gradient error: {err:.3e}")
    return 0 if err < 1e-4 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cxrvqa",
        description=__doc__,
        epilog="--config FILE (before the subcommand) loads flag values "
        "from JSON; explicitly passed flags win.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="generate a synthetic report corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--abnormality-ids", default="", help="comma-separated pool, default all 30")
    _add_seed(p)
    p.set_defaults(fn=cmd_synth_corpus)

    p = sub.add_parser("build-keyinfo", help="extract KeyInfo records from reports")
    p.add_argument("--reports", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default="", help="optional ground-truth keyinfo for round-trip check")
    p.add_argument("--window-tokens", type=int, default=6)
    p.set_defaults(fn=cmd_build_keyinfo)

    p = sub.add_parser("gen-qa", help="generate QA pairs from KeyInfo")
    p.add_argument("--keyinfo", required=True)
    p.add_argument("--reports", required=True)
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(fn=cmd_gen_qa)

    p = sub.add_parser("build-cooccurrence", help="disease co-occurrence graph from KeyInfo")
    p.add_argument("--keyinfo", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--normalization", choices=("corpus", "conditional", "geometric"), default="corpus")
    p.set_defaults(fn=cmd_build_cooccurrence)

    p = sub.add_parser("build-graphs", help="merge knowledge graphs; optionally dump per-study graphs")
    p.add_argument("--anatomical", default="", help="anatomical KG file (bundled default)")
    p.add_argument("--cooccurrence", default="")
    p.add_argument("--out", required=True)
    p.add_argument("--fixtures", default="")
    p.add_argument("--dump", default="")
    p.add_argument("--spatial-t", type=float, default=DEFAULT_SPATIAL_T)
    p.set_defaults(fn=cmd_build_graphs)

    p = sub.add_parser("synth-fixtures", help="synthesize ROI fixtures for a corpus")
    p.add_argument("--reports", required=True)
    p.add_argument("--keyinfo", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--d-o", type=int, default=64)
    _add_seed(p)
    p.set_defaults(fn=cmd_synth_fixtures)

    def _train_eval_common(p):
        p.add_argument("--qa", required=True)
        p.add_argument("--answers", required=True)
        p.add_argument("--fixtures", required=True)
        p.add_argument("--kg", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--batch-size", type=int, default=64)
        p.add_argument("--d-o", type=int, default=64)
        p.add_argument("--d", type=int, default=64)
        p.add_argument("--d-q", type=int, default=64)
        p.add_argument("--heads", type=int, default=4)
        p.add_argument("--layers", type=int, default=2)
        p.add_argument("--spatial-t", type=float, default=DEFAULT_SPATIAL_T)
        _add_seed(p)

    p = sub.add_parser("train", help="train the three-graph attention model")
    _train_eval_common(p)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--word-vectors", default="",
                   help="optional 'token v1 v2 ...' file for the fixed embedding half")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    _train_eval_common(p)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", default="")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sample-validation", help="sample QA pairs for human review")
    p.add_argument("--qa", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--reports", default="")
    p.add_argument("--keyinfo", default="")
    _add_seed(p)
    p.set_defaults(fn=cmd_sample_validation)

    p = sub.add_parser("serve", help="run the diagnosis HTTP service")
    env = os.environ
    p.add_argument("--checkpoint", default=env.get("CXRVQA_CHECKPOINT", ""),
                   required="CXRVQA_CHECKPOINT" not in env)
    p.add_argument("--fixtures", default=env.get("CXRVQA_FIXTURES", ""),
                   required="CXRVQA_FIXTURES" not in env)
    p.add_argument("--kg", default=env.get("CXRVQA_KG", ""),
                   required="CXRVQA_KG" not in env)
    p.add_argument("--host", default=env.get("CXRVQA_HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(env.get("CXRVQA_PORT", "8400")))
    p.add_argument("--static", default=env.get("CXRVQA_STATIC", ""),
                   help="built UI assets directory")
    p.add_argument("--session-dir", default="", help="optional JSONL session persistence")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--coords", type=int, default=64)
    _add_seed(p)
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def _apply_config_file(argv: list[str]) -> list[str] | None:
    """Expand --config FILE into flags injected after the subcommand.

    Injected flags precede the explicit ones, so anything typed on the
    command line wins (argparse keeps the last occurrence).
    """
    if "--config" not in argv:
        return argv
    at = argv.index("--config")
    if at + 1 >= len(argv):
        print("error: --config needs a file path", file=sys.stderr)
        return None
    config_path = argv[at + 1]
    rest = argv[:at] + argv[at + 2 :]
    try:
        overrides = json.loads(Path(config_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read --config: {exc}", file=sys.stderr)
        return None
    flags: list[str] = []
    for key, value in overrides.items():
        flags.extend([f"--{str(key).replace('_', '-')}", str(value)])
    for i, token in enumerate(rest):
        if not token.startswith("-"):
            return rest[: i + 1] + flags + rest[i + 1 :]
    return rest + flags


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    argv = _apply_config_file(argv)
    if argv is None:
        return 1
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
