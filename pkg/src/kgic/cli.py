"""Command-line surface for reproducible experiments.

Subcommands: ingest, split, train-kge, eval-lp, predict-props, eval-pp,
run-ic, eval-ic, ablate, mock-server.  Options can come from a key-value
config file (--config, lines of "name = value" using the long flag names);
explicit flags win.  KGIC_BACKEND overrides the backend transport spec.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from kgic import __version__, genlp, ingest, kge, pipeline, properties
from kgic.backend import BackendClient, RemotePropertyScorer, RemoteTokenScorer, parse_backend_spec
from kgic.graph import KnowledgeGraph, SplitSet

STAGE_ONE_METHODS = ("recoin", "knn", "content", "hybrid", "linear", "remote")
STAGE_TWO_METHODS = ("transe", "rotate", "generative-local-mock", "generative-remote")


class ConfigError(ValueError):
    pass


def load_config(path: str) -> dict[str, str]:
    """Parse "name = value" lines; blank lines and #-comments are skipped."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected 'name = value'")
            name, _, value = line.partition("=")
            out[name.strip().replace("-", "_")] = value.strip()
    return out


def resolve(args: argparse.Namespace, config: Mapping[str, str], name: str,
            converter: Callable = str, default=None):
    """Priority: explicit flag > config file > default."""
    flag_value = getattr(args, name, None)
    if flag_value is not None:
        return flag_value
    if name in config:
        try:
            return converter(config[name])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config value {name} = {config[name]!r}: {exc}") from exc
    return default


def parse_bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_ratios(text: str) -> tuple[float, float, float]:
    parts = tuple(float(x) for x in text.split(","))
    if len(parts) != 3:
        raise ValueError("expected three comma-separated fractions")
    return parts


def parse_ks(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _load_graph(path: str) -> KnowledgeGraph:
    return KnowledgeGraph.load(path)


def _load_split(path: str, graph: KnowledgeGraph) -> SplitSet:
    split = SplitSet.load(path)
    split.assert_partition(graph.n_triples)
    return split


def _write_report(path: str | None, payload: Mapping) -> None:
    if path:
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def _backend_client(args, config) -> BackendClient:
    spec = os.environ.get("KGIC_BACKEND") or resolve(args, config, "backend")
    if not spec:
        raise ConfigError("a backend spec is required (--backend or KGIC_BACKEND)")
    timeout = resolve(args, config, "backend_timeout", float, 30.0)
    retries = resolve(args, config, "backend_retries", int, 1)
    return BackendClient(parse_backend_spec(spec, timeout=timeout, max_retries=retries))


def _build_stage_one(method: str, graph, split, args, config,
                     mask_types=False, mask_description=False,
                     client: BackendClient | None = None):
    knn_k = resolve(args, config, "knn_k", int, 10)
    alpha = resolve(args, config, "alpha", float, 0.5)
    seed = resolve(args, config, "seed", int, 0)
    if method == "recoin":
        return pipeline.RecoinMethod(graph, split)
    if method == "knn":
        return pipeline.KnnMethod(graph, split, knn_k)
    if method == "content":
        return pipeline.ContentMethod(graph, split, knn_k, mask_types, mask_description)
    if method == "hybrid":
        return pipeline.HybridMethod(graph, split, knn_k, alpha, mask_types, mask_description)
    if method == "linear":
        epochs = resolve(args, config, "epochs", int, 300)
        lr = resolve(args, config, "lr", float, 2.0)
        return pipeline.LinearMethod(graph, split, epochs, lr, seed, mask_types, mask_description)
    if method == "remote":
        assert client is not None
        scorer = RemotePropertyScorer(client, graph, mask_types, mask_description)
        scorer.name = "remote"
        scorer.split_fingerprint = split.fingerprint_hex()
        return scorer
    raise ConfigError(f"unknown stage-one method {method!r}")


def _tune_stage_one_threshold(method, graph, split) -> float:
    valid_heads = sorted({graph.triples[i].head for i in split.valid})
    if not valid_heads:
        return 0.5
    scores = np.vstack([method.scores(h) for h in valid_heads])
    gold = pipeline.gold_property_matrix(graph, split.valid, valid_heads)
    return properties.tune_threshold(scores, gold)


def _build_stage_two(method: str, graph, split, args, config,
                     mask_types=False, mask_description=False,
                     client: BackendClient | None = None):
    beam_width = resolve(args, config, "beam_width", int, 10)
    max_len = resolve(args, config, "max_len", int, 64)
    if method in ("transe", "rotate"):
        ckpt = resolve(args, config, "checkpoint")
        if not ckpt:
            raise ConfigError(f"stage-two {method} needs --checkpoint")
        table = kge.EmbeddingTable.load(ckpt)
        if table.model != method:
            raise ConfigError(f"checkpoint holds a {table.model} table, not {method}")
        if table.split_fingerprint and table.split_fingerprint != split.fingerprint_hex():
            raise RuntimeError(
                f"checkpoint was trained on split {table.split_fingerprint}, "
                f"current split is {split.fingerprint_hex()}"
            )
        return pipeline.KgePredictor(table, resolve(args, config, "norm_p", int, 1))
    if method == "generative-local-mock":
        labels = [(e, graph.entities.label(e)) for e in range(graph.n_entities)]
        tokenizer = genlp.CharTokenizer(lbl for _, lbl in labels)
        trie = genlp.build_trie(labels, tokenizer)
        scorer = genlp.NgramTailScorer(tokenizer.vocab)
        for i in split.train:
            t = graph.triples[i]
            prompt = genlp.build_prompt(
                graph.entities.label(t.head), graph.entity_meta(t.head),
                graph.relations.label(t.relation), mask_types, mask_description,
            )
            scorer.observe(prompt, tokenizer.encode(graph.entities.label(t.tail)) + [genlp.END_TOKEN])
        return pipeline.GenerativePredictor(
            scorer, trie, graph, split.fingerprint_hex(), beam_width, max_len,
            mask_types, mask_description, name="generative-local-mock",
        )
    if method == "generative-remote":
        assert client is not None
        scorer = RemoteTokenScorer(client)
        tokenizer = genlp.CharTokenizer.from_vocab(scorer.vocab)
        trie = genlp.build_trie(
            [(e, graph.entities.label(e)) for e in range(graph.n_entities)], tokenizer
        )
        return pipeline.GenerativePredictor(
            scorer, trie, graph, split.fingerprint_hex(), beam_width, max_len,
            mask_types, mask_description, name="generative-remote",
        )
    raise ConfigError(f"unknown stage-two method {method!r}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args, config) -> int:
    triples = args.triples or config.get("triples", "").split()
    if not triples:
        raise ConfigError("ingest needs at least one --triples file")
    metadata = resolve(args, config, "metadata")
    ds = ingest.DatasetConfig(tuple(triples), metadata)
    graph = ingest.load_dataset(ds)
    out_dir = Path(resolve(args, config, "out", str, "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot = out_dir / "graph.json.gz"
    graph.save(str(snapshot))
    print(f"entities: {graph.n_entities}, relations: {graph.n_relations}, facts: {graph.n_triples}")
    if graph.duplicates_dropped:
        print(f"duplicate triples dropped: {graph.duplicates_dropped}")
    print(f"snapshot: {snapshot}")
    return 0


def cmd_split(args, config) -> int:
    graph = _load_graph(resolve(args, config, "graph"))
    ratios = resolve(args, config, "ratios", parse_ratios, (0.7, 0.15, 0.15))
    seed = resolve(args, config, "seed", int, 0)
    split = ingest.stratified_split(graph, ratios, seed)
    out_dir = Path(resolve(args, config, "out", str, "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "split.json"
    split.save(str(path))
    print(f"train: {len(split.train)}, valid: {len(split.valid)}, test: {len(split.test)}")
    print(f"fingerprint: {split.fingerprint_hex()}")
    print(f"split: {path}")
    violations = ingest.leakage_check(split, graph.n_triples)
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
    return 1 if violations else 0


def cmd_train_kge(args, config) -> int:
    graph = _load_graph(resolve(args, config, "graph"))
    split = _load_split(resolve(args, config, "split"), graph)
    cfg = kge.KgeConfig(
        model=resolve(args, config, "model", str, "transe"),
        dim=resolve(args, config, "dim", int, 64),
        norm_p=resolve(args, config, "norm_p", int, 1),
        margin=resolve(args, config, "margin", float),
        adversarial_temp=resolve(args, config, "adv_temp", float, 1.0),
        num_negatives=resolve(args, config, "negatives", int, 8),
        neg_mode=resolve(args, config, "neg_mode", str, "both"),
        epochs=resolve(args, config, "epochs", int, 100),
        batch_size=resolve(args, config, "batch_size", int, 256),
        lr=resolve(args, config, "lr", float, 0.05),
        seed=resolve(args, config, "seed", int, 0),
    )
    train_triples = [graph.triples[i] for i in split.train]
    table, losses = kge.train(cfg, train_triples, graph.n_entities, graph.n_relations,
                              log_every=resolve(args, config, "log_every", int, 0))
    table.split_fingerprint = split.fingerprint_hex()
    out = resolve(args, config, "out", str, f"{cfg.model}.kge")
    table.save(out)
    print(f"model: {cfg.model}, dim: {cfg.dim}, epochs: {cfg.epochs}, final loss: {losses[-1]:.6f}")
    print(f"split fingerprint: {split.fingerprint_hex()}")
    print(f"checkpoint: {out}")
    return 0


def cmd_eval_lp(args, config) -> int:
    graph = _load_graph(resolve(args, config, "graph"))
    split = _load_split(resolve(args, config, "split"), graph)
    table = kge.EmbeddingTable.load(resolve(args, config, "checkpoint"))
    if table.split_fingerprint and table.split_fingerprint != split.fingerprint_hex():
        raise RuntimeError(
            f"checkpoint was trained on split {table.split_fingerprint}, "
            f"got {split.fingerprint_hex()}"
        )
    ks = resolve(args, config, "ks", parse_ks, (1, 5, 10))
    raw = bool(resolve(args, config, "raw", parse_bool, False))
    p = resolve(args, config, "norm_p", int, 1)
    jobs = resolve(args, config, "jobs", int, 1)
    test_triples = [graph.triples[i] for i in split.test]

    tails_by_pair: dict[tuple[int, int], set[int]] = {}
    if not raw:
        for t in graph.triples:
            tails_by_pair.setdefault((t.head, t.relation), set()).add(t.tail)

    def rank_one(t):
        known = tails_by_pair.get((t.head, t.relation), set()) if not raw else None
        return kge.rank_tail(table, t.head, t.relation, t.tail, p=p, raw=raw, known_tails=known)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            ranks = list(pool.map(rank_one, test_triples))
    else:
        ranks = [rank_one(t) for t in test_triples]

    results = {k: kge.hits_at_k(ranks, k) for k in ks}
    protocol = "raw" if raw else "filtered"
    print(f"tail ranking ({protocol}), {len(ranks)} test triples, split {split.fingerprint_hex()}")
    for k in ks:
        print(f"Hits@{k}: {results[k]:.4f}")
    print(f"MR: {float(np.mean(ranks)):.2f}")
    _write_report(resolve(args, config, "report"), {
        "task": "link-prediction",
        "protocol": protocol,
        "hits": {str(k): results[k] for k in ks},
        "mean_rank": float(np.mean(ranks)),
        "n_test": len(ranks),
        "split_fingerprint": split.fingerprint_hex(),
        "config": {"model": table.model, "dim": table.dim, "norm_p": p, "ks": list(ks),
                   "seed": table.seed, "jobs": jobs, "raw": raw},
    })
    return 0


def _stage_one_with_threshold(args, config, graph, split, mask_types=False, mask_description=False):
    method_name = resolve(args, config, "method", str) or resolve(args, config, "stage_one", str, "recoin")
    client = _backend_client(args, config) if method_name == "remote" else None
    method = _build_stage_one(method_name, graph, split, args, config, mask_types, mask_description, client)
    threshold = resolve(args, config, "threshold", float)
    if threshold is None:
        threshold = _tune_stage_one_threshold(method, graph, split)
    return method, threshold, client


def cmd_predict_props(args, config) -> int:
    graph = _load_graph(resolve(args, config, "graph"))
    split = _load_split(resolve(args, config, "split"), graph)
    method, threshold, client = _stage_one_with_threshold(args, config, graph, split)
    try:
        heads = pipeline.split_test_heads(graph, split)
        out_dir = Path(resolve(args, config, "out", str, "."))
        out_dir.mkdir(parents=True, exist_ok=True)
        scores_path = out_dir / "scores.tsv"
        selected_path = out_dir / "selected.tsv"
        with open(scores_path, "w", encoding="utf-8") as sfh, \
                open(selected_path, "w", encoding="utf-8") as pfh:
            for head in heads:
                scores = method.scores(head)
                head_label = graph.entities.label(head)
                for rel in range(graph.n_relations):
                    sfh.write(f"{head_label}\t{graph.relations.label(rel)}\t{scores[rel]:.6g}\n")
                for rel in np.flatnonzero(properties.select_properties(scores, threshold)):
                    pfh.write(f"{head_label}\t{graph.relations.label(int(rel))}\n")
        meta = {
            "method": method.name,
            "threshold": threshold,
            "n_heads": len(heads),
            "split_fingerprint": split.fingerprint_hex(),
        }
        (out_dir / "predict-props.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        print(f"method: {method.name}, threshold: {threshold:g}, heads: {len(heads)}")
        print(f"scores: {scores_path}")
        print(f"selected: {selected_path}")
    finally:
        if client:
            client.shutdown()
    return 0


def cmd_eval_pp(args, config) -> int:
    graph = _load_graph(resolve(args, config, "graph"))
    split = _load_split(resolve(args, config, "split"), graph)
    method, threshold, client = _stage_one_with_threshold(args, config, graph, split)
    try:
        result = pipeline.eval_property_prediction(method, graph, split, threshold)
    finally:
        if client:
            client.shutdown()
    print(f"method: {result['method']}, threshold: {result['threshold']:g}, "
          f"test heads: {result['n_heads']}, split {result['split_fingerprint']}")
    print(f"precision: {result['precision']:.4f}")
    print(f"recall:    {result['recall']:.4f}")
    print(f"f1:        {result['f1']:.4f}")
    echo = _run_config_echo(args, config, {"method": result["method"],
                                           "threshold": result["threshold"]})
    _write_report(resolve(args, config, "report"),
                  {"task": "property-prediction", **result, "config": echo})
    return 0


def _run_config_echo(args, config, extra: Mapping | None = None) -> dict:
    echo = {
        "stage_one": resolve(args, config, "stage_one"),
        "stage_two": resolve(args, config, "stage_two"),
        "threshold": resolve(args, config, "threshold", float),
        "k_max": resolve(args, config, "k_max", int, 10),
        "seed": resolve(args, config, "seed", int, 0),
        "knn_k": resolve(args, config, "knn_k", int, 10),
        "alpha": resolve(args, config, "alpha", float, 0.5),
        "beam_width": resolve(args, config, "beam_width", int, 10),
        "checkpoint": resolve(args, config, "checkpoint"),
    }
    if extra:
        echo.update(extra)
    return {k: v for k, v in echo.items() if v is not None}


def cmd_run_ic(args, config) -> int:
    graph = _load_graph(resolve(args, config, "graph"))
    split = _load_split(resolve(args, config, "split"), graph)
    stage_two_name = resolve(args, config, "stage_two", str, "transe")
    needs_backend = stage_two_name == "generative-remote"
    method, threshold, client = _stage_one_with_threshold(args, config, graph, split)
    if client is None and needs_backend:
        client = _backend_client(args, config)
    try:
        predictor = _build_stage_two(stage_two_name, graph, split, args, config, client=client)
        k_max = resolve(args, config, "k_max", int, 10)
        heads = pipeline.split_test_heads(graph, split)
        candidates = pipeline.generate_candidates(method, heads, threshold)
        completion = pipeline.complete(predictor, candidates.pairs, k_max)
    finally:
        if client:
            client.shutdown()

    out_dir = Path(resolve(args, config, "out", str, "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    pred_path = out_dir / "predictions.tsv"
    with open(pred_path, "w", encoding="utf-8") as fh:
        for p in completion.predictions:
            h = graph.entities.label(p.pair.head)
            r = graph.relations.label(p.pair.relation)
            for rank, (tail, score) in enumerate(p.tails, start=1):
                fh.write(f"{h}\t{r}\t{graph.entities.label(tail)}\t{score:.6g}\t{rank}\n")
    run = {
        "format": "kgic-ic-run",
        "version": 1,
        "candidates": {
            "method": candidates.method,
            "threshold": candidates.threshold,
            "split_fingerprint": candidates.split_fingerprint,
            "pairs": [[p.head, p.relation, p.score] for p in candidates.pairs],
        },
        "completion": {
            "method": completion.method,
            "split_fingerprint": completion.split_fingerprint,
            "k_max": completion.k_max,
            "predictions": [
                {"pair": [p.pair.head, p.pair.relation, p.pair.score],
                 "tails": [[t, s] for t, s in p.tails]}
                for p in completion.predictions
            ],
            "failures": [[f[0].head, f[0].relation, f[1]] for f in completion.failures],
        },
        "config": _run_config_echo(args, config, {"stage_one": method.name,
                                                  "stage_two": stage_two_name,
                                                  "threshold": threshold}),
    }
    run_path = out_dir / "run.json"
    run_path.write_text(json.dumps(run, indent=2, sort_keys=True), encoding="utf-8")
    print(f"stage one: {method.name} (threshold {threshold:g}), stage two: {stage_two_name}")
    print(f"pairs: {len(candidates.pairs)}, predictions: {len(completion.predictions)}, "
          f"failures: {len(completion.failures)}")
    print(f"run: {run_path}")
    print(f"predictions: {pred_path}")
    return 0


def _load_run(path: str) -> tuple[pipeline.CandidateSet, pipeline.CompletionResult, dict]:
    with open(path, encoding="utf-8") as fh:
        run = json.load(fh)
    if run.get("format") != "kgic-ic-run":
        raise RuntimeError(f"{path} is not an instance-completion run file")
    c = run["candidates"]
    candidates = pipeline.CandidateSet(
        [pipeline.CandidatePair(int(h), int(r), float(s)) for h, r, s in c["pairs"]],
        c["threshold"], c["method"], c["split_fingerprint"],
    )
    m = run["completion"]
    completion = pipeline.CompletionResult(
        [
            pipeline.InstancePrediction(
                pipeline.CandidatePair(int(p["pair"][0]), int(p["pair"][1]), float(p["pair"][2])),
                [(int(t), float(s)) for t, s in p["tails"]],
            )
            for p in m["predictions"]
        ],
        [(pipeline.CandidatePair(int(h), int(r), 0.0), msg) for h, r, msg in m["failures"]],
        m["method"], m["split_fingerprint"], m["k_max"],
    )
    return candidates, completion, run.get("config", {})


def cmd_eval_ic(args, config) -> int:
    graph = _load_graph(resolve(args, config, "graph"))
    split = _load_split(resolve(args, config, "split"), graph)
    run_path = resolve(args, config, "run")
    if not run_path:
        raise ConfigError("eval-ic needs --run pointing at run.json from run-ic")
    candidates, completion, run_config = _load_run(run_path)
    if candidates.split_fingerprint != split.fingerprint_hex():
        raise pipeline.LeakageError(
            f"run used split {candidates.split_fingerprint}, got {split.fingerprint_hex()}"
        )
    gold = [graph.triples[i] for i in split.test]
    ks = resolve(args, config, "ks", parse_ks, (1, 5, 10))
    report = pipeline.eval_ic(candidates, completion, gold, ks, run_config)
    print(report.to_text())
    _write_report(resolve(args, config, "report"), report.to_dict())
    tsv_path = resolve(args, config, "report_tsv")
    if tsv_path:
        Path(tsv_path).write_text(report.to_tsv(), encoding="utf-8")
    return 0


def cmd_ablate(args, config) -> int:
    graph = _load_graph(resolve(args, config, "graph"))
    split = _load_split(resolve(args, config, "split"), graph)
    stage_one_name = resolve(args, config, "stage_one", str, "linear")
    stage_two_name = resolve(args, config, "stage_two", str, "generative-local-mock")
    if stage_one_name == "remote" or stage_two_name == "generative-remote":
        raise ConfigError("ablate runs local methods only; remote backends vary outside the masks")
    threshold = resolve(args, config, "threshold", float)
    if threshold is None:
        base = _build_stage_one(stage_one_name, graph, split, args, config)
        threshold = _tune_stage_one_threshold(base, graph, split)

    def make_stage_one(mask_types, mask_description):
        return _build_stage_one(stage_one_name, graph, split, args, config, mask_types, mask_description)

    def make_stage_two(mask_types, mask_description):
        return _build_stage_two(stage_two_name, graph, split, args, config, mask_types, mask_description)

    ks = resolve(args, config, "ks", parse_ks, (1, 5, 10))
    reports = pipeline.ablate(
        graph, split, make_stage_one, make_stage_two, threshold,
        resolve(args, config, "k_max", int, 10), ks,
        _run_config_echo(args, config, {"stage_one": stage_one_name, "stage_two": stage_two_name,
                                        "threshold": threshold}),
    )
    print(f"ablation over type/description masks, split {split.fingerprint_hex()}")
    print(pipeline.ablation_table(reports, ks))
    _write_report(resolve(args, config, "report"),
                  {label: r.to_dict() for label, r in reports.items()})
    return 0


def cmd_mock_server(args, config) -> int:
    from kgic import mockserver

    argv = ["--config", resolve(args, config, "mock_config") or args.mock_config]
    transport = resolve(args, config, "transport", str, "stdio")
    argv += ["--transport", transport]
    if transport == "tcp":
        argv += ["--port", str(resolve(args, config, "port", int, 0))]
    return mockserver.main(argv)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgic", description=__doc__)
    parser.add_argument("--version", action="version", version=f"kgic {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="key-value config file; flags win")
        return p

    p = add("ingest", cmd_ingest, "parse TSV files into a graph snapshot")
    p.add_argument("--triples", nargs="+", help="triple TSV file(s)")
    p.add_argument("--metadata", help="entity metadata TSV")
    p.add_argument("--out", help="output directory")

    p = add("split", cmd_split, "seeded stratified split by head type")
    p.add_argument("--graph", help="graph snapshot")
    p.add_argument("--ratios", type=parse_ratios, help="train,valid,test fractions")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("train-kge", cmd_train_kge, "train embedding link predictor")
    for flag, typ in [("--graph", str), ("--split", str), ("--model", str), ("--out", str),
                      ("--dim", int), ("--epochs", int), ("--batch-size", int), ("--negatives", int),
                      ("--norm-p", int), ("--seed", int), ("--log-every", int)]:
        p.add_argument(flag, type=typ)
    p.add_argument("--lr", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--adv-temp", type=float)
    p.add_argument("--neg-mode", choices=["tail", "head", "both"])

    p = add("eval-lp", cmd_eval_lp, "filtered tail-ranking evaluation")
    for flag, typ in [("--graph", str), ("--split", str), ("--checkpoint", str),
                      ("--norm-p", int), ("--jobs", int), ("--report", str)]:
        p.add_argument(flag, type=typ)
    p.add_argument("--ks", type=parse_ks)
    p.add_argument("--raw", action="store_const", const=True,
                   help="rank against all entities without filtering known tails")

    p = add("predict-props", cmd_predict_props, "stage-one scores and selected pairs")
    for flag, typ in [("--graph", str), ("--split", str), ("--out", str), ("--threshold", float),
                      ("--knn-k", int), ("--alpha", float), ("--epochs", int), ("--lr", float),
                      ("--seed", int), ("--backend", str), ("--backend-timeout", float),
                      ("--backend-retries", int)]:
        p.add_argument(flag, type=typ)
    p.add_argument("--method", choices=STAGE_ONE_METHODS)

    p = add("eval-pp", cmd_eval_pp, "micro P/R/F1 of stage one on test heads")
    for flag, typ in [("--graph", str), ("--split", str), ("--threshold", float),
                      ("--knn-k", int), ("--alpha", float), ("--epochs", int), ("--lr", float),
                      ("--seed", int), ("--report", str), ("--backend", str),
                      ("--backend-timeout", float), ("--backend-retries", int)]:
        p.add_argument(flag, type=typ)
    p.add_argument("--method", choices=STAGE_ONE_METHODS)

    p = add("run-ic", cmd_run_ic, "two-stage instance completion")
    for flag, typ in [("--graph", str), ("--split", str), ("--out", str), ("--threshold", float),
                      ("--k-max", int), ("--knn-k", int), ("--alpha", float), ("--epochs", int),
                      ("--lr", float), ("--seed", int), ("--checkpoint", str), ("--norm-p", int),
                      ("--beam-width", int), ("--max-len", int), ("--backend", str),
                      ("--backend-timeout", float), ("--backend-retries", int)]:
        p.add_argument(flag, type=typ)
    p.add_argument("--stage-one", choices=STAGE_ONE_METHODS)
    p.add_argument("--stage-two", choices=STAGE_TWO_METHODS)

    p = add("eval-ic", cmd_eval_ic, "score a run against the test split")
    for flag, typ in [("--graph", str), ("--split", str), ("--run", str), ("--report", str),
                      ("--report-tsv", str)]:
        p.add_argument(flag, type=typ)
    p.add_argument("--ks", type=parse_ks)

    p = add("ablate", cmd_ablate, "type/description mask ablation (4 runs)")
    for flag, typ in [("--graph", str), ("--split", str), ("--threshold", float),
                      ("--k-max", int), ("--knn-k", int), ("--alpha", float), ("--epochs", int),
                      ("--lr", float), ("--seed", int), ("--checkpoint", str), ("--norm-p", int),
                      ("--beam-width", int), ("--max-len", int), ("--report", str)]:
        p.add_argument(flag, type=typ)
    p.add_argument("--stage-one", choices=[m for m in STAGE_ONE_METHODS if m != "remote"])
    p.add_argument("--stage-two", choices=[m for m in STAGE_TWO_METHODS if m != "generative-remote"])
    p.add_argument("--ks", type=parse_ks)

    p = add("mock-server", cmd_mock_server, "run the bundled mock model server")
    p.add_argument("--mock-config", help="mock table config JSON")
    p.add_argument("--transport", choices=["stdio", "tcp"])
    p.add_argument("--port", type=int)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config: dict[str, str] = {}
    try:
        if getattr(args, "config", None):
            config = load_config(args.config)
        return args.func(args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
