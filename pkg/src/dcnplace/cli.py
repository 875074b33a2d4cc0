"""Command line front end: ``dcnplace {topo,ingest,query,formulate,train,eval}``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .experiments import run_eval, summarize, summary_table, write_metrics_csv
from .knowledge import (ChunkStore, FormulationRequest, RemoteLLMError, StoreError, formulate, retrieve_top_k,
                        route, embed)
from .topology import build_topology

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment configuration (TOML)")
    common.add_argument("--seed", type=int, help="override the configured seed(s)")
    common.add_argument("--out", type=Path, help="output directory (default: run.out_dir)")
    common.add_argument("--quiet", action="store_true")

    p = _Parser(prog="dcnplace", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("topo", parents=[common], help="print topology node/edge counts and hop histogram")

    ing = sub.add_parser("ingest", parents=[common], help="chunk and embed a directory of text files")
    ing.add_argument("--corpus", required=True)
    ing.add_argument("--dir", required=True, type=Path)
    ing.add_argument("--window", type=int)
    ing.add_argument("--overlap", type=int)

    q = sub.add_parser("query", parents=[common], help="route a query and list the nearest chunks")
    q.add_argument("--text", required=True)
    q.add_argument("--k", type=int)

    f = sub.add_parser("formulate", parents=[common], help="retrieve context and formulate the placement problem")
    f.add_argument("--text", required=True)
    f.add_argument("--backend", choices=("mock", "remote"))
    f.add_argument("--k", type=int)

    sub.add_parser("train", parents=[common], help="train one seed and write metrics + checkpoint")
    sub.add_parser("eval", parents=[common], help="train all seeds with baselines and write the summary")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed, run=dataclasses.replace(cfg.run, seeds=(args.seed,)))
    return cfg


def _out_dir(args, cfg) -> Path:
    return args.out if args.out is not None else Path(cfg.run.out_dir)


def _store_path(args, cfg) -> Path:
    p = Path(cfg.store.path)
    return p if p.is_absolute() else _out_dir(args, cfg) / p


def _load_store(args, cfg) -> ChunkStore:
    path = _store_path(args, cfg)
    if not path.exists():
        raise StoreError(f"no chunk store at {path}; run `dcnplace ingest` first")
    return ChunkStore.load(path)


def cmd_topo(args, cfg):
    print(build_topology(cfg.topology).describe())


def cmd_ingest(args, cfg):
    path = _store_path(args, cfg)
    store = ChunkStore.load(path) if path.exists() else ChunkStore(cfg.store.dim)
    window = args.window or cfg.store.window
    overlap = cfg.store.overlap if args.overlap is None else args.overlap
    if not args.dir.is_dir():
        raise StoreError(f"not a directory: {args.dir}")
    files = sorted(p for p in args.dir.iterdir() if p.is_file() and p.suffix in (".txt", ".md"))
    added = 0
    for fp in files:
        added += len(store.ingest(fp.name, args.corpus, fp.read_text(encoding="utf-8"), window, overlap))
    path.parent.mkdir(parents=True, exist_ok=True)
    store.save(path)
    if not args.quiet:
        print(f"ingested {len(files)} documents into corpus {args.corpus!r}: {added} chunks "
              f"(store now {len(store)} chunks at {path})")


def _retrieve(args, cfg, store):
    corpus = route(args.text, store)
    hits = retrieve_top_k(store, args.text, args.k or cfg.store.top_k, corpus=corpus)
    return corpus, hits


def cmd_query(args, cfg):
    store = _load_store(args, cfg)
    corpus, hits = _retrieve(args, cfg, store)
    q = embed(args.text, store.embedding_dim)
    print(f"routed to corpus: {corpus}")
    for c in hits:
        d = float(store.distances(q)[store.chunks.index(c)])
        print(f"{c.chunk_id}\t{d:.6f}\t{c.doc_id}\t{c.text[:80]}")


def cmd_formulate(args, cfg):
    store = _load_store(args, cfg) if _store_path(args, cfg).exists() else ChunkStore(cfg.store.dim)
    hits = _retrieve(args, cfg, store)[1] if len(store) else []
    llm = cfg.llm if args.backend is None else dataclasses.replace(cfg.llm, backend=args.backend)
    result = formulate(FormulationRequest(args.text, tuple(c.text for c in hits)), llm)
    print(result.text)


def cmd_train(args, cfg):
    from .diffusion import save_policy
    from .trainer import train

    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    rep = train(cfg)
    write_metrics_csv(out / "metrics.csv", [rep])
    save_policy(out / f"policy_seed{rep.seed}.bin", rep.policy, rep.schedule)
    if not args.quiet:
        print(summary_table(summarize([rep], cfg.run.window)))


def cmd_eval(args, cfg):
    return run_eval(cfg, _out_dir(args, cfg), quiet=args.quiet)


COMMANDS = {"topo": cmd_topo, "ingest": cmd_ingest, "query": cmd_query, "formulate": cmd_formulate,
            "train": cmd_train, "eval": cmd_eval}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        status = COMMANDS[args.command](args, cfg)
    except (StoreError, RemoteLLMError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if status is None else status


if __name__ == "__main__":
    sys.exit(main())
