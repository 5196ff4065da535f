"""Batch command line: ``tdforest <command> [flags] INPUT...``.

Inputs are JSON-lines files (one graph per line), directories of ``.json``
files, or single ``.json`` files; ``-`` reads JSON lines from stdin.  Every
command writes one JSON document whose ``results`` list follows input order.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterator

import numpy as np

from . import bitset
from .encoder import EncoderConfig, EncoderParams
from .expected import marginals
from .forest import (
    FREQ_ORDERS,
    Forest,
    ForestSkip,
    ForestStructureError,
    binarize,
    build_forest,
    count_trees,
    enumerate_trees,
    prune_min_bags,
)
from .graph import Graph, GraphFormatError, graph_stats, parse_graph
from .motif import MotifTable, canonical_code
from .oracle import (
    MAX_ORACLE_TREES,
    OracleBudgetExceeded,
    brute_force_marginals,
    brute_force_tds,
    canonical_td,
)
from .pipeline import encode, forest_for
from .recognize import GraphTooLarge, treewidth, validate_td

MAX_WIDTH = 8


@dataclass
class Record:
    name: str
    text: str


@dataclass(frozen=True)
class RunConfig:
    width: int = 3
    root_constrained: bool = False
    min_bags: bool = False
    freq_order: str = "large-first"
    limit_trees: int | None = None


def iter_records(paths: list[str]) -> Iterator[Record]:
    for raw in paths:
        if raw == "-":
            yield from _jsonl("<stdin>", sys.stdin.read())
            continue
        path = Path(raw)
        if path.is_dir():
            for child in sorted(path.glob("*.json")):
                yield Record(str(child), child.read_text(encoding="utf-8"))
        elif path.suffix == ".json":
            yield Record(str(path), path.read_text(encoding="utf-8"))
        else:
            yield from _jsonl(str(path), path.read_text(encoding="utf-8"))


def _jsonl(name: str, text: str) -> Iterator[Record]:
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.strip():
            yield Record(f"{name}:{lineno}", line)


# -- per-graph work ------------------------------------------------------------


def _forest(g: Graph, cfg: RunConfig) -> Forest:
    f = build_forest(g, cfg.width, root_constrained=cfg.root_constrained)
    return prune_min_bags(f, cfg.width, cfg.freq_order) if cfg.min_bags else f


def _skip(reason: str, **extra) -> dict[str, Any]:
    return {"status": "skipped", "reason": reason, **extra}


def run_treewidth(g: Graph, cfg: RunConfig, _params) -> dict[str, Any]:
    tw = treewidth(g, cfg.width)
    return {"status": "ok", "treewidth": f">{cfg.width}" if tw is None else tw}


def run_stats(g: Graph, cfg: RunConfig, _params) -> dict[str, Any]:
    stats = graph_stats(g, cfg.width).to_json()
    if stats["treewidth"] is None and g.n <= bitset.MAX_VERTICES:
        stats["treewidth"] = f">{cfg.width}"
    return {"status": "ok", "stats": stats}


def run_decompose(g: Graph, cfg: RunConfig, _params) -> dict[str, Any]:
    try:
        f = _forest(g, cfg)
    except ForestSkip as exc:
        return _skip(str(exc))
    out = {"status": "ok", "summary": f.summary(), "forest": f.to_json(g)}
    if cfg.limit_trees:
        out["trees"] = [td.to_json(g) for td in enumerate_trees(f, cfg.limit_trees)]
    return out


def run_encode(g: Graph, cfg: RunConfig, params: EncoderParams) -> dict[str, Any]:
    try:
        bf = forest_for(g, cfg.width, cfg.root_constrained, cfg.min_bags, cfg.freq_order)
    except ForestSkip as exc:
        return _skip(str(exc), edges=[])
    enc = encode(g, bf, params)
    return {"status": "ok", **enc.features.to_json(g)}


def run_dump_motifs(g: Graph, cfg: RunConfig, _params) -> dict[str, Any]:
    try:
        f = _forest(g, cfg)
    except ForestSkip as exc:
        return _skip(str(exc), codes=[])
    codes = sorted({canonical_code(g, b).hex() for b in f.bags()})
    return {"status": "ok", "codes": codes}


def run_verify(g: Graph, cfg: RunConfig, _params, forest_doc: dict | None = None) -> dict[str, Any]:
    budget = cfg.limit_trees or MAX_ORACLE_TREES
    try:
        f = Forest.from_json(forest_doc, g) if forest_doc is not None else _forest(g, cfg)
    except ForestSkip:
        f = None
    expected = brute_force_tds(
        g, cfg.width, root_constrained=cfg.root_constrained, min_bags=cfg.min_bags, freq_order=cfg.freq_order
    )
    checks: dict[str, Any] = {}
    counterexample = None
    if f is None:
        checks["tree_set"] = not expected
        if expected:
            counterexample = {"missing_from_forest": sorted(expected)[0]}
        return _verdict(checks, counterexample)
    if count_trees(f) > budget:
        raise OracleBudgetExceeded(f"forest has more than {budget} trees")

    tds = enumerate_trees(f)
    invalid = [td for td in tds if not validate_td(g, td).ok or td.width > cfg.width]
    checks["validity"] = not invalid
    if invalid:
        counterexample = {"invalid_tree": invalid[0].to_json(g), "report": validate_td(g, invalid[0]).to_json(g)}

    got = {canonical_td(td): td for td in tds}
    extra = sorted(set(got) - expected)
    missing = sorted(expected - set(got))
    checks["tree_set"] = not extra and not missing and len(got) == len(tds)
    if counterexample is None and not checks["tree_set"]:
        if extra:
            counterexample = {"extra_in_forest": got[extra[0]].to_json(g)}
        elif missing:
            counterexample = {"missing_from_forest": missing[0]}
        else:
            counterexample = {"duplicate_trees": len(tds) - len(got)}

    # random simplex weights, seeded by the graph itself for reproducibility
    bf = binarize(f)
    rng = np.random.default_rng(len(f.nodes) * 1000 + g.m)
    weights = [rng.dirichlet(np.ones(len(n.derivations))) if n.derivations else np.zeros(0) for n in bf.nodes]
    fast = marginals(bf, weights).mass[: len(f.nodes)]
    slow = brute_force_marginals(f, weights)
    err = float(np.max(np.abs(fast - slow))) if len(fast) else 0.0
    checks["marginals"] = err <= 1e-9
    checks["marginal_error"] = err
    if counterexample is None and not checks["marginals"]:
        worst = int(np.argmax(np.abs(fast - slow)))
        counterexample = {"node": worst, "marginal": float(fast[worst]), "oracle": float(slow[worst])}
    return _verdict(checks, counterexample)


def _verdict(checks: dict[str, Any], counterexample) -> dict[str, Any]:
    passed = all(v for k, v in checks.items() if isinstance(v, bool))
    out: dict[str, Any] = {"status": "pass" if passed else "fail", "checks": checks}
    if counterexample is not None:
        out["counterexample"] = counterexample
    return out


COMMANDS: dict[str, Callable[..., dict[str, Any]]] = {
    "treewidth": run_treewidth,
    "decompose": run_decompose,
    "stats": run_stats,
    "encode": run_encode,
    "verify": run_verify,
    "dump-motifs": run_dump_motifs,
}


def process(command: str, record: Record, cfg: RunConfig, params, forest_doc=None) -> dict[str, Any]:
    """Run one command on one record; failures become ``status: error`` entries."""
    out: dict[str, Any] = {"graph": record.name}
    try:
        g = parse_graph(record.text)
        if command == "verify":
            out.update(run_verify(g, cfg, params, forest_doc))
        else:
            out.update(COMMANDS[command](g, cfg, params))
    except (GraphFormatError, GraphTooLarge, OracleBudgetExceeded, ForestStructureError, ValueError, KeyError) as exc:
        out.update({"status": "error", "error": f"{type(exc).__name__}: {exc}"})
    return out


def _process_star(job):
    return process(*job)


# -- argument handling --------------------------------------------------------


def _width(text: str) -> int:
    val = int(text)
    if not 0 <= val <= MAX_WIDTH:
        raise argparse.ArgumentTypeError(f"width must be in [0, {MAX_WIDTH}]")
    return val


def _positive(text: str) -> int:
    val = int(text)
    if val <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return val


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdforest", description="Tree decomposition forests for graph corpora.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("inputs", nargs="+", help="JSON-lines file, .json file, directory, or - for stdin")
        p.add_argument("--width", type=_width, default=3)
        p.add_argument("--root-constrained", action="store_true")
        p.add_argument("--min-bags", action="store_true", help="keep only bag-size-frequency minimal trees")
        p.add_argument("--freq-order", choices=FREQ_ORDERS, default="large-first")
        p.add_argument("--limit-trees", type=_positive, default=None)
        p.add_argument("--jobs", type=_positive, default=1)
        p.add_argument("--out", default=None, help="write JSON here instead of stdout")
        if name == "encode":
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--params", default=None, help="parameter snapshot (JSON)")
            p.add_argument("--save-params", default=None, help="write the parameters used to this path")
            p.add_argument("--hidden", type=_positive, default=64)
            p.add_argument("--depth-dim", type=_positive, default=8)
            p.add_argument("--rel-dim", type=_positive, default=64)
            p.add_argument("--motif-dim", type=_positive, default=32)
            p.add_argument("--edge-dim", type=_positive, default=8)
            p.add_argument("--max-depth", type=_positive, default=16)
        if name == "verify":
            p.add_argument("--forest", default=None, help="forest JSON to check instead of building one")
    return parser


def _params_for(args) -> EncoderParams:
    if args.params:
        params = EncoderParams.load(args.params)
        if params.config.width < args.width:
            raise ValueError(f"parameter file supports width {params.config.width} < --width {args.width}")
        return params
    config = EncoderConfig(
        width=args.width,
        rel_dim=args.rel_dim,
        motif_dim=args.motif_dim,
        hidden=args.hidden,
        depth_dim=args.depth_dim,
        edge_dim=args.edge_dim,
        max_depth=args.max_depth,
    )
    return EncoderParams.initialize(config, seed=args.seed)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(
        width=args.width,
        root_constrained=args.root_constrained,
        min_bags=args.min_bags,
        freq_order=args.freq_order,
        limit_trees=args.limit_trees,
    )
    try:
        records = list(iter_records(args.inputs))
        params = _params_for(args) if args.command == "encode" else None
        forest_doc = json.loads(Path(args.forest).read_text()) if getattr(args, "forest", None) else None
    except (OSError, ValueError) as exc:
        print(f"tdforest: {exc}", file=sys.stderr)
        return 2
    if params is not None and args.save_params:
        params.save(args.save_params)

    jobs = [(args.command, rec, cfg, params, forest_doc) for rec in records]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_process_star, jobs, chunksize=max(1, len(jobs) // (4 * args.jobs))))
    else:
        results = [_process_star(job) for job in jobs]

    doc: dict[str, Any] = {"command": args.command, "width": args.width, "results": results}
    doc["skipped"] = [r["graph"] for r in results if r["status"] == "skipped"]
    doc["errors"] = [r["graph"] for r in results if r["status"] == "error"]
    if args.command == "dump-motifs":
        # intern in input order so indices do not depend on scheduling
        table = MotifTable()
        for r in results:
            for code in r.get("codes", []):
                table.intern(bytes.fromhex(code))
        doc["motifs"] = table.to_json()
    if args.command == "verify":
        doc["failed"] = [r["graph"] for r in results if r["status"] == "fail"]

    text = json.dumps(doc, indent=None, separators=(",", ":"), sort_keys=False) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 1 if doc["errors"] or doc.get("failed") else 0


if __name__ == "__main__":
    sys.exit(main())
