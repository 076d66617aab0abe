"""Command line entry point: ``mqapviz {run,knng,layout,viz,eval}``."""
from __future__ import annotations

import argparse
import logging
import sys

from .exceptions import ParameterError
from .pipeline import PipelineConfig, StageError, load_manifest_config, run_pipeline, stage_knng, stage_layout

log = logging.getLogger("mqapviz")


def _fractions(text):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals or any(not 0 < v < 1 for v in vals):
        raise argparse.ArgumentTypeError("fractions must lie in (0, 1)")
    return vals


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="global seed (default 0)")
    p.add_argument("-v", "--verbose", action="store_true")


def _input_args(p, required=False):
    p.add_argument("--input", required=required, help="vector file")
    p.add_argument("--format", dest="input_format", choices=("tsv", "raw-f32"), default=None)


def _knng_args(p):
    p.add_argument("--k", type=int, default=None, help="neighbors per point (default 30)")
    p.add_argument("--n-trees", type=int, default=None, help="random projection trees (default 8)")
    p.add_argument("--it", dest="n_iter", type=int, default=None, help="refinement rounds (default 5)")
    p.add_argument("--leaf-capacity", type=int, default=None)


def _layout_args(p):
    p.add_argument("--layout-in", default=None, help="use this initial layout instead of fitting one")
    p.add_argument("--layout-T", dest="layout_T", type=int, default=None, help="SGD steps (default 100*|E|)")
    p.add_argument("--rho0", type=float, default=None)
    p.add_argument("--neg-samples", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)


def _mqap_args(p):
    p.add_argument("--p-s", dest="p_s", type=float, default=None, help="seed fraction (default 0.3)")
    p.add_argument("--k-star", type=int, default=None, help="core distance rank (default 5)")
    p.add_argument("--grid-rows", type=int, default=None)
    p.add_argument("--grid-cols", type=int, default=None)
    p.add_argument("--pop", type=int, default=None, help="population size (default 32)")
    p.add_argument("--gens", type=int, default=None, help="generations (default 200)")
    p.add_argument("--ls-budget", type=int, default=None, help="local search moves per offspring")
    p.add_argument("--crossover-rate", type=float, default=None)
    p.add_argument("--mutation-rate", type=float, default=None)
    p.add_argument("--archive-capacity", type=int, default=None)
    p.add_argument("--workers", type=int, default=None, help="solver processes (env MQAPVIZ_WORKERS)")


def _eval_args(p):
    p.add_argument("--eval", action="store_true", help="score the median layout with k-NN accuracy")
    p.add_argument("--eval-k", type=int, default=None)
    p.add_argument("--eval-fractions", type=_fractions, default=None)
    p.add_argument("--eval-repeats", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mqapviz", description="Grid layouts of large datasets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline")
    _input_args(p)
    p.add_argument("--labels")
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument("--graph-in", default=None, help="reuse a graph written by 'knng'")
    p.add_argument("--config", help="rerun from a manifest.json; explicit flags override it")
    _knng_args(p)
    _layout_args(p)
    _mqap_args(p)
    _eval_args(p)
    _common(p)

    p = sub.add_parser("knng", help="build the k-NN graph")
    _input_args(p)
    p.add_argument("--out", required=True, help="graph tsv")
    _knng_args(p)
    _common(p)

    p = sub.add_parser("layout", help="fit the initial layout")
    _input_args(p)
    p.add_argument("--graph-in", default=None)
    p.add_argument("--out", required=True, help="layout tsv (full precision)")
    _knng_args(p)
    _layout_args(p)
    _common(p)

    p = sub.add_parser("viz", help="solve sub-instances and merge layouts")
    _input_args(p)
    p.add_argument("--labels")
    p.add_argument("--graph-in", default=None)
    p.add_argument("--out", dest="out_dir", required=True, help="output directory")
    _knng_args(p)
    _layout_args(p)
    _mqap_args(p)
    _eval_args(p)
    _common(p)

    p = sub.add_parser("eval", help="k-NN accuracy of a layout")
    p.add_argument("--layout", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--k", type=int, default=500)
    p.add_argument("--fractions", type=_fractions, default=(0.02, 0.05, 0.1, 0.2, 0.5))
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--out", default=None, help="report tsv (default stdout)")
    _common(p)
    return parser


_CONFIG_KEYS = {f for f in PipelineConfig.__dataclass_fields__}


def _config_from_args(args, base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    for key, value in vars(args).items():
        if key in _CONFIG_KEYS and value is not None and value is not False:
            setattr(cfg, key, value)
    return cfg


def _need_input(parser, args, allow_graph=True):
    if args.input is None and not (allow_graph and getattr(args, "graph_in", None)):
        parser.error(f"{args.command}: --input is required")


def _load_graph(cfg):
    from .io import load_vectors
    from .knn_graph import KnnGraph

    if cfg.graph_in:
        try:
            return KnnGraph.read_tsv(cfg.graph_in)
        except Exception as exc:
            raise StageError("knng", exc) from exc
    try:
        data = load_vectors(cfg.input, cfg.input_format)
    except Exception as exc:
        raise StageError("load", exc) from exc
    try:
        return stage_knng(data.vectors, cfg)
    except Exception as exc:
        raise StageError("knng", exc) from exc


def _cmd_knng(args):
    cfg = _config_from_args(args).validate()
    graph = _load_graph(cfg)
    graph.write_tsv(args.out)
    log.info("wrote %s: %d vertices, %d edges", args.out, graph.n, graph.n_edges)


def _cmd_layout(args):
    from .io import write_layout

    cfg = _config_from_args(args).validate()
    graph = _load_graph(cfg)
    try:
        layout = stage_layout(graph, cfg, cfg.layout_in)
    except Exception as exc:
        raise StageError("layout", exc) from exc
    write_layout(layout, args.out, digits=17)


def _cmd_run(args):
    base = load_manifest_config(args.config) if getattr(args, "config", None) else None
    cfg = _config_from_args(args, base)
    if cfg.out_dir is None:
        raise ParameterError("--out is required")
    manifest = run_pipeline(cfg)
    print("conflicts: " + " ".join(f"{k}={v}" for k, v in manifest["conflicts"].items()),
          file=sys.stderr)


def _cmd_eval(args):
    from .evaluation import accuracy_curve
    from .io import load_labels, read_layout

    layout = read_layout(args.layout)
    labels = load_labels(args.labels)
    report = accuracy_curve(layout, labels, args.fractions, args.k, args.repeats,
                            0 if args.seed is None else args.seed)
    if args.out:
        report.write_tsv(args.out)
    else:
        sys.stdout.write(report.to_tsv())


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("run", "knng", "layout", "viz"):
        has_config = getattr(args, "config", None) is not None
        if not has_config:
            _need_input(parser, args, allow_graph=args.command != "knng")
    handlers = {"run": _cmd_run, "viz": _cmd_run, "knng": _cmd_knng,
                "layout": _cmd_layout, "eval": _cmd_eval}
    try:
        handlers[args.command](args)
    except StageError as exc:
        print(f"mqapviz {args.command}: {exc}", file=sys.stderr)
        return 1
    except (ParameterError, OSError, ValueError) as exc:
        stage = "eval" if args.command == "eval" else "config"
        print(f"mqapviz {args.command}: stage '{stage}' failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
