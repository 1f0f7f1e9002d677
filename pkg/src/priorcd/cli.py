"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver did not
converge on any seed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from .graph import DirectedGraph, threshold
from .harness import (
    DataError, ExperimentConfig, compare, dumps_report, format_comparison, load_csv_dataset,
    run_experiment,
)
from .metrics import evaluate, format_table
from .prior import (
    HttpPromptSource, PairVerdict, PriorMatrix, PromptResponseError, RecordedResponseSource,
    acquire_prior, aggregate_mean, assemble_prior, certainty, load_prior, parse_response,
    random_prior, render_prompt,
)
from .solver import PRESETS, NonConvergenceWarning, preset, solve, solve_result_dict
from .synthetic import build_motivating_scenario, physics_dataset

EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGED = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed_range(text: str) -> list[int]:
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(s) for s in text.split(",")]


def _prior_spec(text: str, repeat: int = 1) -> dict:
    if text == "none":
        return {"kind": "none"}
    if text == "truth":
        return {"kind": "truth"}
    if text.startswith("random:"):
        return {"kind": "random", "edge_count": int(text.split(":", 1)[1]), "repeat": repeat}
    if text.startswith(("http://", "https://")):
        return {"kind": "http", "url": text}
    if Path(text).is_dir():
        return {"kind": "recorded", "path": text}
    return {"kind": "json", "path": text}


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


# -- subcommands ----------------------------------------------------------------

def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.motivating:
        truth, data = build_motivating_scenario(args.seed, n=args.n)
    else:
        truth, spec, data = physics_dataset(args.size, args.seed, n=args.n,
                                            noise_variance=args.noise_variance,
                                            positive=not args.mixed_signs)
        spec.save(out / "sem.json")
    if args.standardize:
        data = data.standardized()
    data.to_csv(out / "data.csv")
    truth.save(out / "truth.json")
    print(f"wrote {data.n}x{data.d} dataset and ground truth to {out}")
    return 0


def cmd_prior(args) -> int:
    if args.prior_cmd == "render":
        print(render_prompt(args.var_a, args.var_b))
    elif args.prior_cmd == "parse":
        text = sys.stdin.read() if args.file == "-" else Path(args.file).read_text()
        print(parse_response(text))
    elif args.prior_cmd == "assemble":
        names = args.names.split(",")
        if args.responses:
            prior = acquire_prior(RecordedResponseSource(args.responses), names,
                                  on_invalid=args.on_invalid)
        elif args.url:
            prior = acquire_prior(HttpPromptSource(args.url), names, on_invalid=args.on_invalid)
        else:
            triples = json.loads(Path(args.verdicts).read_text())
            prior = assemble_prior([PairVerdict(*t) for t in triples], names)
        _write(args.out, _json(prior.to_dict()))
    elif args.prior_cmd == "aggregate":
        priors = [load_prior(p) for p in args.priors]
        if not all(isinstance(p, PriorMatrix) for p in priors):
            raise DataError("aggregate expects binary priors")
        _write(args.out, _json(aggregate_mean(priors).to_dict()))
        if args.certainty_out:
            Path(args.certainty_out).write_text(_json(certainty(priors, args.epsilon).to_dict()))
    elif args.prior_cmd == "random":
        names = args.names.split(",") if args.names else None
        d = len(names) if names else args.d
        if d is None:
            raise DataError("give --d or --names")
        _write(args.out, _json(random_prior(d, args.edges, names, args.seed).to_dict()))
    return 0


def _solver_cfg(args):
    cfg = preset(args.preset)
    if args.threshold is not None:
        cfg = replace(cfg, threshold_tau=args.threshold)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_discover(args) -> int:
    data = load_csv_dataset(args.data, standardize=args.standardize)
    cfg = _solver_cfg(args)
    prior = None
    if args.prior:
        spec = _prior_spec(args.prior)
        if spec["kind"] == "random":
            prior = random_prior(data.d, spec["edge_count"], data.names, args.seed or 0)
        elif spec["kind"] == "json":
            prior = load_prior(spec["path"])
        elif spec["kind"] == "recorded":
            prior = acquire_prior(RecordedResponseSource(spec["path"]), data.names)
        elif spec["kind"] == "http":
            prior = acquire_prior(HttpPromptSource(spec["url"]), data.names)
        elif spec["kind"] == "truth":
            raise DataError("discover has no ground truth; pass a prior file instead")
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("ignore", NonConvergenceWarning)
        w, state = solve(data, prior, cfg)
    graph = threshold(w, cfg.threshold_tau)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "w.json").write_text(_json(solve_result_dict(w, state, cfg)))
    graph.save(out / "graph.json")
    if prior is not None:
        (out / "prior.json").write_text(_json(prior.to_dict()))
    print(f"{graph.n_edges} edges, h={state.h_final:.3e}, converged={state.converged}")
    return 0 if state.converged else EXIT_NONCONVERGED


def cmd_evaluate(args) -> int:
    pred, truth = DirectedGraph.load(args.pred), DirectedGraph.load(args.truth)
    report = evaluate(pred, truth)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        print(format_table([(Path(args.pred).stem, report.to_dict())]))
    return 0


def cmd_run(args) -> int:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
    elif args.size:
        cfg = ExperimentConfig(dataset={"kind": "physics", "size": args.size})
    else:
        raise DataError("run needs --config or --size")
    updates = {}
    if args.preset:
        updates["preset"] = args.preset
    if args.seeds is not None:
        updates["seeds"] = args.seeds
    elif args.seed is not None:
        updates["seeds"] = [args.seed]
    if args.out:
        updates["out"] = args.out
    if args.standardize:
        updates["standardize"] = True
    if args.prior:
        updates["prior"] = _prior_spec(args.prior, args.repeat)
    if args.threshold is not None:
        updates["solver"] = {**cfg.solver, "threshold_tau": args.threshold}
    if args.workers:
        updates["workers"] = args.workers
    cfg = ExperimentConfig.from_dict({**cfg.to_dict(), **updates})
    report = run_experiment(cfg)
    if not cfg.out:
        sys.stdout.write(dumps_report(report))
    rows = [(r["run_id"], r["metrics"]) for r in report["runs"]]
    rows.append(("mean", {k: v["mean"] for k, v in report["aggregate"].items()}))
    print(format_table(rows), file=sys.stderr)
    if not any(r["converged"] for r in report["runs"]):
        return EXIT_NONCONVERGED
    return 0


def cmd_compare(args) -> int:
    a = json.loads(Path(args.baseline).read_text())
    b = json.loads(Path(args.candidate).read_text())
    rows = compare(a, b)
    print(json.dumps(rows, indent=2) if args.json else format_comparison(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="priorcd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="sample a synthetic dataset and its ground truth")
    g.add_argument("--size", type=int, choices=(3, 5, 7), default=7)
    g.add_argument("--motivating", action="store_true", help="AP -> TSI -> ER scenario")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=5000)
    g.add_argument("--noise-variance", type=float, default=0.5)
    g.add_argument("--mixed-signs", action="store_true")
    g.add_argument("--standardize", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    pr = sub.add_parser("prior", help="prompting and prior-matrix tools")
    psub = pr.add_subparsers(dest="prior_cmd", required=True, parser_class=_Parser)
    r = psub.add_parser("render")
    r.add_argument("var_a")
    r.add_argument("var_b")
    r = psub.add_parser("parse")
    r.add_argument("file", help="response text file, or - for stdin")
    r = psub.add_parser("assemble")
    r.add_argument("--names", required=True, help="comma-separated variable names")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--verdicts", help="JSON list of [var_a, var_b, letter]")
    src.add_argument("--responses", help="directory of <i>_<j>.txt responses")
    src.add_argument("--url", help="HTTP prompt endpoint")
    r.add_argument("--on-invalid", choices=("treat-as-d", "retry", "raise"), default="treat-as-d")
    r.add_argument("--out")
    r = psub.add_parser("aggregate")
    r.add_argument("priors", nargs="+")
    r.add_argument("--epsilon", type=float, default=0.5)
    r.add_argument("--certainty-out")
    r.add_argument("--out")
    r = psub.add_parser("random")
    r.add_argument("--d", type=int)
    r.add_argument("--names")
    r.add_argument("--edges", type=int, required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out")
    pr.set_defaults(func=cmd_prior)

    def solver_flags(q):
        q.add_argument("--preset", choices=sorted(PRESETS))
        q.add_argument("--seed", type=int)
        q.add_argument("--standardize", action="store_true")
        q.add_argument("--prior", help="path | dir | url | random:K | truth | none")
        q.add_argument("--threshold", type=float)
        q.add_argument("--out")

    d = sub.add_parser("discover", help="learn a graph from a CSV dataset")
    d.add_argument("--data", required=True)
    solver_flags(d)
    d.set_defaults(func=cmd_discover, preset="vanilla")

    e = sub.add_parser("evaluate", help="score a predicted graph against the truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--json", action="store_true")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("run", help="run a full experiment")
    r.add_argument("--config")
    r.add_argument("--size", type=int, choices=(3, 5, 7))
    r.add_argument("--seeds", type=_seed_range, help="a..b or a,b,c")
    r.add_argument("--repeat", type=int, default=1, help="random-prior repeats per seed")
    r.add_argument("--workers", type=int)
    solver_flags(r)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="metric deltas between two reports")
    c.add_argument("baseline")
    c.add_argument("candidate")
    c.add_argument("--json", action="store_true")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, PromptResponseError, FileNotFoundError, json.JSONDecodeError,
            KeyError, ValueError) as exc:
        print(f"priorcd: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
