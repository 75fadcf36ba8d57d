"""Command-line front end: ``privcast <command> [flags]``.

Every invocation writes into a fresh run directory under ``--out`` holding
the resolved flags (``spec.json``), the outputs and ``manifest.json``
listing them.  Exit codes: 0 ok, 2 bad parameters, 3 infeasible schedule
or distribution, 4 fit failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import adversary, distmodel, forwarding, graph, protocol
from ._validation import (
    ConfigurationError,
    DegenerateFitError,
    FitFailure,
    InfeasibleDiscretizationError,
    InfeasibleScheduleError,
    ParameterError,
)

log = logging.getLogger("privcast")

EXIT_OK, EXIT_PARAM, EXIT_INFEASIBLE, EXIT_FIT = 0, 2, 3, 4


def _ints(text):
    return [int(x) for x in str(text).split(",") if x.strip()]


def _floats(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _sources(text):
    return text if text in ("auto", "all") else int(text)


def _grid(text):
    """``"500,1000:2,4"`` -> every (n, k) pair of the two lists."""
    try:
        ns, ks = str(text).split(":")
        return [(n, k) for n in _ints(ns) for k in _ints(ks)]
    except ValueError:
        raise ParameterError(f"grid must look like '500,1000:2,4', got {text!r}") from None


class RunDir:
    def __init__(self, base, command, seed):
        stamp = time.strftime("%Y%m%d-%H%M%S")
        root = Path(base) / f"{command}-{stamp}-s{seed}"
        path, i = root, 1
        while path.exists():
            path = root.with_name(f"{root.name}-{i}")
            i += 1
        path.mkdir(parents=True)
        self.path = path
        self.files = []

    def write(self, name, text):
        target = self.path / name
        if target.exists():
            raise FileExistsError(target)
        target.write_text(text, encoding="utf-8")
        self.files.append(name)
        return target

    def finish(self, spec, extra=None):
        self.write("spec.json", json.dumps(spec, indent=2, sort_keys=True) + "\n")
        manifest = {"command": spec["command"], "seed": spec.get("seed"),
                    "files": sorted(self.files)}
        manifest.update(extra or {})
        self.write("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        print(self.path)


def _spec(args):
    return {k: v for k, v in vars(args).items() if k not in ("func", "config")}


def _svg(fig):
    import io

    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def _comparison_plot(hist, normal, title):
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "privcast"
    import matplotlib.pyplot as plt
    from scipy import stats

    x = np.arange(len(hist.counts))
    pmf = hist.counts / hist.counts.sum()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x, pmf, color="0.75", label="observed")
    grid = np.linspace(0, x[-1] + 1, 200)
    ax.plot(grid, stats.norm.pdf(grid, normal.mu, normal.sigma), color="C0",
            label=f"normal mu={normal.mu:.2f} sigma={normal.sigma:.2f}")
    ax.set_xlabel("hop distance")
    ax.set_ylabel("fraction of pairs")
    ax.set_title(title)
    ax.legend()
    text = _svg(fig)
    plt.close(fig)
    return text


def cmd_generate(args):
    g = graph.generate_k_growing(args.n, args.k, args.seed)
    hist = graph.pooled_histogram(g, args.sample_sources, seed=args.seed)
    run = RunDir(args.out, "generate", args.seed)
    run.write("graph.txt", g.to_text())
    run.write("histogram.csv", hist.to_csv())
    run.finish(_spec(args), {"edges": g.n_edges})
    return EXIT_OK


def cmd_fit(args):
    if args.dataset:
        data = distmodel.FitDataset.from_csv(Path(args.dataset).read_text(encoding="utf-8"))
    else:
        seeds = range(args.seed, args.seed + args.seeds)
        data = distmodel.build_fit_dataset(_grid(args.grid), seeds, args.sample_sources)
    constants = distmodel.fit_model_constants(data, args.model)
    bias = distmodel.model_bias_report(data, constants)
    run = RunDir(args.out, "fit", args.seed)
    run.write("dataset.csv", data.to_csv())
    run.write("constants.json", constants.to_json() + "\n")
    run.write("bias.csv", bias.to_csv())
    extra = {"rows": len(data), "max_abs_residual": bias.max_abs}
    if args.plot:
        g = graph.generate_k_growing(args.plot_n, args.plot_k, args.seed)
        hist = graph.pooled_histogram(g, args.sample_sources, seed=args.seed)
        normal = distmodel.fit_normal(hist)
        scores = distmodel.compare_distributions(hist)
        run.write("comparison.svg", _comparison_plot(
            hist, normal, f"n={args.plot_n}, k={args.plot_k}"))
        run.write("comparison.json", json.dumps(scores, indent=2, sort_keys=True) + "\n")
    run.finish(_spec(args), extra)
    return EXIT_OK


def cmd_schedule(args):
    if args.distribution:
        mass = np.array(_floats(args.distribution))
        if mass.sum() <= 0:
            raise ParameterError("distribution has no mass")
        mass = mass / mass.sum()
    else:
        mu = distmodel.estimate_mu(args.n, args.k)
        sigma = distmodel.estimate_sigma(args.n, args.k)
        mass = distmodel.discretize(distmodel.NormalParams(mu, sigma), args.n, args.k,
                                    args.epsilon).mass
    T = args.depth if args.depth else len(mass)
    if len(mass) < T:
        mass = np.pad(mass, (0, T - len(mass)))
    if args.smooth:
        sched = forwarding.smoothed_schedule(mass, T)
    else:
        sched = forwarding.ideal_probabilities(mass, T)
    run = RunDir(args.out, "schedule", args.seed)
    run.write("schedule.json", sched.to_json() + "\n")
    run.finish(_spec(args), {"smoothed": sched.smoothed, "deviation": sched.deviation})
    return EXIT_OK


def _sim_config(args):
    attackers = ()
    if args.beta:
        attackers = tuple(sorted(adversary.AttackerSet.from_beta(args.n, args.beta,
                                                                 seed=args.seed).members))
    origin = "uniform" if args.origin is None else args.origin
    fixed = None if args.fixed_p is None else (_floats(args.fixed_p) if "," in str(args.fixed_p)
                                               else float(args.fixed_p))
    return protocol.SimConfig(
        n=args.n, k=args.k, graph_seed=args.graph_seed if args.graph_seed is not None else args.seed,
        eta=args.eta, depth=args.depth, origin=origin, schedule=args.schedule, fixed_p=fixed,
        epsilon=args.epsilon, seed=args.seed, attackers=attackers,
        timeout_multiplier=args.timeout_multiplier, refine_holder=args.refine_holder,
    )


def cmd_simulate(args):
    cfg = _sim_config(args)
    g = graph.Graph.read(args.graph) if args.graph else None
    result = protocol.run_simulation(cfg, g)
    run = RunDir(args.out, "simulate", args.seed)
    run.write("config.json", cfg.to_json() + "\n")
    run.write("trace.csv", result.trace.to_csv())
    run.write("summary.json", json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    run.finish(_spec(args))
    return EXIT_OK


def cmd_attack(args):
    rows = ["seed,source,adaptive_success,adaptive_candidates,adaptive_rank,"
            "flood_success,flood_candidates,flood_rank"]
    first = None
    for seed in range(args.seed, args.seed + args.runs):
        ad, fl = adversary.paired_attack(seed, args.n, args.k, args.beta, args.eta,
                                         args.depth or 4, args.pool)
        first = first or {"adaptive": ad.to_dict(), "flood": fl.to_dict()}
        rows.append(f"{seed},{ad.true_source},{int(ad.success)},{ad.n_candidates},{ad.rank},"
                    f"{int(fl.success)},{fl.n_candidates},{fl.rank}")
        log.info("seed %d done", seed)
    run = RunDir(args.out, "attack", args.seed)
    run.write("report.json", json.dumps(first, indent=2) + "\n")
    run.write("aggregate.csv", "\n".join(rows) + "\n")
    run.finish(_spec(args))
    return EXIT_OK


def cmd_table2(args):
    table = adversary.reproduce_table2(args.beta, _ints(args.ns), _ints(args.etas),
                                       args.c, args.pack, args.variant)
    run = RunDir(args.out, "table2", args.seed)
    run.write("table2.csv", table.to_csv())
    run.finish(_spec(args), {"interpretation": table.manifest})
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="runs")
    common.add_argument("--config", help="JSON file with flag values; explicit flags win")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="privcast", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("generate", parents=[common], help="k-growing graph and distance histogram")
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--k", type=int, default=6)
    s.add_argument("--sample-sources", type=_sources, default="auto")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("fit", parents=[common], help="fit estimator models over a graph grid")
    s.add_argument("--grid", default="500,1000,2000:2,4,6")
    s.add_argument("--seeds", type=int, default=3)
    s.add_argument("--model", default="M2", choices=sorted(distmodel.MODEL_PARAMS))
    s.add_argument("--dataset", help="reuse an existing dataset CSV instead of generating")
    s.add_argument("--sample-sources", type=_sources, default="auto")
    s.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--plot-n", type=int, default=2000)
    s.add_argument("--plot-k", type=int, default=6)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("schedule", parents=[common], help="virtual-source passing probabilities")
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--k", type=int, default=6)
    s.add_argument("--depth", type=int, default=None, help="number of steps T")
    s.add_argument("--epsilon", type=float, default=distmodel.DEFAULT_EPSILON)
    s.add_argument("--distribution", help="comma-separated distance masses instead of (n, k)")
    s.add_argument("--smooth", action="store_true")
    s.set_defaults(func=cmd_schedule)

    s = sub.add_parser("simulate", parents=[common], help="one protocol run")
    _sim_flags(s)
    s.add_argument("--graph", help="edge-list file instead of generating from (n, k)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("attack", parents=[common], help="paired Jordan-centre attack runs")
    _sim_flags(s, beta=0.05, n=1000, k=6)
    s.add_argument("--runs", type=int, default=10)
    s.add_argument("--pool", default="honest", choices=adversary.POOLS)
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("table2", parents=[common], help="expected depth before exposure")
    s.add_argument("--beta", type=float, default=0.05)
    s.add_argument("--ns", default="100,1000,10000")
    s.add_argument("--etas", default="3,5,10")
    s.add_argument("--c", type=float, default=None, help="threshold base (default: eta)")
    s.add_argument("--pack", type=int, default=None, help="pack size (default: eta)")
    s.add_argument("--variant", default="exact", choices=("exact", "printed"))
    s.set_defaults(func=cmd_table2)
    return p


def _sim_flags(s, beta=0.0, n=100, k=4):
    s.add_argument("--n", type=int, default=n)
    s.add_argument("--k", type=int, default=k)
    s.add_argument("--graph-seed", type=int, default=None)
    s.add_argument("--eta", type=int, default=3)
    s.add_argument("--depth", type=int, default=None)
    s.add_argument("--origin", type=int, default=None)
    s.add_argument("--beta", type=float, default=beta)
    s.add_argument("--epsilon", type=float, default=distmodel.DEFAULT_EPSILON)
    s.add_argument("--schedule", default="smoothed", choices=protocol.SCHEDULES)
    s.add_argument("--fixed-p", default=None)
    s.add_argument("--timeout-multiplier", type=float, default=2.0)
    s.add_argument("--refine-holder", action="store_true")


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        payload = json.loads(Path(args.config).read_text(encoding="utf-8"))
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(payload) - known
        if unknown:
            raise ParameterError(f"unknown config keys {sorted(unknown)}")
        sub.set_defaults(**payload)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except (ParameterError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InfeasibleScheduleError as exc:
        print(f"infeasible: {exc.violations}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InfeasibleDiscretizationError, ConfigurationError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FitFailure, DegenerateFitError) as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM


if __name__ == "__main__":
    sys.exit(main())
