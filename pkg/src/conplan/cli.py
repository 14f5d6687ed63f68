"""Command-line harness for the full pipeline.

Subcommands: ``generate`` (dataset), ``labels`` (multi-scale pseudo-labels),
``train`` (encoder), ``plan`` (single query), ``bench`` (randomized-scene
strategy comparison with CSV + SVG + summary table), ``swissroll`` (panel
figure of pseudo-labels across scales on the synthetic manifold).

Exit codes: 0 success, 1 usage error, 2 runtime failure (diagnostic on
stderr).
"""

import argparse
import logging
import sys as _sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import configfile, container, svgplot
from .clusterer import ClusterParams
from .connectivity import STRATEGIES
from .dataset import generate_dataset, generate_swissroll, load_dataset, save_dataset
from .embedder import embed
from .encoder import TrainConfig, load_model, save_model, train
from .errors import InvalidArgumentError
from .oracle import build_from_samples, stratified_pool
from .planner import Obstacle, PlanningProblem, plan
from .pseudolabels import build as build_labels
from .pseudolabels import default_schedule, load_labels, save_labels


log = logging.getLogger("conplan")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(_sys.stderr)
        print(f"{self.prog}: error: {message}", file=_sys.stderr)
        raise SystemExit(1)


def _build_parser():
    parser = _Parser(prog="conplan",
                     description="connectivity-aware constrained planning toolkit")
    parser.add_argument("--print-config", action="store_true",
                        help="dump the default configuration and exit")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command")

    def common(p, needs_out=True):
        p.add_argument("--config", help="config file (defaults embedded)")
        p.add_argument("--seed", type=int, help="override the config seed")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("generate", help="generate a configuration dataset")
    common(p)
    p.add_argument("--system", required=True, help="system description file")
    p.add_argument("--poses", type=int, help="number of accepted task poses")

    p = sub.add_parser("labels", help="build multi-scale pseudo-labels")
    common(p)
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("train", help="train the encoder")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--labels", required=True)

    p = sub.add_parser("plan", help="plan one start/goal query")
    common(p, needs_out=False)
    p.add_argument("--system", required=True)
    p.add_argument("--start", required=True, help="comma-separated joint angles")
    p.add_argument("--goal", required=True, help="comma-separated joint angles")
    p.add_argument("--obstacle", action="append", default=[],
                   metavar="X,Y,R", help="obstacle disk (repeatable)")
    p.add_argument("--time-limit", type=float)

    p = sub.add_parser("bench", help="randomized-scene strategy benchmark")
    common(p)
    p.add_argument("--system", required=True)
    p.add_argument("--model", help="trained model (needed for feature-space)")
    p.add_argument("--scenes", type=int)
    p.add_argument("--strategy", help="comma-separated subset of "
                                      + ",".join(STRATEGIES))
    p.add_argument("--time-limit", type=float)
    p.add_argument("--oracle", action="store_true",
                   help="annotate rows with oracle connectivity")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("swissroll", help="pseudo-label panels on the synthetic roll")
    common(p)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--pieces", type=int, default=2)
    p.add_argument("--passage", type=float, default=0.0)
    p.add_argument("--scales", help="n_neighbors:min_dist pairs, comma separated")
    return parser


def _load_cfg(args):
    cfg = configfile.load_config(args.config) if args.config \
        else configfile.default_config()
    if getattr(args, "seed", None) is not None:
        for section in ("dataset", "pseudolabels", "encoder", "oracle", "bench"):
            cfg[section]["seed"] = args.seed
    return cfg


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args):
    cfg = _load_cfg(args)
    sys_spec = configfile.read_system(args.system)
    d = cfg["dataset"]
    n_poses = args.poses if args.poses is not None else d["n_poses"]
    ds = generate_dataset(sys_spec, n_poses=n_poses, seed=d["seed"],
                          restarts=d["ik_restarts_per_chain"],
                          cap=d["ik_cap_per_pose"],
                          margin=d["collision_margin"])
    out = _out_dir(args) / "dataset.txt"
    save_dataset(ds, out)
    print(f"wrote {out} ({len(ds.records)} records, hash {ds.content_hash()})")
    return 0


def _schedule_from_cfg(cfg, seed=None):
    pairs = configfile.parse_scales(cfg["pseudolabels"]["scales"])
    cp = ClusterParams(min_cluster_size=cfg["clusterer"]["min_cluster_size"],
                       min_samples=cfg["clusterer"]["min_samples"])
    return default_schedule(pairs, cp,
                            seed=seed if seed is not None else cfg["pseudolabels"]["seed"],
                            out_dim=cfg["embedder"]["out_dim"],
                            n_epochs=cfg["embedder"]["n_epochs"])


def cmd_labels(args):
    cfg = _load_cfg(args)
    ds = load_dataset(args.dataset)
    schedule = _schedule_from_cfg(cfg)
    matrix = build_labels(ds.joint_matrix(), schedule,
                          dataset_hash=ds.content_hash())
    out = _out_dir(args) / "labels.txt"
    save_labels(matrix, out)
    counts = [len([v for v in np.unique(matrix.labels[:, k]) if v != -1])
              for k in range(matrix.n_scales)]
    print(f"wrote {out} (clusters per scale: {counts})")
    return 0


def cmd_train(args):
    cfg = _load_cfg(args)
    ds = load_dataset(args.dataset)
    labels = load_labels(args.labels)
    e = cfg["encoder"]
    tc = TrainConfig(lr=e["lr"], batch_size=e["batch_size"], epochs=e["epochs"],
                     tau=e["tau"], aug_sigma=e["aug_sigma"], seed=e["seed"],
                     hidden_dim=e["hidden_dim"], feature_dim=e["feature_dim"],
                     projector_dim=e["projector_dim"])
    model, history = train(ds, labels, tc)
    out = _out_dir(args)
    save_model(model, out / "model.bin")
    (out / "loss_history.txt").write_text(
        "\n".join(container.fmt_float(v) for v in history) + "\n")
    print(f"wrote {out / 'model.bin'} (loss {history[0]:.3f} -> {history[-1]:.3f})")
    return 0


def _parse_q(text):
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise InvalidArgumentError(f"bad joint vector {text!r}") from None


def cmd_plan(args):
    cfg = _load_cfg(args)
    sys_spec = configfile.read_system(args.system)
    p = cfg["planner"]
    obstacles = []
    for spec_str in args.obstacle:
        x, y, r = (float(v) for v in spec_str.split(","))
        obstacles.append(Obstacle(center=(x, y), radius=r))
    prob = PlanningProblem(
        system=sys_spec, q_start=_parse_q(args.start), q_goal=_parse_q(args.goal),
        obstacles=tuple(obstacles), step_size=p["step_size"],
        resolution=p["resolution"], margin=p["collision_margin"],
        time_limit=args.time_limit or cfg["bench"]["time_limit"],
        seed=args.seed or 0, iters_per_second=p["iters_per_second"],
        connect_every=p["connect_every"])
    result = plan(prob)
    status = "success" if result.success else "failure"
    print(f"{status}: {len(result.path)} waypoints, "
          f"{result.nodes_expanded} nodes, "
          f"virtual {result.virtual_time:.3f}s, wall {result.elapsed:.3f}s")
    return 0 if result.success else 2


def cmd_bench(args):
    cfg = _load_cfg(args)
    sys_spec = configfile.read_system(args.system)
    b = cfg["bench"]
    p = cfg["planner"]
    strategies = tuple((args.strategy or b["strategies"]).split(","))
    bc = bench_mod.BenchConfig(
        n_scenes=args.scenes or b["n_scenes"],
        n_obstacles=b["n_obstacles"],
        time_limit=args.time_limit or b["time_limit"],
        strategies=strategies,
        seed=b["seed"],
        obstacle_radius=(b["obstacle_radius_min"], b["obstacle_radius_max"]),
        ik_candidates=b["ik_candidates"],
        margin=p["collision_margin"],
        step_size=p["step_size"],
        resolution=p["resolution"],
        iters_per_second=p["iters_per_second"],
        connect_every=p["connect_every"],
        workers=args.workers or 1,
    )
    model = load_model(args.model) if args.model else None
    base_oracle = None
    if args.oracle or b["with_oracle"]:
        o = cfg["oracle"]
        pool = stratified_pool(sys_spec, o["n_samples"], o["n_samples"],
                               seed=o["seed"], margin=p["collision_margin"])
        base_oracle = build_from_samples(sys_spec, pool, o["radius"],
                                         margin=p["collision_margin"],
                                         resolution=0.05, drift_bound=o["radius"])
    rows, _scenes = bench_mod.run_bench(sys_spec, bc, model=model,
                                        base_oracle=base_oracle)
    out = _out_dir(args)
    (out / "bench.csv").write_text(bench_mod.rows_to_csv(rows))
    summary = bench_mod.summarize(rows)
    table = bench_mod.summary_table(summary, bc.time_limit, bc.n_obstacles)
    (out / "summary.txt").write_text(table)
    groups = list(summary)
    rates = [[summary[g]["success_rate"]] for g in groups]
    times = [[summary[g]["mean_time"] if summary[g]["mean_time"] is not None
              else float("nan")] for g in groups]
    errs = [[summary[g]["std_time"] if summary[g]["std_time"] is not None
             else float("nan")] for g in groups]
    svg = svgplot.bar_chart_svg(groups, ["success rate [%]"], rates,
                                title="benchmark success rate")
    (out / "success_rate.svg").write_text(svg)
    svg = svgplot.bar_chart_svg(groups, ["mean time [s]"], times, errors=errs,
                                title="planning time (successful trials)")
    (out / "planning_time.svg").write_text(svg)
    print(table, end="")
    print(f"wrote {out / 'bench.csv'}")
    return 0


def cmd_swissroll(args):
    cfg = _load_cfg(args)
    roll = generate_swissroll(args.n, args.pieces, args.passage,
                              seed=cfg["pseudolabels"]["seed"])
    scales_str = args.scales or cfg["pseudolabels"]["scales"]
    pairs = configfile.parse_scales(scales_str)
    cp = ClusterParams(min_cluster_size=cfg["clusterer"]["min_cluster_size"],
                       min_samples=cfg["clusterer"]["min_samples"])
    schedule = default_schedule(pairs, cp, seed=cfg["pseudolabels"]["seed"],
                                n_epochs=cfg["embedder"]["n_epochs"])
    from .clusterer import cluster
    top, bottom = [], []
    for ep, cparams in schedule.scales:
        emb = embed(roll.points, ep)
        labels = cluster(emb.coords, cparams).labels
        # top: pseudo-labels on the original data (spiral cross-section);
        # bottom: the latent embedding they came from
        top.append((roll.points[:, 0], roll.points[:, 2], labels,
                    f"data, k={ep.n_neighbors}"))
        bottom.append((emb.coords[:, 0], emb.coords[:, 1], labels,
                       f"latent, k={ep.n_neighbors}"))
    svg = svgplot.panel_grid_svg(top + bottom, n_rows=2, n_cols=len(schedule))
    out = _out_dir(args) / "swissroll.svg"
    out.write_text(svg)
    print(f"wrote {out} ({2 * len(schedule)} panels)")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "labels": cmd_labels,
    "train": cmd_train,
    "plan": cmd_plan,
    "bench": cmd_bench,
    "swissroll": cmd_swissroll,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.print_config:
        print(configfile.dump_config(), end="")
        return 0
    if not args.command:
        parser.print_usage(_sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        return 2
    except Exception as exc:  # runtime failure -> exit 2 with diagnostic
        print(f"conplan {args.command}: {exc}", file=_sys.stderr)
        if args.verbose:
            raise
        return 2


if __name__ == "__main__":
    _sys.exit(main())
