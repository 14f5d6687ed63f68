"""Randomized-scene benchmark of start/goal selection strategies.

Every scene fixes obstacles, a start pose and a goal pose with their
collision-free IK candidate sets; each requested strategy then selects one
candidate pair and runs the planner on identical inputs (scene parity).
Reported planning times are the planner's deterministic virtual clock so
benchmark CSVs are bit-reproducible for a fixed seed and config.

Optionally each row records whether the selected pair is oracle-certified
connected under the scene's obstacles (the base oracle graph is re-filtered
per scene).
"""

import csv
import io
import logging
import math
from dataclasses import dataclass

import numpy as np

from .connectivity import STRATEGIES, select_pair
from .dataset import ik_candidates, sample_object_pose, task_masks_default
from .errors import GenerationError, InvalidArgumentError
from .oracle import (UnattachableQueryError, attach, build_from_samples,
                     with_obstacles)
from .planner import Obstacle, PlanningProblem, obstacle_array, plan

log = logging.getLogger(__name__)

CSV_HEADER = "scene_id,strategy,success,planning_time_s,start_idx,goal_idx,oracle_same_component"


@dataclass(frozen=True)
class BenchConfig:
    n_scenes: int = 100
    n_obstacles: int = 3
    time_limit: float = 5.0
    strategies: tuple = STRATEGIES
    seed: int = 0
    obstacle_radius: tuple = (0.08, 0.25)
    ik_candidates: int = 8
    ik_restarts: int = 24
    margin: float = 0.02
    step_size: float = 0.1
    resolution: float = 0.02
    iters_per_second: float = 800.0
    connect_every: int = 10
    workers: int = 1

    def __post_init__(self):
        if self.n_scenes < 1:
            raise InvalidArgumentError("n_scenes must be >= 1")
        if self.time_limit <= 0:
            raise InvalidArgumentError("time_limit must be positive")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise InvalidArgumentError(f"unknown strategy {s!r}")


@dataclass
class Scene:
    scene_id: int
    obstacles: tuple
    start_candidates: list
    goal_candidates: list


@dataclass
class BenchRow:
    scene_id: int
    strategy: str
    success: bool
    planning_time_s: float
    start_idx: int
    goal_idx: int
    oracle_same_component: bool = None


def _workspace_box(sys):
    xs = [c.base_pose.x for c in sys.chains]
    ys = [c.base_pose.y for c in sys.chains]
    reach = max(c.reach() for c in sys.chains)
    return (min(xs) - reach, max(xs) + reach, min(ys) - reach, max(ys) + reach)


def _sample_obstacles(sys, rng, n_obstacles, radius_range, margin):
    x0, x1, y0, y1 = _workspace_box(sys)
    bases = [(c.base_pose.x, c.base_pose.y) for c in sys.chains]
    out = []
    guard = 0
    while len(out) < n_obstacles and guard < 200:
        guard += 1
        r = rng.uniform(*radius_range)
        cx = rng.uniform(x0, x1)
        cy = rng.uniform(y0, y1)
        # keep shoulders free: an obstacle swallowing a base blocks everything
        if any(math.hypot(cx - bx, cy - by) < r + margin + 0.2 for bx, by in bases):
            continue
        out.append(Obstacle(center=(cx, cy), radius=r))
    return tuple(out)


def _candidate_components(scene_oracle, starts, goals):
    def attach_or_none(q):
        try:
            return attach(scene_oracle, q)
        except UnattachableQueryError:
            return None
    cs = {c for c in (attach_or_none(q) for q in starts) if c is not None}
    cg = {c for c in (attach_or_none(q) for q in goals) if c is not None}
    return cs, cg


def generate_scene(sys, scene_id, cfg, max_attempts=40, base_oracle=None,
                   requirement="feasible"):
    """One benchmark scene: obstacles plus non-empty start/goal candidate
    sets (self- and obstacle-collision filtered).

    With a base oracle, ``requirement`` shapes the scene distribution:
    "feasible" keeps scenes with at least one oracle-connected start/goal
    pair (solvable by construction, as in physically realized manipulation
    setups); "emd" additionally demands the candidates span >= 2 certified
    components, so pair selection genuinely matters. Which pairs connect
    stays unknown to the strategies. None if the attempt budget runs
    out."""
    masks = task_masks_default(sys)
    for attempt in range(max_attempts):
        ss = np.random.SeedSequence(cfg.seed, spawn_key=(scene_id, attempt))
        rng = np.random.default_rng(ss)
        obstacles = _sample_obstacles(sys, rng, cfg.n_obstacles,
                                      cfg.obstacle_radius, cfg.margin)
        if len(obstacles) < cfg.n_obstacles:
            continue
        obs_arr = obstacle_array(obstacles)
        cands = []
        ok = True
        for side in range(2):
            pose, targets = sample_object_pose(sys, rng, masks=masks)
            if pose is None:
                ok = False
                break
            side_cands = ik_candidates(
                sys, targets, seed=int(ss.generate_state(2)[side]), masks=masks,
                restarts=cfg.ik_restarts, cap=cfg.ik_candidates,
                margin=cfg.margin, obstacles=obs_arr)
            if not side_cands:
                ok = False
                break
            cands.append(side_cands)
        if not ok:
            continue
        if base_oracle is not None and requirement is not None:
            scene_oracle = with_obstacles(base_oracle, obs_arr)
            cs, cg = _candidate_components(scene_oracle, cands[0], cands[1])
            if not cs & cg:
                continue
            if requirement == "emd" and len(cs | cg) < 2:
                continue
        return Scene(scene_id=scene_id, obstacles=obstacles,
                     start_candidates=cands[0], goal_candidates=cands[1])
    return None


def _scene_rows(sys, scene, cfg, model, base_oracle):
    rows = []
    scene_oracle = None
    if base_oracle is not None:
        scene_oracle = with_obstacles(base_oracle, obstacle_array(scene.obstacles))
    plan_seed = int(np.random.SeedSequence(
        cfg.seed, spawn_key=(scene.scene_id, 90001)).generate_state(1)[0])
    select_seed = int(np.random.SeedSequence(
        cfg.seed, spawn_key=(scene.scene_id, 90002)).generate_state(1)[0])
    for strategy in cfg.strategies:
        s_idx, g_idx = select_pair(model, scene.start_candidates,
                                   scene.goal_candidates, strategy,
                                   seed=select_seed)
        prob = PlanningProblem(system=sys,
                               q_start=scene.start_candidates[s_idx],
                               q_goal=scene.goal_candidates[g_idx],
                               obstacles=scene.obstacles,
                               step_size=cfg.step_size,
                               resolution=cfg.resolution,
                               margin=cfg.margin,
                               time_limit=cfg.time_limit,
                               seed=plan_seed,
                               iters_per_second=cfg.iters_per_second,
                               connect_every=cfg.connect_every)
        result = plan(prob)
        same = None
        if scene_oracle is not None:
            try:
                same = bool(attach(scene_oracle, prob.q_start)
                            == attach(scene_oracle, prob.q_goal))
            except UnattachableQueryError:
                same = None
        rows.append(BenchRow(scene_id=scene.scene_id, strategy=strategy,
                             success=result.success,
                             planning_time_s=result.virtual_time,
                             start_idx=s_idx, goal_idx=g_idx,
                             oracle_same_component=same))
    return rows


def annotation_oracle(sys, scenes, base):
    """Base oracle extended with every scene candidate, so benchmark
    endpoints attach to themselves exactly."""
    pool = list(base.samples)
    for scene in scenes:
        pool.extend(scene.start_candidates)
        pool.extend(scene.goal_candidates)
    return build_from_samples(sys, pool, base.radius, margin=base.margin,
                              resolution=base.resolution,
                              drift_bound=base.drift_bound, max_gap=base.max_gap)


def _gen_task(args):
    sys, scene_id, cfg, base_oracle, requirement = args
    return scene_id, generate_scene(sys, scene_id, cfg, base_oracle=base_oracle,
                                    requirement=requirement)


def _row_task(args):
    sys, scene, cfg, model, annot_oracle = args
    return scene.scene_id, _scene_rows(sys, scene, cfg, model, annot_oracle)


def _pool_map(fn, tasks, workers):
    if workers > 1 and len(tasks) > 1:
        import multiprocessing as mp
        with mp.get_context("fork").Pool(workers) as pool:
            return pool.map(fn, tasks)
    return [fn(t) for t in tasks]


def run_bench(sys, cfg, model=None, base_oracle=None, scene_requirement=None):
    """Run every strategy over cfg.n_scenes identical scenes.

    Returns (rows, scenes). ``scene_requirement`` ("feasible" or "emd",
    needs a base oracle) regenerates scenes until the requirement holds;
    see ``generate_scene``. Connectivity annotations use the base oracle
    extended with every scene candidate, so queried endpoints attach to
    themselves exactly. Scene-level work is dispatched to a process pool
    when cfg.workers > 1; results are merged in scene order so the output
    is identical either way.
    """
    if "feature-space" in cfg.strategies and model is None:
        raise InvalidArgumentError("feature-space strategy needs a trained model")
    if scene_requirement is not None and base_oracle is None:
        raise InvalidArgumentError("scene_requirement needs a base oracle")
    gen_tasks = [(sys, i, cfg,
                  base_oracle if scene_requirement is not None else None,
                  scene_requirement)
                 for i in range(cfg.n_scenes)]
    generated = sorted(_pool_map(_gen_task, gen_tasks, cfg.workers),
                       key=lambda r: r[0])
    dropped = [sid for sid, scene in generated if scene is None]
    if dropped:
        log.warning("dropped %d scenes without feasible candidates: %s",
                    len(dropped), dropped[:10])
    scenes = [scene for _sid, scene in generated if scene is not None]
    if not scenes:
        raise GenerationError("no feasible benchmark scenes", {"dropped": dropped})
    annot_oracle = None
    if base_oracle is not None:
        annot_oracle = annotation_oracle(sys, scenes, base_oracle)
    row_tasks = [(sys, scene, cfg, model, annot_oracle) for scene in scenes]
    row_results = sorted(_pool_map(_row_task, row_tasks, cfg.workers),
                         key=lambda r: r[0])
    rows = [row for _sid, scene_rows in row_results for row in scene_rows]
    return rows, scenes


def summarize(rows):
    """Per-strategy success rate (%) over all trials and mean/std
    (population) planning time over successful trials only."""
    if not rows:
        raise InvalidArgumentError("no rows to summarize")
    strategies = []
    for r in rows:
        if r.strategy not in strategies:
            strategies.append(r.strategy)
    out = {}
    for s in strategies:
        sel = [r for r in rows if r.strategy == s]
        times = np.array([r.planning_time_s for r in sel if r.success])
        rate = 100.0 * sum(r.success for r in sel) / len(sel)
        if times.size:
            out[s] = {"success_rate": rate,
                      "mean_time": float(times.mean()),
                      "std_time": float(times.std()),  # population std
                      "n": len(sel)}
        else:
            out[s] = {"success_rate": rate, "mean_time": None,
                      "std_time": None, "n": len(sel)}
    return out


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for r in rows:
        writer.writerow([
            r.scene_id,
            r.strategy,
            "true" if r.success else "false",
            repr(float(r.planning_time_s)),
            r.start_idx,
            r.goal_idx,
            "" if r.oracle_same_component is None
            else ("true" if r.oracle_same_component else "false"),
        ])
    return buf.getvalue()


def summary_table(summary, time_limit, n_obstacles):
    """Plain-text table mirroring success-rate / mean-time reporting.

    Times are the deterministic virtual planning clock; std is the
    population standard deviation over successful trials.
    """
    lines = [f"# scenes with {n_obstacles} obstacles, time limit {time_limit:g}s",
             "# mean/std over successful trials only (population std)",
             f"{'strategy':<16}{'success rate':>14}{'mean time [s]':>16}{'std [s]':>12}"]
    for s, row in summary.items():
        if row["mean_time"] is None:
            lines.append(f"{s:<16}{row['success_rate']:>13.1f}%{'n/a':>16}{'n/a':>12}")
        else:
            lines.append(f"{s:<16}{row['success_rate']:>13.1f}%"
                         f"{row['mean_time']:>16.3f}{row['std_time']:>12.3f}")
    return "\n".join(lines) + "\n"
