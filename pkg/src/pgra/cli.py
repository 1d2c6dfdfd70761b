"""Command-line entry point: ``pgra <verb> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import version_string
from .agent import train
from ._accel import backend_name
from .config import ConfigError, build_env, load_config, schedule_from, train_config
from .schedule import LearningRateSchedule, PowerRate, ordering_burn_in, validate_schedule

log = logging.getLogger("pgra")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def parse_seeds(text):
    """'3' -> [3]; '0..9' -> [0..9] inclusive; '1,4,7' -> [1, 4, 7]."""
    try:
        if ".." in text:
            lo, hi = text.split("..")
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad seed list {text!r}; use N, A..B or A,B,C") from None


# -- train -----------------------------------------------------------------

def run_experiment(cfg, out_dir):
    """Train one seed and write metrics, checkpoint(s) and the resolved config."""
    from .checkpoint import save_checkpoint

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.ini").write_text(cfg.render())
    tc = train_config(cfg)
    meta = {"config_hash": cfg.digest(), "version": version_string(), "backend": backend_name(),
            "env": cfg["env"]["type"]}
    every = cfg["run"]["checkpoint_every"]

    def on_episode(ep, learner):
        if every and (ep + 1) % every == 0:
            save_checkpoint(learner, out_dir / "checkpoints" / f"episode_{ep + 1:07d}.npz",
                            dict(meta, episode=ep + 1, seed=tc.seed))

    t0 = time.perf_counter()
    res = train(tc, meta, on_episode)
    res.metrics.metadata["wall_seconds"] = time.perf_counter() - t0
    res.metrics.write(out_dir)
    save_checkpoint(res.learner, out_dir / "checkpoint.npz", dict(meta, seed=tc.seed))
    if res.init_history:
        with open(out_dir / "init_loss.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("epoch", "loss"))
            w.writerows((k, repr(float(v))) for k, v in enumerate(res.init_history))
    rets = res.metrics.returns()
    tail = rets[-min(500, rets.size):]
    return {"seed": tc.seed, "out": str(out_dir), "episodes": int(rets.size),
            "final_mean_return": float(tail.mean())}


def _run_one(args):
    cfg, out = args
    return run_experiment(cfg, out)


def cmd_train(a):
    cfg = load_config(a.config)
    if a.allow_invalid_schedule:
        cfg["run"]["allow_invalid_schedule"] = True
    if a.episodes is not None:
        if a.episodes <= 0:
            raise UsageError("--episodes must be > 0")
        cfg["run"]["episodes"] = a.episodes
    violations = validate_schedule(schedule_from(cfg))
    if violations and not cfg["run"]["allow_invalid_schedule"]:
        raise ConfigError(f"{a.config}: learning-rate schedule violates "
                          + ", ".join(violations) + " (pass --allow-invalid-schedule to run anyway)")
    out = Path(a.out)
    if a.seeds is not None:
        jobs = [(cfg.with_seed(s), out / f"seed_{s}") for s in parse_seeds(a.seeds)]
    else:
        seed = cfg["run"]["seed"] if a.seed is None else a.seed
        jobs = [(cfg.with_seed(seed), out)]
    if a.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=a.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    for r in results:
        print(f"seed {r['seed']}: {r['episodes']} episodes, mean return over last "
              f"{min(500, r['episodes'])} = {r['final_mean_return']:.4f} -> {r['out']}")
    return EXIT_OK


# -- aggregate ---------------------------------------------------------------

def _expand_runs(paths):
    runs = []
    for p in map(Path, paths):
        if not p.exists():
            raise FileNotFoundError(f"run directory not found: {p}")
        if (p / "meta.json").exists():
            runs.append(p)
        else:
            kids = sorted(c for c in p.iterdir() if (c / "meta.json").exists())
            if not kids:
                raise UsageError(f"{p}: no metrics found (expected meta.json here or in subdirectories)")
            runs.extend(kids)
    return runs


def cmd_aggregate(a):
    from .metrics import aggregate_runs

    runs = _expand_runs(a.runs)
    mean, std = aggregate_runs(runs, a.out, window=a.window)
    if a.svg:
        from .plotting import learning_curve_svg

        learning_curve_svg(mean, std, a.svg, title="Return (mean and one std)",
                           label=f"{len(runs)} runs")
    tail = mean[-min(500, mean.size):]
    print(f"aggregated {len(runs)} runs x {mean.size} episodes -> {a.out}; "
          f"final mean return {tail.mean():.4f}")
    return EXIT_OK


# -- plot-embeddings -----------------------------------------------------------

def cmd_plot_embeddings(a):
    from .plotting import embedding_scatter_svg

    cfg = load_config(a.config)
    if cfg["env"]["type"] != "maze":
        raise UsageError("plot-embeddings colours points by maze displacement; use a maze config")
    env = build_env(cfg)
    t0 = time.perf_counter()
    if a.checkpoint:
        from .checkpoint import load_checkpoint

        rep = load_checkpoint(a.checkpoint).representations()
        if rep is None:
            raise UsageError(f"{a.checkpoint}: checkpoint has no action representations")
    else:
        from .agent import Learner, collect_random_trajectories, initialize_representations, streams

        tc = train_config(cfg.with_seed(cfg["run"]["seed"] if a.seed is None else a.seed), env)
        if not tc.uses_representations:
            raise UsageError("the configured algorithm has no action representations")
        rng_params, rng_rollout, rng_init, _ = streams(tc.seed)
        learner = Learner(tc, env.n_actions, env.n_features, rng_params)
        data = collect_random_trajectories(env, tc.n_init_trajectories, rng_rollout)
        hist = initialize_representations(data, learner.rep, tc, rng_init, env)
        rep = learner.rep
        print(f"representation training: {len(hist) - 1} epochs, loss {hist[0]:.4f} -> {hist[-1]:.4f}")
    if rep.n_actions != env.n_actions:
        raise UsageError(f"representations cover {rep.n_actions} actions, maze has {env.n_actions}")
    embedding_scatter_svg(rep.representations, env.config.displacements, a.out, project=a.project)
    print(f"wrote {a.out} ({rep.n_actions} actions) in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK


# -- validate-schedule ---------------------------------------------------------

def cmd_validate_schedule(a):
    if a.config:
        sched = schedule_from(load_config(a.config))
    elif a.exponents:
        c, r, t = a.exponents
        sched = LearningRateSchedule(*(PowerRate.starting_at(a.initial, e, a.offset) for e in (c, r, t)))
    else:
        raise UsageError("give a config file or --exponents CRITIC REPRESENTATION ACTOR")
    for name, rate in zip(("critic", "representation", "actor"),
                          (sched.critic, sched.representation, sched.actor)):
        print(f"{name:>15}: base={rate.base!r} exponent={rate.exponent!r} offset={rate.offset!r}")
    violations = validate_schedule(sched)
    if violations:
        for v in violations:
            print(f"VIOLATED {v}")
        return EXIT_FAIL
    burn = ordering_burn_in(sched)
    print(f"ok; actor <= representation <= critic holds for all t >= {burn}")
    return EXIT_OK


# -- oracle ----------------------------------------------------------------

def cmd_oracle(a):
    from . import oracle

    path = Path(a.mdp)
    if not path.is_file():
        raise FileNotFoundError(f"TinyMDP file not found: {path}")
    mdp = oracle.load_tiny_mdp(path)
    pol, rep = oracle.random_instance(mdp, a.seed, sigma=a.sigma)
    total = max(abs(oracle.overall_policy(pol, rep, phi, a.resolution).probs.sum() - 1.0)
                for phi in mdp.features)
    l1 = oracle.lemma1_check(mdp, pol, rep, a.resolution)
    l1_half = oracle.lemma1_check(mdp, pol, rep, a.resolution / 2)
    l2 = oracle.lemma2_check(mdp, pol, rep, a.h, a.resolution)
    report = {"mdp": str(path), "states": mdp.n_states, "actions": mdp.n_actions,
              "resolution": a.resolution, "partition_error": total,
              "value_identity": l1, "value_identity_half_step": l1_half,
              "gradient_identity_relative": l2.relative,
              "gradient_identity_absolute": l2.absolute}
    print(json.dumps(report, indent=2))
    return EXIT_OK


# -- synth-log ---------------------------------------------------------------

def cmd_synth_log(a):
    from .envs import recsys

    records = recsys.synthesize_log(a.items, a.sessions, tuple(a.length), a.skew, a.seed,
                                    a.successors, a.jump_prob)
    recsys.write_click_log(records, a.out)
    print(f"wrote {len(records)} clicks in {a.sessions} sessions -> {a.out}")
    if a.mdp_out:
        ing = recsys.ingest_click_log(records, a.min_clicks)
        mdp = recsys.build_ngram_mdp(ing.sequences, a.ngram, ing.items, a.mdp_seed, a.d_item,
                                     boost=a.boost, horizon=a.horizon)
        recsys.save_mdp(mdp, a.mdp_out)
        print(f"{ing.items.size} items kept ({ing.dropped} below {a.min_clicks} clicks), "
              f"{len(mdp.states)} n-gram states -> {a.mdp_out}")
    return EXIT_OK


# -- wiring ------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="pgra", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    t = sub.add_parser("train", help="train from an INI config")
    t.add_argument("config")
    t.add_argument("--out", required=True, help="run directory (one subdirectory per seed with --seeds)")
    g = t.add_mutually_exclusive_group()
    g.add_argument("--seed", type=int)
    g.add_argument("--seeds", help="N, A..B (inclusive) or A,B,C")
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--episodes", type=int, help="override [run] episodes")
    t.add_argument("--allow-invalid-schedule", action="store_true")
    t.set_defaults(func=cmd_train)

    ag = sub.add_parser("aggregate", help="mean/std of returns across runs")
    ag.add_argument("runs", nargs="+")
    ag.add_argument("--out", required=True)
    ag.add_argument("--window", type=int, default=1)
    ag.add_argument("--svg")
    ag.set_defaults(func=cmd_aggregate)

    pe = sub.add_parser("plot-embeddings", help="SVG scatter of maze action representations")
    pe.add_argument("config")
    pe.add_argument("--out", required=True)
    pe.add_argument("--checkpoint")
    pe.add_argument("--seed", type=int)
    pe.add_argument("--project", choices=("pca",))
    pe.set_defaults(func=cmd_plot_embeddings)

    vs = sub.add_parser("validate-schedule", help="check the step-size conditions")
    vs.add_argument("config", nargs="?")
    vs.add_argument("--exponents", type=float, nargs=3, metavar=("CRITIC", "REP", "ACTOR"))
    vs.add_argument("--initial", type=float, default=0.01)
    vs.add_argument("--offset", type=float, default=1e5)
    vs.set_defaults(func=cmd_validate_schedule)

    o = sub.add_parser("oracle", help="numerical identity checks on a TinyMDP JSON file")
    o.add_argument("mdp")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--sigma", type=float, default=0.25)
    o.add_argument("--resolution", type=float, default=1e-4)
    o.add_argument("--h", type=float, default=1e-5)
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("synth-log", help="generate a synthetic click log (and optionally an MDP)")
    s.add_argument("--items", type=int, default=1498)
    s.add_argument("--sessions", type=int, default=20000)
    s.add_argument("--length", type=int, nargs=2, default=(2, 20), metavar=("MIN", "MAX"))
    s.add_argument("--skew", type=float, default=1.1)
    s.add_argument("--successors", type=int, default=5)
    s.add_argument("--jump-prob", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--mdp-out")
    s.add_argument("--min-clicks", type=int, default=100)
    s.add_argument("--ngram", type=int, default=2)
    s.add_argument("--d-item", type=int, default=8)
    s.add_argument("--horizon", type=int, default=20)
    s.add_argument("--boost", type=float, default=3.0)
    s.add_argument("--mdp-seed", type=int, default=0)
    s.set_defaults(func=cmd_synth_log)
    return p


def main(argv=None):
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.func(a)
    except FileNotFoundError as exc:
        msg = str(exc) if exc.filename is None else f"file not found: {exc.filename}"
        print(f"pgra: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, UsageError) as exc:
        print(f"pgra: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FloatingPointError, ValueError, RuntimeError, OSError) as exc:
        print(f"pgra: run failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
