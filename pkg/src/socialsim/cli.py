"""Command-line entry points; thin dispatch onto the core package.

Exit code 0 on success; failures print one machine-readable error line to
stderr (`error\t<kind>\t<message>`) and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dataset import GenerationSettings, generate_dataset
from .episodes import (
    PlannerBudget,
    ReplayIntegrityError,
    StructuralError,
    config_from_dict,
    load_record,
    run_episode,
    save_record,
    verify_replay,
)
from .inference import InferenceParams, predict_trajectories, simple_infer
from .pomcp import PUCTParams
from .scene import ConstraintError, EventType, SampleConstraints, sample_config


def _budget(args) -> PlannerBudget:
    return PlannerBudget(
        belief_particles=args.particles,
        puct=PUCTParams(num_simulations=args.simulations),
    )


def _add_budget_args(p, particles=50, simulations=1000):
    p.add_argument("--particles", type=int, default=particles,
                   help="belief particles per agent")
    p.add_argument("--simulations", type=int, default=simulations,
                   help="POMCP simulations per action")


def cmd_generate(args) -> int:
    settings = GenerationSettings(
        budget=_budget(args),
        balance=args.balance if args.balance != "none" else None,
        min_duration=args.min_duration,
        max_steps=args.max_steps,
        max_workers=args.workers,
    )
    manifest = generate_dataset(args.count, args.out, args.seed, settings)
    degenerate = sum(e.degenerate for e in manifest.entries)
    print(f"generated\t{len(manifest.entries)}\tepisodes -> {args.out}")
    print(f"degenerate\t{degenerate}")
    for split in ("train", "val", "test"):
        print(f"split\t{split}\t{len(manifest.files(split))}")
    return 0


def cmd_run(args) -> int:
    if args.config:
        cfg = config_from_dict(json.loads(Path(args.config).read_text()))
    else:
        constraints = SampleConstraints(
            event_type=EventType(args.event) if args.event else None,
            max_steps=args.max_steps,
        )
        cfg = sample_config(args.seed, constraints)
    record = run_episode(cfg, _budget(args))
    out = Path(args.out or f"episode_{cfg.seed}.jsonl")
    save_record(record, out)
    print(f"episode\t{out}\t{record.n_steps} steps\t{record.termination}")
    print(f"label\t{record.label.event_type.value}\t"
          f"{record.label.relation.value}")
    return 0


def cmd_replay(args) -> int:
    record = load_record(args.episode)
    if args.verify:
        verify_replay(record)
        print(f"verified\t{args.episode}\t{record.n_steps} steps")
    else:
        for k, state in enumerate(record.states()):
            print(json.dumps({"frame": k,
                              "pos": [list(map(float, p))
                                      for p in state.pos]}))
    return 0


def cmd_infer(args) -> int:
    from .service.app import posterior_payload

    params = InferenceParams(
        m_particles=args.m,
        l_iterations=args.iterations,
        sim_belief_particles=args.particles,
        sim_pomcp_simulations=args.simulations,
        seed=args.seed,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in args.episodes:
        record = load_record(path)
        result = simple_infer(record, params, mode=args.mode)
        prediction = None
        if args.predict:
            pred = predict_trajectories(record, params,
                                        prefix_steps=args.prefix,
                                        horizon=args.predict)
            prediction = {"positions": pred.tolist()}
        payload = posterior_payload(Path(path).stem, result, prediction)
        payload["prefix_steps"] = args.prefix
        out = out_dir / f"{Path(path).stem}.json"
        out.write_text(json.dumps(payload, indent=1))
        top_goals = {
            a: max(d, key=d.get)
            for a, d in payload["goal_posteriors"].items()
        }
        rel = max(payload["relation_posterior"],
                  key=payload["relation_posterior"].get)
        print(f"inferred\t{Path(path).stem}\tmode={args.mode}\t"
              f"goals={top_goals}\trelation={rel}")
    return 0


def cmd_evaluate(args) -> int:
    from .evaluation import MetricReport, score_prediction, score_recognition
    from .inference import PosteriorSummary

    import numpy as np

    episodes_dir = Path(args.episodes)
    predictions_dir = Path(args.predictions)
    report = MetricReport()
    scored = 0
    for ep_path in sorted(episodes_dir.glob("*.jsonl")):
        pred_path = predictions_dir / f"{ep_path.stem}.json"
        if not pred_path.exists():
            continue
        record = load_record(ep_path)
        payload = json.loads(pred_path.read_text())
        post = PosteriorSummary(
            goal_posteriors=payload["goal_posteriors"],
            alpha_posteriors={},
            relation_posterior=payload["relation_posterior"],
            strength_posteriors={},
            top_hypothesis=None,
            clipping_fired=payload.get("clipping_fired", False),
        )
        score = score_recognition(record, post)
        if payload.get("prediction"):
            pred = np.array(payload["prediction"]["positions"])
            prefix = payload.get("prefix_steps", 20)
            if record.n_steps >= prefix:
                score.ade, score.fde = score_prediction(record, pred, prefix)
        report.add(score)
        scored += 1
    summary = report.summary()
    print(f"episodes\t{scored}")
    for stratum in ("all", "independent", "social"):
        row = summary[stratum]
        print(
            f"{stratum}\tn={row['episodes']}\t"
            f"top1={row['top1']}\ttop2={row['top2']}\ttop3={row['top3']}\t"
            f"relation={row['relation']}\tade={row['ade']}\tfde={row['fde']}"
        )
    print("SUMMARY\t" + json.dumps(summary))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(episodes_dir=args.episodes, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="socialsim",
        description="Physical-social episode generation, inference, and "
                    "serving",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a dataset of episodes")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="var/dataset")
    p.add_argument("--balance", choices=["relation", "event", "none"],
                   default="relation")
    p.add_argument("--min-duration", type=int, default=40)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    _add_budget_args(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="run one episode")
    p.add_argument("--config", help="scenario config JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--event", choices=[e.value for e in EventType])
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--out")
    _add_budget_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("replay", help="replay an episode file")
    p.add_argument("episode")
    p.add_argument("--verify", action="store_true",
                   help="check stored states against re-derived ones")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("infer", help="run inference on episode files")
    p.add_argument("episodes", nargs="+")
    p.add_argument("--mode", choices=["initial", "global", "full"],
                   default="full")
    p.add_argument("--out", default="var/inference")
    p.add_argument("--m", type=int, default=15, help="hypothesis particles")
    p.add_argument("--iterations", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--predict", type=int, default=None,
                   help="also predict this many future steps")
    p.add_argument("--prefix", type=int, default=20)
    _add_budget_args(p, particles=10, simulations=100)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="score inference reports")
    p.add_argument("--episodes", required=True)
    p.add_argument("--predictions", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="start the HTTP/WebSocket service")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--episodes", default="var/episodes")
    p.add_argument("--frontend", default=None,
                   help="built web client directory to mount at /ui")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ReplayIntegrityError as e:
        print(f"error\treplay-integrity\t{e}", file=sys.stderr)
        return 3
    except StructuralError as e:
        print(f"error\tstructural\t{e}", file=sys.stderr)
        return 4
    except ConstraintError as e:
        print(f"error\tconstraint\t{e}", file=sys.stderr)
        return 5
    except FileNotFoundError as e:
        print(f"error\tmissing-file\t{e}", file=sys.stderr)
        return 6


if __name__ == "__main__":
    sys.exit(main())
