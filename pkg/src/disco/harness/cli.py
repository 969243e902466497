"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

import argparse
import json
import logging
import sys

from ..copilot import HYBRID, USER_CENTRIC, CopilotConfig, HorizonConfig
from ..errors import ConfigError, NumericError
from ..pilots import NONE, CorruptionModel
from ..scheduler import DISCO, NO_COPILOT, STATE_BASED
from .checkpoint import file_digest, load_checkpoint, save_checkpoint
from .sweep import (SweepSpec, horizon_for_checkpoint, sweep,
                    write_sweep_csv)
from .data import DemoDataset, collect_demos
from .episodes import replay_record, run_episodes
from .records import read_records, write_records
from .train import TrainConfig, train

log = logging.getLogger(__name__)

ANCHOR_FLAGS = {"user": USER_CENTRIC, "hybrid": HYBRID}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="disco", description="diffusion action-sequence copilot toolkit")
    sub = p.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("collect", help="record scripted-expert demonstrations")
    c.add_argument("--env", required=True, choices=["drive4", "reach2"])
    c.add_argument("--n", required=True, type=int)
    c.add_argument("--seed", required=True, type=int)
    c.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train a denoiser on demonstrations")
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", required=True, type=int)
    t.add_argument("--seed", required=True, type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--single-step", action="store_true",
                   help="train the single-action baseline denoiser (O=1, P=1)")

    e = sub.add_parser("eval", help="batch-evaluate a condition")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--ckpt1", help="single-step checkpoint (state_based)")
    e.add_argument("--env", required=True, choices=["drive4", "reach2"])
    e.add_argument("--condition", required=True,
                   choices=[NO_COPILOT, STATE_BASED, DISCO])
    e.add_argument("--gamma", type=float, default=0.3)
    e.add_argument("--rho", type=float, default=0.5)
    e.add_argument("--beta", type=float, default=0.0)
    e.add_argument("--anchor", choices=sorted(ANCHOR_FLAGS), default="user")
    e.add_argument("--corruption", default="standard",
                   choices=["standard", "broken_pedal", "none"])
    e.add_argument("--n", required=True, type=int)
    e.add_argument("--seed", required=True, type=int)
    e.add_argument("--out", required=True)
    e.add_argument("--no-traces", action="store_true",
                   help="omit per-frame traces from the record file")

    s = sub.add_parser("sweep", help="gamma x rho grid evaluation")
    s.add_argument("--spec", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--ckpt1", help="single-step checkpoint if the spec "
                                   "includes the state_based condition")
    s.add_argument("--out", required=True)

    r = sub.add_parser("replay", help="verify recorded episodes reproduce")
    r.add_argument("--record", required=True)

    v = sub.add_parser("serve", help="run the live cockpit session server")
    v.add_argument("--port", required=True, type=int)
    v.add_argument("--ckpt", required=True)
    v.add_argument("--ckpt1")
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--records-dir", default="live_records")
    v.add_argument("--seed", type=int, default=0)
    return p


def _ckpt_info(path):
    return {"path": str(path), "digest": file_digest(path)}


def cmd_collect(args) -> int:
    ds = collect_demos(args.env, args.n, args.seed)
    ds.save(args.out)
    print(f"collected {args.n} episodes ({ds.n_frames} frames) -> {args.out}")
    return 0


def cmd_train(args) -> int:
    ds = DemoDataset.load(args.data)
    cfg = TrainConfig(single_step=args.single_step)
    result = train(ds, cfg, args.epochs, args.seed)
    save_checkpoint(result.checkpoint, args.out)
    print(f"trained {result.checkpoint.params.arch_id}: "
          f"loss {result.initial_loss:.4f} -> {result.final_loss:.4f} "
          f"-> {args.out}")
    return 0


def cmd_eval(args) -> int:
    ck = load_checkpoint(args.ckpt)
    ck1 = load_checkpoint(args.ckpt1) if args.ckpt1 else None
    if args.condition == NO_COPILOT or (args.condition == STATE_BASED
                                        and ck.single_step):
        horizon = HorizonConfig()
    else:
        horizon = horizon_for_checkpoint(ck)
    cfg = CopilotConfig(
        gamma_ratio=args.gamma, inpaint_ratio=args.rho, blend_ratio=args.beta,
        anchoring=ANCHOR_FLAGS[args.anchor], horizon=horizon,
    )
    corr = None if args.corruption == NONE else CorruptionModel(variant=args.corruption)
    metrics, records = run_episodes(
        args.env, args.condition, cfg, corr, ck, ck1, args.n, args.seed,
        ckpt_info=_ckpt_info(args.ckpt),
        ckpt1_info=_ckpt_info(args.ckpt1) if args.ckpt1 else None,
    )
    write_records(args.out, {"kind": "eval", "metrics": metrics,
                             "args": vars(args)},
                  records, with_traces=not args.no_traces)
    print(json.dumps(metrics, sort_keys=True, indent=2))
    return 0


def cmd_sweep(args) -> int:
    spec = SweepSpec.from_file(args.spec)
    ck = load_checkpoint(args.ckpt)
    ck1 = load_checkpoint(args.ckpt1) if args.ckpt1 else None
    rows = sweep(spec, ck, ck1)
    write_sweep_csv(rows, args.out)
    print(f"swept {len(rows)} cells -> {args.out}")
    return 0


def cmd_replay(args) -> int:
    meta, records = read_records(args.record)
    if not records:
        raise ConfigError(f"{args.record}: no episode records")
    ckpts = {}

    def load_verified(info):
        if info is None:
            return None
        path = info["path"]
        if path not in ckpts:
            if file_digest(path) != info["digest"]:
                raise ConfigError(f"{path}: checkpoint digest changed since recording")
            ckpts[path] = load_checkpoint(path)
        return ckpts[path]

    failures = 0
    for rec in records:
        ok, notes = replay_record(rec, load_verified(rec.ckpt),
                                  load_verified(rec.ckpt1))
        status = "ok" if ok else "MISMATCH: " + "; ".join(notes)
        print(f"{rec.episode_id}: {status}")
        failures += 0 if ok else 1
    print(f"replayed {len(records)} episodes, {failures} mismatches")
    return 0 if failures == 0 else 1


def cmd_serve(args) -> int:
    from ..service.server import serve
    serve(host=args.host, port=args.port, ckpt_path=args.ckpt,
          ckpt1_path=args.ckpt1, records_dir=args.records_dir, seed=args.seed)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    handler = {
        "collect": cmd_collect, "train": cmd_train, "eval": cmd_eval,
        "sweep": cmd_sweep, "replay": cmd_replay, "serve": cmd_serve,
    }[args.cmd]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
