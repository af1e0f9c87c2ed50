"""Command line entry point.

Subcommands map onto the experiment modes:

    sagd sa-run          --config cfg.json --out results/
    sagd sgd-run         --config cfg.json --out results/
    sagd gslln-test      --config cfg.json --out results/
    sagd check-conditions --config cfg.json --out results/
    sagd sweep           --config cfg.json --out results/

Exit codes: 0 success, 1 config error, 2 runtime error, 3 assertion
failure (a config may carry an "assert" block; it is only enforced when
--assert is passed).
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiment import ConfigError, SummaryRecord, check_assertions, parse_config, run_experiment

_SUBCOMMAND_MODE = {
    "sa-run": "sa",
    "sgd-run": "sgd",
    "gslln-test": "gslln",
    "check-conditions": "conditions",
    "sweep": "sweep",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sagd", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMAND_MODE:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override base_seed")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--format", choices=("csv", "jsonl"), default=None)
        p.add_argument(
            "--assert",
            dest="enforce",
            action="store_true",
            help="enforce the config's assert block (exit 3 on failure)",
        )
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    mode = _SUBCOMMAND_MODE[args.command]
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    if raw.get("mode") is None:
        raw["mode"] = mode
    elif raw["mode"] != mode:
        print(f"config error: mode: config says {raw['mode']!r}, subcommand wants {mode!r}",
              file=sys.stderr)
        return 1
    if args.seed is not None:
        if mode == "sweep":
            raw.setdefault("base", {})["base_seed"] = args.seed
        elif mode != "conditions":
            raw["base_seed"] = args.seed
    try:
        cfg = parse_config(raw)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        summary = run_experiment(cfg, args.out, workers=args.workers, fmt=args.format)
    except Exception as e:  # noqa: BLE001 - boundary: report and signal exit code
        print(f"runtime error: {e}", file=sys.stderr)
        return 2
    if isinstance(summary, SummaryRecord):
        print(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    elif isinstance(summary, list):
        print(json.dumps([s.to_dict() if isinstance(s, SummaryRecord) else s for s in summary],
                         indent=2, sort_keys=True))
    else:
        print(json.dumps(summary, indent=2, sort_keys=True))
    if args.enforce and "assert" in cfg.normalized:
        if not isinstance(summary, SummaryRecord):
            print("assertion error: assert blocks apply to sa/sgd/gslln runs", file=sys.stderr)
            return 3
        ok, msgs = check_assertions(summary, cfg.normalized["assert"])
        if not ok:
            for m in msgs:
                print(f"assertion failed: {m}", file=sys.stderr)
            return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
