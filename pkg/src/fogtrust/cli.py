import argparse
import csv
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from ._agent import train
from ._errors import ConfigError
from ._experiment import CSV_COLUMNS, ExperimentConfig, check_references, run_experiment
from ._ledger import read_chain, verify_chain
from ._network import save_checkpoint
from ._policies import POLICY_NAMES
from ._schedulability import (
    StreamDemand,
    admit,
    candidate_deltas,
    dbf,
    default_delta_max,
    load,
    max_load,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _load_config(args) -> ExperimentConfig:
    if not args.config.is_file():
        raise ConfigError(f"config file {args.config} does not exist")
    config = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        config = ExperimentConfig.model_validate(
            config.model_dump() | {"seeds": [args.seed]}
        )
    return config


def _print_rows(rows) -> None:
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_fields())


def cmd_run(args) -> int:
    config = _load_config(args)
    run_experiment(config, out_dir=args.out_dir, export_chains=args.export_chains)
    return EXIT_OK


def cmd_train(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        training = config.training.model_copy(update={"seed": args.seed})
        config = ExperimentConfig.model_validate(
            config.model_dump() | {"training": training.model_dump()}
        )
    topology = check_references(config)

    network, curve = train(
        topology,
        config.streams,
        config.training,
        config.ledger,
        config.attack,
        weights=config.reward,
        horizon=config.horizon,
    )
    args.output.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(
        args.output, network, seed=config.training.seed, config_digest=config.digest
    )
    if curve:
        logger.info(
            f"final episode: reward {curve[-1].mean_reward:.4f}, "
            f"sched ratio {curve[-1].sched_ratio:.3f}"
        )
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load_config(args)
    update = {"policies": [args.policy]}
    if args.checkpoint is not None:
        update["checkpoint"] = str(args.checkpoint)
    config = ExperimentConfig.model_validate(config.model_dump() | update)

    rows = run_experiment(config, out_dir=args.out_dir)
    _print_rows(rows)
    return EXIT_OK


def _read_demands(path: Path) -> list[StreamDemand]:
    if not path.is_file():
        raise ConfigError(f"demand file {path} does not exist")
    with path.open(newline="", encoding="utf-8") as file:
        reader = csv.DictReader(file)
        # headers are case-insensitive: C,T,D and c,t,d both work
        reader.fieldnames = [name.strip().lower() for name in reader.fieldnames or []]
        missing = {"c", "t", "d"} - set(reader.fieldnames)
        if missing:
            raise ConfigError(f"{path.name}: missing columns {sorted(missing)}")
        demands = []
        for line, r in enumerate(reader, start=2):
            try:
                demands.append(StreamDemand(float(r["c"]), float(r["t"]), float(r["d"])))
            except (TypeError, ValueError) as e:
                raise ConfigError(f"{path.name}:{line}: {e}") from e
        return demands


def cmd_analyze_dbf(args) -> int:
    demands = _read_demands(args.demand_file)
    delta_max = args.delta_max or default_delta_max(demands)

    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["delta", *(f"dbf_{i}" for i in range(len(demands))), "load"])
    for delta in candidate_deltas(demands, delta_max):
        out.writerow(
            [
                repr(delta),
                *(repr(dbf(d, delta)) for d in demands),
                repr(load(demands, delta)),
            ]
        )

    peak, at = max_load(demands, delta_max)
    out.writerow([])
    out.writerow(["max_load", "at_delta", "delta_max"])
    out.writerow([repr(peak), repr(at), repr(delta_max)])

    # incremental admission in file order
    out.writerow([])
    out.writerow(["stream", "admitted"])
    admitted = []
    for i, demand in enumerate(demands):
        verdict = admit(admitted, demand, delta_max)
        if verdict:
            admitted.append(demand)
        out.writerow([i, str(verdict).lower()])
    return EXIT_OK


def cmd_audit(args) -> int:
    chain = read_chain(args.chain_file)
    verdict = verify_chain(chain)
    if verdict.ok:
        print(f"ok: {len(chain.blocks)} blocks, {len(chain.records)} records")
        return EXIT_OK

    print(f"bad: block {verdict.bad_index} ({verdict.reason})")
    return EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fogtrust",
        description="Trust-aware task offloading simulator for IoT-fog-cloud systems.",
    )
    parser.add_argument("--seed", type=int, help="override the seed(s) of the config")
    parser.add_argument(
        "--out-dir", type=Path, default=Path("results"), help="directory for result files"
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-q", "--quiet", action="store_true")
    verbosity.add_argument("-v", "--verbose", action="store_true")

    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser(
        "run", help="train if needed and evaluate every policy and seed"
    )
    run.add_argument("config", type=Path)
    run.add_argument(
        "--export-chains", action="store_true", help="write each run's ledger as NDJSON"
    )
    run.set_defaults(func=cmd_run)

    train_ = commands.add_parser("train", help="train a Q-network and save its weights")
    train_.add_argument("config", type=Path)
    train_.add_argument("-o", "--output", type=Path, required=True)
    train_.set_defaults(func=cmd_train)

    eval_ = commands.add_parser("eval", help="evaluate a single policy")
    eval_.add_argument("config", type=Path)
    eval_.add_argument("--policy", required=True, choices=sorted(POLICY_NAMES))
    eval_.add_argument("--checkpoint", type=Path)
    eval_.set_defaults(func=cmd_eval)

    analyze = commands.add_parser("analyze", help="schedulability analysis")
    analyses = analyze.add_subparsers(dest="analysis", required=True)
    dbf_ = analyses.add_parser(
        "dbf", help="demand bound table of a CSV file with columns c,t,d"
    )
    dbf_.add_argument("demand_file", type=Path)
    dbf_.add_argument("--delta-max", type=float)
    dbf_.set_defaults(func=cmd_analyze_dbf)

    audit = commands.add_parser("audit", help="verify an exported chain")
    audit.add_argument("chain_file", type=Path)
    audit.set_defaults(func=cmd_audit)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    level = logging.INFO
    if args.quiet:
        level = logging.WARNING
    elif args.verbose:
        level = logging.DEBUG
    logging.basicConfig(
        level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )

    try:
        return args.func(args)
    except (ConfigError, ValidationError) as e:
        logger.error(f"invalid configuration: {e}")
        return EXIT_CONFIG
    except Exception:
        logger.exception(f"{args.command} failed")
        return EXIT_RUNTIME
