"""Main application entry point."""

import argparse
import logging
import platform
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pydantic
from dotenv import load_dotenv

from deep_value_nets.core.autodiff import ShapeError, Tape
from deep_value_nets.core.inference import infer, round_output
from deep_value_nets.core.rng import Rng
from deep_value_nets.core.value_net import (
    ConvBaseline,
    ConvValueNet,
    MultiLabelBaseline,
    MultiLabelValueNet,
    NetworkParams,
    ValueNetwork,
)
from deep_value_nets.models.config import (
    Config,
    ConfigError,
    build_config,
    default_config_path,
    load_config,
)
from deep_value_nets.models.datasets import DataFormatError, Dataset, GridDataset
from deep_value_nets.services.experiments import (
    ablation_table,
    load_datasets,
    prior_panel,
    run_ablation,
    write_prior_panel,
)
from deep_value_nets.services.trainer import (
    NumericalError,
    evaluate,
    evaluate_baseline,
    primary_metric,
    score_predictions,
    train,
    train_baseline,
)
from deep_value_nets.utils.checkpoint import (
    Checkpoint,
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from deep_value_nets.utils.formats import (
    atomic_write_text,
    convert_xmc,
    load_grid_dataset,
    load_multilabel,
    read_pnm,
    read_text,
    save_grid_dataset,
    save_multilabel,
    write_label_sets,
    write_pbm,
    write_pgm,
    write_trajectory,
)
from deep_value_nets.utils.logging import resolve_logging, setup_logging

logger = logging.getLogger(__name__)

# Version info
VERSION = "1.0.0"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class Application:
    """Runs one CLI command against a validated configuration."""

    def __init__(self, config: Config, args: argparse.Namespace):
        """Initialize application.

        Args:
            config: Effective configuration after file, --set and --seed
            args: Parsed command-line arguments
        """
        self.config = config
        self.args = args

    @property
    def output_dir(self) -> Path:
        return Path(getattr(self.args, "output", None) or self.config.output_dir)

    def run(self) -> int:
        handlers = {
            "train": self.train,
            "eval": self.evaluate,
            "infer": self.infer,
            "gen-data": self.gen_data,
            "visualize-prior": self.visualize_prior,
            "ablate": self.ablate,
        }
        return handlers[self.args.command]()

    def _echo(self, model: str, config: Config) -> Dict[str, Any]:
        return {"model": model, "config": config.model_dump(mode="json")}

    def train(self) -> int:
        splits = load_datasets(self.config)
        out = self.output_dir
        result = train(self.config, splits.train, splits.valid, splits.test)
        net_config = self._with_network(self.config, result.net)
        save_checkpoint(
            out / "value.ckpt",
            Checkpoint(
                result.params,
                self._echo("value", net_config),
                result.step,
                self.config.training.seed,
            ),
        )
        result.report.write(out / "report.jsonl")
        atomic_write_text(
            out / "config.txt", "".join(f"{k}={v}\n" for k, v in net_config.flat().items())
        )
        if self.args.baseline:
            baseline, params, report = train_baseline(
                self.config, splits.train, splits.valid, splits.test
            )
            save_checkpoint(
                out / "baseline.ckpt",
                Checkpoint(params, self._echo("baseline", net_config), 0, self.config.training.seed),
            )
            report.write(out / "baseline_report.jsonl")
        logger.info(f"Training finished; outputs in {out}")
        _print_metrics(result.report.test)
        return EXIT_OK

    def _with_network(self, config: Config, net: ValueNetwork) -> Config:
        if isinstance(net, MultiLabelValueNet):
            return config.model_copy(update={"multilabel_net": net.config})
        return config.model_copy(update={"grid_net": net.config})

    def _restore(self) -> Tuple[str, Config, Any, NetworkParams]:
        checkpoint = load_checkpoint(self.args.checkpoint)
        echo = checkpoint.config
        if "config" not in echo or echo.get("model") not in ("value", "baseline"):
            raise CheckpointError(f"{self.args.checkpoint}: checkpoint carries no model description")
        config = build_config(echo["config"], self.args.overrides)
        if echo["model"] == "value":
            if config.task == "multilabel":
                model: Any = MultiLabelValueNet(config.multilabel_net)
            else:
                model = ConvValueNet(config.grid_net)
        elif config.task == "multilabel":
            ml = config.multilabel_net
            model = MultiLabelBaseline(ml.input_dim, ml.label_dim, config.baseline)
        else:
            model = ConvBaseline(config.grid_net)
        try:
            model.bind(Tape(), checkpoint.params)
        except (KeyError, ShapeError) as e:
            raise CheckpointError(
                f"{self.args.checkpoint}: parameters do not fit the recorded model ({e})"
            ) from None
        return echo["model"], config, model, checkpoint.params

    def _dataset(self, config: Config) -> Dataset:
        path = getattr(self.args, "data", None)
        if path:
            return load_multilabel(path) if config.task == "multilabel" else load_grid_dataset(path)
        splits = load_datasets(config)
        return splits.test if splits.test is not None else splits.train

    def evaluate(self) -> int:
        if self.args.predictions:
            return self._evaluate_files()
        if not self.args.checkpoint:
            raise UsageError("eval needs --checkpoint or --predictions")
        kind, config, model, params = self._restore()
        dataset = self._dataset(config)
        if kind == "value":
            metrics = evaluate(
                model, params, dataset, config.training.inference, Rng(config.training.seed)
            )
        else:
            metrics = evaluate_baseline(model, params, dataset)
        _print_metrics(metrics)
        return EXIT_OK

    def _evaluate_files(self) -> int:
        if not self.args.data:
            raise UsageError("eval --predictions needs --data with the ground truth")
        task = self.config.task
        if task == "multilabel":
            truth = load_multilabel(self.args.data)
            predictions = _read_label_sets(Path(self.args.predictions), truth.n_labels)
            if len(predictions) != len(truth):
                raise DataFormatError(
                    f"{len(predictions)} predictions for {len(truth)} examples", self.args.predictions
                )
            metrics = score_predictions(predictions, truth.targets(), task)
        else:
            truth = load_grid_dataset(self.args.data)
            paths = sorted(Path(self.args.predictions).glob("*.pbm"))
            if len(paths) != len(truth):
                raise DataFormatError(
                    f"{len(paths)} predicted masks for {len(truth)} examples", self.args.predictions
                )
            predictions = np.stack([read_pnm(p) for p in paths])
            metrics = score_predictions(predictions, truth.targets(), task, truth.protrusions)
        _print_metrics(metrics)
        return EXIT_OK

    def infer(self) -> int:
        kind, config, net, params = self._restore()
        if kind != "value":
            raise UsageError("infer needs a value-network checkpoint")
        dataset = self._dataset(config)
        inference = config.training.inference.model_copy(
            update={"record_trajectory": self.args.trajectory > 0}
        )
        out = self.output_dir
        rng = Rng(config.training.seed)
        outputs, relaxed = [], []
        for start in range(0, len(dataset), 64):
            rows = np.arange(start, min(start + 64, len(dataset)))
            result = infer(net, params, dataset.inputs(rows), inference, rng=rng)
            relaxed.append(result.y)
            outputs.append(round_output(result.y, inference.threshold))
            if result.trajectory is not None:
                for i, row in enumerate(rows):
                    if row < self.args.trajectory:
                        write_trajectory(
                            out / "trajectories" / f"{row:05d}.txt", result.trajectory.to_lines(i)
                        )
        predictions = np.concatenate(outputs)
        soft = np.concatenate(relaxed)
        if isinstance(dataset, GridDataset):
            for i in range(len(predictions)):
                write_pbm(out / "masks" / f"{i:05d}.pbm", predictions[i])
                if self.args.soft:
                    write_pgm(out / "soft" / f"{i:05d}.pgm", soft[i])
        else:
            write_label_sets(out / "labels.txt", predictions)
        logger.info(f"Wrote {len(predictions)} predictions to {out}")
        return EXIT_OK

    def gen_data(self) -> int:
        out = self.output_dir
        if self.args.from_xmc:
            source = Path(self.args.from_xmc)
            save_multilabel(out / f"{source.stem}.txt", convert_xmc(source))
            return EXIT_OK
        splits = load_datasets(self.config)
        if self.config.task == "multilabel":
            save_multilabel(out / "train.txt", splits.train)
            save_multilabel(out / "test.txt", splits.test)
        else:
            save_grid_dataset(out / "train", splits.train)
            save_grid_dataset(out / "test", splits.test)
        logger.info(f"Synthetic data written to {out}")
        return EXIT_OK

    def visualize_prior(self) -> int:
        kind, config, net, params = self._restore()
        if kind != "value" or config.task != "grid":
            raise UsageError("visualize-prior needs a grid value-network checkpoint")
        splits = load_datasets(config)
        panel = prior_panel(
            net,
            params,
            splits.train,
            self.args.noise_sigma,
            Rng(self.config.training.seed),
            config.training.inference,
            self.args.samples,
        )
        written = write_prior_panel(self.output_dir, panel)
        logger.info(f"Wrote {len(written)} prior images to {self.output_dir}")
        return EXIT_OK

    def ablate(self) -> int:
        splits = load_datasets(self.config)
        rows = run_ablation(self.config, splits)
        lines = ablation_table(rows, primary_metric(self.config.task))
        atomic_write_text(self.output_dir / "ablation.txt", "\n".join(lines) + "\n")
        for line in lines:
            print(line)
        return EXIT_OK


class UsageError(Exception):
    """Invalid combination of command-line options."""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _print_metrics(metrics: Dict[str, float]) -> None:
    for name, value in sorted(metrics.items()):
        print(f"{name} {value:.6f}")


def _read_label_sets(path: Path, n_labels: int) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"Predictions not found: {path}")
    lines = read_text(path).splitlines()
    predictions = np.zeros((len(lines), n_labels))
    for number, line in enumerate(lines, start=1):
        for token in filter(None, line.strip().split(",")):
            try:
                label = int(token)
            except ValueError:
                raise DataFormatError(f"bad label index '{token}'", str(path), number) from None
            if not 0 <= label < n_labels:
                raise DataFormatError(f"label {label} outside [0, {n_labels})", str(path), number)
            predictions[number - 1, label] = 1.0
    return predictions


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    common = _ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        type=Path,
        help="Configuration file, YAML or key=value (default: $DVN_CONFIG, else built-in defaults)",
    )
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a configuration field by dotted path (repeatable)",
    )
    common.add_argument("--seed", type=int, help="Seed for every random stream of the run")
    common.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARN", "ERROR"],
        help="Logging level (overrides config file)",
    )
    common.add_argument("--log-file", type=Path, help="Path to log file (default: stderr only)")
    common.add_argument("--output", type=Path, help="Output directory (default: output_dir)")

    parser = _ArgumentParser(
        prog="deep-value-nets",
        description="Deep value networks - learn to evaluate and iteratively refine structured outputs",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate the synthetic shapes task and train on it
  %(prog)s gen-data --config configs/shapes.yaml --output data/shapes
  %(prog)s train --config configs/shapes.yaml --seed 7 --output runs/shapes

  # Score a checkpoint and write predictions with trajectories
  %(prog)s eval --checkpoint runs/shapes/value.ckpt
  %(prog)s infer --checkpoint runs/shapes/value.ckpt --trajectory 5 --output runs/shapes/pred

  # Compare tuple-generation strategies
  %(prog)s ablate --config configs/shapes.yaml --seed 7

Environment Variables:
  DVN_CONFIG     Path to configuration file
  DVN_LOG_LEVEL  Logging level
  DVN_LOG_FILE   Path to log file

Exit codes: 0 success, 1 usage, 2 invalid config, 3 data error, 4 numeric failure
        """,
    )
    parser.add_argument("--version", action="store_true", help="Show version information")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("train", parents=[common], help="Train a value network")
    p.add_argument("--baseline", action="store_true", help="Also train the independent baseline")

    p = sub.add_parser("eval", parents=[common], help="Print the metric report")
    p.add_argument("--checkpoint", type=Path, help="Checkpoint to evaluate")
    p.add_argument("--data", help="Dataset file or directory (default: configured test split)")
    p.add_argument("--predictions", help="Score saved predictions instead of a checkpoint")

    p = sub.add_parser("infer", parents=[common], help="Write predicted masks or label sets")
    p.add_argument("--checkpoint", type=Path, required=True, help="Value-network checkpoint")
    p.add_argument("--data", help="Dataset file or directory (default: configured test split)")
    p.add_argument(
        "--trajectory", type=int, default=0, metavar="N", help="Dump trajectories of the first N inputs"
    )
    p.add_argument("--soft", action="store_true", help="Also write relaxed masks as graymaps")

    p = sub.add_parser("gen-data", parents=[common], help="Write synthetic or converted datasets")
    p.add_argument("--from-xmc", type=Path, help="Convert an extreme-classification text release")

    p = sub.add_parser("visualize-prior", parents=[common], help="Infer masks from the mean image")
    p.add_argument("--checkpoint", type=Path, required=True, help="Grid value-network checkpoint")
    p.add_argument(
        "--noise-sigma", type=float, default=10.0, help="Gaussian noise in 8-bit units (default: 10)"
    )
    p.add_argument("--samples", type=int, default=1, help="Number of noisy samples (default: 1)")

    sub.add_parser("ablate", parents=[common], help="Compare tuple-generation strategies")

    args = parser.parse_args(argv)

    # Handle --version flag
    if args.version:
        print(f"Deep value networks version:  {VERSION}")
        print(f"NumPy version:                {np.__version__}")
        print(f"Pydantic version:             {pydantic.VERSION}")
        print(f"Python version:               {platform.python_version()}")
        print(f"Platform:                     {platform.platform()}")
        sys.exit(EXIT_OK)

    if args.command is None:
        parser.print_usage(sys.stderr)
        parser.exit(EXIT_USAGE, f"{parser.prog}: error: a command is required\n")
    return args


def resolve_config(args: argparse.Namespace) -> Config:
    """Configuration file (or defaults), then --set overrides, then --seed."""
    overrides: List[str] = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"training.seed={args.seed}")
    config_path = args.config or default_config_path()
    if config_path:
        config = load_config(config_path, overrides)
        logger.info(f"Configuration loaded from {config_path}")
    else:
        config = build_config({}, overrides)
    if args.seed is not None and config.data.synthetic is not None:
        synthetic = config.data.synthetic.model_copy(update={"seed": args.seed})
        config = config.model_copy(
            update={"data": config.data.model_copy(update={"synthetic": synthetic})}
        )
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point."""
    load_dotenv()
    args = parse_args(argv)

    # Setup basic logging first
    level, log_file = resolve_logging(level=args.log_level, log_file=args.log_file)
    setup_logging(level=level, log_file=log_file)
    logger.info(f"Deep value networks v{VERSION}: {args.command}")

    try:
        config = resolve_config(args)
        configured = resolve_logging(
            config.logging.level, config.logging.file, args.log_level, args.log_file
        )
        if configured != (level, log_file):
            setup_logging(*configured)
        return Application(config, args).run()
    except ConfigError as e:
        logger.error(str(e))
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as e:
        print(f"deep-value-nets {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, CheckpointError, FileNotFoundError) as e:
        logger.error(f"Data error: {e}")
        return EXIT_DATA
    except (NumericalError, ShapeError) as e:
        logger.error(f"Numeric failure: {e}")
        return EXIT_NUMERIC
    except KeyboardInterrupt:
        logger.info("Received interrupt, stopping")
        return EXIT_USAGE
    except Exception as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
