#!/usr/bin/env python3
"""
MetaNulling - Few-Shot Meta-Learning with Linear Nulling

Trains an embedding network jointly with a bank of class reference vectors,
classifying episode queries after projecting onto the null space of the
per-class error vectors. Subcommands: train, eval, inspect.

License: MIT
"""

import argparse
import logging
import logging.handlers
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

try:
    import colorama
    colorama.init()
    COLORAMA_AVAILABLE = True

    # ANSI color codes
    class Colors:
        GREEN = '\033[92m'
        YELLOW = '\033[93m'
        RED = '\033[91m'
        BLUE = '\033[94m'
        CYAN = '\033[96m'
        WHITE = '\033[97m'
        BOLD = '\033[1m'
        END = '\033[0m'
except ImportError:
    COLORAMA_AVAILABLE = False

    class Colors:
        GREEN = YELLOW = RED = BLUE = CYAN = WHITE = BOLD = END = ''

# Import core modules
try:
    from core import (
        ConfigError,
        ConfigManager,
        EpisodeSampler,
        FewShotEvaluator,
        MetaTrainer,
        MLNError,
        PlatformUtils,
        RngStream,
        describe_checkpoint,
        inspect_projector,
        load_checkpoint,
        nearest_class_mean_accuracy,
        save_checkpoint,
        write_metrics_csv,
    )
except ImportError as e:
    print(f"Error: Failed to import core modules: {e}")
    print("Please ensure all dependencies are installed and core modules are available.")
    sys.exit(1)

logger = logging.getLogger('meta_nulling')

COMMANDS = ('train', 'eval', 'inspect')


@dataclass
class CliConfig:
    """What one invocation asked for."""
    command: str
    config_file: Optional[str] = None
    preset: Optional[str] = None
    overrides: List[str] = field(default_factory=list)
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> 'CliConfig':
        outputs = {name: getattr(args, name) for name in
                   ('out', 'metrics', 'report', 'per_episode', 'save_config')
                   if getattr(args, name, None)}
        return cls(command=args.command, config_file=args.config, preset=args.preset,
                   overrides=list(args.overrides or []), outputs=outputs)


class MetaNullingRunner:
    """Dispatches one subcommand against a resolved configuration."""

    def __init__(self, config_manager: ConfigManager, cli: CliConfig, quiet: bool = False):
        self.config = config_manager
        self.cli = cli
        self.quiet = quiet
        self.platform_utils = PlatformUtils()
        self.colors = self.platform_utils.supports_colors()

    def _say(self, message: str, color: str = ''):
        if self.quiet:
            return
        if color and self.colors:
            print(f"{color}{message}{Colors.END}")
        else:
            print(message)

    def _print_header(self):
        """Print application header."""
        if self.quiet:
            return
        banner = "\n".join(["=" * 60, "        MetaNulling - Few-Shot Learning with Linear Nulling", "=" * 60])
        if self.colors:
            banner = f"{Colors.CYAN}{Colors.BOLD}{banner}{Colors.END}"
        print(banner)
        print()

    def _validate_setup(self):
        """Validate configuration; raises ConfigError listing every problem."""
        self._say("Validating configuration...", Colors.BLUE)
        config_errors = self.config.validate_config()
        if config_errors:
            for error in config_errors:
                logger.error("Configuration: %s", error)
            raise ConfigError("; ".join(config_errors))
        self._say("✓ Configuration valid", Colors.GREEN)

    def _output_path(self, key: str, default: Optional[Path] = None) -> Optional[Path]:
        value = self.cli.outputs.get(key)
        if value is None and default is None:
            return None
        return self.platform_utils.resolve_output_path(value if value is not None else default)

    def _sampler(self) -> EpisodeSampler:
        self._say("Loading dataset...", Colors.BLUE)
        return EpisodeSampler(self.config.dataset_spec())

    def run(self) -> int:
        handler = getattr(self, f"run_{self.cli.command}")
        return handler()

    def run_train(self) -> int:
        self._validate_setup()
        if not self.quiet:
            self.config.print_config_summary()
            print()

        out_path = self._output_path('out')
        metrics_path = self._output_path('metrics', out_path.with_name(out_path.name + '.metrics.csv'))
        if self.cli.outputs.get('save_config'):
            self.config.save_config(str(self._output_path('save_config')))

        trainer = MetaTrainer(self.config.embedding_config(), self.config.head_config(),
                              self.config.train_config, self._sampler(), progress=not self.quiet)
        started = time.time()
        checkpoint = trainer.train_loop()
        save_checkpoint(checkpoint, out_path)
        write_metrics_csv(metrics_path, trainer.metrics)

        self._say(f"✓ Trained {checkpoint.episode} episodes in {time.time() - started:.1f}s", Colors.GREEN)
        self._say(f"  Checkpoint: {out_path}")
        self._say(f"  Metrics: {metrics_path}")
        for episode, mean_acc, ci95 in trainer.validation[-1:]:
            self._say(f"  Last validation (episode {episode}): {100 * mean_acc:.2f}% +- {100 * ci95:.2f}%")
        return 0

    def _load(self, path: str):
        checkpoint = load_checkpoint(path)
        expected = self.config.dataset_config.input_dim
        if checkpoint.embedding_config.input_dim != expected:
            raise ConfigError(f"checkpoint expects input dimension {checkpoint.embedding_config.input_dim}, "
                              f"dataset provides {expected}")
        if not self.quiet:
            for key, value in describe_checkpoint(checkpoint):
                print(f"  {key}: {value}")
        return checkpoint

    def run_eval(self) -> int:
        args_ckpt = self.cli.outputs['ckpt']
        checkpoint = self._load(args_ckpt)
        ev = self.config.eval_config
        sampler = self._sampler()
        evaluator = FewShotEvaluator(checkpoint, sampler, workers=self.config.eval_workers(),
                                     progress=not self.quiet)
        report = evaluator.evaluate(ev.way, ev.shots, ev.queries, ev.episodes, ev.seed, ev.split)

        report_path = self._output_path('report', Path(args_ckpt).with_name(Path(args_ckpt).name + '.eval.csv'))
        report.append_csv(report_path)
        per_episode = self._output_path('per_episode')
        if per_episode:
            report.write_per_episode(per_episode)

        self._say(f"✓ {report.summary()} ({report.seconds:.1f}s)", Colors.GREEN)
        print("way,shots,episodes,mean_acc,ci95")
        print(report.to_csv_row())
        if self.cli.outputs.get('baseline'):
            baseline = nearest_class_mean_accuracy(sampler, ev.split, ev.way, ev.shots, ev.queries,
                                                   ev.episodes, ev.seed)
            self._say(f"  Nearest-class-mean baseline: {baseline.summary()}", Colors.CYAN)
        self._say(f"  Report: {report_path}")
        return 0

    def run_inspect(self) -> int:
        checkpoint = self._load(self.cli.outputs['ckpt'])
        ev = self.config.eval_config
        episode = self._sampler().sample(ev.split, ev.way, ev.shots, 0, RngStream(ev.seed))
        diagnostics = inspect_projector(checkpoint, episode,
                                        relabel=not self.cli.outputs.get('no_relabel'))
        text = diagnostics.to_csv()
        out_path = self._output_path('out')
        if out_path:
            out_path.write_text(text, encoding='utf-8')
            self._say(f"✓ Diagnostics written to {out_path}", Colors.GREEN)
        else:
            sys.stdout.write(text)
        return 0


def setup_logging(config: ConfigManager, quiet: bool = False):
    """Setup logging configuration."""
    log_level = getattr(logging, config.logging_config.level.upper(), logging.INFO)

    # Create formatters
    detailed_formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    simple_formatter = logging.Formatter('%(levelname)s: %(message)s')

    # Setup root logger, replacing handlers from an earlier run in this process
    root = logging.getLogger()
    root.setLevel(log_level)
    for handler in [h for h in root.handlers if getattr(h, '_meta_nulling', False)]:
        root.removeHandler(handler)
        handler.close()

    # File handler
    if config.logging_config.file:
        try:
            log_path = Path(config.logging_config.file)
            log_path.parent.mkdir(parents=True, exist_ok=True)

            file_handler = logging.handlers.RotatingFileHandler(
                log_path,
                maxBytes=config.logging_config.max_size,
                backupCount=config.logging_config.backup_count,
                encoding='utf-8'
            )
            file_handler.setFormatter(detailed_formatter)
            file_handler._meta_nulling = True
            root.addHandler(file_handler)
        except OSError as e:
            print(f"Warning: Failed to setup file logging: {e}", file=sys.stderr)

    # Console handler
    if config.logging_config.console_output and not quiet:
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(simple_formatter)
        console_handler._meta_nulling = True
        root.addHandler(console_handler)


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('-c', '--config', type=str,
                        help='Configuration file path')
    common.add_argument('-p', '--preset', type=str,
                        help='Named preset from config/presets.json')
    common.add_argument('--set', dest='overrides', action='append', metavar='SECTION.key=value',
                        help='Override one configuration value (repeatable)')
    common.add_argument('--seed', type=int,
                        help='Random seed (MLN_SEED still takes precedence)')
    common.add_argument('-v', '--verbose', action='store_true',
                        help='Verbose output')
    common.add_argument('-q', '--quiet', action='store_true',
                        help='Quiet mode (no console logging or progress bars)')
    return common


def create_argument_parser() -> argparse.ArgumentParser:
    """Create command line argument parser."""
    parser = argparse.ArgumentParser(
        prog='meta_nulling',
        description="MetaNulling - few-shot meta-learning with linear nulling",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python meta_nulling.py train --preset desk-synthetic --out runs/desk.ckpt
  python meta_nulling.py train -c config/config.ini --out runs/model.ckpt --episodes 500
  python meta_nulling.py eval --ckpt runs/desk.ckpt --way 5 --shots 1 --episodes 1000
  python meta_nulling.py eval --ckpt runs/desk.ckpt --workers auto --baseline
  python meta_nulling.py inspect --ckpt runs/desk.ckpt --way 5 --out diag.csv
  python meta_nulling.py train --set TRAIN.way=10 --set MODEL.widths=64,32 --out m.ckpt

Dataset sources: gaussian-synthetic, image-directory, flat-binary
Logit modes: projected-euclidean, projected-inner-product
Gradient modes: stop-gradient-projector, differentiate-projector
        """)

    # Information options
    parser.add_argument('--system-info', action='store_true',
                        help='Show system information and exit')
    parser.add_argument('--list-presets', action='store_true',
                        help='List configuration presets and exit')

    common = _common_options()
    sub = parser.add_subparsers(dest='command', metavar='{train,eval,inspect}')

    train = sub.add_parser('train', parents=[common], help='Meta-train a model')
    train.add_argument('-o', '--out', type=str, required=True,
                       help='Checkpoint output path')
    train.add_argument('--metrics', type=str,
                       help='Metrics CSV path (default: <out>.metrics.csv)')
    train.add_argument('-e', '--episodes', type=int,
                       help='Number of training episodes')
    train.add_argument('--save-config', type=str,
                       help='Write the effective configuration to this INI file')

    evaluate = sub.add_parser('eval', parents=[common], help='Evaluate a checkpoint')
    evaluate.add_argument('--ckpt', type=str, required=True, help='Checkpoint path')
    evaluate.add_argument('--way', type=int, help='Classes per episode')
    evaluate.add_argument('--shots', type=int, help='Support examples per class')
    evaluate.add_argument('--queries', type=int, help='Query examples per class')
    evaluate.add_argument('-e', '--episodes', type=int, help='Number of test episodes')
    evaluate.add_argument('-w', '--workers', type=str,
                          help="Parallel episode workers, or 'auto'")
    evaluate.add_argument('--split', choices=['train', 'val', 'test'], help='Class split to sample')
    evaluate.add_argument('--report', type=str,
                          help='Report CSV to append to (default: <ckpt>.eval.csv)')
    evaluate.add_argument('--per-episode', type=str,
                          help='Write per-episode accuracies to this CSV')
    evaluate.add_argument('--baseline', action='store_true',
                          help='Also report the nearest-class-mean baseline')

    inspect = sub.add_parser('inspect', parents=[common], help='Dump projector diagnostics')
    inspect.add_argument('--ckpt', type=str, required=True, help='Checkpoint path')
    inspect.add_argument('--way', type=int, help='Classes in the inspected episode')
    inspect.add_argument('--shots', type=int, help='Support examples per class')
    inspect.add_argument('--split', choices=['train', 'val', 'test'], help='Class split to sample')
    inspect.add_argument('--no-relabel', action='store_true',
                         help='Bind slot k to reference row k instead of nearest-reference relabeling')
    inspect.add_argument('-o', '--out', type=str, help='Diagnostics CSV path (default: stdout)')

    return parser


def _print_presets():
    presets = ConfigManager.load_presets()
    print("Available presets:")
    for name, preset in sorted(presets.items()):
        print(f"  - {name}: {preset.get('description', '')}")


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, dispatch, and return the process exit code."""
    parser = create_argument_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    if args.system_info:
        PlatformUtils().print_system_info()
        return 0
    if args.list_presets:
        _print_presets()
        return 0
    if args.command not in COMMANDS:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: a subcommand is required ({', '.join(COMMANDS)})", file=sys.stderr)
        return 2

    try:
        cli = CliConfig.from_args(args)
        cli.outputs.update({key: getattr(args, key) for key in ('ckpt', 'baseline', 'no_relabel')
                            if getattr(args, key, None)})

        # Create configuration manager
        config_manager = ConfigManager(config_file=args.config, preset=args.preset)
        config_manager.update_from_args(args)
        if getattr(args, 'split', None):
            config_manager.eval_config.split = args.split

        setup_logging(config_manager, quiet=args.quiet)
        runner = MetaNullingRunner(config_manager, cli, quiet=args.quiet)
        runner._print_header()
        return runner.run()

    except KeyboardInterrupt:
        print(f"\n{Colors.YELLOW}Process interrupted by user{Colors.END}", file=sys.stderr)
        return 130
    except (MLNError, OSError, ValueError) as e:
        logger.debug("Command failed", exc_info=True)
        message = ' '.join(str(e).split())
        print(f"error: {type(e).__name__}: {message}", file=sys.stderr)
        return 1


def main():
    """Main entry point."""
    return run_cli(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
