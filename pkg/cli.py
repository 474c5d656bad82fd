"""
Command-line interface for the rough path recursion laboratory
Runs scenario configs, lists presets and inspects increment streams
"""
import argparse
import sys
from pathlib import Path
import time

sys.path.insert(0, str(Path(__file__).parent))

from config.config import OUTPUTS_DIR, RDE_SETTINGS
from src.exceptions import RoughSimError
from src.experiment_config import load_config
from src.file_exporter import FileExporter, read_stream_csv
from src.logger import setup_logger
from src.rough_step import build, discrete_holder_norm
from src.scenarios import REFERENCE_PATH_ID, ExperimentRunner, lift_fidelity_metrics
from src.seeding import SeedLineage

logger = setup_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTED = 2


def run_command(args) -> int:
    """Run one scenario config"""

    print(f"\n{'='*60}")
    print(f"Running: {Path(args.config).name}")
    print(f"{'='*60}")

    start_time = time.time()
    try:
        config = load_config(args.config)
    except (RoughSimError, OSError) as e:
        print(f"❌ Invalid config: {str(e)}")
        return EXIT_ERROR

    result = ExperimentRunner().run(config)
    if not result['success']:
        print(f"❌ Scenario failed: {result['errors']}")
        return EXIT_ERROR

    print(f"\n📋 Checks for '{config.scenario}':")
    for name, passed in result['checks'].items():
        print(f"   {'✅' if passed else '❌'} {name}")
    for warning in result['warnings']:
        print(f"⚠️  {warning}")

    print(f"\n💾 Report: {result['report_path']}")
    for kind, path in result['artifacts'].items():
        print(f"   - {kind}: {Path(path).name}")

    elapsed_time = time.time() - start_time
    print(f"\n✨ Finished in {elapsed_time:.1f} seconds")
    return EXIT_OK if result['accepted'] else EXIT_REJECTED


def scenarios_command(args) -> int:
    """Print the scenario registry"""
    rows = ExperimentRunner().list_scenarios()
    width = max(len(r['key']) for r in rows)
    print(f"\n{'SCENARIO':<{width}}  {'STATUS':<8} DESCRIPTION")
    for row in rows:
        print(f"{row['key']:<{width}}  {row['status']:<8} {row['description']}")
        print(f"{'':<{width}}  {'':<8} reproduces: {row['reproduces']}")
    return EXIT_OK


def lift_check_command(args) -> int:
    """Lift a stream CSV and report mesh agreement, Chen violation and the Hoelder ratio"""
    try:
        partition, stream = read_stream_csv(args.stream)
        rsf = build(partition, stream, args.convention)
        rng = SeedLineage(args.seed, REFERENCE_PATH_ID).generator()
        lrp, metrics = lift_fidelity_metrics(rsf, args.gamma, args.sub_levels, args.triples, rng)
    except (RoughSimError, OSError) as e:
        print(f"❌ Error: {str(e)}")
        return EXIT_ERROR

    print(f"\n🔗 Lift of {partition.count} cells (d={rsf.dim})")
    print(f"   Mesh agreement error: {metrics['mesh_error']:.3e}")
    print(f"   Chen violation ({args.triples} triples): {metrics['chen_error']:.3e}")
    print(f"   Hoelder ratio (gamma={args.gamma}): {metrics['holder_ratio']:.4f}")
    print(f"   Realization length: {metrics['realization_length']:.6g} (surrogate {metrics['cc_surrogate']:.6g})")

    if args.polyline:
        times, values = lrp.polyline_samples(args.per_cell)
        path = FileExporter().export_polyline_csv(times, values, args.polyline)
        print(f"\n💾 Polyline: {path}")
    return EXIT_OK


def holder_command(args) -> int:
    """Discrete Hoelder norm of a stream CSV"""
    try:
        partition, stream = read_stream_csv(args.stream)
        rsf = build(partition, stream, args.convention)
        value = discrete_holder_norm(rsf, args.gamma, args.stride)
    except (RoughSimError, OSError) as e:
        print(f"❌ Error: {str(e)}")
        return EXIT_ERROR

    bound = " (lower bound)" if args.stride > 1 else ""
    print(f"📏 Discrete {args.gamma}-Hoelder norm over {partition.count} cells: {value:.6g}{bound}")
    return EXIT_OK


def estimate_nu_command(args) -> int:
    """Monte Carlo nu_hat for the noise of a config"""
    try:
        config = load_config(args.config)
    except (RoughSimError, OSError) as e:
        print(f"❌ Invalid config: {str(e)}")
        return EXIT_ERROR

    result = ExperimentRunner().estimate_nu(config)
    if not result['success']:
        print(f"❌ Estimation failed: {result['errors']}")
        return EXIT_ERROR

    payload = result['payload']
    estimate = payload['estimate']
    print(f"\n📊 {estimate['paths']} paths, n={payload['n']}, T={estimate['T']}")
    print(f"   nu_hat  = {estimate['nu_hat']}")
    print(f"   stderr  = {estimate['nu_stderr']}")
    print(f"   D_hat   = {estimate['D_hat']}")
    if 'limit' in payload:
        print(f"   nu      = {payload['limit']['nu']} ({payload['limit']['derivation']})")
        print(f"   z-score = {payload['nu_zscores']}")
    for warning in result['warnings']:
        print(f"⚠️  {warning}")
    print(f"\n💾 Report: {result['report_path']}")
    return EXIT_OK


def main(argv=None) -> int:
    """Main CLI function"""

    parser = argparse.ArgumentParser(
        description="Rough path recursion laboratory - Command Line Interface",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
Examples:
  # Run a scenario preset
  python cli.py run scenarios/lemma31_random_walk.json

  # List scenarios with the status of their last run
  python cli.py scenarios

  # Inspect an exported increment stream
  python cli.py lift-check stream.csv --polyline polyline.csv
  python cli.py holder stream.csv --gamma 0.45 --stride 4

  # Estimate the area correction of a noise model
  python cli.py estimate-nu scenarios/fastslow_markov.json

Exit codes: 0 success, 2 acceptance check failed, 1 error.
Outputs go to {OUTPUTS_DIR} unless the config names a directory.
        """
    )
    sub = parser.add_subparsers(dest='command', required=True)

    p_run = sub.add_parser('run', help='Run a scenario config')
    p_run.add_argument('config', help='Experiment config (JSON)')
    p_run.set_defaults(func=run_command)

    p_list = sub.add_parser('scenarios', help='List scenario presets')
    p_list.set_defaults(func=scenarios_command)

    for name, func, helptext in (
        ('lift-check', lift_check_command, 'Lift an increment stream CSV and check it'),
        ('holder', holder_command, 'Discrete Hoelder norm of an increment stream CSV'),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument('stream', help='Increment stream CSV (t_start, t_end, xi_*, Xi_*)')
        p.add_argument(
            '--gamma',
            type=float,
            default=RDE_SETTINGS['gamma'],
            required=name == 'holder',
            help='Hoelder exponent'
        )
        p.add_argument(
            '--convention',
            choices=['earlier_later', 'later_earlier'],
            default='earlier_later',
            help='Iterated-sum ordering of the stream (default: earlier_later)'
        )
        p.set_defaults(func=func)
        if name == 'holder':
            p.add_argument('--stride', type=int, default=1, help='Mesh stride; > 1 gives a lower bound')
        else:
            p.add_argument('--triples', type=int, default=1000, help='Random triples for the Chen check')
            p.add_argument('--sub-levels', type=int, default=2, help='Extra dyadic levels inside each cell')
            p.add_argument('--seed', type=int, default=0, help='Seed for the random triples')
            p.add_argument('--polyline', help='Write the level-1 polyline to this CSV')
            p.add_argument('--per-cell', type=int, default=8, help='Polyline samples per cell')

    p_nu = sub.add_parser('estimate-nu', help='Estimate nu for the noise of a config')
    p_nu.add_argument('config', help='Experiment config (JSON)')
    p_nu.set_defaults(func=estimate_nu_command)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n\n❌ Cancelled by user")
        sys.exit(EXIT_ERROR)
    except Exception as e:
        print(f"\n\n❌ Unexpected error: {str(e)}")
        logger.error("CLI error", exc_info=True)
        sys.exit(EXIT_ERROR)
