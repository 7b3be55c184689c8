#!/usr/bin/env python3
"""
CLI entry point for the material reconstruction pipeline

Usage:
    python run_pipeline.py render --config sample_scene/config.yaml --output frames/
    python run_pipeline.py reconstruct --config sample_scene/config.yaml --output recon/
"""

import argparse
import sys
from pathlib import Path

#load environment from .env file
from dotenv import load_dotenv
load_dotenv()

from pbr_recon import console
from pbr_recon.errors import EXIT_OK, ConfigError, PipelineError
from pbr_recon.pipeline import COMMANDS
from pbr_recon.tools.config_loader import load_config, resolve_runtime, write_resolved_config


def parse_args(argv=None):
    """parse command line arguments"""
    parser = argparse.ArgumentParser(
        description='PBR material reconstruction - differentiable path tracing from multi-view frames',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
examples:
  # render the oracle orbit with self-rendered intrinsic guides
  python run_pipeline.py render --config sample_scene/config.yaml --intrinsics

  # fit a material field and bake textures
  python run_pipeline.py reconstruct --config sample_scene/config.yaml --output recon/

  # score relit renders under held-out probes
  python run_pipeline.py relight --config sample_scene/config.yaml

exit codes:
  0 ok, 2 configuration error, 3 input/output error, 4 optimization diverged
        """
    )

    parser.add_argument(
        'command',
        choices=sorted(COMMANDS),
        help='pipeline stage to run'
    )

    parser.add_argument(
        '--config',
        type=str,
        required=True,
        help='path to the YAML configuration'
    )

    parser.add_argument(
        '--output',
        type=str,
        help='output directory (default: paths.output from the config, or PBR_OUTPUT)'
    )

    parser.add_argument(
        '--workers',
        type=int,
        help='tile worker threads (default: PBR_WORKERS, then render.workers)'
    )

    parser.add_argument(
        '--seed',
        type=int,
        help='override the render / batch seed'
    )

    parser.add_argument(
        '--quiet',
        action='store_true',
        help='silence status output (errors are still printed)'
    )

    parser.add_argument(
        '--intrinsics',
        action='store_true',
        help='render: also write base color / roughness / metallic guides'
    )

    parser.add_argument(
        '--augment',
        action='store_true',
        help='render: write a randomly reversed and offset frame order'
    )

    return parser.parse_args(argv)


def run(args) -> int:
    """run one subcommand; returns the process exit code"""
    console.reset()
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        config = load_config(Path(args.config))
        workers, out_dir, env = resolve_runtime(config, args.workers, args.output)
        console.set_quiet(args.quiet or env.quiet)
        write_resolved_config(config, out_dir)

        extra = {}
        if args.command == 'render':
            extra = {'intrinsics': args.intrinsics, 'augment': args.augment, 'seed': args.seed}
        elif args.command == 'reconstruct':
            extra = {'seed': args.seed}
        elif args.seed is not None:
            config.render.seed = args.seed
        COMMANDS[args.command](config, out_dir, workers, **extra)
    except PipelineError as e:
        console.fail(e.message)
        return e.exit_code

    console.summary()
    console.ok(f"{args.command} complete")
    return EXIT_OK


def main():
    """main entry point"""
    args = parse_args()
    sys.exit(run(args))


if __name__ == '__main__':
    main()
