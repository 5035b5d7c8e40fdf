"""
Run the rolling execution experiment and write the curve CSV.

Columns: variant, seed, completion_pct, rmse (of duration predictions on the remaining
activities). Models are trained on the train split; the test split holds the in-flight projects.
"""
import dataclasses

from rbpredict.cli_util import (
    add_data, add_config, add_seed, add_seeds, add_jobs, add_out, splits, write_manifest,
    fit_stats,
)
from rbpredict.experiments.temporal import VARIANTS, run_temporal


def register(parser):
    parser.add_argument(
        '--variant', choices=VARIANTS, default=None,
        help='Pipeline variant; defaults to the temporal config.')
    add_data(parser)
    add_config(parser)
    add_seed(parser)
    add_seeds(parser)
    add_jobs(parser)
    add_out(parser, help='Curve CSV.')


def run(args):
    cfg = args.config
    temporal = dataclasses.replace(cfg.temporal, variant=args.variant or cfg.temporal.variant)
    parts = splits(args.data, args.seed)
    stats = fit_stats(parts['train'], cfg, log=args.log)
    curve = run_temporal(
        parts['train'], parts['val'], parts['test'], cfg.model, cfg.train, temporal,
        seeds=args.seeds, stats=stats, jobs=args.jobs, log=args.log)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    curve.to_csv(args.out, index=False)
    write_manifest(args, args.out.parent)
