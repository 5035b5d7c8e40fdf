"""
Run the active learning experiment and write the learning curve CSV.

Columns: strategy, seed, budget_pct, rmse (of duration predictions on the unlabeled activities).
The train split is the pool whose labels are revealed round by round; the val split is used for
early stopping.
"""
import dataclasses

from rbpredict.cli_util import (
    add_data, add_config, add_seed, add_seeds, add_jobs, add_out, splits, write_manifest,
    fit_stats,
)
from rbpredict.experiments.active import STRATEGIES, run_active_loop
from rbpredict.ingest import apply_preprocess


def register(parser):
    parser.add_argument(
        '--strategy', choices=STRATEGIES, default=None,
        help='Selection strategy; defaults to the active config.')
    add_data(parser)
    add_config(parser)
    add_seed(parser)
    add_seeds(parser)
    add_jobs(parser)
    add_out(parser, help='Learning curve CSV.')


def run(args):
    cfg = args.config
    active = dataclasses.replace(cfg.active, strategy=args.strategy or cfg.active.strategy)
    parts = splits(args.data, args.seed)
    stats = fit_stats(parts['train'], cfg, log=args.log)
    pool, val = [[apply_preprocess(stats, i) for i in parts[s]] for s in ['train', 'val']]
    curve = run_active_loop(
        pool, val, cfg.model, cfg.train, active,
        seeds=args.seeds, stats=stats, jobs=args.jobs, log=args.log)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    curve.to_csv(args.out, index=False)
    write_manifest(args, args.out.parent)
