"""
Evaluate a checkpoint and write a metrics CSV.

One row per head: `duration` and `cost` over all activities, `makespan` and `total_cost` per
project. Calibration columns (ece, pi90, width) are empty where too few samples are available.
"""
import pandas as pd

from rbpredict.baselines import load_model
from rbpredict.cli_util import add_data, add_jobs, add_out, splits, write_manifest, SPLITS
from rbpredict.ingest import PreprocessStats, apply_preprocess
from rbpredict.train import evaluate, evaluation_rows


def register(parser):
    parser.add_argument('--checkpoint', required=True, help='Checkpoint written by "train".')
    add_data(parser)
    parser.add_argument(
        '--split',
        choices=SPLITS + ('all',),
        default='test',
        help='Evaluate on this split of the dataset (as used in training) or on all instances.')
    add_jobs(parser)
    add_out(parser, help='Metrics CSV.')


def run(args):
    model, doc = load_model(args.checkpoint)
    stats = PreprocessStats.from_dict(doc['preprocess']) if doc.get('preprocess') else None
    instances = list(args.data)
    if args.split != 'all':
        instances = splits(instances, (doc.get('meta') or {}).get('split_seed', 13))[args.split]
    if stats is not None:
        instances = [apply_preprocess(stats, i) for i in instances]
    rows = evaluation_rows(
        evaluate(model, instances, stats, jobs=args.jobs),
        model=doc['model'],
        dataset=args.data.name,
        split=args.split,
        seed=doc.get('seed'))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(args.out, index=False)
    write_manifest(args, args.out.parent)
    for row in rows:
        args.log.info('{head}: MAE {mae:.4f} RMSE {rmse:.4f}'.format(**row))
