"""
Train a model and write its checkpoint and training history.

Models: `graphsage` (the relation-typed graph model), `tgn` (its temporal variant), `mlp` (the
same heads without message passing) and `ridge` (closed-form ridge regression per head, with the
penalty selected on the validation split).

Writes `checkpoint.json`, `history.csv` (not for ridge) and `manifest.json` to the output
directory.
"""
import dataclasses

from rbpredict.baselines import select_ridge, save_ridge_checkpoint
from rbpredict.cli_util import (
    add_data, add_config, add_seed, add_out, splits, write_manifest, fit_stats,
)
from rbpredict.gnn import save_checkpoint
from rbpredict.ingest import apply_preprocess
from rbpredict.train import train_model

MODELS = ('graphsage', 'tgn', 'mlp', 'ridge')


def register(parser):
    parser.add_argument('--model', choices=MODELS, default='graphsage')
    add_data(parser)
    add_config(parser)
    add_seed(parser)
    add_out(parser, help='Output directory.')


def model_config(name, config):
    if name == 'mlp':
        return dataclasses.replace(config, layers=0, head_hidden=(256, 128), temporal=False)
    return dataclasses.replace(config, temporal=name == 'tgn')


def run(args):
    parts = splits(args.data, args.seed)
    stats = fit_stats(parts['train'], args.config, log=args.log)
    train, val = [[apply_preprocess(stats, i) for i in parts[s]] for s in ['train', 'val']]
    args.out.mkdir(parents=True, exist_ok=True)
    checkpoint = args.out / 'checkpoint.json'
    if args.model == 'ridge':
        model = select_ridge(train, val, stats, log=args.log)
        save_ridge_checkpoint(model, checkpoint, preprocess=stats, seed=args.seed,
                              split_seed=args.seed)
        args.log.info('ridge lam={}'.format(model.lam))
    else:
        params, history = train_model(
            train, val, model_config(args.model, args.config.model), args.config.train,
            seed=args.seed, stats=stats, log=args.log)
        save_checkpoint(params, checkpoint, model=args.model, preprocess=stats,
                        split_seed=args.seed, best_epoch=history.best_epoch)
        history.to_csv(args.out / 'history.csv')
        args.log.info('best epoch {} of {}'.format(history.best_epoch, len(history)))
    write_manifest(args, args.out)
