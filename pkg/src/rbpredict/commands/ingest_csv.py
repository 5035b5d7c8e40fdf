"""
Build surrogate project graphs from tabular effort data, one project per row.

Strategies: `chain4` (four equal phases), `phase6` (six phases with typical effort shares) and
`module` (module dependencies from the `modules` column, formatted `name:weight:dep|dep;...`).
"""
import pathlib

from rbpredict.cli_util import add_out, write_manifest
from rbpredict.ingest import write_dataset
from rbpredict.ingest.tabular import STRATEGIES, read_table, build_surrogate_graph


def register(parser):
    parser.add_argument(
        '--in', dest='in_', metavar='FILE', type=pathlib.Path, required=True,
        help='CSV file with an effort column.')
    parser.add_argument('--strategy', choices=STRATEGIES, default='phase6')
    parser.add_argument('--effort-column', default='effort')
    parser.add_argument('--modules-column', default='modules')
    parser.add_argument('--kloc-column', default='kloc')
    add_out(parser, help='Output directory.')


def run(args):
    instances = build_surrogate_graph(
        read_table(args.in_),
        strategy=args.strategy,
        effort_column=args.effort_column,
        modules_column=args.modules_column,
        kloc_column=args.kloc_column,
        name=args.in_.stem,
        log=args.log)
    write_dataset(instances, args.out)
    write_manifest(args, args.out)
    args.log.info('{} surrogate projects written to {}'.format(len(instances), args.out))
