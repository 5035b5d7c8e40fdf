"""
Convert PSPLIB single-mode `.sm` instances to canonical JSON.

`--in` may be a single file, written to the file `--out`, or a directory, whose `*.sm` files are
written to the directory `--out`. Instances outside the size range (counted without the two dummy
jobs) are skipped.
"""
import pathlib

from rbpredict.cli_util import add_out, write_manifest
from rbpredict.ingest import write_instance
from rbpredict.ingest.psplib import read_psplib, in_size_range


def register(parser):
    parser.add_argument(
        '--in', dest='in_', metavar='PATH', type=pathlib.Path, required=True,
        help='PSPLIB .sm file or directory of .sm files.')
    add_out(parser, help='Output file (or directory, if --in is a directory).')
    parser.add_argument('--min-activities', type=int, default=10)
    parser.add_argument('--max-activities', type=int, default=150)


def run(args):
    if args.in_.is_dir():
        inputs, out_dir = sorted(args.in_.glob('*.sm')), args.out
    else:
        inputs, out_dir = [args.in_], args.out.parent
    written = 0
    for p in inputs:
        inst = read_psplib(p, log=args.log)
        if not in_size_range(inst, args.min_activities, args.max_activities):
            args.log.info('{}: {} jobs outside the size range, skipped'.format(
                p.name, inst.n_activities - 2))
            continue
        target = args.out / '{}.json'.format(inst.name) if args.in_.is_dir() else args.out
        target.parent.mkdir(parents=True, exist_ok=True)
        write_instance(inst, target)
        written += 1
    write_manifest(args, out_dir, written=written)
    args.log.info('{} of {} instances written'.format(written, len(inputs)))
