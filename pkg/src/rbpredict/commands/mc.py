"""
Monte Carlo simulation of project makespan and cost under uncertain resource efficiencies.

Work specs reproduce the estimates of the instance at unit efficiency; efficiencies are
lognormal with the resource features' `mu_hat` and `sigma2_hat`. Activities without resource
work keep their estimates. Writes the summary as JSON.
"""
from rbpredict.cli_util import add_data, add_seed, add_jobs, add_out, write_manifest, ParserError
from rbpredict.rbm import (
    specs_from_instance, distributions_from_instance, fixed_from_instance, monte_carlo_project,
)
from rbpredict.util import dump_json


def register(parser):
    add_data(parser, help='A single canonical JSON instance.')
    parser.add_argument('--samples', type=int, default=10000, help='Number of samples.')
    add_seed(parser)
    add_jobs(parser)
    add_out(parser, help='Summary JSON.')


def run(args):
    if len(args.data) != 1:
        raise ParserError('--data must be a single instance')
    inst = args.data[0]
    specs = specs_from_instance(inst)
    summary = monte_carlo_project(
        inst.graph,
        specs,
        distributions_from_instance(inst, specs),
        args.samples,
        args.seed,
        overhead=inst.overhead,
        jobs=args.jobs,
        fixed=fixed_from_instance(inst, specs),
        log=args.log)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    dump_json(dict(instance=inst.name, **summary.to_dict()), args.out)
    write_manifest(args, args.out.parent)
    args.log.info('makespan {:.3f} +- {:.3f}'.format(
        summary.makespan_mean, summary.makespan_var ** 0.5))
