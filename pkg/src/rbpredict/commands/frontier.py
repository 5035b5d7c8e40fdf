"""
Solve the time-cost tradeoff of a project: the cheapest activity durations meeting a deadline.

Crash parameters come from the `crash_a`, `crash_b` attributes of the instance if present,
otherwise from its estimates. The JSON result lists the durations, the resulting makespan and
cost and, for comparison, the cost of shrinking all late paths by a common factor. With
`--points K`, the frontier between the minimal and the normal makespan is added.
"""
import numpy as np

from rbpredict.cli_util import add_data, add_out, write_manifest, ParserError
from rbpredict.graph import compute_schedule
from rbpredict.rbm import (
    crash_params_from_instance, solve_cost_frontier, uniform_scaling_durations, frontier_cost,
    frontier_curve,
)
from rbpredict.util import dump_json


def register(parser):
    add_data(parser, help='A single canonical JSON instance.')
    parser.add_argument('--tmax', type=float, required=True, help='Deadline.')
    parser.add_argument(
        '--points', type=int, default=0, help='Number of points of the frontier curve.')
    add_out(parser, help='Result JSON.')


def run(args):
    if len(args.data) != 1:
        raise ParserError('--data must be a single instance')
    inst = args.data[0]
    graph, crash = inst.graph, crash_params_from_instance(inst)
    durations = solve_cost_frontier(graph, crash, args.tmax, log=args.log)
    res = dict(
        instance=inst.name,
        t_max=args.tmax,
        makespan=compute_schedule(graph, durations).makespan,
        cost=frontier_cost(graph, crash, durations),
        uniform_scaling_cost=frontier_cost(
            graph, crash, uniform_scaling_durations(graph, crash, args.tmax)),
        durations=durations,
    )
    if args.points > 0:
        lo = compute_schedule(graph, {a: c.min_duration for a, c in crash.items()}).makespan
        hi = compute_schedule(graph, {a: c.normal_duration for a, c in crash.items()}).makespan
        curve = frontier_curve(graph, crash, np.linspace(lo, hi, args.points), log=args.log)
        res['frontier'] = [dict(t_max=t, cost=c) for t, c in curve]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    dump_json(res, args.out)
    write_manifest(args, args.out.parent)
    args.log.info('cost {:.4f} at makespan {:.4f}'.format(res['cost'], res['makespan']))
