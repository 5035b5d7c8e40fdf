"""
Get help on subcommands.

Without argument, lists the subcommands with a one-line summary each.
"""


def register(parser):
    parser.add_argument('command', nargs='?', default=None)


def run(args):
    from rbpredict.__main__ import main, iter_commands

    if args.command:
        return main([args.command, '-h'])
    for name, mod in iter_commands():
        print('{:<14} {}'.format(name, mod.__doc__.strip().splitlines()[0]))
    print('\nRun "rbpredict help COMMAND" to get help on subcommand COMMAND')
