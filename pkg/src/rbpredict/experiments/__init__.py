"""
Experiment drivers are callables accepting datasets and typed configs, running a protocol over a
list of seeds and returning the resulting curve as :class:`pandas.DataFrame`, one row per seed and
step, ready to be written as CSV.
"""
