"""Branching processes in random environments with Cauchy-type step laws.

Modules
-------
heavy_tail
    Step laws with tails ``L(x)/x``, scaling sequences, exact sampling.
environment
    Offspring families driven by the associated walk.
fluctuation
    Ladder structure, renewal functions, Spitzer series and ``Lambda``.
conditioned
    The walk conditioned to stay nonnegative.
bpre
    Quenched and annealed survival, the lower bound and ratio experiments.
"""
__version__ = "0.1.0"
