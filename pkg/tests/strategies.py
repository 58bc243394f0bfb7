"""Random predicate ASTs and maneuvers for property tests.

Constants are placed so every comparison sits at least ``margin`` away from
a tie, which keeps the indicator sign meaningful under strict semantics.
"""
import numpy as np

from maneuvergen.coverage import Aggregate, And, Compare, Const, Not, Or
from maneuvergen.synth import SIGNAL_NAMES


def random_aggregate(rng, T):
    start = int(rng.integers(0, T - 1))
    stop = int(rng.integers(start + 1, T + 1))
    return Aggregate(str(rng.choice(["mean", "max", "min"])), str(rng.choice(SIGNAL_NAMES)), start, stop)


def random_ast(rng, T, depth=0, max_depth=4):
    r = rng.random()
    if depth >= max_depth or r < 0.35:
        left = random_aggregate(rng, T) if rng.random() < 0.8 else Const(float(rng.random()))
        right = random_aggregate(rng, T) if rng.random() < 0.4 else Const(float(rng.random()))
        if isinstance(left, Const) and isinstance(right, Const):
            right = random_aggregate(rng, T)
        return Compare(str(rng.choice(["<", ">"])), left, right)
    if r < 0.6:
        return And(random_ast(rng, T, depth + 1, max_depth), random_ast(rng, T, depth + 1, max_depth))
    if r < 0.85:
        return Or(random_ast(rng, T, depth + 1, max_depth), random_ast(rng, T, depth + 1, max_depth))
    return Not(random_ast(rng, T, depth + 1, max_depth))


def comparisons(node):
    if isinstance(node, Compare):
        yield node
    elif isinstance(node, (And, Or)):
        yield from comparisons(node.left)
        yield from comparisons(node.right)
    elif isinstance(node, Not):
        yield from comparisons(node.child)


def aggregate_value(node, x):
    if isinstance(node, Const):
        return node.value
    seg = x[SIGNAL_NAMES.index(node.channel), node.start:node.stop].astype(float)
    return {"mean": np.mean, "max": np.max, "min": np.min}[node.op](seg)


def min_gap(ast, x):
    """Smallest |left - right| over all comparisons of ``ast`` on ``x``."""
    return min(abs(aggregate_value(c.left, x) - aggregate_value(c.right, x)) for c in comparisons(ast))


def random_maneuver(rng, T):
    kind = rng.integers(3)
    if kind == 0:
        return rng.random((3, T))
    if kind == 1:
        return np.clip(np.cumsum(rng.normal(0, 0.05, (3, T)), axis=1) + rng.random((3, 1)), 0, 1)
    return np.repeat(rng.random((3, 1)), T, axis=1)
