"""Test-side oracles: a standalone term interpreter and the synthetic
soft-constraint scenario whose threshold optimum is known by brute force.

The interpreter is deliberately independent of the emission path; it walks
the term tree with exact rationals so predicate tests cannot be fooled by a
broken emitter.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

from relufix import smtio
from relufix.datagen import LabeledPoint
from relufix.encoder import SoftConstraintSet, heuristic_samples
from relufix.network import Network, make_network


def eval_term(t, env):
    """Evaluate a term under name -> Fraction|bool bindings."""
    if isinstance(t, smtio.RealConst):
        return t.value
    if isinstance(t, smtio.BoolConst):
        return t.value
    if isinstance(t, smtio.Var):
        return env[t.name]
    if isinstance(t, smtio.Add):
        return sum((eval_term(a, env) for a in t.args), Fraction(0))
    if isinstance(t, smtio.Sub):
        return eval_term(t.left, env) - eval_term(t.right, env)
    if isinstance(t, smtio.Neg):
        return -eval_term(t.arg, env)
    if isinstance(t, smtio.Mul):
        return eval_term(t.left, env) * eval_term(t.right, env)
    if isinstance(t, smtio.Ite):
        return eval_term(t.then if eval_term(t.cond, env) else t.els, env)
    if isinstance(t, smtio.Cmp):
        a, b = eval_term(t.left, env), eval_term(t.right, env)
        return {">": a > b, ">=": a >= b, "=": a == b, "<": a < b, "<=": a <= b}[t.op]
    if isinstance(t, smtio.And):
        return all(eval_term(a, env) for a in t.args)
    if isinstance(t, smtio.Or):
        return any(eval_term(a, env) for a in t.args)
    if isinstance(t, smtio.Not):
        return not eval_term(t.arg, env)
    if isinstance(t, smtio.Implies):
        return (not eval_term(t.left, env)) or eval_term(t.right, env)
    if isinstance(t, smtio.Let):
        inner = dict(env)
        for name, value in t.bindings:
            inner[name] = eval_term(value, env)
        return eval_term(t.body, inner)
    if isinstance(t, smtio.AtLeastK):
        return sum(bool(eval_term(a, env)) for a in t.args) >= t.k
    raise TypeError(f"cannot evaluate {t!r}")


def interval_net() -> Network:
    """2-1-2 net where freeing bias21 turns each sample constraint into a
    one-sided bound on bias21: out1 - out2 = relu(x1 + x2) + bias21."""
    return make_network([([[1.0, 1.0]], [0.0]), ([[1.0], [0.0]], [0.0, 0.0])])


def interval_soft_set(bounds_and_labels) -> SoftConstraintSet:
    """Constraints at points (b - 1, 1), so relu(x1+x2) = b; label 0 demands
    bias21 > -b, label 1 demands bias21 < -b."""
    data = [LabeledPoint((float(b - 1), 1.0), label) for b, label in bounds_and_labels]
    return heuristic_samples(data, len(data), seed=0)


def brute_force_optimum(bounds_and_labels) -> int:
    """Exhaustive subset enumeration: the largest jointly satisfiable count.

    A subset is satisfiable iff some rational bias21 meets every bound:
    strictly above all lower bounds (label 0: bias21 > -b) and strictly
    below all upper bounds (label 1: bias21 < -b)."""
    n = len(bounds_and_labels)
    best = 0
    for mask in itertools.product((False, True), repeat=n):
        chosen = [bl for bl, take in zip(bounds_and_labels, mask) if take]
        if len(chosen) <= best:
            continue
        lowers = [Fraction(-b) for b, lab in chosen if lab == 0]
        uppers = [Fraction(-b) for b, lab in chosen if lab == 1]
        lo = max(lowers) if lowers else None
        hi = min(uppers) if uppers else None
        if lo is None or hi is None or lo < hi:
            best = len(chosen)
    return best
