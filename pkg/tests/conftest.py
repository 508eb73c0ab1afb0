"""Shared fixtures and reference implementations for the test suite.

The reference implementations here (rule counting, vertex enumeration,
exhaustive strategy search) deliberately avoid the library's own code paths
so that agreement between the two is evidence, not tautology.
"""

from __future__ import annotations

import itertools
import json
import random
from fractions import Fraction
from pathlib import Path

import pytest

from dynrat import model as m
from dynrat import deviation as dv
from dynrat.model import PAD, format_rational

PROBLEMS_DIR = Path(__file__).resolve().parent.parent / "problems"


def load_fixture(name: str) -> m.DecisionProblem:
    return m.load_problem((PROBLEMS_DIR / name).read_text())


@pytest.fixture(scope="session")
def example1() -> m.DecisionProblem:
    return load_fixture("example1.json")


@pytest.fixture(scope="session")
def example2() -> m.DecisionProblem:
    return load_fixture("example2.json")


@pytest.fixture(scope="session")
def example3() -> m.DecisionProblem:
    return load_fixture("example3.json")


# ---------------------------------------------------------------------------
# Reference rule count (independent of the library's enumerator)
# ---------------------------------------------------------------------------

def reference_rule_count(problem: m.DecisionProblem) -> int:
    """Bottom-up table over aligned (input prefix, output prefix) pairs."""
    T = problem.periods

    def children(prefix: tuple[str, ...]) -> list[tuple[str, ...]]:
        history = tuple(e for e in prefix if e != PAD)
        if PAD in prefix or problem.is_terminal(history):
            return [prefix + (PAD,)]
        return [prefix + (a,) for a in problem.actions_at(history)]

    prefixes_at: dict[int, list[tuple[str, ...]]] = {0: [()]}
    for t in range(T):
        nxt: list[tuple[str, ...]] = []
        for p in prefixes_at[t]:
            nxt.extend(children(p))
        prefixes_at[t + 1] = nxt

    table = {(i, o): 1 for i in prefixes_at[T] for o in prefixes_at[T]}
    for t in range(T - 1, -1, -1):
        new = {}
        for i in prefixes_at[t]:
            for o in prefixes_at[t]:
                total = 1
                for ic in children(i):
                    total *= sum(table[(ic, oc)] for oc in children(o))
                new[(i, o)] = total
        table = new
    return table[((), ())]


# ---------------------------------------------------------------------------
# Random instances
# ---------------------------------------------------------------------------

def random_problem(
    rng: random.Random,
    *,
    max_periods: int = 3,
    max_actions: int = 3,
    max_states: int = 3,
    min_leaves: int = 2,
    max_leaves: int = 5,
    max_rules: int = 300,
    denom_cap: int = 20,
    value_cap: int = 6,
) -> m.DecisionProblem:
    while True:
        T = rng.randint(1, max_periods)

        def build(depth: int) -> dict:
            node = {}
            for i in range(rng.randint(1, max_actions)):
                label = "abc"[i]
                if depth + 1 >= T or rng.random() < 0.55:
                    node[label] = "leaf"
                else:
                    node[label] = build(depth + 1)
            return node

        tree = build(0)

        def count_leaves(node) -> int:
            return sum(1 if v == "leaf" else count_leaves(v) for v in node.values())

        if not (min_leaves <= count_leaves(tree) <= max_leaves):
            continue

        def leaf_ids(node, prefix=()):
            for k, v in node.items():
                if v == "leaf":
                    yield ",".join(prefix + (k,))
                else:
                    yield from leaf_ids(v, prefix + (k,))

        states = [f"s{i}" for i in range(rng.randint(1, max_states))]
        utility = {
            lid: {
                s: format_rational(
                    Fraction(rng.randint(-value_cap, value_cap), rng.randint(1, denom_cap))
                )
                for s in states
            }
            for lid in leaf_ids(tree)
        }
        doc = {"periods": T, "states": states, "tree": tree, "utility": utility}
        problem = m.load_problem(json.dumps(doc))
        if reference_rule_count(problem) > max_rules:
            continue
        return problem


def random_joint(rng: random.Random, problem: m.DecisionProblem) -> m.JointDistribution:
    cells = [(a, s) for a in problem.leaves for s in problem.states]
    raw = [rng.randint(0, 6) if rng.random() < 0.8 else 0 for _ in cells]
    if sum(raw) == 0:
        raw[rng.randrange(len(raw))] = 1
    total = sum(raw)
    weights = {cell: Fraction(x, total) for cell, x in zip(cells, raw) if x}
    return m.JointDistribution.from_mapping(problem, weights)


def random_marginal(rng: random.Random, problem: m.DecisionProblem) -> m.MarginalDistribution:
    raw = [rng.randint(0, 6) if rng.random() < 0.8 else 0 for _ in problem.leaves]
    if sum(raw) == 0:
        raw[rng.randrange(len(raw))] = 1
    total = sum(raw)
    return m.MarginalDistribution.from_mapping(
        problem, {a: Fraction(x, total) for a, x in zip(problem.leaves, raw) if x}
    )


def random_pure_rule(rng: random.Random, problem: m.DecisionProblem) -> dv.PureDeviationRule:
    """Sample an adapted pure rule by walking aligned prefixes top-down."""
    T = problem.periods

    def children(prefix):
        history = tuple(e for e in prefix if e != PAD)
        if PAD in prefix or problem.is_terminal(history):
            return [prefix + (PAD,)]
        return [prefix + (a,) for a in problem.actions_at(history)]

    mapping: dict[m.ActionSequence, m.ActionSequence] = {}

    def walk(inp, out):
        if len(inp) == T:
            mapping[m.ActionSequence(inp)] = m.ActionSequence(out)
            return
        for ic in children(inp):
            walk(ic, rng.choice(children(out)))

    walk((), ())
    return dv.PureDeviationRule(problem.leaves, tuple(mapping[a] for a in problem.leaves))


def random_rule(rng: random.Random, problem: m.DecisionProblem) -> dv.DeviationRule:
    """A random mixture of a few sampled pure rules."""
    parts = [random_pure_rule(rng, problem) for _ in range(rng.randint(1, 3))]
    raw = [rng.randint(1, 5) for _ in parts]
    total = sum(raw)
    n = len(problem.leaves)
    matrix = [[Fraction(0)] * n for _ in range(n)]
    for part, x in zip(parts, raw):
        pm = part.to_rule().matrix
        w = Fraction(x, total)
        for i in range(n):
            for j in range(n):
                matrix[i][j] += w * pm[i][j]
    return dv.DeviationRule(problem.leaves, tuple(tuple(r) for r in matrix))


def random_convex_increasing(rng: random.Random):
    """A random valid piecewise-linear transform (increasing, convex)."""
    from dynrat.analysis import PiecewiseLinearFunction

    k = rng.randint(1, 3)
    points = sorted(rng.sample(range(-4, 5), k))
    breaks = tuple(Fraction(p, rng.randint(1, 2)) for p in points)
    breaks = tuple(sorted(set(breaks)))
    slopes = []
    current = Fraction(rng.randint(1, 4), rng.randint(1, 3))
    for _ in range(len(breaks) + 1):
        slopes.append(current)
        current = current + Fraction(rng.randint(0, 3), rng.randint(1, 2))
    anchor = Fraction(rng.randint(-3, 3), rng.randint(1, 4))
    return PiecewiseLinearFunction(breaks, tuple(slopes), anchor)


# ---------------------------------------------------------------------------
# Exhaustive strategy search (reference for the backward-induction value)
# ---------------------------------------------------------------------------

def exhaustive_optimal_value(problem: m.DecisionProblem, structure) -> Fraction:
    """Max expected utility over every adapted pure strategy, by brute force."""
    seqs = structure.sequences
    T = problem.periods

    def children(prefix):
        history = tuple(e for e in prefix if e != PAD)
        if PAD in prefix or problem.is_terminal(history):
            return [prefix + (PAD,)]
        return [prefix + (a,) for a in problem.actions_at(history)]

    def signal_children(prefix_ids, t):
        groups: dict[str, list[int]] = {}
        for k in prefix_ids:
            groups.setdefault(seqs[k][t], []).append(k)
        return list(groups.values())

    def assignments(prefix_ids, t, out_prefix):
        """All adapted choices mapping this signal class (and descendants)
        into completions of out_prefix; yields dicts seq_index -> leaf."""
        if t == T:
            leaf = m.ActionSequence(out_prefix)
            yield {k: leaf for k in prefix_ids}
            return
        per_group = []
        for group in signal_children(prefix_ids, t):
            alts = []
            for oc_prefix in children(out_prefix):
                alts.extend(assignments(group, t + 1, oc_prefix))
            per_group.append(alts)
        for combo in itertools.product(*per_group):
            merged: dict = {}
            for part in combo:
                merged.update(part)
            yield merged

    all_ids = list(range(len(seqs)))
    per_group = []
    for group in signal_children(all_ids, 0):
        alts = []
        for out in children(()):
            alts.extend(assignments(group, 1, out))
        per_group.append(alts)
    best = None
    for combo in itertools.product(*per_group):
        mapping: dict = {}
        for part in combo:
            mapping.update(part)
        value = Fraction(0)
        for s, state in enumerate(problem.states):
            p = structure.prior[s]
            if p == 0:
                continue
            for k in all_ids:
                w = structure.kernel[s][k]
                if w != 0:
                    value += p * w * m.utility(problem, mapping[k], state)
        if best is None or value > best:
            best = value
    return best
