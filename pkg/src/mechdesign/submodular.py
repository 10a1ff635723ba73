"""Solvers for combinatorial costs given by value queries over outcome vectors.

An outcome vector assigns one outcome index to every type; vectors form a
product lattice under coordinatewise min (meet) and max (join).  Costs are
submodular when meet-plus-join never beats the original pair.  The truthful
vectors (coordinatewise dominance along the misreport relation) form a
distributive sublattice, and submodularity makes both the deterministic and
the randomized problem tractable:

* deterministic: minimize the cost's chain-greedy (threshold) extension over
  the order polytope of level indicators, then round along the final chain;
* randomized: minimize the same extension expressed in per-type marginals
  over the truthfulness polytope (expected-utility dominance), by projected
  subgradient (default) or a central-cut ellipsoid backend.

The chain-greedy extension evaluates a marginal profile by peeling: read
each type at its highest remaining outcome, pay the smallest remaining mass
for that vector, subtract, repeat.  The peel also yields the unique
non-crossing distribution with the given marginals, which ``uncross``
reproduces from any distribution by repeated meet/join surgery.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .instances import (
    Cost,
    DeterministicMechanism,
    Instance,
    OutcomeSpace,
    ReportingRelation,
    SelfCheckError,
)
from .oracle import BudgetExceededError, DEFAULT_ENUMERATION_BUDGET

# Marginal entries at or below this are treated as exhausted in float mode;
# exact (rational) profiles use strict positivity instead.
POSITIVITY_TOL = 1e-12

# Feasibility projections iterate until constraint violations fall below this.
PROJECTION_TOL = 1e-10

# A returned randomized solution must satisfy marginal truthfulness to here.
TRUTHFUL_MARGINAL_TOL = 1e-9

# Breakpoints closer than this are merged when thresholding float marginals.
BREAKPOINT_CLUSTER_TOL = 1e-9

DEFAULT_PAIR_BUDGET = 10**6
DEFAULT_ITERATION_CAP = 100_000


class CostOracle:
    """Value-query access to a cost over outcome vectors.

    ``bound`` is a declared upper bound on the finite values the oracle can
    return; the numeric solvers use it to scale steps.  ``query_count``
    tracks usage so tests can pin query complexity.
    """

    def __init__(self, fn: Callable, type_count: int, outcome_count: int, bound):
        self._fn = fn
        self.type_count = int(type_count)
        self.outcome_count = int(outcome_count)
        self.bound = Fraction(bound)
        self.query_count = 0

    def __call__(self, point: Sequence[int]) -> Cost:
        self.query_count += 1
        value = self._fn(tuple(point))
        return value if isinstance(value, Cost) else Cost(value)


def additive_oracle(instance: Instance) -> CostOracle:
    """Sum of per-type entries; the bridge between matrix and query worlds."""
    rows = instance.costs.rows

    def evaluate(point):
        total = Cost(0)
        for i, j in enumerate(point):
            total = total + rows[i][j]
        return total

    bound = Fraction(0)
    for row in rows:
        finite = [c.value for c in row if c.is_finite]
        if finite:
            bound += max(finite)
    return CostOracle(evaluate, instance.type_count, instance.outcome_count, bound)


def lattice_index(point: Sequence[int], outcome_count: int) -> int:
    """Row-major index of a lattice point (the last type varies fastest)."""
    idx = 0
    for x in point:
        idx = idx * outcome_count + x
    return idx


def lattice_points(type_count: int, outcome_count: int):
    """All outcome vectors in row-major order (matches ``lattice_index``)."""
    return itertools.product(range(outcome_count), repeat=type_count)


def table_oracle(values: Sequence, type_count: int, outcome_count: int) -> CostOracle:
    """Cost table indexed by ``lattice_index``; entries may be ``Cost``s."""
    expected = outcome_count**type_count
    if len(values) != expected:
        raise ValueError(f"table needs {expected} entries, got {len(values)}")
    table = [v if isinstance(v, Cost) else Cost(v) for v in values]
    finite = [c.value for c in table if c.is_finite]
    bound = max(finite) if finite else Fraction(0)
    return CostOracle(
        lambda point: table[lattice_index(point, outcome_count)],
        type_count,
        outcome_count,
        bound,
    )


def _memoized(oracle: CostOracle) -> CostOracle:
    """Dict-backed shim so iterative solvers pay each value query once."""
    cache: dict[tuple, Cost] = {}

    def lookup(point):
        got = cache.get(point)
        if got is None:
            got = oracle(point)
            cache[point] = got
        return got

    return CostOracle(lookup, oracle.type_count, oracle.outcome_count, oracle.bound)


def meet(a: Sequence[int], b: Sequence[int]) -> tuple[int, ...]:
    return tuple(min(x, y) for x, y in zip(a, b))


def join(a: Sequence[int], b: Sequence[int]) -> tuple[int, ...]:
    return tuple(max(x, y) for x, y in zip(a, b))


@dataclass(frozen=True)
class SubmodularityVerdict:
    ok: bool
    witness: tuple | None  # (point_a, point_b) violating the inequality
    checked_pairs: int
    exhaustive: bool

    def __bool__(self) -> bool:
        return self.ok


def is_submodular(
    oracle: CostOracle,
    mode: str = "exhaustive",
    sample_count: int = 2000,
    seed: int = 0,
    pair_budget: int = DEFAULT_PAIR_BUDGET,
) -> SubmodularityVerdict:
    """Check ``c(a) + c(b) >= c(meet) + c(join)`` over unordered pairs.

    Exhaustive mode scans every pair of lattice points (within
    ``pair_budget``); sampled mode draws pairs from a seeded generator.
    Comparable pairs hold trivially and are skipped.
    """
    n, m = oracle.type_count, oracle.outcome_count
    cache: dict[tuple, Cost] = {}

    def value(point) -> Cost:
        got = cache.get(point)
        if got is None:
            got = oracle(point)
            cache[point] = got
        return got

    def violates(a, b) -> bool:
        lo, hi = meet(a, b), join(a, b)
        if lo == a or lo == b:
            return False  # comparable: meet/join reproduce the pair
        return value(a) + value(b) < value(lo) + value(hi)

    checked = 0
    if mode == "exhaustive":
        total_points = m**n
        total_pairs = total_points * (total_points - 1) // 2
        if total_pairs > pair_budget:
            raise BudgetExceededError(
                f"exhaustive submodularity check needs {total_pairs} pairs, "
                f"budget is {pair_budget}"
            )
        points = list(lattice_points(n, m))
        for ai in range(len(points)):
            for bi in range(ai + 1, len(points)):
                checked += 1
                if violates(points[ai], points[bi]):
                    return SubmodularityVerdict(
                        False, (points[ai], points[bi]), checked, True
                    )
        return SubmodularityVerdict(True, None, checked, True)

    if mode == "sampled":
        rng = random.Random(seed)

        def draw():
            return tuple(rng.randrange(m) for _ in range(n))

        for _ in range(sample_count):
            a, b = draw(), draw()
            if a == b:
                continue
            checked += 1
            if violates(a, b):
                return SubmodularityVerdict(False, (a, b), checked, False)
        return SubmodularityVerdict(True, None, checked, False)

    raise ValueError(f"unknown mode {mode!r}")


def in_truthful_lattice(point: Sequence[int], relation: ReportingRelation) -> bool:
    """Whoever can claim to be another must sit at least as high."""
    return all(point[a] >= point[b] for a, b in relation.pairs)


# ---------------------------------------------------------------------------
# Marginal profiles and chains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainDistribution:
    """A distribution over a totally ordered set of outcome vectors,
    listed in coordinatewise-ascending order."""

    support: tuple
    probs: tuple

    def items(self):
        return list(zip(self.support, self.probs))

    def marginals(self, outcome_count: int):
        """Per-type outcome marginals induced by the chain."""
        n = len(self.support[0]) if self.support else 0
        rows = [[0] * outcome_count for _ in range(n)]
        for point, p in zip(self.support, self.probs):
            for i, j in enumerate(point):
                rows[i][j] += p
        return rows


def chain_violations(dist: ChainDistribution, tol: float = POSITIVITY_TOL) -> list[str]:
    problems = []
    exact = all(isinstance(p, (int, Fraction)) for p in dist.probs)
    total = sum(dist.probs)
    if exact:
        if total != 1:
            problems.append(f"probabilities sum to {total}, expected exactly 1")
    elif abs(float(total) - 1.0) > 1e-9:
        problems.append(f"probabilities sum to {float(total)!r}")
    if any(p < 0 for p in dist.probs):
        problems.append("negative probability")
    for a, b in zip(dist.support, dist.support[1:]):
        if not all(x <= y for x, y in zip(a, b)):
            problems.append(f"support not ascending: {a} then {b}")
    return problems


def _is_exact_rows(rows) -> bool:
    return all(isinstance(p, (int, Fraction)) for row in rows for p in row)


def _validate_profile(rows) -> None:
    if not rows or not rows[0]:
        raise ValueError("empty marginal profile")
    width = len(rows[0])
    exact = _is_exact_rows(rows)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"row {i} has {len(row)} entries, expected {width}")
        if any(p < 0 if exact else p < -POSITIVITY_TOL for p in row):
            raise ValueError(f"row {i} has a negative marginal")
        total = sum(row)
        if exact:
            if total != 1:
                raise ValueError(f"row {i} sums to {total}, expected exactly 1")
        elif abs(float(total) - 1.0) > 1e-9:
            raise ValueError(f"row {i} sums to {float(total)!r}, expected 1")


def _peel(rows) -> list[tuple[tuple[int, ...], object]]:
    """Greedy top-down peel of a marginal profile.

    Returns ``[(vector, mass), ...]`` from the top of the lattice downward.
    Exact profiles peel exactly; float profiles use the positivity threshold
    and renormalize the collected masses.
    """
    exact = _is_exact_rows(rows)
    tol = 0 if exact else POSITIVITY_TOL
    n = len(rows)
    m = len(rows[0])
    remaining = [list(row) for row in rows]

    tops = []
    for i in range(n):
        top = max((j for j in range(m) if remaining[i][j] > tol), default=None)
        if top is None:
            raise ValueError(f"marginal row {i} has no positive mass")
        tops.append(top)

    out = []
    steps = 0
    while True:
        steps += 1
        if steps > n * m + 1:
            raise SelfCheckError("marginal peel exceeded its iteration bound")
        delta = None
        for i in range(n):
            mass = remaining[i][tops[i]]
            if delta is None or mass < delta:
                delta = mass
        out.append((tuple(tops), delta))
        done = False
        for i in range(n):
            remaining[i][tops[i]] -= delta
            if remaining[i][tops[i]] <= tol:
                nxt = max(
                    (j for j in range(tops[i]) if remaining[i][j] > tol),
                    default=None,
                )
                if nxt is None:
                    done = True
                else:
                    tops[i] = nxt
        if done:
            break

    if not exact:
        total = sum(p for _, p in out)
        out = [(pt, p / total) for pt, p in out if p > 0]
    return out


def interpret_marginals(profile) -> ChainDistribution:
    """The unique non-crossing distribution with the given marginals.

    Peels the profile top-down, which realizes every type's marginal as the
    quantile coupling under one shared uniform draw; the support is a chain
    of at most ``n * m`` vectors.
    """
    rows = [list(row) for row in profile]
    _validate_profile(rows)
    peeled = _peel(rows)
    peeled.reverse()
    dist = ChainDistribution(
        tuple(pt for pt, _ in peeled), tuple(p for _, p in peeled)
    )
    problems = chain_violations(dist)
    if problems:
        raise SelfCheckError("peel produced a bad chain: " + "; ".join(problems))
    return dist


def _dist_items(dist) -> list:
    if isinstance(dist, ChainDistribution):
        return dist.items()
    return [(tuple(pt), p) for pt, p in dist]


def chain_cost(dist, oracle: CostOracle) -> Cost:
    """Expected oracle cost of a distribution over outcome vectors.

    Exact: float probabilities are converted exactly, and zero-probability
    entries cannot contribute an infinity.
    """
    total = Cost(0)
    for point, p in _dist_items(dist):
        if p:
            total = total + oracle(point).scaled(Fraction(p))
    return total


def objective_subgradient(profile, oracle: CostOracle) -> list[list[float]]:
    """A subgradient of ``p -> chain_cost(interpret_marginals(p), oracle)``.

    Replays the peel while tracking each consumed mass as a linear function
    of the profile entries, then accumulates oracle values against those
    coefficients.  Exact on the interior of a linearity region, a valid
    subgradient on its boundary.
    """
    rows = [[float(p) for p in row] for row in profile]
    _validate_profile(rows)
    _, grad, _ = _peel_with_gradient(rows, oracle)
    return grad


def _peel_with_gradient(rows, oracle: CostOracle):
    """Float peel returning (value, gradient, chain-items-top-down).

    ``remaining mass`` at each type's current top is maintained both as a
    number and as a sparse linear form over the original entries; the
    gradient accumulates oracle values against the leader's linear form.

    Exactly one row — the leader — advances per step.  At ties the other
    exhausted rows lead later zero-mass steps of their own, whose residual
    linear forms still enter the gradient; collapsing such steps would leave
    the traced linear piece valid only on the tie hyperplane itself, and its
    slope would be no subgradient.
    """
    n = len(rows)
    m = len(rows[0])
    tol = POSITIVITY_TOL

    tops = []
    for i in range(n):
        top = max((j for j in range(m) if rows[i][j] > tol), default=None)
        if top is None:
            raise ValueError(f"marginal row {i} has no positive mass")
        tops.append(top)
    rem_val = [rows[i][tops[i]] for i in range(n)]
    rem_coef = [{(i, tops[i]): 1.0} for i in range(n)]

    grad = [[0.0] * m for _ in range(n)]
    value = 0.0
    items = []
    for _ in range(n * m + 1):
        leader = 0
        for i in range(1, n):
            if rem_val[i] < rem_val[leader]:
                leader = i
        delta = max(rem_val[leader], 0.0)
        delta_coef = rem_coef[leader]
        point = tuple(tops)
        c = float(oracle(point))
        value += delta * c
        items.append((point, delta))
        for (ii, jj), co in delta_coef.items():
            grad[ii][jj] += c * co

        for i in range(n):
            if i != leader:
                rem_val[i] -= delta
                merged = dict(rem_coef[i])
                for key, co in delta_coef.items():
                    merged[key] = merged.get(key, 0.0) - co
                rem_coef[i] = merged
        nxt = max(
            (j for j in range(tops[leader]) if rows[leader][j] > tol),
            default=None,
        )
        if nxt is None:
            break
        tops[leader] = nxt
        rem_val[leader] = rows[leader][nxt]
        rem_coef[leader] = {(leader, nxt): 1.0}
    else:
        raise SelfCheckError("gradient peel exceeded its iteration bound")
    return value, grad, items


# ---------------------------------------------------------------------------
# Uncrossing
# ---------------------------------------------------------------------------

def uncross(dist, oracle: CostOracle | None = None, max_steps: int = 100_000) -> ChainDistribution:
    """Turn any distribution over outcome vectors into the non-crossing one
    with the same marginals.

    Repeatedly replaces mass on a crossing pair by mass on its meet and
    join.  Each step preserves every per-type marginal exactly and strictly
    increases the spread potential ``sum p * (coordinate sum)^2``, which
    certifies termination.  When an oracle is supplied, the final expected
    cost is checked not to exceed the initial one (submodularity).
    """
    items = _dist_items(dist)
    masses: dict[tuple, object] = {}
    for point, p in items:
        if p < 0:
            raise ValueError("negative probability in distribution")
        if p:
            masses[point] = masses.get(point, 0) + p
    if not masses:
        raise ValueError("empty distribution")
    exact = all(isinstance(p, (int, Fraction)) for p in masses.values())
    before_cost = chain_cost(list(masses.items()), oracle) if oracle else None

    def spread(point) -> int:
        return sum(point)

    steps = 0
    while True:
        support = sorted(masses, key=lambda pt: (spread(pt), pt), reverse=True)
        pair = None
        for x in range(len(support)):
            for y in range(x + 1, len(support)):
                a, b = support[x], support[y]
                lo = meet(a, b)
                if lo != a and lo != b:
                    pair = (a, b)
                    break
            if pair:
                break
        if pair is None:
            break
        steps += 1
        if steps > max_steps:
            raise SelfCheckError("uncrossing exceeded its step budget")
        a, b = pair
        q = min(masses[a], masses[b])
        lo, hi = meet(a, b), join(a, b)
        gain = q * (spread(lo) ** 2 + spread(hi) ** 2 - spread(a) ** 2 - spread(b) ** 2)
        if not gain > 0:
            raise SelfCheckError("uncrossing step failed to increase the potential")
        for pt in (a, b):
            masses[pt] -= q
            if not masses[pt] > (0 if exact else POSITIVITY_TOL):
                del masses[pt]
        for pt in (lo, hi):
            masses[pt] = masses.get(pt, 0) + q

    ordered = sorted(masses.items(), key=lambda kv: (spread(kv[0]), kv[0]))
    result = ChainDistribution(
        tuple(pt for pt, _ in ordered), tuple(p for _, p in ordered)
    )
    problems = chain_violations(result)
    if problems:
        raise SelfCheckError("uncrossing produced a bad chain: " + "; ".join(problems))
    if oracle is not None:
        after_cost = chain_cost(result, oracle)
        if exact:
            if after_cost > before_cost:
                raise SelfCheckError("uncrossing raised the expected cost")
        elif float(after_cost) > float(before_cost) + 1e-9:
            raise SelfCheckError("uncrossing raised the expected cost")
    return result


# ---------------------------------------------------------------------------
# Binary determinization
# ---------------------------------------------------------------------------

def determinize_binary(
    dist, relation: ReportingRelation, oracle: CostOracle
) -> tuple[DeterministicMechanism, Cost]:
    """For two outcomes: threshold the marginals of a truthful distribution.

    Every threshold level yields a truthful deterministic mechanism; under a
    shared uniform draw their expected cost reproduces the distribution's
    cost exactly, so the cheapest one costs no more.  Returns that cheapest
    mechanism with its exact cost.
    """
    if oracle.outcome_count != 2:
        raise ValueError("binary determinization needs exactly two outcomes")
    items = _dist_items(dist)
    n = oracle.type_count
    exact = all(isinstance(p, (int, Fraction)) for _, p in items)

    marginals = [Fraction(0) if exact else 0.0 for _ in range(n)]
    for point, p in items:
        for i, x in enumerate(point):
            if x:
                marginals[i] = marginals[i] + p

    for a, b in relation.pairs:
        if a == b:
            continue
        gap = marginals[a] - marginals[b]
        if (exact and gap < 0) or (not exact and gap < -TRUTHFUL_MARGINAL_TOL):
            raise ValueError(
                f"distribution is not marginally truthful on pair ({a}, {b})"
            )

    if not exact:
        # Snap nearly equal marginals together so thresholds cannot slip
        # between two values that are equal up to solver round-off.
        order = sorted(range(n), key=lambda i: marginals[i])
        for prev, cur in zip(order, order[1:]):
            if marginals[cur] - marginals[prev] <= BREAKPOINT_CLUSTER_TOL:
                marginals[cur] = marginals[prev]

    one = Fraction(1) if exact else 1.0
    levels = sorted(set(marginals) | {one})
    best_mech = None
    best_cost = None
    expected = Cost(0)
    previous = Fraction(0) if exact else 0.0
    for level in levels:
        point = tuple(1 if marginals[i] >= level else 0 for i in range(n))
        if not in_truthful_lattice(point, relation):
            raise SelfCheckError("threshold mechanism left the truthful lattice")
        cost = oracle(point)
        weight = level - previous
        previous = level
        if weight:
            expected = expected + cost.scaled(Fraction(weight))
        if best_cost is None or cost < best_cost:
            best_cost, best_mech = cost, DeterministicMechanism(point)

    # The threshold family shares one uniform draw, so its expected cost is
    # exactly the cost of the quantile coupling of the marginals (the input
    # itself whenever the input is already a chain).
    reference = chain_cost(
        interpret_marginals([[1 - u, u] for u in marginals]), oracle
    )
    if exact:
        if expected != reference:
            raise SelfCheckError(
                "threshold family cost does not reproduce the coupled cost"
            )
    elif abs(float(expected) - float(reference)) > 1e-9:
        raise SelfCheckError(
            "threshold family cost does not reproduce the coupled cost"
        )
    return best_mech, best_cost


# ---------------------------------------------------------------------------
# Deterministic solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubmodularDeterministicSolution:
    point: tuple[int, ...]
    cost: Cost
    backend: str
    iterations: int = 0


def solve_deterministic_submodular(
    oracle: CostOracle,
    relation: ReportingRelation,
    backend: str = "lovasz",
    budget: int = DEFAULT_ENUMERATION_BUDGET,
    max_iters: int = DEFAULT_ITERATION_CAP,
    seed: int = 0,
    value_granularity=None,
) -> SubmodularDeterministicSolution:
    """Cheapest truthful outcome vector for a (submodular) oracle cost.

    ``brute`` scans the whole lattice (exact for any oracle, exponential).
    ``lovasz`` minimizes the threshold extension of the cost over the order
    polytope of per-type level indicators — truthfulness becomes a set of
    coordinate dominances — and rounds along the chain of the final point;
    exact for submodular oracles, up to the numeric tolerance.

    ``value_granularity``: a known lower bound on the separation between
    distinct oracle values (1 for integer tables).  Once the extension is
    within the separation of its minimum, some chain member must be exactly
    optimal, so the search can stop much earlier.
    """
    n, m = oracle.type_count, oracle.outcome_count
    if backend == "brute":
        total = m**n
        if total > budget:
            raise BudgetExceededError(
                f"brute lattice scan needs {total} states, budget is {budget}"
            )
        best = None
        best_cost = None
        for point in lattice_points(n, m):
            if not in_truthful_lattice(point, relation):
                continue
            c = oracle(point)
            if best_cost is None or c < best_cost:
                best_cost, best = c, point
        assert best is not None  # constant vectors are always truthful
        return SubmodularDeterministicSolution(best, best_cost, "brute")

    if backend != "lovasz":
        raise ValueError(f"unknown backend {backend!r}")

    if m == 1:
        bottom = (0,) * n
        return SubmodularDeterministicSolution(bottom, oracle(bottom), "lovasz")
    oracle = _memoized(oracle)

    # Level indicators z[i, k] = P(type i's outcome index > k), k < m-1,
    # monotone within each type; truthfulness is coordinatewise dominance.
    dominances = []
    for i in range(n):
        for k in range(m - 2):
            dominances.append(((i, k), (i, k + 1)))
    for a, b in sorted(relation.pairs):
        if a != b:
            for k in range(m - 1):
                dominances.append(((a, k), (b, k)))

    def project(z):
        z = np.clip(z, 0.0, 1.0)
        for _ in range(2000):
            worst = 0.0
            for (hi, lo) in dominances:
                gap = z[lo] - z[hi]
                if gap > 0:
                    mid = (z[hi] + z[lo]) / 2.0
                    z[hi] = mid
                    z[lo] = mid
                    if gap > worst:
                        worst = gap
            np.clip(z, 0.0, 1.0, out=z)
            if worst <= PROJECTION_TOL:
                break
        return z

    state = {"best_point": None, "best_cost": None}

    def consider(point):
        if not in_truthful_lattice(point, relation):
            return
        c = oracle(point)
        if state["best_cost"] is None or c < state["best_cost"]:
            state["best_cost"] = c
            state["best_point"] = point

    def value_and_grad(z):
        profile = _levels_to_profile(z, n, m)
        value, grad_p, items = _peel_with_gradient(profile, oracle)
        for point, _ in items:
            consider(point)
        grad = np.empty_like(z)
        for i in range(n):
            for k in range(m - 1):
                grad[i, k] = grad_p[i][k + 1] - grad_p[i][k]
        return value, grad

    # A symmetric start would round to constant vectors only; a seeded
    # perturbation lets the first chains already separate the types.
    rng = random.Random(seed)
    z0 = np.array(
        [[0.35 + 0.3 * rng.random() for _ in range(m - 1)] for _ in range(n)]
    )
    if value_granularity is not None:
        min_level = max(1e-9, float(value_granularity) / 8.0)
    else:
        min_level = max(1e-6, 1e-3 * max(1.0, float(oracle.bound)))
    _, _, iterations = _target_level_minimize(
        value_and_grad, project, z0, max_iters=max_iters, min_level=min_level,
        diameter=math.sqrt(n * (m - 1)),
    )
    if state["best_point"] is None:
        raise SelfCheckError("rounding never produced a truthful vector")
    return SubmodularDeterministicSolution(
        state["best_point"], state["best_cost"], "lovasz", iterations
    )


def _levels_to_profile(z, n: int, m: int) -> list[list[float]]:
    """Differences of monotone level indicators, clipped to a simplex row."""
    profile = []
    for i in range(n):
        row = [0.0] * m
        prev = 1.0
        for k in range(m - 1):
            cur = float(z[i, k])
            row[k] = max(prev - cur, 0.0)
            prev = cur
        row[m - 1] = max(prev, 0.0)
        total = sum(row)
        profile.append([p / total for p in row])
    return profile


# ---------------------------------------------------------------------------
# Randomized solver (convex program over marginal profiles)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubmodularRandomizedSolution:
    chain: ChainDistribution
    value: float
    cost: Cost
    converged: bool
    gap_estimate: float
    iterations: int
    backend: str


def _project_rows_to_simplex(p: np.ndarray) -> np.ndarray:
    """Euclidean projection of every row of ``p`` onto the probability simplex."""
    n, m = p.shape
    u = np.sort(p, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - 1.0
    ks = np.arange(1, m + 1)
    mask = u - css / ks > 0
    rho = m - 1 - np.argmax(mask[:, ::-1], axis=1)
    theta = css[np.arange(n), rho] / (rho + 1)
    return np.maximum(p - theta[:, None], 0.0)


def _profile_projector(
    outcomes: OutcomeSpace,
    relation: ReportingRelation,
    n: int,
    m: int,
    tol: float = PROJECTION_TOL,
):
    """Cyclic projection onto the truthful-marginal polytope: alternate row
    simplex projections with halfspace corrections for each dominance pair."""
    u = np.array([float(x) for x in outcomes.utilities])
    unorm2 = float(u @ u)
    pairs = sorted((a, b) for a, b in relation.pairs if a != b)

    def project(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        for _ in range(5000):
            p = _project_rows_to_simplex(p)
            worst = 0.0
            for a, b in pairs:
                gap = float((p[b] - p[a]) @ u)
                if gap > 0:
                    shift = gap / (2.0 * unorm2) * u
                    p[a] += shift
                    p[b] -= shift
                    if gap > worst:
                        worst = gap
            if worst <= tol:
                break
        return _project_rows_to_simplex(p)

    return project


def _target_level_minimize(
    value_and_grad,
    project,
    x0: np.ndarray,
    max_iters: int,
    min_level: float,
    diameter: float,
    stall_level: float | None = None,
    stall_patience: int = 0,
):
    """Projected subgradient with path-length-controlled target levels.

    Steps aim at the target ``best - level``.  While that target is
    attainable, the accumulated step path toward it is bounded by the
    feasible set's diameter; so once the path since the last material
    improvement exceeds ``diameter``, the target must be unattainable and
    the level halves.  The run stops when the level falls below
    ``min_level`` (or at the iteration cap); with ``stall_level`` set it
    also stops once the level has reached that mark and ``stall_patience``
    iterations pass without improving the best value by ``min_level``.
    Returns ``(best_x, best_value, iterations)``.
    """
    x = project(np.array(x0, dtype=float))
    value, grad = value_and_grad(x)
    best_x = x.copy()
    best = value
    level = max(min_level, 0.5 * abs(best)) if best else max(min_level, 1.0)
    path = 0.0
    mark = best
    iterations = 0
    idle = 0
    while iterations < max_iters and level > min_level:
        iterations += 1
        gnorm2 = float(np.vdot(grad, grad))
        if gnorm2 <= 1e-18:
            break
        gap = value - (best - level)
        x = project(x - (gap / gnorm2) * grad)
        path += gap / math.sqrt(gnorm2)
        value, grad = value_and_grad(x)
        idle += 1
        if value < best:
            if value <= best - min_level:
                idle = 0
            best = value
            best_x = x.copy()
            if best <= mark - 0.5 * level:
                path = 0.0
                mark = best
        if path > diameter:
            level /= 2.0
            path = 0.0
            mark = best
        if (
            stall_level is not None
            and level <= stall_level
            and idle >= stall_patience > 0
        ):
            break
    return best_x, best, iterations


def solve_randomized_submodular(
    oracle: CostOracle,
    outcomes: OutcomeSpace,
    relation: ReportingRelation,
    eps: float = 1e-3,
    backend: str = "subgradient",
    max_iters: int = DEFAULT_ITERATION_CAP,
    seed: int = 0,
) -> SubmodularRandomizedSolution:
    """Cheapest truthful marginal profile for a submodular oracle cost.

    Minimizes the chain-greedy extension over profiles whose expected
    utilities dominate along the misreport relation, to additive accuracy
    ``eps`` (heuristically certified by the final target level).  The
    returned chain realizes the optimal marginals.
    """
    n, m = oracle.type_count, oracle.outcome_count
    if len(outcomes.utilities) != m:
        raise ValueError("outcome ladder does not match the oracle's width")
    oracle = _memoized(oracle)
    loose = _profile_projector(
        outcomes, relation, n, m, tol=max(PROJECTION_TOL, eps * 1e-3)
    )
    strict = _profile_projector(outcomes, relation, n, m)

    def value_and_grad(p):
        rows = [list(map(float, p[i])) for i in range(n)]
        value, grad_p, _ = _peel_with_gradient(rows, oracle)
        grad = np.array(grad_p)
        # Per-row constant components are normal to the row-sum-preserving
        # affine hull the iterates live in; dropping them leaves a valid
        # relative subgradient with a far smaller norm.
        return value, grad - grad.mean(axis=1, keepdims=True)

    p0 = np.full((n, m), 1.0 / m)
    if backend == "subgradient":
        best_x, best, iterations = _target_level_minimize(
            value_and_grad, loose, p0, max_iters=max_iters, min_level=eps / 8.0,
            diameter=math.sqrt(2.0 * n),
            stall_level=eps, stall_patience=2000,
        )
        converged = iterations < max_iters
        gap = eps if converged else float("nan")
    elif backend == "ellipsoid":
        best_x, best, iterations, converged = _ellipsoid_minimize(
            oracle, outcomes, relation, loose, eps=eps, max_iters=max_iters
        )
        gap = eps if converged else float("nan")
    else:
        raise ValueError(f"unknown backend {backend!r}")

    best_x = strict(best_x)
    u = np.array([float(x) for x in outcomes.utilities])
    for a, b in relation.pairs:
        if a != b and float((best_x[b] - best_x[a]) @ u) > TRUTHFUL_MARGINAL_TOL:
            raise SelfCheckError("solution violates marginal truthfulness")

    chain = interpret_marginals([list(map(float, best_x[i])) for i in range(n)])
    cost = chain_cost(chain, oracle)
    return SubmodularRandomizedSolution(
        chain, float(cost), cost, converged, gap, iterations, backend
    )


def _mutual_reach_classes(relation: ReportingRelation, n: int) -> list[list[int]]:
    """Groups of types that can mutually reach each other along the relation.

    Expected utilities are forced equal within such a group, so the truthful
    polytope is flat along the corresponding directions.
    """
    adj = [set() for _ in range(n)]
    for a, b in relation.pairs:
        if a != b:
            adj[a].add(b)
    reach = []
    for s in range(n):
        seen = {s}
        stack = [s]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        reach.append(seen)
    classes = []
    assigned = [False] * n
    for s in range(n):
        if assigned[s]:
            continue
        group = sorted(t for t in reach[s] if s in reach[t])
        for t in group:
            assigned[t] = True
        classes.append(group)
    return classes


def _ellipsoid_minimize(
    oracle: CostOracle,
    outcomes: OutcomeSpace,
    relation: ReportingRelation,
    project,
    eps: float,
    max_iters: int,
):
    """Central-cut ellipsoid over reduced profiles (last column eliminated).

    Mutually-reachable types force expected-utility equalities, which would
    leave the feasible set with empty interior; those directions are
    eliminated first and the ellipsoid runs in the remaining subspace.
    Feasibility cuts come from nonnegativity, row mass, and the dominance
    constraints; objective cuts from the peel subgradient.  Terminates once
    the localization certifies a value gap below ``eps``; the best projected
    center seen is returned.
    """
    n, m = oracle.type_count, oracle.outcome_count
    d = n * (m - 1)

    u = np.array([float(x) for x in outcomes.utilities])
    tail = u[:-1] - u[-1]

    constraints: list[tuple[np.ndarray, float]] = []  # w @ y <= b
    for i in range(n):
        for k in range(m - 1):
            w = np.zeros(d)
            w[i * (m - 1) + k] = -1.0
            constraints.append((w, 0.0))
        w = np.zeros(d)
        w[i * (m - 1): (i + 1) * (m - 1)] = 1.0
        constraints.append((w, 1.0))
    for a, b in sorted(relation.pairs):
        if a == b:
            continue
        w = np.zeros(d)
        w[a * (m - 1): (a + 1) * (m - 1)] = -tail
        w[b * (m - 1): (b + 1) * (m - 1)] = tail
        constraints.append((w, 0.0))

    equalities = []
    for group in _mutual_reach_classes(relation, n):
        for t in group[1:]:
            w = np.zeros(d)
            w[group[0] * (m - 1): (group[0] + 1) * (m - 1)] = tail
            w[t * (m - 1): (t + 1) * (m - 1)] = -tail
            equalities.append(w)

    y0 = np.full(d, 1.0 / m)  # uniform profile: feasible, satisfies equalities
    if equalities:
        emat = np.array(equalities)
        _, svals, vt = np.linalg.svd(emat, full_matrices=True)
        rank = int(np.sum(svals > 1e-10 * max(1.0, float(svals[0]))))
        basis = vt[rank:].T  # d x r, orthonormal null-space basis
    else:
        basis = np.eye(d)
    r = basis.shape[1]

    cons_z = []
    for w, b in constraints:
        wz = basis.T @ w
        rhs = b - float(w @ y0)
        if float(wz @ wz) > 1e-18:
            cons_z.append((wz, rhs))

    def expand(z: np.ndarray) -> np.ndarray:
        y = y0 + basis @ z
        p = np.empty((n, m))
        blocks = y.reshape(n, m - 1)
        p[:, : m - 1] = blocks
        p[:, m - 1] = 1.0 - blocks.sum(axis=1)
        return p

    best = None
    best_x = None
    iterations = 0

    def evaluate(z: np.ndarray):
        nonlocal best, best_x
        p_eval = project(np.clip(expand(z), 0.0, None))
        value, grad_p, _ = _peel_with_gradient(
            [list(map(float, p_eval[i])) for i in range(n)], oracle
        )
        if best is None or value < best:
            best = value
            best_x = p_eval.copy()
        return value, grad_p

    radius = math.sqrt(d)
    if r == 0:
        evaluate(np.zeros(0))
        return best_x, best, 1, True
    if r == 1:
        lo, hi = -radius, radius
        for wz, rhs in cons_z:
            w0 = float(wz[0])
            if w0 > 1e-12:
                hi = min(hi, rhs / w0)
            elif w0 < -1e-12:
                lo = max(lo, rhs / w0)
        if lo > hi:
            lo = hi = 0.0
        cache: dict[float, float] = {}

        def fval(z: float) -> float:
            if z not in cache:
                cache[z] = evaluate(np.array([z]))[0]
            return cache[z]

        while hi - lo > 1e-12:
            iterations += 1
            z1 = lo + (hi - lo) / 3.0
            z2 = hi - (hi - lo) / 3.0
            if fval(z1) <= fval(z2):
                hi = z2
            else:
                lo = z1
            if iterations >= max_iters:
                break
        fval((lo + hi) / 2.0)
        return best_x, best, max(iterations, 1), True

    center = np.zeros(r)
    shape = np.eye(r) * (radius * radius)
    for iterations in range(1, max_iters + 1):
        cut = None
        for wz, rhs in cons_z:
            if float(wz @ center) > rhs + 1e-12:
                cut = wz
                break
        value, grad_p = evaluate(center)
        if cut is None:
            g_full = np.array(grad_p)
            gy = (g_full[:, : m - 1] - g_full[:, m - 1:]).reshape(d)
            cut = basis.T @ gy
            if float(cut @ cut) <= 1e-18:
                return best_x, best, iterations, True
            # Value-gap certificate: the optimum lies inside the current
            # ellipsoid, so the objective spread along the cut bounds the gap.
            if math.sqrt(max(float(cut @ shape @ cut), 0.0)) <= 0.5 * eps:
                return best_x, best, iterations, True
        denom = float(cut @ shape @ cut)
        if denom <= 0 or not math.isfinite(denom):
            # Rank-one downdates along near-repeated cut directions can push
            # an eigenvalue of the shape matrix slightly negative; floor the
            # spectrum and carry on rather than losing the localization.
            eigvals, eigvecs = np.linalg.eigh((shape + shape.T) / 2.0)
            floor = max(float(eigvals[-1]), 1.0) * 1e-14
            shape = (eigvecs * np.maximum(eigvals, floor)) @ eigvecs.T
            denom = float(cut @ shape @ cut)
            if denom <= 0 or not math.isfinite(denom):
                break
        bvec = (shape @ cut) / math.sqrt(denom)
        center = center - bvec / (r + 1)
        shape = (r * r / (r * r - 1.0)) * (
            shape - (2.0 / (r + 1)) * np.outer(bvec, bvec)
        )
        shape = (shape + shape.T) / 2.0
        if float(np.max(np.diag(shape))) < (eps * 1e-3) ** 2:
            return best_x, best, iterations, True
    return best_x, best, iterations, False


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def oracle_from_json(payload: dict, instance: Instance) -> CostOracle:
    """Build a cost oracle from a JSON description.

    Kinds: ``additive`` (the instance's cost matrix), ``additive_plus_overhead``
    (adds ``c0`` whenever any type sits above the bottom outcome), ``table``
    (explicit value table in ``lattice_index`` order).
    """
    from .instances import cost_from_json, rational_from_json

    kind = payload.get("kind", "additive")
    if kind == "additive":
        return additive_oracle(instance)
    if kind == "additive_plus_overhead":
        from .generators import overhead_cost_oracle

        return overhead_cost_oracle(instance, rational_from_json(payload["c0"]))
    if kind == "table":
        values = [cost_from_json(v) for v in payload["values"]]
        return table_oracle(values, instance.type_count, instance.outcome_count)
    raise ValueError(f"unknown oracle kind {kind!r}")


def chain_to_json(dist: ChainDistribution) -> dict:
    from .instances import _probability_to_json

    return {
        "support": [
            {"vector": list(pt), "prob": _probability_to_json(p)}
            for pt, p in dist.items()
        ]
    }


def chain_from_json(obj: dict) -> ChainDistribution:
    from .instances import rational_from_json

    entries = []
    for item in obj["support"]:
        prob = item["prob"]
        entries.append(
            (
                tuple(int(x) for x in item["vector"]),
                prob if isinstance(prob, float) else rational_from_json(prob),
            )
        )
    dist = ChainDistribution(
        tuple(pt for pt, _ in entries), tuple(p for _, p in entries)
    )
    problems = chain_violations(dist)
    if problems:
        raise ValueError("; ".join(problems))
    return dist
