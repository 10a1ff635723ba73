"""Randomized solver via per-type lower convex envelopes.

Replacing each type's cost curve by its lower convex envelope turns the
randomized problem into a deterministic one: the cheapest truthful lottery
profile concentrates, per type, on the two hull vertices bracketing a target
utility, and costs exactly the envelope value there.  So the pipeline is:
envelope every row, solve the deterministic problem on envelope costs with
the cut solver, then expand each type's assigned target back into the
bracketing two-point lottery.

Also here: the two operations behind the "convex costs need no randomness"
argument — consolidating any truthful lottery profile onto two consecutive
outcomes per type without raising cost, and decomposing such a profile into
a threshold family of truthful deterministic mechanisms whose expected cost
matches exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .instances import (
    Cost,
    CostMatrix,
    DeterministicMechanism,
    Instance,
    OutcomeSpace,
    RandomizedMechanism,
    SelfCheckError,
    ZERO_COST,
    cost_deterministic,
    cost_randomized,
    expected_utility,
    hard_violations,
    is_truthful,
)
from .mincut import DeterministicSolution, solve_deterministic


@dataclass(frozen=True)
class EnvelopeRow:
    """Lower convex envelope of one cost row, sampled at every outcome.

    ``vertices`` lists outcome indices where the envelope bends strictly or
    ends; collinear interior points are deliberately not vertices.  Outcomes
    outside the finite range keep infinite envelope values.
    """

    vertices: tuple[int, ...]
    values: tuple


@dataclass(frozen=True)
class MixturePair:
    """A two-point lottery: probability ``alpha`` on outcome ``lower`` and
    ``1 - alpha`` on ``upper``."""

    type_index: int
    lower: int
    upper: int
    alpha: Fraction


@dataclass(frozen=True)
class RandomizedSolution:
    mechanism: RandomizedMechanism | None
    cost: Cost
    pairs: tuple = ()
    deterministic: DeterministicSolution | None = None


def pl_extension_value(cost_row, outcomes: OutcomeSpace, point) -> Cost:
    """The piecewise-linear extension of a cost row, evaluated off-grid.

    Between consecutive outcomes the cost interpolates linearly; an infinite
    endpoint makes the whole open segment infinite.  Exactly at an outcome
    the entry itself is returned, infinite neighbors notwithstanding.
    """
    x = Fraction(point)
    utilities = outcomes.utilities
    if x < utilities[0] or x > utilities[-1]:
        raise ValueError(f"{x} outside the outcome range")
    lo = 0
    hi = len(utilities) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if utilities[mid] <= x:
            lo = mid
        else:
            hi = mid - 1
    j = lo
    left = cost_row[j] if isinstance(cost_row[j], Cost) else Cost(cost_row[j])
    if utilities[j] == x:
        return left
    right = cost_row[j + 1] if isinstance(cost_row[j + 1], Cost) else Cost(cost_row[j + 1])
    if not (left.is_finite and right.is_finite):
        return Cost.infinite()
    span = utilities[j + 1] - utilities[j]
    slope = (right.value - left.value) / span
    return Cost(left.value + (x - utilities[j]) * slope)


def _row_convexity(row, utilities) -> bool:
    finite = [j for j, c in enumerate(row) if c.is_finite]
    if not finite:
        return True  # identically infinite: vacuously convex
    if finite[-1] - finite[0] + 1 != len(finite):
        return False  # a finite-infinite-finite sandwich breaks convexity
    slopes = []
    for a, b in zip(finite, finite[1:]):
        slopes.append((row[b].value - row[a].value) / (utilities[b] - utilities[a]))
    return all(s1 <= s2 for s1, s2 in zip(slopes, slopes[1:]))


def is_convex_cost(instance: Instance) -> tuple[bool, list[bool]]:
    """Whether each row's piecewise-linear extension is convex (and all)."""
    utilities = instance.outcomes.utilities
    per_type = [_row_convexity(row, utilities) for row in instance.costs.rows]
    return all(per_type), per_type


def convex_envelope(cost_row, outcomes: OutcomeSpace) -> EnvelopeRow:
    """Lower convex envelope of the finite points of one cost row.

    Hull vertices keep only strict slope increases, so collinear interior
    points are excluded.  All arithmetic is exact.
    """
    row = [c if isinstance(c, Cost) else Cost(c) for c in cost_row]
    utilities = outcomes.utilities
    points = [(utilities[j], row[j].value, j) for j in range(len(row)) if row[j].is_finite]
    if not points:
        raise ValueError("cost row has no finite entries")

    hull: list[tuple] = []
    for x, y, j in points:
        while len(hull) >= 2:
            x1, y1, _ = hull[-2]
            x2, y2, _ = hull[-1]
            # Pop the middle point unless the slope strictly increases there.
            if (y2 - y1) * (x - x2) >= (y - y2) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append((x, y, j))

    values = []
    seg = 0
    for j, u in enumerate(utilities):
        if u < hull[0][0] or u > hull[-1][0]:
            values.append(Cost.infinite())
            continue
        while seg + 1 < len(hull) and hull[seg + 1][0] <= u:
            seg += 1
        x1, y1, _ = hull[seg]
        if u == x1:
            values.append(Cost(y1))
            continue
        x2, y2, _ = hull[seg + 1]
        values.append(Cost(y1 + (y2 - y1) * (u - x1) / (x2 - x1)))
    return EnvelopeRow(tuple(j for _, _, j in hull), tuple(values))


def recover_mixture(
    envelope_row: EnvelopeRow, outcomes: OutcomeSpace, target, type_index: int = 0
) -> MixturePair:
    """Two hull vertices bracketing ``target`` utility, with the unique
    mixing weight whose expected utility is exactly ``target``."""
    t = Fraction(target)
    utilities = outcomes.utilities
    if t < utilities[0] or t > utilities[-1]:
        raise ValueError(f"target {t} outside the outcome range")
    lower = None
    upper = None
    for v in envelope_row.vertices:
        if utilities[v] <= t:
            lower = v
        if upper is None and utilities[v] >= t:
            upper = v
    if lower is None or upper is None:
        raise ValueError(
            f"target {t} not covered by the envelope's finite range"
        )
    if lower == upper:
        return MixturePair(type_index, lower, upper, Fraction(1))
    alpha = (utilities[upper] - t) / (utilities[upper] - utilities[lower])
    return MixturePair(type_index, lower, upper, alpha)


def envelope_table(instance: Instance) -> list[EnvelopeRow]:
    return [
        convex_envelope(row, instance.outcomes) for row in instance.costs.rows
    ]


def solve_randomized(instance: Instance) -> RandomizedSolution:
    """Cost-optimal truthful randomized mechanism, or an infinite verdict.

    Exact throughout: the returned lotteries are rational, and the reported
    cost equals the expected cost of the returned mechanism exactly.
    """
    problems = hard_violations(instance)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems))
    n, m = instance.type_count, instance.outcome_count
    utilities = instance.outcomes.utilities

    if any(not any(c.is_finite for c in row) for row in instance.costs.rows):
        return RandomizedSolution(None, Cost.infinite())

    if m == 1:
        mech = RandomizedMechanism.point_mass([0] * n, 1)
        cost = cost_randomized(mech, instance)
        pairs = tuple(MixturePair(i, 0, 0, Fraction(1)) for i in range(n))
        return RandomizedSolution(mech, cost, pairs)

    table = envelope_table(instance)
    relaxed = Instance(
        instance.outcomes,
        instance.relation,
        CostMatrix([row.values for row in table]),
    )
    det = solve_deterministic(relaxed)
    if det.mechanism is None:
        return RandomizedSolution(None, Cost.infinite(), deterministic=det)

    pairs = []
    rows = []
    for i in range(n):
        target = utilities[det.mechanism.assignment[i]]
        pair = recover_mixture(table[i], instance.outcomes, target, i)
        pairs.append(pair)
        row = [Fraction(0)] * m
        row[pair.lower] += pair.alpha
        row[pair.upper] += 1 - pair.alpha
        rows.append(row)
    mech = RandomizedMechanism(rows)

    if not is_truthful(mech, instance):
        raise SelfCheckError("randomized solution failed the truthfulness check")
    cost = cost_randomized(mech, instance)
    if cost != det.cost:
        raise SelfCheckError(
            f"mixture cost {cost} disagrees with envelope optimum {det.cost}"
        )
    return RandomizedSolution(mech, cost, tuple(pairs), det)


def _exact_rows(mech: RandomizedMechanism) -> list[list[Fraction]]:
    # Fraction(float) is exact, so this loses nothing for numeric inputs.
    return [[Fraction(p) for p in row] for row in mech.rows]


def consolidate_two_consecutive(
    mech: RandomizedMechanism, instance: Instance
) -> RandomizedMechanism:
    """Squeeze every row's support onto two consecutive outcomes.

    Requires convex costs.  Repeatedly replaces mass at the support edges by
    mass just above the bottom edge, preserving the row's expected utility
    exactly; with convex rows this never raises the expected cost.  Each
    step strictly shrinks the support spread, so at most ``m`` steps per row
    are needed.
    """
    overall, _ = is_convex_cost(instance)
    if not overall:
        raise ValueError("consolidation requires convex cost rows")
    utilities = instance.outcomes.utilities
    before_cost = cost_randomized(mech, instance)
    rows = _exact_rows(mech)

    for i, row in enumerate(rows):
        while True:
            support = [j for j, p in enumerate(row) if p > 0]
            if not support or support[-1] - support[0] <= 1:
                break
            j1, j2 = support[0], support[-1]
            j3 = j1 + 1
            o1, o2, o3 = utilities[j1], utilities[j2], utilities[j3]
            alpha = (o2 - o3) / (o2 - o1)  # o3 == alpha*o1 + (1-alpha)*o2
            p1, p2 = row[j1], row[j2]
            if p1 / alpha <= p2 / (1 - alpha):
                row[j1] = Fraction(0)
                row[j2] = p2 - (1 - alpha) * p1 / alpha
                row[j3] += p1 / alpha
            else:
                row[j2] = Fraction(0)
                row[j1] = p1 - alpha * p2 / (1 - alpha)
                row[j3] += p2 / (1 - alpha)

    result = RandomizedMechanism(rows)
    for i in range(instance.type_count):
        if expected_utility(result, instance.outcomes, i) != expected_utility(
            mech, instance.outcomes, i
        ):
            raise SelfCheckError(f"consolidation changed type {i}'s expected utility")
    after_cost = cost_randomized(result, instance)
    if after_cost > before_cost:
        raise SelfCheckError(
            f"consolidation raised cost from {before_cost} to {after_cost}"
        )
    return result


def threshold_round(
    mech: RandomizedMechanism, instance: Instance
) -> list[tuple]:
    """Decompose a two-consecutive-outcome lottery profile into weighted
    truthful deterministic mechanisms.

    With each type's upper-outcome mass as its threshold, a shared uniform
    draw rounds every type up or down simultaneously; the distinct outcomes
    of that draw form the returned ``[(mechanism, weight), ...]``.  The
    weighted cost reproduces the lottery profile's expected cost exactly,
    and every member is truthful.
    """
    if not is_truthful(mech, instance):
        raise ValueError("threshold rounding expects a truthful lottery profile")
    m = instance.outcome_count
    rows = _exact_rows(mech)
    bottoms = []
    upper_mass = []
    for i, row in enumerate(rows):
        support = [j for j, p in enumerate(row) if p > 0]
        if not support:
            raise ValueError(f"row {i} has no mass")
        if support[-1] - support[0] > 1:
            raise ValueError(
                f"row {i} is supported on non-consecutive outcomes {support}"
            )
        bottoms.append(support[0])
        alpha = row[support[0] + 1] if support[0] + 1 < m else Fraction(0)
        upper_mass.append(alpha)

    thresholds = sorted({a for a in upper_mass if a > 0} | {Fraction(1)})
    members = []
    previous = Fraction(0)
    for cutoff in thresholds:
        assignment = [
            bottoms[i] + 1 if upper_mass[i] >= cutoff else bottoms[i]
            for i in range(instance.type_count)
        ]
        member = DeterministicMechanism(assignment)
        if not is_truthful(member, instance):
            raise SelfCheckError("threshold rounding produced an untruthful member")
        members.append((member, cutoff - previous))
        previous = cutoff

    total_weight = sum(weight for _, weight in members)
    if total_weight != 1:
        raise SelfCheckError(f"rounding weights sum to {total_weight}, not 1")
    expected: Cost = ZERO_COST
    for member, weight in members:
        expected = expected + cost_deterministic(member, instance).scaled(weight)
    if expected != cost_randomized(mech, instance):
        raise SelfCheckError(
            "threshold rounding does not reproduce the lottery profile's cost"
        )
    return members
