"""Qualitative reachability analyses on the pooled single-controller view.

These graph fixpoints answer sure/never reachability questions that hold
under every strategy profile: pooling all joint actions into one
controller is exact for such qualitative queries because a deterministic
pooled choice is itself a product of per-player deterministic choices.
"""

from __future__ import annotations

from .games import PooledProcess


def _can_stay_within(pooled: PooledProcess, allowed: set[int], s: int) -> bool:
    for _joint, succs, probs in pooled.choices[s]:
        if all(int(t) in allowed for t, p in zip(succs, probs) if p > 0):
            return True
    return False


def min_reach_certain(
    pooled: PooledProcess, good: frozenset[int], bad: frozenset[int] = frozenset()
) -> tuple[frozenset[int], frozenset[int]]:
    """States from which `good` is reached with probability 1 no matter how
    the controller plays, treating `bad` states as absorbing failures.

    Returns (certain states, violating states). A state violates exactly
    when some choice sequence reaches, with positive probability while
    avoiding `good`, a region the controller can keep forever good-free
    (the union of end components avoiding the target).
    """
    n = pooled.n_states
    # Greatest fixpoint: states where the controller can avoid `good` forever.
    z = set(range(n)) - set(good)
    while True:
        keep = {
            s
            for s in z
            if s in bad or _can_stay_within(pooled, z, s)
        }
        if keep == z:
            break
        z = keep
    # Least fixpoint: states that can reach that region while avoiding good.
    y = set(z)
    frontier = True
    while frontier:
        frontier = False
        for s in range(n):
            if s in y or s in good:
                continue
            for _joint, succs, probs in pooled.choices[s]:
                if any(int(t) in y for t, p in zip(succs, probs) if p > 0):
                    y.add(s)
                    frontier = True
                    break
    return frozenset(range(n)) - frozenset(y), frozenset(y)


def max_reach_zero(
    pooled: PooledProcess, good: frozenset[int], bad: frozenset[int] = frozenset()
) -> frozenset[int]:
    """States from which no strategy reaches `good` with positive
    probability, with `bad` states absorbing."""
    reach = set(good)
    grew = True
    while grew:
        grew = False
        for s in range(pooled.n_states):
            if s in reach or s in bad:
                continue
            for _joint, succs, probs in pooled.choices[s]:
                if any(int(t) in reach for t, p in zip(succs, probs) if p > 0):
                    reach.add(s)
                    grew = True
                    break
    return frozenset(range(pooled.n_states)) - frozenset(reach)


def until_sure_states(
    pooled: PooledProcess, sat1: frozenset[int], sat2: frozenset[int]
) -> frozenset[int]:
    """States whose until value is exactly 1 under every profile."""
    bad = frozenset(range(pooled.n_states)) - sat1 - sat2
    certain, _ = min_reach_certain(pooled, sat2, bad)
    return certain


def until_zero_states(
    pooled: PooledProcess, sat1: frozenset[int], sat2: frozenset[int]
) -> frozenset[int]:
    """States whose until value is exactly 0 under every profile."""
    bad = frozenset(range(pooled.n_states)) - sat1 - sat2
    return max_reach_zero(pooled, sat2, bad)
