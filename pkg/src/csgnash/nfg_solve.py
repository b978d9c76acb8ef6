"""Optimal Nash equilibria of finite normal form games.

The solver enumerates candidate supports (one non-empty action subset per
player), filters them with sound dominance arguments, and solves the
remaining ones: a profile with support B is a Nash equilibrium iff every
in-support action of a player yields the same utility against the others
and no out-of-support action yields more. Among all equilibria found, the
one maximising the sum of utilities (social welfare) is returned; the
social-cost variant negates the game first.

Supports whose feasible profiles are not pinned down by linear algebra or
a closed form are handled on the product of probability simplices by
multistart damped Gauss-Newton on the indifference equalities, with
penalty descent as the fallback for degenerate geometries.
"""

from __future__ import annotations

import itertools
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .games import MixedProfile, NormalFormGame

Joint = tuple[int, ...]


class NoEquilibriumError(RuntimeError):
    """The solver found no equilibrium candidate.

    Every finite game has a Nash equilibrium, so this signals a solver
    failure (or an inconclusive support in strict mode), never a property
    of the game itself.
    """


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and effort knobs for equilibrium search.

    feasibility_tol applies to utilities normalised to [0, 1]; welfare_tol
    is the tie window for comparing candidate welfare in original units;
    min_support_prob realises the strict positivity of in-support
    probabilities. strict_inconclusive turns iteration-capped supports
    into hard failures instead of logged skips.
    """

    feasibility_tol: float = 1e-8
    welfare_tol: float = 1e-6
    min_support_prob: float = 1e-6
    multistarts: int = 6
    max_iters: int = 150
    seed: int = 0
    strict_inconclusive: bool = False
    use_dominance: bool = True
    threads: int = 1


@dataclass(frozen=True)
class Support:
    """A candidate support: one non-empty, sorted action subset per player."""

    sets: tuple[tuple[int, ...], ...]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.sets)

    @property
    def is_pure(self) -> bool:
        return all(len(s) == 1 for s in self.sets)

    def masks(self) -> tuple[int, ...]:
        return tuple(sum(1 << a for a in s) for s in self.sets)

    def sort_key(self) -> tuple:
        return (sum(self.sizes), self.masks())


@dataclass
class EquilibriumCandidate:
    profile: MixedProfile
    values: np.ndarray
    welfare: float
    support: Support
    residual: float
    support_index: int = -1


@dataclass
class Removal:
    player: int
    action: int
    dominated_by: int
    round: int


@dataclass
class EquilibriumResult:
    values: np.ndarray
    profile: MixedProfile
    welfare: float
    support: Support
    regrets: np.ndarray
    removals: list[Removal]
    candidates: int
    pruned: int
    inconclusive: int


# ---------------------------------------------------------------------------
# Expected utilities and regret


def _contract_tensor(u: np.ndarray, probs: Sequence[np.ndarray], keep=()):
    """Contract all axes of `u` except those listed in `keep`.

    Kept axes stay in their original relative order. Walking axes from the
    last to the first keeps earlier axis numbers valid as axes disappear.
    """
    keep = set(keep)
    res = u
    for axis in range(len(probs) - 1, -1, -1):
        if axis in keep:
            continue
        res = np.tensordot(res, probs[axis], axes=([axis], [0]))
    return res


def expected_utility(game: NormalFormGame, profile: MixedProfile, player: int) -> float:
    """Expected utility of a player under a mixed profile: the utility of
    every joint action weighted by the product of the players' choice
    probabilities."""
    u = game.float_utilities()[..., player]
    return float(_contract_tensor(u, profile.probs))


def switch_values(game: NormalFormGame, profile: MixedProfile, player: int) -> np.ndarray:
    """Utility of each pure deviation of `player` with the others fixed."""
    u = game.float_utilities()[..., player]
    return np.asarray(_contract_tensor(u, profile.probs, keep=(player,)), dtype=np.float64)

def regret(game: NormalFormGame, profile: MixedProfile, player: int) -> float:
    """Best unilateral improvement available to `player`; zero at equilibrium.

    Best responses against fixed opponents are attained at pure actions
    because the expected utility is linear in the player's own strategy.
    """
    vec = switch_values(game, profile, player)
    return float(vec.max() - float(np.dot(vec, profile.probs[player])))


# ---------------------------------------------------------------------------
# Dominance filtering


def _strictly_dominates(
    game: NormalFormGame,
    player: int,
    better: int,
    worse: int,
    kept: Sequence[Sequence[int]],
) -> bool:
    others = [kept[j] for j in range(game.n_players) if j != player]
    for cell in itertools.product(*others):
        joint = list(cell)
        joint.insert(player, 0)
        joint_b = tuple(joint[:player] + [better] + joint[player + 1 :])
        joint_w = tuple(joint[:player] + [worse] + joint[player + 1 :])
        if not (game.utility(joint_b, player) > game.utility(joint_w, player)):
            return False
    return True


def filter_dominated(
    game: NormalFormGame,
) -> tuple[NormalFormGame, list[list[int]], list[Removal]]:
    """Iterated removal of strictly dominated pure actions.

    Returns the reduced game, the surviving original action indices per
    player, and the removal log in elimination order. Removal can never
    empty an action set: a dominated action implies a surviving dominator.
    """
    kept: list[list[int]] = [list(range(c)) for c in game.shape]
    removals: list[Removal] = []
    rnd = 0
    changed = True
    while changed:
        changed = False
        rnd += 1
        for i in range(game.n_players):
            for worse in list(kept[i]):
                dominator = None
                for better in kept[i]:
                    if better == worse:
                        continue
                    if _strictly_dominates(game, i, better, worse, kept):
                        dominator = better
                        break
                if dominator is not None:
                    kept[i].remove(worse)
                    removals.append(Removal(i, worse, dominator, rnd))
                    changed = True
    if not removals:
        return game, kept, removals
    names = [
        tuple(game.action_names[i][a] for a in kept[i]) for i in range(game.n_players)
    ]
    sub = game.utilities[np.ix_(*[kept[i] for i in range(game.n_players)])]
    reduced = NormalFormGame(names, sub)
    return reduced, kept, removals


# ---------------------------------------------------------------------------
# Support enumeration and presolve


def support_count(shape: Sequence[int]) -> int:
    total = 1
    for c in shape:
        total *= (1 << c) - 1
    return total


def enumerate_supports(game: NormalFormGame | Sequence[int]) -> list[Support]:
    """All supports in canonical order: ascending total size, then
    lexicographic per-player bitmasks, so pure supports come first."""
    shape = game.shape if isinstance(game, NormalFormGame) else tuple(game)
    per_player: list[list[tuple[int, ...]]] = []
    for c in shape:
        subsets = []
        for mask in range(1, 1 << c):
            subsets.append(tuple(a for a in range(c) if mask & (1 << a)))
        per_player.append(subsets)
    supports = [Support(combo) for combo in itertools.product(*per_player)]
    supports.sort(key=Support.sort_key)
    return supports


def check_pure_profile(game: NormalFormGame, joint: Joint) -> tuple[bool, tuple]:
    """Exact unilateral-deviation check for a pure profile.

    Uses the stored utility values directly, so rational inputs are
    compared without rounding. Returns (is_equilibrium, utility vector).
    """
    joint = tuple(joint)
    values = game.utility_vector(joint)
    for i in range(game.n_players):
        base = values[i]
        for a in range(game.shape[i]):
            if a == joint[i]:
                continue
            dev = joint[:i] + (a,) + joint[i + 1 :]
            if game.utility(dev, i) > base:
                return False, values
    return True, values


def presolve_support(game: NormalFormGame, support: Support) -> bool:
    """Sound necessary-condition filter; returns True to keep the support.

    Prunes only when no equilibrium with this support can exist: either
    some in-support action is strictly dominated by another in-support
    action on the opponents' support cells (indifference is impossible),
    or some out-of-support action strictly dominates every in-support
    action there (the no-profitable-deviation condition is impossible).
    Pure supports are always kept; they are checked exactly elsewhere.
    """
    if support.is_pure:
        return True
    n = game.n_players
    for i in range(n):
        b_i = support.sets[i]
        cells = [support.sets[j] for j in range(n) if j != i]

        def util(a: int, cell: tuple[int, ...]):
            joint = cell[:i] + (a,) + cell[i:]
            return game.utility(joint, i)

        opponent_cells = list(itertools.product(*cells))
        for worse in b_i:
            for better in b_i:
                if better == worse:
                    continue
                if all(util(better, c) > util(worse, c) for c in opponent_cells):
                    return False
        outside = [a for a in range(game.shape[i]) if a not in b_i]
        for a in outside:
            if all(
                all(util(a, c) > util(b, c) for c in opponent_cells) for b in b_i
            ):
                return False
    return True


# ---------------------------------------------------------------------------
# Per-support solving


@dataclass
class SupportSolution:
    status: str  # "candidate" | "infeasible" | "inconclusive"
    candidate: EquilibriumCandidate | None = None


def _normalised(game: NormalFormGame) -> tuple[np.ndarray, np.ndarray, float]:
    """Per-player shift to zero minimum plus one common positive scale.

    This keeps the equilibrium set and the welfare ordering intact while
    bounding utilities in [0, 1] so feasibility tolerances are meaningful.
    """
    floats = game.float_utilities()
    axes = tuple(range(floats.ndim - 1))
    mins = floats.min(axis=axes)
    ranges = floats.max(axis=axes) - mins
    scale = float(ranges.max())
    if scale <= 0.0:
        scale = 1.0
    return (floats - mins) / scale, mins, scale


def _candidate_from_probs(
    game: NormalFormGame, support: Support, probs: list[np.ndarray], residual: float
) -> EquilibriumCandidate:
    full = []
    for i, p in enumerate(probs):
        vec = np.zeros(game.shape[i])
        vec[list(support.sets[i])] = np.clip(p, 0.0, None)
        vec /= vec.sum()
        full.append(vec)
    profile = MixedProfile(full)
    values = np.array(
        [expected_utility(game, profile, i) for i in range(game.n_players)]
    )
    return EquilibriumCandidate(
        profile=profile,
        values=values,
        welfare=float(values.sum()),
        support=support,
        residual=residual,
    )


def _solve_pure(game: NormalFormGame, support: Support) -> SupportSolution:
    joint = tuple(s[0] for s in support.sets)
    ok, _values = check_pure_profile(game, joint)
    if not ok:
        return SupportSolution("infeasible")
    probs = [np.array([1.0]) for _ in support.sets]
    return SupportSolution("candidate", _candidate_from_probs(game, support, probs, 0.0))


def _solve_one_mixer(
    game: NormalFormGame, support: Support, cfg: SolverConfig, norm: np.ndarray
) -> SupportSolution:
    """Support where exactly one player mixes: the equilibrium region is a
    polytope and welfare is linear over it, so this is a linear program."""
    n = game.n_players
    mixer = next(i for i in range(n) if len(support.sets[i]) > 1)
    b_m = list(support.sets[mixer])
    fixed = [support.sets[j][0] for j in range(n)]

    def cell(player_action: int, axis: int) -> Joint:
        joint = list(fixed)
        joint[axis] = player_action
        return tuple(joint)

    def mixer_cell(m_action: int, axis_action: int, axis: int) -> Joint:
        joint = list(fixed)
        joint[mixer] = m_action
        joint[axis] = axis_action
        return tuple(joint)

    tol = cfg.feasibility_tol
    # The mixer faces constant utilities, so indifference and deviation
    # conditions are direct comparisons.
    mix_utils = [norm[cell(b, mixer) + (mixer,)] for b in b_m]
    if max(mix_utils) - min(mix_utils) > tol:
        return SupportSolution("infeasible")
    pivot_util = mix_utils[0]
    for a in range(game.shape[mixer]):
        if a in b_m:
            continue
        if norm[cell(a, mixer) + (mixer,)] > pivot_util + tol:
            return SupportSolution("infeasible")
    # Other players' deviation conditions are linear in the mixer's
    # probabilities, as is welfare.
    k = len(b_m)
    rows = []
    for j in range(n):
        if j == mixer:
            continue
        b_j = fixed[j]
        for a in range(game.shape[j]):
            if a == b_j:
                continue
            row = [
                norm[mixer_cell(b, b_j, j) + (j,)] - norm[mixer_cell(b, a, j) + (j,)]
                for b in b_m
            ]
            rows.append(row)
    welfare_row = np.array(
        [sum(norm[cell(b, mixer) + (l,)] for l in range(n)) for b in b_m]
    )
    lo = cfg.min_support_prob
    if rows:
        a_ub = -np.array(rows, dtype=np.float64)
        b_ub = np.full(len(rows), tol)
    else:
        a_ub, b_ub = None, None
    res = linprog(
        -welfare_row,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=np.ones((1, k)),
        b_eq=np.array([1.0]),
        bounds=[(lo, 1.0)] * k,
        method="highs",
    )
    if not res.success:
        return SupportSolution("infeasible")
    probs = [
        np.asarray(res.x, dtype=np.float64) if j == mixer else np.array([1.0])
        for j in range(n)
    ]
    residual = float(max(mix_utils) - min(mix_utils))
    return SupportSolution(
        "candidate", _candidate_from_probs(game, support, probs, residual)
    )


def _restricted(norm: np.ndarray, support: Support, player: int) -> np.ndarray:
    """Player's normalised utilities over the support cells (own axis full)."""
    n = len(support.sets)
    idx = [
        list(range(norm.shape[i])) if i == player else list(support.sets[i])
        for i in range(n)
    ]
    return norm[np.ix_(*idx)][..., player]


def _support_block(norm: np.ndarray, support: Support) -> np.ndarray:
    idx = [list(s) for s in support.sets]
    return norm[np.ix_(*idx)]


def _switch_on_support(
    table: np.ndarray, probs: Sequence[np.ndarray], axis: int
) -> np.ndarray:
    """Deviation utilities along `axis`, mixing the other axes with `probs`."""
    return np.asarray(_contract_tensor(table, probs, keep=(axis,)), dtype=np.float64)


def _solve_two_mixers(
    game: NormalFormGame, support: Support, cfg: SolverConfig, norm: np.ndarray
) -> SupportSolution | None:
    """Two mixing players: each one's indifference system is linear in the
    other's probabilities. Unique solutions are verified directly; rank
    deficient systems fall through to the descent solver (None)."""
    n = game.n_players
    mixers = [i for i in range(n) if len(support.sets[i]) > 1]
    i, j = mixers
    tol = cfg.feasibility_tol
    singles = [np.array([1.0]) for _ in range(n)]

    def solve_block(active: int, other: int) -> np.ndarray | None:
        # Indifference of `active` pins down `other`'s probabilities.
        table = _restricted(norm, support, active)
        b_a = list(support.sets[active])
        full_probs: list[np.ndarray] = []
        for axis in range(n):
            if axis == other:
                full_probs.append(np.zeros(len(support.sets[other])))
            elif axis == active:
                full_probs.append(np.zeros(table.shape[axis]))
            else:
                full_probs.append(singles[axis])
        rows = []
        k = len(support.sets[other])
        for b in b_a[1:]:
            coeffs = np.zeros(k)
            for c in range(k):
                probe = [p.copy() for p in full_probs]
                probe[other] = np.eye(k)[c]
                vec = _switch_on_support(table, probe, active)
                coeffs[c] = vec[b_a[0]] - vec[b]
            rows.append(coeffs)
        a_mat = np.vstack([np.array(rows), np.ones((1, k))]) if rows else np.ones((1, k))
        b_vec = np.concatenate([np.zeros(len(rows)), [1.0]])
        sol, _res, rank, _sv = np.linalg.lstsq(a_mat, b_vec, rcond=None)
        if rank < k:
            return None
        if np.max(np.abs(a_mat @ sol - b_vec)) > 1e-9:
            return None  # inconsistent system: no indifferent point exists
        return sol

    p_j = solve_block(i, j)
    p_i = solve_block(j, i)
    if p_j is None or p_i is None:
        return None
    lo = cfg.min_support_prob
    if np.any(p_i < lo - 1e-12) or np.any(p_j < lo - 1e-12):
        return SupportSolution("infeasible")
    probs = []
    for axis in range(n):
        if axis == i:
            probs.append(np.clip(p_i, 0.0, None))
        elif axis == j:
            probs.append(np.clip(p_j, 0.0, None))
        else:
            probs.append(singles[axis])
    residual = _max_violation(norm, support, probs, game)
    if residual > tol:
        # The indifferent point is unique, so its infeasibility rules the
        # support out entirely.
        return SupportSolution("infeasible")
    return SupportSolution(
        "candidate", _candidate_from_probs(game, support, probs, residual)
    )


def _solve_three_binary_mixers(
    game: NormalFormGame, support: Support, cfg: SolverConfig, norm: np.ndarray
) -> SupportSolution | None:
    """Exactly three mixing players with two support actions each.

    Each mixer's indifference gap is bilinear in the other two mixers'
    pivot probabilities, so chaining two substitutions leaves a quadratic
    in one variable: the equilibrium points are available in closed form.
    Returns None on degenerate coefficient patterns (continua etc.).
    """
    n = game.n_players
    mixers = [i for i in range(n) if len(support.sets[i]) > 1]
    i, j, k = mixers
    tol = cfg.feasibility_tol
    lo = cfg.min_support_prob

    def blocks_for(x_i: float, x_j: float, x_k: float) -> list[np.ndarray]:
        blocks = []
        for axis in range(n):
            if axis == i:
                blocks.append(np.array([x_i, 1.0 - x_i]))
            elif axis == j:
                blocks.append(np.array([x_j, 1.0 - x_j]))
            elif axis == k:
                blocks.append(np.array([x_k, 1.0 - x_k]))
            else:
                blocks.append(np.array([1.0]))
        return blocks

    tables = {m: _restricted(norm, support, m) for m in mixers}

    def gap(m: int, x_i: float, x_j: float, x_k: float) -> float:
        vec = _switch_on_support(tables[m], blocks_for(x_i, x_j, x_k), m)
        b = support.sets[m]
        return float(vec[b[0]] - vec[b[1]])

    # Bilinear coefficients of each mixer's gap in the other two variables:
    # g(x, y) = A + B x + C y + D xy, probed at the four corners.
    def coeffs(m: int, var1: int, var2: int):
        def at(x, y):
            args = {i: 0.0, j: 0.0, k: 0.0, m: 0.0}
            args[var1] = x
            args[var2] = y
            return gap(m, args[i], args[j], args[k])

        a = at(0.0, 0.0)
        b = at(1.0, 0.0) - a
        c = at(0.0, 1.0) - a
        d = at(1.0, 1.0) - a - b - c
        return a, b, c, d

    # g_i(x_j, x_k) = 0, g_j(x_i, x_k) = 0, g_k(x_i, x_j) = 0.
    ai, bi, ci, di = coeffs(i, j, k)
    aj, bj, cj, dj = coeffs(j, i, k)
    ak, bk, ck, dk = coeffs(k, i, j)
    # Substitute x_k = -(ai + bi x_j) / (ci + di x_j) into g_j, leaving a
    # bilinear relation between x_i and x_j, then x_i = möbius(x_j); the
    # last equation becomes a quadratic in x_j.
    # g_j: aj + bj x_i + (cj + dj x_i) x_k = 0
    # -> aj (ci + di x_j) - cj (ai + bi x_j)
    #    + x_i [ bj (ci + di x_j) - dj (ai + bi x_j) ] = 0
    alpha0 = aj * ci - cj * ai
    alpha1 = aj * di - cj * bi
    beta0 = bj * ci - dj * ai
    beta1 = bj * di - dj * bi
    # x_i = -(alpha0 + alpha1 x_j) / (beta0 + beta1 x_j)
    # g_k: ak + ck x_j + x_i (bk + dk x_j) = 0
    # -> (ak + ck x_j)(beta0 + beta1 x_j) - (bk + dk x_j)(alpha0 + alpha1 x_j) = 0
    q2 = ck * beta1 - dk * alpha1
    q1 = ak * beta1 + ck * beta0 - bk * alpha1 - dk * alpha0
    q0 = ak * beta0 - bk * alpha0
    scale = max(abs(q0), abs(q1), abs(q2), 1e-30)
    roots: list[float]
    if abs(q2) / scale < 1e-12:
        if abs(q1) / scale < 1e-12:
            return None  # degenerate: a continuum or inconsistent chain
        roots = [-q0 / q1]
    else:
        disc = q1 * q1 - 4.0 * q2 * q0
        if disc < 0:
            roots = []
        else:
            sq = float(np.sqrt(disc))
            roots = [(-q1 - sq) / (2 * q2), (-q1 + sq) / (2 * q2)]
    best: EquilibriumCandidate | None = None
    degenerate = False
    for x_j in roots:
        den_i = beta0 + beta1 * x_j
        den_k = ci + di * x_j
        if abs(den_i) < 1e-12 or abs(den_k) < 1e-12:
            degenerate = True
            continue
        x_i = -(alpha0 + alpha1 * x_j) / den_i
        x_k = -(ai + bi * x_j) / den_k
        point = (x_i, x_j, x_k)
        if any(not (lo - 1e-12 <= v <= 1.0 - lo + 1e-12) for v in point):
            continue
        blocks = [b for b in blocks_for(*point)]
        support_blocks = [blocks[axis] for axis in range(n)]
        residual = _max_violation(norm, support, support_blocks, game)
        if residual <= tol:
            cand = _candidate_from_probs(game, support, support_blocks, residual)
            if best is None or cand.welfare > best.welfare:
                best = cand
    if best is not None:
        return SupportSolution("candidate", best)
    if degenerate:
        return None
    return SupportSolution("infeasible")


def _max_violation(
    norm: np.ndarray,
    support: Support,
    probs: Sequence[np.ndarray],
    game: NormalFormGame,
) -> float:
    """Largest equilibrium-condition violation at a support-space point."""
    n = game.n_players
    worst = 0.0
    for i in range(n):
        table = _restricted(norm, support, i)
        vec = _switch_on_support(table, probs, i)
        b_i = list(support.sets[i])
        pivot = vec[b_i[0]]
        for b in b_i[1:]:
            worst = max(worst, abs(pivot - vec[b]))
        for a in range(game.shape[i]):
            if a in b_i:
                continue
            worst = max(worst, float(vec[a] - pivot))
    return worst


def _project_simplex(v: np.ndarray, lo: float) -> np.ndarray:
    """Euclidean projection onto {p : p >= lo, sum p = 1}."""
    k = v.size
    if k == 1:
        return np.array([1.0])
    mass = 1.0 - k * lo
    u = np.sort(v - lo)[::-1]
    css = np.cumsum(u)
    rho = 0
    for jj in range(k):
        if u[jj] + (mass - css[jj]) / (jj + 1) > 0:
            rho = jj
    lam = (mass - css[rho]) / (rho + 1)
    return np.maximum(v - lo + lam, 0.0) + lo


class _DescentProblem:
    """Differentiable penalty formulation of the per-support program.

    Works in "support space": one probability block per player over its
    support actions, normalised utilities. Equality residuals are the
    pivot-vs-in-support indifference gaps; inequality residuals are the
    out-of-support deviation gains (violated when positive).
    """

    def __init__(self, game: NormalFormGame, support: Support, norm: np.ndarray):
        self.n = game.n_players
        self.support = support
        self.sizes = [len(s) for s in support.sets]
        self.shape = game.shape
        self.tables = [_restricted(norm, support, i) for i in range(self.n)]
        self.block = _support_block(norm, support)
        # eq_index[i] lists non-pivot in-support actions, ineq_index[i] the
        # out-of-support actions, both against pivot support.sets[i][0].
        self.eq_index = [list(support.sets[i][1:]) for i in range(self.n)]
        self.ineq_index = [
            [a for a in range(game.shape[i]) if a not in support.sets[i]]
            for i in range(self.n)
        ]

    def unpack(self, x: np.ndarray) -> list[np.ndarray]:
        out, ofs = [], 0
        for k in self.sizes:
            out.append(x[ofs : ofs + k])
            ofs += k
        return out

    def pack(self, blocks: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate(blocks)

    def _cross(self, i: int, j: int, blocks) -> np.ndarray:
        """d switch_i / d p_j as a (full A_i) x (support B_j) matrix."""
        mat = _contract_tensor(self.tables[i], blocks, keep=(i, j))
        if j < i:
            mat = np.asarray(mat).T
        return np.asarray(mat, dtype=np.float64)

    def value(self, blocks, mu: float) -> float:
        """Objective value only (for line searches)."""
        n = self.n
        welfare = 0.0
        for l in range(n):
            welfare += float(_contract_tensor(self.block[..., l], blocks))
        pen = 0.0
        for i in range(n):
            vec = _switch_on_support(self.tables[i], blocks, i)
            pivot = self.support.sets[i][0]
            for b in self.eq_index[i]:
                g = float(vec[pivot] - vec[b])
                pen += g * g
            for a in self.ineq_index[i]:
                v = float(vec[a] - vec[pivot])
                if v > 0.0:
                    pen += v * v
        return -welfare + mu * pen

    def evaluate(self, blocks, mu: float) -> tuple[float, np.ndarray, float, float]:
        """Objective value, packed gradient, and residual magnitudes."""
        n = self.n
        vecs = [_switch_on_support(self.tables[i], blocks, i) for i in range(n)]
        cross = {
            (i, j): self._cross(i, j, blocks)
            for i in range(n)
            for j in range(n)
            if i != j
        }
        welfare = 0.0
        grad_w = [np.zeros(k) for k in self.sizes]
        for l in range(n):
            welfare += float(_contract_tensor(self.block[..., l], blocks))
            for i in range(n):
                grad_w[i] += np.asarray(
                    _contract_tensor(self.block[..., l], blocks, keep=(i,)),
                    dtype=np.float64,
                )
        pen = 0.0
        grad_pen = [np.zeros(k) for k in self.sizes]
        eq_worst = 0.0
        ineq_worst = 0.0
        for i in range(n):
            pivot = self.support.sets[i][0]
            for b in self.eq_index[i]:
                g = float(vecs[i][pivot] - vecs[i][b])
                eq_worst = max(eq_worst, abs(g))
                pen += g * g
                for j in range(n):
                    if j == i:
                        continue
                    grad_pen[j] += 2.0 * g * (cross[(i, j)][pivot] - cross[(i, j)][b])
            for a in self.ineq_index[i]:
                v = float(vecs[i][a] - vecs[i][pivot])
                if v > ineq_worst:
                    ineq_worst = v
                if v > 0.0:
                    pen += v * v
                    for j in range(n):
                        if j == i:
                            continue
                        grad_pen[j] += 2.0 * v * (
                            cross[(i, j)][a] - cross[(i, j)][pivot]
                        )
        f = -welfare + mu * pen
        grad = self.pack(
            [-gw + mu * gp for gw, gp in zip(grad_w, grad_pen)]
        )
        return f, grad, eq_worst, ineq_worst

    def equality_system(self, blocks) -> tuple[np.ndarray, np.ndarray]:
        """Residual vector and Jacobian of the indifference equalities."""
        n = self.n
        vecs = [_switch_on_support(self.tables[i], blocks, i) for i in range(n)]
        rows = sum(len(e) for e in self.eq_index)
        total = sum(self.sizes)
        res = np.zeros(rows)
        jac = np.zeros((rows, total))
        offsets = np.cumsum([0] + self.sizes)
        r = 0
        for i in range(n):
            pivot = self.support.sets[i][0]
            for b in self.eq_index[i]:
                res[r] = vecs[i][pivot] - vecs[i][b]
                for j in range(n):
                    if j == i:
                        continue
                    mat = self._cross(i, j, blocks)
                    jac[r, offsets[j] : offsets[j + 1]] = mat[pivot] - mat[b]
                r += 1
        return res, jac


def _solve_descent(
    game: NormalFormGame, support: Support, cfg: SolverConfig, norm: np.ndarray
) -> SupportSolution:
    """Multistart search over the product of support simplices.

    Each start (the support centroid plus deterministically seeded random
    points) first runs damped Gauss-Newton on the indifference equalities,
    which pins down the generically isolated equilibrium points in a few
    steps. Starts that stall fall back to penalty descent on the negated
    welfare plus squared constraint violations, then re-polish. Feasible
    points are compared by welfare; the objective thereby selects the
    welfare-optimal equilibrium among the points found.
    """
    problem = _DescentProblem(game, support, norm)
    tol = cfg.feasibility_tol
    lo = cfg.min_support_prob
    sizes = problem.sizes

    def project(x: np.ndarray) -> np.ndarray:
        return problem.pack([_project_simplex(b, lo) for b in problem.unpack(x)])

    def polish(x: np.ndarray) -> np.ndarray:
        stalls = 0
        for it in range(60):
            res, jac = problem.equality_system(problem.unpack(x))
            if res.size == 0 or np.max(np.abs(res)) < 1e-14:
                break
            step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
            scale = 1.0
            improved = False
            base = np.max(np.abs(res))
            while scale > 1e-6:
                cand = project(x + scale * step)
                new_res, _ = problem.equality_system(problem.unpack(cand))
                if np.max(np.abs(new_res)) < base:
                    x = cand
                    improved = True
                    stalls = stalls + 1 if np.max(np.abs(new_res)) > 0.5 * base else 0
                    break
                scale *= 0.5
            if not improved or (it >= 6 and stalls >= 4):
                # Slow linear progress after several sweeps means the
                # equalities have no regular solution near this start.
                break
        return x

    def try_accept(x: np.ndarray) -> EquilibriumCandidate | None:
        blocks = problem.unpack(x)
        residual = _max_violation(norm, support, blocks, game)
        if residual <= tol and all(np.all(b >= lo - 1e-12) for b in blocks):
            return _candidate_from_probs(game, support, blocks, residual)
        return None

    rng_seed = cfg.seed ^ zlib.crc32(repr(support.sets).encode())
    rng = np.random.default_rng(rng_seed)
    starts = [problem.pack([np.full(k, 1.0 / k) for k in sizes])]
    for _ in range(max(cfg.multistarts - 1, 0)):
        starts.append(problem.pack([rng.dirichlet(np.ones(k)) for k in sizes]))

    best: EquilibriumCandidate | None = None
    capped = False
    for start_idx, x0 in enumerate(starts):
        x = polish(project(x0))
        cand = try_accept(x)
        if cand is None and start_idx == 0:
            # Penalty fallback for degenerate cases the equality solve
            # cannot crack (equilibrium continua, boundary-hugging
            # solutions). Those are global objects, so one descent from
            # the centroid suffices; isolated points are the multistart
            # Gauss-Newton's job.
            converged = False
            for mu in (1e3, 1e6):
                step = 0.25
                for _ in range(cfg.max_iters):
                    f0, grad, _, _ = problem.evaluate(problem.unpack(x), mu)
                    moved = False
                    x_new = x
                    while step > 1e-13:
                        x_new = project(x - step * grad)
                        if problem.value(problem.unpack(x_new), mu) < f0 - 1e-14:
                            moved = True
                            break
                        step *= 0.5
                    if not moved:
                        converged = True
                        break
                    if np.max(np.abs(x_new - x)) < 1e-12:
                        x = x_new
                        converged = True
                        break
                    x = x_new
                    step = min(step * 2.0, 0.25)
                else:
                    converged = False
            if not converged:
                capped = True
            x = polish(x)
            cand = try_accept(x)
        if cand is not None and (best is None or cand.welfare > best.welfare):
            best = cand
    if best is not None:
        return SupportSolution("candidate", best)
    return SupportSolution("inconclusive" if capped else "infeasible")


def solve_support(
    game: NormalFormGame, support: Support, cfg: SolverConfig | None = None
) -> SupportSolution:
    """Search the given support for an equilibrium, welfare-optimal there.

    Pure supports are checked exactly; supports with one or two mixing
    players reduce to linear algebra; the rest go through penalty descent.
    The returned status separates proven infeasibility from iteration-cap
    "inconclusive" outcomes.
    """
    cfg = cfg or SolverConfig()
    if support.is_pure:
        return _solve_pure(game, support)
    norm, _, _ = _normalised(game)
    mixer_sizes = [len(s) for s in support.sets if len(s) > 1]
    if len(mixer_sizes) == 1:
        return _solve_one_mixer(game, support, cfg, norm)
    if len(mixer_sizes) == 2:
        out = _solve_two_mixers(game, support, cfg, norm)
        if out is not None:
            return out
    elif mixer_sizes == [2, 2, 2]:
        out = _solve_three_binary_mixers(game, support, cfg, norm)
        if out is not None:
            return out
    return _solve_descent(game, support, cfg, norm)


# ---------------------------------------------------------------------------
# Top-level search


def _constant_per_player(game: NormalFormGame) -> bool:
    floats = game.float_utilities()
    axes = tuple(range(floats.ndim - 1))
    return bool(np.all(floats.max(axis=axes) == floats.min(axis=axes)))


def _single_chooser_fast_path(
    game: NormalFormGame, cfg: SolverConfig
) -> EquilibriumResult | None:
    """Games where at most one player has more than one action.

    Every strategy of the chooser that maximises its own constant-per-cell
    utility is an equilibrium; welfare is linear over those mixtures, so a
    pure argmax action is welfare-optimal. Ties fall to the lowest action
    index, matching the canonical candidate order of the general search.
    """
    choosers = [i for i, c in enumerate(game.shape) if c > 1]
    if len(choosers) > 1:
        return None
    floats = game.float_utilities()
    if not choosers:
        joint = (0,) * game.n_players
        values = floats[joint]
        profile = MixedProfile([np.array([1.0])] * game.n_players)
        support = Support(tuple((0,) for _ in range(game.n_players)))
        regrets = np.zeros(game.n_players)
        return EquilibriumResult(
            values=np.array(values, dtype=np.float64),
            profile=profile,
            welfare=float(values.sum()),
            support=support,
            regrets=regrets,
            removals=[],
            candidates=1,
            pruned=0,
            inconclusive=0,
        )
    i = choosers[0]
    fixed = [0] * game.n_players

    def cell(a: int) -> Joint:
        joint = list(fixed)
        joint[i] = a
        return tuple(joint)

    own = np.array([floats[cell(a) + (i,)] for a in range(game.shape[i])])
    best_own = own.max()
    argmax = [a for a in range(game.shape[i]) if own[a] == best_own]
    welfare = np.array([float(floats[cell(a)].sum()) for a in argmax])
    best_w = welfare.max()
    pick = next(
        a for a, w in zip(argmax, welfare) if w >= best_w - cfg.welfare_tol
    )
    values = floats[cell(pick)]
    probs = []
    for j in range(game.n_players):
        vec = np.zeros(game.shape[j])
        vec[pick if j == i else 0] = 1.0
        probs.append(vec)
    profile = MixedProfile(probs)
    support = Support(tuple((pick,) if j == i else (0,) for j in range(game.n_players)))
    regrets = np.array([regret(game, profile, j) for j in range(game.n_players)])
    return EquilibriumResult(
        values=np.array(values, dtype=np.float64),
        profile=profile,
        welfare=float(values.sum()),
        support=support,
        regrets=regrets,
        removals=[],
        candidates=len(argmax),
        pruned=0,
        inconclusive=0,
    )


def swne(game: NormalFormGame, cfg: SolverConfig | None = None) -> EquilibriumResult:
    """Social-welfare optimal Nash equilibrium of a finite game.

    Dominated actions are removed first, the reduced game's supports are
    enumerated in canonical order, pruned by the presolve filter and
    solved; the maximal-welfare candidate wins, with ties inside the
    welfare tolerance broken by canonical support order and then by
    lexicographic profile order. Raises NoEquilibriumError when nothing is
    found, which indicates solver failure rather than a game property.
    """
    cfg = cfg or SolverConfig()
    fast = _single_chooser_fast_path(game, cfg)
    if fast is not None:
        return fast
    if cfg.use_dominance:
        reduced, kept, removals = filter_dominated(game)
    else:
        reduced, kept, removals = game, [list(range(c)) for c in game.shape], []
    supports = enumerate_supports(reduced)
    keep_mask = [presolve_support(reduced, s) for s in supports]
    pruned = sum(1 for k in keep_mask if not k)

    candidates: list[EquilibriumCandidate] = []
    inconclusive = 0

    # Phase 1: pure supports, checked exactly. Their best welfare gives a
    # sound bar for phase 2: expected welfare under any mixed profile is a
    # convex combination of its support cells' welfare, so a support whose
    # best cell cannot beat the bar by more than the tie tolerance can
    # never displace the (canonically earlier) pure candidate.
    floats = reduced.float_utilities()
    cell_welfare = floats.sum(axis=-1)
    best_pure = -np.inf
    mixed_todo: list[tuple[int, Support]] = []
    for idx, (support, keep) in enumerate(zip(supports, keep_mask)):
        if not keep:
            continue
        if support.is_pure:
            outcome = _solve_pure(reduced, support)
            if outcome.status == "candidate":
                outcome.candidate.support_index = idx
                candidates.append(outcome.candidate)
                best_pure = max(best_pure, outcome.candidate.welfare)
        else:
            mixed_todo.append((idx, support))
    todo = []
    for idx, support in mixed_todo:
        upper = float(cell_welfare[np.ix_(*support.sets)].max())
        if upper <= best_pure + cfg.welfare_tol:
            pruned += 1
            continue
        todo.append((idx, support))

    def run(item):
        _idx, support = item
        return solve_support(reduced, support, cfg)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            outcomes = list(pool.map(run, todo))
    else:
        outcomes = [run(item) for item in todo]

    for (idx, _support), outcome in zip(todo, outcomes):
        if outcome.status == "candidate":
            outcome.candidate.support_index = idx
            candidates.append(outcome.candidate)
        elif outcome.status == "inconclusive":
            inconclusive += 1
    if inconclusive and cfg.strict_inconclusive:
        raise NoEquilibriumError(
            f"{inconclusive} supports hit the iteration cap in strict mode"
        )
    if not candidates:
        raise NoEquilibriumError("no equilibrium found: solver failure")
    best_welfare = max(c.welfare for c in candidates)
    tied = [c for c in candidates if c.welfare >= best_welfare - cfg.welfare_tol]
    tied.sort(
        key=lambda c: (c.support_index, tuple(np.concatenate(c.profile.probs)))
    )
    chosen = tied[0]
    # Lift the profile back over any removed (dominated) actions.
    probs = []
    for i in range(game.n_players):
        vec = np.zeros(game.shape[i])
        for local, original in enumerate(kept[i]):
            vec[original] = chosen.profile.probs[i][local]
        probs.append(vec)
    profile = MixedProfile(probs)
    support = Support(
        tuple(
            tuple(kept[i][a] for a in chosen.support.sets[i])
            for i in range(game.n_players)
        )
    )
    values = np.array([expected_utility(game, profile, i) for i in range(game.n_players)])
    regrets = np.array([regret(game, profile, i) for i in range(game.n_players)])
    return EquilibriumResult(
        values=values,
        profile=profile,
        welfare=float(values.sum()),
        support=support,
        regrets=regrets,
        removals=removals,
        candidates=len(candidates),
        pruned=pruned,
        inconclusive=inconclusive,
    )


def scne(game: NormalFormGame, cfg: SolverConfig | None = None) -> EquilibriumResult:
    """Social-cost optimal Nash equilibrium: the welfare-optimal
    equilibrium of the negated game, reported in original (cost) units."""
    negated = game.negated()
    res = swne(negated, cfg)
    values = -res.values
    return EquilibriumResult(
        values=values,
        profile=res.profile,
        welfare=float(values.sum()),
        support=res.support,
        regrets=res.regrets,
        removals=res.removals,
        candidates=res.candidates,
        pruned=res.pruned,
        inconclusive=res.inconclusive,
    )
