"""Equilibrium value computation over coalition games.

Finite-horizon objective sums are solved by backward induction on the
remaining step bound; infinite-horizon sums by value iteration. Both
recursions solve, at every reached (state, satisfied-set, failed-set)
triple, the one-shot game whose utilities combine decided components
(exactly 1 or 0 for probabilities, 0 for settled reward objectives) with
successor-weighted continuation values, taking welfare-optimal equilibrium
values (cost-optimal ones when minimising).
"""

from __future__ import annotations

import itertools
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
import numpy as np

from . import mdp
from .formulas import (
    FormulaError,
    NashFormula,
    StateFormula,
    sat_states,
)
from .games import Csg, NormalFormGame, build_coalition_game, single_controller_view
from .nfg_solve import SolverConfig, scne, swne
from .objectives import (
    CompiledObjectives,
    Mode,
    UnsupportedFormulaError,
    canonical_mode,
    compile_objectives,
    mode_closure,
    mode_decided,
)
from .strategies import StrategyKey, SynthesizedStrategy


class EngineError(RuntimeError):
    pass


class AssumptionViolation(EngineError):
    def __init__(self, report: "AssumptionReport"):
        super().__init__(str(report))
        self.report = report


class NotConverged(EngineError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"not converged: residual {residual:.3e} after {iterations} iterations"
        )
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class VIConfig:
    """Stopping rule for value iteration.

    The iteration stops once the sup-norm difference between consecutive
    sweeps stays below `epsilon` for `stability_window` sweeps in a row.
    The residual sequence is convergent but need not shrink monotonically,
    hence the window.
    """

    epsilon: float = 1e-6
    stability_window: int = 2
    max_iters: int = 10_000


@dataclass(frozen=True)
class EngineConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    vi: VIConfig = field(default_factory=VIConfig)
    threads: int = 1


@dataclass
class AssumptionReport:
    """Outcome of the objective-settling check for infinite-horizon sums."""

    violations: list[tuple[int, frozenset[int]]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "stopping assumption holds"
        parts = []
        for l, states in self.violations:
            parts.append(
                f"objective {l + 1}: settlement not certain from states "
                f"{sorted(states)}"
            )
        return "; ".join(parts)


@dataclass
class ValueTable:
    """Computed equilibrium values per (state, D, E) triple."""

    entries: dict[tuple[int, Mode], np.ndarray]
    initial_mode: dict[int, Mode]
    iterations: int = 0
    converged: bool = True
    residual: float = 0.0

    def at_state(self, state: int) -> np.ndarray:
        return self.entries[(state, self.initial_mode[state])]


# ---------------------------------------------------------------------------
# Precompiled transition tables


@dataclass
class _StateTable:
    choice_sets: tuple[tuple[int, ...], ...]  # per coalition, local action ids
    choice_names: tuple[tuple[str, ...], ...]
    joints: list[tuple[int, ...]]  # joint actions (model action ids)
    shape: tuple[int, ...]
    succs: list[np.ndarray]
    probs: list[np.ndarray]
    action_rewards: list[np.ndarray]  # per joint, vector over objectives
    state_rewards: np.ndarray  # vector over objectives


class _Tables:
    def __init__(self, game: Csg, compiled: CompiledObjectives):
        self.game = game
        self.compiled = compiled
        rewards = []
        for obj in compiled.items:
            rewards.append(game.rewards[obj.reward] if obj.reward else None)
        self.states: list[_StateTable] = []
        for s in range(game.n_states):
            choice_sets = tuple(game.choices(s, i) for i in range(game.n_players))
            choice_names = tuple(
                tuple(game.action_name(i, a) for a in acts)
                for i, acts in enumerate(choice_sets)
            )
            joints = [tuple(j) for j in itertools.product(*choice_sets)]
            succs, probs, acts = [], [], []
            for joint in joints:
                dist = game.transitions[(s, joint)]
                succs.append(np.fromiter(dist.keys(), dtype=np.int64, count=len(dist)))
                probs.append(
                    np.fromiter(dist.values(), dtype=np.float64, count=len(dist))
                )
                acts.append(
                    np.array(
                        [
                            rew.action_reward(s, joint) if rew else 0.0
                            for rew in rewards
                        ]
                    )
                )
            self.states.append(
                _StateTable(
                    choice_sets=choice_sets,
                    choice_names=choice_names,
                    joints=joints,
                    shape=tuple(len(c) for c in choice_sets),
                    succs=succs,
                    probs=probs,
                    action_rewards=acts,
                    state_rewards=np.array(
                        [rew.state_reward(s) if rew else 0.0 for rew in rewards]
                    ),
                )
            )


def _solve_stage(
    utilities: np.ndarray,
    names: tuple[tuple[str, ...], ...],
    opt: str,
    cfg: SolverConfig,
) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
    """Equilibrium values and stage distributions of a one-shot game."""
    game = NormalFormGame(names, utilities)
    result = swne(game, cfg) if opt == "max" else scne(game, cfg)
    return result.values, result.profile.probs


# ---------------------------------------------------------------------------
# Assumption check


def check_stopping_assumption(
    game: Csg, compiled: CompiledObjectives
) -> AssumptionReport:
    """Verify that every objective settles with probability 1 under every
    profile: unbounded untils must reach states that decide them, and
    reachability rewards must reach their target, from all states.

    The check runs on the pooled single-controller view, where it amounts
    to the minimal reachability probability of the settling set being 1.
    """
    pooled = single_controller_view(game)
    report = AssumptionReport()
    for l, obj in enumerate(compiled.items):
        if obj.kind == "until" and obj.bound is None:
            target = obj.sat2 | obj.fail
        elif obj.kind == "reach":
            target = obj.sat2
        else:
            continue
        _certain, violating = mdp.min_reach_certain(pooled, target)
        if violating:
            report.violations.append((l, violating))
    return report


# ---------------------------------------------------------------------------
# Finite horizon: backward induction


def solve_finite_horizon(
    game: Csg, compiled: CompiledObjectives, cfg: EngineConfig | None = None
) -> tuple[ValueTable, SynthesizedStrategy]:
    """Backward induction over the remaining step bound.

    Level n holds the values of the objectives with every bound reduced by
    n; expired bounds contribute 0 (probabilistic expiry goes through the
    failed set E), an instantaneous bound hitting 0 contributes the current
    state reward, and live objectives weight the next level's values by the
    transition probabilities.
    """
    cfg = cfg or EngineConfig()
    tables = _Tables(game, compiled)
    m = compiled.m
    memo: dict[tuple[int, Mode, int], np.ndarray] = {}
    dists: dict[StrategyKey, tuple[np.ndarray, ...]] = {}
    depth_needed = compiled.max_bound + 10
    if sys.getrecursionlimit() < depth_needed * 3:
        sys.setrecursionlimit(depth_needed * 3 + 1000)

    def indicator(D: frozenset[int]) -> np.ndarray:
        vec = np.zeros(m)
        for l in D:
            vec[l] = 1.0
        return vec

    def canonical_dists(st: _StateTable) -> tuple[np.ndarray, ...]:
        out = []
        for acts in st.choice_sets:
            vec = np.zeros(len(acts))
            vec[0] = 1.0
            out.append(vec)
        return tuple(out)

    def value(s: int, D: frozenset[int], E: frozenset[int], n: int) -> np.ndarray:
        D, E = canonical_mode(compiled, s, D, E, step=n)
        key = (s, (D, E), n)
        if key in memo:
            return memo[key]
        st = tables.states[s]
        if compiled.kind == "prob" and len(D) + len(E) == m:
            vec = indicator(D)
            memo[key] = vec
            return vec
        live: list[int] = []
        consts = np.zeros(m)
        for l, obj in enumerate(compiled.items):
            if l in D:
                consts[l] = 1.0
                continue
            if l in E:
                continue
            remaining = (obj.bound or 0) - n
            if obj.kind in ("until", "next"):
                live.append(l)
            elif obj.kind == "instant":
                if remaining < 0:
                    consts[l] = 0.0
                elif remaining == 0:
                    consts[l] = st.state_rewards[l]
                else:
                    live.append(l)
            elif obj.kind == "cumulative":
                if remaining > 0:
                    live.append(l)
        if not live:
            vec = consts.copy()
            memo[key] = vec
            dists[(s, D, E, n)] = canonical_dists(st)
            return vec
        n_joints = len(st.joints)
        utilities = np.tile(consts, (n_joints, 1))
        for j in range(n_joints):
            succ_vals = np.array(
                [value(int(t), D, E, n + 1) for t in st.succs[j]]
            )
            for l in live:
                cont = float(np.dot(st.probs[j], succ_vals[:, l]))
                if compiled.items[l].kind == "cumulative":
                    utilities[j, l] = (
                        st.state_rewards[l] + st.action_rewards[j][l] + cont
                    )
                else:
                    utilities[j, l] = cont
        table = utilities.reshape(st.shape + (m,))
        values, profile = _solve_stage(table, st.choice_names, compiled.opt, cfg.solver)
        memo[key] = values
        dists[(s, D, E, n)] = profile
        return values

    entries: dict[tuple[int, Mode], np.ndarray] = {}
    initial_mode: dict[int, Mode] = {}
    for s in range(game.n_states):
        vec = value(s, frozenset(), frozenset(), 0)
        mode = canonical_mode(compiled, s, frozenset(), frozenset(), step=0)
        initial_mode[s] = mode
        entries[(s, mode)] = vec
    strategy = SynthesizedStrategy(
        kind="finite",
        horizon=compiled.max_bound,
        table=dists,
        choice_names={
            s: tables.states[s].choice_names for s in range(game.n_states)
        },
    )
    table = ValueTable(entries=entries, initial_mode=initial_mode)
    # Expose the full per-level memo for cross-checking.
    table.levels = memo  # type: ignore[attr-defined]
    return table, strategy


# ---------------------------------------------------------------------------
# Infinite horizon: value iteration


def solve_value_iteration(
    game: Csg,
    compiled: CompiledObjectives,
    cfg: EngineConfig | None = None,
    check_assumption: bool = True,
) -> tuple[ValueTable, SynthesizedStrategy]:
    """Value iteration for unbounded untils or reachability rewards.

    Decided components are pinned at their exact values; pending ones are
    updated each sweep from the welfare/cost-optimal equilibrium of the
    stage game built on the previous sweep's values. Raises NotConverged
    when the iteration cap is hit before the stopping rule fires.
    """
    cfg = cfg or EngineConfig()
    if check_assumption:
        report = check_stopping_assumption(game, compiled)
        if not report.ok:
            raise AssumptionViolation(report)
    tables = _Tables(game, compiled)
    m = compiled.m
    pairs, index = mode_closure(game, compiled)
    n_pairs = len(pairs)

    def decided(mode: Mode) -> bool:
        return mode_decided(compiled, mode)

    # Successor pair indices per (pair, joint); decided pairs are absorbing
    # boundaries during iteration.
    succ_pair_idx: list[list[np.ndarray]] = []
    for s, mode in pairs:
        st = tables.states[s]
        row = []
        if not decided(mode):
            D, E = mode
            for j in range(len(st.joints)):
                row.append(
                    np.array(
                        [
                            index[(int(t), canonical_mode(compiled, int(t), D, E))]
                            for t in st.succs[j]
                        ],
                        dtype=np.int64,
                    )
                )
        succ_pair_idx.append(row)

    values = np.zeros((n_pairs, m))
    for p, (s, (D, E)) in enumerate(pairs):
        for l in D:
            if compiled.kind == "prob":
                values[p, l] = 1.0

    pending_sets = []
    for s, (D, E) in pairs:
        pending_sets.append([l for l in range(m) if l not in D and l not in E])

    undecided = [p for p, (s, mode) in enumerate(pairs) if not decided(mode)]
    dists: dict[int, tuple[np.ndarray, ...]] = {}

    def sweep_pair(p: int, prev: np.ndarray):
        s, (D, E) = pairs[p]
        st = tables.states[s]
        n_joints = len(st.joints)
        utilities = np.zeros((n_joints, m))
        for l in D:
            utilities[:, l] = 1.0 if compiled.kind == "prob" else 0.0
        for j in range(n_joints):
            cont = prev[succ_pair_idx[p][j]]
            for l in pending_sets[p]:
                c = float(np.dot(st.probs[j], cont[:, l]))
                if compiled.items[l].kind == "reach":
                    utilities[j, l] = (
                        st.state_rewards[l] + st.action_rewards[j][l] + c
                    )
                else:
                    utilities[j, l] = c
        table = utilities.reshape(st.shape + (m,))
        return _solve_stage(table, st.choice_names, compiled.opt, cfg.solver)

    pool = (
        ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    )
    try:
        iterations = 0
        stable = 0
        residual = float("inf")
        converged = False
        while iterations < cfg.vi.max_iters:
            iterations += 1
            prev = values.copy()
            if pool is not None:
                results = list(
                    pool.map(lambda p: sweep_pair(p, prev), undecided)
                )
            else:
                results = [sweep_pair(p, prev) for p in undecided]
            for p, (vals, profile) in zip(undecided, results):
                values[p] = vals
                dists[p] = profile
            residual = float(np.max(np.abs(values - prev))) if n_pairs else 0.0
            stable = stable + 1 if residual < cfg.vi.epsilon else 0
            if stable >= cfg.vi.stability_window:
                converged = True
                break
        if not converged:
            raise NotConverged(residual, iterations)
    finally:
        if pool is not None:
            pool.shutdown()

    entries = {
        (s, mode): values[p].copy() for p, (s, mode) in enumerate(pairs)
    }
    initial_mode = {
        s: canonical_mode(compiled, s, frozenset(), frozenset())
        for s in range(game.n_states)
    }
    strategy_table: dict[StrategyKey, tuple[np.ndarray, ...]] = {}
    for p, (s, mode) in enumerate(pairs):
        if p in dists:
            profile = dists[p]
        else:
            st = tables.states[s]
            profile = tuple(
                np.eye(len(acts))[0] for acts in st.choice_sets
            )
        strategy_table[(s, mode[0], mode[1], None)] = profile
    strategy = SynthesizedStrategy(
        kind="memoryless",
        horizon=None,
        table=strategy_table,
        choice_names={s: tables.states[s].choice_names for s in range(game.n_states)},
    )
    table = ValueTable(
        entries=entries,
        initial_mode=initial_mode,
        iterations=iterations,
        converged=True,
        residual=residual,
    )
    return table, strategy


# ---------------------------------------------------------------------------
# Named entry points per objective family


def _expect_kinds(compiled: CompiledObjectives, kinds: set[str], horizon: str):
    seen = {obj.kind for obj in compiled.items}
    if not seen <= kinds or compiled.horizon != horizon:
        raise UnsupportedFormulaError(
            f"objective kinds {sorted(seen)} not supported by this solver"
        )


def solve_bounded_until(game, compiled, cfg=None):
    """Step-bounded probabilistic objectives (bounded untils and nexts)."""
    _expect_kinds(compiled, {"until", "next"}, "finite")
    return solve_finite_horizon(game, compiled, cfg)


def solve_instantaneous(game, compiled, cfg=None):
    """State rewards read at fixed time points."""
    _expect_kinds(compiled, {"instant"}, "finite")
    return solve_finite_horizon(game, compiled, cfg)


def solve_cumulative(game, compiled, cfg=None):
    """Rewards accumulated over bounded prefixes."""
    _expect_kinds(compiled, {"cumulative"}, "finite")
    return solve_finite_horizon(game, compiled, cfg)


def solve_until_vi(game, compiled, cfg=None, check_assumption=True):
    """Unbounded probabilistic untils via value iteration."""
    _expect_kinds(compiled, {"until"}, "infinite")
    return solve_value_iteration(game, compiled, cfg, check_assumption)


def solve_reach_reward_vi(game, compiled, cfg=None, check_assumption=True):
    """Expected rewards to reach targets via value iteration."""
    _expect_kinds(compiled, {"reach"}, "infinite")
    return solve_value_iteration(game, compiled, cfg, check_assumption)


# ---------------------------------------------------------------------------
# Top-level formula checking


@dataclass
class CheckResult:
    formula: NashFormula
    coalition_game: Csg
    compiled: CompiledObjectives
    table: ValueTable
    strategy: SynthesizedStrategy
    values: dict[int, np.ndarray]
    sums: dict[int, float]
    sat: dict[int, bool] | None

    @property
    def iterations(self) -> int:
        return self.table.iterations


def _compare(total: float, comparator: str, threshold: Fraction) -> bool:
    x = float(threshold)
    if comparator == "<":
        return total < x
    if comparator == "<=":
        return total <= x
    if comparator == ">=":
        return total >= x
    return total > x


def check_nash_formula(
    model: Csg, nf: NashFormula, cfg: EngineConfig | None = None
) -> CheckResult:
    """Evaluate one equilibrium formula at every state of the model.

    Builds the coalition game for the formula's partition, dispatches on
    the horizon class, and reports the per-state value vector, its sum and
    (for threshold queries) the verdict. Nested state formulas, including
    nested Nash formulas, are resolved bottom-up on the base model.
    """
    from .formulas import resolve_coalitions

    cfg = cfg or EngineConfig()
    partition = resolve_coalitions(model, nf)
    coalition = build_coalition_game(model, partition)

    def resolve(phi: StateFormula) -> frozenset[int]:
        return evaluate_state_formula(model, phi, cfg)

    compiled = compile_objectives(coalition, nf, resolve)
    if compiled.horizon == "finite":
        table, strategy = solve_finite_horizon(coalition, compiled, cfg)
    else:
        table, strategy = solve_value_iteration(coalition, compiled, cfg)
    values = {s: table.at_state(s) for s in range(model.n_states)}
    sums = {s: float(values[s].sum()) for s in values}
    sat = None
    if not nf.is_numeric:
        sat = {
            s: _compare(sums[s], nf.comparator, nf.threshold) for s in sums
        }
    return CheckResult(
        formula=nf,
        coalition_game=coalition,
        compiled=compiled,
        table=table,
        strategy=strategy,
        values=values,
        sums=sums,
        sat=sat,
    )


def evaluate_state_formula(
    model: Csg, formula: StateFormula, cfg: EngineConfig | None = None
) -> frozenset[int]:
    """Satisfaction set of a state formula, resolving nested Nash formulas
    with the engine. Nested Nash formulas must be threshold queries."""
    cfg = cfg or EngineConfig()

    def resolver(nf: NashFormula) -> frozenset[int]:
        if nf.is_numeric:
            raise FormulaError(
                "numeric (=?) queries cannot be nested inside state formulas"
            )
        result = check_nash_formula(model, nf, cfg)
        return frozenset(s for s, ok in result.sat.items() if ok)

    return sat_states(model, formula, resolver)
