"""Synthesised strategy profiles: storage, evaluation and certification.

A synthesised profile assigns, per (state, satisfied set D, failed set E)
and per remaining-step level for finite horizons, one distribution over
each coalition's enabled actions. Evaluation computes the objective values
the profile actually achieves; certification compares them against every
coalition's best response with the others held fixed, which bounds how far
the profile is from an exact equilibrium at every state.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .games import Csg, RewardStructure
from .objectives import (
    EMPTY,
    CompiledObjectives,
    Mode,
    canonical_mode,
    mode_closure,
    mode_decided,
)

# (state, D, E, step); step is None for memoryless strategies.
StrategyKey = tuple[int, frozenset[int], frozenset[int], int | None]


@dataclass
class SynthesizedStrategy:
    kind: str  # "finite" | "memoryless"
    horizon: int | None
    table: dict[StrategyKey, tuple[np.ndarray, ...]]
    choice_names: dict[int, tuple[tuple[str, ...], ...]]

    def distributions(
        self, state: int, D: frozenset[int], E: frozenset[int], step: int | None
    ) -> tuple[np.ndarray, ...]:
        key = (state, D, E, step if self.kind == "finite" else None)
        return self.table[key]


@dataclass
class EpsilonCertificate:
    """Per-coalition best-response gaps; `epsilon` is the largest one.

    Gaps are reported unclamped, so tiny negative values (numerical noise
    from the approximate best-response solve) are visible. When several
    equally good equilibria exist the certified profile is the canonical
    one the solver picked; others may differ without affecting epsilon.
    """

    gaps: dict[tuple[int, int, Mode], float] = field(default_factory=dict)
    epsilon: float = 0.0
    per_coalition: dict[int, float] = field(default_factory=dict)


def _format_prob(p: float) -> str:
    return f"{p:.17g}"


def export_strategy(strategy: SynthesizedStrategy, destination) -> None:
    """Serialise to JSON; probabilities keep full float precision so an
    export / import / re-export cycle is byte identical."""
    entries = []
    for key in sorted(
        strategy.table,
        key=lambda k: (k[3] if k[3] is not None else -1, k[0], sorted(k[1]), sorted(k[2])),
    ):
        state, D, E, step = key
        dists = strategy.table[key]
        for coalition, dist in enumerate(dists):
            names = strategy.choice_names[state][coalition]
            entry = {
                "state": state,
                "D": sorted(D),
                "E": sorted(E),
                "coalition": coalition,
                "distribution": {
                    name: _format_prob(float(p)) for name, p in zip(names, dist)
                },
            }
            if step is not None:
                entry["step"] = step
            entries.append(entry)
    modes = sorted(
        {(tuple(sorted(k[1])), tuple(sorted(k[2]))) for k in strategy.table}
    )
    doc = {
        "kind": strategy.kind,
        "horizon": strategy.horizon,
        "modes": [{"D": list(d), "E": list(e)} for d, e in modes],
        "entries": entries,
    }
    if hasattr(destination, "write"):
        json.dump(doc, destination, indent=1)
        destination.write("\n")
    else:
        with open(destination, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")


def import_strategy(source) -> SynthesizedStrategy:
    """Load a strategy written by export_strategy."""
    if hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    table: dict[StrategyKey, list] = {}
    names: dict[int, dict[int, tuple[str, ...]]] = {}
    for entry in doc["entries"]:
        state = int(entry["state"])
        key = (
            state,
            frozenset(entry["D"]),
            frozenset(entry["E"]),
            entry.get("step"),
        )
        dist = entry["distribution"]
        names.setdefault(state, {})[entry["coalition"]] = tuple(dist.keys())
        table.setdefault(key, []).append(
            np.array([float(p) for p in dist.values()])
        )
    choice_names = {
        s: tuple(names[s][i] for i in sorted(names[s])) for s in names
    }
    return SynthesizedStrategy(
        kind=doc["kind"],
        horizon=doc.get("horizon"),
        table={k: tuple(v) for k, v in table.items()},
        choice_names=choice_names,
    )


# ---------------------------------------------------------------------------
# Shared stage helpers


class _StageData:
    """Per-state transition and reward tables for profile evaluation."""

    def __init__(self, game: Csg, compiled: CompiledObjectives):
        self.game = game
        self.compiled = compiled
        rewards: list[RewardStructure | None] = []
        for obj in compiled.items:
            rewards.append(game.rewards[obj.reward] if obj.reward else None)
        self.choice_sets = []
        self.joints = []
        self.succs = []
        self.probs = []
        self.action_rewards = []
        self.state_rewards = []
        for s in range(game.n_states):
            sets = tuple(game.choices(s, i) for i in range(game.n_players))
            self.choice_sets.append(sets)
            joints = [tuple(j) for j in itertools.product(*sets)]
            self.joints.append(joints)
            succ_row, prob_row, act_row = [], [], []
            for joint in joints:
                dist = game.transitions[(s, joint)]
                succ_row.append(list(dist.keys()))
                prob_row.append(np.array(list(dist.values())))
                act_row.append(
                    np.array(
                        [r.action_reward(s, joint) if r else 0.0 for r in rewards]
                    )
                )
            self.succs.append(succ_row)
            self.probs.append(prob_row)
            self.action_rewards.append(act_row)
            self.state_rewards.append(
                np.array([r.state_reward(s) if r else 0.0 for r in rewards])
            )

    def joint_probs(self, state: int, dists: tuple[np.ndarray, ...]) -> np.ndarray:
        """Probability of each joint action under per-coalition mixes,
        flattened in the same order as the joints list."""
        weights = np.ones(1)
        for d in dists:
            weights = np.multiply.outer(weights, d)
        return weights.flatten()


# ---------------------------------------------------------------------------
# Profile evaluation


def evaluate_profile(
    game: Csg,
    strategy: SynthesizedStrategy,
    compiled: CompiledObjectives,
) -> dict[tuple[int, Mode], np.ndarray]:
    """Objective values achieved by a fixed profile at every reachable
    (state, mode) node. Infinite horizons solve the induced absorbing
    Markov chain exactly; finite horizons roll the levels back."""
    if compiled.horizon == "infinite":
        return _evaluate_memoryless(game, strategy, compiled)
    return _evaluate_finite(game, strategy, compiled)


def _evaluate_memoryless(game, strategy, compiled):
    data = _StageData(game, compiled)
    pairs, index = mode_closure(game, compiled)
    n = len(pairs)
    m = compiled.m
    # Transition matrix of the induced chain (decided nodes absorb).
    chain = np.zeros((n, n))
    step_reward = np.zeros((n, m))
    for p, (s, (D, E)) in enumerate(pairs):
        if mode_decided(compiled, (D, E)):
            chain[p, p] = 1.0
            continue
        dists = strategy.distributions(s, D, E, None)
        weights = data.joint_probs(s, dists)
        step_reward[p] = data.state_rewards[s]
        for j, w in enumerate(weights):
            if w == 0.0:
                continue
            step_reward[p] += w * data.action_rewards[s][j]
            for t, tp in zip(data.succs[s][j], data.probs[s][j]):
                q = index[(int(t), canonical_mode(compiled, int(t), D, E))]
                chain[p, q] += w * tp
    values = np.zeros((n, m))
    for l in range(m):
        pending = [
            p
            for p, (s, (D, E)) in enumerate(pairs)
            if l not in D and l not in E
        ]
        boundary = np.zeros(n)
        for p, (s, (D, E)) in enumerate(pairs):
            if l in D:
                boundary[p] = 1.0 if compiled.kind == "prob" else 0.0
            elif l in E:
                boundary[p] = 0.0
        if not pending:
            values[:, l] = boundary
            continue
        idx = {p: k for k, p in enumerate(pending)}
        a_mat = np.eye(len(pending))
        b_vec = np.zeros(len(pending))
        for p in pending:
            k = idx[p]
            if compiled.kind == "reward":
                b_vec[k] += step_reward[p, l]
            for q in range(n):
                w = chain[p, q]
                if w == 0.0:
                    continue
                if q in idx:
                    a_mat[k, idx[q]] -= w
                else:
                    b_vec[k] += w * boundary[q]
        sol = np.linalg.solve(a_mat, b_vec)
        values[:, l] = boundary
        for p in pending:
            values[p, l] = sol[idx[p]]
    return {pair: values[p].copy() for p, pair in enumerate(pairs)}


def _evaluate_finite(game, strategy, compiled):
    data = _StageData(game, compiled)
    m = compiled.m
    memo: dict[tuple[int, Mode, int], np.ndarray] = {}

    def indicator(D):
        vec = np.zeros(m)
        for l in D:
            vec[l] = 1.0
        return vec

    def value(s: int, D, E, n: int) -> np.ndarray:
        D, E = canonical_mode(compiled, s, D, E, step=n)
        key = (s, (D, E), n)
        if key in memo:
            return memo[key]
        if compiled.kind == "prob" and len(D) + len(E) == m:
            vec = indicator(D)
            memo[key] = vec
            return vec
        consts = np.zeros(m)
        live = []
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
                if remaining == 0:
                    consts[l] = data.state_rewards[s][l]
                elif remaining > 0:
                    live.append(l)
            elif obj.kind == "cumulative":
                if remaining > 0:
                    live.append(l)
        if not live:
            memo[key] = consts
            return consts
        dists = strategy.distributions(s, D, E, n)
        weights = data.joint_probs(s, dists)
        vec = consts.copy()
        for j, w in enumerate(weights):
            if w == 0.0:
                continue
            succ = np.array(
                [value(int(t), D, E, n + 1) for t in data.succs[s][j]]
            )
            for l in live:
                cont = float(np.dot(data.probs[s][j], succ[:, l]))
                if compiled.items[l].kind == "cumulative":
                    vec[l] += w * (
                        data.state_rewards[s][l]
                        + data.action_rewards[s][j][l]
                        + cont
                    )
                else:
                    vec[l] += w * cont
        memo[key] = vec
        return vec

    out: dict[tuple[int, Mode], np.ndarray] = {}
    for s in range(game.n_states):
        mode = canonical_mode(compiled, s, EMPTY, EMPTY, step=0)
        out[(s, mode)] = value(s, EMPTY, EMPTY, 0)
    return out


def evaluate_at_initial_modes(
    game: Csg, strategy: SynthesizedStrategy, compiled: CompiledObjectives
) -> dict[int, np.ndarray]:
    """Per-state value vectors at the empty bookkeeping mode."""
    table = evaluate_profile(game, strategy, compiled)
    out = {}
    for s in range(game.n_states):
        mode = canonical_mode(
            compiled, s, EMPTY, EMPTY, step=0 if compiled.horizon == "finite" else None
        )
        out[s] = table[(s, mode)]
    return out


# ---------------------------------------------------------------------------
# Best responses


def _deviator_optimum(compiled: CompiledObjectives) -> str:
    # A deviating coalition improves its utility when maximising and its
    # cost when minimising.
    return "max" if compiled.opt == "max" else "min"


def best_response_value(
    game: Csg,
    strategy: SynthesizedStrategy,
    coalition: int,
    compiled: CompiledObjectives,
    epsilon: float = 1e-7,
    max_iters: int = 200_000,
) -> dict[tuple[int, Mode], float]:
    """Optimal value of one coalition's own objective when every other
    coalition plays the synthesised profile.

    Fixing the others yields a single-controller decision process over the
    (state, mode) bookkeeping graph; finite horizons are solved exactly by
    backward induction and infinite horizons by value iteration to the
    given tolerance.
    """
    if compiled.horizon == "infinite":
        return _best_response_memoryless(
            game, strategy, coalition, compiled, epsilon, max_iters
        )
    return _best_response_finite(game, strategy, coalition, compiled)


def _others_weights(
    data: _StageData, s: int, dists, coalition: int
) -> list[tuple[int, float]]:
    """Weight of each joint action given the opponents' mixes, grouped by
    the controller's own action index. Returns (joint index, weight)."""
    sets = data.choice_sets[s]
    out = []
    for j, joint in enumerate(data.joints[s]):
        w = 1.0
        for i in range(len(sets)):
            if i == coalition:
                continue
            local = sets[i].index(joint[i])
            w *= float(dists[i][local])
        out.append((j, w))
    return out


def _best_response_memoryless(game, strategy, coalition, compiled, epsilon, max_iters):
    data = _StageData(game, compiled)
    pairs, index = mode_closure(game, compiled)
    n = len(pairs)
    better = max if _deviator_optimum(compiled) == "max" else min
    values = np.zeros(n)
    boundary = np.zeros(n, dtype=bool)
    for p, (s, (D, E)) in enumerate(pairs):
        if coalition in D:
            values[p] = 1.0 if compiled.kind == "prob" else 0.0
            boundary[p] = True
        elif coalition in E:
            boundary[p] = True
        elif mode_decided(compiled, (D, E)):
            boundary[p] = True
    # Precompute, per pair and own action, the mixture over (succ pair,
    # prob) plus the expected immediate reward.
    plans = []
    for p, (s, (D, E)) in enumerate(pairs):
        if boundary[p]:
            plans.append(None)
            continue
        dists = strategy.distributions(s, D, E, None)
        weights = _others_weights(data, s, dists, coalition)
        own = data.choice_sets[s][coalition]
        per_action = []
        for a_local, _a in enumerate(own):
            mix: dict[int, float] = {}
            immediate = data.state_rewards[s][coalition] if compiled.kind == "reward" else 0.0
            for j, w in weights:
                joint = data.joints[s][j]
                local = own.index(joint[coalition])
                if local != a_local or w == 0.0:
                    continue
                if compiled.kind == "reward":
                    immediate += w * data.action_rewards[s][j][coalition]
                for t, tp in zip(data.succs[s][j], data.probs[s][j]):
                    q = index[(int(t), canonical_mode(compiled, int(t), D, E))]
                    mix[q] = mix.get(q, 0.0) + w * tp
            succ = np.fromiter(mix.keys(), dtype=np.int64, count=len(mix))
            probs = np.fromiter(mix.values(), dtype=np.float64, count=len(mix))
            per_action.append((immediate, succ, probs))
        plans.append(per_action)
    stable = 0
    for _ in range(max_iters):
        prev = values.copy()
        for p in range(n):
            if boundary[p]:
                continue
            best = None
            for immediate, succ, probs in plans[p]:
                v = immediate + float(np.dot(probs, prev[succ]))
                best = v if best is None else better(best, v)
            values[p] = best
        residual = float(np.max(np.abs(values - prev))) if n else 0.0
        stable = stable + 1 if residual < epsilon else 0
        if stable >= 2:
            break
    return {pair: float(values[p]) for p, pair in enumerate(pairs)}


def _best_response_finite(game, strategy, coalition, compiled):
    data = _StageData(game, compiled)
    better = max if _deviator_optimum(compiled) == "max" else min
    memo: dict[tuple[int, Mode, int], float] = {}
    obj = compiled.items[coalition]

    def value(s: int, D, E, n: int) -> float:
        D, E = canonical_mode(compiled, s, D, E, step=n)
        key = (s, (D, E), n)
        if key in memo:
            return memo[key]
        if coalition in D:
            out = 1.0 if compiled.kind == "prob" else 0.0
            memo[key] = out
            return out
        if coalition in E:
            memo[key] = 0.0
            return 0.0
        remaining = (obj.bound or 0) - n
        if obj.kind == "instant":
            if remaining < 0:
                memo[key] = 0.0
                return 0.0
            if remaining == 0:
                out = float(data.state_rewards[s][coalition])
                memo[key] = out
                return out
        if obj.kind == "cumulative" and remaining <= 0:
            memo[key] = 0.0
            return 0.0
        dists = strategy.distributions(s, D, E, n)
        weights = _others_weights(data, s, dists, coalition)
        own = data.choice_sets[s][coalition]
        best = None
        for a_local, _a in enumerate(own):
            total = 0.0
            if obj.kind == "cumulative":
                total += float(data.state_rewards[s][coalition])
            for j, w in weights:
                joint = data.joints[s][j]
                if own.index(joint[coalition]) != a_local or w == 0.0:
                    continue
                if obj.kind == "cumulative":
                    total += w * float(data.action_rewards[s][j][coalition])
                cont = 0.0
                for t, tp in zip(data.succs[s][j], data.probs[s][j]):
                    cont += tp * value(int(t), D, E, n + 1)
                total += w * cont
            best = total if best is None else better(best, total)
        memo[key] = best
        return best

    out: dict[tuple[int, Mode], float] = {}
    for s in range(game.n_states):
        mode = canonical_mode(compiled, s, EMPTY, EMPTY, step=0)
        out[(s, mode)] = value(s, EMPTY, EMPTY, 0)
    for (s, mode, n), v in list(memo.items()):
        out.setdefault((s, mode), v)
    return out


def certify_epsilon(
    game: Csg,
    strategy: SynthesizedStrategy,
    compiled: CompiledObjectives,
    epsilon_br: float = 1e-7,
) -> EpsilonCertificate:
    """Best-response gap of every coalition at every reachable node.

    The achieved epsilon is the largest amount any coalition could gain
    (or, for cost objectives, save) by unilaterally deviating anywhere.
    """
    achieved = evaluate_profile(game, strategy, compiled)
    cert = EpsilonCertificate()
    worst = -np.inf
    for i in range(compiled.m):
        responses = best_response_value(
            game, strategy, i, compiled, epsilon=epsilon_br
        )
        coalition_worst = -np.inf
        for (s, mode), br in responses.items():
            if (s, mode) not in achieved:
                continue
            got = float(achieved[(s, mode)][i])
            gap = br - got if compiled.opt == "max" else got - br
            cert.gaps[(i, s, mode)] = gap
            coalition_worst = max(coalition_worst, gap)
        cert.per_coalition[i] = coalition_worst
        worst = max(worst, coalition_worst)
    cert.epsilon = float(worst) if np.isfinite(worst) else 0.0
    return cert
