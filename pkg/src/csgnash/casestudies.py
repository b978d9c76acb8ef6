"""Builders for the bundled case-study models.

Every builder returns a plain model document (the JSON schema of
`modelio`), so the same code generates the bundled files and fresh
variants. The encodings are deliberately desk-scale abstractions; the
modelling choices are documented in models/README.md.
"""

from __future__ import annotations

import itertools
import json
from pathlib import Path

MODELS_DIR = Path(__file__).parent / "models"


def secret_sharing(
    variant: str = "raa",
    alpha: float = 0.3,
    u3: float = 1.0,
    u1: float = 2.0,
    u0: float = 0.0,
    p_fail: float = 0.2,
    r_max: int | None = None,
) -> dict:
    """Three agents re-share a secret every round until everyone can
    reconstruct it or a withholder is exposed.

    `variant` assigns a type per agent: r(ational) agents choose between
    following the coin protocol and withholding while claiming tails,
    a(ltruistic) agents always follow, b(yzantine) agents follow but fail
    to deliver a usable share with probability p_fail. A round settles
    when the honest agents' coins agree: all-heads completes the protocol
    (or exposes withholders), all-tails triggers the cross-check that
    exposes them too; mixed rounds are indistinguishable from honest
    non-completion and void. With r_max set the dealer gives up after that
    many voided rounds.
    """
    if len(variant) != 3 or any(c not in "rab" for c in variant):
        raise ValueError("variant must be three of r/a/b, e.g. 'raa'")
    players = []
    for i, c in enumerate(variant):
        actions = ["follow", "cheat"] if c == "r" else []
        players.append({"name": f"usr{i + 1}", "actions": actions})
    rationals = [i for i, c in enumerate(variant) if c == "r"]
    rounds = r_max if r_max is not None else 1

    def round_name(t: int) -> str:
        return f"round{t}" if r_max is not None else "round"

    states = [{"id": round_name(t), "labels": []} for t in range(rounds)]
    states.append({"id": "win_all", "labels": ["learned_all"]})
    for i in rationals:
        states.append({"id": f"win_{i + 1}", "labels": [f"learned_{i + 1}"]})
    states.append({"id": "lose", "labels": ["learned_none"]})
    states.append({"id": "done", "labels": ["done"]})

    # Effective probability that an honest agent's share goes out.
    send_expr = {
        "r": "alpha",
        "a": "alpha",
        "b": "alpha*(1-p_fail)",
    }

    availability = {
        round_name(t): {
            f"usr{i + 1}": ["follow", "cheat"] for i in rationals
        }
        for t in range(rounds)
    }

    transitions = []

    def void_target(t: int) -> str:
        if r_max is None:
            return round_name(t)
        return round_name(t + 1) if t + 1 < rounds else "lose"

    for t in range(rounds):
        for cheat_set in itertools.chain.from_iterable(
            itertools.combinations(rationals, k) for k in range(len(rationals) + 1)
        ):
            joint = []
            for i in range(3):
                if i in rationals:
                    joint.append("cheat" if i in cheat_set else "follow")
                else:
                    joint.append("~")
            honest = [i for i in range(3) if i not in cheat_set]
            dist: dict[str, str] = {}

            def add(state: str, expr: str) -> None:
                dist[state] = f"{dist[state]} + {expr}" if state in dist else expr

            if not honest:
                # Everybody withholds: nothing observable ever happens.
                add(void_target(t), "1")
            else:
                all_sent = "*".join(f"({send_expr[variant[i]]})" for i in honest)
                none_sent = "*".join(
                    f"(1-({send_expr[variant[i]]}))" for i in honest
                )
                if not cheat_set:
                    add("win_all", all_sent)
                    add(void_target(t), f"1 - ({all_sent})")
                else:
                    winner = (
                        f"win_{cheat_set[0] + 1}" if len(cheat_set) == 1 else "lose"
                    )
                    add(winner, all_sent)
                    add("lose", none_sent)
                    add(void_target(t), f"1 - ({all_sent}) - ({none_sent})")
            transitions.append(
                {"state": round_name(t), "joint": joint, "dist": dist}
            )
    for sid in (
        ["win_all"]
        + [f"win_{i + 1}" for i in rationals]
        + ["lose", "done"]
    ):
        transitions.append(
            {"state": sid, "joint": ["~", "~", "~"], "dist": {"done": 1}}
        )

    rewards = {}
    for i in range(3):
        state_rewards = {"win_all": u3}
        if i in rationals:
            state_rewards[f"win_{i + 1}"] = u1
        if u0:
            state_rewards["lose"] = u0
        rewards[f"util{i + 1}"] = {"state": state_rewards, "action": []}

    params = {"alpha": alpha}
    if "b" in variant:
        params["p_fail"] = p_fail
    return {
        "name": f"secret_sharing_{variant}"
        + (f"_rmax{r_max}" if r_max is not None else ""),
        "players": players,
        "states": states,
        "initial": [round_name(0)],
        "availability": availability,
        "transitions": transitions,
        "rewards": rewards,
        "params": params,
    }


def public_good_profit(months: int = 2, f: float = 2.0) -> dict:
    """Fixed-factor public good game tracking profit as action rewards.

    Each of three players invests 0, 5 or 10 each month; the pot is
    multiplied by f and split evenly, so the per-month profit of player i
    is f*(k1+k2+k3)/3 - ki. Capital is not tracked in the state, which
    keeps the model a pure month counter and makes f sweepable.
    """
    amounts = {"in0": 0, "in5": 5, "in10": 10}
    players = [
        {"name": f"p{i + 1}", "actions": list(amounts)} for i in range(3)
    ]
    states = [{"id": f"m{t}", "labels": []} for t in range(months)]
    states.append({"id": f"m{months}", "labels": ["end"]})
    availability = {
        f"m{t}": {f"p{i + 1}": list(amounts) for i in range(3)}
        for t in range(months)
    }
    transitions = []
    reward_actions: dict[int, list] = {0: [], 1: [], 2: []}
    for t in range(months):
        for joint in itertools.product(amounts, repeat=3):
            transitions.append(
                {
                    "state": f"m{t}",
                    "joint": list(joint),
                    "dist": {f"m{t + 1}": 1},
                }
            )
            total = sum(amounts[a] for a in joint)
            for i in range(3):
                reward_actions[i].append(
                    {
                        "state": f"m{t}",
                        "joint": list(joint),
                        "v": f"f*{total}/3 - {amounts[joint[i]]}",
                    }
                )
    transitions.append(
        {"state": f"m{months}", "joint": ["~", "~", "~"], "dist": {f"m{months}": 1}}
    )
    rewards = {
        f"pro{i + 1}": {"state": {}, "action": reward_actions[i]} for i in range(3)
    }
    return {
        "name": f"public_good_profit_k{months}",
        "players": players,
        "states": states,
        "initial": ["m0"],
        "availability": availability,
        "transitions": transitions,
        "rewards": rewards,
        "params": {"f": f},
    }


def public_good_capital(
    months: int = 1, f_start: float = 2.0, capital: float = 10.0
) -> dict:
    """Public good game with capital in the state and a drifting factor.

    States are (month, factor, capitals); at each month the factor stays
    put with probability 0.8 or moves by +-0.2 with probability 0.1 each.
    Profits use the factor current when investing. Reward structures
    cap1..cap3 expose each player's current capital as a state reward.
    """
    amounts = [0.0, 5.0, 10.0]
    names = ["in0", "in5", "in10"]
    players = [{"name": f"p{i + 1}", "actions": list(names)} for i in range(3)]

    def fmt(x: float) -> str:
        return f"{x:.6g}"

    def state_id(t: int, f: float, caps: tuple[float, float, float]) -> str:
        return f"m{t}_f{fmt(f)}_" + "_".join(fmt(c) for c in caps)

    start = (0, f_start, (capital,) * 3)
    states_seen: dict[str, tuple] = {}
    transitions = []
    frontier = [start]
    while frontier:
        t, f, caps = frontier.pop()
        sid = state_id(t, f, caps)
        if sid in states_seen:
            continue
        states_seen[sid] = (t, f, caps)
        if t >= months:
            transitions.append(
                {"state": sid, "joint": ["~", "~", "~"], "dist": {sid: 1}}
            )
            continue
        for joint in itertools.product(range(3), repeat=3):
            total = sum(amounts[a] for a in joint)
            new_caps = tuple(
                round(caps[i] + (f / 3.0) * total - amounts[joint[i]], 9)
                for i in range(3)
            )
            dist: dict[str, float] = {}
            for f_next, p in ((f, 0.8), (round(f + 0.2, 9), 0.1), (round(f - 0.2, 9), 0.1)):
                tid = state_id(t + 1, f_next, new_caps)
                dist[tid] = dist.get(tid, 0.0) + p
                frontier.append((t + 1, f_next, new_caps))
            transitions.append(
                {
                    "state": sid,
                    "joint": [names[a] for a in joint],
                    "dist": dist,
                }
            )
    ordered = sorted(states_seen, key=lambda s: (states_seen[s][0], s))
    states = [
        {"id": sid, "labels": ["end"] if states_seen[sid][0] >= months else []}
        for sid in ordered
    ]
    availability = {
        sid: {f"p{i + 1}": list(names) for i in range(3)}
        for sid in ordered
        if states_seen[sid][0] < months
    }
    rewards = {
        f"cap{i + 1}": {
            "state": {sid: states_seen[sid][2][i] for sid in ordered},
            "action": [],
        }
        for i in range(3)
    }
    return {
        "name": f"public_good_capital_k{months}",
        "players": players,
        "states": states,
        "initial": [state_id(*start)],
        "availability": availability,
        "transitions": transitions,
        "rewards": rewards,
        "params": {},
    }


def aloha(q: float = 0.8) -> dict:
    """Three users share a slotted channel and each must deliver one packet.

    A ready user either sends now or defers one slot; a deferred user must
    send in the next slot, so transmission attempts cannot be postponed
    forever. When k users send simultaneously each succeeds independently
    with probability q/k. The time1..time3 rewards count the slots until
    the corresponding user is done.
    """
    status = "rbd"  # ready, backoff(must send), done
    players = [{"name": f"usr{i + 1}", "actions": ["send", "defer"]} for i in range(3)]

    def sid(st: tuple[int, int, int]) -> str:
        return "".join(status[x] for x in st)

    all_states = list(itertools.product(range(3), repeat=3))
    states = [
        {
            "id": sid(st),
            "labels": [f"d{i + 1}" for i in range(3) if st[i] == 2]
            + (["alldone"] if st == (2, 2, 2) else []),
        }
        for st in all_states
    ]
    availability = {}
    transitions = []
    for st in all_states:
        avail: dict[str, list[str]] = {}
        for i, x in enumerate(st):
            if x == 0:
                avail[f"usr{i + 1}"] = ["send", "defer"]
            elif x == 1:
                avail[f"usr{i + 1}"] = ["send"]
        availability[sid(st)] = avail
        options = []
        for i, x in enumerate(st):
            if x == 0:
                options.append(["send", "defer"])
            elif x == 1:
                options.append(["send"])
            else:
                options.append(["~"])
        for joint in itertools.product(*options):
            senders = [i for i in range(3) if joint[i] == "send"]
            k = len(senders)
            dist: dict[str, str] = {}
            for winners in itertools.chain.from_iterable(
                itertools.combinations(senders, w) for w in range(k + 1)
            ):
                nxt = []
                for i, x in enumerate(st):
                    if x == 2:
                        nxt.append(2)
                    elif joint[i] == "defer":
                        nxt.append(1)
                    elif i in winners:
                        nxt.append(2)
                    else:
                        nxt.append(0)
                terms = []
                for i in senders:
                    terms.append(
                        f"(q/{k})" if i in winners else f"(1-q/{k})"
                    )
                expr = "*".join(terms) if terms else "1"
                tid = sid(tuple(nxt))
                dist[tid] = f"{dist[tid]} + {expr}" if tid in dist else expr
            transitions.append({"state": sid(st), "joint": list(joint), "dist": dist})
    rewards = {
        f"time{i + 1}": {
            "state": {sid(st): 1 for st in all_states if st[i] != 2},
            "action": [],
        }
        for i in range(3)
    }
    return {
        "name": "aloha3",
        "players": players,
        "states": states,
        "initial": ["rrr"],
        "availability": availability,
        "transitions": transitions,
        "rewards": rewards,
        "params": {"q": q},
    }


def medium_access(e_max: int = 2, q1: float = 0.9) -> dict:
    """Three users with bounded energy share a noisy wireless channel.

    Transmitting costs one energy unit and succeeds with probability q1/k
    when k users transmit at once. The mes1..mes3 rewards give the
    expected number of messages delivered per step, to be accumulated
    over a bounded window.
    """
    players = [{"name": f"usr{i + 1}", "actions": ["tx", "wait"]} for i in range(3)]

    def sid(e: tuple[int, int, int]) -> str:
        return "e" + "".join(str(x) for x in e)

    all_states = list(itertools.product(range(e_max + 1), repeat=3))
    states = [
        {"id": sid(e), "labels": ["drained"] if e == (0, 0, 0) else []}
        for e in all_states
    ]
    availability = {
        sid(e): {
            f"usr{i + 1}": (["tx", "wait"] if e[i] > 0 else ["wait"])
            for i in range(3)
        }
        for e in all_states
    }
    transitions = []
    reward_actions: dict[int, list] = {0: [], 1: [], 2: []}
    for e in all_states:
        options = [["tx", "wait"] if e[i] > 0 else ["wait"] for i in range(3)]
        for joint in itertools.product(*options):
            senders = [i for i in range(3) if joint[i] == "tx"]
            nxt = tuple(e[i] - (1 if i in senders else 0) for i in range(3))
            transitions.append(
                {"state": sid(e), "joint": list(joint), "dist": {sid(nxt): 1}}
            )
            for i in senders:
                reward_actions[i].append(
                    {
                        "state": sid(e),
                        "joint": list(joint),
                        "v": f"q1/{len(senders)}",
                    }
                )
    rewards = {
        f"mes{i + 1}": {"state": {}, "action": reward_actions[i]} for i in range(3)
    }
    return {
        "name": f"medium_access_e{e_max}",
        "players": players,
        "states": states,
        "initial": [sid((e_max,) * 3)],
        "availability": availability,
        "transitions": transitions,
        "rewards": rewards,
        "params": {"q1": q1},
    }


BUILDERS = {
    "secret-sharing": secret_sharing,
    "public-good-profit": public_good_profit,
    "public-good-capital": public_good_capital,
    "aloha": aloha,
    "medium-access": medium_access,
}


def write_model(doc: dict, path) -> None:
    doc = dict(doc)
    doc.pop("name", None)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def generate_bundled(directory=MODELS_DIR) -> list[str]:
    """Regenerate the bundled model corpus; returns the file names."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    corpus = {
        "secret_sharing_raa.json": secret_sharing("raa"),
        "secret_sharing_rba.json": secret_sharing("rba"),
        "secret_sharing_rra.json": secret_sharing("rra"),
        "secret_sharing_rra_rmax5.json": secret_sharing("rra", r_max=5),
        "secret_sharing_rrr_rmax5.json": secret_sharing("rrr", r_max=5),
        "public_good_profit.json": public_good_profit(months=2),
        "public_good_capital.json": public_good_capital(months=1),
        "aloha3.json": aloha(),
        "medium_access3.json": medium_access(),
    }
    for filename, doc in corpus.items():
        write_model(doc, directory / filename)
    return sorted(corpus)
