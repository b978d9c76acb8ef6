import itertools

import numpy as np
import pytest

from csgnash.games import (
    IDLE,
    CoalitionPartition,
    Csg,
    MixedProfile,
    NormalFormGame,
    RewardStructure,
    build_coalition_game,
    fix_opponents,
    single_controller_view,
    stage_game,
    validate_csg,
)

from conftest import chain_csg, two_coalition_goal_csg


def one_state_game() -> Csg:
    return Csg(
        players=("p1",),
        actions=(("a",),),
        state_names=("s0",),
        initial=(0,),
        availability=(((0,),),),
        transitions={(0, (0,)): {0: 1.0}},
        labels=(frozenset({"here"}),),
    )


def test_validate_identity_case():
    assert validate_csg(one_state_game()).ok


def test_validate_distribution_sum_violation():
    model = Csg(
        players=("p1",),
        actions=(("a",),),
        state_names=("s0",),
        initial=(0,),
        availability=(((0,),),),
        transitions={(0, (0,)): {0: 0.9}},
        labels=(frozenset(),),
    )
    report = validate_csg(model)
    assert not report.ok
    assert any(issue.kind == "distribution sum" for issue in report.issues)
    bad = next(i for i in report.issues if i.kind == "distribution sum")
    assert bad.state == 0 and bad.joint == (0,)


def test_validate_undefined_availability():
    # Two states; the second declares a transition for an action that is
    # not available there.
    model = Csg(
        players=("p1",),
        actions=(("a", "b"),),
        state_names=("s0", "s1"),
        initial=(0,),
        availability=(((0, 1),), ((0,),)),
        transitions={
            (0, (0,)): {1: 1.0},
            (0, (1,)): {0: 1.0},
            (1, (0,)): {1: 1.0},
            (1, (1,)): {0: 1.0},
        },
        labels=(frozenset(), frozenset()),
    )
    report = validate_csg(model)
    assert any(issue.kind == "undefined availability" for issue in report.issues)


def test_validate_missing_transition():
    model = Csg(
        players=("p1",),
        actions=(("a", "b"),),
        state_names=("s0",),
        initial=(0,),
        availability=(((0, 1),),),
        transitions={(0, (0,)): {0: 1.0}},
        labels=(frozenset(),),
    )
    report = validate_csg(model)
    assert any(issue.kind == "missing transition" for issue in report.issues)


def test_validate_idle_never_available():
    model = Csg(
        players=("p1",),
        actions=(("a",),),
        state_names=("s0",),
        initial=(0,),
        availability=(((0, IDLE),),),
        transitions={(0, (0,)): {0: 1.0}},
        labels=(frozenset(),),
    )
    report = validate_csg(model)
    assert any("idle" in issue.detail for issue in report.issues)


# ---------------------------------------------------------------------------
# Coalition games


def three_player_model() -> Csg:
    # Two states; player 3 has no action in s1.
    trans = {}
    for joint in itertools.product((0, 1), (0, 1), (0, 1)):
        trans[(0, joint)] = {1: 1.0} if joint[0] == 0 else {0: 1.0}
    for joint in itertools.product((0, 1), (0, 1), (IDLE,)):
        trans[(1, joint)] = {1: 0.5, 0: 0.5}
    return Csg(
        players=("p1", "p2", "p3"),
        actions=(("a1", "b1"), ("a2", "b2"), ("a3", "b3")),
        state_names=("s0", "s1"),
        initial=(0,),
        availability=(
            ((0, 1), (0, 1), (0, 1)),
            ((0, 1), (0, 1), ()),
        ),
        labels=(frozenset(), frozenset()),
        transitions=trans,
        rewards={
            "r": RewardStructure(
                {0: 2.0},
                {(0, (0, 0, 0)): 5.0, (1, (1, 0, IDLE)): 7.0},
            )
        },
    )


def test_singleton_partition_is_isomorphic():
    model = three_player_model()
    partition = CoalitionPartition.singletons(3)
    lifted = build_coalition_game(model, partition)
    assert lifted.n_players == 3
    for s in range(model.n_states):
        original = model.enabled_joints(s)
        new = lifted.enabled_joints(s)
        assert len(original) == len(new)
        # Transition distributions correspond joint-for-joint.
        for o_joint, n_joint in zip(original, new):
            assert model.transitions[(s, o_joint)] == lifted.transitions[(s, n_joint)]


def test_pair_partition_action_counts_and_transitions():
    model = three_player_model()
    partition = CoalitionPartition(((0,), (1, 2)))
    lifted = build_coalition_game(model, partition)
    assert lifted.n_players == 2
    # At s0 both members of coalition 2 have two actions: 2*2 tuples.
    assert len(lifted.availability[0][1]) == 4
    # At s1 player 3 idles, so coalition 2 has the two (b, ~) style tuples.
    assert len(lifted.availability[1][1]) == 2
    names = [lifted.actions[1][a] for a in lifted.availability[1][1]]
    assert names == ["a2,~", "b2,~"]
    # Hand expansion: coalition joint ((a1), (a2, a3)) maps to (a1, a2, a3).
    for cjoint in lifted.enabled_joints(0):
        a1 = lifted.actions[0][cjoint[0]]
        pair = lifted.actions[1][cjoint[1]].split(",")
        orig = (
            model.actions[0].index(a1.split(",")[0]),
            model.actions[1].index(pair[0]),
            model.actions[2].index(pair[1]),
        )
        assert lifted.transitions[(0, cjoint)] == model.transitions[(0, orig)]


def test_transition_preservation_exhaustive():
    model = three_player_model()
    for partition in (
        CoalitionPartition(((0, 1), (2,))),
        CoalitionPartition(((0, 1, 2),)),
    ):
        lifted = build_coalition_game(model, partition)
        total_original = {
            s: len(model.enabled_joints(s)) for s in range(model.n_states)
        }
        total_lifted = {
            s: len(lifted.enabled_joints(s)) for s in range(model.n_states)
        }
        assert total_original == total_lifted


def test_reward_lift_equality():
    model = three_player_model()
    lifted = build_coalition_game(model, CoalitionPartition(((0,), (1, 2))))
    assert lifted.rewards["r"].state_reward(0) == 2.0
    # Action reward carried over under the member mapping.
    found = [
        v for (s, joint), v in lifted.rewards["r"].action_rewards.items() if s == 0
    ]
    assert found == [5.0]
    found1 = [
        v for (s, joint), v in lifted.rewards["r"].action_rewards.items() if s == 1
    ]
    assert found1 == [7.0]


def test_partition_validation_errors():
    with pytest.raises(ValueError):
        CoalitionPartition(((0,), (0, 1))).validate(2)
    with pytest.raises(ValueError):
        CoalitionPartition(((0,),)).validate(2)
    with pytest.raises(ValueError):
        CoalitionPartition(()).validate(0)


# ---------------------------------------------------------------------------
# Stage games


def test_stage_game_constant_assembler():
    model = two_coalition_goal_csg()
    game, joints = stage_game(model, 1, lambda joint: (0.25, 0.75))
    assert game.shape == (1, 1)
    assert joints == [(IDLE, IDLE)]
    assert game.utility((0, 0), 0) == 0.25


def test_stage_game_action_sets_match_enabled():
    model = two_coalition_goal_csg()
    game, joints = stage_game(model, 0, lambda joint: (float(joint[0]), 0.0))
    assert game.action_names[0] == ("a", "b")
    assert game.action_names[1] == ("z",)
    assert joints == [(0, 0), (1, 0)]


def test_stage_game_successor_weighted_sums():
    model = chain_csg()
    values = {0: 10.0, 1: 20.0, 2: 30.0}

    def assembler(joint):
        dist = model.transitions[(0, joint)]
        return (sum(p * values[t] for t, p in dist.items()),)

    game, joints = stage_game(model, 0, assembler)
    # go: 1.0*20 = 20; stay: 0.8*10 + 0.2*20 = 12.
    assert game.utility((0,), 0) == pytest.approx(20.0)
    assert game.utility((1,), 0) == pytest.approx(12.0)


def test_stage_game_rejects_non_finite():
    model = two_coalition_goal_csg()
    with pytest.raises(ValueError, match="non-finite"):
        stage_game(model, 0, lambda joint: (float("nan"), 0.0))


# ---------------------------------------------------------------------------
# Single-controller view


def test_single_controller_counts():
    model = two_coalition_goal_csg()
    pooled = single_controller_view(model)
    assert pooled.n_choices(0) == 2
    assert pooled.n_choices(1) == 1

    two_by_two = Csg(
        players=("p1", "p2"),
        actions=(("a", "b"), ("x", "y")),
        state_names=("s0",),
        initial=(0,),
        availability=(((0, 1), (0, 1)),),
        transitions={
            (0, (i, j)): {0: 1.0} for i in (0, 1) for j in (0, 1)
        },
        labels=(frozenset(),),
    )
    assert single_controller_view(two_by_two).n_choices(0) == 4


def test_fix_opponents_uniform_mixture():
    model = Csg(
        players=("p1", "p2"),
        actions=(("a", "b"), ("x", "y")),
        state_names=("s0", "s1"),
        initial=(0,),
        availability=(((0, 1), (0, 1)), ((), ())),
        transitions={
            (0, (0, 0)): {0: 1.0},
            (0, (0, 1)): {1: 1.0},
            (0, (1, 0)): {1: 1.0},
            (0, (1, 1)): {0: 1.0},
            (1, (IDLE, IDLE)): {1: 1.0},
        },
        labels=(frozenset(), frozenset()),
    )
    strategies = {
        0: [np.array([1.0, 0.0]), np.array([0.5, 0.5])],
        1: [np.array([1.0]), np.array([1.0])],
    }
    residual = fix_opponents(model, 0, strategies)
    (label, succs, probs) = residual.choices[0][0]
    mixture = dict(zip(succs.tolist(), probs.tolist()))
    assert mixture == {0: 0.5, 1: 0.5}


def test_mixed_profile_validation():
    MixedProfile([[0.5, 0.5], [1.0]])
    with pytest.raises(ValueError):
        MixedProfile([[0.7, 0.7]])
    with pytest.raises(ValueError):
        MixedProfile([[-0.2, 1.2]])
    assert MixedProfile([[0.0, 1.0]]).support(0) == (1,)


def test_utilities_must_be_total():
    with pytest.raises(ValueError):
        NormalFormGame([("a", "b")], {(0,): (1.0,)})
