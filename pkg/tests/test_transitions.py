import itertools

import pytest
from hypothesis import given, settings, strategies as st

from vtparse.errors import (
    DerivationError,
    GuardError,
    InvalidInputError,
    ProjectivityError,
    TransitionError,
)
from vtparse.transitions import (
    LR,
    RR,
    S,
    Action,
    ParserState,
    actions_to_tree,
    apply_action,
    catalan,
    enumerate_action_sequences,
    initial_state,
    is_projective,
    tree_to_actions,
    valid_actions,
)


def _all_trees(n):
    """Brute force: every single-rooted, acyclic, non-crossing head array."""

    def acyclic(heads):
        for i in range(1, n + 1):
            seen, j = set(), i
            while j:
                if j in seen:
                    return False
                seen.add(j)
                j = heads[j - 1]
        return True

    def noncrossing(heads):
        arcs = [tuple(sorted((h, d))) for d, h in enumerate(heads, 1) if h]
        for (a, b), (c, d) in itertools.combinations(arcs, 2):
            if a < c < b < d or c < a < d < b:
                return False
        # the root arc may not be covered by any other arc
        root = heads.index(0) + 1
        return all(not (a < root < b) for a, b in arcs)

    out = []
    for heads in itertools.product(range(n + 1), repeat=n):
        if heads.count(0) != 1 or any(h == d for d, h in enumerate(heads, 1)):
            continue
        if acyclic(heads) and noncrossing(heads):
            out.append(list(heads))
    return out


class TestAutomaton:
    def test_initial_state(self):
        st0 = initial_state(3)
        assert st0.stack == () and st0.buffer_pos == 0 and st0.arcs == {} and st0.step == 0
        assert initial_state(1).stack == ()
        with pytest.raises(InvalidInputError):
            initial_state(0)

    def test_valid_actions(self):
        assert valid_actions(ParserState((0,), 1), 3) == {S}
        assert valid_actions(ParserState((0, 1), 3), 3) == {LR, RR}
        assert valid_actions(ParserState((0,), 3), 3) == set()

    def test_apply_right_reduce(self):
        st0 = initial_state(2)
        for a in (S, S, RR):
            st0 = apply_action(st0, a, 2)
        assert st0.arcs == {1: 0} and st0.stack == (0,) and st0.step == 3

    def test_apply_left_reduce(self):
        st0 = initial_state(2)
        for a in (S, S, LR):
            st0 = apply_action(st0, a, 2)
        assert st0.arcs == {0: 1} and st0.stack == (1,)

    def test_reduce_on_short_stack_fails(self):
        with pytest.raises(TransitionError, match="two stack items"):
            apply_action(ParserState((0,), 1), LR, 3)

    def test_gen_aliases_shift(self):
        assert Action.GEN is Action.SHIFT
        assert Action.SHIFT < Action.LEFT_REDUCE < Action.RIGHT_REDUCE


class TestTreeConversion:
    def test_actions_to_tree_examples(self):
        assert actions_to_tree(3, [S, S, LR, S, LR]) == [2, 3, 0]
        assert actions_to_tree(1, [S]) == [0]
        assert actions_to_tree(3, [S, S, S, RR, RR]) == [0, 1, 2]

    def test_incomplete_derivation(self):
        with pytest.raises(DerivationError) as err:
            actions_to_tree(3, [S, S, LR])
        assert err.value.step == 3
        with pytest.raises(DerivationError) as err:
            actions_to_tree(2, [S, LR])
        assert err.value.step == 1

    def test_tree_to_actions_examples(self):
        assert tree_to_actions([2, 0, 2]) == [S, S, LR, S, RR]
        assert tree_to_actions([0]) == [S]

    def test_nonprojective_rejected(self):
        with pytest.raises(ProjectivityError) as err:
            tree_to_actions([3, 4, 0, 1])
        assert err.value.arcs is not None

    @pytest.mark.parametrize("n", range(1, 7))
    def test_round_trip_all_projective_trees(self, n):
        for heads in _all_trees(n):
            assert is_projective(heads)
            acts = tree_to_actions(heads)
            assert actions_to_tree(n, acts) == heads


class TestEnumeration:
    @pytest.mark.parametrize("n,count", [(1, 1), (2, 2), (3, 8), (4, 40), (5, 224), (6, 1344)])
    def test_counts(self, n, count):
        seqs = enumerate_action_sequences(n)
        assert len(seqs) == count == catalan(n - 1) * 2 ** (n - 1)
        assert len(set(seqs)) == count

    def test_n3_covers_seven_trees(self):
        trees = [tuple(actions_to_tree(3, a)) for a in enumerate_action_sequences(3)]
        assert len(set(trees)) == 7
        assert max(trees.count(t) for t in set(trees)) == 2
        assert trees.count((2, 0, 2)) == 2

    @pytest.mark.parametrize("n", range(1, 7))
    def test_every_prefix_valid(self, n):
        for seq in enumerate_action_sequences(n):
            assert seq.count(S) == n and len(seq) == 2 * n - 1
            state = initial_state(n)
            for a in seq:
                assert a in valid_actions(state, n)
                state = apply_action(state, a, n)
            assert valid_actions(state, n) == set()

    @pytest.mark.parametrize("n", range(1, 6))
    def test_surjective_onto_projective_trees(self, n):
        produced = {tuple(actions_to_tree(n, a)) for a in enumerate_action_sequences(n)}
        assert produced == {tuple(t) for t in _all_trees(n)}

    def test_guard(self):
        with pytest.raises(GuardError):
            enumerate_action_sequences(0)
        with pytest.raises(GuardError):
            enumerate_action_sequences(9)


@st.composite
def derivations(draw, max_n=12):
    n = draw(st.integers(1, max_n))
    seq, depth, pos = [], 0, 0
    while not (pos == n and depth == 1):
        choices = ([S] if pos < n else []) + ([LR, RR] if depth >= 2 else [])
        a = draw(st.sampled_from(choices))
        seq.append(a)
        if a == S:
            depth, pos = depth + 1, pos + 1
        else:
            depth -= 1
    return n, seq


@settings(max_examples=200, deadline=None)
@given(derivations())
def test_random_derivations_give_projective_trees(case):
    n, seq = case
    heads = actions_to_tree(n, seq)
    assert heads.count(0) == 1
    assert is_projective(heads)
    assert actions_to_tree(n, tree_to_actions(heads)) == heads
