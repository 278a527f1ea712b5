import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ifslearn.markov import (
    SymbolSequence,
    TransitionMatrix,
    estimate_transition_matrix,
    is_irreducible,
    read_symbol_sequence,
    read_transition_matrix,
    sample_chain,
    write_symbol_sequence,
    write_transition_matrix,
)


def random_stochastic(rng, k, zero_frac=0.0):
    A = rng.random((k, k)) * (rng.random((k, k)) >= zero_frac)
    for i in range(k):
        if A[i].sum() == 0:
            A[i, rng.integers(k)] = 1.0
    return A / A.sum(axis=1, keepdims=True)


def reachability_oracle(A):
    """Warshall transitive closure of the positive pattern, plus the diagonal."""
    R = (np.asarray(A) > 0) | np.eye(len(A), dtype=bool)
    for m in range(len(A)):
        R = R | (R[:, m : m + 1] & R[m : m + 1, :])
    return bool(R.all())


class TestTransitionMatrix:
    def test_rows_renormalised(self):
        P = TransitionMatrix([[0.5, 0.5 + 1e-10], [1.0, 0.0]])
        assert np.allclose(P.entries.sum(axis=1), 1.0, atol=1e-12, rtol=0)

    def test_rejects_bad_rows(self):
        with pytest.raises(ValueError, match="row 1"):
            TransitionMatrix([[0.5, 0.6], [0.5, 0.5]])

    def test_rejects_negative_and_nonsquare(self):
        with pytest.raises(ValueError):
            TransitionMatrix([[1.5, -0.5], [0.5, 0.5]])
        with pytest.raises(ValueError):
            TransitionMatrix([[1.0, 0.0]])

    def test_one_based_indexing(self):
        P = TransitionMatrix([[0.25, 0.75], [1.0, 0.0]])
        assert P[1, 2] == 0.75 and P[2, 1] == 1.0

    def test_immutable(self):
        P = TransitionMatrix.uniform(2)
        with pytest.raises(ValueError):
            P.entries[0, 0] = 1.0


class TestSymbolSequence:
    def test_rejects_out_of_alphabet(self):
        with pytest.raises(ValueError, match="outside alphabet"):
            SymbolSequence([1, 2, 3], 2)

    def test_slicing_and_equality(self):
        s = SymbolSequence([1, 2, 2, 1], 2)
        assert s[1:3] == SymbolSequence([2, 2], 2)
        assert s[0] == 1 and len(s) == 4


class TestSampleChain:
    def test_single_state(self):
        assert sample_chain([[1.0]], 5, seed=0).tolist() == [1, 1, 1, 1, 1]

    def test_alternation(self):
        assert sample_chain([[0, 1], [1, 0]], 4, seed=3, initial=1).tolist() == [1, 2, 1, 2]

    def test_uniform_pair_frequencies(self):
        # 2200 steps of the uniform 3-state chain, as in the logistic experiment
        s = sample_chain(TransitionMatrix.uniform(3), 2200, seed=7).symbols
        for a in (1, 2, 3):
            nxt = s[1:][s[:-1] == a]
            freq = np.bincount(nxt, minlength=4)[1:] / nxt.size
            assert np.all(np.abs(freq - 1 / 3) <= 0.05)

    def test_only_positive_transitions(self, rng):
        for _ in range(20):
            A = random_stochastic(rng, 4, zero_frac=0.5)
            s = sample_chain(A, 500, seed=int(rng.integers(1 << 30))).symbols
            assert np.all(A[s[:-1] - 1, s[1:] - 1] > 0)

    def test_reproducible(self):
        P = [[0.2, 0.8], [0.6, 0.4]]
        assert sample_chain(P, 100, seed=11) == sample_chain(P, 100, seed=11)
        assert sample_chain(P, 100, seed=11) != sample_chain(P, 100, seed=12)

    def test_errors(self):
        with pytest.raises(ValueError):
            sample_chain([[1.0]], 0)
        with pytest.raises(ValueError):
            sample_chain([[0.5, 0.6], [0.5, 0.5]], 3)
        with pytest.raises(ValueError):
            sample_chain([[1.0]], 3, initial=2)


class TestIrreducible:
    def test_examples(self):
        assert is_irreducible([[0, 1], [1, 0]])
        assert not is_irreducible([[1, 0], [0.5, 0.5]])

    def test_random_against_closure(self, rng):
        for _ in range(200):
            k = int(rng.integers(1, 6))
            A = random_stochastic(rng, k, zero_frac=0.6)
            assert is_irreducible(A) == reachability_oracle(A)

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_exhaustive_patterns(self, k):
        # every zero/positive pattern in which each row has a positive entry
        rows = [r for r in itertools.product([0, 1], repeat=k) if any(r)]
        for pattern in itertools.product(rows, repeat=k):
            A = np.array(pattern, dtype=float)
            A /= A.sum(axis=1, keepdims=True)
            assert is_irreducible(A) == reachability_oracle(A)


class TestEstimate:
    def test_alternation(self):
        P = estimate_transition_matrix([1, 2, 1, 2, 1], 2)
        assert np.array_equal(P.entries, [[0, 1], [1, 0]])

    def test_single_symbol(self):
        assert np.array_equal(estimate_transition_matrix([1, 1, 1], 1).entries, [[1.0]])

    def test_missing_state_rejected(self):
        with pytest.raises(ValueError, match="never observed"):
            estimate_transition_matrix([1, 1, 2], 3)

    def test_unseen_row_uniform_with_warning(self):
        with pytest.warns(UserWarning, match="never left"):
            P = estimate_transition_matrix([1, 1, 2], 2)
        assert np.allclose(P.entries[1], [0.5, 0.5])

    def test_valid_pairs_mask(self):
        P = estimate_transition_matrix([1, 2, 1, 1], 2, valid_pairs=[True, True, False])
        assert np.array_equal(P.entries, [[0, 1], [1, 0]])

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_law_of_large_numbers(self, rng, k):
        A = random_stochastic(rng, k)
        while not is_irreducible(A):
            A = random_stochastic(rng, k)
        s = sample_chain(A, 100_000, seed=k)
        assert np.max(np.abs(estimate_transition_matrix(s).entries - A)) <= 0.02

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(1, 3), min_size=2, max_size=60))
    def test_rows_stochastic(self, seq):
        if set(seq) != {1, 2, 3}:
            return
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            P = estimate_transition_matrix(seq, 3)
        assert np.allclose(P.entries.sum(axis=1), 1.0, atol=1e-12)


def test_text_round_trip(tmp_path):
    P = TransitionMatrix([[0.1, 0.9], [0.7, 0.3]])
    write_transition_matrix(P, tmp_path / "P.txt")
    assert (tmp_path / "P.txt").read_text().splitlines()[0] == "2"
    assert np.array_equal(read_transition_matrix(tmp_path / "P.txt").entries, P.entries)
    s = SymbolSequence([1, 2, 2, 1], 2)
    write_symbol_sequence(s, tmp_path / "s.txt")
    assert (tmp_path / "s.txt").read_text() == "1\n2\n2\n1\n"
    assert read_symbol_sequence(tmp_path / "s.txt") == s


def test_read_transition_matrix_shape_error(tmp_path):
    (tmp_path / "P.txt").write_text("2\n1 0\n")
    with pytest.raises(ValueError, match="expected 2 rows"):
        read_transition_matrix(tmp_path / "P.txt")
