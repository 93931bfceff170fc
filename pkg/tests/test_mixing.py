import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pushpull import mixing
from pushpull.graph_core import Digraph, DigraphSequence, generate_sequence


class TestStochasticMatrices:

    @pytest.mark.parametrize("scheme", mixing.WEIGHT_SCHEMES)
    def test_row_stochastic_support(self, scheme):
        g = generate_sequence(6, "random_sc", horizon=1, seed=3, edge_prob=0.3)[0]
        A = mixing.build_row_stochastic(g, scheme).entries
        np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-15)
        expected = g.adjacency.T | np.eye(6, dtype=bool)
        np.testing.assert_array_equal(A > 0, expected)

    @pytest.mark.parametrize("scheme", mixing.WEIGHT_SCHEMES)
    def test_column_stochastic_support(self, scheme):
        g = generate_sequence(6, "random_sc", horizon=1, seed=3, edge_prob=0.3)[0]
        B = mixing.build_column_stochastic(g, scheme).entries
        np.testing.assert_allclose(B.sum(axis=0), 1.0, atol=1e-15)
        expected = g.adjacency.T | np.eye(6, dtype=bool)
        # B[j, i] > 0 for every out-neighbour j of i
        np.testing.assert_array_equal(B > 0, expected)

    def test_uniform_weights_on_ring(self):
        A = mixing.build_row_stochastic(Digraph.ring(3)).entries
        np.testing.assert_allclose(A, [[0.5, 0.0, 0.5], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]])
        B = mixing.build_column_stochastic(Digraph.ring(3)).entries
        np.testing.assert_allclose(B, A)

    def test_lazy_weights_keep_half_on_the_diagonal(self):
        g = Digraph(3, ((0, 1), (2, 1), (1, 0), (0, 2)))
        A = mixing.build_row_stochastic(g, "lazy").entries
        np.testing.assert_allclose(np.diag(A), 0.5)
        np.testing.assert_allclose(A[1], [0.25, 0.5, 0.25])

    def test_isolated_node_keeps_its_value(self):
        A = mixing.build_row_stochastic(Digraph(2, ()), "lazy").entries
        np.testing.assert_array_equal(A, np.eye(2))

    def test_unknown_scheme(self):
        with pytest.raises(ValueError, match="weight scheme"):
            mixing.build_row_stochastic(Digraph.ring(3), "metropolis")

    @pytest.mark.parametrize(
        "entries",
        [
            [[0.5, 0.5], [0.2, 0.7]],
            [[1.5, -0.5], [0.0, 1.0]],
            [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        ],
    )
    def test_row_stochastic_rejects(self, entries):
        with pytest.raises(ValueError):
            mixing.RowStochasticMatrix(np.array(entries))

    def test_column_stochastic_rejects_rows_only(self):
        with pytest.raises(ValueError, match="columns"):
            mixing.ColumnStochasticMatrix(np.array([[0.5, 0.5], [0.5, 0.5]]) + np.array([[0.1, -0.1], [0.0, 0.0]]))

    def test_entries_are_copied_and_frozen(self):
        raw = np.array([[0.5, 0.5], [0.5, 0.5]])
        A = mixing.RowStochasticMatrix(raw)
        raw[0, 0] = 9.0
        assert A.entries[0, 0] == 0.5
        with pytest.raises(ValueError):
            A.entries[0, 0] = 1.0

    def test_min_positive(self):
        A = mixing.build_row_stochastic(Digraph.ring(4))
        assert A.min_positive == 0.5
        assert mixing.build_row_stochastic(Digraph.complete(4)).min_positive == 0.25


class TestStochasticVector:

    def test_uniform(self):
        v = mixing.StochasticVector.uniform(4)
        assert (v.min, v.max, v.n) == (0.25, 0.25, 4)

    @pytest.mark.parametrize("values", [[0.5, 0.6], [1.2, -0.2], [[0.5, 0.5]]])
    def test_rejects(self, values):
        with pytest.raises(ValueError):
            mixing.StochasticVector(np.array(values))

    def test_small_drift_is_tolerated(self):
        mixing.StochasticVector(np.array([0.5, 0.5 + 1e-11]))


class TestWeightSequences:

    def test_pi_recursion(self, random_schedule):
        schedule = random_schedule(5, 30, seed=2)
        pis = mixing.pi_sequence(schedule.column_matrices)
        assert len(pis) == 31
        np.testing.assert_allclose(pis[0].values, 0.2)
        for k, B in enumerate(schedule.column_matrices):
            np.testing.assert_allclose(pis[k + 1].values, B.entries @ pis[k].values, rtol=0, atol=1e-15)

    def test_phi_recursion(self, random_schedule):
        schedule = random_schedule(5, 30, seed=2)
        phis = mixing.phi_sequence(schedule.row_matrices)
        assert len(phis) == 31
        np.testing.assert_allclose(phis[-1].values, 0.2)
        for k, A in enumerate(schedule.row_matrices):
            np.testing.assert_allclose(phis[k].values, A.entries.T @ phis[k + 1].values, rtol=0, atol=1e-15)

    def test_phi_with_terminal(self):
        schedule = mixing.build_schedule(DigraphSequence((Digraph.complete(2),)), 3)
        terminal = mixing.StochasticVector(np.array([1.0, 0.0]))
        phis = mixing.phi_sequence(schedule.row_matrices, terminal=terminal)
        np.testing.assert_allclose(phis[-1].values, [1.0, 0.0])
        np.testing.assert_allclose(phis[-2].values, [0.5, 0.5])

    def test_empty_lists_need_n(self):
        with pytest.raises(ValueError):
            mixing.pi_sequence([])
        assert len(mixing.pi_sequence([], n=3)) == 1
        assert len(mixing.phi_sequence([], n=3)) == 1

    def test_size_mismatch(self):
        B = mixing.build_column_stochastic(Digraph.ring(4))
        with pytest.raises(ValueError, match="round 0"):
            mixing.pi_sequence([B], n=3)

    def test_weight_sequences_lengths(self, random_schedule):
        schedule = random_schedule(4, 12, seed=8)
        phis, pis = mixing.weight_sequences(schedule)
        assert len(phis) == len(pis) == 13

    @settings(max_examples=20, deadline=None)
    @given(n=st.integers(2, 8), seed=st.integers(0, 2**16), scheme=st.sampled_from(mixing.WEIGHT_SCHEMES))
    def test_weights_stay_above_the_floor(self, n, seed, scheme):
        horizon = 4 * n
        seq = generate_sequence(n, "random_sc", horizon=horizon, seed=seed, edge_prob=0.3)
        schedule = mixing.build_schedule(seq, horizon, scheme)
        phis, pis = mixing.weight_sequences(schedule)
        pi_floor = mixing.weight_lower_bound(schedule.b, n)
        phi_floor = mixing.weight_lower_bound(schedule.a, n)
        assert all(pi.min >= pi_floor for pi in pis)
        assert all(phi.min >= phi_floor for phi in phis)

    def test_weight_lower_bound_value(self):
        assert mixing.weight_lower_bound(0.5, 2, window=2) == pytest.approx(0.5**4 / 2)


class TestSchedule:

    def test_cycles_and_shares_matrices(self):
        seq = DigraphSequence((Digraph.ring(3), Digraph.complete(3)))
        schedule = mixing.build_schedule(seq, 5)
        assert schedule.horizon == 5
        assert schedule.graphs == [seq[0], seq[1], seq[0], seq[1], seq[0]]
        assert schedule.rounds[0] is schedule.rounds[2]

    def test_bounds_a_and_b(self):
        seq = DigraphSequence((Digraph.ring(3), Digraph.complete(3)))
        schedule = mixing.build_schedule(seq, 2)
        assert schedule.a == pytest.approx(1.0 / 3.0)
        assert schedule.b == pytest.approx(1.0 / 3.0)

    def test_truncated(self, random_schedule):
        schedule = random_schedule(4, 10, seed=1)
        short = schedule.truncated(4)
        assert short.horizon == 4
        assert short.rounds == schedule.rounds[:4]
        with pytest.raises(ValueError):
            schedule.truncated(11)

    def test_cycled(self, random_schedule):
        schedule = random_schedule(4, 3, seed=1)
        longer = schedule.cycled(8)
        assert longer.horizon == 8
        assert all(longer.rounds[k] is schedule.rounds[k % 3] for k in range(8))
        assert schedule.cycled(2).rounds == schedule.rounds[:2]
        with pytest.raises(ValueError):
            mixing.MixingSchedule((), 4).cycled(1)

    def test_rejects_bad_arguments(self, ring3):
        with pytest.raises(ValueError):
            mixing.build_schedule(ring3, -1)
        with pytest.raises(ValueError):
            mixing.build_schedule(ring3, 3, "metropolis")

    def test_matrix_to_text(self):
        text = mixing.matrix_to_text(np.array([[1.0, 0.1], [1.0 / 3.0, 0.0]]))
        assert text == "1.0 0.1\n0.3333333333333333 0.0"
