import math

import numpy as np
import pytest

from camis.graphs import Graph, IndependenceClass, config_mask, gen_open_chain, gen_random_graph
from camis.markov import transition_row
from camis.pca import (EnsembleStats, PcaParams, estimate_ensemble, pca_step,
                       run_to_absorption, stats_record, step_mask, sweep_p)


def _rng(seed=0):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


class TestStep:
    def test_conflict_sweep_is_deterministic(self, four_node):
        rng = _rng()
        for _ in range(20):
            assert pca_step(four_node, "0110", PcaParams(0.7), rng) == "0000"

    def test_conflict_with_survivor(self, four_node):
        # 1011: vertices 3 and 4 clash and die, vertex 1 survives untouched
        rng = _rng()
        for _ in range(20):
            assert pca_step(four_node, "1011", PcaParams(0.7), rng) == "1000"

    def test_maximal_is_fixed(self, four_node):
        rng = _rng()
        for bits in ("0100", "1001", "1010"):
            assert pca_step(four_node, bits, PcaParams(0.99), rng) == bits

    def test_mask_in_mask_out(self, four_node):
        rng = _rng()
        out = pca_step(four_node, 0, PcaParams(0.5), rng)
        assert isinstance(out, int)

    def test_one_step_frequencies_match_kernel(self, four_node):
        # spec row: 1000 -> {1011: p^2, 1010: pq, 1001: pq, 1000: q^2}
        p = 0.6
        runs = 100_000
        rng = _rng(7)
        counts = {}
        src = config_mask("1000", 4)
        for _ in range(runs):
            out = step_mask(four_node, src, p, rng)
            counts[out] = counts.get(out, 0) + 1
        row = transition_row(four_node, "1000", p).successors
        assert set(counts) <= set(row)
        for succ, prob in row.items():
            sigma = math.sqrt(prob * (1 - prob) / runs)
            assert abs(counts.get(succ, 0) / runs - prob) < 4 * sigma


class TestRunToAbsorption:
    def test_edgeless_p1_single_step(self):
        g = Graph.from_edges(3, [])
        res = run_to_absorption(g, PcaParams(1.0, seed=0))
        assert (res.final, res.steps, res.absorbed) == ("111", 1, True)

    def test_determinism(self, four_node):
        a = run_to_absorption(four_node, PcaParams(0.5, seed=123))
        b = run_to_absorption(four_node, PcaParams(0.5, seed=123))
        assert a == b

    def test_absorbs_into_maximal_set(self, four_node):
        for seed in range(50):
            res = run_to_absorption(four_node, PcaParams(0.5, seed=seed))
            assert res.absorbed
            assert res.final in {"0100", "1001", "1010"}
            assert res.cls in (IndependenceClass.MAXIMAL_NON_MAXIMUM,
                               IndependenceClass.MAXIMUM)

    def test_preabsorbed_start_counts_zero(self, four_node):
        res = run_to_absorption(four_node, PcaParams(0.5, seed=1), start="1010")
        assert res.steps == 0 and res.absorbed

    def test_budget_exhaustion_flagged(self):
        g = Graph.from_edges(2, [(0, 1)])
        res = run_to_absorption(g, PcaParams(1.0, seed=4, max_steps=64))
        assert not res.absorbed
        assert res.steps == 64

    def test_random_graph_absorbed_runs_are_maximal(self):
        g = gen_random_graph(9, 2.0, seed=8)
        for seed in range(30):
            res = run_to_absorption(g, PcaParams(0.8, seed=seed))
            assert res.absorbed
            mask = config_mask(res.final, g.n)
            for i in range(g.n):
                assert (mask >> i) & 1 or mask & g.neighbor_masks[i]


class TestEnsembles:
    def test_p_zero_never_absorbs(self, four_node):
        stats = estimate_ensemble(four_node, 0.0, runs=10, base_seed=0, max_steps=200)
        assert stats.unabsorbed == 10
        assert math.isnan(stats.p_mis_hat)

    def test_complete_graph_always_maximum(self):
        g = Graph.from_edges(4, [(i, j) for i in range(4) for j in range(i + 1, 4)])
        stats = estimate_ensemble(g, 0.3, runs=200, base_seed=0)
        assert stats.p_mis_hat == 1.0

    def test_invalid_args(self, four_node):
        with pytest.raises(ValueError):
            estimate_ensemble(four_node, 0.5, runs=0, base_seed=0)
        with pytest.raises(ValueError):
            estimate_ensemble(four_node, 1.2, runs=5, base_seed=0)

    def test_replay_matches_individual_runs(self, four_node):
        stats = estimate_ensemble(four_node, 0.5, runs=40, base_seed=17)
        manual = [run_to_absorption(four_node, PcaParams(0.5, seed=17 + r))
                  for r in range(40)]
        hits = sum(1 for r in manual
                   if r.absorbed and r.cls is IndependenceClass.MAXIMUM)
        assert stats.p_mis_hat == pytest.approx(hits / 40)
        assert stats.mean_steps == pytest.approx(np.mean([r.steps for r in manual]))

    def test_batched_deterministic_and_consistent(self, four_node):
        a = estimate_ensemble(four_node, 0.5, runs=20_000, base_seed=5, method="batched")
        b = estimate_ensemble(four_node, 0.5, runs=20_000, base_seed=5, method="batched")
        assert a == b
        # both engines agree with the exact value within 4 binomial sigma
        exact = 6 / 7
        sigma = math.sqrt(exact * (1 - exact) / 20_000)
        assert abs(a.p_mis_hat - exact) < 4 * sigma

    def test_sweep_empty_grid(self, four_node):
        assert sweep_p(four_node, [], runs=10, base_seed=0) == []

    def test_sweep_increasing_on_four_node(self, four_node):
        out = sweep_p(four_node, [0.5, 0.99], runs=4000, base_seed=2)
        assert out[0][1].p_mis_hat < out[1][1].p_mis_hat

    def test_k2_parity_trap_at_p1(self):
        # on a single edge at p=1 the chain oscillates 00 -> 11 -> 00 forever
        g = Graph.from_edges(2, [(0, 1)])
        out = sweep_p(g, [1.0], runs=20, base_seed=0, max_steps=100)
        stats = out[0][1]
        assert stats.unabsorbed == stats.runs
        assert math.isnan(stats.p_mis_hat)

    def test_stats_record_fields(self, four_node):
        stats = estimate_ensemble(four_node, 0.5, runs=10, base_seed=0)
        rec = stats_record("four-node", 0.5, stats, 0)
        assert set(rec) == {"graph_id", "p", "runs", "p_mis_hat", "mean_steps",
                            "var_steps", "unabsorbed", "seed"}
