import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from camis.errors import InstanceError, SizeLimitError
from camis.graphs import (Graph, IndependenceClass, classify, config_mask,
                          enumerate_maximal_sets, gen_open_chain,
                          gen_random_graph, gen_unit_disk, graph_to_json,
                          is_independent, mask_config, maximal_masks,
                          maximal_masks_pivot, mis_energy, mis_size,
                          read_graph, write_edge_list)


def random_graphs(max_n=9):
    @st.composite
    def build(draw):
        n = draw(st.integers(2, max_n))
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
        return Graph.from_edges(n, chosen)
    return build()


class TestGraphBasics:
    def test_canonicalization(self):
        g = Graph.from_edges(3, [(2, 0), (0, 2), (1, 0)])
        assert g.edges == ((0, 1), (0, 2))
        assert g.average_degree == pytest.approx(4 / 3)

    def test_rejects_self_loop(self):
        with pytest.raises(ValueError, match="self-loop"):
            Graph(3, ((1, 1),))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            Graph(3, ((0, 3),))

    def test_neighbor_masks_symmetric(self, four_node):
        nb = four_node.neighbor_masks
        for i in range(four_node.n):
            for j in range(four_node.n):
                assert bool(nb[i] >> j & 1) == bool(nb[j] >> i & 1)

    def test_config_roundtrip(self):
        assert config_mask("1010", 4) == 0b0101
        assert mask_config(0b0101, 4) == "1010"
        assert config_mask([1, 0, 0, 1], 4) == 0b1001

    def test_config_length_mismatch(self, four_node):
        with pytest.raises(InstanceError):
            is_independent(four_node, "10100")


class TestIndependence:
    def test_mis_config_independent(self, four_node):
        assert is_independent(four_node, "1010")

    def test_empty_always_independent(self, four_node, house):
        assert is_independent(four_node, "0000")
        assert is_independent(house, "0000000")

    def test_edge_violation(self, four_node):
        assert not is_independent(four_node, "0110")

    def test_classify_table(self, four_node):
        assert classify(four_node, "0100") is IndependenceClass.MAXIMAL_NON_MAXIMUM
        assert classify(four_node, "1001") is IndependenceClass.MAXIMUM
        assert classify(four_node, "0001") is IndependenceClass.INDEPENDENT_NON_MAXIMAL
        assert classify(four_node, "0110") is IndependenceClass.NOT_INDEPENDENT

    def test_classes_partition(self, house):
        seen = {classify(house, mask_config(s, 7)) for s in range(1 << 7)}
        assert seen == set(IndependenceClass)


class TestEnumeration:
    def test_four_node_maximal(self, four_node):
        assert set(enumerate_maximal_sets(four_node)) == {"0100", "1001", "1010"}

    def test_chain3_maximal(self, chain3):
        assert set(enumerate_maximal_sets(chain3)) == {"010", "101"}

    def test_edgeless_two(self):
        g = Graph.from_edges(2, [])
        assert enumerate_maximal_sets(g) == ["11"]

    def test_mis_sizes(self, four_node):
        assert mis_size(four_node) == 2
        assert mis_size(gen_open_chain(7)) == 4
        assert mis_size(Graph.from_edges(5, [])) == 5

    def test_chain7_unique_maximum(self):
        g = gen_open_chain(7)
        maxima = [s for s in enumerate_maximal_sets(g)
                  if classify(g, s) is IndependenceClass.MAXIMUM]
        assert maxima == ["1010101"]

    def test_limit_refusal(self):
        g = Graph.from_edges(27, [])
        with pytest.raises(SizeLimitError, match="26"):
            enumerate_maximal_sets(g)

    def test_limit_override(self):
        g = Graph.from_edges(5, [])
        with pytest.raises(SizeLimitError):
            enumerate_maximal_sets(g, limit=4)

    @settings(max_examples=60, deadline=None)
    @given(random_graphs())
    def test_scan_equals_pivot(self, g):
        assert maximal_masks(g) == maximal_masks_pivot(g)

    @settings(max_examples=40, deadline=None)
    @given(random_graphs())
    def test_maximal_sets_are_maximal(self, g):
        for bits in enumerate_maximal_sets(g):
            assert is_independent(g, bits)
            mask = config_mask(bits, g.n)
            for i in range(g.n):
                covered = (mask >> i) & 1 or mask & g.neighbor_masks[i]
                assert covered, f"vertex {i} free in {bits}"

    def test_numpy_scan_path_agrees(self):
        g = gen_random_graph(17, 2.0, seed=5)
        assert maximal_masks(g) == maximal_masks_pivot(g)
        assert mis_size(g) == max(m.bit_count() for m in maximal_masks(g))


class TestEnergy:
    def test_mis_energy_values(self, four_node):
        assert mis_energy(four_node, "1010", 2.0) == pytest.approx(-2.0)
        assert mis_energy(four_node, "0000", 2.0) == 0.0
        assert mis_energy(four_node, "1111", 2.0) == pytest.approx(4.0)

    def test_requires_positive_weight(self, four_node):
        with pytest.raises(ValueError):
            mis_energy(four_node, "0000", 0.0)

    @settings(max_examples=25, deadline=None)
    @given(random_graphs(max_n=7))
    def test_ground_states_are_maximum(self, g):
        # for u > 1 the energy minimum is attained exactly on the Maximum class
        energies = {s: mis_energy(g, s, 2.0) for s in range(1 << g.n)}
        emin = min(energies.values())
        argmin = {s for s, e in energies.items() if e == pytest.approx(emin)}
        maxima = {s for s in range(1 << g.n)
                  if classify(g, s) is IndependenceClass.MAXIMUM}
        assert argmin == maxima


class TestGenerators:
    def test_random_edge_count(self):
        assert gen_random_graph(10, 2.0, seed=1).m == 10

    def test_random_complete(self):
        g = gen_random_graph(5, 4.0, seed=1)
        assert g.m == 10

    def test_random_determinism(self):
        a = gen_random_graph(12, 2.5, seed=42)
        b = gen_random_graph(12, 2.5, seed=42)
        assert a == b

    def test_random_infeasible(self):
        with pytest.raises(ValueError):
            gen_random_graph(5, 9.0, seed=1)

    def test_realized_degree_exact(self):
        for n, k in [(10, 2.0), (11, 2.5), (14, 3.3)]:
            g = gen_random_graph(n, k, seed=3)
            assert g.average_degree == pytest.approx(2 * round(k * n / 2) / n)

    def test_chain(self):
        assert gen_open_chain(3).edges == ((0, 1), (1, 2))
        assert gen_open_chain(1).edges == ()
        assert gen_open_chain(7).m == 6

    def test_unit_disk_extremes(self):
        g = gen_unit_disk(6, radius=10.0, box=1.0, seed=0)
        assert g.m == 15
        g = gen_unit_disk(6, radius=1e-9, box=1.0, seed=0)
        assert g.m == 0

    def test_unit_disk_determinism(self):
        assert gen_unit_disk(8, 0.4, 1.0, 9) == gen_unit_disk(8, 0.4, 1.0, 9)


class TestFileFormats:
    def test_edge_list_roundtrip(self, tmp_path, four_node):
        path = tmp_path / "g.edges"
        write_edge_list(four_node, path)
        text = path.read_text().splitlines()
        assert text[0] == "4 4"
        assert text[1] == "1 2"
        assert read_graph(path) == four_node

    def test_json_roundtrip(self, tmp_path, house):
        path = tmp_path / "g.json"
        path.write_text(graph_to_json(house))
        assert read_graph(path) == house
        doc = json.loads(graph_to_json(house))
        assert doc["n"] == 7 and len(doc["edges"]) == 10

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.edges"
        path.write_text("4\n1 2\n")
        with pytest.raises(ValueError, match="header"):
            read_graph(path)

    def test_wrong_edge_count(self, tmp_path):
        path = tmp_path / "bad.edges"
        path.write_text("3 2\n1 2\n")
        with pytest.raises(ValueError, match="promises"):
            read_graph(path)
