"""Cellular-automaton solvers for the maximum independent set problem."""

__version__ = "0.1.0"

from .graphs import (Graph, IndependenceClass, classify, enumerate_maximal_sets,
                     gen_open_chain, gen_random_graph, gen_unit_disk,
                     is_independent, mis_energy, mis_size, read_graph,
                     write_edge_list)
from .markov import (AbsorptionReport, absorption_analysis, builtin_graph,
                     four_node_mis_probability, house_mis_probability,
                     house_mis_probability_derived, local_theta, transition_row,
                     validate_house_fixture)
from .pca import (EnsembleStats, PcaParams, RunResult, estimate_ensemble,
                  pca_step, run_to_absorption, sweep_p)
from .quantum import (CycleTrace, DensityVec, JumpOperatorSet, ProtocolParams,
                      PxpHamiltonian, build_jump_operators, build_pxp,
                      dissipative_evolve, dissipative_evolve_diagonal,
                      open_chain_fixed_point, open_chain_recursion, overlap,
                      run_protocol, threshold_angle, unitary_step)

__all__ = [name for name in dir() if not name.startswith("_")]
