"""Simulator and analysis toolkit for imitation-based social spectrum sharing."""

from .contention import ContentionConfig, grab_probability, grab_probability_array, grab_table, run_contention
from .channel import ChannelSpec, IIDIdle, MarkovIdle, UserRadioSpec, calibrate_snr, expected_rate
from .estimation import EstimateTable, NoiseModel, ObservationLog
from .graph import ClusterGraph, SocialGraph, build_cluster_graph, cluster_topology, read_edge_list
from .engine import EngineConfig, Simulator, SystemModel, run_simulation
from .meanfield import MeanFieldModel, iterate_to_equilibrium, noise_diff_cdf
from .analysis import centralized_optimum, check_imitation_equilibrium, jain_index, price_of_imitation
from .scenario import Scenario, ScenarioError, parse_scenario, serialize_scenario
from .experiment import run_experiment

__version__ = "0.1.0"
