"""Trickle dissemination with a fixed or adaptive redundancy constant."""

from .analysis import (
    asymptotic_star,
    kernel_chain_monte_carlo,
    p_alpha_series,
    p_star_alpha,
    return_time_tail,
    star_markov,
    stationary_density,
    transient_density,
)
from .engine import EventLog, SimConfig, TrickleSimulator, derive_seed, run, run_batch
from .rpl import RplSimulator, run_rpl
from .topology import Topology, TopologySpec, random_geometric, single_cell, star
from .trickle import Adaptive, Fixed, TrickleParams

__all__ = [
    "Adaptive",
    "EventLog",
    "Fixed",
    "RplSimulator",
    "SimConfig",
    "Topology",
    "TopologySpec",
    "TrickleParams",
    "TrickleSimulator",
    "asymptotic_star",
    "derive_seed",
    "kernel_chain_monte_carlo",
    "p_alpha_series",
    "p_star_alpha",
    "random_geometric",
    "return_time_tail",
    "run",
    "run_batch",
    "run_rpl",
    "single_cell",
    "star",
    "star_markov",
    "stationary_density",
    "transient_density",
]

__version__ = "0.1.0"
