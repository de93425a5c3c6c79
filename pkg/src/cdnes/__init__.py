"""Compressed distributed Nash-equilibrium seeking over networks."""

from .certify import CertificateError, RateCertificate, build_A, certify, certify_setup, spectral_radius_3x3
from .compressors import CompressorSpec, bit_cost, compress, compress_rows, constants, quantize, verify_assumption4
from .engine import AlgoConfig, DivergenceError, NetworkState, Trace, run, run_baseline, step
from .games import Game, connectivity_game, estimate_constants, game_mapping, lq_game
from .graph import (
    MixingMatrix,
    Topology,
    complete_graph,
    max_degree_weights,
    metropolis_weights,
    path_graph,
    random_connected_graph,
    spectral_gap,
)

__version__ = "0.1.0"
