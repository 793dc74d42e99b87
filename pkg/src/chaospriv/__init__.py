"""Leakage-minimising additive noise realised by synchronised chaotic oscillators."""

from .noiseopt import (NoiseDesignProblem, NoiseSolution, OptimalNoiseDesigner, SolverOptions,
                       brute_force_solve, cost, cost_gradient, project_simplex, solve)
from .prng import CellPartition, CellQuantizer, build_cells, generate_stream, quantize
from .probmodel import (Alphabet, ConditionalPmf, JointPmf, Pmf, entropy, marginal,
                        mutual_information, plugin_mutual_information, sumset_alphabet)

__version__ = "0.1.0"
