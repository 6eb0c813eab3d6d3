"""Data-driven synthesis of robust control invariant polytopes for LPV systems.

The toolkit computes a configuration-constrained invariant polytope and the
vertex control inputs that render it invariant, directly from one measured
state-input-scheduling trajectory, by assembling and solving a single linear
program. It also verifies the resulting certificate and simulates the vertex
controller in closed loop.
"""

from ccrci.polytope import Polytope, VertexSet
from ccrci.cc_template import CCTemplate, build_cc_machinery, build_circular_template
from ccrci.dataset import TrajectoryData, DataMatrices, FeasibleModelSet
from ccrci.synthesis import RCISolution, SynthesisProblem, synthesize, synthesize_model_based
from ccrci.runtime import PlantModel, SamplerSpec, simulate_closed_loop, vertex_controller

__version__ = "0.1.0"

__all__ = [
    "Polytope",
    "VertexSet",
    "CCTemplate",
    "build_cc_machinery",
    "build_circular_template",
    "TrajectoryData",
    "DataMatrices",
    "FeasibleModelSet",
    "RCISolution",
    "SynthesisProblem",
    "synthesize",
    "synthesize_model_based",
    "PlantModel",
    "SamplerSpec",
    "simulate_closed_loop",
    "vertex_controller",
]
