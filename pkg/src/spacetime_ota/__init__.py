"""Multi-slot precoding/decoding design for over-the-air computation with
multiple receivers."""
from .network import (
    Topology, ChannelRealization, DataSamples, ProblemInstance,
    generate_topology, draw_channels, draw_samples, build_instance,
    save_instance, load_instance,
)
from .solver import (
    Factorization, SolverConfig, SolverTrace, SolverDivergence,
    objective, gradient, project, step_size, solve, ridge_oracle, BACKEND,
)
from .baseline import BaselineResult, baseline_eta, baseline_evaluate
from .evaluation import (
    MseReport, MonteCarloResult, analytical_mse, unbiasedness_residual,
    power_consumption, simulate_transmission,
)

__version__ = "0.1.0"
