"""Bayesian optimisation of discrete sequences with Hamiltonian Monte Carlo
proposals over a relaxed one-hot space."""

from .acquisition import Experiment, RunConfig, run_experiment
from .hmc import HmcConfig
from .oracles import LookupLandscape, NkLandscape, load_lookup
from .seq import Alphabet, Sequence, TaskDefinition
from .surrogate import ModelConfig, SurrogateEnsemble, SurrogateModel, TrainConfig

__all__ = [
    "Alphabet", "Experiment", "HmcConfig", "LookupLandscape", "ModelConfig",
    "NkLandscape", "RunConfig", "Sequence", "SurrogateEnsemble", "SurrogateModel",
    "TaskDefinition", "TrainConfig", "load_lookup", "run_experiment",
]
__version__ = "0.1.0"
