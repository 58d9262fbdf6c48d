"""Exact and budgeted tools for Bayesian and universal sequence prediction."""

__version__ = "0.1.0"

from splab.bayes_mixture import MixtureModel, mixture_logprob, mixture_predict, posterior_weights
from splab.env_models import Bernoulli, Deterministic, Markov, Multinomial, env_conditional, env_logprob, sample_sequence
from splab.errors import ConfigError, DomainError, InputError, MappingError, ResourceError, SplabError

__all__ = [
    "Bernoulli", "ConfigError", "Deterministic", "DomainError", "InputError", "MappingError",
    "Markov", "MixtureModel", "Multinomial", "ResourceError", "SplabError", "env_conditional",
    "env_logprob", "mixture_logprob", "mixture_predict", "posterior_weights", "sample_sequence",
    "__version__",
]
