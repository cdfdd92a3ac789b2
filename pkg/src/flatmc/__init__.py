"""Tail-matching importance sampling: flatten U below a threshold, sample, reweight."""

from .density import BnnPosterior, GaussianMixture, Quadratic, sample_mixture_iid
from .errors import (BoxTooSmallError, DivergenceError, EnvelopeError, FlatmcError, HypothesisError,
                     InputError, NumericalError, PrecisionError, PreconditionError, UnsupportedError)
from .estimator import SnisResult, empirical_rho, ess, quadrature_rho, snis
from .flatten import FlattenedTarget, FlattenSpec, choose_M, flattened_eval, t_value
from .kernels import BACKEND
from .profiles import A1Profile, check_tractability
from .samplers import ChainConfig, run_chains, run_mala, run_ula

__version__ = "0.1.0"
