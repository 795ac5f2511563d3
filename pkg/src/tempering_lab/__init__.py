"""Entropy-regularized PAC-Bayes rules over finite hypothesis classes."""
from .errors import (ConfigError, ConvergenceError, ConvexityError, DomainError, NoSolutionError,
                     QuadratureError, ShapeError)
from .kernels import (binary_entropy, binary_entropy_deriv, binary_entropy_deriv_inv,
                      binary_entropy_inv_lower, binary_kl, logit2, logit_e, sigmoid_e)
from .model import (ErrorCounts, HypothesisClass, Instance, Posterior, empirical_loss, kl_to_prior,
                    objective_eb, objective_pp, population_loss)
from .rules import (EtaPrior, bayes_posterior, empirical_bayes_posterior, eta_hat_marginal, eta_hat_profile,
                    mdl_select, plugin_posterior, posterior_tv, profile_posterior)
from .tempering import (LambdaSchedule, ell_lambda, emit_tempering_grid, lemma9_gap, t_lambda, u_lambda,
                        u_lambda_inverse)

__version__ = "0.1.0"
