# Tools module for local proper scoring rules
from .densities import Density, gaussian, gaussian_mixture, kde, logistic_product, mixture_path, unnormalized
from .kernels import kernel_by_name, profile_by_name, radial_kernel
from .scores import ScoringRule, blend_rule, hyvarinen_rule, kernel_rule, log_rule, radial_rule
from .experiments import ExperimentRunner
