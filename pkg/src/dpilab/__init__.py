"""Desk-scale lab for scalar-conditioned generative networks.

Conditions a network on a time / noise-level scalar by blending two learnable
parameter sets through a learnable monotone map (deep parameter
interpolation), alongside the standard baselines (scalar-map concat,
sinusoidal/FiLM embeddings, NCSNv2 output rescaling), with
variance-preserving diffusion and flow-matching training and sampling on
synthetic data.
"""

from .checkpoint import Checkpoint, checkpoint_load, checkpoint_save
from .conditioning import (ScalarContext, film_modulate, ncsnv2_rescale,
                           scalar_map_concat, sinusoidal_embedding)
from .data import gauss8_centers, make_dataset
from .diffusion import (VPSchedule, corrupt, ddim_sample, epsilon_loss,
                        make_schedule, ncsnv2_loss, predict_eps, score_from_eps,
                        tweedie_denoise)
from .dpi import (BlendedView, DualParams, blend_parameters, count_overhead,
                  dpi_forward, init_dual)
from .errors import (ConfigError, DomainError, FormatError, NumericAbort,
                     ShapeError, UsageError)
from .evaluation import (SweepReport, denoise_sweep, energy_distance,
                         mode_coverage, svg_line_plot)
from .flow import flow_loss, ode_sample, path_point, predict_v, velocity_target
from .interpolant import MonotoneInterpolant, export_lambda_csv
from .networks import CondMLP, ConditionedModel, TinyUNet, param_manifest
from .optim import EMA, AdamW, adamw_step, ema_update
from .tensor import Tape, Tensor, finite_difference_gradient
from .training import (RunConfig, build_model, config_from_text, config_to_text,
                       restore_model, train)

__version__ = "0.1.0"
