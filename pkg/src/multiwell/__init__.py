"""Smooth multi-well potential learning with gated convex mixtures."""

from .autodiff import (Dual, GradCheckReport, ParamStore, Var,
                       directional_input_derivative, eval_with_param_grad,
                       finite_difference_check, input_gradient)
from .icnn import (ICNNConfig, ICNNParams, icnn_forward, icnn_init,
                   icnn_input_gradient, project_nonnegative)
from .mixture import (LSEConfig, LSEModel, active_mode_count, gate)
from .training import (AdamState, Dataset, TrainConfig, TrainHistory,
                       adam_step, loss_gradient_mse, loss_value_mse, train)

__version__ = "0.1.0"
