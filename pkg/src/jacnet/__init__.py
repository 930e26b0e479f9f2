"""Learn functions by learning their Jacobian and integrating it along paths."""

from .field import ActivationSpec, JacobianField, MlpParams, eval_field, field_param_grad, init_field
from .integrate import IntegrationError, IntegratorConfig, LinearPath, line_integrate, linear_path, solve_ivp
from .linalg import SingularMatrixError
from .model import JacNetModel, conservativity_diagnostic, invert, make_model, predict, predict_grad, round_trip_error
from .train import Dataset, TrainConfig, TrainState, sample_dataset, train

__version__ = "0.1.0"
