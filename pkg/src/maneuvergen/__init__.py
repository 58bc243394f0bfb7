"""Template-driven generation of multi-signal driving maneuvers.

Sketch-level templates are translated into realistic maneuvers by a
two-stage adversarial model; a latent-space search steered by
differentiable coverage indicators finds maneuvers that exercise given
branching conditions.
"""
__version__ = "0.1.0"

from .coverage import compile_indicators, eval_bool, eval_search, parse, parse_branches
from .errors import ConfigError, FormatError, ManeuverGenError, ParameterError, SearchError, ShapeError, TrainingError
from .generation import (
    Scenario,
    draw_alphas,
    envelope_compliance,
    expand_maneuver,
    generate_from_scenario,
    mix_codes,
    sample_simplex,
    translate,
)
from .metrics import ssim_1d
from .networks import ManeuverGAN, ModelConfig, assemble_and_crop, desk_config, load_checkpoint, save_checkpoint, tiny_config
from .search import MockGenerator, SearchParams, SearchResult, automate, automate_multi
from .synth import Maneuver, SimConfig, build_dataset, load_dataset, save_dataset, simulate_maneuver, takeoff_config
from .templates import ExtractParams, Template, build_paired_dataset, extract_template, smooth, sobel_1d
from .training import TrainConfig, build_model, evaluate_cycle_ssim, train
