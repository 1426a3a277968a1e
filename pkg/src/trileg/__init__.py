"""Tri-leg magnetic soft robot: simulator, safety layer, dataset toolchain.

Public surface re-exported here; see the module docstrings for details.
"""

from .actuation import (
    CoilMatrix,
    FieldTriple,
    GaitSignal,
    MagnetMoment,
    SafetyEnvelope,
    VoltageTriple,
    apply_increment,
    gait_sample,
    project_voltage,
    randomize_coil_matrix,
    torque,
    voltage_to_field,
)
from .codec import (
    ActionSentence,
    QuantizerSpec,
    StreamParser,
    SupervisionTarget,
    build_target,
    dequantize,
    quantize,
)
from .config import Config, load_config, save_config
from .episodes import (
    Episode,
    EpisodeSink,
    MetricsReport,
    Sample,
    load_episode,
    mse,
    prune_static,
    replay_episode,
    save_episode,
    summarize_dataset,
)
from .errors import EpisodeError, InstructionParseError, ValidationError
from .expert import (
    INSTRUCTION_PRESETS,
    ExpertPolicy,
    GaitPhase,
    InstructionSpec,
    Phase,
    parse_instruction,
    primitive_spec_for,
    rollout,
)
from .gateway import Gateway, eval_all, run_eval
from .primitives import (
    Kind,
    PrimitiveSpec,
    TrialResult,
    Violation,
    check_frame,
    judge_trial,
    macro_average,
    success_rate,
)
from .render import Renderer, SceneSpec, default_scene, encode_png, world_to_pixel
from .robot import LegGeometry, ResponseCurves, RobotState, Simulator, eval_curve

__version__ = "0.1.0"
