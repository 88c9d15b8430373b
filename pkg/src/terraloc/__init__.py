"""terraloc: terrain-relative localization with a deterministic 2.5D simulator.

Local height grids are reduced to binary gradient edge maps and registered
against prior geodata by zero-mean template matching; the resulting
similarity distribution is fused with odometry and compass inside a clustered
particle filter to keep kilometer-scale dead-reckoning drift bounded. A
procedural world, sensor/error models, a mission state machine, and a run
harness close the loop for desk-scale experiments.
"""

from ._kernels import JIT_ENABLED
from .geodata import (
    EdgeMap,
    GridFormatError,
    HeightGrid,
    PointSample,
    binarize_edges,
    gradient_magnitude,
    load_dem,
    rasterize_points,
    rotate_to_north,
    save_dem,
)
from .harness import (
    ConfigError,
    RunLog,
    ScenarioConfig,
    compute_rmse,
    export,
    load_config,
    run_scenario,
)
from .matcher import (
    SCORE_FLOOR,
    SimilarityMap,
    blur,
    localize_once,
    match_template,
    normalize,
)
from .mission import (
    FrameSet,
    MissionEvent,
    MissionFsm,
    MissionState,
    Rigid2D,
    Waypoint,
    detection_check,
    fsm_step,
    search_pattern,
    virtual_goal,
)
from .particle_filter import (
    OdometryDelta,
    ParticleSet,
    PoseEstimate,
)
from .presets import PRESETS, build_preset
from .simworld import (
    ErrorModel,
    ErrorStream,
    SensorConfig,
    TruePose,
    WorldModel,
    WorldSpec,
    build_world,
    sample_prior_dem,
    sense_local,
    step_motion,
)

__version__ = "0.1.0"
