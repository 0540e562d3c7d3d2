"""Decentralized two-robot cooperative localization with a factored cross-covariance."""

from .baselines import JointBelief, ccl_lm_update, ccl_predict, ccl_update, dr_step, sl_update
from .core import (
    ControlInput,
    CorruptStateError,
    CovarianceCollapseError,
    DCLError,
    FrameTransform,
    InvalidParameterError,
    InvalidStreamError,
    InvalidTimestepError,
    NoiseConfig,
    Pose2,
    wrap_angle,
)
from .dcl import (
    CompanionState,
    RobotBelief,
    UpdatePacket,
    coop_update_initiator,
    coop_update_responder,
    cross_covariance,
    predict,
    private_update,
    share_state,
)
from .motion import jacobians, propagate
from .network import BandwidthLedger, Link, LinkModel, continuous_broadcast_cost, try_send
from .sensors import (
    LidarScan,
    RangeBearing,
    WorldModel,
    abd_segment,
    extract_cylinder,
    gate,
    observe_static_landmark,
    render_scan,
)
from .sync import StampedQueue, extrapolate_control

__version__ = "0.1.0"
