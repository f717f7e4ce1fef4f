"""depthcal: metric depth from frozen relative-depth predictions.

Recovers metric depth through a global affine calibration in inverse depth.
A caption-conditioned head predicts an uncertainty envelope over the
unconstrained calibration parameters, a vision-conditioned selector picks an
image-specific calibration inside it, and a closed-form per-image
least-squares oracle supplies training targets. Ships with the full training
objective, the standard metric-depth evaluation suite, bit-exact tensor and
manifest I/O, a synthetic dataset generator, a FastAPI service, and a CLI.
"""

from .calib import (
    CalibBounds,
    ConstrainedCalib,
    DepthMap,
    Envelope,
    InverseDepthMap,
    Offset,
    UnconstrainedCalib,
    compose,
    logit,
    map_params,
    recover_metric,
    sigmoid,
    softplus,
    softplus_inv,
    unmap_params,
)
from .errors import DataError, DepthcalError, DomainError

__version__ = "0.1.0"
