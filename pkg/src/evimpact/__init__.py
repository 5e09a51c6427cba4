"""Event-camera bat/ball impact timing.

Dense event frames from sliding-window accumulation, fusion and refinement
of bidirectional coarse masks, weighted-centroid distance minimisation for
the contact frame, and the timing metrics used to score it.  A synthetic
scene simulator supplies clips with exact contact times.
"""

from .errors import (BoundsError, ConfigError, DegenerateSceneError, EvImpactError, FormatError,
                     NoImpactDetectedError, NoMeasurableFramesError, ParseError, ShapeError)
from .evaluation import (ClipEval, Thresholds, annotator_sigma, gt_from_annotations, mae, report,
                         success_rate)
from .events import (AccumConfig, Event, EventStream, FrameStack, accumulate, read_events_csv,
                     window_counts, write_events_csv)
from .formats import read_evf, read_prm, write_evf, write_prm
from .impact import (ImpactResult, ImuTrace, distance_series, estimate_impact, imu_detect,
                     latency_stats, weighted_centroid)
from .losses import (LossWeights, ProbStack, ce_weighted, circ, circ_grad, composite, dice, smooth,
                     smooth_grad)
from .refine import (FusedTargets, RefineInput, RefinerConfig, fuse_bidirectional, refine_clip,
                     refine_frame)
from .scene import (ClipBundle, DegradeConfig, SceneConfig, compute_gt_impact, degrade_coarse,
                    random_scene, simulate_clip)

__version__ = "0.1.0"
