"""curvitrace: curvilinear structure reconstruction in 2D/3D voxel grids.

Geometric tube model, multi-feature tracing (geometry step + centerline snap
+ boundary stop), pluggable attribute providers, reference losses, and
topology-aware evaluation metrics.
"""

from .direction import (
    BinScheme,
    DegenerateDirectionError,
    DirectionDistribution,
    decode,
    decode_expectation,
    encode,
    one_hot_logits,
    resolve_sign,
)
from .geometry import (
    Branch,
    BranchForest,
    CenterNode,
    NormalFrame,
    branch_arc_length,
    gamma,
    perpendicular_frame,
    point_to_segment,
    resample,
    step,
)
from .grid import Grid
from .gridio import grid_read, grid_write, to_unit_float
from .losses import (
    LossWeights,
    class_loss,
    direction_loss,
    geo_loss,
    img_loss,
    radius_loss,
    sim_loss,
    total_loss,
    weighted_bce,
)
from .metrics import MatchConfig, MetricReport, abl, evaluate, match_nodes
from .providers import (
    ClassicalParams,
    FeatureQuery,
    FeatureResponse,
    build_classical,
    build_file,
    build_oracle,
)
from .raster import RasterConfig, make_boundary_label, make_centerline_label, rasterize, render_soft
from .swcio import swc_read, swc_write
from .synth import GroundTruthLabels, SynthConfig, synthesize
from .tracer import TraceConfig, VisitedMap, generate_seeds, snap, trace_all, trace_branch

__version__ = "0.1.0"
