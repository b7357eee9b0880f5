"""Square fiducial marker detection, identification and pose, plus chessboard corners."""

from .annotate import annotate
from .chessboard import BoardSpec, CornerGrid, find_chessboard_corners, outer_corners, refine_subpixel
from .contour import ContourSet, QuadCandidate, approx_polygon, find_quad_candidates, order_corners, trace_contours
from .errors import MarkerFindError
from .geometry import CameraIntrinsics, Homography, Pose, estimate_homography, pose_from_homography
from .image_core import (
    BinaryImage,
    ColorImage,
    GrayImage,
    load_pnm,
    read_pnm,
    save_pnm,
    threshold_adaptive_mean,
    threshold_global,
    to_grayscale,
    write_pnm,
)
from .matching import MarkerDetection, PatternRegistry, identify_marker, match_template, ncc_score, rectify_candidate
from .pipeline import DetectConfig, ThresholdMode, detect, detections_json

__all__ = [
    "annotate",
    "BoardSpec",
    "CornerGrid",
    "find_chessboard_corners",
    "outer_corners",
    "refine_subpixel",
    "ContourSet",
    "QuadCandidate",
    "approx_polygon",
    "find_quad_candidates",
    "order_corners",
    "trace_contours",
    "MarkerFindError",
    "CameraIntrinsics",
    "Homography",
    "Pose",
    "estimate_homography",
    "pose_from_homography",
    "BinaryImage",
    "ColorImage",
    "GrayImage",
    "load_pnm",
    "read_pnm",
    "save_pnm",
    "threshold_adaptive_mean",
    "threshold_global",
    "to_grayscale",
    "write_pnm",
    "MarkerDetection",
    "PatternRegistry",
    "identify_marker",
    "match_template",
    "ncc_score",
    "rectify_candidate",
    "DetectConfig",
    "ThresholdMode",
    "detect",
    "detections_json",
]
