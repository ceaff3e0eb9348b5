"""Occlusion boundary detection toolkit.

Maps and file formats (:mod:`.maps`), class-imbalance losses with
analytic gradients (:mod:`.losses`), boundary-map thinning and tangent
adjustment (:mod:`.thinning`), the PR/ODS/OIS/AP and occlusion-curve
benchmark (:mod:`.benchmark`), a synthetic scene generator with exact
ground truth (:mod:`.synth`), a tiny trainable two-head pixel classifier
(:mod:`.trainer`) and the pipeline CLI (:mod:`.cli`).
"""

from .angles import fold_angle
from .benchmark import (EvalSummary, MatchParams, OcclusionCurvePoint, PRPoint,
                        aor_curve, f_measure, match_boundaries, opr_curve,
                        pr_sweep, summarize)
from .errors import (CheckFailure, FormatError, OccBoundError, ParameterError,
                     ValidationError)
from .losses import (AttentionParams, FocalParams, MultiTaskParams, angle_fold,
                     attention, cce, compute_alpha, focal, loss_curve_table,
                     multitask_loss, orientation_loss, smooth_l1)
from .maps import (GroundTruth, ManifestRecord, load_map, read_manifest, save_map,
                   threshold_map, validate_pair, write_manifest)
from .synth import Disk, SceneSpec, generate_dataset, generate_scene
from .thinning import NmsParams, adjust_orientations, estimate_normals, local_tangent, nms_thin
from .trainer import (TinyNet, TrainConfig, backward, forward, init_params,
                      load_checkpoint, predict, save_checkpoint, sgd_step,
                      sweep_beta_gamma, train)

__version__ = "0.1.0"

__all__ = [
    "AttentionParams", "CheckFailure", "Disk", "EvalSummary", "FocalParams",
    "FormatError", "GroundTruth", "ManifestRecord", "MatchParams",
    "MultiTaskParams", "NmsParams", "OccBoundError", "OcclusionCurvePoint",
    "PRPoint", "ParameterError", "SceneSpec", "TinyNet", "TrainConfig",
    "ValidationError", "adjust_orientations", "angle_fold", "aor_curve",
    "attention", "backward", "cce", "compute_alpha", "estimate_normals",
    "f_measure", "focal", "fold_angle", "forward", "generate_dataset",
    "generate_scene", "init_params", "load_checkpoint", "load_map",
    "local_tangent", "loss_curve_table", "match_boundaries", "multitask_loss",
    "nms_thin", "opr_curve", "orientation_loss", "pr_sweep", "predict",
    "read_manifest", "save_checkpoint", "save_map", "sgd_step", "smooth_l1",
    "summarize", "sweep_beta_gamma", "threshold_map", "train", "validate_pair",
    "write_manifest",
]
