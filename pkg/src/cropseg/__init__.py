"""Central-object segmentation and fruit size/position tracking."""
from ._accel import backend_name
from .imagery import (AnnotatedSample, AugmentationConfig, CropWindow, PolygonAnnotation, SceneSpec,
                      augment, crop_resize, generate_synthetic_scene, load_annotation, rasterize_polygon,
                      split_dataset)
from .netbuilder import (NetworkConfig, build_crop, build_network, build_shallow, forward,
                         parameter_count)
from .objectives import cross_entropy_loss, iou, lp_loss, soft_dice_loss
from .predictor import D4, apply_d4, binarize, predict_averaged, render_overlay
from .tracker import center_of_mass, clamp_outliers, multiscale_measure, report, track
from .trainer import TrainConfig, evaluate, fine_tune, run_depth_ablation, train

__version__ = "0.1.0"
