"""Scene generation, distortions, manifests, label smoothing and folds."""

from .distortions import DISTORTION_KINDS, apply_distortion, jpeg_proxy, superimpose
from .folds import FoldSplit, fold_coverage, make_folds, read_folds, split_by_scene, write_folds
from .images import read_ppm, resize_bilinear, write_pgm, write_ppm
from .manifest import STANDARD_SIGMAS, SceneTriplet, TripletArrays, load_arrays, read_manifest, write_manifest
from .smoothing import smooth_labels
from .synthetic import GeneratorConfig, generate_dataset, planted_mos

__all__ = [name for name in dir() if not name.startswith("_")]
