from .augment import AugmentParams, augment, apply_symmetry, draw_params, symmetry_variants
from .dataset import (DatasetManifest, ManifestEntry, augment_dataset, build_dataset,
                      read_manifest, synthesize_sample)
from .house import assemble_house
from .layout import Layout2D, SynthesisConfig, SynthesisFailure, generate_layout, load_layout
from .skeleton import InvalidPolygon, SkeletonGraph, straight_skeleton

__all__ = [
    "AugmentParams", "augment", "apply_symmetry", "draw_params", "symmetry_variants",
    "DatasetManifest", "ManifestEntry", "augment_dataset", "build_dataset", "read_manifest", "synthesize_sample",
    "assemble_house", "Layout2D", "SynthesisConfig", "SynthesisFailure",
    "generate_layout", "load_layout", "InvalidPolygon", "SkeletonGraph", "straight_skeleton",
]
