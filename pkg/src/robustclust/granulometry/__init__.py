"""Granular image synthesis, line granulometries and the granular image posterior."""
from .features import (AsymptoticLaw, DIRECTIONS, FeatureVector, asymptotic_law,
                       exact_features_from_radii, features_from_image, gamma_ratios,
                       granulometric_moment, moment_matrix, primitive_constants, simulate_radii)
from .morphology import (opening, opening_area_sweep, pattern_spectrum,
                         pattern_spectrum_moments, run_lengths)
from .posterior import (GranularConfig, GranularModel, gaussian_logpdf, granular_log_likelihood,
                        granular_posterior, simulate_image_features)
from .scene import (PRIMITIVES, Grain, GrainScene, SizingModel, grain_extent, grain_mask,
                    load_scene, read_pbm, render_scene, sample_scene, save_scene,
                    scene_from_dict, scene_to_dict, write_pbm)

__all__ = [name for name in dir() if not name.startswith("_")]
