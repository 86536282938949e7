"""Deterministic, seedable 2-D active localization engine."""

from .bayes import Action, BeliefGrid, MotionNoise, entropy, map_estimate, \
    measurement_update, transition, uniform_belief
from .env import Episode, EpisodeConfig, EpisodeState, NoiseProfile, \
    Observation, RewardKind, compute_reward, wasserstein
from .grids import CellPose, ContinuousPose, GridGeometry, GridMap
from .lidar import Scan, ScanImage, ScanMatrix, build_scan_matrix, \
    corrupt_scan, raycast, reduce_scan, scan_to_image
from .likelihood import HierarchyConfig, LikelihoodGrid, \
    ScanMatchingLikelihood, cosine_scores, fine_scan_matching_provider, \
    refine_hierarchical, tempered_softmax
from .mapgen import CoarseMaze, MorphConfig, TextureConfig, generate_maze, \
    perturb_map, rasterize
from .mapio import read_map, write_map
from .policy import LookaheadConfig, aml_policy, constant_policy, \
    greedy_follow_policy, random_policy

__version__ = "0.1.0"
