"""Bayesian pairwise protein structure alignment.

Samples the posterior over alignments, gap penalties and error scale for two
protein C-alpha traces, optionally combined with a tempered PAM sequence
likelihood for simultaneous sequence-structure alignment and evolutionary
distance estimation.
"""

from .alignment import AlignmentPath, GapParams, Step, enumerate_paths, gap_penalty, gap_stats
from .geometry import Registration, apply, procrustes_distance2, rmsd, superpose
from .posterior import Hyperparams, ModelState, log_posterior
from .sampler import ChainConfig, FragmentLibrary, build_fragment_library, run_chain
from .structio import Chain, Residue, parse_fasta, parse_pdb_ca
from .submodel import SubstitutionModel, TemperedModel, joint_entropy, log_odds, pam_model, temper
from .summaries import SampleSet, map_alignment, marginal_matrix, psrf, scalar_summary

__version__ = "0.1.0"

__all__ = [
    "AlignmentPath", "GapParams", "Step", "enumerate_paths", "gap_penalty", "gap_stats",
    "Registration", "apply", "procrustes_distance2", "rmsd", "superpose",
    "Hyperparams", "ModelState", "log_posterior",
    "ChainConfig", "FragmentLibrary", "build_fragment_library", "run_chain",
    "Chain", "Residue", "parse_fasta", "parse_pdb_ca",
    "SubstitutionModel", "TemperedModel", "joint_entropy", "log_odds", "pam_model", "temper",
    "SampleSet", "map_alignment", "marginal_matrix", "psrf", "scalar_summary",
    "__version__",
]
