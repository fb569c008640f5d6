"""Modular story premise synthesis, evaluation, and curation."""

from .corpus import PremiseRecord, read_corpus, write_corpus
from .curation import BinnedPremise, CuratedEntry, assign_bins, curate
from .dedup import DedupPool, StubEmbedder, cosine_similarity
from .diversity import (
    breadth_score,
    convex_hull,
    density_score,
    diversity_report,
    project_2d,
)
from .gateway import CompletionRequest, CompletionResult, Gateway, LiveBackend, ScriptedBackend
from .induction import BranchingConfig, build_tree, generate_baseline, parse_numbered_list
from .judge import aggregate, parse_score, score_premise, score_story, significance_test
from .synthesis import parse_verdict, synthesize, synthesize_corpus, verify
from .tree import (
    Candidate,
    CandidateTree,
    ModuleKind,
    PremiseDesign,
    apply_mask,
    load_tree,
    mask_following,
    sample_design,
    save_tree,
    shuffle_dependencies,
)

__version__ = "0.1.0"
