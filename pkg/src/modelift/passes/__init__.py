"""Graph rewrite passes that turn an inference-only graph into a debuggable one."""

from .automatch import MatchConfig, Substitution, auto_match_pass, dice_similarity, lcs_length
from .normalize import normalize_specs_pass
from .pipeline import TransformReport, transform
from .prune import prune_pass
from .translate import translate_pass

__all__ = [
    "MatchConfig",
    "Substitution",
    "TransformReport",
    "auto_match_pass",
    "dice_similarity",
    "lcs_length",
    "normalize_specs_pass",
    "prune_pass",
    "transform",
    "translate_pass",
]
