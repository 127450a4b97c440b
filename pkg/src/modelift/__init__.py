"""modelift: turn inference-only on-device graphs into debuggable, differentiable ones.

The package reads graphs in a small JSON format (MGF), runs them with
reference numpy kernels, rewrites them with pruning, translation, operator
auto-matching and attribute normalization, measures how far the rewrite moved
the outputs, and runs gradient-based l2 attacks on the result.
"""

from .attacks import AttackConfig, AttackMethod, AttackReport, fooling_rate, run_attack
from .dataset import Dataset, load_dataset, save_dataset
from .equivalence import DiffReport, agreement_rate, compare_models, scaled_max_diff, scaled_mean_diff
from .errors import (
    CycleError,
    DomainError,
    EmptyDataset,
    ModeliftError,
    NoMatchError,
    NonDifferentiable,
    ParseError,
    ShapeError,
    UnknownOperator,
    ValidationError,
)
from .gradients import LossSpec, input_gradient
from .graph import (
    ConstTensor,
    DType,
    Graph,
    IssueCategory,
    IssueRecord,
    Node,
    QuantParams,
    TensorSpec,
    TraceRecord,
    check_graph,
    dumps_mgf,
    load_mgf,
    loads_mgf,
    make_graph,
    save_mgf,
    topo_sort,
)
from .interpreter import TensorValue, evaluate, kernel_dequantize_linear, kernel_quantize_linear
from .issues import validate
from .passes import (
    MatchConfig,
    Substitution,
    TransformReport,
    auto_match_pass,
    dice_similarity,
    normalize_specs_pass,
    prune_pass,
    transform,
    translate_pass,
)
from .rules import RuleSet, default_rules, load_rules

__version__ = "0.1.0"
