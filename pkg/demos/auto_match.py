"""Resolve an unknown custom operator by name similarity plus a functional probe."""

# %%
from modelift import MatchConfig, auto_match_pass, dice_similarity, transform
from modelift.fixtures import custom_op_suite, l2_normalization_graph
from modelift.passes.automatch import rank_candidates, trace_distance
from modelift.rules import default_rules

graph = l2_normalization_graph()
custom = graph.node("l2_norm")
print("custom op:", custom.op_type, "with", len(graph.traces), "recorded traces")

# %% candidates ordered by Dice similarity over the op names
for score, name in rank_candidates(custom.op_type, default_rules().supported)[:5]:
    print(f"  {score:.4f}  {name}")
print("dice(TFL_L2_NORMALIZATION, LpNormalization) =", dice_similarity("TFL_L2_NORMALIZATION", "LpNormalization"))

# %% the top candidate is accepted only when its outputs stay within alpha of the traces
for alpha in (0.0, 0.1):
    out, issues = auto_match_pass(graph, MatchConfig(alpha=alpha))
    print(f"alpha={alpha}: l2_norm -> {out.node('l2_norm').op_type}, resolved_by={issues[0].resolved_by}")
matched, _ = auto_match_pass(graph, MatchConfig(alpha=0.1))
print("trace distance after substitution:", trace_distance(matched))

# %% a larger alpha admits noisier traces
suite = custom_op_suite()
for alpha in (0, 0.001, 0.01, 0.1, 100):
    wins = sum(transform(g, MatchConfig(alpha=alpha))[1].success for g in suite)
    print(f"alpha={alpha:<6} resolved {wins}/{len(suite)}")
