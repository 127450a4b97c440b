"""Walk the quantized blobs classifier through the rewrite pipeline.

Run with `python demos/transform_fixture.py`. Writes fixture.json, debug.json and blobs.json
next to this script so the CLI examples in the README have something to read.
"""

# %%
from pathlib import Path

from modelift import compare_models, save_dataset, save_mgf, transform, validate
from modelift.fixtures import blobs_classifier, blobs_dataset

here = Path(__file__).parent
graph = blobs_classifier()
print("on-device graph:", [f"{n.name}:{n.op_type}" for n in graph.nodes])

# %% what blocks gradient access before rewriting
for issue in validate(graph):
    print(f"  {issue.category.value:<24} {issue.node_name}: {issue.detail}")

# %% prune, translate, auto-match, normalize
debug, report = transform(graph)
print("success:", report.success)
print("debuggable graph:", [n.op_type for n in debug.nodes])
for issue in report.issues:
    print(f"  {issue.node_name:<20} resolved by {issue.resolved_by}")

# %% the rewrite keeps the outputs within the quantization band
diff = compare_models(graph, debug)
print(f"scaled mean diff {diff.mean_scaled:.4f}, scaled max diff {diff.max_scaled:.4f}")
assert diff.mean_scaled <= 0.01

# %%
save_mgf(graph, here / "fixture.json")
save_mgf(debug, here / "debug.json")
save_dataset(blobs_dataset(), here / "blobs.json")
print("wrote fixture.json, debug.json and blobs.json under", here)
