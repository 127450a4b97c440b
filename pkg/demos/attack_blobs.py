"""White-box l2 attacks on the debuggable graph, replayed against the on-device graph."""

# %%
import numpy as np

from modelift import AttackConfig, agreement_rate, fooling_rate, transform
from modelift.attacks import attack_batch
from modelift.equivalence import predict_labels
from modelift.fixtures import blobs_classifier, blobs_dataset

device = blobs_classifier()
debug, _ = transform(device)
data = blobs_dataset()
acc, acc_debug, delta = agreement_rate(device, debug, data)
print(f"clean accuracy {acc:.4f} on-device, {acc_debug:.4f} debuggable (delta {delta:.4f})")

# %% fooling rate grows with the budget, BIM and PGD land close together
for budget in (0.01, 0.1, 1.0):
    row = [fooling_rate(debug, data, AttackConfig(method, budget)).fooling_rate for method in ("bim", "pgd")]
    print(f"l2={budget:<5} bim={row[0]:.4f} pgd={row[1]:.4f}")

# %% adversarial inputs crafted on the debuggable graph also fool the quantized one
idx = np.flatnonzero(predict_labels(debug, data.inputs) == data.labels)
adv = attack_batch(debug, data.inputs[idx], data.labels[idx], AttackConfig("pgd", 1.0), indices=idx)
fooled_debug = predict_labels(debug, adv) != data.labels[idx]
fooled_device = predict_labels(device, adv) != data.labels[idx]
print(f"fooled debuggable {fooled_debug.mean():.4f}, fooled on-device {fooled_device.mean():.4f}")
