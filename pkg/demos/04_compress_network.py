"""Spectrum-guided compression of a dense classifier with self-distillation.

Trains a 3-hidden-layer tanh classifier on a Gaussian-mixture task, then runs
the progressive analyze/project/distill schedule: each stage keeps only the
eigen-directions detached above the fitted MP bulk edge and fine-tunes the
narrower network against its own pre-reduction checkpoint.

Run: python demos/04_compress_network.py  (about a minute)
"""

from rmtkit.compress import CompressionPlan, accuracy, init_dense_net, rmtkd_schedule, train_dense
from rmtkit.synth import gaussian_mixture_task

print("training the baseline 32 -> 256 -> 256 -> 256 -> 10 classifier...")
x_train, y_train, x_val, y_val = gaussian_mixture_task(
    n_classes=10, dim=32, n_train=4000, n_val=1000, separation=5.0, seed=0
)
model = init_dense_net([32, 256, 256, 256, 10], seed=0)
train_dense(model, x_train, y_train, epochs=30, seed=0)
print(f"baseline: {model.param_count()} parameters, "
      f"validation accuracy {accuracy(model, x_val, y_val):.3f}")

plan = CompressionPlan(quantile=0.45, distill_epochs=12, learning_rate=2e-3)
compressed, report = rmtkd_schedule(model, (x_train, y_train), (x_val, y_val), plan, seed=0)

print("\nper-stage record:")
for s in report.stages:
    status = "applied" if s.applied else f"skipped ({s.note})"
    print(f"  layer {s.layer}: width {s.d} -> kept {s.k} directions above "
          f"lambda_plus = {s.lambda_plus:.4f}; accuracy {s.val_acc_before:.3f} -> "
          f"{s.val_acc_after:.3f}; params {s.params_before} -> {s.params_after} [{status}]")

print(f"\nstop reason: {report.stop_reason}")
print(f"compressed widths: {compressed.widths}")
print(f"parameters {report.params_initial} -> {report.params_final} "
      f"({report.reduction_pct:.1f}% reduction)")
print(f"validation accuracy {report.baseline_val_acc:.3f} -> {report.final_val_acc:.3f}")
