"""Spectrum-guided compression of dense networks with self-distillation.

The loop analyzes one hidden layer at a time on a calibration subset: fit the
Marchenko-Pastur noise bulk to the activation covariance spectrum, keep the
eigen-directions detached above the bulk edge, fold the resulting orthonormal
projection into the layer (resizing the next layer to match), then fine-tune
the narrower network against its own pre-reduction checkpoint with a softened
KL term. Stages repeat shallow-to-deep until a stopping rule fires.

The stand-in architecture is a dense tanh classifier so the whole loop runs
in seconds; the stage logic only touches affine-layer boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .laws import EigenSpectrum, MpParams, estimate_sigma2_quantile, fit_sigma2
from .optim import adam_update, init_adam

__all__ = [
    "DenseNet",
    "SpikedModelSpec",
    "CompressionPlan",
    "StageRecord",
    "CompressionReport",
    "init_dense_net",
    "train_dense",
    "accuracy",
    "spiked_sample",
    "collect_activations",
    "select_outliers",
    "causal_projection",
    "insert_projection",
    "distill_loss",
    "stopping_check",
    "rmtkd_schedule",
    "quantile_sweep",
]


@dataclass
class DenseNet:
    """Affine layers with tanh hidden activations and identity final logits."""

    weights: list[np.ndarray]  # each (d_out, d_in)
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty and aligned")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} inconsistent")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(
                    f"layer {i}: input width {w.shape[1]} does not match previous output "
                    f"{self.weights[i - 1].shape[0]}"
                )

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def widths(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "DenseNet":
        return DenseNet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Logits for a batch (n, d_in)."""
        h = np.asarray(x, dtype=np.float64)
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if i != last:
                h = np.tanh(h)
        return h

    def layer_activations(self, x: np.ndarray, layer: int) -> np.ndarray:
        """Post-nonlinearity activations (n, d_layer) of the indexed layer."""
        if not (0 <= layer < self.n_layers):
            raise ValueError(f"layer index {layer} out of range [0, {self.n_layers})")
        h = np.asarray(x, dtype=np.float64)
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if i != last:
                h = np.tanh(h)
            if i == layer:
                return h
        return h


def init_dense_net(layer_widths: list[int], seed: int = 0) -> DenseNet:
    """Uniform +-1/sqrt(fan_in) weights, zero biases."""
    if len(layer_widths) < 2:
        raise ValueError("need at least input and output widths")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for d_in, d_out in zip(layer_widths[:-1], layer_widths[1:]):
        bound = 1.0 / np.sqrt(d_in)
        weights.append(rng.uniform(-bound, bound, size=(d_out, d_in)))
        biases.append(np.zeros(d_out))
    return DenseNet(weights, biases)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(z))


def distill_loss(
    student_logits: np.ndarray,
    teacher_logits: np.ndarray,
    label,
    alpha: float = 0.7,
    temperature: float = 1.0,
) -> float:
    """Convex combination of hard-label CE and softened teacher-student KL.

    loss = alpha * CE(label, softmax(student))
         + (1 - alpha) * temperature^2 * KL(p_teacher^T || p_student^T)
    where p^T are the temperature-softened distributions. With alpha = 1 this
    is exactly the plain cross-entropy. Batched inputs are averaged.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if temperature <= 0.0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    s = np.atleast_2d(np.asarray(student_logits, dtype=np.float64))
    t = np.atleast_2d(np.asarray(teacher_logits, dtype=np.float64))
    if s.shape != t.shape:
        raise ValueError(f"logit shapes differ: {s.shape} vs {t.shape}")
    y = np.atleast_1d(np.asarray(label, dtype=np.int64))
    ce = float(-_log_softmax(s)[np.arange(s.shape[0]), y].mean())
    if alpha == 1.0:
        return alpha * ce
    log_ps = _log_softmax(s / temperature)
    log_pt = _log_softmax(t / temperature)
    pt = np.exp(log_pt)
    kl = float((pt * (log_pt - log_ps)).sum(axis=-1).mean())
    return alpha * ce + (1.0 - alpha) * temperature**2 * kl


def _distill_logit_grad(student_logits, teacher_logits, labels, alpha, temperature):
    """d(distill_loss)/d(student_logits), averaged over the batch."""
    n, c = student_logits.shape
    ps = _softmax(student_logits)
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    grad = alpha * (ps - onehot)
    if alpha < 1.0:
        ps_t = _softmax(student_logits / temperature)
        pt_t = _softmax(teacher_logits / temperature)
        grad = grad + (1.0 - alpha) * temperature * (ps_t - pt_t)
    return grad / n


def train_dense(
    model: DenseNet,
    x: np.ndarray,
    y: np.ndarray,
    epochs: int = 15,
    learning_rate: float = 1e-3,
    batch_size: int = 128,
    seed: int = 0,
    teacher: DenseNet | None = None,
    alpha: float = 1.0,
    temperature: float = 1.0,
) -> None:
    """Adam training in place; plain CE without a teacher, distillation with one."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        tensors[f"w{i}"] = w
        tensors[f"b{i}"] = b
    state = init_adam(tensors)
    order = np.arange(x.shape[0])
    last = model.n_layers - 1
    for _ in range(epochs):
        rng.shuffle(order)
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            xb, yb = x[idx], y[idx]
            # forward with caches
            acts = [xb]
            h = xb
            for i, (w, b) in enumerate(zip(model.weights, model.biases)):
                h = h @ w.T + b
                if i != last:
                    h = np.tanh(h)
                acts.append(h)
            logits = acts[-1]
            teacher_logits = teacher.forward(xb) if teacher is not None else logits
            delta = _distill_logit_grad(logits, teacher_logits, yb, alpha, temperature)
            grads: dict[str, np.ndarray] = {}
            for i in range(last, -1, -1):
                grads[f"w{i}"] = delta.T @ acts[i]
                grads[f"b{i}"] = delta.sum(axis=0)
                if i > 0:
                    delta = (delta @ model.weights[i]) * (1.0 - acts[i] ** 2)
            adam_update(tensors, grads, state, lr=learning_rate)


def accuracy(model: DenseNet, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(model.forward(x).argmax(axis=1) == np.asarray(y)))


@dataclass
class SpikedModelSpec:
    """Isotropic noise plus a low-rank set of planted signal directions.

    Each spike is (theta, direction) where theta is the population variance
    along the (orthonormal) direction; off-spike directions carry sigma2.
    A spike detaches a sample eigenvalue above the bulk edge precisely when
    theta exceeds :func:`rmtkit.laws.bbp_threshold`.
    """

    d: int
    n: int
    sigma2: float
    spikes: list[tuple[float, np.ndarray]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.d < 1 or self.n < 1 or self.sigma2 <= 0:
            raise ValueError("d, n must be positive and sigma2 > 0")
        dirs = []
        for theta, u in self.spikes:
            if theta <= 0:
                raise ValueError(f"spike strength must be positive, got {theta}")
            u = np.asarray(u, dtype=np.float64)
            if u.shape != (self.d,):
                raise ValueError(f"spike direction must have shape ({self.d},), got {u.shape}")
            dirs.append(u)
        if dirs:
            basis = np.stack(dirs)
            gram = basis @ basis.T
            if not np.allclose(gram, np.eye(len(dirs)), atol=1e-8):
                raise ValueError("spike directions must be orthonormal")


def spiked_sample(spec: SpikedModelSpec, seed: int = 0) -> np.ndarray:
    """n x d zero-mean Gaussian sample from the spiked population covariance.

    Rows are i.i.d. with variance ``theta`` along each planted direction and
    ``sigma2`` on the isotropic complement.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((spec.n, spec.d))
    sigma = np.sqrt(spec.sigma2)
    x = sigma * z
    for theta, u in spec.spikes:
        u = np.asarray(u, dtype=np.float64)
        x = x + (np.sqrt(theta) - sigma) * np.outer(z @ u, u)
    return x


def collect_activations(model: DenseNet, calib: np.ndarray, layer: int) -> np.ndarray:
    """Column-stacked (d x n) post-nonlinearity activations; no parameter updates."""
    return model.layer_activations(calib, layer).T


def select_outliers(spectrum: EigenSpectrum, params: MpParams) -> np.ndarray:
    """Indices (into the descending spectrum) of eigenvalues above lambda_plus."""
    return np.nonzero(spectrum.values > params.lambda_plus)[0]


def causal_projection(covariance: np.ndarray, outliers) -> np.ndarray:
    """Orthonormal k x d projection onto the selected eigen-directions.

    Rows are unit eigenvectors of the covariance, ordered by the descending
    eigenvalue indices in ``outliers`` and sign-canonicalized so the first
    non-negligible component of each row is positive (reproducible
    checkpoints). Satisfies P P^T = I_k.
    """
    outliers = np.asarray(outliers, dtype=np.int64)
    if outliers.size == 0:
        raise ValueError("outlier set is empty; caller decides whether to skip the layer")
    cov = np.asarray(covariance, dtype=np.float64)
    cov = (cov + cov.T) / 2.0
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    p = v[:, order[outliers]].T.copy()
    for row in p:
        nz = np.nonzero(np.abs(row) > 1e-12 * np.abs(row).max())[0]
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return p


def insert_projection(model: DenseNet, layer: int, p: np.ndarray) -> DenseNet:
    """Fold a k x d projection into the layer and resize the next layer.

    The layer's affine map is post-composed with P (weight <- P W, bias <- P b)
    and the next layer's input weight is re-parameterized on the kept subspace
    (W_next <- W_next P^T), so the network stays dense and becomes narrower.
    Exact function preservation for k = d holds only without an intervening
    nonlinearity; with tanh in between the projection is an initialization
    that the distillation stage repairs.
    """
    if not (0 <= layer < model.n_layers - 1):
        raise ValueError(
            f"layer index {layer} must have a downstream layer to resize "
            f"(network has {model.n_layers} layers)"
        )
    p = np.asarray(p, dtype=np.float64)
    d_out = model.weights[layer].shape[0]
    if p.ndim != 2 or p.shape[1] != d_out or p.shape[0] > d_out:
        raise ValueError(
            f"projection shape {p.shape} incompatible with layer output width {d_out}"
        )
    new = model.copy()
    new.weights[layer] = p @ new.weights[layer]
    new.biases[layer] = p @ new.biases[layer]
    new.weights[layer + 1] = new.weights[layer + 1] @ p.T
    return DenseNet(new.weights, new.biases)


@dataclass
class CompressionPlan:
    """Knobs of one compression run; defaults follow the desk-scale setup."""

    layer_order: list[int] | None = None  # default: hidden layers, shallow to deep
    quantile: float = 0.45
    calibration_fraction: float = 0.1
    alpha: float = 0.7
    temperature: float = 1.0
    rho_min: float = 0.01
    epsilon_acc: float | None = 0.02
    param_target: int | None = None
    fit_bins: int = 64
    distill_epochs: int = 12
    learning_rate: float = 2e-3
    batch_size: int = 64
    stability_acc: float | None = None  # required baseline val accuracy, if set

    def __post_init__(self) -> None:
        if not (0.0 <= self.quantile <= 1.0):
            raise ValueError(f"quantile must lie in [0, 1], got {self.quantile}")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not (0.0 < self.rho_min < 1.0):
            raise ValueError(f"rho_min must lie in (0, 1), got {self.rho_min}")
        if not (0.0 < self.calibration_fraction <= 1.0):
            raise ValueError(
                f"calibration fraction must lie in (0, 1], got {self.calibration_fraction}"
            )
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")


def stopping_check(
    k: int,
    d: int,
    delta_val_acc: float,
    params: int,
    plan: CompressionPlan,
) -> str | None:
    """First firing stop criterion, in the fixed order, or None to continue.

    Order: outlier ratio k/d < rho_min -> "outlier-ratio"; validation drop
    delta < -epsilon_acc -> "accuracy"; params <= target -> "target met".
    """
    if d <= 0:
        raise ValueError(f"d must be positive, got {d}")
    if k / d < plan.rho_min:
        return "outlier-ratio"
    if plan.epsilon_acc is not None and delta_val_acc < -plan.epsilon_acc:
        return "accuracy"
    if plan.param_target is not None and params <= plan.param_target:
        return "target met"
    return None


@dataclass
class StageRecord:
    """One analyze/reduce/distill stage of a compression run."""

    layer: int
    d: int
    k: int
    lambda_plus: float
    kept_eigenvalues: list[float]
    val_acc_before: float
    val_acc_after: float
    params_before: int
    params_after: int
    applied: bool
    note: str = ""

    def to_record(self) -> dict:
        rec = {"type": "stage"}
        rec.update(self.__dict__)
        return rec


@dataclass
class CompressionReport:
    """Per-stage records plus the overall outcome of one run."""

    stages: list[StageRecord]
    stop_reason: str
    baseline_val_acc: float
    final_val_acc: float
    params_initial: int
    params_final: int

    def __post_init__(self) -> None:
        counts = [s.params_after for s in self.stages if s.applied]
        if any(b >= a for a, b in zip(counts, counts[1:])):
            raise ValueError("parameter counts must strictly decrease across applied stages")

    @property
    def reduction_pct(self) -> float:
        return 100.0 * (1.0 - self.params_final / self.params_initial)

    def to_records(self) -> list[dict]:
        records = [s.to_record() for s in self.stages]
        records.append(
            {
                "type": "summary",
                "stop_reason": self.stop_reason,
                "baseline_val_acc": self.baseline_val_acc,
                "final_val_acc": self.final_val_acc,
                "params_initial": self.params_initial,
                "params_final": self.params_final,
                "reduction_pct": self.reduction_pct,
                "stages_applied": sum(s.applied for s in self.stages),
            }
        )
        return records


def rmtkd_schedule(
    model: DenseNet,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    plan: CompressionPlan,
    seed: int = 0,
) -> tuple[DenseNet, CompressionReport]:
    """Run the progressive train-analyze-reduce-distill loop.

    Per stage: sample a calibration subset, fit the MP bulk to the layer's
    activation covariance with q = d / n_calib, keep eigen-directions above
    lambda_plus, fold the projection in, and fine-tune against the
    pre-reduction checkpoint. A stage whose validation drop exceeds the
    tolerance is reverted before stopping; layers with no usable outlier set
    are skipped and recorded.
    """
    train_x, train_y = train_data
    val_x, val_y = val_data
    model = model.copy()
    params_initial = model.param_count()
    baseline_acc = accuracy(model, val_x, val_y)
    if plan.stability_acc is not None and baseline_acc < plan.stability_acc:
        raise ValueError(
            f"model validation accuracy {baseline_acc:.3f} below required "
            f"stability threshold {plan.stability_acc:.3f}"
        )
    rng = np.random.default_rng(seed)
    order = plan.layer_order if plan.layer_order is not None else list(range(model.n_layers - 1))
    stages: list[StageRecord] = []
    stop_reason = "all layers processed"

    for layer in order:
        reason = stopping_check(1, 1, 0.0, model.param_count(), plan)
        if reason is not None:  # only the parameter target can fire here
            stop_reason = reason
            break

        n_train = train_x.shape[0]
        n_calib = max(1, int(round(plan.calibration_fraction * n_train)))
        calib_idx = rng.choice(n_train, size=n_calib, replace=False)
        acts = collect_activations(model, train_x[calib_idx], layer)
        d = acts.shape[0]
        cov = acts @ acts.T / n_calib
        spectrum = EigenSpectrum.from_covariance(cov, n_samples=n_calib)
        params_before = model.param_count()
        acc_before = accuracy(model, val_x, val_y)

        def _skip(k: int, lam_plus: float, kept: list[float], note: str) -> None:
            stages.append(
                StageRecord(
                    layer=layer,
                    d=d,
                    k=k,
                    lambda_plus=lam_plus,
                    kept_eigenvalues=kept,
                    val_acc_before=acc_before,
                    val_acc_after=acc_before,
                    params_before=params_before,
                    params_after=params_before,
                    applied=False,
                    note=note,
                )
            )

        if spectrum.values[0] <= 0.0:
            _skip(0, float("nan"), [], "degenerate spectrum")
            continue
        q = d / n_calib
        sigma2_init = max(
            estimate_sigma2_quantile(spectrum, plan.quantile),
            1e-12 * float(spectrum.values[0]),
        )
        mp = fit_sigma2(spectrum, q, sigma2_init, bins=plan.fit_bins)
        outliers = select_outliers(spectrum, mp)
        k = int(outliers.size)
        kept = [float(v) for v in spectrum.values[outliers]]

        if k == 0:
            _skip(0, mp.lambda_plus, [], "no outliers above the bulk edge")
            continue
        if k >= d:
            _skip(k, mp.lambda_plus, kept, "all directions kept; nothing to cut")
            continue

        pre_reason = stopping_check(k, d, 0.0, params_before, plan)
        if pre_reason == "outlier-ratio":
            _skip(k, mp.lambda_plus, kept, "outlier ratio below minimum; cut not applied")
            stop_reason = pre_reason
            break

        teacher = model
        projection = causal_projection(cov, outliers)
        student = insert_projection(model, layer, projection)
        train_dense(
            student,
            train_x,
            train_y,
            epochs=plan.distill_epochs,
            learning_rate=plan.learning_rate,
            batch_size=plan.batch_size,
            seed=int(rng.integers(2**31 - 1)),
            teacher=teacher,
            alpha=plan.alpha,
            temperature=plan.temperature,
        )
        acc_after = accuracy(student, val_x, val_y)
        delta = acc_after - baseline_acc  # cumulative drop vs the pre-run baseline
        post_reason = stopping_check(k, d, delta, student.param_count(), plan)
        if post_reason == "accuracy":
            _skip(k, mp.lambda_plus, kept, "reverted: validation drop beyond tolerance")
            stop_reason = post_reason
            break

        stages.append(
            StageRecord(
                layer=layer,
                d=d,
                k=k,
                lambda_plus=mp.lambda_plus,
                kept_eigenvalues=kept,
                val_acc_before=acc_before,
                val_acc_after=acc_after,
                params_before=params_before,
                params_after=student.param_count(),
                applied=True,
            )
        )
        model = student
        if post_reason is not None:
            stop_reason = post_reason
            break

    report = CompressionReport(
        stages=stages,
        stop_reason=stop_reason,
        baseline_val_acc=baseline_acc,
        final_val_acc=accuracy(model, val_x, val_y),
        params_initial=params_initial,
        params_final=model.param_count(),
    )
    return model, report


def quantile_sweep(
    model: DenseNet,
    train_data: tuple[np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray],
    taus,
    plan: CompressionPlan,
    seed: int = 0,
) -> list[dict]:
    """Rerun the schedule from the same checkpoint for each init quantile.

    Returns one record per tau with the achieved reduction and final accuracy;
    a collapsed accuracy at extreme quantiles is recorded, never hidden.
    """
    results = []
    for tau in taus:
        if not (0.0 <= tau <= 1.0):
            raise ValueError(f"quantile must lie in [0, 1], got {tau}")
        run_plan = CompressionPlan(**{**plan.__dict__, "quantile": float(tau)})
        _, report = rmtkd_schedule(model.copy(), train_data, val_data, run_plan, seed=seed)
        results.append(
            {
                "tau": float(tau),
                "reduction_pct": report.reduction_pct,
                "val_acc": report.final_val_acc,
                "stop_reason": report.stop_reason,
                "params_final": report.params_final,
            }
        )
    return results
