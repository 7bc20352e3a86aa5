"""Three-phase alternating training schedule, prediction, and evaluation.

Phase F trains extractors and evidence heads with noise-filled missing
features; phase V freezes the extractors and trains the VAE plus heads with
the conflict-consistency loss; phase J unfreezes everything for joint
fine-tuning. Missing views at prediction time are filled by averaging the
evidences over several VAE imputation samples before fusing across views.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import losses, opinions
from .autodiff import Tensor, concat
from .data import MultiViewDataset, augmentation_mask
from .networks import Model, mask_and_concat, reconstruct_features

__all__ = [
    "TrainConfig",
    "PhaseReport",
    "Prediction",
    "Adam",
    "train_umae_f",
    "train_umae_v",
    "train_umae_j",
    "train_baseline",
    "baseline_fill",
    "run_training",
    "predict",
    "evaluate",
]


@dataclass
class TrainConfig:
    epochs_f: int = 50
    epochs_v: int = 100
    epochs_j: int = 100
    batch_size: int = 256
    lr_f: float = 1e-3
    lr_v: float = 1e-3
    lr_j: float = 3e-4
    kl_horizon: int = 10  # lambda_t = min(1, epoch / horizon)
    eta_augment: float = 0.3
    n_imputation_samples: int = 5
    fusion_mode: str = "balanced"
    d_f: int = 128
    d_z: int = 64
    hidden: int = 256
    seed: int = 0
    loss_on_views: bool = True
    loss_on_fused: bool = True
    vae_recon_in_v: bool = True
    # weight on the Gaussian-prior KL term of the ELBO; 1.0 is the plain
    # objective, smaller values counteract posterior collapse on
    # low-variance feature targets
    elbo_beta: float = 1.0
    # weight on the conflict-consistency loss; 0 ablates it
    conflict_weight: float = 1.0
    # initial shift applied to evidence-head biases so the untrained model
    # starts near-vacuous (high uncertainty) instead of at the softplus floor
    evidence_bias_init: float = -4.0
    # fraction of the training set held out during joint fine-tuning; the
    # weights with the best held-out accuracy are kept (the phase-start
    # weights are the incumbent, so fine-tuning cannot end worse than it
    # began on that split). 0 trains on everything and keeps the final epoch.
    joint_val_fraction: float = 0.0

    def __post_init__(self):
        if self.fusion_mode not in ("balanced", "sequential"):
            raise ValueError(f"unknown fusion mode: {self.fusion_mode!r}")
        for name in ("batch_size", "kl_horizon", "n_imputation_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.joint_val_fraction < 1.0:
            raise ValueError("joint_val_fraction must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PhaseReport:
    phase: str
    epochs: list = field(default_factory=list)
    test_accuracy: float = 0.0
    mean_uncertainty: float = 0.0
    conflict_matrix: list = field(default_factory=list)
    wall_seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Prediction:
    opinion: opinions.Opinion
    probabilities: np.ndarray
    predicted_class: int
    uncertainty: float


class Adam:
    """Adaptive-moment optimizer over a fixed list of parameter tensors."""

    def __init__(self, params: list[Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _lambda_t(epoch: int, horizon: int) -> float:
    return min(1.0, epoch / horizon)


def _fuse_evidence(evidences: list[Tensor], mode: str) -> Tensor:
    """Fused evidence; pairwise aggregation reduces to evidence averaging."""
    if mode == "balanced":
        total = evidences[0]
        for e in evidences[1:]:
            total = total + e
        return total * (1.0 / len(evidences))
    fused = evidences[0]
    for e in evidences[1:]:
        fused = (fused + e) * 0.5
    return fused


def _acc_terms(evidences: list[Tensor], fused: Tensor, y: np.ndarray,
               lam: float, config: TrainConfig) -> Tensor:
    total = None
    if config.loss_on_views:
        for e in evidences:
            term = losses.loss_acc(e + 1.0, y, lam)
            total = term if total is None else total + term
    if config.loss_on_fused:
        term = losses.loss_acc(fused + 1.0, y, lam)
        total = term if total is None else total + term
    if total is None:
        raise ValueError("at least one of loss_on_views / loss_on_fused must be set")
    return total


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _phase_rngs(config: TrainConfig, phase_tag: int):
    ss = np.random.SeedSequence([config.seed, phase_tag])
    children = ss.spawn(4)
    # shuffle, noise/mask, vae, holdout split
    return tuple(np.random.default_rng(c) for c in children)


def train_umae_f(ds: MultiViewDataset, config: TrainConfig,
                 model: Model | None = None) -> tuple[Model, PhaseReport]:
    """Feature-alignment phase: missing feature slots filled with fresh
    standard-normal noise; extractors and evidence heads train, VAE untouched."""
    t0 = time.perf_counter()
    if model is None:
        model = Model(ds.view_dims, ds.n_classes, config.d_f, config.d_z,
                      config.hidden, seed=config.seed,
                      evidence_bias_init=config.evidence_bias_init)
    model.params.set_frozen(theta_c=False, theta_e=False, theta_v=True)
    opt = Adam(model.params.trainable(), config.lr_f)
    shuffle_rng, noise_rng, _, _ = _phase_rngs(config, 1)
    y_all = ds.one_hot()
    report = PhaseReport(phase="umae_f")
    for epoch in range(config.epochs_f):
        lam = _lambda_t(epoch, config.kl_horizon)
        bundle = _zero_bundle()
        n_batches = 0
        for idx in _batches(ds.n_samples, config.batch_size, shuffle_rng):
            z = model.extract_features([v[idx] for v in ds.views])
            m = ds.mask[idx].astype(np.float64)
            filled = []
            for v, z_v in enumerate(z):
                noise = noise_rng.standard_normal((len(idx), model.d_f))
                m_v = m[:, v : v + 1]
                filled.append(z_v * m_v + Tensor(noise * (1.0 - m_v)))
            evidences = model.evidence(filled)
            fused = _fuse_evidence(evidences, config.fusion_mode)
            loss = _acc_terms(evidences, fused, y_all[idx], lam, config)
            loss.backward()
            opt.step()
            _accumulate(bundle, acc=loss.item(), total=loss.item())
            n_batches += 1
        report.epochs.append(_epoch_record(bundle, n_batches, lam))
    report.wall_seconds = time.perf_counter() - t0
    return model, report


def _vae_forward(model: Model, x_batch: list, source_mask: np.ndarray,
                 eff_mask: np.ndarray, vae_rng: np.random.Generator):
    z = model.extract_features(x_batch)
    z_tilde = mask_and_concat(z, eff_mask)
    mu, logvar = model.encode(z_tilde)
    latent = model.sample_latent(mu, logvar, vae_rng)
    z_hat = model.decode(latent)
    z_rc = reconstruct_features(z, z_hat, eff_mask)
    return z, z_hat, z_rc, mu, logvar


def _vae_phase(ds: MultiViewDataset, config: TrainConfig, model: Model,
               phase: str) -> tuple[Model, PhaseReport]:
    t0 = time.perf_counter()
    joint = phase == "umae_j"
    model.params.set_frozen(theta_c=not joint, theta_e=False, theta_v=False)
    opt = Adam(model.params.trainable(), config.lr_j if joint else config.lr_v)
    shuffle_rng, mask_rng, vae_rng, holdout_rng = _phase_rngs(config, 3 if joint else 2)
    fit = ds
    val = None
    if joint and config.joint_val_fraction > 0.0:
        n_val = int(round(config.joint_val_fraction * ds.n_samples))
        perm = holdout_rng.permutation(ds.n_samples)
        val, fit = ds.take(perm[:n_val]), ds.take(perm[n_val:])
        best_acc = evaluate(val, model, config)["accuracy"]
        best = model.params.snapshot()
    y_all = fit.one_hot()
    use_elbo = joint or config.vae_recon_in_v
    report = PhaseReport(phase=phase)
    epochs = config.epochs_j if joint else config.epochs_v
    for epoch in range(epochs):
        lam = _lambda_t(epoch, config.kl_horizon)
        bundle = _zero_bundle()
        n_batches = 0
        for idx in _batches(fit.n_samples, config.batch_size, shuffle_rng):
            src = fit.mask[idx]
            eff = augmentation_mask(src, config.eta_augment, mask_rng).astype(np.float64)
            z, z_hat, z_rc, mu, logvar = _vae_forward(
                model, [v[idx] for v in fit.views], src, eff, vae_rng)
            evidences = model.evidence(z_rc)
            fused = _fuse_evidence(evidences, config.fusion_mode)
            acc = _acc_terms(evidences, fused, y_all[idx], lam, config)
            con = losses.loss_conflict(evidences)
            loss = acc + config.conflict_weight * con
            elbo_val = 0.0
            if use_elbo:
                # reconstruction compares to features of source-observed views only
                weight = np.repeat(src.astype(np.float64), model.d_f, axis=1)
                target = concat([zv.detach() if not joint else zv for zv in z], axis=1)
                output = concat(z_hat, axis=1)
                elbo = losses.reconstruction_error(output, target, weight)
                elbo = elbo + config.elbo_beta * losses.gaussian_kl(mu, logvar)
                loss = loss + elbo
                elbo_val = elbo.item()
            loss.backward()
            opt.step()
            _accumulate(bundle, acc=acc.item(), con=config.conflict_weight * con.item(),
                        elbo=elbo_val, total=loss.item())
            n_batches += 1
        record = _epoch_record(bundle, n_batches, lam)
        if val is not None:
            val_acc = evaluate(val, model, config)["accuracy"]
            record["val_accuracy"] = val_acc
            if val_acc > best_acc:
                best_acc = val_acc
                best = model.params.snapshot()
        report.epochs.append(record)
    if val is not None:
        model.params.restore(best)
    report.wall_seconds = time.perf_counter() - t0
    return model, report


def train_umae_v(ds: MultiViewDataset, model: Model, config: TrainConfig) -> tuple[Model, PhaseReport]:
    """VAE + evidence phase with frozen feature extractors."""
    return _vae_phase(ds, config, model, "umae_v")


def train_umae_j(ds: MultiViewDataset, model: Model, config: TrainConfig) -> tuple[Model, PhaseReport]:
    """Joint fine-tuning with all parameter groups trainable."""
    return _vae_phase(ds, config, model, "umae_j")


def baseline_fill(ds: MultiViewDataset, mode: str) -> list[np.ndarray]:
    """Per-view raw-input fill vectors: zeros or the mean of observed rows."""
    if mode not in ("zero", "mean"):
        raise ValueError(f"unknown baseline mode: {mode!r}")
    fill = []
    for v, arr in enumerate(ds.views):
        if mode == "mean":
            obs = ds.mask[:, v] == 1
            fill.append(arr[obs].mean(axis=0) if obs.any() else np.zeros(arr.shape[1]))
        else:
            fill.append(np.zeros(arr.shape[1]))
    return fill


def train_baseline(ds: MultiViewDataset, config: TrainConfig, mode: str,
                   epochs: int | None = None) -> tuple[Model, list[np.ndarray]]:
    """Zero- or mean-imputation baseline through the same extractor/head stack.

    Missing raw views are filled with zeros ("zero") or the per-view mean of
    observed rows ("mean"); training then matches the feature phase loss.
    Returns the model and the fill vectors to reuse at evaluation time.
    """
    if epochs is None:
        epochs = config.epochs_f + config.epochs_v + config.epochs_j
    model = Model(ds.view_dims, ds.n_classes, config.d_f, config.d_z,
                  config.hidden, seed=config.seed,
                  evidence_bias_init=config.evidence_bias_init)
    model.params.set_frozen(theta_c=False, theta_e=False, theta_v=True)
    fill = baseline_fill(ds, mode)
    opt = Adam(model.params.trainable(), config.lr_f)
    shuffle_rng, *_ = _phase_rngs(config, 4)
    y_all = ds.one_hot()
    for epoch in range(epochs):
        lam = _lambda_t(epoch, config.kl_horizon)
        for idx in _batches(ds.n_samples, config.batch_size, shuffle_rng):
            m = ds.mask[idx].astype(np.float64)
            x_filled = []
            for v, arr in enumerate(ds.views):
                m_v = m[:, v : v + 1]
                x_filled.append(arr[idx] * m_v + fill[v] * (1.0 - m_v))
            z = model.extract_features(x_filled)
            evidences = model.evidence(z)
            fused = _fuse_evidence(evidences, config.fusion_mode)
            loss = _acc_terms(evidences, fused, y_all[idx], lam, config)
            loss.backward()
            opt.step()
    return model, fill


def _fused_evidence_arrays(model: Model, x_views: list, mask: np.ndarray,
                           config: TrainConfig, rng: np.random.Generator,
                           imputer: str = "vae") -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass without gradients: per-view and fused evidence as numpy.

    Complete rows bypass imputation by construction (mask 1 keeps observed
    features); missing slots are filled by averaging evidences over
    ``n_imputation_samples`` draws. ``imputer`` is "vae" for the learned
    imputation or "noise" for standard-normal feature fill (the fill the
    feature phase trains against, used to evaluate its checkpoint).
    """
    mask = np.atleast_2d(np.asarray(mask, dtype=np.float64))
    z = model.extract_features(x_views)
    if np.all(mask == 1.0):
        per_view = [e.data for e in model.evidence(z)]
    else:
        if imputer == "vae":
            z_tilde = mask_and_concat(z, mask)
            samples = model.vae_impute(z_tilde, config.n_imputation_samples, rng)
        elif imputer == "noise":
            n = mask.shape[0]
            samples = [
                [Tensor(rng.standard_normal((n, model.d_f))) for _ in range(model.n_views)]
                for _ in range(config.n_imputation_samples)
            ]
        else:
            raise ValueError(f"unknown imputer: {imputer!r}")
        acc = None
        for z_hat in samples:
            z_rc = reconstruct_features(z, z_hat, mask)
            ev = [e.data for e in model.evidence(z_rc)]
            acc = ev if acc is None else [a + e for a, e in zip(acc, ev)]
        per_view = [a / config.n_imputation_samples for a in acc]
    fused = _fuse_evidence([Tensor(e) for e in per_view], config.fusion_mode).data
    return fused, per_view


def predict(x_views: list, mask, model: Model, config: TrainConfig,
            seed: int | None = None) -> Prediction:
    """Classify one (possibly incomplete) multi-view sample."""
    mask = np.asarray(mask).reshape(1, -1)
    if mask.sum() == 0:
        raise ValueError("sample has no observed view")
    rng = np.random.default_rng(np.random.SeedSequence(config.seed if seed is None else seed))
    x_batch = [np.atleast_2d(np.asarray(x, dtype=np.float64)) for x in x_views]
    fused, _ = _fused_evidence_arrays(model, x_batch, mask, config, rng)
    w = opinions.opinion_from_evidence(fused[0])
    probs = opinions.project_probability(w)
    return Prediction(w, probs, int(np.argmax(probs)), float(w.uncertainty))


def _pairwise_conflict_mean(per_view: list[np.ndarray], k: int) -> np.ndarray:
    """Mean over samples of the pairwise conflict-degree matrix (vectorized)."""
    v = len(per_view)
    qs = []
    for e in per_view:
        s = (e + 1.0).sum(axis=1, keepdims=True)
        u = k / s
        p = e / s + u / k
        qs.append(p * (1.0 - u))
    mat = np.ones((v, v))
    for i in range(v):
        for j in range(i + 1, v):
            qa, qb = qs[i], qs[j]
            m = 0.5 * (qa + qb)
            with np.errstate(divide="ignore", invalid="ignore"):
                kl_a = np.where(qa > 0, qa * np.log2(np.where(qa > 0, qa, 1.0) / m), 0.0).sum(axis=1)
                kl_b = np.where(qb > 0, qb * np.log2(np.where(qb > 0, qb, 1.0) / m), 0.0).sum(axis=1)
            c = np.clip(1.0 - 0.5 * (kl_a + kl_b), 0.0, 1.0)
            mat[i, j] = mat[j, i] = float(c.mean())
    return mat


def evaluate(ds_test: MultiViewDataset, model: Model, config: TrainConfig,
             return_arrays: bool = False, input_fill: list | None = None,
             imputer: str = "vae"):
    """Accuracy, uncertainty, and conflict metrics on a labeled test split.

    ``input_fill`` switches to fixed raw-input imputation (one fill vector
    per view, as produced by ``baseline_fill``) instead of the VAE path;
    ``imputer="noise"`` evaluates with the standard-normal feature fill the
    feature phase was trained against.
    """
    if ds_test.n_samples == 0:
        raise ValueError("empty test set")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 99]))
    if input_fill is not None:
        m = ds_test.mask.astype(np.float64)
        x_filled = [arr * m[:, v : v + 1] + input_fill[v] * (1.0 - m[:, v : v + 1])
                    for v, arr in enumerate(ds_test.views)]
        fused, per_view = _fused_evidence_arrays(
            model, x_filled, np.ones_like(m), config, rng)
    else:
        fused, per_view = _fused_evidence_arrays(
            model, ds_test.views, ds_test.mask.astype(np.float64), config, rng,
            imputer=imputer)
    k = ds_test.n_classes
    s = (fused + 1.0).sum(axis=1)
    u = k / s
    b = fused / s[:, None]
    probs = b + (u / k)[:, None]
    pred = probs.argmax(axis=1)
    correct = pred == ds_test.labels
    per_class = {}
    for c in range(k):
        rows = ds_test.labels == c
        if rows.any():
            per_class[str(c)] = float(correct[rows].mean())
    metrics = {
        "accuracy": float(correct.mean()),
        "mean_uncertainty": float(u.mean()),
        "median_uncertainty": float(np.median(u)),
        "per_class_accuracy": per_class,
        "mean_conflict_matrix": _pairwise_conflict_mean(per_view, k).tolist(),
        "n_samples": int(ds_test.n_samples),
    }
    if return_arrays:
        return metrics, {"uncertainty": u, "fused_evidence": fused, "predicted": pred}
    return metrics


def run_training(ds_train: MultiViewDataset, ds_test: MultiViewDataset,
                 config: TrainConfig):
    """Run the three phases in order, evaluating after each.

    Returns (model, reports, metrics) where reports is the list of three
    PhaseReports (with test metrics filled in) and metrics the final
    evaluation record.
    """
    model, report_f = train_umae_f(ds_train, config)
    reports = [report_f]
    _fill_report(report_f, ds_test, model, config, imputer="noise")
    model, report_v = train_umae_v(ds_train, model, config)
    _fill_report(report_v, ds_test, model, config)
    reports.append(report_v)
    model, report_j = train_umae_j(ds_train, model, config)
    _fill_report(report_j, ds_test, model, config)
    reports.append(report_j)
    metrics = evaluate(ds_test, model, config)
    return model, reports, metrics


def _fill_report(report: PhaseReport, ds_test: MultiViewDataset, model: Model,
                 config: TrainConfig, imputer: str = "vae") -> None:
    m = evaluate(ds_test, model, config, imputer=imputer)
    report.test_accuracy = m["accuracy"]
    report.mean_uncertainty = m["mean_uncertainty"]
    report.conflict_matrix = m["mean_conflict_matrix"]


def _zero_bundle() -> dict:
    return {"acc": 0.0, "con": 0.0, "elbo": 0.0, "total": 0.0}


def _accumulate(bundle: dict, **terms: float) -> None:
    for key, value in terms.items():
        bundle[key] += value


def _epoch_record(bundle: dict, n_batches: int, lam: float) -> dict:
    rec = {key: value / max(n_batches, 1) for key, value in bundle.items()}
    rec["lambda_t"] = lam
    return rec
