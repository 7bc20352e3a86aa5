"""Parametric components: per-view feature extractors, evidence heads, and
the masking VAE used to impute missing view features.

Parameters live in three named groups (theta_c: extractors, theta_e:
evidence heads, theta_v: VAE); each group can be frozen, in which case the
optimizer leaves it bitwise untouched.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, concat, parameter

__all__ = [
    "Linear",
    "Model",
    "ModelParams",
    "mask_and_concat",
    "reconstruct_features",
    "save_checkpoint",
    "load_checkpoint",
]

LOGVAR_MIN, LOGVAR_MAX = -20.0, 5.0
_LEAK = 0.01


class Linear:
    """Affine map with uniform fan-in initialization."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(d_in)
        self.weight = parameter(rng.uniform(-bound, bound, size=(d_in, d_out)))
        self.bias = parameter(rng.uniform(-bound, bound, size=(d_out,)))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias

    @property
    def params(self) -> list[Tensor]:
        return [self.weight, self.bias]


@dataclass
class ModelParams:
    theta_c: list[Tensor]
    theta_e: list[Tensor]
    theta_v: list[Tensor]
    frozen: dict = field(default_factory=lambda: {"theta_c": False, "theta_e": False, "theta_v": False})

    def group(self, name: str) -> list[Tensor]:
        return getattr(self, name)

    def trainable(self) -> list[Tensor]:
        out: list[Tensor] = []
        for name in ("theta_c", "theta_e", "theta_v"):
            if not self.frozen[name]:
                out.extend(self.group(name))
        return out

    def all_params(self) -> list[Tensor]:
        return self.theta_c + self.theta_e + self.theta_v

    def set_frozen(self, **flags: bool) -> None:
        for name, value in flags.items():
            if name not in self.frozen:
                raise KeyError(f"unknown parameter group: {name}")
            self.frozen[name] = value

    def snapshot(self) -> dict:
        return {
            name: [p.data.copy() for p in self.group(name)]
            for name in ("theta_c", "theta_e", "theta_v")
        }

    def restore(self, snap: dict) -> None:
        for name in ("theta_c", "theta_e", "theta_v"):
            for p, arr in zip(self.group(name), snap[name], strict=True):
                p.data = arr.copy()


def mask_and_concat(z: list[Tensor], mask: np.ndarray) -> Tensor:
    """Assemble the VAE input: masked per-view features followed by the mask."""
    mask = np.atleast_2d(np.asarray(mask, dtype=np.float64))
    parts = [z_v * mask[:, v : v + 1] for v, z_v in enumerate(z)]
    parts.append(Tensor(mask))
    return concat(parts, axis=1)


def reconstruct_features(z: list[Tensor], z_hat: list[Tensor], mask: np.ndarray) -> list[Tensor]:
    """Keep observed features, substitute imputations where the mask is 0."""
    mask = np.atleast_2d(np.asarray(mask, dtype=np.float64))
    out = []
    for v, (z_v, zh_v) in enumerate(zip(z, z_hat)):
        m_v = mask[:, v : v + 1]
        out.append(z_v * m_v + zh_v * (1.0 - m_v))
    return out


class Model:
    """The full set of parametric components for one configuration."""

    def __init__(
        self,
        view_dims: list[int],
        n_classes: int,
        d_f: int = 128,
        d_z: int = 64,
        hidden: int = 256,
        seed: int = 0,
        evidence_bias_init: float = -4.0,
    ):
        self.view_dims = list(view_dims)
        self.n_views = len(view_dims)
        self.n_classes = n_classes
        self.d_f = d_f
        self.d_z = d_z
        self.hidden = hidden
        self.evidence_bias_init = evidence_bias_init
        rng = np.random.default_rng(np.random.SeedSequence(seed))

        self.extractors = [Linear(d_v, d_f, rng) for d_v in view_dims]
        self.heads = [Linear(d_f, n_classes, rng) for _ in view_dims]
        # Start the heads near-vacuous: softplus has a floor of ln 2 per class
        # at zero pre-activation, which would make an untrained model look
        # confident. Shifting the bias down pushes initial evidence toward 0
        # so uncertainty starts high and is earned down by training.
        for head in self.heads:
            head.bias.data = head.bias.data + evidence_bias_init
        enc_in = self.n_views * d_f + self.n_views
        self.enc1 = Linear(enc_in, hidden, rng)
        self.enc2 = Linear(hidden, 2 * d_z, rng)
        self.dec1 = Linear(d_z, hidden, rng)
        self.dec2 = Linear(hidden, self.n_views * d_f, rng)

        self.params = ModelParams(
            theta_c=[p for layer in self.extractors for p in layer.params],
            theta_e=[p for layer in self.heads for p in layer.params],
            theta_v=self.enc1.params + self.enc2.params + self.dec1.params + self.dec2.params,
        )

    # -- forward pieces -------------------------------------------------

    def extract_features(self, x_views: list) -> list[Tensor]:
        if len(x_views) != self.n_views:
            raise ValueError(f"expected {self.n_views} views, got {len(x_views)}")
        out = []
        for v, x in enumerate(x_views):
            x = x if isinstance(x, Tensor) else Tensor(np.atleast_2d(np.asarray(x, dtype=np.float64)))
            if x.shape[1] != self.view_dims[v]:
                raise ValueError(
                    f"view {v} has dimension {x.shape[1]}, expected {self.view_dims[v]}"
                )
            out.append(self.extractors[v](x).leaky_relu(_LEAK))
        return out

    def encode(self, z_tilde: Tensor) -> tuple[Tensor, Tensor]:
        h = self.enc1(z_tilde).leaky_relu(_LEAK)
        both = self.enc2(h)
        mu = both[:, : self.d_z]
        logvar = both[:, self.d_z :].clamp(LOGVAR_MIN, LOGVAR_MAX)
        return mu, logvar

    def decode(self, latent: Tensor) -> list[Tensor]:
        h = self.dec1(latent).leaky_relu(_LEAK)
        flat = self.dec2(h)
        return [flat[:, v * self.d_f : (v + 1) * self.d_f] for v in range(self.n_views)]

    def sample_latent(self, mu: Tensor, logvar: Tensor, rng: np.random.Generator) -> Tensor:
        eps = rng.standard_normal(mu.shape)
        return mu + (logvar * 0.5).exp() * eps

    def vae_impute(self, z_tilde: Tensor, n_samples: int, rng: np.random.Generator) -> list[list[Tensor]]:
        """Draw ``n_samples`` full per-view reconstructions; deterministic given rng state."""
        if n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        mu, logvar = self.encode(z_tilde)
        return [self.decode(self.sample_latent(mu, logvar, rng)) for _ in range(n_samples)]

    def evidence(self, z_rc: list[Tensor]) -> list[Tensor]:
        """Per-view evidence vectors, strictly positive via softplus."""
        return [self.heads[v](z_v).softplus() for v, z_v in enumerate(z_rc)]

    def config_dict(self) -> dict:
        return {
            "view_dims": self.view_dims,
            "n_classes": self.n_classes,
            "d_f": self.d_f,
            "d_z": self.d_z,
            "hidden": self.hidden,
            "evidence_bias_init": self.evidence_bias_init,
        }


def _config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def save_checkpoint(path, model: Model) -> None:
    """Single-file binary checkpoint: shapes, group tags, float64 values, config hash."""
    arrays = {}
    for name in ("theta_c", "theta_e", "theta_v"):
        for i, p in enumerate(model.params.group(name)):
            arrays[f"{name}__{i}"] = p.data
    meta = model.config_dict()
    meta["config_hash"] = _config_hash(model.config_dict())
    arrays["meta_json"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_checkpoint(path, seed: int = 0) -> Model:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta_json"]).decode())
        model = Model(
            view_dims=meta["view_dims"],
            n_classes=meta["n_classes"],
            d_f=meta["d_f"],
            d_z=meta["d_z"],
            hidden=meta["hidden"],
            seed=seed,
            evidence_bias_init=meta.get("evidence_bias_init", -4.0),
        )
        for name in ("theta_c", "theta_e", "theta_v"):
            for i, p in enumerate(model.params.group(name)):
                stored = data[f"{name}__{i}"]
                if stored.shape != p.data.shape:
                    raise ValueError(f"checkpoint shape mismatch for {name}[{i}]")
                p.data = stored.astype(np.float64)
    return model
