"""Build model instances from plain dictionaries (config files, manifests)."""

from __future__ import annotations

from .models import ChoiceSetModel, EntryGame, PanelBinaryModel
from .models.base import IncompleteModel
from .models.latent import LatentSpec, gauss_hermite, qmc_normal

MODEL_KEYS = {
    "entry_game": {"id", "k", "latent"},
    "choice_set": {"id", "alternatives", "covariates", "kappa", "latent"},
    "panel": {"id", "periods", "covariates", "latent"},
}
LATENT_KEYS = {"kind", "nodes_per_dim", "n", "seed"}


def build_latent(spec: dict | None, dim: int, default_nodes: int | None = None) -> LatentSpec | None:
    """``{"kind": "normal" | "gauss_hermite" | "qmc", ...}``; None keeps the model default."""
    if not spec:
        return None
    unknown = set(spec) - LATENT_KEYS
    if unknown:
        raise ValueError(f"unknown latent keys: {sorted(unknown)}")
    kind = spec.get("kind", "gauss_hermite")
    if kind == "normal":
        if dim != 2:
            raise ValueError("the exact normal latent is only available for the entry game")
        return LatentSpec()
    if kind == "gauss_hermite":
        return gauss_hermite(dim, int(spec.get("nodes_per_dim", default_nodes or 32)))
    if kind == "qmc":
        return qmc_normal(dim, int(spec.get("n", 4096)), int(spec.get("seed", 0)))
    raise ValueError(f"unknown latent kind {kind!r}")


def build_model(spec: dict) -> IncompleteModel:
    spec = dict(spec)
    mid = spec.get("id")
    if mid not in MODEL_KEYS:
        raise ValueError(f"unknown model id {mid!r}; expected one of {sorted(MODEL_KEYS)}")
    unknown = set(spec) - MODEL_KEYS[mid]
    if unknown:
        raise ValueError(f"unknown keys for model {mid}: {sorted(unknown)}")
    if mid == "entry_game":
        return EntryGame(int(spec.get("k", 0)), build_latent(spec.get("latent"), 2))
    if mid == "choice_set":
        j = int(spec["alternatives"])
        return ChoiceSetModel(j, int(spec.get("covariates", 1)), int(spec["kappa"]),
                              build_latent(spec.get("latent"), j))
    t = int(spec["periods"])
    return PanelBinaryModel(t, int(spec.get("covariates", 0)), build_latent(spec.get("latent"), t))
