"""Embedding models and their registry."""

from .base import ENTITY, RELATION, EmbeddingTable, KGEModel, ModelSpec, SparseGrad, TableSpec
from .bilinear import CP, ComplEx, DistMult, RotatE, SimplE
from .hyperbolic import AttE, AttH, MuRP, MurE, RefE, RefH, RotE, RotH
from .translational import TransD, TransE, TransH, TransR

MODELS: dict[str, type[KGEModel]] = {
    cls.name: cls
    for cls in (
        TransE, TransH, TransR, TransD,
        DistMult, SimplE, CP,
        ComplEx, RotatE,
        MuRP, AttE, RefE, RotE, MurE, AttH, RefH, RotH,
    )
}


def get_model(spec: ModelSpec | str, dim: int | None = None, norm: int | None = None) -> KGEModel:
    if isinstance(spec, str):
        spec = ModelSpec(spec, dim=dim if dim is not None else 512, norm=norm)
    try:
        cls = MODELS[spec.name]
    except KeyError:
        raise ValueError(f"unknown model {spec.name!r}; choose from {sorted(MODELS)}") from None
    return cls(spec.dim, spec.norm)


def init_params(spec: ModelSpec, num_entities: int, num_relations: int, seed: int = 0) -> EmbeddingTable:
    return get_model(spec).init_params(num_entities, num_relations, seed=seed, scale=spec.init_scale)


__all__ = [
    "MODELS", "ENTITY", "RELATION", "EmbeddingTable", "KGEModel", "ModelSpec", "SparseGrad",
    "TableSpec", "get_model", "init_params",
] + list(MODELS)
