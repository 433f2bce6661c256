"""Ligand and pocket embeddings in a shared space: encoders, contrastive
training, retrieval, screening metrics and steered SMILES generation."""

__version__ = "0.1.0"

# Export autodiff core
from ligspace.tensor import Tensor, backward, no_grad

# Export structures and chemistry
from ligspace.geom import AtomicPointCloud, ConformerRecord, LigandPocketPair, load_conformers, load_pairs
from ligspace.smiles import parse_smiles, tokenize_smiles
from ligspace.fingerprint import morgan_fingerprint, tanimoto

# Export models and training
from ligspace.encoder import SetConfig, encode, init_encoder, pretrain_encoder
from ligspace.contrastive import cf_infonce, train_contrastive
from ligspace.mclm import GenRequest, generate, train_mclm

# Export retrieval and metrics
from ligspace.store import build_store, load_store, topk_search
from ligspace.metrics import RankedScreen, auroc, bedroc, enrichment_factor

__all__ = [
    "Tensor",
    "backward",
    "no_grad",
    "AtomicPointCloud",
    "ConformerRecord",
    "LigandPocketPair",
    "load_conformers",
    "load_pairs",
    "parse_smiles",
    "tokenize_smiles",
    "morgan_fingerprint",
    "tanimoto",
    "SetConfig",
    "encode",
    "init_encoder",
    "pretrain_encoder",
    "cf_infonce",
    "train_contrastive",
    "GenRequest",
    "generate",
    "train_mclm",
    "build_store",
    "load_store",
    "topk_search",
    "RankedScreen",
    "auroc",
    "bedroc",
    "enrichment_factor",
]
