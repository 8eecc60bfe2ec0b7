"""Localized editing of set-latent 3D shapes with a synthetic flow backbone."""

from __future__ import annotations

__version__ = "0.1.0"

from .backbone import BackboneParams, Condition, SyntheticBackbone
from .codec import CodecParams, TokenSet, decode_mesh, encode, read_token_archive, write_token_archive
from .edit import EditConfig, EditRequest, decompose, drift_prune, prune_set, vecset_edit
from .errors import ValidationError, VseError
from .kernels import BACKEND
from .select import AttentionRecord, SelectParams, token_gating, token_seeding
from .texture import TextureParams, composite_views, normal_diff_masks, project_texture

__all__ = [
    "AttentionRecord",
    "BACKEND",
    "BackboneParams",
    "CodecParams",
    "Condition",
    "EditConfig",
    "EditRequest",
    "SelectParams",
    "SyntheticBackbone",
    "TextureParams",
    "TokenSet",
    "ValidationError",
    "VseError",
    "composite_views",
    "decode_mesh",
    "decompose",
    "drift_prune",
    "encode",
    "normal_diff_masks",
    "project_texture",
    "prune_set",
    "read_token_archive",
    "token_gating",
    "token_seeding",
    "vecset_edit",
    "write_token_archive",
]
