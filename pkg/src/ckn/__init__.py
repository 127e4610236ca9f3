"""Convolutional kernel network patch descriptors and retrieval tools."""
from .channels import InputType
from .encoder import CknModel, encode_batch, encode_patch
from .trainer import LayerParams, SgdConfig, train_layer

__all__ = ["InputType", "CknModel", "LayerParams", "SgdConfig", "encode_batch", "encode_patch",
           "train_layer"]
__version__ = "0.1.0"
