"""Encoder-decoder forecaster with retrieval transfers and wavelet fusion."""

from .layers import FeedForward, LayerNorm, Linear, MultiHeadAttention, attention, positional_encoding
from .model import (
    Batch,
    BandModel,
    Decoder,
    Encoder,
    Forecaster,
    Gate,
    GaussianForecast,
    ModelConfig,
    ModelError,
    band_inputs,
)
from .pipeline import (
    Request,
    StationData,
    assemble,
    forecast_zero_shot,
    location_stats,
    predict,
    predict_requests,
    valid_requests,
)
from .transfer import (
    TRANSFER_KINDS,
    FCTransfer,
    GNNTransfer,
    LocAttnTransfer,
    LocationMLP,
    TransferError,
    build_transfer,
    gnn_adjacency,
    idw_weights,
)

__all__ = [
    "Batch", "BandModel", "Decoder", "Encoder", "FCTransfer", "FeedForward", "Forecaster", "GNNTransfer", "Gate",
    "GaussianForecast", "LayerNorm", "Linear", "LocAttnTransfer", "LocationMLP", "ModelConfig", "ModelError",
    "MultiHeadAttention", "Request", "StationData", "TRANSFER_KINDS", "TransferError", "assemble", "attention",
    "band_inputs", "build_transfer", "forecast_zero_shot", "gnn_adjacency", "idw_weights", "location_stats",
    "positional_encoding", "predict", "predict_requests", "valid_requests",
]
