"""Masked time-series autoencoder: numpy bindings to the C++ core."""

from ._timae import (
    ConfigError,
    DimensionError,
    Error,
    FormatError,
    Model,
    ModelConfig,
    crc32,
    last_value_forecast,
    make_mask,
    mae,
    mse,
    ridge_fit,
    ridge_solve,
    synthetic_series,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "Error",
    "FormatError",
    "Model",
    "ModelConfig",
    "crc32",
    "last_value_forecast",
    "make_mask",
    "mae",
    "mse",
    "ridge_fit",
    "ridge_solve",
    "synthetic_series",
]
