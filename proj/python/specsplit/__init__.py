"""Hyperspectral face super-resolution: cubes, metrics, augmentation, SSANet."""

import json

from . import _core
from ._core import (
    ArgumentError,
    DataError,
    DivergenceError,
    FormatError,
    IoError,
    ShapeError,
    SpecsplitError,
    TruncationError,
    UndefinedMetricError,
    bicubic_resample,
    count_flops,
    count_params,
    enumerate_placements,
    forward,
    hflip,
    psnr,
    read_cube,
    run_cli,
    sam,
    search_csv,
    ssim,
    synthesize_sample,
    write_cube,
)

__version__ = _core.__version__


def evaluate_all(x, ref, scale):
    """CC, SAM, RMSE, ERGAS, PSNR and SSIM of x against ref, as a dict."""
    report = json.loads(_core.evaluate_all(x, ref, scale))
    for key in ("psnr_db",):
        if report[key] == "inf":
            report[key] = float("inf")
    return report


def default_config(bands=33, scale=2):
    return json.loads(_core.default_config(bands, scale))


def miniature_config(scale=2):
    return json.loads(_core.miniature_config(scale))


def _dump(config):
    return config if isinstance(config, str) else json.dumps(config)


def params_of(config):
    return count_params(_dump(config))


def flops_of(config, lr_height, lr_width):
    return count_flops(_dump(config), lr_height, lr_width)
