from .adam import Adam, log_linear
from .carve import LOG_HEADER, CarveConfig, CarveError, LossReport, carve, evaluate, parse_log
from .colors import ColorReport, fit_colors
from .losses import ColorLoss, LossTerm, color_loss, mask_loss, normal_loss, total_loss
from .remesh import RemeshResult, remesh

__all__ = [
    "Adam",
    "CarveConfig",
    "CarveError",
    "ColorLoss",
    "ColorReport",
    "LOG_HEADER",
    "LossReport",
    "LossTerm",
    "RemeshResult",
    "carve",
    "color_loss",
    "evaluate",
    "fit_colors",
    "log_linear",
    "mask_loss",
    "normal_loss",
    "parse_log",
    "remesh",
    "total_loss",
]
