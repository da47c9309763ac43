"""Utility-aware load shedding for real-time video analytics."""

from .errors import ConfigError, InputError, NotMeasuredError, ShedderError, TrainingError
from .features import (
    BinGrid,
    FrameFeatures,
    HsvHistogram,
    HueRange,
    extract_features,
    hue_fraction,
    sat_bin,
    val_bin,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .shedder import LoadShedder, ShedDecision
from .threshold import SHED_NONE, UtilityHistory, build_cdf, threshold_for_drop_rate
from .utility import UtilityModel, parse_query, query_utility, train_color_model

__version__ = "0.1.0"
