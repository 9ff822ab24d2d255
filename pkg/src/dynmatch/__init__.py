"""Streaming subsequence matching with dynamic z-normalization inside DTW."""
from .errors import (ConfigError, DegenerateInputError, DynMatchError, InvalidInputError,
                     RangeError, StateError, TraceExhaustedError)
from .prefix_norm import (PrefixStats, PreparedQuery, RollingPrefixSums, dyn_norm_value,
                          prefix_normalize, prefix_stats, prepare_query, scale_factors)
from .dtw_core import WarpingResult, dnorm_fixed_start, dtw, znorm_dtw_distance, znormalize
from .engine import MatchEvent, Matcher, new_matcher
from .baseline import FixedWindowMatcher, fixed_window_znorm
from .synth import LabeledStream, build_stream, distort, make_shape
from .evaluation import EvalReport, bench, delay_model, overlap, score

__version__ = "0.1.0"
