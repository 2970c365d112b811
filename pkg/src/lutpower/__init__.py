"""Per-DVFS-state linear power models driven by performance counters."""

from .characterization import (CapacityOracle, CounterSet, GroupOracle, Ranking, characterize,
                               characterize_all, select_counters)
from .errors import DataError
from .evaluation import (EvaluationReport, energy_error, evaluate_system, mape, measure_latency,
                         sweep_predictor_count)
from .nnls import nnls
from .power_models import (CpuModel, GpuModel, ModelLut, SystemPredictor, load_lut, predict_system,
                           save_lut)
from .trace import CounterId, MergedTrace, TraceSegment, load_trace, merge_passes, write_trace
from .training import train_lut

__version__ = "0.1.0"
