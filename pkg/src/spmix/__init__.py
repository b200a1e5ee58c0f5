"""Stagewise pairwise mixing (SPM) layers with hand-written backward passes.

An SPM layer computes ``y = D_out (B_L ... B_1) D_in x + b`` where each stage
``B_l`` mixes disjoint index pairs with 2x2 blocks. Hot loops run in a
compiled extension when it is built, otherwise in numpy.
"""
from spmix._backend import available as available_backends
from spmix._backend import name as backend_name
from spmix._backend import set_backend, set_threads, use_backend
from spmix.attention import AttentionLayer, attention_backward, attention_forward
from spmix.bench import CostModel, count_params, fit_loglog_slope
from spmix.checkpoint import load as load_checkpoint
from spmix.checkpoint import save as save_checkpoint
from spmix.dense import DenseLayer, dense_backward, dense_forward
from spmix.errors import DataError, NumericError, SpmError, UsageError
from spmix.gru import GruCell, gru_backward, gru_forward
from spmix.pairing import (PairingSchedule, PairSet, butterfly_schedule, default_depth,
                           make_schedule, random_schedule, round_robin_schedule, validate)
from spmix.spm import RectSpm, SpmLayer, make_spm, make_spm_map, materialize, spm_backward, spm_forward
from spmix.tensor import Rng

__version__ = "0.1.0"
