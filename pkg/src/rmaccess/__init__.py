"""Reed-Muller sequence detection and channel estimation for grant-free random access."""

from .analysis import multiplication_count_list, multiplication_count_lld, sequence_success_bound
from .channel_sim import Scenario, draw_scenario, synthesize
from .detect_multi import ActiveSetReport, detect_iterative, detect_sic
from .detect_single import ListParams, OpCounter, detect_list, detect_single
from .rm_core import RmPair, generate_sequence, id_to_pair, pair_to_id
from .transform import fwht_flipped

__version__ = "0.1.0"

__all__ = [
    "ActiveSetReport",
    "ListParams",
    "OpCounter",
    "RmPair",
    "Scenario",
    "detect_iterative",
    "detect_list",
    "detect_sic",
    "detect_single",
    "draw_scenario",
    "fwht_flipped",
    "generate_sequence",
    "id_to_pair",
    "multiplication_count_list",
    "multiplication_count_lld",
    "pair_to_id",
    "sequence_success_bound",
    "synthesize",
]
