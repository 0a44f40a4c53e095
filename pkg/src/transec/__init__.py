"""transec: traffic-signal attack games over the cell transmission model.

Building blocks:

* :mod:`transec.network` -- CTM domain types, validation, set-cover gadget
* :mod:`transec.lp` -- total-travel-time LP (congestion measure)
* :mod:`transec.game` -- three-stage game payoffs and the memoized gain oracle
* :mod:`transec.attacks` -- greedy and exhaustive attack search
* :mod:`transec.anneal` -- simulated annealing over detector configurations
* :mod:`transec.gp` -- Gaussian-process traffic-anomaly detector
* :mod:`transec.sim` -- synthetic signalized-intersection simulator
* :mod:`transec.netgen` -- grid-with-random-edges network generator
* :mod:`transec.experiments` -- reproducible experiment drivers
"""

from .anneal import AnnealParams, anneal_config, perturb, uniform_config_search
from .attacks import AttackSearchResult, exhaustive_attack, greedy_attack
from .errors import (
    DegenerateTrace,
    EvaluationCapExceeded,
    HorizonExceeded,
    Infeasible,
    InsufficientData,
    MisalignedStream,
    NetworkError,
    NonPositiveDefinite,
    NumericalFailure,
    TransecError,
)
from .game import (
    Attack,
    DetectorCharacteristic,
    DetectorConfig,
    GainOracle,
    GameParams,
    attack_magnitude,
    attacker_gain,
    best_response_mitigation,
    characteristic_from_pareto,
    defender_loss,
    detection_delay,
)
from .lp import (
    TrafficState,
    choose_horizon,
    hop_horizon,
    system_optimal_control,
    total_travel_time,
    verify_state,
)
from .netgen import GreParams, default_schedule, generate_gre, gre_ensemble
from .network import (
    Cell,
    CellKind,
    Network,
    Proportions,
    SetCoverInstance,
    ValidationReport,
    build_reduction_network,
    extreme_proportions,
    network_from_json,
    network_to_json,
    proportions_from_json,
    proportions_to_json,
    uniform_proportions,
    validate_network,
)

__version__ = "0.1.0"
