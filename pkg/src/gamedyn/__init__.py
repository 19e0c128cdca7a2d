"""Continuous-time learning dynamics in graphical constant-sum games.

The package couples regularized-leader and escort learning rules to
pairwise-matrix games, integrates the closed feedback loop, and certifies
the structural properties the construction promises: exact energy balances
for each learning operator, constant total storage against a fully mixed
equilibrium, regret bounded by the initial storage, divergence-free flow in
reduced coordinates, and Poincare-style returns of the strategy profile.
"""

from .games import (
    GameSpec,
    ConstantSumError,
    GameDimensionError,
    payoff,
    validate_constant_sum,
    verify_nash,
    game_operator_supply,
    rock_paper_scissors,
    cyclic_matching_pennies,
    uniform_profile,
    random_profile,
    game_from_dict,
    game_to_dict,
    load_game,
)
from .dynamics import (
    Entropy,
    HalfL2,
    SeparablePart,
    SeparableCustom,
    FtrlLeaf,
    EscortLeaf,
    Combination,
    StorageValue,
    entropy,
    half_l2,
    mix,
    escort,
    convert,
    storage,
    storage_gradient,
    zero_shift_energy,
    escort_derivative,
    escort_to_ftrl,
    invert_convert,
    project_simplex,
    softmax,
    dynamic_from_config,
    dynamic_to_config,
)
from .integrate import (
    AgentSpec,
    IntegratorConfig,
    SystemSpec,
    Trajectory,
    PiecewiseConstantSignal,
    simulate,
    simulate_open_loop,
    reduce_coordinates,
    embed_coordinates,
)
from .analysis import (
    check_energy_balance,
    check_constant_of_motion,
    regret_report,
    lossless_regret_residual,
    recurrence_report,
    divergence_residual,
    volume_drift,
    box_corners,
    game_supply_series,
    adversarial_regret_sweep,
)

__version__ = "0.1.0"
