"""Mixed-policy DAPO on tabular sequence tasks."""

from ._mixpo import (
    CapacityError,
    GuideTrainingError,
    Mode,
    NumericalError,
    ParseError,
    Policy,
    TaskSpec,
    default_task,
    expected_reward,
    gradient_check,
    load_checkpoint,
    load_task,
    monte_carlo_reward,
    on_policy_advantages,
    parse_task,
    pretrain_guide,
    save_checkpoint,
    scale_f,
    scale_f_prime,
    shared_baseline_advantages,
    theorem1_learning_rate,
    train,
    uniform_policy,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
