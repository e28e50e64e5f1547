"""Desk-scale control environments and demonstration handling."""

from .core import (
    Env,
    EnvError,
    EnvSpec,
    GridWorldRam,
    LinearQuadraticEnv,
    Reacher1D,
    Transition,
    expert_policy,
    make_env,
    noisy_linear_5,
    point_mass_2d,
    reset,
    rollout_returns,
    step,
)
from .demos import (
    DemonstrationSet,
    MixtureSpec,
    expert_sampler,
    generate_demonstrations,
    label_subset,
    load_demos,
    mix_demonstrations,
    save_demos,
    suboptimal_policy,
)
