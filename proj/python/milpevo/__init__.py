"""Python bindings for the milpevo C++ library."""

from ._milpevo import (
    MilpevoError,
    MilpInstance,
    accept,
    branch_ce_loss,
    collect,
    contrastive_loss,
    default_config,
    default_params,
    deviation,
    evaluate,
    evolve,
    generate,
    histogram_similarity,
    huber_loss,
    integrality_gap,
    param_search_space,
    pearson,
    read_mps,
    seed_classes,
    seed_gen,
    solve_lp,
    solve_milp,
    text_embed,
    time_improvement,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
