"""Python access to the pignn C++ core."""

import json

from ._pignn import (
    CrmParams,
    Panel,
    PignnError,
    build_graph,
    crm_fit,
    crm_forecast,
    generate_crm_world,
    gradcheck,
    integrate_crm_ode,
    pearson,
    read_connectivity,
    read_panel,
    reference_crm_params,
    solve_eikonal,
    split_panel,
    total_rmse,
    write_panel,
)
from ._pignn import run_stage as _run_stage

STAGES = ("synth", "graph", "crm-fit", "train", "evaluate", "bench", "gradcheck", "plots")


def run(stage, config=None, **overrides):
    """Run a pipeline stage with a config dict; keyword overrides win.

    Returns the stage log. Raises PignnError when the stage reports failure.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    cfg = dict(config or {})
    cfg.update(overrides)
    status, log = _run_stage(stage, json.dumps(cfg))
    if status != 0:
        raise PignnError(f"{stage} exited with status {status}\n{log}")
    return log


__all__ = [name for name in dir() if not name.startswith("_")]
