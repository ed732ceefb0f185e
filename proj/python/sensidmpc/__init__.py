"""Sensitivity-based distributed MPC for coupled nonlinear systems."""

from ._core import (
    DmpcError,
    MpcStepRecord,
    MpcTrace,
    NetworkModel,
    OcpSolution,
    TerminalIngredients,
    make_benchmark,
    measure_convergence,
    run_closed_loop,
    solve_central_ocp,
    synthesize_terminal,
    validate_derivatives,
)

__all__ = [
    "DmpcError",
    "MpcStepRecord",
    "MpcTrace",
    "NetworkModel",
    "OcpSolution",
    "TerminalIngredients",
    "make_benchmark",
    "measure_convergence",
    "run_closed_loop",
    "solve_central_ocp",
    "synthesize_terminal",
    "validate_derivatives",
]
