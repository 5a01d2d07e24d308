"""Blocked Shampoo preconditioning with iterative inverse roots."""

from ._core import (
    NumericalError,
    Shampoo,
    batched_inverse_root,
    cheb_fit_inverse_root,
    coupled_newton,
    eigh,
    greedy_balance,
    inverse_root,
    newton_db,
    scalar_iteration_count,
    stack_groups,
    train,
)

__all__ = [
    "NumericalError",
    "Shampoo",
    "batched_inverse_root",
    "cheb_fit_inverse_root",
    "coupled_newton",
    "eigh",
    "greedy_balance",
    "inverse_root",
    "newton_db",
    "scalar_iteration_count",
    "stack_groups",
    "train",
]
