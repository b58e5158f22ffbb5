from collections.abc import Callable, Sequence

import numpy as np

from src.domain.exceptions import ContractError, OracleError
from src.domain.numerics import Parameter, Tensor, no_grad

DEFAULT_EPSILON = 1e-4


def _evaluate(loss_fn: Callable[[], Tensor]) -> float:
    with no_grad():
        loss = loss_fn()
    if loss.size != 1:
        raise ContractError(f"gradient check target must be scalar, got shape {loss.shape}")
    return loss.item()


def parameter_errors(
    loss_fn: Callable[[], Tensor],
    parameters: Sequence[tuple[str, Parameter]],
    eps: float = DEFAULT_EPSILON,
    max_entries: int | None = None,
    seed: int = 0,
) -> dict[str, float]:
    """
    Compares analytic gradients with central finite differences.

    Returns, per named parameter, max |analytic - numeric| / max(1, |numeric|)
    over the checked entries. `max_entries` samples that many entries per
    parameter (all entries when None).
    """
    first = _evaluate(loss_fn)
    second = _evaluate(loss_fn)
    if first != second and not (np.isnan(first) and np.isnan(second)):
        raise OracleError(f"Loss is not deterministic: {first!r} then {second!r}")

    for _, parameter in parameters:
        parameter.zero_grad()
    loss_fn().backward()
    analytic = {name: parameter.grad.reshape(-1).copy() for name, parameter in parameters}

    rng = np.random.default_rng(seed)
    errors: dict[str, float] = {}
    for name, parameter in parameters:
        flat = parameter.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        worst = 0.0
        for i in entries:
            original = flat[i]
            flat[i] = original + eps
            plus = _evaluate(loss_fn)
            flat[i] = original - eps
            minus = _evaluate(loss_fn)
            flat[i] = original
            numeric = (plus - minus) / (2.0 * eps)
            worst = max(worst, abs(analytic[name][i] - numeric) / max(1.0, abs(numeric)))
        errors[name] = worst
    return errors


def finite_difference_check(
    loss_fn: Callable[[], Tensor],
    parameters: Sequence[tuple[str, Parameter]],
    eps: float = DEFAULT_EPSILON,
    max_entries: int | None = None,
    seed: int = 0,
) -> float:
    """Maximum relative gradient error over all parameters (0.0 if none)."""
    errors = parameter_errors(loss_fn, parameters, eps=eps, max_entries=max_entries, seed=seed)
    return max(errors.values(), default=0.0)
