"""Gradient providers for the outer optimization."""

import logging
from abc import ABC, abstractmethod
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor

import numpy as np

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]


class BaseGradientProvider(ABC):
    """Gradient of a scalar objective over the outer parameter vector."""

    @abstractmethod
    def gradient(self, f: Objective, x: np.ndarray, fx: float | None = None) -> np.ndarray:
        """Gradient of ``f`` at ``x``; ``fx`` is f(x) when already known."""

    def get_name(self) -> str:
        return self.__class__.__name__.replace("Gradient", "").lower()


class CentralDifferenceGradient(BaseGradientProvider):
    """Central differences with step ``step * max(|x_i|, 1)``.

    With ``workers > 1`` the 2k evaluations run on a thread pool; ``f`` must
    then be safe to call concurrently.
    """

    def __init__(self, step: float = 1e-5, workers: int = 1):
        if step <= 0:
            raise ValueError(f"step must be positive, got {step}")
        self.step = step
        self.workers = max(1, int(workers))

    def steps(self, x: np.ndarray) -> np.ndarray:
        return self.step * np.maximum(np.abs(x), 1.0)

    def gradient(self, f: Objective, x: np.ndarray, fx: float | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = self.steps(x)
        points = []
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h[i]
            points += [x + e, x - e]
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as executor:
                values = list(executor.map(f, points))
        else:
            values = [f(p) for p in points]
        values = np.asarray(values, dtype=float).reshape(x.size, 2)
        return (values[:, 0] - values[:, 1]) / (2.0 * h)


class ForwardDifferenceGradient(CentralDifferenceGradient):
    """One-sided differences; half the cost of central differences."""

    def gradient(self, f: Objective, x: np.ndarray, fx: float | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = self.steps(x)
        f0 = f(x) if fx is None else fx
        points = [x + np.eye(x.size)[i] * h[i] for i in range(x.size)]
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as executor:
                values = list(executor.map(f, points))
        else:
            values = [f(p) for p in points]
        return (np.asarray(values, dtype=float) - f0) / h


class ExactGradient(BaseGradientProvider):
    """Wraps an analytic gradient ``grad(x)``."""

    def __init__(self, grad: Callable[[np.ndarray], np.ndarray]):
        self._grad = grad

    def gradient(self, f: Objective, x: np.ndarray, fx: float | None = None) -> np.ndarray:
        return np.asarray(self._grad(np.asarray(x, dtype=float)), dtype=float)


PROVIDERS: dict[str, type[BaseGradientProvider]] = {
    "central": CentralDifferenceGradient,
    "forward": ForwardDifferenceGradient,
}


def finite_difference_hessian(
    f: Objective,
    x: np.ndarray,
    provider: BaseGradientProvider,
    step: float = 1e-4,
) -> np.ndarray:
    """Symmetrized forward differences of ``provider`` gradients."""
    x = np.asarray(x, dtype=float)
    k = x.size
    g0 = provider.gradient(f, x)
    h = step * np.maximum(np.abs(x), 1.0)
    hess = np.empty((k, k))
    for i in range(k):
        e = np.zeros(k)
        e[i] = h[i]
        hess[:, i] = (provider.gradient(f, x + e) - g0) / h[i]
    return 0.5 * (hess + hess.T)
