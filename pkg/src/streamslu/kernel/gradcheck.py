"""Central finite differences shared by the loss and network gradient checks."""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np
import numpy.typing as npt

RELATIVE_FLOOR = 1e-4


def relative_error(analytic: float, numeric: float, floor: float = RELATIVE_FLOOR) -> float:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero entries from dominating."""
    scale = max(abs(analytic), abs(numeric), floor)
    return abs(analytic - numeric) / scale


def central_difference(
    fn: Callable[[npt.NDArray[np.float64]], float],
    point: npt.NDArray[np.float64],
    h: float,
    indices: Iterable[tuple[int, ...]] | None = None,
) -> dict[tuple[int, ...], float]:
    """Numerical partial derivatives of ``fn`` at ``point`` for the requested indices."""
    point = np.array(point, dtype=np.float64)
    if indices is None:
        indices = np.ndindex(point.shape)
    derivatives: dict[tuple[int, ...], float] = {}
    for index in indices:
        original = point[index]
        point[index] = original + h
        plus = fn(point)
        point[index] = original - h
        minus = fn(point)
        point[index] = original
        derivatives[tuple(index)] = (plus - minus) / (2.0 * h)
    return derivatives


def max_relative_error(
    analytic: npt.NDArray[np.float64],
    numeric: dict[tuple[int, ...], float],
    floor: float = RELATIVE_FLOOR,
) -> float:
    worst = 0.0
    for index, value in numeric.items():
        worst = max(worst, relative_error(float(analytic[index]), value, floor))
    return worst
