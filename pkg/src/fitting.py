"""
Log-log regression helpers shared by the order and growth probes.
"""

from typing import Sequence

import numpy as np
from sklearn.linear_model import LinearRegression


def loglog_slope(xs: Sequence[float], ys: Sequence[float], floor: float = 0.0) -> float:
    """
    Least-squares slope of log(ys) against log(xs).

    Args:
        xs: positive abscissae
        ys: nonnegative ordinates; values below floor are clipped to floor
        floor: clip level (0 means no clipping; zeros then raise)

    Returns:
        Fitted slope d log y / d log x
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if floor > 0.0:
        ys = np.maximum(ys, floor)
    if xs.size < 2 or np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise ValueError("log-log fit needs at least two strictly positive points")
    model = LinearRegression().fit(np.log(xs).reshape(-1, 1), np.log(ys))
    return float(model.coef_[0])
