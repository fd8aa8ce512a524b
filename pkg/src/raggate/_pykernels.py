"""Pure-numpy implementations of the hot kernels.

Reference semantics for the compiled backend: raggate._ckernels must return
identical indices for identical inputs. Scores are computed in float64;
ties are broken by the caller-supplied tie rank (ascending).
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def topk_ip(matrix: np.ndarray, probe: np.ndarray, tie_rank: np.ndarray, n: int):
    """Top-n rows of ``matrix`` by inner product with ``probe``.

    Returns (indices, scores) ordered by score descending, tie_rank
    ascending. ``n`` is clamped to the number of rows.
    """
    scores = matrix @ probe
    order = np.lexsort((tie_rank, -scores))
    top = order[: min(n, matrix.shape[0])]
    return top.astype(np.int64), scores[top]


def joint_scores(s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    """Batch joint angular score cos(arccos s1 + arccos s2).

    Inputs are clamped into [-1, 1] first so float drift above 1 cannot
    produce NaN from the square roots.
    """
    a = np.clip(np.asarray(s1, dtype=np.float64), -1.0, 1.0)
    b = np.clip(np.asarray(s2, dtype=np.float64), -1.0, 1.0)
    return a * b - np.sqrt(1.0 - a * a) * np.sqrt(1.0 - b * b)
