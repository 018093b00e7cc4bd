"""Rank-adaptive cross interpolation driven by maxvol pivoting.

Alternating left/right sweeps maintain nested row/column index sets chosen
by :func:`maxvol` on the unfolding fibers; after every full sweep the
current train is validated on a fixed random holdout sample. Ranks grow
until the holdout relative RMS error meets the tolerance or the rank cap
is reached.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import TtTensor, tt_round
from .maxvol import maxvol

__all__ = ["CrossOracle", "CrossResult", "tt_cross"]


@dataclass(frozen=True)
class CrossOracle:
    """Entry evaluator on a d-dimensional grid.

    ``fn`` maps an integer index array of shape (N, d) to N values and must
    be deterministic: repeated queries at the same multi-index return the
    same value.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    mode_sizes: tuple

    @staticmethod
    def from_scalar(fn, mode_sizes) -> "CrossOracle":
        """Wrap a one-index-at-a-time callable."""

        def batched(idx):
            return np.array([fn(tuple(row)) for row in np.asarray(idx)])

        return CrossOracle(batched, tuple(mode_sizes))


@dataclass
class CrossResult:
    tensor: TtTensor
    holdout_error: float
    converged: bool
    n_evals: int
    sweeps: int

    @property
    def ranks(self):
        return self.tensor.ranks


class _Counter:
    def __init__(self, fn):
        self.fn = fn
        self.n = 0

    def __call__(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        self.n += idx.shape[0]
        vals = np.asarray(self.fn(idx), dtype=float)
        if vals.shape != (idx.shape[0],):
            raise ValueError("oracle must return one value per multi-index")
        return vals


def _random_tuples(rng, sizes, count, existing=()):
    """Distinct multi-indices over the given mode sizes."""
    out = list(existing)
    seen = set(out)
    guard = 0
    while len(out) < count:
        cand = tuple(int(rng.integers(0, n)) for n in sizes)
        if cand not in seen:
            out.append(cand)
            seen.add(cand)
        guard += 1
        if guard > 100 * count + 1000:
            break  # tiny grids may not have enough distinct tuples
    return out


def _fiber_matrix(oracle, left, nk, right, k, d):
    """Evaluate the unfolding C[(i_left, i_k), j_right] at the cross fibers."""
    nl, nr = len(left), len(right)
    left_arr = np.asarray(left, dtype=np.intp).reshape(nl, k)
    right_arr = np.asarray(right, dtype=np.intp).reshape(nr, d - k - 1)
    idx = np.empty((nl * nk * nr, d), dtype=np.intp)
    if k > 0:
        idx[:, :k] = np.repeat(left_arr, nk * nr, axis=0)
    idx[:, k] = np.tile(np.repeat(np.arange(nk), nr), nl)
    if k + 1 < d:
        idx[:, k + 1:] = np.tile(right_arr, (nl * nk, 1))
    vals = oracle(idx)
    return vals.reshape(nl * nk, nr)


def tt_cross(
    oracle: CrossOracle,
    eps: float,
    rank_cap: int = 64,
    max_sweeps: int = 20,
    holdout_size: int = 1000,
    rng: np.random.Generator | None = None,
    scale: float | None = None,
) -> CrossResult:
    """Build a TT approximation of the oracle's grid function.

    Terminates when the holdout relative root-mean-square error drops to
    ``eps``, when the ranks reach ``rank_cap``, or after ``max_sweeps``
    sweeps. Hitting the cap with error above ``10 * eps`` flags
    ``converged=False`` in the result rather than raising.

    ``scale`` normalizes the holdout error; it defaults to the holdout RMS
    of the function itself. Callers approximating one term of a sum should
    pass the magnitude of the whole sum, so that terms which are tiny
    against it (down to exact zeros polluted by round-off) resolve as zero
    instead of chasing noise into the rank cap.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if rank_cap < 1:
        raise ValueError("rank_cap must be at least 1")
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be at least 1")
    rng = rng or np.random.default_rng()
    sizes = tuple(int(n) for n in oracle.mode_sizes)
    d = len(sizes)
    fn = _Counter(oracle.fn)

    hold_idx = np.stack(
        [rng.integers(0, n, size=holdout_size) for n in sizes], axis=1
    )
    hold_vals = fn(hold_idx)
    hold_rms = float(np.sqrt(np.mean(hold_vals**2)))
    if scale is None or scale <= 0.0:
        scale = hold_rms
    if hold_rms <= eps * scale:
        # the zero train already meets the tolerance
        err = hold_rms / scale if scale > 0 else 0.0
        return CrossResult(TtTensor.zeros(sizes), err, True, fn.n, 0)

    max_rank_at = [
        min(int(np.prod(sizes[: k + 1])), int(np.prod(sizes[k + 1:])), rank_cap)
        for k in range(d - 1)
    ]
    ranks = [1] * (d - 1)
    right_sets = [
        _random_tuples(rng, sizes[k + 1:], ranks[k]) for k in range(d - 1)
    ]

    def holdout_error(tt):
        approx = tt.gather(hold_idx)
        return float(np.sqrt(np.mean((approx - hold_vals) ** 2))) / scale

    err = np.inf
    cores = None
    sweeps_done = 0
    for sweep in range(max_sweeps):
        # left-to-right: rebuild nested row sets
        left_sets = [[()]]
        for k in range(d - 1):
            right = right_sets[k]
            C = _fiber_matrix(fn, left_sets[k], sizes[k], right, k, d)
            Q, _ = np.linalg.qr(C)
            sel = maxvol(Q)
            combined = [
                il + (ik,)
                for il in left_sets[k]
                for ik in range(sizes[k])
            ]
            left_sets.append([combined[s] for s in sel])
            ranks[k] = len(sel)

        # right-to-left: rebuild nested column sets and the cores
        cores = [None] * d
        right_sets = [None] * (d - 1)
        cur_right = [()]
        for k in range(d - 1, 0, -1):
            C = _fiber_matrix(fn, left_sets[k], sizes[k], cur_right, k, d)
            nl, nr = len(left_sets[k]), len(cur_right)
            Ct = C.reshape(nl, sizes[k] * nr).T
            Q, _ = np.linalg.qr(Ct)
            sel = maxvol(Q)
            core = np.linalg.solve(Q[sel].T, Q.T)  # inv(Q[sel])^T Q^T
            cores[k] = core.reshape(len(sel), sizes[k], nr)
            combined = [
                (ik,) + jr for ik in range(sizes[k]) for jr in cur_right
            ]
            cur_right = [combined[s] for s in sel]
            right_sets[k - 1] = cur_right
            ranks[k - 1] = len(sel)
        C = _fiber_matrix(fn, [()], sizes[0], cur_right, 0, d)
        cores[0] = C.reshape(1, sizes[0], len(cur_right))

        sweeps_done = sweep + 1
        err = holdout_error(TtTensor(cores))
        if err <= eps:
            break
        if all(r >= m for r, m in zip(ranks, max_rank_at)):
            break

        # double the ranks, extending the column sets with fresh tuples
        for k in range(d - 1):
            target = min(2 * ranks[k], max_rank_at[k])
            right_sets[k] = _random_tuples(
                rng, sizes[k + 1:], target, existing=right_sets[k]
            )

    # the adaptive index sets overshoot the true ranks; trim what the
    # tolerance cannot justify, keeping the better of the two candidates
    tensor = TtTensor(cores)
    trimmed = tt_round(tensor, eps * 0.5)
    err_trimmed = holdout_error(trimmed)
    if err_trimmed <= max(eps, err):
        tensor, err = trimmed, err_trimmed
    return CrossResult(tensor, err, err <= 10 * eps, fn.n, sweeps_done)
