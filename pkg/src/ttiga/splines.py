"""Univariate B-spline / NURBS basis evaluation and knot refinement.

Conventions used throughout:

* knot vectors are open (clamped): the first and last knot are repeated
  ``degree + 1`` times, so the basis interpolates at both ends;
* the parametric domain is normalized to ``[0, 1]``;
* evaluation at the right endpoint is clamped into the last nonempty span,
  which makes evaluation total on the closed interval;
* the ``0/0 := 0`` convention resolves repeated-knot denominators in the
  Cox-de Boor recursion.

See Piegl & Tiller, "The NURBS Book" (2nd ed.) for the underlying
algorithms (A2.1, A2.2, A5.1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SplineError",
    "KnotVector",
    "Basis1D",
    "BasisEval",
    "find_span",
    "eval_basis",
    "insert_knot",
    "h_refine_uniform",
    "greville_points",
    "tabulate",
]


class SplineError(ValueError):
    """Invalid knot data, evaluation point, or refinement request."""


@dataclass(frozen=True)
class KnotVector:
    """Open knot vector of a clamped B-spline basis.

    ``len(knots) == n + degree + 1`` where ``n`` is the number of basis
    functions.
    """

    knots: np.ndarray
    degree: int

    def __post_init__(self):
        kn = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", kn)
        p = self.degree
        if p < 0:
            raise SplineError("degree must be non-negative")
        if kn.ndim != 1 or kn.size < 2 * (p + 1):
            raise SplineError("knot vector needs at least 2*(degree+1) entries")
        if np.any(np.diff(kn) < 0):
            raise SplineError("knots must be non-decreasing")
        if not (np.all(kn[: p + 1] == kn[0]) and np.all(kn[-p - 1:] == kn[-1])):
            raise SplineError("end knots must have multiplicity degree+1 (clamped)")
        interior = kn[p + 1: -p - 1]
        if interior.size:
            _, counts = np.unique(interior, return_counts=True)
            if np.any(counts > p):
                raise SplineError("interior knot multiplicity exceeds degree")

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def start(self) -> float:
        return float(self.knots[0])

    @property
    def end(self) -> float:
        return float(self.knots[-1])

    def breakpoints(self) -> np.ndarray:
        """Distinct knot values (the span boundaries)."""
        return np.unique(self.knots)

    def spans(self) -> np.ndarray:
        """Indices i of the nonempty spans [knots[i], knots[i+1])."""
        kn = self.knots
        return np.nonzero(kn[1:] > kn[:-1])[0]

    @staticmethod
    def open_uniform(degree: int, n_spans: int) -> "KnotVector":
        """Clamped knot vector on [0, 1] with ``n_spans`` equal spans."""
        if n_spans < 1:
            raise SplineError("need at least one span")
        interior = np.linspace(0.0, 1.0, n_spans + 1)[1:-1]
        kn = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
        return KnotVector(kn, degree)


@dataclass(frozen=True)
class Basis1D:
    """Univariate basis: polynomial B-spline, or NURBS when weights are set."""

    knot_vector: KnotVector
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            object.__setattr__(self, "weights", w)
            if w.shape != (self.knot_vector.n_basis,):
                raise SplineError("weight count must equal basis count")
            if np.any(w <= 0):
                raise SplineError("weights must be strictly positive")

    @property
    def degree(self) -> int:
        return self.knot_vector.degree

    @property
    def n_basis(self) -> int:
        return self.knot_vector.n_basis

    @property
    def is_rational(self) -> bool:
        return self.weights is not None


@dataclass(frozen=True)
class BasisEval:
    """Nonzero basis values and first derivatives at one parameter value.

    ``values[j]`` belongs to basis function ``span - degree + j``.
    """

    span: int
    values: np.ndarray
    derivs: np.ndarray

    @property
    def first_index(self) -> int:
        return self.span - self.values.size + 1


def find_span(kv: KnotVector, xi: float) -> int:
    """Index i of the knot span with knots[i] <= xi < knots[i+1].

    The right endpoint clamps into the last nonempty span so that the whole
    closed parameter interval is evaluable.
    """
    kn, p = kv.knots, kv.degree
    if xi < kn[0] or xi > kn[-1]:
        raise SplineError(f"parameter {xi} outside knot range [{kn[0]}, {kn[-1]}]")
    n = kv.n_basis
    if xi >= kn[n]:  # right-endpoint clamp
        i = n - 1
        while kn[i] == kn[i + 1]:
            i -= 1
        return i
    return int(np.searchsorted(kn, xi, side="right") - 1)


def _bspline_values_derivs(kn: np.ndarray, p: int, span: int, xi: float):
    """Nonzero B-spline values and first derivatives at xi (A2.2 + A2.3).

    Repeated-knot denominators never occur for a valid span with the
    triangular scheme below; degree-(p-1) values feed the derivative formula.
    """
    left = np.empty(p + 1)
    right = np.empty(p + 1)
    N = np.ones(1)
    N_pm1 = np.ones(1)  # degree p-1 values, kept from the previous row
    for j in range(1, p + 1):
        left[j] = xi - kn[span + 1 - j]
        right[j] = kn[span + j] - xi
        if j == p:
            N_pm1 = N.copy()
        saved = 0.0
        N_next = np.empty(j + 1)
        for r in range(j):
            den = right[r + 1] + left[j - r]
            temp = N[r] / den if den != 0.0 else 0.0
            N_next[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        N_next[j] = saved
        N = N_next
    derivs = np.zeros(p + 1)
    if p > 0:
        for j in range(p + 1):
            i = span - p + j
            acc = 0.0
            if j > 0:  # term p/(kn[i+p]-kn[i]) * N_{i}^{p-1}
                den = kn[i + p] - kn[i]
                if den != 0.0:
                    acc += p / den * N_pm1[j - 1]
            if j < p:  # term -p/(kn[i+p+1]-kn[i+1]) * N_{i+1}^{p-1}
                den = kn[i + p + 1] - kn[i + 1]
                if den != 0.0:
                    acc -= p / den * N_pm1[j]
            derivs[j] = acc
    return N, derivs


def eval_basis(basis: Basis1D, xi: float) -> BasisEval:
    """Evaluate the degree+1 nonzero basis functions and derivatives at xi.

    Rational (NURBS) values use the quotient rule against the weight sum
    W(xi); polynomial B-splines are returned directly.
    """
    kv = basis.knot_vector
    span = find_span(kv, xi)
    vals, ders = _bspline_values_derivs(kv.knots, kv.degree, span, xi)
    if basis.weights is None:
        return BasisEval(span, vals, ders)
    w = basis.weights[span - kv.degree: span + 1]
    W = vals @ w
    dW = ders @ w
    rvals = vals * w / W
    rders = (ders * w * W - vals * w * dW) / W**2
    return BasisEval(span, rvals, rders)


def insert_knot(basis: Basis1D, controls: np.ndarray, xi_new: float):
    """Insert one knot; the represented curve/volume is unchanged (Boehm).

    ``controls`` has shape (n_basis, ...) and is refined alongside the
    basis. Rational bases are processed in homogeneous coordinates so the
    insertion stays exact.

    Returns the refined ``(Basis1D, controls)`` pair.
    """
    kv = basis.knot_vector
    kn, p = kv.knots, kv.degree
    if not (kn[0] < xi_new < kn[-1]):
        raise SplineError("new knot must lie strictly inside the knot range")
    mult = int(np.count_nonzero(kn == xi_new))
    if mult >= p:
        raise SplineError(
            f"inserting {xi_new} would raise interior multiplicity above degree {p}"
        )
    controls = np.asarray(controls, dtype=float)
    if controls.shape[0] != kv.n_basis:
        raise SplineError("control count must equal basis count")

    if basis.weights is not None:
        w = basis.weights
        flat = controls.reshape(controls.shape[0], -1)
        homog = np.concatenate([flat * w[:, None], w[:, None]], axis=1)
        new_basis, new_homog = insert_knot(Basis1D(kv, None), homog, xi_new)
        new_w = new_homog[:, -1]
        new_controls = (new_homog[:, :-1] / new_w[:, None]).reshape(
            (new_w.size,) + controls.shape[1:]
        )
        return Basis1D(new_basis.knot_vector, new_w), new_controls

    k = find_span(kv, xi_new)
    new_kn = np.insert(kn, k + 1, xi_new)
    n = kv.n_basis
    new_controls = np.empty((n + 1,) + controls.shape[1:])
    new_controls[: k - p + 1] = controls[: k - p + 1]
    new_controls[k + 1:] = controls[k:]
    for i in range(k - p + 1, k + 1):
        den = kn[i + p] - kn[i]
        alpha = (xi_new - kn[i]) / den if den != 0.0 else 0.0
        new_controls[i] = alpha * controls[i] + (1.0 - alpha) * controls[i - 1]
    return Basis1D(KnotVector(new_kn, p), None), new_controls


def h_refine_uniform(basis: Basis1D, controls: np.ndarray, levels: int):
    """Bisect every nonempty span, ``levels`` times; geometry-invariant."""
    if levels < 0:
        raise SplineError("levels must be non-negative")
    for _ in range(levels):
        kn = basis.knot_vector.knots
        mids = [
            0.5 * (kn[i] + kn[i + 1]) for i in basis.knot_vector.spans()
        ]
        for m in mids:
            basis, controls = insert_knot(basis, controls, m)
    return basis, controls


def greville_points(kv: KnotVector) -> np.ndarray:
    """Greville abscissae: knot averages, one per basis function."""
    p = kv.degree
    if p == 0:
        return 0.5 * (kv.knots[:-1] + kv.knots[1:])
    return np.array(
        [kv.knots[i + 1: i + p + 1].mean() for i in range(kv.n_basis)]
    )


def tabulate(basis: Basis1D, xis: np.ndarray):
    """Dense value and derivative tables at the given parameters.

    Returns ``(values, derivs)`` with shape (len(xis), n_basis); entries
    outside the local support window are zero.
    """
    xis = np.atleast_1d(np.asarray(xis, dtype=float))
    n = basis.n_basis
    p = basis.degree
    V = np.zeros((xis.size, n))
    D = np.zeros((xis.size, n))
    for row, xi in enumerate(xis):
        ev = eval_basis(basis, xi)
        i0 = ev.first_index
        V[row, i0: i0 + p + 1] = ev.values
        D[row, i0: i0 + p + 1] = ev.derivs
    return V, D
