"""TT-format Galerkin assembly of the Poisson stiffness operator and load.

The nine stiffness contributions pair a cross-interpolated metric
coefficient on the quadrature grid with per-direction contractions of
basis values or derivatives: the derivative-derivative factor when the
direction matches both gradient indices, the value-value factor when it
matches neither, and the mixed factor otherwise (derivative on the test
side where the direction equals the first index, on the trial side where
it equals the second, which is what makes the assembled operator exactly
symmetric). Terms are summed in TT with rounding after each addition.

Dirichlet conditions are eliminated by interior core slicing plus a
right-hand-side correction with the boundary lift, which preserves both
symmetry and TT ranks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryPatch, GridEvaluator
from .splines import Basis1D, eval_basis, greville_points, tabulate
from .tensor_train import (
    CrossOracle,
    CrossResult,
    TtMatrix,
    TtTensor,
    tt_cross,
    tt_matvec,
    tt_round,
    tt_sub,
)

__all__ = [
    "AssemblyError",
    "Discretization",
    "FaceCondition",
    "BoundarySpec",
    "AssembledSystem",
    "build_quadrature",
    "cross_metric_coefficient",
    "assemble_stiffness",
    "assemble_load",
    "apply_dirichlet",
]

FACES = tuple((axis, side) for axis in range(3) for side in range(2))


class AssemblyError(ValueError):
    """Invalid discretization or boundary setup."""


@dataclass(frozen=True)
class _DirTables:
    """Per-direction quadrature rule and active-window basis tables."""

    points: np.ndarray  # (nq,)
    weights: np.ndarray  # (nq,)
    starts: np.ndarray  # (nq,) first active basis index per point
    vals: np.ndarray  # (nq, p+1)
    ders: np.ndarray  # (nq, p+1)


@dataclass(frozen=True)
class Discretization:
    """Solution spaces plus the tensorized Gauss rule over their knot spans."""

    solution_bases: tuple[Basis1D, Basis1D, Basis1D]
    tables: tuple[_DirTables, _DirTables, _DirTables]
    n_gauss: tuple[int, int, int]

    @property
    def mode_sizes(self) -> tuple:
        return tuple(b.n_basis for b in self.solution_bases)

    @property
    def quad_shape(self) -> tuple:
        return tuple(t.points.size for t in self.tables)

    @property
    def n_dofs(self) -> int:
        return int(np.prod(self.mode_sizes, dtype=np.int64))

    def quad_axes(self):
        return [t.points for t in self.tables]


def build_quadrature(solution_bases, n_gauss=None) -> Discretization:
    """Per-span Gauss-Legendre rule, concatenated per direction.

    ``n_gauss`` defaults to degree + 1 points per span, which integrates the
    polynomial part of every stiffness integrand exactly; the rational
    geometry factors are controlled by the cross tolerance instead.
    """
    solution_bases = tuple(solution_bases)
    if len(solution_bases) != 3:
        raise AssemblyError("need exactly three solution bases")
    if n_gauss is None:
        per_dir = [b.degree + 1 for b in solution_bases]
    elif np.isscalar(n_gauss):
        per_dir = [int(n_gauss)] * 3
    else:
        per_dir = [int(g) for g in n_gauss]
    tables = []
    for basis, g in zip(solution_bases, per_dir):
        if basis.is_rational:
            raise AssemblyError("solution bases must be polynomial B-splines")
        if g < basis.degree + 1:
            raise AssemblyError(
                f"need at least degree+1={basis.degree + 1} Gauss points, got {g}"
            )
        ref_x, ref_w = np.polynomial.legendre.leggauss(g)
        kv = basis.knot_vector
        kn = kv.knots
        pts, wts = [], []
        for i in kv.spans():
            a, b = kn[i], kn[i + 1]
            pts.append(0.5 * (a + b) + 0.5 * (b - a) * ref_x)
            wts.append(0.5 * (b - a) * ref_w)
        pts = np.concatenate(pts)
        wts = np.concatenate(wts)
        p = basis.degree
        starts = np.empty(pts.size, dtype=np.intp)
        vals = np.empty((pts.size, p + 1))
        ders = np.empty((pts.size, p + 1))
        for q, x in enumerate(pts):
            ev = eval_basis(basis, float(x))
            starts[q] = ev.first_index
            vals[q] = ev.values
            ders[q] = ev.derivs
        tables.append(_DirTables(pts, wts, starts, vals, ders))
    return Discretization(solution_bases, tuple(tables), tuple(per_dir))


# ---------------------------------------------------------------------------
# cross oracles on the quadrature grid

_BATCH = 1 << 15


def _batched(fn, idx):
    idx = np.asarray(idx, dtype=np.intp)
    if idx.shape[0] <= _BATCH:
        return fn(idx)
    return np.concatenate(
        [fn(idx[k: k + _BATCH]) for k in range(0, idx.shape[0], _BATCH)]
    )


def metric_oracle(ev: GridEvaluator, i: int, j: int) -> CrossOracle:
    """Entry (i, j) of the metric factor, sampled on the quadrature grid."""

    def fn(idx):
        _, R = ev.metric(idx)
        return R[:, i, j]

    return CrossOracle(lambda idx: _batched(fn, idx), ev.shape)


def load_oracle(ev: GridEvaluator, source) -> CrossOracle:
    """Source times Jacobian determinant on the quadrature grid."""

    def fn(idx):
        jac, pts = ev.jacobians(idx)
        return source(pts) * np.linalg.det(jac)

    return CrossOracle(lambda idx: _batched(fn, idx), ev.shape)


def metric_scale(ev: GridEvaluator, rng: np.random.Generator, n_probe: int = 512):
    """RMS magnitude of the whole metric tensor on a random grid probe.

    Used as the common error scale for the nine per-entry cross calls, so
    entries that vanish identically (orthogonal parameterizations) resolve
    as zero instead of fitting round-off noise.
    """
    idx = np.stack([rng.integers(0, n, size=n_probe) for n in ev.shape], axis=1)
    _, R = ev.metric(idx)
    return float(np.sqrt(np.mean(R**2)))


def cross_metric_coefficient(
    patch: GeometryPatch,
    disc: Discretization,
    i: int,
    j: int,
    eps: float,
    rank_cap: int = 64,
    rng: np.random.Generator | None = None,
    evaluator: GridEvaluator | None = None,
    scale: float | None = None,
) -> CrossResult:
    """Cross-interpolate R_ij(xi) over the tensorized quadrature points."""
    if not (0 <= i < 3 and 0 <= j < 3):
        raise AssemblyError("metric indices must be in 0..2")
    ev = evaluator or GridEvaluator(patch, disc.quad_axes())
    return tt_cross(
        metric_oracle(ev, i, j), eps, rank_cap=rank_cap, rng=rng, scale=scale
    )


# ---------------------------------------------------------------------------
# contraction of quadrature-grid trains against basis windows

def _contract_matrix_core(core, tab: _DirTables, test_deriv: bool, trial_deriv: bool):
    """Quadrature-weighted (r, n, n, r') operator core from one grid core."""
    r, nq, s = core.shape
    n = tab.starts.max() + tab.vals.shape[1]  # == n_basis for clamped bases
    X = tab.ders if test_deriv else tab.vals
    Y = tab.ders if trial_deriv else tab.vals
    E = np.einsum("rqs,q,qa,qb->qabrs", core, tab.weights, X, Y, optimize=True)
    p1 = X.shape[1]
    offs = np.arange(p1)
    a_idx = (tab.starts[:, None] + offs[None, :])[:, :, None]
    b_idx = (tab.starts[:, None] + offs[None, :])[:, None, :]
    a_idx, b_idx = np.broadcast_arrays(a_idx, b_idx)
    M = np.zeros((n, n, r, s))
    np.add.at(M, (a_idx, b_idx), E)
    return M.transpose(2, 0, 1, 3)


def _contract_vector_core(core, tab: _DirTables):
    """Quadrature-weighted (r, n, r') load core from one grid core."""
    r, nq, s = core.shape
    n = tab.starts.max() + tab.vals.shape[1]
    E = np.einsum("rqs,q,qa->qars", core, tab.weights, tab.vals, optimize=True)
    a_idx = tab.starts[:, None] + np.arange(tab.vals.shape[1])[None, :]
    V = np.zeros((n, r, s))
    np.add.at(V, (a_idx,), E)
    return V.transpose(1, 0, 2)


def assemble_stiffness(
    patch: GeometryPatch,
    disc: Discretization,
    eps: float,
    rank_cap: int = 64,
    rng: np.random.Generator | None = None,
):
    """Assemble the stiffness operator in TT format.

    Returns ``(K, info)`` where ``info`` records per-term cross errors and
    the rounding tolerance. ``K`` covers the full coefficient space; apply
    :func:`apply_dirichlet` to eliminate constrained layers.
    """
    rng = rng or np.random.default_rng()
    ev = GridEvaluator(patch, disc.quad_axes())
    scale = metric_scale(ev, rng)
    info = {"eps": eps, "cross_errors": {}, "cross_converged": {}, "n_evals": 0}
    K = None
    for i in range(3):
        for j in range(3):
            res = cross_metric_coefficient(
                patch, disc, i, j, eps, rank_cap=rank_cap, rng=rng, evaluator=ev,
                scale=scale,
            )
            info["cross_errors"][f"R{i + 1}{j + 1}"] = res.holdout_error
            info["cross_converged"][f"R{i + 1}{j + 1}"] = res.converged
            info["n_evals"] += res.n_evals
            cores = []
            for d in range(3):
                cores.append(
                    _contract_matrix_core(
                        res.tensor.cores[d],
                        disc.tables[d],
                        test_deriv=(d == i),
                        trial_deriv=(d == j),
                    )
                )
            K_ij = TtMatrix(cores)
            K = K_ij if K is None else tt_round(K + K_ij, eps)
    return K, info


def assemble_load(
    patch: GeometryPatch,
    disc: Discretization,
    source,
    eps: float,
    rank_cap: int = 64,
    rng: np.random.Generator | None = None,
):
    """Assemble the volumetric load vector in TT format.

    ``source`` maps physical points (N, 3) to values (N,); it is sampled
    jointly with the Jacobian determinant in a single cross call. Returns
    ``(f, info)``.
    """
    rng = rng or np.random.default_rng()
    ev = GridEvaluator(patch, disc.quad_axes())
    res = tt_cross(load_oracle(ev, source), eps, rank_cap=rank_cap, rng=rng)
    cores = [
        _contract_vector_core(res.tensor.cores[d], disc.tables[d]) for d in range(3)
    ]
    info = {
        "eps": eps,
        "cross_error": res.holdout_error,
        "cross_converged": res.converged,
        "n_evals": res.n_evals,
    }
    return TtTensor(cores), info


# ---------------------------------------------------------------------------
# boundary conditions

@dataclass(frozen=True)
class FaceCondition:
    """Condition on one face of the parametric box."""

    kind: str  # "dirichlet" | "natural"
    value: object = None  # scalar or callable (N,3)->(N,) for dirichlet

    def __post_init__(self):
        if self.kind not in ("dirichlet", "natural"):
            raise AssemblyError(f"unknown face condition {self.kind!r}")

    def value_fn(self):
        v = self.value
        if callable(v):
            return v
        c = 0.0 if v is None else float(v)
        return lambda pts: np.full(np.asarray(pts).shape[0], c)

    def is_zero(self) -> bool:
        return not callable(self.value) and (
            self.value is None or float(self.value) == 0.0
        )


@dataclass(frozen=True)
class BoundarySpec:
    """Per-face conditions; faces are keyed by (axis, side) with side 0 or 1."""

    faces: dict = field(default_factory=dict)

    def __post_init__(self):
        for key, fc in self.faces.items():
            if key not in FACES:
                raise AssemblyError(f"bad face key {key!r}")
            if not isinstance(fc, FaceCondition):
                raise AssemblyError("face values must be FaceCondition")

    def condition(self, axis: int, side: int) -> FaceCondition:
        return self.faces.get((axis, side), FaceCondition("natural"))

    def dirichlet_faces(self):
        return [
            (axis, side)
            for (axis, side) in FACES
            if self.condition(axis, side).kind == "dirichlet"
        ]

    @staticmethod
    def all_dirichlet(value=0.0) -> "BoundarySpec":
        return BoundarySpec(
            {f: FaceCondition("dirichlet", value) for f in FACES}
        )

    def interior_slices(self, mode_sizes):
        out = []
        for axis, n in enumerate(mode_sizes):
            lo = 1 if self.condition(axis, 0).kind == "dirichlet" else 0
            hi = n - (1 if self.condition(axis, 1).kind == "dirichlet" else 0)
            if hi - lo < 1:
                raise AssemblyError(f"no interior freedom left along axis {axis}")
            out.append(slice(lo, hi))
        return tuple(out)


@dataclass
class AssembledSystem:
    """Dirichlet-reduced system plus the boundary lift in full space."""

    K: TtMatrix  # interior operator
    f: TtTensor  # interior right-hand side
    lift: TtTensor  # boundary extension over the full coefficient space
    interior: tuple  # per-direction slices into the full space
    metadata: dict = field(default_factory=dict)


def _restrict_tensor(t: TtTensor, slices) -> TtTensor:
    return TtTensor([G[:, s, :] for G, s in zip(t.cores, slices)])


def _restrict_matrix(K: TtMatrix, slices) -> TtMatrix:
    return TtMatrix([G[:, s, s, :] for G, s in zip(K.cores, slices)])


def _face_coefficients(patch, disc, bc, axis, side):
    """Coefficient layer reproducing the face values, via Greville
    interpolation in the two in-face directions."""
    fc = bc.condition(axis, side)
    other = [d for d in range(3) if d != axis]
    gr = [greville_points(disc.solution_bases[d].knot_vector) for d in other]
    axes = [None, None, None]
    axes[axis] = np.array([float(side)])
    axes[other[0]], axes[other[1]] = gr
    ev = GridEvaluator(patch, axes)
    idx = np.zeros((gr[0].size * gr[1].size, 3), dtype=np.intp)
    A, B = np.meshgrid(np.arange(gr[0].size), np.arange(gr[1].size), indexing="ij")
    idx[:, other[0]] = A.ravel()
    idx[:, other[1]] = B.ravel()
    pts = ev.points(idx)
    G = fc.value_fn()(pts).reshape(gr[0].size, gr[1].size)
    colloc = [
        tabulate(disc.solution_bases[d], g)[0] for d, g in zip(other, gr)
    ]
    coeff = np.linalg.solve(colloc[0], G)
    coeff = np.linalg.solve(colloc[1], coeff.T).T
    return coeff  # (n_other0, n_other1)


def _lift_tensor(patch, disc, bc) -> TtTensor:
    """TT boundary extension: face coefficient layers, zero in the interior.

    Faces with nonzero data must not share an edge (the benchmark problems
    prescribe nonzero values only on opposite faces).
    """
    sizes = disc.mode_sizes
    nonzero = [
        (axis, side)
        for (axis, side) in bc.dirichlet_faces()
        if not bc.condition(axis, side).is_zero()
    ]
    for a, (axis_a, _) in enumerate(nonzero):
        for axis_b, _ in nonzero[a + 1:]:
            if axis_a != axis_b:
                raise AssemblyError(
                    "nonzero Dirichlet data on adjacent faces is not supported"
                )
    lift = TtTensor.zeros(sizes)
    for axis, side in nonzero:
        coeff = _face_coefficients(patch, disc, bc, axis, side)
        U, s, Vt = np.linalg.svd(coeff, full_matrices=False)
        keep = max(1, int(np.sum(s > 1e-14 * max(s[0], 1e-300))))
        Us = (U[:, :keep] * s[:keep])  # (n_other0, keep)
        V = Vt[:keep]  # (keep, n_other1)
        layer = np.zeros(sizes[axis])
        layer[0 if side == 0 else -1] = 1.0
        if axis == 0:
            cores = [
                layer[None, :, None],
                Us[None, :, :],
                V[:, :, None],
            ]
        elif axis == 1:
            cores = [
                Us[None, :, :],
                np.einsum("xy,i->xiy", np.eye(keep), layer),
                V[:, :, None],
            ]
        else:
            cores = [
                Us[None, :, :],
                V[:, :, None],
                layer[None, :, None],
            ]
        lift = tt_round(lift + TtTensor(cores), 1e-14)
    return lift


def apply_dirichlet(
    K: TtMatrix,
    f: TtTensor,
    bc: BoundarySpec,
    disc: Discretization,
    patch: GeometryPatch,
    eps: float = 1e-12,
) -> AssembledSystem:
    """Reduce to the interior unknowns; boundary data moves to the RHS.

    The reduced right-hand side is restrict(f) - restrict(K @ lift) and the
    reduced operator is the interior core slice of K, which keeps symmetry
    and ranks intact.
    """
    if not bc.dirichlet_faces():
        raise AssemblyError("Poisson operator is singular without a Dirichlet face")
    sizes = disc.mode_sizes
    if K.row_sizes != sizes or f.mode_sizes != sizes:
        raise AssemblyError("operator/load sizes do not match the discretization")
    slices = bc.interior_slices(sizes)
    lift = _lift_tensor(patch, disc, bc)
    f_int = _restrict_tensor(f, slices)
    if float(np.max(np.abs(lift.cores[0]))) != 0.0:
        correction = _restrict_tensor(tt_matvec(K, lift), slices)
        f_int = tt_round(tt_sub(f_int, correction), eps)
    K_int = _restrict_matrix(K, slices)
    return AssembledSystem(
        K_int,
        f_int,
        lift,
        slices,
        {
            "eps": eps,
            "dirichlet_faces": bc.dirichlet_faces(),
            "ranks_K": K_int.ranks,
            "ranks_f": f_int.ranks,
            "ranks_lift": lift.ranks,
        },
    )
