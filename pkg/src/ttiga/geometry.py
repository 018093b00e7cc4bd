"""Exact NURBS volume patches for the benchmark solids.

Each factory returns a :class:`GeometryPatch` whose mapped image matches the
named solid exactly: circular sections are rational quadratic arcs (90-degree
arcs carry the 1/sqrt(2) midpoint weight), the hyperboloid profile is a
rational quadratic conic segment, and straight profiles are linear. Weight
grids therefore separate per direction, but evaluation supports a general
3D weight grid.

Axis convention per patch is recorded in ``metadata["directions"]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .splines import Basis1D, KnotVector, eval_basis

__all__ = [
    "GeometryError",
    "SingularMapError",
    "GeometryPatch",
    "MetricSample",
    "GridEvaluator",
    "GEOMETRY_NAMES",
    "make_geometry",
    "patch_to_json",
    "patch_from_json",
]

GEOMETRY_NAMES = (
    "unit_cube",
    "lshape",
    "ring",
    "closed_hemisphere",
    "opened_hemisphere",
    "hyperboloid",
    "quarter_torus",
)


class GeometryError(ValueError):
    """Invalid geometry parameters or construction failure."""


class SingularMapError(GeometryError):
    """Jacobian determinant below the singularity threshold."""


@dataclass(frozen=True)
class MetricSample:
    """Jacobian data at one parametric point.

    ``metric`` is the symmetric geometry factor inv(J) inv(J)^T det(J)
    that appears in every pulled-back gradient-gradient integrand.
    """

    jacobian: np.ndarray
    det: float
    metric: np.ndarray


@dataclass(frozen=True)
class GeometryPatch:
    """Trivariate NURBS map from the unit cube onto a physical solid."""

    bases: tuple[Basis1D, Basis1D, Basis1D]
    control_points: np.ndarray  # (n1, n2, n3, 3)
    weights: np.ndarray  # (n1, n2, n3), strictly positive
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        cp = np.asarray(self.control_points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "control_points", cp)
        object.__setattr__(self, "weights", w)
        shape = tuple(b.n_basis for b in self.bases)
        if cp.shape != shape + (3,):
            raise GeometryError(f"control grid shape {cp.shape} != {shape + (3,)}")
        if w.shape != shape:
            raise GeometryError(f"weight grid shape {w.shape} != {shape}")
        if np.any(w <= 0):
            raise GeometryError("weights must be strictly positive")

    @property
    def degrees(self) -> tuple[int, int, int]:
        return tuple(b.degree for b in self.bases)

    @property
    def scale(self) -> float:
        """Bounding-box diagonal of the control net; sets the length unit."""
        span = self.control_points.reshape(-1, 3)
        return float(np.linalg.norm(span.max(axis=0) - span.min(axis=0)))

    def eval_point(self, xi) -> np.ndarray:
        """Physical coordinates of the parametric point ``xi``."""
        num, den, _, _ = _local_terms(self, xi)
        return num / den

    def eval_metric(self, xi) -> MetricSample:
        """Jacobian, determinant, and stiffness metric factor at ``xi``."""
        num, den, dnum, dden = _local_terms(self, xi)
        # quotient rule per parametric direction; columns of J
        jac = (dnum * den - np.outer(num, dden)) / den**2
        det = float(np.linalg.det(jac))
        if abs(det) < 1e-12 * self.scale**3:
            raise SingularMapError(f"singular geometry map at xi={tuple(xi)}")
        inv = np.linalg.inv(jac)
        metric = inv @ inv.T * det
        metric = 0.5 * (metric + metric.T)
        return MetricSample(jac, det, metric)


def _local_terms(patch: GeometryPatch, xi):
    """Numerator/denominator of the rational map and their xi-derivatives.

    Only the (p_d + 1)^3 active basis functions are touched.
    """
    evs = [eval_basis(b, float(x)) for b, x in zip(patch.bases, xi)]
    sl = tuple(
        slice(ev.first_index, ev.first_index + ev.values.size) for ev in evs
    )
    w = patch.weights[sl]
    wp = w[..., None] * patch.control_points[sl]
    v1, v2, v3 = (ev.values for ev in evs)
    d1, d2, d3 = (ev.derivs for ev in evs)
    den = np.einsum("a,b,c,abc->",  v1, v2, v3, w)
    num = np.einsum("a,b,c,abcx->x",  v1, v2, v3, wp)
    dden = np.array(
        [
            np.einsum("a,b,c,abc->",  d1, v2, v3, w),
            np.einsum("a,b,c,abc->",  v1, d2, v3, w),
            np.einsum("a,b,c,abc->",  v1, v2, d3, w),
        ]
    )
    dnum = np.stack(
        [
            np.einsum("a,b,c,abcx->x",  d1, v2, v3, wp),
            np.einsum("a,b,c,abcx->x",  v1, d2, v3, wp),
            np.einsum("a,b,c,abcx->x",  v1, v2, d3, wp),
        ],
        axis=1,
    )
    return num, den, dnum, dden


class GridEvaluator:
    """Batched patch evaluation on a fixed tensor grid of parameters.

    Tabulates the active basis windows per direction once, then evaluates
    points, Jacobians, and metric factors at arbitrary batches of grid
    multi-indices. This is the evaluation backend for the cross-interpolation
    oracles and the error quadrature.
    """

    def __init__(self, patch: GeometryPatch, axes_points):
        self.patch = patch
        self.axes_points = [np.asarray(a, dtype=float) for a in axes_points]
        self._win = []
        for basis, pts in zip(patch.bases, self.axes_points):
            p = basis.degree
            starts = np.empty(pts.size, dtype=np.intp)
            vals = np.empty((pts.size, p + 1))
            ders = np.empty((pts.size, p + 1))
            for q, x in enumerate(pts):
                ev = eval_basis(basis, float(x))
                starts[q] = ev.first_index
                vals[q] = ev.values
                ders[q] = ev.derivs
            self._win.append((starts, vals, ders))
        self._wp = patch.weights[..., None] * patch.control_points
        self._sing_tol = 1e-12 * patch.scale**3

    @property
    def shape(self):
        return tuple(a.size for a in self.axes_points)

    def _gather(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        vals, ders, slots = [], [], []
        for d in range(3):
            starts, V, D = self._win[d]
            rows = idx[:, d]
            vals.append(V[rows])
            ders.append(D[rows])
            p1 = V.shape[1]
            slots.append(starts[rows][:, None] + np.arange(p1)[None, :])
        a, b, c = slots
        mesh = (a[:, :, None, None], b[:, None, :, None], c[:, None, None, :])
        w_win = self.patch.weights[mesh]
        wp_win = self._wp[mesh[0], mesh[1], mesh[2], :]
        return vals, ders, w_win, wp_win

    def points(self, idx) -> np.ndarray:
        """Physical coordinates for grid multi-indices ``idx`` of shape (N, 3)."""
        (v1, v2, v3), _, w_win, wp_win = self._gather(idx)
        w_ab = np.einsum("nc,nabc->nab", v3, w_win)
        den = np.einsum("na,na->n", v1, np.einsum("nb,nab->na", v2, w_ab))
        p_ab = np.einsum("nc,nabcx->nabx", v3, wp_win)
        num = np.einsum("na,nax->nx", v1, np.einsum("nb,nabx->nax", v2, p_ab))
        return num / den[:, None]

    def jacobians(self, idx):
        """Jacobians (N, 3, 3) and physical points (N, 3) for ``idx``.

        The derivative sums reuse the partial contractions of the value
        sums, so each (p+1)^3 window is traversed only twice.
        """
        (v1, v2, v3), (d1, d2, d3), w_win, wp_win = self._gather(idx)
        w_ab = np.einsum("nc,nabc->nab", v3, w_win)
        w_ab_d3 = np.einsum("nc,nabc->nab", d3, w_win)
        w_a = np.einsum("nb,nab->na", v2, w_ab)
        den = np.einsum("na,na->n", v1, w_a)
        dden = np.stack(
            [
                np.einsum("na,na->n", d1, w_a),
                np.einsum("na,na->n", v1, np.einsum("nb,nab->na", d2, w_ab)),
                np.einsum("na,na->n", v1, np.einsum("nb,nab->na", v2, w_ab_d3)),
            ],
            axis=1,
        )
        p_ab = np.einsum("nc,nabcx->nabx", v3, wp_win)
        p_ab_d3 = np.einsum("nc,nabcx->nabx", d3, wp_win)
        p_a = np.einsum("nb,nabx->nax", v2, p_ab)
        num = np.einsum("na,nax->nx", v1, p_a)
        dnum = np.stack(
            [
                np.einsum("na,nax->nx", d1, p_a),
                np.einsum(
                    "na,nax->nx", v1, np.einsum("nb,nabx->nax", d2, p_ab)
                ),
                np.einsum(
                    "na,nax->nx", v1, np.einsum("nb,nabx->nax", v2, p_ab_d3)
                ),
            ],
            axis=2,
        )
        pts = num / den[:, None]
        jac = (dnum * den[:, None, None] - num[:, :, None] * dden[:, None, :]) / (
            den[:, None, None] ** 2
        )
        return jac, pts

    def metric(self, idx):
        """Determinants (N,) and metric factors (N, 3, 3) for ``idx``."""
        jac, _ = self.jacobians(idx)
        det = np.linalg.det(jac)
        bad = np.abs(det) < self._sing_tol
        if np.any(bad):
            k = int(np.nonzero(bad)[0][0])
            xi = tuple(
                float(self.axes_points[d][np.asarray(idx)[k, d]]) for d in range(3)
            )
            raise SingularMapError(f"singular geometry map at xi={xi}")
        inv = np.linalg.inv(jac)
        metric = inv @ inv.transpose(0, 2, 1) * det[:, None, None]
        metric = 0.5 * (metric + metric.transpose(0, 2, 1))
        return det, metric


# ---------------------------------------------------------------------------
# construction helpers

_SQ2INV = 1.0 / np.sqrt(2.0)


def _linear_basis() -> Basis1D:
    return Basis1D(KnotVector(np.array([0.0, 0.0, 1.0, 1.0]), 1))


def _full_circle_net():
    """Exact unit circle: 9 control points, four 90-degree arcs."""
    kv = KnotVector(
        np.array([0, 0, 0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1, 1, 1], dtype=float),
        2,
    )
    ctrl = np.array(
        [
            [1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0],
            [-1, -1], [0, -1], [1, -1], [1, 0],
        ],
        dtype=float,
    )
    w = np.array([1, _SQ2INV, 1, _SQ2INV, 1, _SQ2INV, 1, _SQ2INV, 1], dtype=float)
    return kv, ctrl, w


def _arc_net(angle0: float, angle1: float):
    """Exact circular arc spanning less than 180 degrees (one segment)."""
    sweep = angle1 - angle0
    if not 0 < abs(sweep) < np.pi:
        raise GeometryError("single-segment arc must span (0, 180) degrees")
    mid = 0.5 * (angle0 + angle1)
    wmid = np.cos(0.5 * sweep)
    kv = KnotVector(np.array([0, 0, 0, 1, 1, 1], dtype=float), 2)
    ctrl = np.array(
        [
            [np.cos(angle0), np.sin(angle0)],
            [np.cos(mid) / wmid, np.sin(mid) / wmid],
            [np.cos(angle1), np.sin(angle1)],
        ]
    )
    return kv, ctrl, np.array([1.0, wmid, 1.0])


def _hyperbola_net(r_end: float, r_waist: float, z0: float, z1: float):
    """Conic segment tracing rho(z) = sqrt(rw^2 + c (z - zm)^2), rho(z0|z1) = r_end.

    The midpoint weight r_end / r_waist places the curve shoulder exactly on
    the waist, which pins the conic to the hyperbola.
    """
    if not 0 < r_waist < r_end:
        raise GeometryError("need 0 < waist radius < end radius")
    zm = 0.5 * (z0 + z1)
    kv = KnotVector(np.array([0, 0, 0, 1, 1, 1], dtype=float), 2)
    ctrl = np.array([[r_end, z0], [r_waist**2 / r_end, zm], [r_end, z1]])
    return kv, ctrl, np.array([1.0, r_end / r_waist, 1.0])


def _flip_axis(ctrl: np.ndarray, w: np.ndarray, bases, axis: int):
    """Reverse one parametric direction (mirrors the knot vector)."""
    ctrl = np.flip(ctrl, axis=axis)
    w = np.flip(w, axis=axis)
    kv = bases[axis].knot_vector
    mirrored = KnotVector((kv.start + kv.end) - kv.knots[::-1], kv.degree)
    bases = list(bases)
    bases[axis] = Basis1D(mirrored, None)
    return ctrl, w, tuple(bases)


def _finalize(bases, ctrl, w, metadata) -> GeometryPatch:
    """Fix orientation so det(J) > 0, then verify on an interior sample."""
    patch = GeometryPatch(tuple(bases), ctrl, w, metadata)
    probe = np.array([0.37, 0.51, 0.43])
    if patch.eval_metric(probe).det < 0:
        ctrl, w, bases = _flip_axis(ctrl, w, bases, 2)
        patch = GeometryPatch(tuple(bases), ctrl, w, metadata)
    for xi in ([0.11, 0.62, 0.29], [0.83, 0.24, 0.77], [0.5, 0.5, 0.5]):
        if patch.eval_metric(np.asarray(xi)).det <= 0:
            raise GeometryError("orientation check failed: det(J) <= 0")
    return patch


def _product_patch(kvs, builder, metadata) -> GeometryPatch:
    """Assemble a patch from three knot vectors and a pointwise control builder."""
    bases = tuple(Basis1D(kv, None) for kv in kvs)
    n = tuple(kv.n_basis for kv in kvs)
    ctrl = np.empty(n + (3,))
    w = np.empty(n)
    for i in range(n[0]):
        for j in range(n[1]):
            for k in range(n[2]):
                ctrl[i, j, k], w[i, j, k] = builder(i, j, k)
    return _finalize(bases, ctrl, w, metadata)


def _require(cond: bool, msg: str):
    if not cond:
        raise GeometryError(msg)


def make_geometry(name: str, params: dict | None = None) -> GeometryPatch:
    """Build one of the benchmark solids by name.

    Supported names and parameters (all optional, with defaults):

    * ``unit_cube`` -- identity map, test fixture.
    * ``lshape`` -- ``zmax`` (default 1.0): outer box [-1,1]^2 x [0,zmax]
      minus the cutout [0,1]^2 x [0,zmax], folded into one patch with a
      C0 knot line along the reentrant diagonal.
    * ``ring`` -- ``r_in`` (0.5), ``r_out`` (1.0), ``h`` (1.0).
    * ``closed_hemisphere`` -- ``r_in`` (0.5), ``r_out`` (1.0); the pole
      face is flagged degenerate in the metadata.
    * ``opened_hemisphere`` -- ``r_in``, ``r_out``, ``hole_deg`` (18.0).
    * ``hyperboloid`` -- ``r_middle`` (0.5), ``r_top`` (1.0),
      ``thickness`` (0.3), ``zmin`` (-1.0), ``zmax`` (1.0).
    * ``quarter_torus`` -- ``r_in`` (0.5), ``r_out`` (1.0), ``R`` (3.0).
    """
    params = dict(params or {})
    if name not in GEOMETRY_NAMES:
        raise GeometryError(f"unknown geometry {name!r}; choose from {GEOMETRY_NAMES}")
    return _FACTORIES[name](params)


def _take(params: dict, defaults: dict) -> dict:
    unknown = set(params) - set(defaults)
    if unknown:
        raise GeometryError(f"unknown geometry parameters: {sorted(unknown)}")
    out = dict(defaults)
    out.update(params)
    return out


def _make_unit_cube(params):
    p = _take(params, {})
    lin = _linear_basis()
    corners = np.array([0.0, 1.0])
    ctrl = np.stack(
        np.meshgrid(corners, corners, corners, indexing="ij"), axis=-1
    )
    w = np.ones((2, 2, 2))
    meta = {
        "name": "unit_cube",
        "params": p,
        "directions": ("x", "y", "z"),
        "default_dirichlet": [[0, 0], [0, 1], [1, 0], [1, 1], [2, 0], [2, 1]],
    }
    return _finalize((lin, lin, lin), ctrl, w, meta)


def _make_lshape(params):
    p = _take(params, {"zmax": 1.0})
    _require(p["zmax"] > 0, "zmax must be positive")
    # Bent bar: xi1 runs along the L, xi2 from the inner to the outer
    # boundary, xi3 in z. The reentrant corner square is split along its
    # diagonal by the C0 line at xi1 = 0.5, so det(J) stays bounded away
    # from zero everywhere.
    kv1 = KnotVector(np.array([0, 0, 0.5, 1, 1], dtype=float), 1)
    inner = np.array([[0, 1], [0, 0], [1, 0]], dtype=float)
    outer = np.array([[-1, 1], [-1, -1], [1, -1]], dtype=float)
    zs = np.array([0.0, p["zmax"]])
    ctrl = np.empty((3, 2, 2, 3))
    for i in range(3):
        for j, row in enumerate((inner, outer)):
            for k in range(2):
                ctrl[i, j, k] = (row[i, 0], row[i, 1], zs[k])
    w = np.ones((3, 2, 2))
    lin = _linear_basis()
    meta = {
        "name": "lshape",
        "params": p,
        "directions": ("path", "across", "height"),
        "default_dirichlet": [[0, 0], [0, 1], [1, 0], [1, 1]],
    }
    return _finalize((Basis1D(kv1, None), lin, lin), ctrl, w, meta)


def _make_ring(params):
    p = _take(params, {"r_in": 0.5, "r_out": 1.0, "h": 1.0})
    _require(0 < p["r_in"] < p["r_out"], "need 0 < r_in < r_out")
    _require(p["h"] > 0, "height must be positive")
    kv_c, c_ctrl, c_w = _full_circle_net()
    lin = _linear_basis().knot_vector
    radii = np.array([p["r_in"], p["r_out"]])
    zs = np.array([0.0, p["h"]])

    def build(i, j, k):
        x, y = c_ctrl[i] * radii[j]
        return (x, y, zs[k]), c_w[i]

    meta = {
        "name": "ring",
        "params": p,
        "directions": ("angular", "radial", "height"),
        "default_dirichlet": [[1, 0], [1, 1]],
    }
    return _product_patch(
        [kv_c, lin, lin], build, meta
    )


def _make_closed_hemisphere(params):
    p = _take(params, {"r_in": 0.5, "r_out": 1.0})
    _require(0 < p["r_in"] < p["r_out"], "need 0 < r_in < r_out")
    kv_c, c_ctrl, c_w = _full_circle_net()
    kv_a, a_ctrl, a_w = _arc_net(0.0, 0.5 * np.pi)  # equator to pole
    lin = _linear_basis().knot_vector
    radii = np.array([p["r_in"], p["r_out"]])

    def build(i, j, k):
        rho, z = a_ctrl[j] * radii[k]
        return (c_ctrl[i, 0] * rho, c_ctrl[i, 1] * rho, z), c_w[i] * a_w[j]

    meta = {
        "name": "closed_hemisphere",
        "params": p,
        "directions": ("longitude", "latitude", "radial"),
        "default_dirichlet": [[2, 0], [2, 1]],
        "degenerate_faces": [[1, 1]],  # pole: longitude circle collapses
    }
    return _product_patch(
        [kv_c, kv_a, lin], build, meta
    )


def _make_opened_hemisphere(params):
    p = _take(params, {"r_in": 0.5, "r_out": 1.0, "hole_deg": 18.0})
    _require(0 < p["r_in"] < p["r_out"], "need 0 < r_in < r_out")
    _require(0 < p["hole_deg"] < 90, "hole angle must be in (0, 90) degrees")
    kv_c, c_ctrl, c_w = _full_circle_net()
    top = 0.5 * np.pi - np.deg2rad(p["hole_deg"])
    kv_a, a_ctrl, a_w = _arc_net(0.0, top)
    lin = _linear_basis().knot_vector
    radii = np.array([p["r_in"], p["r_out"]])

    def build(i, j, k):
        rho, z = a_ctrl[j] * radii[k]
        return (c_ctrl[i, 0] * rho, c_ctrl[i, 1] * rho, z), c_w[i] * a_w[j]

    meta = {
        "name": "opened_hemisphere",
        "params": p,
        "directions": ("longitude", "latitude", "radial"),
        "default_dirichlet": [[1, 0], [1, 1]],
    }
    return _product_patch(
        [kv_c, kv_a, lin], build, meta
    )


def _make_hyperboloid(params):
    p = _take(
        params,
        {"r_middle": 0.5, "r_top": 1.0, "thickness": 0.3, "zmin": -1.0, "zmax": 1.0},
    )
    _require(0 < p["r_middle"] < p["r_top"], "need 0 < r_middle < r_top")
    _require(0 < p["thickness"] < 2 * p["r_middle"], "invalid shell thickness")
    _require(p["zmin"] < p["zmax"], "need zmin < zmax")
    kv_c, c_ctrl, c_w = _full_circle_net()
    kv_h, h_ctrl, h_w = _hyperbola_net(p["r_top"], p["r_middle"], p["zmin"], p["zmax"])
    lin = _linear_basis().knot_vector
    offs = np.array([-0.5, 0.5]) * p["thickness"]

    def build(i, j, k):
        rho = h_ctrl[j, 0] + offs[k]
        z = h_ctrl[j, 1]
        return (c_ctrl[i, 0] * rho, c_ctrl[i, 1] * rho, z), c_w[i] * h_w[j]

    meta = {
        "name": "hyperboloid",
        "params": p,
        "directions": ("angular", "height", "thickness"),
        "default_dirichlet": [[1, 0], [1, 1]],
    }
    return _product_patch(
        [kv_c, kv_h, lin], build, meta
    )


def _make_quarter_torus(params):
    p = _take(params, {"r_in": 0.5, "r_out": 1.0, "R": 3.0})
    _require(0 < p["r_in"] < p["r_out"], "need 0 < r_in < r_out")
    _require(p["R"] > p["r_out"], "toroidal radius must exceed r_out")
    kv_t, t_ctrl, t_w = _arc_net(0.0, 0.5 * np.pi)  # toroidal quarter sweep
    kv_p, p_ctrl, p_w = _full_circle_net()  # poloidal section
    lin = _linear_basis().knot_vector
    radii = np.array([p["r_in"], p["r_out"]])

    def build(i, j, k):
        rho = p["R"] + p_ctrl[j, 0] * radii[k]
        z = p_ctrl[j, 1] * radii[k]
        return (t_ctrl[i, 0] * rho, t_ctrl[i, 1] * rho, z), t_w[i] * p_w[j]

    meta = {
        "name": "quarter_torus",
        "params": p,
        "directions": ("toroidal", "poloidal", "radial"),
        "default_dirichlet": [[2, 0], [2, 1]],
    }
    return _product_patch(
        [kv_t, kv_p, lin], build, meta
    )


_FACTORIES = {
    "unit_cube": _make_unit_cube,
    "lshape": _make_lshape,
    "ring": _make_ring,
    "closed_hemisphere": _make_closed_hemisphere,
    "opened_hemisphere": _make_opened_hemisphere,
    "hyperboloid": _make_hyperboloid,
    "quarter_torus": _make_quarter_torus,
}


# ---------------------------------------------------------------------------
# serialization

def patch_to_json(patch: GeometryPatch) -> str:
    """Serialize a patch (knots, degrees, control grid, weights) to JSON."""
    doc = {
        "degrees": list(patch.degrees),
        "knots": [b.knot_vector.knots.tolist() for b in patch.bases],
        "control_points": patch.control_points.tolist(),
        "weights": patch.weights.tolist(),
        "metadata": patch.metadata,
    }
    return json.dumps(doc, indent=2)


def patch_from_json(text: str) -> GeometryPatch:
    doc = json.loads(text)
    bases = tuple(
        Basis1D(KnotVector(np.asarray(kn, dtype=float), p), None)
        for kn, p in zip(doc["knots"], doc["degrees"])
    )
    return GeometryPatch(
        bases,
        np.asarray(doc["control_points"], dtype=float),
        np.asarray(doc["weights"], dtype=float),
        doc.get("metadata", {}),
    )
