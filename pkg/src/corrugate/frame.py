"""Orthonormal normal pairs along immersed charts, by orthogonal propagation.

The pair seeds at node (0,..,0) and sweeps the grid row-major: each node
projects the previous node's pair onto its own normal space and
re-orthonormalizes. Periodic seam consistency is measured, not enforced;
the mismatch angle travels with the result so downstream stages can abort
on nontrivial holonomy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, InputError, PropagationError
from .grid import ImmersionField, PeriodicGrid

#: projected-pair Gram determinant below this aborts the sweep
COLLAPSE_TOL = 1e-6

UNIT_TOL = 1e-9
ORTHO_TOL = 1e-9
NORMAL_TOL = 1e-8


@dataclass
class FramePair:
    """Two unit, mutually orthogonal vector fields normal to an immersion.

    ``seam_mismatch`` is the residual closure angle across the periodic
    seam(s); ``holonomy`` is the raw rotation picked up by one full loop of
    parallel propagation (spread out in one dimension, see normal_pair).
    """

    grid: PeriodicGrid
    nu: np.ndarray
    b: np.ndarray
    seam_mismatch: float = 0.0
    holonomy: float = 0.0

    def validate(self, w: ImmersionField | None = None):
        for name, vec in (("nu", self.nu), ("b", self.b)):
            norms = np.linalg.norm(vec, axis=-1)
            if np.max(np.abs(norms - 1.0)) > UNIT_TOL:
                raise InputError(f"{name} is not unit length within {UNIT_TOL}")
        dots = np.einsum("...a,...a->...", self.nu, self.b)
        if np.max(np.abs(dots)) > ORTHO_TOL:
            raise InputError("frame vectors are not mutually orthogonal")
        if w is not None:
            der = w.derivatives()
            for vec in (self.nu, self.b):
                tdots = np.einsum("...ia,...a->...i", der, vec)
                if np.max(np.abs(tdots)) > NORMAL_TOL:
                    raise InputError("frame vector is not normal to the immersion")

    def plane_projector(self) -> np.ndarray:
        """Nodewise orthogonal projector onto span{nu, b}."""
        return (np.einsum("...a,...c->...ac", self.nu, self.nu)
                + np.einsum("...a,...c->...ac", self.b, self.b))


def _orthonormal_tangents(w: ImmersionField) -> np.ndarray:
    """Gram-Schmidt the derivative vectors nodewise, shape grid + (d, N)."""
    der = w.derivatives()
    d = w.grid.dim
    out = np.empty_like(der)
    t0 = der[..., 0, :]
    n0 = np.linalg.norm(t0, axis=-1, keepdims=True)
    if np.min(n0) <= 1e-12:
        raise InputError("zero tangent vector: not an immersion")
    out[..., 0, :] = t0 / n0
    if d == 2:
        t1 = der[..., 1, :]
        t1 = t1 - np.einsum("...a,...a->...", t1, out[..., 0, :])[..., None] * out[..., 0, :]
        n1 = np.linalg.norm(t1, axis=-1, keepdims=True)
        if np.min(n1) <= 1e-12:
            raise InputError("dependent tangent vectors: not an immersion")
        out[..., 1, :] = t1 / n1
    return out


def _project_normal(vec: np.ndarray, tangents: np.ndarray) -> np.ndarray:
    """Remove tangential components; ``tangents`` are orthonormal rows."""
    coeff = np.einsum("...ia,...a->...i", tangents, vec)
    return vec - np.einsum("...i,...ia->...a", coeff, tangents)


def _renormalize(nu_p: np.ndarray, b_p: np.ndarray, node_label: str):
    """Gram-determinant collapse check, then Gram-Schmidt of the pair."""
    g11 = np.einsum("...a,...a->...", nu_p, nu_p)
    g12 = np.einsum("...a,...a->...", nu_p, b_p)
    g22 = np.einsum("...a,...a->...", b_p, b_p)
    det = g11 * g22 - g12 * g12
    if np.min(det) < COLLAPSE_TOL:
        where = np.unravel_index(int(np.argmin(det)), np.shape(det)) if np.ndim(det) else ()
        raise PropagationError(
            f"projected pair nearly dependent at node {node_label}{where} "
            f"(Gram det {float(np.min(det)):.3e})")
    nu = nu_p / np.sqrt(g11)[..., None]
    b_perp = b_p - np.einsum("...a,...a->...", b_p, nu)[..., None] * nu
    b = b_perp / np.linalg.norm(b_perp, axis=-1)[..., None]
    return nu, b


def _seed_pair(tangents_at_start: np.ndarray, ambient: int):
    """Largest-residual coordinate axes after removing tangential parts."""
    residuals = np.stack([
        _project_normal(np.eye(ambient)[a], tangents_at_start) for a in range(ambient)])
    norms = np.linalg.norm(residuals, axis=-1)
    order = np.argsort(-norms, kind="stable")
    first, second = residuals[order[0]], residuals[order[1]]
    return _renormalize(first, second, "seed")


def _pair_angle(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(np.einsum("...a,...a->...", u, v), -1.0, 1.0))


def normal_pair(w: ImmersionField) -> FramePair:
    """Unit orthonormal pair normal to the immersed chart (codimension >= 2).

    Sweeps row-major from node (0,0): the first column propagates the seed
    down the rows, then every row propagates left to right. On the circle
    the loop holonomy of the transport is spread out as a constant-rate
    gauge rotation, producing a continuous periodic frame; the returned
    ``seam_mismatch`` is the residual closure angle (radians). On the torus
    the mismatch is measured raw across both seams and left to the caller.
    """
    grid = w.grid
    if w.ambient_dim < grid.dim + 2:
        raise CapabilityError(
            f"normal pair needs codimension >= 2, got N={w.ambient_dim} on a "
            f"{grid.dim}-dimensional chart")
    tangents = _orthonormal_tangents(w)
    N = w.ambient_dim

    if grid.dim == 1:
        res = grid.shape[0]
        nu = np.empty((res, N))
        b = np.empty((res, N))
        nu[0], b[0] = _seed_pair(tangents[0], N)
        for i in range(1, res):
            nu[i], b[i] = _renormalize(
                _project_normal(nu[i - 1], tangents[i]),
                _project_normal(b[i - 1], tangents[i]), f"({i},)")
        # loop holonomy of parallel transport (total torsion of the curve);
        # the bundle over the circle is trivial, so spreading the rotation
        # at a constant rate yields a continuous periodic frame; iterate the
        # rate because transport and rotation commute only to leading order
        rate = 0.0
        holonomy = None
        nu_c, b_c = nu, b
        for _ in range(16):
            nu_t, b_t = _renormalize(
                _project_normal(nu_c[-1], tangents[0]),
                _project_normal(b_c[-1], tangents[0]), "(seam,)")
            step = -rate / res
            nu_t, b_t = (np.cos(step) * nu_t + np.sin(step) * b_t,
                         -np.sin(step) * nu_t + np.cos(step) * b_t)
            residual = float(np.arctan2(np.dot(nu_t, b_c[0]), np.dot(nu_t, nu_c[0])))
            if holonomy is None:
                holonomy = residual
            if abs(residual) <= 1e-12:
                break
            rate += residual
            angles = -rate * np.arange(res) / res
            ca, sa = np.cos(angles)[:, None], np.sin(angles)[:, None]
            nu_c = ca * nu + sa * b
            b_c = -sa * nu + ca * b
        mismatch = float(max(np.max(_pair_angle(nu_t, nu_c[0])),
                             np.max(_pair_angle(b_t, b_c[0]))))
        pair = FramePair(grid, nu_c, b_c, seam_mismatch=mismatch, holonomy=holonomy)
        pair.validate()
        return pair

    r1, r2 = grid.shape
    nu = np.empty((r1, r2, N))
    b = np.empty((r1, r2, N))
    nu[0, 0], b[0, 0] = _seed_pair(tangents[0, 0], N)
    # seed column: each row start propagates from the previous row start
    for i in range(1, r1):
        nu[i, 0], b[i, 0] = _renormalize(
            _project_normal(nu[i - 1, 0], tangents[i, 0]),
            _project_normal(b[i - 1, 0], tangents[i, 0]), f"({i}, 0)")
    # sweep along rows; all rows advance one column per step
    for j in range(1, r2):
        nu[:, j], b[:, j] = _renormalize(
            _project_normal(nu[:, j - 1], tangents[:, j]),
            _project_normal(b[:, j - 1], tangents[:, j]), f"(:, {j})")

    nu_wrap_row, b_wrap_row = _renormalize(
        _project_normal(nu[:, -1], tangents[:, 0]),
        _project_normal(b[:, -1], tangents[:, 0]), "(:, seam)")
    nu_wrap_col, b_wrap_col = _renormalize(
        _project_normal(nu[-1, :], tangents[0, :]),
        _project_normal(b[-1, :], tangents[0, :]), "(seam, :)")
    mismatch = float(max(
        np.max(_pair_angle(nu_wrap_row, nu[:, 0])),
        np.max(_pair_angle(b_wrap_row, b[:, 0])),
        np.max(_pair_angle(nu_wrap_col, nu[0, :])),
        np.max(_pair_angle(b_wrap_col, b[0, :])),
    ))
    pair = FramePair(grid, nu, b, seam_mismatch=mismatch, holonomy=mismatch)
    # normality holds by construction (projection against the orthonormal
    # tangents); only the pair's own invariants need re-checking
    pair.validate()
    return pair
