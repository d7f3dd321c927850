"""Periodic-grid fields with spectral calculus.

Charts are single periodic boxes [0, 2pi)^d with d in {1, 2} (circle and
square torus). Three field kinds live on a grid:

  ScalarField      one real value per node
  MetricField      symmetric (0,2) tensor per node, stored triangular
  ImmersionField   map into R^N per node, lift = linear part + periodic part

Differentiation is DFT-based, hence exact (to rounding) for band-limited
fields. Maps whose lift is linear-plus-periodic (e.g. x -> (x, 0, ...))
carry per-axis ``offsets``: the stored samples are the periodic part only,
and every derivative adds the constant linear slope back in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AliasingError, CapabilityError, InputError

TWO_PI = 2.0 * np.pi

#: |margin| below this counts as zero when deciding (strict) shortness
SHORT_TOL = 1e-9

#: sup-norm derivative orders supported (all orders the estimates use)
MAX_DERIVATIVE_ORDER = 4


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic grid over [0, 2pi)^d, d = 1 or 2.

    Resolutions are powers of two (enables exact spectral resampling) and
    at least ``min_resolution`` per axis.
    """

    shape: tuple[int, ...]
    min_resolution: int = 16

    def __post_init__(self):
        shape = tuple(int(r) for r in self.shape)
        object.__setattr__(self, "shape", shape)
        if len(shape) not in (1, 2):
            raise InputError(f"grid dimension must be 1 or 2, got {len(shape)}")
        for r in shape:
            if r < self.min_resolution:
                raise InputError(f"resolution {r} below minimum {self.min_resolution}")
            if r & (r - 1):
                raise InputError(f"resolution {r} is not a power of two")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    def axes(self) -> list[np.ndarray]:
        """Per-axis node coordinates, 2pi*i/res."""
        return [TWO_PI * np.arange(r) / r for r in self.shape]

    def meshes(self) -> list[np.ndarray]:
        """Full coordinate arrays of shape ``self.shape`` (indexing 'ij')."""
        if self.dim == 1:
            return self.axes()
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def wavenumbers(self, axis: int) -> np.ndarray:
        """Integer angular wavenumbers 0..res/2 for the rfft along ``axis``."""
        return np.arange(self.shape[axis] // 2 + 1, dtype=float)

    def refined(self, factor_per_axis) -> "PeriodicGrid":
        if np.isscalar(factor_per_axis):
            factor_per_axis = (factor_per_axis,) * self.dim
        new_shape = tuple(int(r * f) for r, f in zip(self.shape, factor_per_axis))
        return PeriodicGrid(new_shape, min_resolution=self.min_resolution)


def _check_finite(values, what: str):
    if not np.all(np.isfinite(values)):
        raise InputError(f"non-finite values in {what}")


def spectral_derivative(values: np.ndarray, grid: PeriodicGrid, axis: int,
                        order: int = 1) -> np.ndarray:
    """Spectral d^order/dx_axis^order of node samples, periodic in each axis.

    ``values`` may carry trailing component axes; grid axes come first.
    The Nyquist mode is zeroed for odd orders (its derivative is not
    representable on the grid).
    """
    res = grid.shape[axis]
    spec = np.fft.rfft(values, axis=axis)
    k = grid.wavenumbers(axis)
    mult = (1j * k) ** order
    if order % 2 == 1:
        mult[-1] = 0.0
    shape = [1] * spec.ndim
    shape[axis] = len(k)
    spec *= mult.reshape(shape)
    return np.fft.irfft(spec, n=res, axis=axis)


class ScalarField:
    """Real scalar samples on a periodic grid."""

    kind = "scalar"

    def __init__(self, grid: PeriodicGrid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise InputError(f"scalar values shape {values.shape} != grid {grid.shape}")
        _check_finite(values, "scalar field")
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid: PeriodicGrid, fn) -> "ScalarField":
        return cls(grid, fn(*grid.meshes()))

    @classmethod
    def constant(cls, grid: PeriodicGrid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    def derivative(self, axis: int, order: int = 1) -> "ScalarField":
        return ScalarField(self.grid, spectral_derivative(self.values, self.grid, axis, order))

    def gradient(self) -> np.ndarray:
        """Gradient samples, shape grid.shape + (dim,)."""
        return np.stack(
            [spectral_derivative(self.values, self.grid, a) for a in range(self.grid.dim)],
            axis=-1,
        )

    def __add__(self, other):
        _require_same_grid(self, other)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other):
        _require_same_grid(self, other)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, c: float):
        return ScalarField(self.grid, self.values * float(c))

    __rmul__ = __mul__


def triangular_index_pairs(dim: int) -> list[tuple[int, int]]:
    """Component order of stored metric entries: (0,0),(0,1),(1,1) for d=2."""
    return [(i, j) for i in range(dim) for j in range(i, dim)]


class MetricField:
    """Symmetric (0,2) tensor samples, stored as upper-triangular components."""

    kind = "metric"

    def __init__(self, grid: PeriodicGrid, comps):
        ncomp = grid.dim * (grid.dim + 1) // 2
        comps = np.asarray(comps, dtype=float)
        if comps.shape != grid.shape + (ncomp,):
            raise InputError(
                f"metric components shape {comps.shape} != {grid.shape + (ncomp,)}")
        _check_finite(comps, "metric field")
        self.grid = grid
        self.comps = comps

    @classmethod
    def from_matrices(cls, grid: PeriodicGrid, mats) -> "MetricField":
        mats = np.asarray(mats, dtype=float)
        pairs = triangular_index_pairs(grid.dim)
        comps = np.stack([(mats[..., i, j] + mats[..., j, i]) / 2.0 for i, j in pairs], axis=-1)
        return cls(grid, comps)

    @classmethod
    def constant_matrix(cls, grid: PeriodicGrid, mat) -> "MetricField":
        mat = np.asarray(mat, dtype=float)
        mats = np.broadcast_to(mat, grid.shape + mat.shape)
        return cls.from_matrices(grid, mats)

    @classmethod
    def identity(cls, grid: PeriodicGrid, scale: float = 1.0) -> "MetricField":
        return cls.constant_matrix(grid, float(scale) * np.eye(grid.dim))

    def matrices(self) -> np.ndarray:
        """Dense symmetric matrices, shape grid.shape + (d, d)."""
        d = self.grid.dim
        mats = np.empty(self.grid.shape + (d, d))
        for idx, (i, j) in enumerate(triangular_index_pairs(d)):
            mats[..., i, j] = self.comps[..., idx]
            mats[..., j, i] = self.comps[..., idx]
        return mats

    def component(self, i: int, j: int) -> np.ndarray:
        if i > j:
            i, j = j, i
        idx = triangular_index_pairs(self.grid.dim).index((i, j))
        return self.comps[..., idx]

    def eigenvalues_min(self) -> np.ndarray:
        """Nodewise smallest eigenvalue (closed form for d <= 2)."""
        if self.grid.dim == 1:
            return self.comps[..., 0]
        a = self.comps[..., 0]
        b = self.comps[..., 1]
        c = self.comps[..., 2]
        half_tr = (a + c) / 2.0
        rad = np.sqrt(((a - c) / 2.0) ** 2 + b * b)
        return half_tr - rad

    def __add__(self, other):
        _require_same_grid(self, other)
        return MetricField(self.grid, self.comps + other.comps)

    def __sub__(self, other):
        _require_same_grid(self, other)
        return MetricField(self.grid, self.comps - other.comps)

    def __mul__(self, c: float):
        return MetricField(self.grid, self.comps * float(c))

    __rmul__ = __mul__


class ImmersionField:
    """Map chart -> R^N sampled on the grid.

    The lift is ``values = linear + periodic`` with linear part
    x -> offsets^T x; ``offsets`` has shape (dim, N) and is zero for
    genuinely periodic maps. Only the periodic part is stored.
    """

    kind = "immersion"

    def __init__(self, grid: PeriodicGrid, values, offsets=None, *, _periodic=False):
        values = np.asarray(values, dtype=float)
        if values.ndim != grid.dim + 1:
            raise InputError("immersion values need one trailing component axis")
        ambient = values.shape[-1]
        if values.shape[:-1] != grid.shape:
            raise InputError(f"immersion values shape {values.shape[:-1]} != grid {grid.shape}")
        if ambient < grid.dim:
            raise InputError(f"ambient dimension {ambient} below chart dimension {grid.dim}")
        if offsets is None:
            offsets = np.zeros((grid.dim, ambient))
        offsets = np.asarray(offsets, dtype=float)
        if offsets.shape != (grid.dim, ambient):
            raise InputError(f"offsets shape {offsets.shape} != {(grid.dim, ambient)}")
        _check_finite(values, "immersion field")
        _check_finite(offsets, "immersion offsets")
        if _periodic:
            periodic = values
        else:
            periodic = values - self._linear_part(grid, offsets)
        self.grid = grid
        self.ambient_dim = ambient
        self.offsets = offsets
        self.periodic = periodic
        self._first = None
        self._second = None

    @staticmethod
    def _linear_part(grid: PeriodicGrid, offsets) -> np.ndarray:
        meshes = grid.meshes()
        out = np.zeros(grid.shape + (offsets.shape[1],))
        for a in range(grid.dim):
            out += meshes[a][..., None] * offsets[a]
        return out

    @classmethod
    def from_periodic(cls, grid, periodic, offsets=None) -> "ImmersionField":
        return cls(grid, periodic, offsets, _periodic=True)

    @classmethod
    def from_function(cls, grid: PeriodicGrid, fn, ambient_dim=None,
                      offsets=None) -> "ImmersionField":
        """Sample component functions fn(x[, y]) -> tuple of arrays."""
        vals = np.stack(np.broadcast_arrays(*fn(*grid.meshes())), axis=-1)
        if ambient_dim is not None and vals.shape[-1] != ambient_dim:
            raise InputError("component count does not match ambient_dim")
        return cls(grid, vals, offsets)

    @property
    def values(self) -> np.ndarray:
        """Lift samples at nodes (linear part + periodic part)."""
        return self.periodic + self._linear_part(self.grid, self.offsets)

    def derivatives(self) -> np.ndarray:
        """First derivatives, shape grid.shape + (dim, N).

        Cached (fields are treated as immutable); returned read-only.
        """
        if self._first is None:
            der = np.stack(
                [spectral_derivative(self.periodic, self.grid, a)
                 for a in range(self.grid.dim)],
                axis=-2,
            )
            der += self.offsets
            der.flags.writeable = False
            self._first = der
        return self._first

    def second_derivatives(self) -> np.ndarray:
        """Symmetrized second derivatives, shape grid.shape + (dim, dim, N).

        Cached; returned read-only.
        """
        if self._second is None:
            d = self.grid.dim
            out = np.empty(self.grid.shape + (d, d, self.ambient_dim))
            for i in range(d):
                for j in range(i, d):
                    if i == j:
                        der = spectral_derivative(self.periodic, self.grid, i, order=2)
                    else:
                        der = spectral_derivative(
                            spectral_derivative(self.periodic, self.grid, i), self.grid, j)
                    out[..., i, j, :] = der
                    out[..., j, i, :] = der
            out.flags.writeable = False
            self._second = out
        return self._second

    def min_rank_margin(self) -> float:
        """Smallest eigenvalue of the first-derivative Gram over all nodes."""
        der = self.derivatives()
        gram = np.einsum("...ia,...ja->...ij", der, der)
        return float(np.min(np.linalg.eigvalsh(gram)))

    def require_immersion(self, tol: float = 1e-10):
        if self.min_rank_margin() <= tol:
            raise InputError("differential drops rank: not an immersion at this tolerance")

    def __add__(self, other):
        _require_same_grid(self, other)
        if self.ambient_dim != other.ambient_dim:
            raise InputError("ambient dimension mismatch")
        return ImmersionField.from_periodic(
            self.grid, self.periodic + other.periodic, self.offsets + other.offsets)

    def __sub__(self, other):
        _require_same_grid(self, other)
        if self.ambient_dim != other.ambient_dim:
            raise InputError("ambient dimension mismatch")
        return ImmersionField.from_periodic(
            self.grid, self.periodic - other.periodic, self.offsets - other.offsets)

    def __mul__(self, c: float):
        return ImmersionField.from_periodic(
            self.grid, self.periodic * float(c), self.offsets * float(c))

    __rmul__ = __mul__


def _require_same_grid(a, b):
    if a.grid.shape != b.grid.shape:
        raise InputError(f"grid mismatch: {a.grid.shape} vs {b.grid.shape}")


# ---------------------------------------------------------------------------
# operations


def pullback_metric(w: ImmersionField) -> MetricField:
    """Induced metric with entries d_i w . d_j w (spectral derivatives)."""
    der = w.derivatives()
    pairs = triangular_index_pairs(w.grid.dim)
    comps = np.stack(
        [np.einsum("...a,...a->...", der[..., i, :], der[..., j, :]) for i, j in pairs],
        axis=-1,
    )
    return MetricField(w.grid, comps)


def _component_stack(field) -> tuple[np.ndarray, tuple[int, ...]]:
    """Node-indexed array of field components plus the component shape."""
    if isinstance(field, ScalarField):
        return field.values[..., None], (1,)
    if isinstance(field, MetricField):
        d = field.grid.dim
        mats = field.matrices()
        return mats.reshape(field.grid.shape + (d * d,)), (d, d)
    if isinstance(field, ImmersionField):
        return field.values, (field.ambient_dim,)
    raise InputError(f"unsupported field type {type(field).__name__}")


def _derivative_sups(field, k: int) -> list[float]:
    """Nodewise-sup Frobenius norms of D^0 .. D^k.

    D^i is the full i-th derivative tensor (all d^i mixed partials); the
    Frobenius norm runs over every component and derivative slot. For an
    ImmersionField the first derivative includes the linear offsets.
    """
    if k < 0 or k > MAX_DERIVATIVE_ORDER:
        raise CapabilityError(f"derivative order {k} unsupported (max {MAX_DERIVATIVE_ORDER})")
    grid = field.grid
    flat, _ = _component_stack(field)

    def node_sup(arr):
        comp_axes = tuple(range(grid.dim, arr.ndim))
        return float(np.max(np.sqrt(np.sum(arr * arr, axis=comp_axes))))

    sups = [node_sup(flat)]
    current = flat
    for order in range(1, k + 1):
        stacked = np.stack(
            [spectral_derivative(current, grid, a) for a in range(grid.dim)], axis=-1)
        if order == 1 and isinstance(field, ImmersionField):
            # derivative of the linear part: constant slope per axis
            stacked = stacked + field.offsets.T
        current = stacked
        sups.append(node_sup(current))
    return sups


def sup_norm(field, k: int = 0) -> float:
    """C^k norm: sum over i <= k of the nodewise-sup Frobenius norm of D^i."""
    return float(sum(_derivative_sups(field, k)))


def derivative_sup(field, k: int) -> float:
    """Sup Frobenius norm of the k-th derivative tensor alone."""
    return _derivative_sups(field, k)[k]


def is_short(w: ImmersionField, g: MetricField, strict: bool = False) -> tuple[bool, float]:
    """Shortness test: min eigenvalue of g - w#e over nodes.

    Returns (flag, margin). Non-strict passes when margin >= -SHORT_TOL,
    strict demands margin > SHORT_TOL.
    """
    _require_same_grid(w, g)
    gap = g - pullback_metric(w)
    margin = float(np.min(gap.eigenvalues_min()))
    if strict:
        return margin > SHORT_TOL, margin
    return margin >= -SHORT_TOL, margin


def _resample_axis(values: np.ndarray, axis: int, old: int, new: int,
                   rel_tol: float = 1e-10) -> np.ndarray:
    """Exact spectral resampling along one axis (complex-safe, linear)."""
    spec = np.fft.fft(values, axis=axis) / old
    spec = np.moveaxis(spec, axis, 0)
    out = np.zeros((new,) + spec.shape[1:], dtype=complex)
    if new >= old:
        half = old // 2
        out[:half] = spec[:half]
        if half > 1:
            out[-(half - 1):] = spec[-(half - 1):]
        # split the old Nyquist mode between +/- new positions
        out[half] += spec[half] / 2.0
        out[-half] += spec[half] / 2.0
    else:
        half = new // 2
        scale = float(np.max(np.abs(spec))) + 1e-300
        discarded = spec[half + 1: old - half]
        if discarded.size and float(np.max(np.abs(discarded))) > rel_tol * scale:
            raise AliasingError(
                f"downsampling to {new} discards spectral content above mode {half}")
        out[:half] = spec[:half]
        if half > 1:
            out[-(half - 1):] = spec[-(half - 1):]
        out[half] = spec[half] + spec[old - half]
    out = np.moveaxis(out, 0, axis)
    return np.fft.ifft(out * new, axis=axis)


def _resample_values(values: np.ndarray, old_grid: PeriodicGrid,
                     new_grid: PeriodicGrid) -> np.ndarray:
    work = values.astype(complex)
    for a in range(old_grid.dim):
        work = _resample_axis(work, a, old_grid.shape[a], new_grid.shape[a])
    return np.real(work)


def resample(field, new_grid: PeriodicGrid):
    """Spectral interpolation onto ``new_grid`` (same type returned).

    Each axis resolution must be a power-of-two multiple (or divisor, when
    the field's bandwidth permits) of the old one; both are powers of two
    already, so this only rules out dimension changes.
    """
    old_grid = field.grid
    if new_grid.dim != old_grid.dim:
        raise InputError("resample cannot change chart dimension")
    if new_grid.shape == old_grid.shape:
        return field
    if isinstance(field, ScalarField):
        return ScalarField(new_grid, _resample_values(field.values, old_grid, new_grid))
    if isinstance(field, MetricField):
        return MetricField(new_grid, _resample_values(field.comps, old_grid, new_grid))
    if isinstance(field, ImmersionField):
        return ImmersionField.from_periodic(
            new_grid, _resample_values(field.periodic, old_grid, new_grid),
            field.offsets.copy())
    raise InputError(f"unsupported field type {type(field).__name__}")
