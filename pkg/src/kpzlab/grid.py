"""Periodic d-dimensional grids, scalar fields, spectral calculus and binary I/O.

The box [0, L_box)^d is sampled with N points per axis (N a power of two).
All derivatives are spectral: exact for band-limited fields, which keeps
them consistent with the exact heat semigroup used everywhere else.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

def _AXES(shape):
    """Explicit transform axes for irfftn (numpy >= 2.0 deprecation)."""
    return tuple(range(len(shape)))


FIELD_MAGIC = b"KPZF"
TRAJ_MAGIC = b"KPZT"
FORMAT_VERSION = 1


class FieldFormatError(ValueError):
    """Malformed header or truncated payload in a binary field file."""


class DimensionMismatchError(ValueError):
    """Grid metadata in a file is inconsistent or unsupported."""


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a periodic grid: dimension, points per axis, box length."""

    d: int
    N: int
    L_box: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {self.d}")
        if self.N < 4 or (self.N & (self.N - 1)) != 0:
            raise ValueError(f"N must be a power of two >= 4, got {self.N}")
        if not (self.L_box > 0):
            raise ValueError(f"L_box must be positive, got {self.L_box}")
        if self.N ** self.d > 2**31:
            raise ValueError("total site count exceeds addressable size")

    @property
    def dx(self) -> float:
        return self.L_box / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def n_sites(self) -> int:
        return self.N**self.d

    def axis_coords(self) -> np.ndarray:
        """Coordinates of the sites along one axis, in [0, L_box)."""
        return np.arange(self.N) * self.dx


@dataclass(frozen=True)
class Field:
    """Immutable real scalar field sampled on a periodic grid (row-major)."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.spec.shape:
            v = v.reshape(self.spec.shape)
        if not np.isfinite(v).all():
            raise ValueError("field contains non-finite values")
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __add__(self, other):
        if isinstance(other, Field):
            _check_same_spec(self, other)
            return Field(self.spec, self.values + other.values)
        return Field(self.spec, self.values + other)

    def __sub__(self, other):
        if isinstance(other, Field):
            _check_same_spec(self, other)
            return Field(self.spec, self.values - other.values)
        return Field(self.spec, self.values - other)

    def __mul__(self, c):
        return Field(self.spec, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.spec, -self.values)

    def abs(self) -> "Field":
        return Field(self.spec, np.abs(self.values))


@dataclass(frozen=True)
class SpaceTimeField:
    """Uniformly time-sampled sequence of fields on a shared grid."""

    spec: GridSpec
    dt: float
    frames: tuple
    t0: float = 0.0

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError("dt must be positive")
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("frames must be nonempty")
        for f in frames:
            if f.spec != self.spec:
                raise DimensionMismatchError("all frames must share the grid spec")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_frames)

    def t_end(self) -> float:
        return self.t0 + self.dt * (self.n_frames - 1)

    def frame_index(self, t: float, tol: float = 1e-9) -> int:
        """Index of the frame at time t; t must sit on the frame grid."""
        k = int(round((t - self.t0) / self.dt))
        if k < 0 or k >= self.n_frames or abs(self.t0 + k * self.dt - t) > tol * max(1.0, self.dt):
            raise ValueError(f"time {t} is not on the frame grid")
        return k

    def values_array(self) -> np.ndarray:
        """Stacked (n_frames, N, ..., N) array view of the frames."""
        return np.stack([f.values for f in self.frames])


def _check_same_spec(a: Field, b: Field):
    if a.spec != b.spec:
        raise DimensionMismatchError("fields live on different grids")


def zero_field(spec: GridSpec) -> Field:
    return Field(spec, np.zeros(spec.shape))


def constant_field(spec: GridSpec, c: float) -> Field:
    return Field(spec, np.full(spec.shape, float(c)))


@lru_cache(maxsize=64)
def periodic_distance_sq(spec: GridSpec, center_index: tuple = None) -> np.ndarray:
    """Squared periodic distance from each site to a center site.

    Default center is the box center (index N//2 on each axis, an exact
    grid point).
    """
    if center_index is None:
        center_index = (spec.N // 2,) * spec.d
    x = spec.axis_coords()
    total = np.zeros(spec.shape)
    for ax, ci in enumerate(center_index):
        dist = np.abs(x - x[ci])
        dist = np.minimum(dist, spec.L_box - dist)
        shape = [1] * spec.d
        shape[ax] = spec.N
        total = total + (dist.reshape(shape)) ** 2
    total.setflags(write=False)
    return total


def make_bump(spec: GridSpec, A: float, L: float) -> Field:
    """Height-A indicator of the periodic ball of radius L at the box center."""
    if not (0 < L < spec.L_box / 2):
        raise ValueError(f"bump radius out of range: need 0 < L < L_box/2, got L={L}")
    rsq = periodic_distance_sq(spec)
    return Field(spec, np.where(rsq <= L * L + 1e-12 * L * L, float(A), 0.0))


def lp_norm(f: Field, p) -> float:
    """Discrete L^p norm with cell measure dx^d; p = inf gives the sup norm."""
    if p == np.inf or p == "inf":
        return float(np.max(np.abs(f.values)))
    p = float(p)
    if p < 1:
        raise ValueError("p must be >= 1")
    meas = f.spec.dx**f.spec.d
    return float((np.sum(np.abs(f.values) ** p) * meas) ** (1.0 / p))


# --- spectral calculus ------------------------------------------------------


@lru_cache(maxsize=64)
def _rfft_wavenumbers(spec: GridSpec):
    """Per-axis angular wavenumbers on the rfftn layout, broadcast-ready.

    Returns (k_list, ksq, kderiv_list): ksq keeps the Nyquist mode (true
    spectral Laplacian); kderiv zeroes it so odd-order derivatives of real
    fields stay real.
    """
    N, d, L = spec.N, spec.d, spec.L_box
    ks = []
    kds = []
    for ax in range(d):
        if ax == d - 1:
            k = 2 * np.pi * np.fft.rfftfreq(N, d=spec.dx)
            nyq = len(k) - 1
        else:
            k = 2 * np.pi * np.fft.fftfreq(N, d=spec.dx)
            nyq = N // 2
        kd = k.copy()
        kd[nyq] = 0.0
        shape = [1] * d
        shape[ax] = len(k)
        ks.append(k.reshape(shape))
        kds.append(kd.reshape(shape))
    ksq = sum(k**2 for k in ks)
    ksq.setflags(write=False)
    return tuple(ks), ksq, tuple(kds)


def ksq_array(spec: GridSpec) -> np.ndarray:
    return _rfft_wavenumbers(spec)[1]


def fft(f: Field) -> np.ndarray:
    return np.fft.rfftn(f.values)


def ifft(spec: GridSpec, fhat: np.ndarray) -> Field:
    return Field(spec, np.fft.irfftn(fhat, s=spec.shape, axes=_AXES(spec.shape)))


def gradient(f: Field) -> tuple:
    """Spectral gradient; returns one Field per axis."""
    _, _, kds = _rfft_wavenumbers(f.spec)
    fhat = np.fft.rfftn(f.values)
    return tuple(
        Field(f.spec, np.fft.irfftn(1j * kd * fhat, s=f.spec.shape, axes=_AXES(f.spec.shape))) for kd in kds
    )


def laplacian(f: Field) -> Field:
    """Spectral Laplacian (full multiplier -|k|^2, Nyquist included)."""
    ksq = ksq_array(f.spec)
    fhat = np.fft.rfftn(f.values)
    return Field(f.spec, np.fft.irfftn(-ksq * fhat, s=f.spec.shape, axes=_AXES(f.spec.shape)))


def gradient_magnitude(f: Field) -> Field:
    comps = gradient(f)
    mag = np.sqrt(sum(g.values**2 for g in comps))
    return Field(f.spec, mag)


def derivative_sup(f: Field, order: int) -> float:
    """Sup over sites of the pointwise Frobenius norm of the order-k derivative tensor."""
    if order == 0:
        return lp_norm(f, np.inf)
    _, _, kds = _rfft_wavenumbers(f.spec)
    fhat = np.fft.rfftn(f.values)
    total = np.zeros(f.spec.shape)
    # all multi-indices (i1 <= ... <= ik) with multinomial multiplicity
    from itertools import combinations_with_replacement
    from math import factorial

    for idx in combinations_with_replacement(range(f.spec.d), order):
        mult = factorial(order)
        for ax in range(f.spec.d):
            mult //= factorial(idx.count(ax))
        m = np.ones((), dtype=complex)
        for ax in idx:
            m = m * (1j * kds[ax])
        comp = np.fft.irfftn(m * fhat, s=f.spec.shape, axes=_AXES(f.spec.shape))
        total += mult * comp**2
    return float(np.max(np.sqrt(total)))


def dealias_two_thirds(f: Field) -> Field:
    """Zero the top third of the spectrum (pseudo-spectral 2/3 rule)."""
    mask = _dealias_mask(f.spec)
    fhat = np.fft.rfftn(f.values)
    return Field(f.spec, np.fft.irfftn(fhat * mask, s=f.spec.shape, axes=_AXES(f.spec.shape)))


@lru_cache(maxsize=64)
def _dealias_mask(spec: GridSpec) -> np.ndarray:
    N, d = spec.N, spec.d
    cut = N // 3
    mask = np.ones((), dtype=float)
    for ax in range(d):
        if ax == d - 1:
            m = np.arange(N // 2 + 1)
        else:
            m = np.abs(np.fft.fftfreq(N) * N)
        keep = (m <= cut).astype(float)
        shape = [1] * d
        shape[ax] = len(keep)
        mask = mask * keep.reshape(shape)
    mask.setflags(write=False)
    return mask


def shift_field(f: Field, cells: tuple) -> Field:
    """f(. + eps) for a lattice shift eps = cells * dx (periodic roll)."""
    return Field(f.spec, np.roll(f.values, shift=[-c for c in cells], axis=range(f.spec.d)))


# --- binary I/O -------------------------------------------------------------

_FIELD_HEADER = struct.Struct("<4sIIQd")
_TRAJ_EXTRA = struct.Struct("<Qdd")


def write_field(f: Field, path) -> None:
    """Row-major little-endian float64 field file (bit-exact round trip)."""
    with open(path, "wb") as fh:
        fh.write(_FIELD_HEADER.pack(FIELD_MAGIC, FORMAT_VERSION, f.spec.d, f.spec.N, f.spec.L_box))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def _read_header(fh, magic):
    raw = fh.read(_FIELD_HEADER.size)
    if len(raw) != _FIELD_HEADER.size:
        raise FieldFormatError("truncated header")
    mg, ver, d, N, L_box = _FIELD_HEADER.unpack(raw)
    if mg != magic:
        raise FieldFormatError(f"bad magic {mg!r}, expected {magic!r}")
    if ver != FORMAT_VERSION:
        raise FieldFormatError(f"unsupported version {ver}")
    try:
        spec = GridSpec(d=d, N=N, L_box=L_box)
    except ValueError as e:
        raise DimensionMismatchError(str(e)) from e
    return spec


def _read_values(fh, spec):
    n = spec.n_sites
    raw = fh.read(8 * n)
    if len(raw) != 8 * n:
        raise FieldFormatError("truncated payload")
    return np.frombuffer(raw, dtype="<f8").reshape(spec.shape)


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        spec = _read_header(fh, FIELD_MAGIC)
        values = _read_values(fh, spec)
        if fh.read(1):
            raise FieldFormatError("trailing bytes after payload")
    return Field(spec, values)


def write_spacetime(stf: SpaceTimeField, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_FIELD_HEADER.pack(TRAJ_MAGIC, FORMAT_VERSION, stf.spec.d, stf.spec.N, stf.spec.L_box))
        fh.write(_TRAJ_EXTRA.pack(stf.n_frames, stf.dt, stf.t0))
        for f in stf.frames:
            fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_spacetime(path) -> SpaceTimeField:
    with open(path, "rb") as fh:
        spec = _read_header(fh, TRAJ_MAGIC)
        raw = fh.read(_TRAJ_EXTRA.size)
        if len(raw) != _TRAJ_EXTRA.size:
            raise FieldFormatError("truncated trajectory header")
        n_frames, dt, t0 = _TRAJ_EXTRA.unpack(raw)
        frames = [Field(spec, _read_values(fh, spec)) for _ in range(n_frames)]
        if fh.read(1):
            raise FieldFormatError("trailing bytes after payload")
    return SpaceTimeField(spec=spec, dt=dt, frames=tuple(frames), t0=t0)
