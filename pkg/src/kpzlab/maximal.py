"""Heat-maximal and ball-average maximal functions, and pointwise quasi-norms.

The continuous suprema over the smoothing time tau, the ball radius rho, the
sub-interval length and the shift are all replaced by documented geometric
grids (neighbor ratio <= 1.2) plus endpoints.  Grid suprema are lower bounds
of the true suprema, so every upper-bound invariant stated for the true
objects remains valid for the computed ones.

Exponentials are evaluated in shifted form around max|f|; the heat operator
is linear and positive, so the shift leaves log-of-smoothed-exponential
quantities exactly invariant while avoiding overflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .grid import _AXES, Field, GridSpec, SpaceTimeField, periodic_distance_sq, shift_field
from .heat import HeatParams, InsufficientHistoryError, heat_apply

GRID_RATIO = 1.2
_UNIT_HEAT = HeatParams(nu=1.0)


class OverflowInExponentialError(ValueError):
    pass


@dataclass
class MaximalProfile:
    """Pointwise supremum profile of a maximal function on its scale grid."""

    alpha: float
    variant: str  # "star" or "sharp"
    profile: Field
    scale_grid: np.ndarray
    diverges: bool = False  # alpha > 0 with nonzero mean: the tau -> inf sup is infinite


@dataclass
class QuasiNormField:
    space: str  # H_lambda | W1inf_lambda | W1inf_lambda_j | forcing_lambda_j
    lam: float
    profile: Field
    scale: Optional[tuple] = None  # (M, j) when scale-dependent


def geometric_grid(lo: float, hi: float, ratio: float = GRID_RATIO) -> np.ndarray:
    """Geometric grid from lo to hi with neighbor ratio at most `ratio`."""
    if not (0 < lo < hi):
        raise ValueError("need 0 < lo < hi")
    n = int(np.ceil(np.log(hi / lo) / np.log(ratio))) + 1
    return np.geomspace(lo, hi, max(n, 2))


def default_tau_grid(spec: GridSpec) -> np.ndarray:
    """Smoothing times from sub-cell scale to box scale (full-torus sup)."""
    return geometric_grid(0.25 * spec.dx**2, spec.L_box**2)


def default_rho_grid(spec: GridSpec) -> np.ndarray:
    return geometric_grid(spec.dx, spec.L_box / 2 * (1 - 1e-9))


def star_maximal(f: Field, alpha: float, tau_grid: np.ndarray = None) -> MaximalProfile:
    """sup over tau of (1 + tau)^alpha exp(tau Lap)|f|, with the tau -> 0 endpoint."""
    if tau_grid is None:
        tau_grid = default_tau_grid(f.spec)
    absf = f.abs()
    best = absf.values.copy()
    for tau in tau_grid:
        sm = heat_apply(absf, float(tau), _UNIT_HEAT)
        np.maximum(best, (1.0 + tau) ** alpha * sm.values, out=best)
    diverges = alpha > 0 and float(np.mean(np.abs(f.values))) > 0
    return MaximalProfile(
        alpha=alpha, variant="star", profile=Field(f.spec, best),
        scale_grid=np.asarray(tau_grid), diverges=diverges,
    )


@lru_cache(maxsize=16)
def _ball_kernels(spec: GridSpec, rho_key: tuple):
    """rfftn transforms of normalized periodic-ball indicators, one per rho."""
    rsq = periodic_distance_sq(spec)
    out = []
    for rho in rho_key:
        mask = (rsq <= rho * rho).astype(float)
        cnt = mask.sum()
        # roll so the ball is centered at the origin site; convolution then
        # averages over B(x, rho)
        mask = np.roll(mask, shift=[-(spec.N // 2)] * spec.d, axis=range(spec.d))
        out.append((np.fft.rfftn(mask / cnt), int(cnt)))
    return out


def sharp_maximal(f: Field, alpha: float, rho_grid: np.ndarray = None) -> MaximalProfile:
    """sup over rho of (1 + rho^2)^alpha times the periodic-ball average of |f|."""
    if rho_grid is None:
        rho_grid = default_rho_grid(f.spec)
    spec = f.spec
    absv = np.abs(f.values)
    best = absv.copy()  # rho -> 0 endpoint
    fhat = np.fft.rfftn(absv)
    for rho, (khat, _) in zip(rho_grid, _ball_kernels(spec, tuple(np.round(rho_grid, 14)))):
        avg = np.fft.irfftn(fhat * khat, s=spec.shape, axes=_AXES(spec.shape))
        np.maximum(best, (1.0 + rho * rho) ** alpha * np.maximum(avg, 0.0), out=best)
    diverges = alpha > 0 and float(np.mean(absv)) > 0
    return MaximalProfile(
        alpha=alpha, variant="sharp", profile=Field(spec, best),
        scale_grid=np.asarray(rho_grid), diverges=diverges,
    )


def equivalence_constants(
    f: Field, alpha: float, tau_grid=None, rho_grid=None, floor: float = 1e-12
):
    """Empirical (min, max) over sites of sharp/star where both exceed the floor."""
    st = star_maximal(f, alpha, tau_grid).profile.values
    sh = sharp_maximal(f, alpha, rho_grid).profile.values
    sel = (st > floor) & (sh > floor)
    if not sel.any():
        raise ValueError("no sites above the floor; field is numerically zero")
    ratio = sh[sel] / st[sel]
    return float(ratio.min()), float(ratio.max())


def log_star_exp(g: Field, tau_grid: np.ndarray = None) -> Field:
    """log of (e^{g})^*, computed stably as a shifted star maximal.

    Exact identity: exp(tau Lap) e^{g} = e^{m} exp(tau Lap) e^{g - m}, so the
    log of the supremum shifts by m = max g.
    """
    if not np.isfinite(g.values).all():
        site = np.unravel_index(int(np.argmax(~np.isfinite(g.values))), g.spec.shape)
        raise OverflowInExponentialError(f"non-finite exponent at site {site}")
    if tau_grid is None:
        tau_grid = default_tau_grid(g.spec)
    m = float(np.max(g.values))
    w = Field(g.spec, np.exp(g.values - m))
    best = w.values.copy()
    for tau in tau_grid:
        sm = heat_apply(w, float(tau), _UNIT_HEAT)
        np.maximum(best, sm.values, out=best)
    # smoothing a positive field keeps it positive; guard anyway before log
    best = np.maximum(best, 1e-300)
    return Field(g.spec, np.log(best) + m)


def h_lambda_norm(f: Field, lam: float, tau_grid: np.ndarray = None) -> QuasiNormField:
    """Pointwise quasi-norm (1/lam) log (e^{lam |f|})^*."""
    if not (lam > 0):
        raise ValueError("lam must be positive")
    ls = log_star_exp(Field(f.spec, lam * np.abs(f.values)), tau_grid)
    return QuasiNormField(space="H_lambda", lam=lam, profile=Field(f.spec, ls.values / lam))


def default_shift_set(spec: GridSpec, max_len: float = 1.0) -> tuple:
    """Axis-aligned lattice shifts of 1, 2, 4, ... cells with length <= max_len."""
    shifts = []
    for ax in range(spec.d):
        n = 1
        while n * spec.dx <= max_len and n < spec.N // 2:
            cells = [0] * spec.d
            cells[ax] = n
            shifts.append(tuple(cells))
            n *= 2
    if not shifts:
        raise ValueError("grid spacing exceeds the unit shift window")
    return tuple(shifts)


def _difference_quotient(f: Field, cells: tuple) -> tuple:
    eps = float(np.sqrt(sum(c * c for c in cells))) * f.spec.dx
    dq = (shift_field(f, cells).values - f.values) / eps
    return Field(f.spec, dq), eps


def w1inf_lambda_norm(
    f: Field,
    lam: float,
    shift_set: tuple = None,
    scale: Optional[tuple] = None,
    tau_grid: np.ndarray = None,
) -> QuasiNormField:
    """h_lambda_norm(f) plus the sup over shifts of the quasi-norm of the
    (optionally M^{j/2}-weighted) difference quotients."""
    if shift_set is None:
        shift_set = default_shift_set(f.spec)
    base = h_lambda_norm(f, lam, tau_grid).profile.values
    factor = 1.0
    space = "W1inf_lambda"
    if scale is not None:
        M, j = scale
        factor = float(M) ** (j / 2)
        space = "W1inf_lambda_j"
    shift_part = np.zeros(f.spec.shape)
    for cells in shift_set:
        dq, _ = _difference_quotient(f, cells)
        q = h_lambda_norm(Field(f.spec, factor * np.abs(dq.values)), lam, tau_grid)
        np.maximum(shift_part, q.profile.values, out=shift_part)
    return QuasiNormField(
        space=space, lam=lam, profile=Field(f.spec, base + shift_part), scale=scale
    )


def _interval_average(g: SpaceTimeField, a: float, b: float) -> np.ndarray:
    """Mean of the frames with time in (a, b]; needs the frame step <= b - a."""
    times = g.times()
    sel = (times > a + 1e-9 * g.dt) & (times <= b + 1e-9 * g.dt)
    if not sel.any():
        raise InsufficientHistoryError(
            f"no frames in ({a}, {b}]; frame step {g.dt} too coarse"
        )
    vals = np.zeros(g.spec.shape)
    for k in np.nonzero(sel)[0]:
        vals += g.frames[k].values
    return vals / sel.sum()


def forcing_quasinorm(
    g: SpaceTimeField,
    lam: float,
    M: float,
    j: int,
    t: float,
    probes: list,
    dt_grid: np.ndarray = None,
    with_gradient: bool = False,
    shift_set: tuple = None,
    tau_grid: np.ndarray = None,
) -> np.ndarray:
    """Scale-j forcing quasi-norm at the probe sites.

    (1/lam) sup over dt in the grid of
        M^{-j} dt sum_p (e^{-M^{-j} dt})^p log[(e^{lam M^j |avg_p|})^*(x)]
    where avg_p averages g over the p-th trailing sub-interval of length dt.
    The gradient variant applies the same sum to shift difference quotients
    with weight M^{3j/2}, and takes the sup over the shift set.
    """
    Mj = float(M) ** j
    eps_ir = 1.0 / Mj
    if dt_grid is None:
        dt_grid = geometric_grid(max(g.dt, Mj / 16), Mj)
    elapsed = t - g.t0
    if elapsed < float(np.min(dt_grid)):
        raise InsufficientHistoryError("history shorter than the smallest sub-interval")
    weight = M ** (1.5 * j) if with_gradient else Mj
    if with_gradient and shift_set is None:
        shift_set = default_shift_set(g.spec)

    def statistic_fields(base_frames):
        out = np.full(len(probes), -np.inf)
        for dt in np.asarray(dt_grid, dtype=float):
            p_max = int(np.floor(elapsed / dt + 1e-9)) - 1
            if p_max < 0:
                continue
            total = np.zeros(len(probes))
            damp = np.exp(-eps_ir * dt)
            for p in range(p_max + 1):
                avg = _interval_average(g, t - (p + 1) * dt, t - p * dt)
                avg = np.asarray(base_frames(avg))
                ls = log_star_exp(Field(g.spec, lam * weight * np.abs(avg)), tau_grid)
                vals = np.array([ls.values[tuple(q)] for q in probes])
                total += damp**p * vals
            np.maximum(out, eps_ir * dt * total, out=out)
        return out / lam

    if not with_gradient:
        return statistic_fields(lambda avg: avg)

    best = np.full(len(probes), -np.inf)
    for cells in shift_set:
        eps_len = float(np.sqrt(sum(c * c for c in cells))) * g.spec.dx

        def dq(avg, cells=cells, eps_len=eps_len):
            rolled = np.roll(avg, shift=[-c for c in cells], axis=range(g.spec.d))
            return (rolled - avg) / eps_len

        np.maximum(best, statistic_fields(dq), out=best)
    return best
