"""Exact heat semigroups and Green kernels on the periodic grid.

The generator is nu * Laplacian, realized as the Fourier multiplier
exp(-nu |k|^2 t).  Green kernels integrate the semigroup against a time
history, with an optional infra-red damping exp(-M^{-j} lag) per lag.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import (  # noqa: F401
    _AXES,
    Field,
    GridSpec,
    SpaceTimeField,
    ksq_array,
    lp_norm,
    periodic_distance_sq,
)


class NegativeTimeError(ValueError):
    pass


class InsufficientHistoryError(ValueError):
    pass


@dataclass(frozen=True)
class HeatParams:
    """Diffusion constant of the semigroup exp(t nu Laplacian)."""

    nu: float = 1.0

    def __post_init__(self):
        if not (self.nu > 0):
            raise ValueError("nu must be positive")


@dataclass(frozen=True)
class CutoffGreen:
    """Scale-j infra-red cutoff: damping rate epsilon = M^{-j} on the Green kernel."""

    nu: float
    M: float
    j: int

    def __post_init__(self):
        if not (self.M > 1):
            raise ValueError("scale parameter M must exceed 1")
        if self.j < 0:
            raise ValueError("scale index j must be >= 0")
        if not (self.nu > 0):
            raise ValueError("nu must be positive")

    @property
    def epsilon(self) -> float:
        return float(self.M) ** (-self.j)


@lru_cache(maxsize=128)
def _heat_multiplier(spec: GridSpec, nu_t: float) -> np.ndarray:
    m = np.exp(-nu_t * ksq_array(spec))
    m.setflags(write=False)
    return m


def heat_apply(f: Field, t: float, p: HeatParams) -> Field:
    """exp(t nu Laplacian) f via the spectral multiplier; t = 0 is the identity."""
    if t < 0:
        raise NegativeTimeError(f"negative evolution time {t}")
    if t == 0:
        return f
    fhat = np.fft.rfftn(f.values)
    out = np.fft.irfftn(fhat * _heat_multiplier(f.spec, p.nu * t), s=f.spec.shape, axes=_AXES(f.spec.shape))
    return Field(f.spec, out)


@lru_cache(maxsize=128)
def _psi_multiplier(spec: GridSpec, nu: float, dt: float, eps: float) -> np.ndarray:
    """Exact integral of exp(-(nu|k|^2 + eps)s) over s in [0, dt], per mode."""
    rate = nu * ksq_array(spec) + eps
    m = np.where(rate > 0, -np.expm1(-rate * dt) / np.where(rate > 0, rate, 1.0), dt)
    m.setflags(write=False)
    return m


def _green_quadrature(g: SpaceTimeField, t: float, nu: float, eps: float) -> Field:
    """Trapezoid over the frame grid of exp(-eps s) exp(nu s Lap) g(t-s).

    The first interval [0, dt] is integrated exactly against the frozen
    newest frame, matching the Trotter-order time accuracy.  Truncated at
    the available history.
    """
    k_t = g.frame_index(t)
    if k_t < 1:
        raise InsufficientHistoryError("need at least one full frame interval before t")
    spec, dt = g.spec, g.dt
    ksq = ksq_array(spec)
    acc = _psi_multiplier(spec, nu, dt, eps) * np.fft.rfftn(g.frames[k_t].values)
    if k_t >= 2:
        # trapezoid over s = dt .. k_t*dt with weight exp(-eps s) at each node
        for p in range(1, k_t + 1):
            s = p * dt
            w = dt if 1 < p < k_t else dt / 2
            acc = acc + (w * np.exp(-eps * s)) * np.exp(-nu * s * ksq) * np.fft.rfftn(
                g.frames[k_t - p].values
            )
    return Field(spec, np.fft.irfftn(acc, s=spec.shape, axes=_AXES(spec.shape)))


def green_apply(g: SpaceTimeField, t: float, p: HeatParams) -> Field:
    """Time-integrated heat response: integral of exp(nu s Lap) g(t-s) ds.

    The horizon is whatever history g carries before t.
    """
    return _green_quadrature(g, t, p.nu, 0.0)


def green_cutoff_apply(g: SpaceTimeField, t: float, cg: CutoffGreen) -> Field:
    """Same quadrature with extra damping exp(-M^{-j} s) per lag."""
    return _green_quadrature(g, t, cg.nu, cg.epsilon)


# --- verification helpers ---------------------------------------------------


def random_smooth_field(spec: GridSpec, rng, corr_len: float = None, amp: float = 1.0) -> Field:
    """Band-limited Gaussian random field with spectral decay exp(-|k|^2 l^2 / 2)."""
    if corr_len is None:
        corr_len = 4 * spec.dx
    ksq = ksq_array(spec)
    shape = ksq.shape
    coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    coef *= np.exp(-0.5 * ksq * corr_len**2)
    v = np.fft.irfftn(coef, s=spec.shape, axes=_AXES(spec.shape))
    v *= amp / max(np.std(v), 1e-300)
    return Field(spec, v)


@dataclass
class ParabolicEstimateReport:
    k: int
    p: float
    q: float
    trials: int
    t_grid: np.ndarray
    c_hat: float
    per_t_sup: np.ndarray


def verify_parabolic_estimates(
    spec: GridSpec,
    k: int,
    p: float,
    q: float,
    trials: int,
    heat_params: HeatParams = HeatParams(),
    t_grid: np.ndarray = None,
    seed: int = 0,
    corr_len: float = None,
) -> ParabolicEstimateReport:
    """Empirical constant in the smoothing estimate for derivative order k.

    Records sup over seeded random smooth fields and a time grid of

        ||grad^k exp(t nu Lap) f||_p * (nu t)^{(d/2)(1/q - 1/p) + k/2} / ||f||_q.
    """
    if not (p >= q >= 1):
        raise ValueError("need p >= q >= 1")
    if t_grid is None:
        t_lo = (4 * spec.dx) ** 2
        t_hi = (spec.L_box / 8) ** 2
        t_grid = np.geomspace(t_lo, t_hi, 12)
    from .grid import derivative_sup

    d = spec.d
    expo = 0.5 * d * (1.0 / q - 1.0 / p) + 0.5 * k
    rng = np.random.default_rng(seed)
    per_t = np.zeros(len(t_grid))
    for _ in range(trials):
        f = random_smooth_field(spec, rng, corr_len=corr_len)
        fq = lp_norm(f, q)
        if fq < 1e-300:
            continue
        for i, t in enumerate(t_grid):
            ht = heat_apply(f, float(t), heat_params)
            if k == 0:
                nrm = lp_norm(ht, p)
            elif p == np.inf:
                nrm = derivative_sup(ht, k)
            else:
                from .grid import gradient_magnitude

                if k != 1:
                    raise NotImplementedError("k > 1 supported only for p = inf")
                nrm = lp_norm(gradient_magnitude(ht), p)
            val = nrm * (heat_params.nu * t) ** expo / fq
            per_t[i] = max(per_t[i], val)
    return ParabolicEstimateReport(
        k=k, p=p, q=q, trials=trials, t_grid=np.asarray(t_grid), c_hat=float(per_t.max()), per_t_sup=per_t
    )


def cutoff_kernel_decay(spec: GridSpec, cg: CutoffGreen, dt: float = None, r_window=(1.0, 4.0)):
    """Fitted spatial decay rate of the damped Green kernel.

    Drives the cutoff kernel with a time-sustained spatial impulse, then fits
    log response against the scaled distance r = M^{-j/2} |x - x0| over the
    window.  Returns (c_fit, r, log_response).
    """
    Mj = float(cg.M) ** cg.j
    if dt is None:
        dt = Mj / 16
    horizon = 8 * Mj
    n = int(round(horizon / dt)) + 1
    imp = np.zeros(spec.shape)
    imp[(spec.N // 2,) * spec.d] = 1.0 / spec.dx**spec.d
    frame = Field(spec, imp)
    g = SpaceTimeField(spec=spec, dt=dt, frames=(frame,) * n, t0=0.0)
    resp = green_cutoff_apply(g, horizon, cg)
    rsq = periodic_distance_sq(spec)
    r = np.sqrt(rsq).ravel() * Mj**-0.5
    v = np.abs(resp.values).ravel()
    sel = (r >= r_window[0]) & (r <= r_window[1]) & (v > 0)
    logs = np.log(v[sel])
    slope, _ = np.polyfit(r[sel], logs, 1)
    return float(-slope), r[sel], logs
