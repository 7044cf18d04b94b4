"""Closed-form heat and Laplace kernels plus whole-space heat potentials.

The quadrature for all potentials works in the scaled variable
y = x + sqrt(4*tau)*z, under which the heat kernel becomes the fixed weight
exp(-|z|^2)/pi on a truncated window.  A uniform trapezoid rule on that
window is effectively exact for the Gaussian factor (Euler-Maclaurin: all
derivatives of the windowed integrand vanish at the cutoff), so the overall
accuracy is set by how well the grid resolves the field, controlled through
QuadratureConfig.space_resolution, and by the field's own interpolation
order when it is given as samples.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import AccuracyWarning, InvalidInputError
from .fields import SampledField

__all__ = [
    "QuadratureConfig", "heat_kernel", "heat_kernel_grad", "heat_kernel_dt",
    "newtonian", "newtonian_grad", "initial_potential",
    "volume_heat_potential", "volume_heat_potential_grad",
    "divergence_form_potential", "grid_points",
]


# ---------------------------------------------------------------------------
# closed-form kernels

def heat_kernel(x, t):
    """Fundamental solution of the 2d heat equation, (4 pi t)^-1 e^{-|x|^2/4t}.

    x: (..., 2) array of positions; t: positive scalar or broadcastable array.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise InvalidInputError("heat kernel requires t > 0")
    r2 = np.sum(x * x, axis=-1)
    return np.exp(-r2 / (4.0 * t)) / (4.0 * np.pi * t)


def heat_kernel_grad(x, t):
    """Spatial gradient of the heat kernel, shape (..., 2)."""
    x = np.asarray(x, dtype=float)
    g = heat_kernel(x, t)
    t = np.asarray(t, dtype=float)
    return -x * (g / (2.0 * t))[..., None]


def heat_kernel_dt(x, t):
    """Time derivative of the heat kernel (equals its Laplacian)."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    return heat_kernel(x, t) * (r2 / (4.0 * t * t) - 1.0 / t)


def newtonian(x):
    """Fundamental solution of the 2d Laplacian, ln|x| / (2 pi)."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    if np.any(r2 == 0.0):
        raise InvalidInputError("newtonian potential undefined at the origin")
    return 0.5 * np.log(r2) / (2.0 * np.pi)


def newtonian_grad(x):
    """Gradient x / (2 pi |x|^2) of the Newtonian potential, shape (..., 2)."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    if np.any(r2 == 0.0):
        raise InvalidInputError("newtonian potential undefined at the origin")
    return x / (2.0 * np.pi * r2[..., None])


# ---------------------------------------------------------------------------
# quadrature configuration

@dataclass(frozen=True)
class QuadratureConfig:
    """Controls for the potential quadratures.

    gaussian_cutoff_sigmas : window half-width, in standard deviations of the
        heat kernel at the current time scale; 8 gives truncation below 1e-14.
    space_resolution : quadrature points per unit physical length (the window
        grid never drops below a floor that keeps the Gaussian weight exact).
    time_rule : Gauss-Legendre nodes per time panel.
    tolerance : relative accuracy target used for coverage warnings.
    """

    gaussian_cutoff_sigmas: float = 8.0
    space_resolution: float = 12.0
    time_rule: int = 10
    tolerance: float = 1e-8

    def __post_init__(self):
        if self.gaussian_cutoff_sigmas < 6.0:
            raise InvalidInputError("gaussian_cutoff_sigmas must be >= 6")
        if self.space_resolution <= 0:
            raise InvalidInputError("space_resolution must be positive")
        if self.time_rule < 2:
            raise InvalidInputError("time_rule must be at least 2")
        if self.tolerance <= 0:
            raise InvalidInputError("tolerance must be positive")


def grid_points(xs, ys):
    """Tensor-grid points in the lexicographic order SampledField expects."""
    X, Y = np.meshgrid(np.asarray(xs, float), np.asarray(ys, float),
                       indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


# ---------------------------------------------------------------------------
# field access: callables and gridded samples behave the same way

class _FieldEval:
    """Evaluate a source field at arbitrary points and times.

    Callable fields are evaluated directly: fn(P, t) with P of shape (M, 2)
    must return (M,) or (M, C).  SampledField instances must live on a full
    tensor grid; they are interpolated bilinearly in space, linearly in time,
    and extended by zero outside their grid box.
    """

    def __init__(self, f, n_times_expected=None):
        if callable(f):
            self.fn = f
            self.grid = None
            self.times = None
            return
        if not isinstance(f, SampledField):
            raise InvalidInputError("field must be callable or a SampledField")
        if f.points.shape[1] != 2:
            raise InvalidInputError("potential sources must be 2d fields")
        if n_times_expected is not None and f.n_times != n_times_expected:
            raise InvalidInputError(
                "expected a field with %d time slice(s), got %d"
                % (n_times_expected, f.n_times))
        self.fn = None
        xs = np.unique(f.points[:, 0])
        ys = np.unique(f.points[:, 1])
        if xs.size * ys.size != f.n_points:
            raise InvalidInputError("field points must form a tensor grid")
        ix = np.searchsorted(xs, f.points[:, 0])
        iy = np.searchsorted(ys, f.points[:, 1])
        vals = np.full((xs.size, ys.size, f.n_times, f.n_components), np.nan)
        vals[ix, iy] = f.values
        if np.any(np.isnan(vals)):
            raise InvalidInputError("field points must form a tensor grid")
        self.grid = (xs, ys, vals)
        self.times = f.times
        edge = np.concatenate([
            np.abs(vals[0]).ravel(), np.abs(vals[-1]).ravel(),
            np.abs(vals[:, 0]).ravel(), np.abs(vals[:, -1]).ravel()])
        self.edge_magnitude = float(edge.max()) if edge.size else 0.0
        self.peak_magnitude = float(np.abs(vals).max()) if vals.size else 0.0

    def time_nodes(self):
        return self.times

    def __call__(self, P, t):
        if self.fn is not None:
            v = np.asarray(self.fn(P, t), dtype=float)
            return v[:, None] if v.ndim == 1 else v
        xs, ys, vals = self.grid
        n_t = self.times.size
        if n_t == 1:
            slab = vals[:, :, 0]
        else:
            k = int(np.clip(np.searchsorted(self.times, t) - 1, 0, n_t - 2))
            w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
            w = float(np.clip(w, 0.0, 1.0))
            slab = (1.0 - w) * vals[:, :, k] + w * vals[:, :, k + 1]
        return _bilinear(xs, ys, slab, P)

    def check_coverage(self, x, reach, tol):
        """Warn when the quadrature window leaves the grid box of a field
        that is visibly nonzero at its edge (zero extension then inexact)."""
        if self.grid is None:
            return
        if self.edge_magnitude <= tol * max(self.peak_magnitude, 1.0):
            return
        xs, ys, _ = self.grid
        x = np.atleast_2d(x)
        if (np.any(x[:, 0] - reach < xs[0]) or np.any(x[:, 0] + reach > xs[-1])
                or np.any(x[:, 1] - reach < ys[0])
                or np.any(x[:, 1] + reach > ys[-1])):
            warnings.warn(
                "quadrature window extends past the sampled field box; "
                "zero extension may miss the accuracy target",
                AccuracyWarning, stacklevel=3)


def _bilinear(xs, ys, slab, P):
    """Bilinear interpolation of slab[(nx, ny, C)] at P (M, 2), zero outside."""
    px, py = P[:, 0], P[:, 1]
    inside = ((px >= xs[0]) & (px <= xs[-1]) &
              (py >= ys[0]) & (py <= ys[-1]))
    ix = np.clip(np.searchsorted(xs, px, side="right") - 1, 0, xs.size - 2)
    iy = np.clip(np.searchsorted(ys, py, side="right") - 1, 0, ys.size - 2)
    wx = np.clip((px - xs[ix]) / (xs[ix + 1] - xs[ix]), 0.0, 1.0)[:, None]
    wy = np.clip((py - ys[iy]) / (ys[iy + 1] - ys[iy]), 0.0, 1.0)[:, None]
    out = ((1 - wx) * (1 - wy) * slab[ix, iy]
           + wx * (1 - wy) * slab[ix + 1, iy]
           + (1 - wx) * wy * slab[ix, iy + 1]
           + wx * wy * slab[ix + 1, iy + 1])
    out[~inside] = 0.0
    return out


# ---------------------------------------------------------------------------
# exact heat smoothing of gridded (bilinear) data

def _hat_smooth_1d(knots, u, t):
    """Heat smoothing of the 1d hat basis on `knots`, evaluated at `u`.

    Returns (W0, W1) of shape (len(u), len(knots)): W0[e, i] is the 1d heat
    kernel at time t convolved with the hat centered on knot i (half hats at
    the ends, matching zero extension), W1 its x-derivative.  Everything is
    closed-form in erf and Gaussians, so smoothing a piecewise-linear field
    this way is exact -- no quadrature noise from sampling interpolation
    kinks, which matters for derivative evaluations.
    """
    knots = np.asarray(knots, dtype=float)
    u = np.asarray(u, dtype=float)
    root = np.sqrt(4.0 * t)
    diff = u[:, None] - knots[None, :]
    E = 0.5 * erf(diff / root)
    G = np.exp(-((diff / root) ** 2)) / (root * np.sqrt(np.pi))
    d = np.diff(knots)
    I0 = E[:, :-1] - E[:, 1:]
    dG = 2.0 * t * (G[:, :-1] - G[:, 1:])
    # segment moments with the linear weight anchored at the left/right knot
    I1_left = (u[:, None] - knots[None, :-1]) * I0 + dG
    I1_right = (u[:, None] - knots[None, 1:]) * I0 + dG
    W0 = np.zeros((u.size, knots.size))
    W0[:, 1:] += I1_left / d[None, :]
    W0[:, :-1] -= I1_right / d[None, :]
    W1 = np.zeros_like(W0)
    W1[:, 1:] += I0 / d[None, :]
    W1[:, :-1] -= I0 / d[None, :]
    W1[:, 0] += G[:, 0]
    W1[:, -1] -= G[:, -1]
    return W0, W1


def _smooth_gridded(feval, X, t, moment):
    """Exact heat smoothing of a single-time gridded field at points X."""
    xs, ys, vals = feval.grid
    slab = vals[:, :, 0, :]
    W0x, W1x = _hat_smooth_1d(xs, X[:, 0], t)
    W0y, W1y = _hat_smooth_1d(ys, X[:, 1], t)
    if moment == 0:
        return np.einsum("mi,ijc,mj->mc", W0x, slab, W0y)
    gx = np.einsum("mi,ijc,mj->mc", W1x, slab, W0y)
    gy = np.einsum("mi,ijc,mj->mc", W0x, slab, W1y)
    return np.stack([gx, gy], axis=-1)


# ---------------------------------------------------------------------------
# the Gaussian-window average and its first moment

def _window(tau, cfg):
    """1d trapezoid nodes/weights on the scaled window |z| <= cutoff/sqrt(2)."""
    half = cfg.gaussian_cutoff_sigmas / np.sqrt(2.0)
    width = 2.0 * half * np.sqrt(4.0 * tau)
    n = max(25, int(np.ceil(width * cfg.space_resolution)) + 1)
    if n % 2 == 0:
        n += 1
    z = np.linspace(-half, half, n)
    w = np.full(n, z[1] - z[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return z, w


def _gauss_average(field, x, tau, s, cfg, moment):
    """Gaussian-weighted window average around each target point.

    moment 0: (1/pi) int e^{-|z|^2} f(x + sqrt(4 tau) z, s) dz   -> (M, C)
    moment 1: (1/pi) int z e^{-|z|^2} f(...) dz                  -> (M, C, 2)

    Moment 0 equals (e^{tau Laplacian} f)(x, s); moment 1 times 1/sqrt(tau)
    equals the gradient-kernel layer of the volume potential.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z, w = _window(tau, cfg)
    Z1, Z2 = np.meshgrid(z, z, indexing="ij")
    zpts = np.column_stack([Z1.ravel(), Z2.ravel()])
    wgt = (np.outer(w, w).ravel() / np.pi) * np.exp(-np.sum(zpts**2, axis=1))
    root = np.sqrt(4.0 * tau)
    P = (x[:, None, :] + root * zpts[None, :, :]).reshape(-1, 2)
    V = field(P, s).reshape(x.shape[0], zpts.shape[0], -1)
    if moment == 0:
        return np.einsum("k,mkc->mc", wgt, V)
    return np.einsum("kd,mkc->mcd", zpts * wgt[:, None], V)


def _reach(t, cfg):
    return cfg.gaussian_cutoff_sigmas * np.sqrt(2.0 * t)


# ---------------------------------------------------------------------------
# potentials

def _squeeze(out, single_x, scalar_c):
    if scalar_c:
        out = out[:, 0] if out.ndim == 2 else out[:, 0, :]
    return out[0] if single_x else out


def initial_potential(u0, x, t, cfg=None):
    """Whole-space heat extension of initial data: int Gamma(x-y, t) u0(y) dy.

    u0 is a callable u0(P, t_ignored) or a single-time SampledField on a
    tensor grid (zero outside its box, i.e. compactly supported data).
    At t = 0 the field is evaluated (interpolated) directly.
    """
    cfg = cfg or QuadratureConfig()
    if t < 0:
        raise InvalidInputError("initial potential requires t >= 0")
    x = np.asarray(x, dtype=float)
    single = (x.ndim == 1)
    X = np.atleast_2d(x)
    f = _FieldEval(u0, n_times_expected=1 if isinstance(u0, SampledField)
                   else None)
    if t == 0:
        out = f(X, 0.0)
    elif f.grid is not None:
        f.check_coverage(X, _reach(t, cfg), cfg.tolerance)
        out = _smooth_gridded(f, X, t, moment=0)
    else:
        f.check_coverage(X, _reach(t, cfg), cfg.tolerance)
        out = _gauss_average(f, X, t, 0.0, cfg, moment=0)
    return _squeeze(out, single, out.shape[1] == 1)


def initial_potential_grad(u0, x, t, cfg=None):
    """Spatial gradient of the heat extension of initial data, (..., C, 2).

    The gradient falls on the kernel (first Gaussian moment over 1/sqrt(t)),
    so sampled initial data never gets differenced directly -- important
    because interpolated fields carry kinks whose finite differences do not
    converge.
    """
    cfg = cfg or QuadratureConfig()
    if t <= 0:
        raise InvalidInputError("initial potential gradient requires t > 0")
    x = np.asarray(x, dtype=float)
    single = (x.ndim == 1)
    X = np.atleast_2d(x)
    f = _FieldEval(u0, n_times_expected=1 if isinstance(u0, SampledField)
                   else None)
    f.check_coverage(X, _reach(t, cfg), cfg.tolerance)
    if f.grid is not None:
        out = _smooth_gridded(f, X, t, moment=1)
    else:
        out = _gauss_average(f, X, t, 0.0, cfg, moment=1) / np.sqrt(t)
    if out.shape[1] == 1:
        out = out[:, 0, :]
    return out[0] if single else out


def _sigma_panels(t, source_times, max_dyadic=6):
    """Panel boundaries in sigma = sqrt(t - s) on [0, sqrt(t)].

    Dyadic subdivision toward sigma = 0 resolves the fast transients of
    high-frequency source content near s = t; source time nodes are kept as
    boundaries because sampled fields are only piecewise linear in time.
    """
    ends = {0.0, np.sqrt(t)}
    for m in range(1, max_dyadic + 1):
        ends.add(np.sqrt(t) * 0.5**m)
    if source_times is not None:
        for s in source_times:
            if 0.0 < t - s < t:
                ends.add(np.sqrt(t - s))
    return np.array(sorted(ends))


def _time_layer_integral(field, x, t, cfg, moment):
    """Integrate the window average over s in (0, t) against the heat kernel.

    Substituting s = t - sigma^2 turns the (t-s)^{-1/2} factor of the
    gradient kernel into a constant, so both moments reduce to smooth
    integrals in sigma handled by panelwise Gauss-Legendre.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if t == 0:
        shape = (x.shape[0], 1) if moment == 0 else (x.shape[0], 1, 2)
        return np.zeros(shape)
    if field.times is not None and (field.times[0] > 1e-12
                                    or field.times[-1] < t - 1e-12):
        raise InvalidInputError(
            "sampled source must cover the time interval [0, t]")
    field.check_coverage(x, _reach(t, cfg), cfg.tolerance)
    nodes, weights = np.polynomial.legendre.leggauss(cfg.time_rule)
    bounds = _sigma_panels(t, field.time_nodes())
    out = None
    for a, b in zip(bounds[:-1], bounds[1:]):
        sig = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        wgt = 0.5 * (b - a) * weights
        for sg, wg in zip(sig, wgt):
            tau = sg * sg
            avg = _gauss_average(field, x, tau, t - tau, cfg, moment)
            scale = wg * (2.0 * sg if moment == 0 else 2.0)
            out = avg * scale if out is None else out + avg * scale
    return out


def volume_heat_potential(f, x, t, cfg=None):
    """Volume heat potential int_0^t int Gamma(x-y, t-s) f(y, s) dy ds."""
    cfg = cfg or QuadratureConfig()
    if t < 0:
        raise InvalidInputError("volume potential requires t >= 0")
    x = np.asarray(x, dtype=float)
    single = (x.ndim == 1)
    out = _time_layer_integral(_FieldEval(f), np.atleast_2d(x), t, cfg, 0)
    return _squeeze(out, single, out.shape[1] == 1)


def volume_heat_potential_grad(f, x, t, cfg=None):
    """Spatial gradient of the volume heat potential, shape (..., 2).

    The gradient falls on the kernel; the (t-s)^{-1/2} layer singularity is
    removed by the square-root time substitution.
    """
    cfg = cfg or QuadratureConfig()
    if t < 0:
        raise InvalidInputError("volume potential requires t >= 0")
    x = np.asarray(x, dtype=float)
    single = (x.ndim == 1)
    out = _time_layer_integral(_FieldEval(f), np.atleast_2d(x), t, cfg, 1)
    return _squeeze(out, single, out.shape[1] == 1)


def divergence_form_potential(F, x, t, cfg=None):
    """Heat potential of a divergence-form source.

    F is either a 2x2 tensor field with components ordered (F11, F12, F21,
    F22), giving the 2-vector potential of div F applied row-wise, or a
    2-vector flux (q1, q2), giving the scalar potential of div q.  The
    result is int_0^t int grad_x Gamma(x-y, t-s) . F_i(y, s) dy ds.
    """
    cfg = cfg or QuadratureConfig()
    if t < 0:
        raise InvalidInputError("volume potential requires t >= 0")
    x = np.asarray(x, dtype=float)
    single = (x.ndim == 1)
    X = np.atleast_2d(x)
    moments = _time_layer_integral(_FieldEval(F), X, t, cfg, 1)
    if moments.shape[1] == 4:
        out = np.stack([moments[:, 0, 0] + moments[:, 1, 1],
                        moments[:, 2, 0] + moments[:, 3, 1]], axis=-1)
    elif moments.shape[1] == 2:
        out = moments[:, 0, 0] + moments[:, 1, 1]
    else:
        raise InvalidInputError(
            "divergence-form source needs 4 components (F11, F12, F21, F22) "
            "or a 2-vector flux (q1, q2)")
    return out[0] if single else out
