"""Leray projection and Riesz transforms on a periodic box, plus the
whole-plane heat backgrounds built from projected volumetric data.

Data posed on a bounded domain is extended to a periodic box: values ride
out along boundary normals through a thin tube and a smooth ramp takes them
to zero, so the extension is compactly supported and continuous.  The
nonlocal operators then act as discrete Fourier multipliers on that box,
and the causal heat potentials of the projected sources are integrated mode
by mode -- exactly in time for sources that are piecewise linear in time.
The surviving model error is the periodization itself; with the default box
of four domain diameters it is negligible on the domain closure (doubling
the box is the standard check).

Zero-mode conventions: the Leray projection passes the mean through
unchanged (a constant field is already divergence-free); the Riesz
transforms map the mean to zero (principal-value convention) and follow the
sign convention riesz(0, cos(2*pi*x/L)) = +sin(2*pi*x/L).
"""

import numpy as np
from scipy.spatial import cKDTree

from .errors import GeometryError, InvalidInputError
from .fields import SampledField
from .heatkernel import _FieldEval, grid_points, initial_potential_grad

__all__ = [
    "PeriodicGridField", "extend_to_box", "leray_project", "riesz",
    "projected_source_potential", "projected_stress_potential",
    "divergence_free_extension", "DivergenceFreeExtension",
    "forcing_background", "stress_background",
]


# ---------------------------------------------------------------------------
# the periodic grid container

class PeriodicGridField:
    """Field samples on a uniform square periodic grid.

    box_size : side length L of the box.
    n_cells  : grid nodes per axis, a power of two (all operators are FFTs).
    origin   : lower-left corner; node (i, j) sits at origin + (i, j) L / n.
    times    : (nt,) increasing sample times.
    values   : (n*n, nt, C) with the lexicographic cell order of
               grid_points; per-component means are kept on .means because
               the multiplier operators treat the zero mode specially.
    """

    def __init__(self, box_size, n_cells, origin, times, values):
        self.box_size = float(box_size)
        self.n_cells = int(n_cells)
        if self.box_size <= 0:
            raise InvalidInputError("box_size must be positive")
        n = self.n_cells
        if n < 4 or (n & (n - 1)) != 0:
            raise InvalidInputError("n_cells must be a power of two, >= 4")
        self.origin = np.asarray(origin, dtype=float).reshape(2)
        self.times = np.asarray(times, dtype=float)
        if self.times.ndim != 1 or self.times.size < 1:
            raise InvalidInputError("times must be a 1d array")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise InvalidInputError("times must be strictly increasing")
        values = np.asarray(values, dtype=float)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.shape[:2] != (n * n, self.times.size):
            raise InvalidInputError(
                "values shape %r does not match %d cells x %d times"
                % (values.shape, n * n, self.times.size))
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("non-finite entries in grid values")
        self.values = values
        self.means = values.mean(axis=0)

    @property
    def spacing(self):
        return self.box_size / self.n_cells

    @property
    def n_components(self):
        return self.values.shape[2]

    @property
    def n_times(self):
        return self.times.size

    def axis_nodes(self):
        h = self.spacing
        idx = np.arange(self.n_cells)
        return self.origin[0] + idx * h, self.origin[1] + idx * h

    def points(self):
        xs, ys = self.axis_nodes()
        return grid_points(xs, ys)

    def as_grid(self):
        n = self.n_cells
        return self.values.reshape(n, n, self.n_times, self.n_components)

    def like(self, values):
        """Same geometry and times, new values."""
        return PeriodicGridField(self.box_size, self.n_cells, self.origin,
                                 self.times, values)

    def as_sampled_field(self):
        """Zero-extension view for the direct-quadrature potentials."""
        return SampledField(self.points(), self.times, self.values)


def _wavenumbers(n, box_size, derivative=False):
    """Wavenumber grids in the numpy FFT layout.

    With derivative=True the unpaired Nyquist lines are zeroed (the usual
    spectral-derivative convention).  Multipliers built from these keep real
    fields real, and the modes whose wavenumber reads as zero -- the mean
    and the three self-conjugate sawtooth corners -- get the zero-mode
    treatment of each operator.
    """
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=box_size / n)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    if derivative:
        kx[n // 2, :] = 0.0
        ky[:, n // 2] = 0.0
    return kx, ky


# ---------------------------------------------------------------------------
# extension of domain data to the box

def _ramp(u):
    """C^2 smoothstep on [0, 1]: 0 at 0, 1 at 1, flat at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10.0 - 15.0 * u + 6.0 * u * u)


def _curve_geometry(curve):
    pos = curve.positions
    diff = pos[:, None, :] - pos[None, :, :]
    diam = float(np.sqrt(np.max(np.sum(diff * diff, axis=2))))
    center = pos.mean(axis=0)
    return center, diam


def _dense_boundary(curve, per_node=16):
    m = max(512, per_node * curve.n_nodes)
    thetas = np.linspace(0.0, 2.0 * np.pi, m, endpoint=False)
    return curve.position(thetas)


def extend_to_box(f, curve, times=None, box_size=None, n_cells=64,
                  tube_width=None):
    """Compactly supported extension of domain data to a periodic box.

    Inside the domain the data is kept.  Outside, every point within a thin
    tube takes the value at its nearest boundary point, scaled by a smooth
    ramp that reaches zero at the tube edge; beyond the tube the extension
    vanishes.  The construction is continuous across the boundary and never
    exceeds the sup norm of the data.

    f          : callable f(P, t) -> (N,), (N, 2) or (N, 4), or a
                 SampledField on a tensor grid covering the closed domain.
    times      : time grid, required for callable sources (SampledField
                 sources bring their own).
    box_size   : side length, default four domain diameters.
    n_cells    : grid nodes per axis, a power of two.
    tube_width : default one tenth of the domain diameter.
    """
    fe = _FieldEval(f)
    if isinstance(f, SampledField):
        times = f.times
    if times is None:
        raise InvalidInputError(
            "callable sources need an explicit time grid")
    times = np.asarray(times, dtype=float)

    center, diam = _curve_geometry(curve)
    w = float(tube_width) if tube_width is not None else 0.1 * diam
    if w <= 0:
        raise InvalidInputError("tube_width must be positive")
    L = float(box_size) if box_size is not None else 4.0 * diam
    n = int(n_cells)
    h = L / n
    origin = center - 0.5 * L
    cheb = float(np.max(np.abs(curve.positions - center)))
    if cheb + w > 0.5 * L - 2.0 * h:
        raise GeometryError(
            "domain plus extension tube reaches within two cells of the "
            "periodic box edge; enlarge box_size")

    gf = PeriodicGridField(L, n, origin, times,
                           np.zeros((n * n, times.size, 1)))
    P = gf.points()
    inside = curve.contains(P)
    bpos = _dense_boundary(curve)
    tree = cKDTree(bpos)
    d_out, j_out = tree.query(P[~inside])
    tube = d_out < w
    foot = bpos[j_out[tube]]
    chi = _ramp(1.0 - d_out[tube] / w)

    out_rows = np.flatnonzero(~inside)[tube]
    probe = fe(P[inside][:1] if inside.any() else foot[:1], float(times[0]))
    n_comp = probe.shape[1]
    if n_comp not in (1, 2, 4):
        raise InvalidInputError(
            "extension supports scalar, vector, or 2x2 tensor data")

    values = np.zeros((n * n, times.size, n_comp))
    for k, t in enumerate(times):
        values[inside, k] = fe(P[inside], float(t))
        values[out_rows, k] = fe(foot, float(t)) * chi[:, None]
    return PeriodicGridField(L, n, origin, times, values)


# ---------------------------------------------------------------------------
# multiplier operators

def leray_project(f):
    """Remove the gradient part of a vector field on the periodic box.

    Fourier multiplier delta_ij - xi_i xi_j / |xi|^2 per mode, built from
    the spectral-derivative wavenumbers so the operator is exactly
    idempotent and self-adjoint on real grids.  The zero mode (the mean)
    passes through unchanged, so constant fields are fixed points.  The
    output is divergence-free in the spectral sense.
    """
    if f.n_components != 2:
        raise InvalidInputError("leray_project expects a 2-component field")
    n = f.n_cells
    vh = np.fft.fft2(f.as_grid(), axes=(0, 1))
    kx, ky = _wavenumbers(n, f.box_size, derivative=True)
    k2 = kx * kx + ky * ky
    k2[k2 == 0.0] = 1.0
    div = (kx[:, :, None] * vh[..., 0]
           + ky[:, :, None] * vh[..., 1]) / k2[:, :, None]
    vh[..., 0] -= kx[:, :, None] * div
    vh[..., 1] -= ky[:, :, None] * div
    vals = np.real(np.fft.ifft2(vh, axes=(0, 1)))
    return f.like(vals.reshape(n * n, f.n_times, 2))


def riesz(axis, f):
    """Riesz transform along an axis: multiplier -i xi_axis / |xi|.

    The zero mode maps to zero (principal-value convention), as do the
    self-conjugate sawtooth modes whose derivative-convention wavenumber
    vanishes; with that, riesz(0,.)^2 + riesz(1,.)^2 = -identity on the
    remaining modes exactly.  Sign convention:
    riesz(0, cos(2*pi*x1/L)) = +sin(2*pi*x1/L).
    """
    if axis not in (0, 1):
        raise InvalidInputError("axis must be 0 or 1")
    if f.n_components != 1:
        raise InvalidInputError("riesz expects a scalar field")
    n = f.n_cells
    vh = np.fft.fft2(f.as_grid()[..., 0], axes=(0, 1))
    kx, ky = _wavenumbers(n, f.box_size, derivative=True)
    kabs = np.hypot(kx, ky)
    dead = kabs == 0.0
    kabs[dead] = 1.0
    mult = -1j * (kx if axis == 0 else ky) / kabs
    mult[dead] = 0.0
    vals = np.real(np.fft.ifft2(mult[:, :, None] * vh, axes=(0, 1)))
    return f.like(vals.reshape(n * n, f.n_times, 1))


# ---------------------------------------------------------------------------
# causal heat potentials of periodic sources, mode by mode

def _phi_weights(z):
    """exp(-z), (1 - e^-z)/z, (z - 1 + e^-z)/z^2 with small-z series."""
    E = np.exp(-z)
    with np.errstate(divide="ignore", invalid="ignore"):
        p1 = -np.expm1(-z) / z
        p2 = (z + np.expm1(-z)) / (z * z)
    small = z < 1e-6
    zs = np.where(small, z, 0.0)
    p1 = np.where(small, 1.0 - zs / 2.0 + zs * zs / 6.0, p1)
    p2 = np.where(small, 0.5 - zs / 6.0 + zs * zs / 24.0, p2)
    return E, p1, p2


def _eval_modes(vh, box_size, n_cells, origin, X):
    """Evaluate FFT-convention mode coefficients at arbitrary points."""
    k = 2.0 * np.pi * np.fft.fftfreq(n_cells, d=box_size / n_cells)
    px = np.exp(1j * np.outer(X[:, 0] - origin[0], k))
    py = np.exp(1j * np.outer(X[:, 1] - origin[1], k))
    if vh.ndim == 3:
        out = np.einsum("mp,pqc,mq->mc", px, vh, py)
    else:
        out = np.einsum("mp,pqtc,mq->mtc", px, vh, py)
    return np.real(out) / (n_cells * n_cells)


class _ModeHeatField:
    """Causal heat potential of a periodic source, one mode at a time.

    Each Fourier mode solves v' = -|xi|^2 v + f(t) with v(0) = 0.  The
    source modes are piecewise linear between sample times, for which every
    step integrates in closed form, so the stored slice coefficients carry
    no time-stepping error beyond the sampling of the source itself.
    """

    def __init__(self, source_modes, times, box_size, n_cells, origin):
        self.fh = source_modes
        self.times = np.asarray(times, dtype=float)
        self.box_size = float(box_size)
        self.n_cells = int(n_cells)
        self.origin = np.asarray(origin, dtype=float)
        kx, ky = _wavenumbers(self.n_cells, self.box_size)
        self.k2 = kx * kx + ky * ky
        vh = np.zeros_like(source_modes)
        for k in range(self.times.size - 1):
            dt = self.times[k + 1] - self.times[k]
            E, p1, p2 = _phi_weights(self.k2 * dt)
            A = dt * p1
            B = dt * p2
            vh[:, :, k + 1] = (E[:, :, None] * vh[:, :, k]
                               + (A - B)[:, :, None] * self.fh[:, :, k]
                               + B[:, :, None] * self.fh[:, :, k + 1])
        self.vh = vh

    @classmethod
    def from_grid_field(cls, gf):
        fh = np.fft.fft2(gf.as_grid(), axes=(0, 1))
        return cls(fh, gf.times, gf.box_size, gf.n_cells, gf.origin)

    def _modes_at(self, t):
        times = self.times
        span = max(times[-1] - times[0], 1.0)
        if t > times[-1] + 1e-9 * span or t < times[0] - 1e-9 * span:
            raise InvalidInputError(
                "time %g outside the integrated range [%g, %g]"
                % (t, times[0], times[-1]))
        t = float(np.clip(t, times[0], times[-1]))
        k = int(np.clip(np.searchsorted(times, t) - 1, 0, times.size - 2))
        dtp = t - times[k]
        if dtp <= 0:
            return self.vh[:, :, k]
        dt = times[k + 1] - times[k]
        fend = (self.fh[:, :, k]
                + (dtp / dt) * (self.fh[:, :, k + 1] - self.fh[:, :, k]))
        E, p1, p2 = _phi_weights(self.k2 * dtp)
        A = dtp * p1
        B = dtp * p2
        return (E[:, :, None] * self.vh[:, :, k]
                + (A - B)[:, :, None] * self.fh[:, :, k] + B[:, :, None] * fend)

    def at(self, X, t):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return _eval_modes(self._modes_at(float(t)), self.box_size,
                           self.n_cells, self.origin, X)

    def sampled(self, targets):
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        vals = _eval_modes(self.vh, self.box_size, self.n_cells,
                           self.origin, targets)
        return SampledField(targets, self.times, vals)


def projected_source_potential(f_ext, targets):
    """Causal heat potential of the Leray projection of an extended force.

    Returns the potential sampled at the targets over the field's own time
    grid.  It vanishes at the first time and is divergence-free because the
    projected source is.
    """
    proj = leray_project(f_ext)
    return _ModeHeatField.from_grid_field(proj).sampled(targets)


def _stress_divergence_modes(F_ext):
    """Mode coefficients of div of the row-projected stress tensor.

    Components are ordered (F11, F12, F21, F22); the projection acts on the
    row index so the divergence (over the column index) of the projected
    tensor is itself divergence-free as a vector field.
    """
    if F_ext.n_components != 4:
        raise InvalidInputError(
            "stress field needs components (F11, F12, F21, F22)")
    n = F_ext.n_cells
    Fh = np.fft.fft2(F_ext.as_grid(), axes=(0, 1))
    kx, ky = _wavenumbers(n, F_ext.box_size, derivative=True)
    k2 = kx * kx + ky * ky
    k2[k2 == 0.0] = 1.0
    gh = np.zeros(Fh.shape[:3] + (2,), dtype=complex)
    for kd, (a, b) in zip((kx, ky), ((0, 2), (1, 3))):
        div = (kx[:, :, None] * Fh[..., a]
               + ky[:, :, None] * Fh[..., b]) / k2[:, :, None]
        gh[..., 0] += 1j * kd[:, :, None] * (Fh[..., a]
                                             - kx[:, :, None] * div)
        gh[..., 1] += 1j * kd[:, :, None] * (Fh[..., b]
                                             - ky[:, :, None] * div)
    return gh


def projected_stress_potential(F_ext, targets):
    """Velocity correction for divergence-form forcing.

    The heat potential driven by div of the row-projected stress: the time
    derivative minus the Laplacian of the result reproduces the projected
    forcing divergence, and the result is divergence-free and vanishes at
    the first time.
    """
    gh = _stress_divergence_modes(F_ext)
    mh = _ModeHeatField(gh, F_ext.times, F_ext.box_size, F_ext.n_cells,
                        F_ext.origin)
    return mh.sampled(targets)


# ---------------------------------------------------------------------------
# background builders consumed by the boundary solver

def forcing_background(curve, f, t_final, box_size=None, n_cells=128,
                       n_steps=64):
    """Whole-plane velocity background absorbing a body force.

    Extends the force to the box, projects it, and integrates the heat
    potential; returns a callable (X, t) -> (N, 2).
    """
    if isinstance(f, SampledField):
        times = f.times
        if times[-1] < t_final - 1e-12:
            raise InvalidInputError(
                "forcing samples must cover [0, t_final]")
    else:
        times = np.linspace(0.0, float(t_final), n_steps + 1)
    ext = extend_to_box(f, curve, times=times, box_size=box_size,
                        n_cells=n_cells)
    proj = leray_project(ext)
    return _ModeHeatField.from_grid_field(proj).at


def stress_background(curve, F, t_final, box_size=None, n_cells=128,
                      n_steps=64):
    """Whole-plane velocity background absorbing divergence-form forcing.

    Returns a callable (X, t) -> (N, 2) evaluating the heat potential of
    div of the row-projected stress extension.
    """
    if isinstance(F, SampledField):
        times = F.times
        if times[-1] < t_final - 1e-12:
            raise InvalidInputError(
                "forcing samples must cover [0, t_final]")
    else:
        times = np.linspace(0.0, float(t_final), n_steps + 1)
    ext = extend_to_box(F, curve, times=times, box_size=box_size,
                        n_cells=n_cells)
    gh = _stress_divergence_modes(ext)
    mh = _ModeHeatField(gh, ext.times, ext.box_size, ext.n_cells, ext.origin)
    return mh.at


# ---------------------------------------------------------------------------
# divergence-free extension of initial velocity via a stream function

def _ray_stream(u0, center, X, order):
    """Stream recovered by integrating the velocity along centroid rays.

    s(x) = int_0^1 (u2 D1 - u1 D2) dsigma with D = x - center, so the
    perpendicular gradient (-ds/dy, ds/dx) reproduces u0 whenever u0 is
    divergence-free and the segment stays inside the domain.
    """
    nodes, wts = np.polynomial.legendre.leggauss(order)
    sig = 0.5 * (nodes + 1.0)
    sw = 0.5 * wts
    D = X - center
    out = np.zeros(X.shape[0])
    for s, w in zip(sig, sw):
        U = np.asarray(u0(center + s * D), dtype=float)
        out += w * (U[:, 1] * D[:, 0] - U[:, 0] * D[:, 1])
    return out


class DivergenceFreeExtension:
    """Compactly supported divergence-free extension of initial velocity.

    The velocity is integrated into a stream function along rays from the
    domain centroid (the domain must be star-shaped about it), the stream
    is continued through a surrounding tube by its first-order Taylor
    expansion at the nearest boundary point -- keeping the extended
    velocity continuous across the boundary, not just the stream -- then
    ramped to zero and stored on a fine single-time grid.  heat_evolution evaluates
    the perpendicular gradient of the exactly heat-smoothed stream, so the
    background it provides is caloric and divergence-free to rounding at
    every positive time.
    """

    def __init__(self, curve, u0, n_cells=256, tube_width=None, ray_rule=24):
        center, diam = _curve_geometry(curve)
        # a wide tube keeps the ramp term |stream|/width in the tube
        # velocity small and spreads the free-evolution transient over a
        # time scale width^2 that downstream time marching can resolve;
        # for strongly non-convex domains pass a width below the exterior
        # ridge distance so the nearest-boundary Taylor stays coherent
        w = float(tube_width) if tube_width is not None else 0.45 * diam
        if w <= 0:
            raise InvalidInputError("tube_width must be positive")
        n = int(n_cells)
        if n < 16:
            raise InvalidInputError("n_cells must be at least 16")
        r_max = float(np.max(np.abs(curve.positions - center))) + w
        L = 2.0 * r_max / (1.0 - 8.0 / n)
        h = L / n

        bpos = _dense_boundary(curve)
        for sig in (0.35, 0.6, 0.85):
            probe = center + sig * (bpos[::4] - center)
            if not np.all(curve.contains(probe)):
                raise GeometryError(
                    "stream recovery integrates along rays from the "
                    "centroid; the domain must be star-shaped about it")

        idx = np.arange(n) - 0.5 * (n - 1)
        xs = center[0] + idx * h
        ys = center[1] + idx * h
        P = grid_points(xs, ys)
        inside = curve.contains(P)
        tree = cKDTree(bpos)
        d_out, j_out = tree.query(P[~inside])
        tube = d_out < w

        vals = np.zeros(n * n)
        vals[inside] = _ray_stream(u0, center, P[inside], ray_rule)
        s_bnd = _ray_stream(u0, center, bpos, ray_rule)
        # the stream is defined up to a constant; centring it on its
        # boundary mean minimises the ramp contribution to the tube
        # velocity (which scales with |stream|/tube_width)
        s0 = s_bnd.mean()
        vals[inside] -= s0
        s_bnd = s_bnd - s0
        u_bnd = np.asarray(u0(bpos), dtype=float)
        # stream gradient on the boundary: (ds/dx, ds/dy) = (u2, -u1)
        g_bnd = np.stack([u_bnd[:, 1], -u_bnd[:, 0]], axis=1)
        out_rows = np.flatnonzero(~inside)[tube]
        jt = j_out[tube]
        foot = bpos[jt]
        taylor = s_bnd[jt] + np.sum((P[out_rows] - foot) * g_bnd[jt], axis=1)
        vals[out_rows] = taylor * _ramp(1.0 - d_out[tube] / w)

        self.stream = SampledField(P, np.array([0.0]), vals[:, None])
        self._curve = curve
        self._u0 = u0
        self._tree = tree
        self._near = 2.0 * h

    def initial(self, X):
        """The data itself on the closed domain, zero elsewhere."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        on = self._curve.contains(X) | (self._tree.query(X)[0] < self._near)
        out = np.zeros((X.shape[0], 2))
        if on.any():
            out[on] = np.asarray(self._u0(X[on]), dtype=float)
        return out

    def heat_evolution(self, X, t):
        """Velocity of the free heat evolution of the extension."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if t <= 0:
            return self.initial(X)
        g = initial_potential_grad(self.stream, X, t)
        return np.column_stack([-g[:, 1], g[:, 0]])


def divergence_free_extension(curve, u0, n_cells=256, tube_width=None):
    """Extend divergence-free initial velocity to the whole plane.

    u0 is a callable u0(P) -> (N, 2) on the closed domain.  See
    DivergenceFreeExtension for the construction and the star-shape
    restriction.
    """
    return DivergenceFreeExtension(curve, u0, n_cells=n_cells,
                                   tube_width=tube_width)
