"""Boundary layer potentials on smooth closed curves.

Steady (harmonic) part: the single-layer potential, its tangential boundary
gradient, and the adjoint double-layer operator, all by Nystrom collocation
on the curve nodes.  The kernels are smooth or have removable singularities
on C^2 curves, so plain trapezoid quadrature with analytic diagonal limits
is spectrally accurate.

Unsteady part: the boundary response tensor for unsteady Stokes flow built
from the heat kernel and a pressure correction, the slab integral of
grad-Newtonian against the heat kernel's normal derivative over the strip
between the tangent line at the source point and its parallel through the
evaluation point.  Writing the strip integral in heat-scaled coordinates
collapses it to a one-dimensional integral of the Faddeeva function, which
is what makes dense space-time assembly affordable.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import wofz

from .errors import InvalidInputError, NearSingularWarning
from .curves import BoundaryCurve

__all__ = [
    "single_layer", "single_layer_gradient", "tangential_gradient_single_layer",
    "odd_kernel_closure", "adjoint_double_layer_matrix", "kstar",
    "interior_normal_derivative_matrix", "pressure_tensor", "green_tensor_row",
    "green_tensor", "hydro_potential", "HydroConvolution", "SpaceTimeDensity",
    "PRESSURE_ORIENTATION",
]

# Sign of the pressure-tensor weight, fixed by requiring the assembled
# response tensor's tangential columns to be divergence-free velocity fields
# (checked in the test suite on both sides of the boundary).
PRESSURE_ORIENTATION = -1.0

_GL40 = leggauss(40)
_GL6 = leggauss(6)


# ---------------------------------------------------------------------------
# steady harmonic boundary operators

def _as_density(psi, m):
    psi = np.asarray(psi, dtype=float)
    if psi.shape[0] != m:
        raise InvalidInputError("density must have one value per curve node")
    return psi


def single_layer(curve, psi, x, warn_near=True):
    """Single-layer potential sum_j N(x - Q_j) psi_j w_j at points x.

    psi may be (M,) or (M, K) for K simultaneous densities; x is (2,) or
    (N, 2).  Spectrally accurate off the boundary; points within one node
    spacing of the curve trigger a near-singular warning.
    """
    psi = _as_density(psi, curve.n_nodes)
    x = np.asarray(x, dtype=float)
    single = (x.ndim == 1)
    X = np.atleast_2d(x)
    diff = X[:, None, :] - curve.positions[None, :, :]
    r2 = np.sum(diff * diff, axis=2)
    if warn_near:
        spacing = (curve.weights.max()) ** 2
        if np.any(r2.min(axis=1) < spacing):
            warnings.warn("evaluation point within one node spacing of the "
                          "boundary; single-layer quadrature degrades",
                          NearSingularWarning, stacklevel=2)
    kern = 0.25 * np.log(r2) / np.pi  # N(x - Q) = log|x-Q| / (2 pi)
    out = kern @ (psi * curve.weights[:, None] if psi.ndim == 2
                  else psi * curve.weights)
    return out[0] if single else out


def single_layer_gradient(curve, psi, x):
    """Gradient of the single-layer potential at off-boundary points."""
    psi = _as_density(psi, curve.n_nodes)
    x = np.asarray(x, dtype=float)
    single = (x.ndim == 1)
    X = np.atleast_2d(x)
    diff = X[:, None, :] - curve.positions[None, :, :]
    r2 = np.sum(diff * diff, axis=2)
    kern = diff / (2.0 * np.pi * r2[:, :, None])
    out = np.einsum("nmd,m->nd", kern, psi * curve.weights)
    return out[0] if single else out


def _fourier_derivative(values, order=1):
    m = values.shape[0]
    k = np.fft.fftfreq(m, d=1.0 / m)
    if m % 2 == 0 and order % 2 == 1:
        k = k.copy()
        k[m // 2] = 0.0
    k = k.reshape((m,) + (1,) * (values.ndim - 1))
    return np.fft.ifft((1j * k) ** order * np.fft.fft(values, axis=0),
                       axis=0).real


def tangential_gradient_single_layer(curve, psi):
    """Tangential derivative of the single-layer trace at the curve nodes.

    The kernel splits into a bounded part against T(P) - T(Z) and an odd
    part against T(Z); the latter integrates to zero around the curve
    (it is the arclength derivative of -log|P - Z|), so subtracting
    psi(P) removes the principal value.  The remaining integrand extends
    continuously to Z = P with value -d(psi)/ds.
    """
    psi = _as_density(psi, curve.n_nodes)
    scalar = (psi.ndim == 1)
    psi2 = psi[:, None] if scalar else psi
    P = curve.positions
    T = curve.tangent
    w = curve.weights
    diff = P[:, None, :] - P[None, :, :]
    r2 = np.sum(diff * diff, axis=2)
    np.fill_diagonal(r2, 1.0)
    k_bounded = np.einsum("ijd,ijd->ij", diff, T[:, None, :] - T[None, :, :]) / r2
    np.fill_diagonal(k_bounded, 0.0)
    k_odd = np.einsum("ijd,jd->ij", diff, T) / r2
    np.fill_diagonal(k_odd, 0.0)
    dpsi_ds = _fourier_derivative(psi2) / curve.speed[:, None]
    out = (k_bounded * w[None, :]) @ psi2
    out += (k_odd * w[None, :]) @ psi2 - (k_odd @ w)[:, None] * psi2
    out -= dpsi_ds * w[:, None]
    out /= 2.0 * np.pi
    return out[:, 0] if scalar else out


def odd_kernel_closure(curve):
    """Discrete principal value of oint (P-Z).T(Z)/|P-Z|^2 dZ at every node.

    The exact value is zero on any closed curve (the integrand is the
    arclength derivative of -log|P-Z|).  The node-skipping trapezoid sum
    needs the analytic diagonal term -speed'/(2 speed) (which vanishes on
    circles) to restore spectral accuracy.
    """
    P = curve.positions
    diff = P[:, None, :] - P[None, :, :]
    r2 = np.sum(diff * diff, axis=2)
    np.fill_diagonal(r2, 1.0)
    k2 = np.einsum("ijd,jd->ij", diff, curve.tangent) / r2
    np.fill_diagonal(k2, 0.0)
    dspeed = _fourier_derivative(curve.speed)
    step = 2.0 * np.pi / curve.n_nodes
    return k2 @ curve.weights - step * dspeed / (2.0 * curve.speed)


def adjoint_double_layer_matrix(curve):
    """Matrix of the normal-derivative boundary operator
    psi -> p.v. (1/2pi) int (P-Q).n(P)/|P-Q|^2 psi(Q) dQ,
    whose kernel extends continuously to the diagonal with value
    curvature/(4 pi) on a C^2 curve."""
    P = curve.positions
    diff = P[:, None, :] - P[None, :, :]
    r2 = np.sum(diff * diff, axis=2)
    np.fill_diagonal(r2, 1.0)
    kern = np.einsum("ijd,id->ij", diff, curve.normal) / (2.0 * np.pi * r2)
    np.fill_diagonal(kern, curve.curvature / (4.0 * np.pi))
    return kern * curve.weights[None, :]


def kstar(curve, psi):
    """Adjoint double-layer operator normalized so that the second-kind
    system matrix is I + K*: K* = -2 x (interior-trace integral operator),
    i.e. the principal-value integral with constant c_n = -1/pi.  On a
    circle the kernel is constant, so K* annihilates mean-zero densities
    and maps 1 to -1."""
    psi = _as_density(psi, curve.n_nodes)
    return -2.0 * (adjoint_double_layer_matrix(curve) @ psi)


def interior_normal_derivative_matrix(curve):
    """Interior trace of n . grad applied to the single-layer potential:
    -I/2 + (adjoint double layer).  Equals -(I + K*)/2."""
    return -0.5 * np.eye(curve.n_nodes) + adjoint_double_layer_matrix(curve)


# ---------------------------------------------------------------------------
# space-time density container

@dataclass
class SpaceTimeDensity:
    """Tangential vector density phi and mean-zero scalar density psi on
    curve nodes x uniform times, as produced by the boundary solver."""

    curve: BoundaryCurve
    times: np.ndarray
    phi: np.ndarray   # (M, n_times, 2)
    psi: np.ndarray   # (M, n_times)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)
        m, nt = self.curve.n_nodes, self.times.size
        if self.phi.shape != (m, nt, 2) or self.psi.shape != (m, nt):
            raise InvalidInputError("density arrays do not match nodes x times")
        scale = max(np.abs(self.phi).max(), 1.0)
        normal_part = np.einsum("mtd,md->mt", self.phi, self.curve.normal)
        if np.abs(normal_part).max() > 1e-12 * scale:
            raise InvalidInputError("phi must be tangential at every node")
        pscale = max(np.abs(self.psi).max(), 1.0)
        means = self.curve.weights @ self.psi
        if np.abs(means).max() > 1e-10 * pscale:
            raise InvalidInputError("psi must have zero boundary mean")
        if self.times[0] == 0.0:
            if np.abs(self.phi[:, 0]).max() > 0 or np.abs(self.psi[:, 0]).max() > 0:
                raise InvalidInputError("densities must vanish at t = 0")


# ---------------------------------------------------------------------------
# pressure tensor

def _pressure_profile(a_sc, d_sc):
    """Scaled pressure-tensor profile F(a, d) in the local (tangent, normal)
    frame at the source point.

    F = -(1/4 pi^2) int_0^d b exp(-b^2) G(a, d - b) db with
    G(a, c) = pi * (Im w(a + i|c|), sign(c) Re w(a + i|c|)), where w is the
    Faddeeva function; the integration variable is clipped to |b| <= 6
    (the Gaussian weight is below 2e-16 beyond).  Returns (F_t, F_n) with
    the input's shape.  F vanishes to second order on the axis d = 0.
    """
    a_sc = np.asarray(a_sc, dtype=float)
    d_sc = np.asarray(d_sc, dtype=float)
    nodes, wts = _GL40
    d_clip = np.clip(d_sc, -6.0, 6.0)
    b = 0.5 * d_clip[..., None] * (nodes + 1.0)
    bw = 0.5 * d_clip[..., None] * wts
    c = d_sc[..., None] - b
    W = wofz(a_sc[..., None] + 1j * np.abs(c))
    g_t = np.pi * W.imag
    g_n = np.pi * np.sign(c) * W.real
    pref = -1.0 / (4.0 * np.pi ** 2)
    common = bw * b * np.exp(-b * b)
    return pref * np.sum(common * g_t, axis=-1), \
        pref * np.sum(common * g_n, axis=-1)


def pressure_tensor(x, Q, n_Q, t_Q, tau):
    """Pressure tensor q(x, Q, tau) as a global 2-vector, vectorized over Q.

    The layer between the tangent line at Q and its parallel through x is
    integrated with the unsigned set measure, which contributes the
    sign((x - Q).n) factor relative to the signed profile integral.
    x: (2,); Q, n_Q, t_Q: (M, 2) source points with unit normal/tangent;
    tau > 0.  Points x on the tangent line at Q give exactly zero (empty
    layer).
    """
    if tau <= 0:
        raise InvalidInputError("pressure tensor requires tau > 0")
    x = np.asarray(x, dtype=float)
    Q = np.atleast_2d(Q)
    rel = x[None, :] - Q
    root = np.sqrt(4.0 * tau)
    a_sc = np.einsum("md,md->m", rel, np.atleast_2d(t_Q)) / root
    d_sc = np.einsum("md,md->m", rel, np.atleast_2d(n_Q)) / root
    f_t, f_n = _pressure_profile(a_sc, d_sc)
    out = (f_t[:, None] * np.atleast_2d(t_Q)
           + f_n[:, None] * np.atleast_2d(n_Q)) / tau
    return (PRESSURE_ORIENTATION * np.sign(d_sc))[:, None] * out


# ---------------------------------------------------------------------------
# the unsteady boundary response tensor

def green_tensor_row(curve, x, tau, self_index=None, fd_step=None,
                     fd_frame=None):
    """Tensor G(x, Q_k, tau) for all curve nodes Q_k, shape (M, 2, 2).

    G_ij = -2 dGamma/dn_Q (I - n n)_ij + 4 (d/dx_j - n_j d/dn) q_i: the
    velocity index i is the pressure-tensor component and the derivative
    index j pairs with the density (so normal densities are annihilated
    exactly).  The gradient of the pressure tensor is taken by centered
    differences with step min(0.01, sqrt(tau)/10) along the rows of
    fd_frame (defaults to the coordinate axes; passing the local
    tangent/normal frame makes rows at congruent configurations agree to
    rounding, which the circulant fast path relies on).  For an on-curve x
    equal to node `self_index`, the self entry is exactly zero in the
    tangent-plane model (both the heat-kernel factor and the gradient of
    the pressure profile vanish there), so it is set analytically rather
    than differenced.
    """
    x = np.asarray(x, dtype=float)
    Q, nq, tq = curve.positions, curve.normal, curve.tangent
    rel = x[None, :] - Q
    r2 = np.sum(rel * rel, axis=1)
    dot_n = np.einsum("md,md->m", rel, nq)
    gamma = np.exp(-r2 / (4.0 * tau)) / (4.0 * np.pi * tau)
    dgam_dnq = dot_n * gamma / (2.0 * tau)
    eye = np.eye(2)
    proj = eye[None, :, :] - nq[:, None, :] * nq[:, :, None]
    out = -2.0 * dgam_dnq[:, None, None] * proj
    h = fd_step if fd_step is not None else min(0.01, np.sqrt(tau) / 10.0)
    frame = eye if fd_frame is None else np.asarray(fd_frame, dtype=float)
    grad_f = np.empty((Q.shape[0], 2, 2))   # grad_f[m, k, i] = d q_i along frame k
    for k in range(2):
        e = frame[k] * h
        qp = pressure_tensor(x + e, Q, nq, tq, tau)
        qm = pressure_tensor(x - e, Q, nq, tq, tau)
        grad_f[:, k, :] = (qp - qm) / (2.0 * h)
    grad = np.einsum("kj,mki->mji", frame, grad_f)   # grad[m, j, i] = d_j q_i
    normal_deriv = np.einsum("mj,mji->mi", nq, grad)
    term = grad.transpose(0, 2, 1) - normal_deriv[:, :, None] * nq[:, None, :]
    out += 4.0 * term
    if self_index is not None:
        out[self_index] = 0.0
    return out


def green_tensor(x, Q, t, curve):
    """Single-pair convenience wrapper; Q must be one of the curve nodes."""
    Q = np.asarray(Q, dtype=float)
    k = int(np.argmin(np.sum((curve.positions - Q) ** 2, axis=1)))
    if np.sum((curve.positions[k] - Q) ** 2) > 1e-20:
        raise InvalidInputError("Q must coincide with a curve node")
    x = np.asarray(x, dtype=float)
    d2 = np.sum((x - curve.positions[k]) ** 2)
    self_index = k if d2 < 1e-24 else None
    row = green_tensor_row(curve, x, t, self_index=self_index)
    return row[k]


def _is_centered_circle(curve):
    center = curve.positions.mean(axis=0)
    r = np.hypot(*(curve.positions - center).T)
    if np.abs(r - r.mean()).max() < 1e-12 * max(r.mean(), 1.0):
        return center, float(r.mean())
    return None


class HydroConvolution:
    """Discrete space-time convolution with the boundary response tensor.

    Product integration on a uniform time grid: within each lag cell the
    tensor's time integral and first moment are computed by Gauss-Legendre
    in sigma = sqrt(tau) (which absorbs the integrable endpoint blow-up),
    and the density is taken piecewise linear.  On circles the tensor rows
    are rotation-equivariant, so only one reference row per quadrature time
    is evaluated and the full matrices follow by conjugation.
    """

    def __init__(self, curve, dt, n_steps):
        if dt <= 0 or n_steps < 1:
            raise InvalidInputError("need dt > 0 and n_steps >= 1")
        self.curve = curve
        self.dt = float(dt)
        self.n_steps = int(n_steps)
        m = curve.n_nodes
        self._moments = []
        circ = _is_centered_circle(curve)
        nodes, wts = _GL6
        for cell in range(self.n_steps):
            lo, hi = np.sqrt(cell * dt), np.sqrt((cell + 1) * dt)
            sig = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
            sw = 0.5 * (hi - lo) * wts * 2.0 * sig
            m0 = np.zeros((m, m, 2, 2))
            m1 = np.zeros((m, m, 2, 2))
            for s, w in zip(sig, sw):
                tau = s * s
                theta = (tau - cell * dt) / dt
                mat = self._full_matrix(tau, circ)
                m0 += w * mat
                m1 += (w * theta) * mat
            self._moments.append((m0, m1))

    def _full_matrix(self, tau, circ):
        """Quadrature-weighted kernel matrix mat[i, j] = G(P_i, Q_j, tau) w_j."""
        m = self.curve.n_nodes
        if circ is None:
            mat = np.empty((m, m, 2, 2))
            for i in range(m):
                frame = np.stack([self.curve.tangent[i], self.curve.normal[i]])
                mat[i] = green_tensor_row(self.curve, self.curve.positions[i],
                                          tau, self_index=i, fd_frame=frame)
            return mat * self.curve.weights[None, :, None, None]
        frame = np.stack([self.curve.tangent[0], self.curve.normal[0]])
        row = green_tensor_row(self.curve, self.curve.positions[0], tau,
                               self_index=0, fd_frame=frame)
        ang = self.curve.theta
        c, s = np.cos(ang), np.sin(ang)
        rots = np.array([[c, -s], [s, c]]).transpose(2, 0, 1)  # (m, 2, 2)
        idx = (np.arange(m)[None, :] - np.arange(m)[:, None]) % m
        rolled = row[idx]                      # (m, m, 2, 2)
        mat = np.einsum("iab,ijbc,idc->ijad", rots, rolled, rots)
        return mat * self.curve.weights[None, :, None, None]

    def moment_matrices(self, cell):
        """(M0, M1): integrals of the tensor and of its linear-in-cell
        moment over lag cell `cell`, as (M, M, 2, 2) arrays."""
        return self._moments[cell]

    def tangential_moments(self, cell):
        """Scalar reductions t(P_i) . M . t(Q_j) of the cell moments, for
        the implicit tangential solve."""
        m0, m1 = self._moments[cell]
        t = self.curve.tangent
        return (np.einsum("ia,ijab,jb->ij", t, m0, t),
                np.einsum("ia,ijab,jb->ij", t, m1, t))

    def apply(self, phi_history, step):
        """U at the curve nodes at time index `step` (1-based cells).

        phi_history: (n_times, M, 2) with n_times > step; uses entries
        0..step.  Piecewise-linear product integration:
        U(t_n) = sum_cell M1_cell phi_{n-cell-1} + (M0-M1)_cell phi_{n-cell}.
        """
        m = self.curve.n_nodes
        out = np.zeros((m, 2))
        for cell in range(min(step, self.n_steps)):
            m0, m1 = self._moments[cell]
            newer = phi_history[step - cell]
            older = phi_history[step - cell - 1]
            out += np.einsum("ijad,jd->ia", m0 - m1, newer)
            out += np.einsum("ijad,jd->ia", m1, older)
        return out


def hydro_potential(curve, phi, times, x, t):
    """Off-boundary space-time potential of a tangential density.

    phi: (n_times, M, 2) samples on the uniform grid `times` (piecewise
    linear in time), or a callable phi(s) -> (M, 2).  x: (2,) or (N, 2)
    interior/exterior points; t must lie on the grid when phi is sampled.
    """
    x = np.asarray(x, dtype=float)
    single = (x.ndim == 1)
    X = np.atleast_2d(x)
    times = np.asarray(times, dtype=float)
    if callable(phi):
        phi_at = phi
    else:
        phi = np.asarray(phi, dtype=float)
        def phi_at(s):
            k = int(np.clip(np.searchsorted(times, s) - 1, 0, times.size - 2))
            wgt = (s - times[k]) / (times[k + 1] - times[k])
            wgt = float(np.clip(wgt, 0.0, 1.0))
            return (1 - wgt) * phi[k] + wgt * phi[k + 1]
    if t <= 0:
        return np.zeros(2) if single else np.zeros((X.shape[0], 2))
    nodes, wts = _GL6
    n_cells = max(8, int(np.ceil(t / (times[1] - times[0])))
                  if times.size > 1 else 8)
    bounds = np.sqrt(t) * np.sqrt(np.linspace(0.0, 1.0, n_cells + 1))
    out = np.zeros((X.shape[0], 2))
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        sig = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        sw = 0.5 * (hi - lo) * wts * 2.0 * sig
        for s, w in zip(sig, sw):
            tau = s * s
            dens = phi_at(t - tau) * curve.weights[:, None]
            for k, xx in enumerate(X):
                row = green_tensor_row(curve, xx, tau)
                out[k] += w * np.einsum("mad,md->a", row, dens)
    return out[0] if single else out
