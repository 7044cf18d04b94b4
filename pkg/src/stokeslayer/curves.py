"""Smooth closed boundary curves sampled at uniform parameter nodes.

All node calculus (tangents, normals, curvature, arclength weights) is
spectral: the curve is periodic and smooth, so FFT differentiation of the
node positions converges faster than any power of the node count.  The
trapezoid rule with the resulting arclength weights is the matching
spectrally-accurate quadrature for smooth integrands on the curve.
"""

import numpy as np
from scipy.spatial import cKDTree

from .errors import GeometryError, InvalidInputError

__all__ = ["BoundaryCurve"]


class BoundaryCurve:
    """Closed curve given by positions at theta_j = 2*pi*j/M, counterclockwise.

    Exposes per-node geometry:
      positions (M, 2), velocity (M, 2), speed (M,), tangent (M, 2),
      normal (M, 2) outward, curvature (M,) signed (positive for convex
      counterclockwise arcs), weights (M,) arclength quadrature weights.
    """

    def __init__(self, positions, check_self_intersection=True):
        positions = np.asarray(positions, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 2:
            raise InvalidInputError("curve positions must be (M, 2)")
        if positions.shape[0] < 8:
            raise InvalidInputError("need at least 8 curve nodes")
        if not np.all(np.isfinite(positions)):
            raise InvalidInputError("non-finite curve positions")
        m = positions.shape[0]
        self.n_nodes = m
        self.positions = positions
        self.theta = 2.0 * np.pi * np.arange(m) / m

        z = positions[:, 0] + 1j * positions[:, 1]
        self._coef = np.fft.fft(z)
        k = np.fft.fftfreq(m, d=1.0 / m)
        kd = k.copy()
        if m % 2 == 0:
            kd[m // 2] = 0.0  # Nyquist mode has no well-defined odd derivative
        dz = np.fft.ifft(1j * kd * self._coef)
        ddz = np.fft.ifft(-(k ** 2) * self._coef)
        self.velocity = np.column_stack([dz.real, dz.imag])
        self._accel = np.column_stack([ddz.real, ddz.imag])
        self.speed = np.hypot(dz.real, dz.imag)
        if self.speed.min() <= 1e-10 * max(self.speed.max(), 1.0):
            raise GeometryError("curve parametrization degenerates (speed ~ 0)")
        self.tangent = self.velocity / self.speed[:, None]
        area = 0.5 * np.sum(positions[:, 0] * self.velocity[:, 1]
                            - positions[:, 1] * self.velocity[:, 0])
        area *= 2.0 * np.pi / m
        if area <= 0:
            raise GeometryError(
                "curve must be parametrized counterclockwise (signed area > 0)")
        self.area = area
        # outward normal for a counterclockwise curve: tangent rotated by -90
        self.normal = np.column_stack([self.tangent[:, 1], -self.tangent[:, 0]])
        cross = (self.velocity[:, 0] * self._accel[:, 1]
                 - self.velocity[:, 1] * self._accel[:, 0])
        self.curvature = cross / self.speed ** 3
        if not np.all(np.isfinite(self.curvature)):
            raise GeometryError("curvature is not finite at the node scale")
        self.weights = self.speed * (2.0 * np.pi / m)
        self.length = float(self.weights.sum())
        if check_self_intersection:
            self._check_embedding()
        # outward check: divergence theorem gives integral of x . n = 2 area
        flux = float(np.sum(np.sum(positions * self.normal, axis=1)
                            * self.weights))
        if abs(flux - 2.0 * area) > 1e-6 * max(abs(area), 1.0):
            raise GeometryError("normals fail the outward orientation check")

    def _check_embedding(self):
        pts = self.positions
        m = self.n_nodes
        spacing = self.speed * (2.0 * np.pi / m)
        tree = cKDTree(pts)
        k = min(8, m)
        dists, idx = tree.query(pts, k=k)
        for col in range(1, k):
            sep = np.abs(idx[:, col] - np.arange(m))
            sep = np.minimum(sep, m - sep)
            clash = (sep > 3) & (dists[:, col] < 0.5 * spacing)
            if np.any(clash):
                raise GeometryError(
                    "curve self-intersects at the node resolution")

    # ------------------------------------------------------------------
    # constructors

    @classmethod
    def from_function(cls, fn, n_nodes=128, **kwargs):
        theta = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
        return cls(np.asarray(fn(theta), dtype=float), **kwargs)

    @classmethod
    def circle(cls, radius=1.0, n_nodes=128, center=(0.0, 0.0)):
        if radius <= 0:
            raise InvalidInputError("radius must be positive")
        c = np.asarray(center, dtype=float)
        return cls.from_function(
            lambda th: np.column_stack([c[0] + radius * np.cos(th),
                                        c[1] + radius * np.sin(th)]), n_nodes)

    @classmethod
    def ellipse(cls, a=2.0, b=1.0, n_nodes=128, center=(0.0, 0.0)):
        if a <= 0 or b <= 0:
            raise InvalidInputError("semi-axes must be positive")
        c = np.asarray(center, dtype=float)
        return cls.from_function(
            lambda th: np.column_stack([c[0] + a * np.cos(th),
                                        c[1] + b * np.sin(th)]), n_nodes)

    @classmethod
    def star(cls, n_arms=5, amplitude=0.3, n_nodes=256, radius=1.0):
        if not 0 <= amplitude < 1:
            raise InvalidInputError("star amplitude must be in [0, 1)")
        def fn(th):
            r = radius * (1.0 + amplitude * np.cos(n_arms * th))
            return np.column_stack([r * np.cos(th), r * np.sin(th)])
        return cls.from_function(fn, n_nodes)

    @classmethod
    def from_csv(cls, path, **kwargs):
        """Rows theta,x,y with a header; theta must be uniform on [0, 2pi)."""
        data = np.genfromtxt(path, delimiter=",", skip_header=1)
        if data.ndim != 2 or data.shape[1] != 3:
            raise InvalidInputError("curve CSV needs columns theta,x,y")
        order = np.argsort(data[:, 0])
        data = data[order]
        m = data.shape[0]
        expected = 2.0 * np.pi * np.arange(m) / m
        if np.abs(data[:, 0] - expected).max() > 1e-8:
            raise InvalidInputError("curve CSV thetas must be uniform on [0, 2pi)")
        return cls(data[:, 1:], **kwargs)

    def to_csv(self, path):
        rows = ["theta,x,y"]
        for th, (x, y) in zip(self.theta, self.positions):
            rows.append("%.17g,%.17g,%.17g" % (th, x, y))
        with open(path, "w") as fh:
            fh.write("\n".join(rows) + "\n")

    # ------------------------------------------------------------------
    # off-node evaluation (trigonometric interpolation)

    def _eval_series(self, theta, derivative=0):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        m = self.n_nodes
        k = np.fft.fftfreq(m, d=1.0 / m)
        coef = self._coef.copy()
        if derivative > 0:
            kd = k.copy()
            if m % 2 == 0 and derivative % 2 == 1:
                kd[m // 2] = 0.0
            coef = coef * (1j * kd) ** derivative
        phase = np.exp(1j * np.outer(theta, k))
        z = phase @ coef / m
        return np.column_stack([z.real, z.imag])

    def position(self, theta):
        return self._eval_series(theta, 0)

    def velocity_at(self, theta):
        return self._eval_series(theta, 1)

    # ------------------------------------------------------------------
    # point queries

    def contains(self, x):
        """Winding-number test; reliable away from the node spacing scale."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vecs = self.positions[None, :, :] - x[:, None, :]
        ang = np.arctan2(vecs[:, :, 1], vecs[:, :, 0])
        d = np.diff(np.concatenate([ang, ang[:, :1]], axis=1), axis=1)
        d = (d + np.pi) % (2.0 * np.pi) - np.pi
        winding = d.sum(axis=1) / (2.0 * np.pi)
        return np.abs(winding) > 0.5

    def nearest(self, x, newton_steps=12):
        """Foot point of x on the curve.

        Returns (theta, point, distance); seeded at the nearest node and
        refined by Newton on the normal-projection equation."""
        x = np.asarray(x, dtype=float)
        i0 = int(np.argmin(np.sum((self.positions - x) ** 2, axis=1)))
        th = self.theta[i0]
        for _ in range(newton_steps):
            p = self._eval_series([th], 0)[0]
            v = self._eval_series([th], 1)[0]
            a = self._eval_series([th], 2)[0]
            g = np.dot(p - x, v)
            dg = np.dot(v, v) + np.dot(p - x, a)
            if dg <= 0:
                break
            step = g / dg
            th -= np.clip(step, -np.pi / self.n_nodes * 4,
                          np.pi / self.n_nodes * 4)
            if abs(step) < 1e-14:
                break
        p = self._eval_series([th], 0)[0]
        return float(th % (2.0 * np.pi)), p, float(np.hypot(*(x - p)))
