"""Sampled space-time fields and Dini moduli.

A SampledField is the exchange format used by the norm estimators and the
CSV interface: values of a (possibly vector) function on a fixed set of
spatial points and a fixed time grid.
"""

import numpy as np

from .errors import DegenerateModulusError, InvalidInputError


class SampledField:
    """Values v[i, k, c] of component c at spatial point i and time k.

    points   : (N, d) array, d in {1, 2}; for boundary traces these are the
               curve positions in the plane (distances are chordal).
    times    : (M,) strictly increasing.
    values   : (N, M) or (N, M, C) array; stored internally as (N, M, C).
    """

    def __init__(self, points, times, values):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.ndim != 2 or points.shape[1] not in (1, 2):
            raise InvalidInputError("points must be (N,1) or (N,2)")
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.size < 1:
            raise InvalidInputError("times must be a 1d array")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise InvalidInputError("times must be strictly increasing")
        values = np.asarray(values, dtype=float)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.shape[:2] != (points.shape[0], times.size):
            raise InvalidInputError(
                "values shape %r does not match %d points x %d times"
                % (values.shape, points.shape[0], times.size))
        if not np.all(np.isfinite(points)) or not np.all(np.isfinite(times)) \
                or not np.all(np.isfinite(values)):
            raise InvalidInputError("non-finite entries in field data")
        self.points = points
        self.times = times
        self.values = values

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def n_times(self):
        return self.times.size

    @property
    def n_components(self):
        return self.values.shape[2]

    @classmethod
    def from_callable(cls, points, times, fn):
        """Sample fn(points, t) -> (N,) or (N, C) on the grid."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        times = np.asarray(times, dtype=float)
        cols = []
        for t in times:
            v = np.asarray(fn(points, float(t)), dtype=float)
            if v.ndim == 1:
                v = v[:, None]
            cols.append(v)
        values = np.stack(cols, axis=1)
        return cls(points, times, values)

    def component(self, c):
        return SampledField(self.points, self.times, self.values[:, :, c])

    def magnitude(self):
        """Euclidean magnitude over components, as a scalar field."""
        return SampledField(self.points, self.times,
                            np.linalg.norm(self.values, axis=2))

    def to_csv(self, path):
        write_field_csv(path, self)

    @classmethod
    def from_csv(cls, path):
        return read_field_csv(path)


def write_field_csv(path, field):
    """CSV layout: header x,y,t,v1[,v2]; one row per (point, time)."""
    pts = field.points
    if pts.shape[1] == 1:
        pts = np.column_stack([pts[:, 0], np.zeros(pts.shape[0])])
    ncomp = field.n_components
    if ncomp not in (1, 2):
        raise InvalidInputError("CSV format supports 1 or 2 components")
    header = "x,y,t," + ",".join("v%d" % (c + 1) for c in range(ncomp))
    rows = []
    for i in range(field.n_points):
        for k in range(field.n_times):
            vals = ",".join("%.17g" % field.values[i, k, c] for c in range(ncomp))
            rows.append("%.17g,%.17g,%.17g,%s"
                        % (pts[i, 0], pts[i, 1], field.times[k], vals))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        fh.write("\n".join(rows))
        fh.write("\n")


def read_field_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().lower().split(",")
        if header[:3] != ["x", "y", "t"] or len(header) not in (4, 5):
            raise InvalidInputError("bad CSV header %r" % header)
        ncomp = len(header) - 3
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != 3 + ncomp:
        raise InvalidInputError("CSV row width does not match header")
    xy = data[:, :2]
    t = data[:, 2]
    times = np.unique(t)
    # points in first-appearance order so round-trips are stable
    _, first = np.unique(xy, axis=0, return_index=True)
    pts = xy[np.sort(first)]
    n, m = pts.shape[0], times.size
    if n * m != data.shape[0]:
        raise InvalidInputError("CSV rows do not form a points x times grid")
    pidx = {tuple(p): i for i, p in enumerate(pts)}
    tidx = {tv: k for k, tv in enumerate(times)}
    values = np.full((n, m, ncomp), np.nan)
    for row in data:
        values[pidx[tuple(row[:2])], tidx[row[2]]] = row[3:]
    if np.any(np.isnan(values)):
        raise InvalidInputError("CSV grid has missing (point, time) entries")
    return SampledField(pts, times, values)


def _log_modulus(r, power):
    """1/(1+|ln r|)**power, evaluated so r -> 0+ gives the limit 0 silently."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        denom = (1.0 + np.abs(np.log(r))) ** power
    return np.where(np.isinf(denom), 0.0, 1.0 / denom)


class DiniModulus:
    """Increasing modulus eta on (0, r0] with integrable eta(r)/r.

    eval_fn is vectorized; below the smallest tabulated/validated radius the
    caller sees eval_fn unchanged (tabulated moduli clamp to their last value).
    """

    def __init__(self, eval_fn, r0=1.0, name="custom"):
        self.eval_fn = eval_fn
        self.r0 = float(r0)
        self.name = name
        self._sanity()

    def _sanity(self):
        r = np.geomspace(1e-12, self.r0, 40)
        vals = self(r)
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise DegenerateModulusError("modulus must be finite and >= 0")
        if np.any(np.diff(vals) < -1e-15):
            raise InvalidInputError("modulus must be nondecreasing")
        if vals[0] > 0.5 * vals[-1]:
            raise InvalidInputError(
                "modulus does not decay toward 0 at the smallest sample")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.asarray(self.eval_fn(np.minimum(r, self.r0)), dtype=float)
        return out

    @classmethod
    def log_squared(cls, r0=1.0):
        """eta(r) = 1/(1+|ln r|)^2, the classical Dini-but-not-Holder modulus."""
        return cls(lambda r: _log_modulus(r, 2), r0, name="log_squared")

    @classmethod
    def power(cls, p, r0=1.0):
        if p <= 0:
            raise InvalidInputError("power modulus needs p > 0")
        return cls(lambda r: r ** p, r0, name="power_%g" % p)

    @classmethod
    def linear(cls, r0=1.0):
        return cls.power(1.0, r0)

    @classmethod
    def log_inverse(cls, r0=1.0):
        """eta(r) = 1/(1+|ln r|): increasing and vanishing, but NOT Dini."""
        return cls(lambda r: _log_modulus(r, 1), r0, name="log_inverse")


def tabulated_modulus(radii, values, r0=None):
    """Modulus from a table; below the smallest radius the last (smallest)
    tabulated value is used, per the interface contract."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    order = np.argsort(radii)
    radii, values = radii[order], values[order]
    if np.any(values < 0):
        raise DegenerateModulusError("tabulated modulus has negative entries")
    if np.any(np.diff(values) < 0):
        raise InvalidInputError("tabulated modulus must be nondecreasing")
    r0 = float(r0 if r0 is not None else radii[-1])

    def ev(r):
        r = np.asarray(r, dtype=float)
        return np.interp(r, radii, values, left=values[0], right=values[-1])

    return DiniModulus(ev, r0, name="tabulated")
