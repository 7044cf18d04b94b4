"""Discrete parabolic Holder and Dini norm estimators.

All estimators are suprema of difference quotients over sampled pairs
(chordal distances), so they are lower bounds of the continuum norms that
converge under refinement. `mode="exact"` scans every pair; `mode="screened"`
restricts to dyadic index separations and is meant for stopping criteria and
progress monitoring, not for reported norms.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DegenerateModulusError, DiniDivergenceError, InvalidInputError
from .fields import SampledField


def _check_alpha(alpha, allow_zero=False, allow_one=True):
    lo_ok = alpha > 0 or (allow_zero and alpha == 0)
    hi_ok = alpha < 1 or (allow_one and alpha == 1)
    if not (lo_ok and hi_ok):
        raise InvalidInputError("alpha=%r outside the admissible range" % (alpha,))


def _pair_indices(n, mode):
    """Index pairs (i, j), i < j, ordered so argmax tie-breaks to the lowest."""
    if n < 2:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    if mode == "exact":
        iu = np.triu_indices(n, k=1)
        return iu[0], iu[1]
    if mode == "screened":
        ii, jj = [], []
        s = 1
        while s < n:
            i = np.arange(0, n - s)
            ii.append(i)
            jj.append(i + s)
            s *= 2
        return np.concatenate(ii), np.concatenate(jj)
    raise InvalidInputError("unknown mode %r" % (mode,))


def _pair_distances(points, ii, jj):
    d = np.linalg.norm(points[ii] - points[jj], axis=1)
    if np.any(d <= 0):
        raise InvalidInputError("coincident spatial points in field")
    return d


def _field_diff_sup(values, ii, jj):
    """sup over components of |v_i - v_j| per (pair, time): returns (P, M)."""
    diff = values[ii] - values[jj]          # (P, M, C)
    return np.linalg.norm(diff, axis=2)


@dataclass
class HolderReport:
    alpha: float
    sup_norm: float
    space_seminorm: float
    time_seminorm: float
    mixed_seminorm: float = 0.0
    space_pair: tuple = (0, 0, 0, 0)        # (i, j, k_time, k_time)
    time_pair: tuple = (0, 0, 0, 0)         # (i, i, k_s, k_t)
    mixed_pair: tuple = (0, 0, 0, 0)
    extras: dict = dc_field(default_factory=dict)

    @property
    def parabolic_norm(self):
        return self.sup_norm + self.space_seminorm + self.time_seminorm

    def to_dict(self):
        i, j, s, t = self.space_pair
        if self.time_seminorm > 0 or self.space_seminorm == 0:
            # report the pair attaining the larger seminorm
            if self.time_seminorm > self.space_seminorm:
                i, j, s, t = self.time_pair
        return {
            "norms": {
                "sup": self.sup_norm,
                "space": self.space_seminorm,
                "time": self.time_seminorm,
                "mixed": self.mixed_seminorm,
            },
            "pair": {"i": int(i), "j": int(j), "s": int(s), "t": int(t)},
        }


def space_seminorm(field, alpha, mode="exact", return_pair=False):
    """sup over t and point pairs of |f(x,t)-f(y,t)| / |x-y|^alpha."""
    _check_alpha(alpha)
    ii, jj = _pair_indices(field.n_points, mode)
    if ii.size == 0:
        return (0.0, (0, 0, 0, 0)) if return_pair else 0.0
    d = _pair_distances(field.points, ii, jj)
    q = _field_diff_sup(field.values, ii, jj) / d[:, None] ** alpha
    flat = int(np.argmax(q))
    p, k = np.unravel_index(flat, q.shape)
    val = float(q[p, k])
    if return_pair:
        return val, (int(ii[p]), int(jj[p]), int(k), int(k))
    return val


def time_seminorm(field, alpha, mode="exact", return_pair=False):
    """sup over x and time pairs of |f(x,t)-f(x,s)| / |t-s|^(alpha/2)."""
    _check_alpha(alpha, allow_one=False)
    kk, ll = _pair_indices(field.n_times, mode)
    if kk.size == 0:
        return (0.0, (0, 0, 0, 0)) if return_pair else 0.0
    dt = (field.times[ll] - field.times[kk]) ** (alpha / 2.0)
    diff = np.linalg.norm(field.values[:, ll] - field.values[:, kk], axis=2)
    q = diff / dt[None, :]
    flat = int(np.argmax(q))
    i, p = np.unravel_index(flat, q.shape)
    val = float(q[i, p])
    if return_pair:
        return val, (int(i), int(i), int(kk[p]), int(ll[p]))
    return val


def sup_norm(field):
    return float(np.max(np.linalg.norm(field.values, axis=2)))


def parabolic_norm(field, alpha, mode="exact"):
    """Sup norm plus both parabolic seminorms, with attaining pairs."""
    sv, sp = space_seminorm(field, alpha, mode, return_pair=True)
    tv, tp = time_seminorm(field, alpha, mode, return_pair=True)
    return HolderReport(alpha=alpha, sup_norm=sup_norm(field),
                        space_seminorm=sv, time_seminorm=tv,
                        space_pair=sp, time_pair=tp)


def dini_seminorm(field, alpha, eta, mode="exact", return_pair=False):
    """sup over t, pairs of |f(x,t)-f(y,t)| / (|x-y|^alpha eta(|x-y|)).

    alpha = 0 gives the plain Dini seminorm.
    """
    _check_alpha(alpha, allow_zero=True)
    ii, jj = _pair_indices(field.n_points, mode)
    if ii.size == 0:
        return (0.0, (0, 0, 0, 0)) if return_pair else 0.0
    d = _pair_distances(field.points, ii, jj)
    w = eta(d)
    if np.any(w <= 0):
        raise DegenerateModulusError("eta vanished at a sampled separation")
    q = _field_diff_sup(field.values, ii, jj) / (d ** alpha * w)[:, None]
    flat = int(np.argmax(q))
    p, k = np.unravel_index(flat, q.shape)
    val = float(q[p, k])
    if return_pair:
        return val, (int(ii[p]), int(jj[p]), int(k), int(k))
    return val


def mixed_boundary_seminorm(field, alpha, eta, mode="exact",
                            return_pair=False, chunk=64):
    """sup of |f(P,t)-f(P,s)-f(Q,t)+f(Q,s)| / (|t-s|^(alpha/2) eta(|P-Q|))
    over point pairs (P,Q) and time pairs (s,t).

    Separable fields f(P,t) = a(P)+b(t) have zero mixed seminorm.
    """
    _check_alpha(alpha, allow_one=False)
    ii, jj = _pair_indices(field.n_points, mode)
    kk, ll = _pair_indices(field.n_times, mode)
    if ii.size == 0 or kk.size == 0:
        return (0.0, (0, 0, 0, 0, 0)) if return_pair else 0.0
    d = _pair_distances(field.points, ii, jj)
    w = eta(d)
    if np.any(w <= 0):
        raise DegenerateModulusError("eta vanished at a sampled separation")
    dtw = (field.times[ll] - field.times[kk]) ** (alpha / 2.0)
    best, best_idx = -1.0, (0, 0)
    # chunk over time pairs to bound the (point-pairs x time-pairs) workspace
    for start in range(0, kk.size, chunk):
        sl = slice(start, min(start + chunk, kk.size))
        dt_block = field.values[:, ll[sl]] - field.values[:, kk[sl]]  # (N,B,C)
        cross = dt_block[ii] - dt_block[jj]                            # (P,B,C)
        q = np.linalg.norm(cross, axis=2) / (w[:, None] * dtw[None, sl])
        flat = int(np.argmax(q))
        p, b = np.unravel_index(flat, q.shape)
        if q[p, b] > best:
            best = float(q[p, b])
            best_idx = (p, start + b)
    p, b = best_idx
    if return_pair:
        return best, (int(ii[p]), int(jj[p]), int(kk[b]), int(ll[b]))
    return best


def dini_integral(eta, rel_tol=1e-6, max_halvings=4000, gl_order=12):
    """integral_0^r0 of eta(r)/r dr by geometric blocks in log r.

    The lower limit is pushed down by halving the smallest abscissa until a
    halving changes the running sum by less than rel_tol (relative); if that
    never happens the modulus is not Dini and DiniDivergenceError carries the
    partial sums.
    """
    x, w = np.polynomial.legendre.leggauss(gl_order)
    # integral over [u0 - ln2, u0] of eta(e^u) du per halving block
    ln2 = np.log(2.0)
    u_hi = np.log(eta.r0)
    total = 0.0
    partial = []
    for k in range(max_halvings):
        lo, hi = u_hi - (k + 1) * ln2, u_hi - k * ln2
        u = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        block = 0.5 * (hi - lo) * float(np.sum(w * eta(np.exp(u))))
        total += block
        partial.append(total)
        if k > 2 and total > 0 and block < rel_tol * total:
            return total
    raise DiniDivergenceError(
        "Dini integral did not converge after %d halvings of the smallest "
        "abscissa (last relative increment %.3e)"
        % (max_halvings, block / max(total, 1e-300)), partial)


def embedding_constant(field, alpha_hi, alpha_lo):
    """diam^(alpha_hi - alpha_lo): Holder-alpha_hi controls alpha_lo on a
    bounded sample set with this constant."""
    if not 0 <= alpha_lo < alpha_hi <= 1:
        raise InvalidInputError("need 0 <= alpha_lo < alpha_hi <= 1")
    pts = field.points
    diam = 0.0
    for i in range(pts.shape[0]):
        diam = max(diam, float(np.max(np.linalg.norm(pts - pts[i], axis=1))))
    return diam ** (alpha_hi - alpha_lo)
