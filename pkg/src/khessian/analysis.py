"""Barrier operators, admissibility-preserving operations, and geometric
diagnostics for conformally flat radial metrics.

The Pucci minimal operator P[u] = min(lambda) + delta * sum(lambda) with
delta = (n-k)/(n(k-1)) annihilates the barrier u0 = r^{2-n/k} exactly; the
p-Laplacian reduction uses p - 2 = n(k-1)/(n-k).  Volume diagnostics work
with the metric g = e^{-2w} g_e: geodesic radius s(rho) = int e^{-w}, ball
volume omega_n int e^{-n w} t^{n-1} dt, and the ratio Q = Vol / s^n whose
large-radius limit counts singular ends in units of omega_n / n.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, interpolate, optimize

from .radial import GridField, RadialProfile
from .symfunc import ConeParams

__all__ = [
    "pucci_delta",
    "pucci_min",
    "holder_barrier",
    "PLaplacianReport",
    "p_laplacian_check",
    "mollify",
    "pointwise_max_fields",
    "pointwise_max_profiles",
    "field_gradient",
    "field_hessian",
    "u_field_sigma",
    "u_field_admissible_mask",
    "HarnackEstimate",
    "harnack_ratio",
    "harnack_from_w_profile",
    "harnack_from_field",
    "VolumeCurve",
    "sphere_area",
    "volume_ratio",
    "annulus_volume",
    "EndCountResult",
    "end_count",
    "fit_volume_expansion",
]


# ---------------------------------------------------------------------------
# Pucci minimal operator and the Holder barrier
# ---------------------------------------------------------------------------

def pucci_delta(n: int, k: int) -> float:
    """delta = (n-k)/(n(k-1)), positive for n/2 < k < n and zero at k = n."""
    if k < 2:
        raise ValueError("Pucci delta requires k >= 2")
    return (n - k) / (n * (k - 1))


def pucci_min(hessian_eigs, delta: float) -> float:
    lam = np.asarray(hessian_eigs, dtype=float)
    return float(lam.min() + delta * lam.sum())


def holder_barrier(r, n: int, k: int):
    """Value and radial Hessian eigenvalues of the barrier u0 = r^{2-n/k}.

    Returns (u0, radial_eig, tangential_eig): the Hessian of a radial function
    has eigenvalue u0'' radially and u0'/r with multiplicity n-1.
    """
    r = np.asarray(r, dtype=float)
    alpha = 2.0 - n / k
    u0 = r**alpha
    radial = alpha * (alpha - 1.0) * r ** (alpha - 2.0)
    tangential = alpha * r ** (alpha - 2.0)
    return u0, radial, tangential


# ---------------------------------------------------------------------------
# p-Laplacian reduction
# ---------------------------------------------------------------------------

@dataclass
class PLaplacianReport:
    p: float
    ratio: np.ndarray          # Delta_p u / (u |u'|^{p-2}) per node
    inf_ratio: float
    nonnegative: bool


def p_laplacian_check(profile: RadialProfile, c_fd: float = 10.0) -> PLaplacianReport:
    """Evaluate the radial p-Laplacian of u = e^w with p - 2 = n(k-1)/(n-k).

    Expanding the flux derivative gives
        Delta_p u = |u'|^{p-2} [ (p-1) u'' + (n-1) u'/r ],
    so the reported ratio Delta_p u / (u |u'|^{p-2}) is
    [(p-1) u'' + (n-1) u'/r] / u.  On a flat background an admissible profile
    gives a nonnegative ratio.
    """
    n, k = profile.cone.n, profile.cone.k
    if k >= n:
        raise ValueError("p-Laplacian reduction needs k < n (p finite)")
    p = 2.0 + n * (k - 1) / (n - k)
    u = np.exp(profile.w)
    du = u * profile.dw
    d2u = u * (profile.d2w + profile.dw**2)
    ratio = ((p - 1.0) * d2u + (n - 1.0) * du / profile.r) / u
    tol = 0.0 if profile.analytic else c_fd * float(profile.local_spacing().max())
    return PLaplacianReport(p, ratio, float(ratio.min()), bool(ratio.min() >= -tol))


# ---------------------------------------------------------------------------
# Mollification and pointwise maxima
# ---------------------------------------------------------------------------

def _bump_offsets(dims: int, spacing: float, eps: float):
    m = int(math.floor(eps / spacing + 1e-12))
    offsets, weights = [], []
    for off in itertools.product(range(-m, m + 1), repeat=dims):
        s = math.sqrt(sum(o * o for o in off)) * spacing / eps
        if s <= 1.0:
            offsets.append(off)
            weights.append((1.0 - s * s) ** 4)
    w = np.array(weights)
    return m, offsets, w / w.sum()


def mollify(f: GridField, eps: float) -> GridField:
    """Discrete convolution with the radial bump kernel (1 - s^2)^4 on s in [0,1].

    The kernel is normalized to unit mass on the lattice, so constants are
    preserved exactly and linear fields up to rounding.  The output lives on
    the inner box with an eps-margin removed; on a flat background the
    u-gauge admissible cone is preserved.
    """
    if eps < 2.0 * f.spacing:
        raise ValueError("mollification radius must be at least two grid cells")
    m, offsets, weights = _bump_offsets(f.dims, f.spacing, eps)
    inner_shape = tuple(s - 2 * m for s in f.values.shape)
    if any(s < 3 for s in inner_shape):
        raise ValueError("field is too small for the requested mollification margin")
    out = np.zeros(inner_shape)
    for off, wgt in zip(offsets, weights):
        sl = tuple(slice(m + o, s - m + o) for o, s in zip(off, f.values.shape))
        out += wgt * f.values[sl]
    return GridField(f.spacing, out, f.origin + m * f.spacing)


def _kink_mask(diff: np.ndarray, cells: int) -> np.ndarray:
    """Nodes within a Chebyshev distance `cells` of a sign change of diff."""
    contact = np.zeros(diff.shape, dtype=bool)
    for axis in range(diff.ndim):
        lo = [slice(None)] * diff.ndim
        hi = [slice(None)] * diff.ndim
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        cross = diff[tuple(lo)] * diff[tuple(hi)] <= 0.0
        contact[tuple(lo)] |= cross
        contact[tuple(hi)] |= cross
    for _ in range(cells):
        grown = contact.copy()
        for axis in range(diff.ndim):
            lo = [slice(None)] * diff.ndim
            hi = [slice(None)] * diff.ndim
            lo[axis] = slice(None, -1)
            hi[axis] = slice(1, None)
            grown[tuple(lo)] |= contact[tuple(hi)]
            grown[tuple(hi)] |= contact[tuple(lo)]
        contact = grown
    return contact


def pointwise_max_fields(f: GridField, g: GridField, kink_cells: int = 3):
    """Nodewise maximum of two fields plus the mask of contact-set neighborhoods.

    Derivative-based admissibility checks are only meaningful away from the
    contact set, so the mask marks nodes within `kink_cells` grid cells of a
    sign change of f - g.
    """
    if f.values.shape != g.values.shape or f.spacing != g.spacing:
        raise ValueError("fields must share grid shape and spacing")
    values = np.maximum(f.values, g.values)
    mask = _kink_mask(f.values - g.values, kink_cells)
    return GridField(f.spacing, values, f.origin), mask


def pointwise_max_profiles(p: RadialProfile, q: RadialProfile, kink_cells: int = 3):
    """Nodewise maximum of two radial profiles on the same grid."""
    if len(p.r) != len(q.r) or np.abs(p.r - q.r).max() > 1e-12 * p.r[-1]:
        raise ValueError("profiles must share the radial grid")
    take_p = p.w >= q.w
    w = np.where(take_p, p.w, q.w)
    dw = np.where(take_p, p.dw, q.dw)
    d2w = np.where(take_p, p.d2w, q.d2w)
    diff = p.w - q.w
    mask = np.zeros(len(w), dtype=bool)
    cross = diff[:-1] * diff[1:] <= 0.0
    mask[:-1] |= cross
    mask[1:] |= cross
    for _ in range(kink_cells):
        grown = mask.copy()
        grown[:-1] |= mask[1:]
        grown[1:] |= mask[:-1]
        mask = grown
    out = RadialProfile(p.r.copy(), w, dw, d2w, p.cone, p.analytic and q.analytic)
    return out, mask


# ---------------------------------------------------------------------------
# u-gauge admissibility of grid fields (flat background)
# ---------------------------------------------------------------------------

def field_gradient(f: GridField):
    """Central-difference gradient at interior nodes; list of dims arrays."""
    h = f.spacing
    inner = tuple(slice(1, -1) for _ in range(f.dims))
    grads = []
    for axis in range(f.dims):
        up = [slice(1, -1)] * f.dims
        dn = [slice(1, -1)] * f.dims
        up[axis] = slice(2, None)
        dn[axis] = slice(None, -2)
        grads.append((f.values[tuple(up)] - f.values[tuple(dn)]) / (2 * h))
    return grads, inner


def field_hessian(f: GridField):
    """Central-difference Hessian entries at interior nodes: dict (i, j) -> array."""
    h = f.spacing
    H = {}
    for i in range(f.dims):
        up = [slice(1, -1)] * f.dims
        dn = [slice(1, -1)] * f.dims
        mid = tuple(slice(1, -1) for _ in range(f.dims))
        up[i] = slice(2, None)
        dn[i] = slice(None, -2)
        H[(i, i)] = (f.values[tuple(up)] - 2 * f.values[mid] + f.values[tuple(dn)]) / h**2
    for i in range(f.dims):
        for j in range(i + 1, f.dims):
            pp = [slice(1, -1)] * f.dims
            pm = [slice(1, -1)] * f.dims
            mp = [slice(1, -1)] * f.dims
            mm = [slice(1, -1)] * f.dims
            pp[i] = slice(2, None); pp[j] = slice(2, None)
            pm[i] = slice(2, None); pm[j] = slice(None, -2)
            mp[i] = slice(None, -2); mp[j] = slice(2, None)
            mm[i] = slice(None, -2); mm[j] = slice(None, -2)
            H[(i, j)] = (f.values[tuple(pp)] - f.values[tuple(pm)]
                         - f.values[tuple(mp)] + f.values[tuple(mm)]) / (4 * h**2)
    return H


def _stacked_sigma(M: np.ndarray, j: int) -> np.ndarray:
    """sigma_j of the eigenvalues of stacked d x d symmetric matrices (d <= 3)."""
    d = M.shape[-1]
    if j == 1:
        return np.trace(M, axis1=-2, axis2=-1)
    if j == 2:
        tr = np.trace(M, axis1=-2, axis2=-1)
        fro2 = (M * M).sum(axis=(-2, -1))
        return 0.5 * (tr**2 - fro2)
    if j == 3 and d == 3:
        return np.linalg.det(M)
    raise ValueError(f"sigma_{j} unsupported for stacked {d}x{d} matrices")


def u_field_sigma(f: GridField, cone: ConeParams):
    """sigma_1..sigma_k of the u-gauge matrix D^2 u - |Du|^2/(2u) I, flat g0.

    Requires field dimension equal to cone.n.  Returns (list of sigma arrays,
    interior slice) with finite-difference derivatives at interior nodes.
    """
    if f.dims != cone.n:
        raise ValueError("u-gauge check needs field dimension equal to cone.n")
    grads, inner = field_gradient(f)
    H = field_hessian(f)
    u = f.values[inner]
    if np.any(u <= 0.0):
        raise ValueError("u-gauge field must be positive")
    g2 = sum(g * g for g in grads)
    d = f.dims
    M = np.empty(u.shape + (d, d))
    for i in range(d):
        for jx in range(i, d):
            entry = H[(i, jx)].copy() if (i, jx) in H else H[(jx, i)].copy()
            if i == jx:
                entry -= g2 / (2.0 * u)
            M[..., i, jx] = entry
            M[..., jx, i] = entry
    sigmas = [_stacked_sigma(M, j) for j in range(1, cone.k + 1)]
    return sigmas, inner


def u_field_admissible_mask(f: GridField, cone: ConeParams, margin: float = 0.0,
                            strict: bool = False):
    """Per-interior-node cone membership of a flat u-gauge field."""
    sigmas, inner = u_field_sigma(f, cone)
    if strict:
        ok = np.ones(sigmas[0].shape, dtype=bool)
        for s in sigmas:
            ok &= s > margin
    else:
        ok = np.ones(sigmas[0].shape, dtype=bool)
        for s in sigmas:
            ok &= s >= -margin
    return ok, inner


# ---------------------------------------------------------------------------
# Harnack ratio
# ---------------------------------------------------------------------------

@dataclass
class HarnackEstimate:
    c_est: float
    pair: tuple
    alpha: float


def harnack_ratio(coords, chi, cone: ConeParams, min_sep: float = 0.0) -> HarnackEstimate:
    """Empirical Harnack constant sup over pairs of log(chi(x)/chi(y)) / |x-y|^alpha.

    alpha = 2 - n/k.  Pairs closer than min_sep are skipped (short distances
    amplify finite-difference noise through the sublinear exponent).  The
    estimate is invariant under global scaling chi -> c * chi.  Pair
    enumeration runs in row blocks, so large grids stay within memory.
    """
    coords = np.asarray(coords, dtype=float)
    chi = np.asarray(chi, dtype=float)
    if np.any(chi <= 0.0):
        raise ValueError("chi must be positive")
    if coords.ndim == 1:
        coords = coords[:, None]
    alpha = cone.alpha
    logchi = np.log(chi)
    m = len(logchi)
    block = max(1, int(4e6) // max(m, 1))
    best, best_pair = -np.inf, (0, 0)
    for start in range(0, m, block):
        stop = min(start + block, m)
        diff = coords[start:stop, None, :] - coords[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        num = np.abs(logchi[start:stop, None] - logchi[None, :])
        mask = dist > max(min_sep, 0.0)
        ratios = np.where(mask, num / np.where(mask, dist, 1.0) ** alpha, -np.inf)
        flat = int(np.argmax(ratios))
        i, j = divmod(flat, m)
        if ratios[i, j] > best:
            best = float(ratios[i, j])
            best_pair = (start + i, j)
    return HarnackEstimate(best, best_pair, alpha)


def harnack_from_w_profile(p: RadialProfile, min_sep: float = 0.0) -> HarnackEstimate:
    """Harnack estimate of the conformal factor chi = e^{-2w} of a radial profile."""
    return harnack_ratio(p.r, np.exp(-2.0 * p.w), p.cone, min_sep)


def harnack_from_field(f: GridField, cone: ConeParams,
                       min_sep: float | None = None) -> HarnackEstimate:
    """Harnack estimate of a positive chi-gauge grid field.

    Pairs closer than two grid cells are skipped by default: the sublinear
    exponent amplifies finite-difference-scale noise at short distances.
    """
    if min_sep is None:
        min_sep = 2.0 * f.spacing
    return harnack_ratio(f.node_coordinates(), f.values.ravel(), cone, min_sep)


# ---------------------------------------------------------------------------
# Volume ratio diagnostics
# ---------------------------------------------------------------------------

def sphere_area(n: int) -> float:
    """Area omega_n of the unit sphere S^{n-1}."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


@dataclass
class VolumeCurve:
    r: np.ndarray              # geodesic radii
    Q: np.ndarray              # Vol / r^n
    omega_n: float
    n: int
    mode: str                  # "origin" or "end"


def _w_callable(w, n: int):
    if callable(w):
        return w
    if isinstance(w, RadialProfile):
        interp = interpolate.PchipInterpolator(w.r, w.w, extrapolate=True)
        return lambda t: interp(t)
    raise TypeError("w must be a callable or a RadialProfile")


def _quad(fn, a: float, b: float) -> float:
    with warnings.catch_warnings():
        # divergence is reported through the accuracy check below
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(fn, a, b, limit=400, epsabs=1e-13, epsrel=1e-11)
    if not np.isfinite(val) or err > max(1e-8 * abs(val), 1e-9):
        raise ValueError(f"quadrature did not converge on [{a:.3g}, {b:.3g}]")
    return val


def volume_ratio(w, n: int, s_values, mode: str = "origin",
                 rho_ref: float = 1.0) -> VolumeCurve:
    """Volume ratio curve Q(s) = Vol(B_s) / s^n of the metric e^{-2w} g_e.

    mode "origin": balls centered at a regular origin, s(rho) and Vol(rho)
    integrated from 0 (a non-integrable length density at the center raises).
    mode "end": annulus-anchored curve for a metric with a singular center,
    measuring geodesic radius and volume inward from the reference sphere
    rho_ref; each fundamental-type end contributes omega_n / n in the limit.
    """
    wf = _w_callable(w, n)
    omega = sphere_area(n)
    s_values = np.asarray(s_values, dtype=float)
    if np.any(s_values <= 0.0) or np.any(np.diff(s_values) <= 0.0):
        raise ValueError("geodesic radii must be positive and increasing")
    length = lambda t: math.exp(-wf(t))
    volden = lambda t: omega * math.exp(-n * wf(t)) * t ** (n - 1)

    if mode == "origin":
        probe = _quad(length, 0.0, min(1e-3, 0.1 * rho_ref))
        if not np.isfinite(probe):
            raise ValueError("length density is not integrable at the center")

        def s_of_rho(rho):
            return _quad(length, 0.0, rho)

        def vol_of_rho(rho):
            return _quad(volden, 0.0, rho)

        increasing = True
    elif mode == "end":
        def s_of_rho(rho):
            return _quad(length, rho, rho_ref)

        def vol_of_rho(rho):
            return _quad(volden, rho, rho_ref)

        increasing = False
    else:
        raise ValueError("mode must be 'origin' or 'end'")

    Q = np.empty(len(s_values))
    for idx, s in enumerate(s_values):
        if increasing:
            hi = max(2.0 * s, 1e-3)
            while s_of_rho(hi) < s:
                hi *= 2.0
                if hi > 1e12:
                    raise ValueError("geodesic radius unreachable; metric compactifies")
            rho = optimize.brentq(lambda x: s_of_rho(x) - s, 1e-300, hi, xtol=1e-14, rtol=8.9e-16)
        else:
            lo = rho_ref * 0.5
            while s_of_rho(lo) < s:
                lo *= 0.5
                if lo < 1e-300:
                    raise ValueError("geodesic radius unreachable from the reference sphere")
            rho = optimize.brentq(lambda x: s_of_rho(x) - s, lo, rho_ref * (1 - 1e-15),
                                  xtol=1e-300, rtol=8.9e-16)
        Q[idx] = vol_of_rho(rho) / s**n
    return VolumeCurve(s_values, Q, omega, n, mode)


def annulus_volume(w, r1: float, r2: float, n: int) -> float:
    """Volume of the annulus r1 < |x| < r2 in the metric e^{-2w} g_e."""
    if not 0.0 < r1 < r2:
        raise ValueError("need 0 < r1 < r2")
    wf = _w_callable(w, n)
    omega = sphere_area(n)
    return _quad(lambda t: omega * math.exp(-n * wf(t)) * t ** (n - 1), r1, r2)


@dataclass
class EndCountResult:
    m: int
    ratio: float               # n Q(r_max) / omega_n before rounding
    residual: float
    status: str                # "converged" or "inconclusive"


def end_count(curve: VolumeCurve, tail_frac: float = 0.25,
              slope_tol: float = 0.05) -> EndCountResult:
    """Estimate the number of singular ends from the tail of a volume curve.

    Rounds n Q(r_max) / omega_n to the nearest integer; if Q still varies by
    more than slope_tol (relatively) over the trailing tail_frac of the
    curve, the result is flagged inconclusive.
    """
    ratio = curve.n * float(curve.Q[-1]) / curve.omega_n
    m = int(round(ratio))
    residual = abs(ratio - m)
    tail = curve.Q[curve.r >= (1.0 - tail_frac) * curve.r[-1]]
    variation = float(np.ptp(tail) / max(abs(curve.Q[-1]), 1e-300))
    status = "converged" if variation <= slope_tol else "inconclusive"
    return EndCountResult(m, ratio, residual, status)


def fit_volume_expansion(curve: VolumeCurve):
    """Fit Q(s) = q0 (1 + c2 s^2 + c4 s^4); returns (q0, c2).

    For a metric with scalar curvature R at the center the quadratic
    coefficient is -R / (6 (n + 2)).
    """
    s = curve.r
    A = np.stack([np.ones_like(s), s**2, s**4], axis=1)
    beta, *_ = np.linalg.lstsq(A, curve.Q, rcond=None)
    q0 = float(beta[0])
    return q0, float(beta[1] / q0)
