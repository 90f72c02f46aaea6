"""Radial reduction of the conformal k-Hessian operator.

For a radial factor w(r) the curvature matrix is diagonal with eigenvalue
b = w'/r - w'^2/2 of multiplicity n-1 and a = w'' + w'^2/2 in the radial
direction, so

    sigma_k = C(n-1, k) b^k + C(n-1, k-1) a b^{k-1}.

In the supercritical range k > n/2 membership of (b, ..., b, a) in the closed
cone is equivalent to b >= 0 together with a + theta b >= 0, theta = (n-k)/k,
because (n-j)/j decreases in j.  This module also hosts the sublevel-set
radial envelope and the singularity classifier (fundamental 2 log r + C
versus Holder with exponent 2 - n/k).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .symfunc import ConeParams

__all__ = [
    "RadialProfile",
    "RadialAB",
    "GridField",
    "EnvelopeProfile",
    "SingularityReport",
    "MonotoneReport",
    "EnvelopeCheck",
    "ab_reduce",
    "sigma_k_radial",
    "radial_admissible",
    "check_rw_monotone",
    "classify_singularity",
    "radial_envelope",
    "envelope_viscosity_check",
    "quadratic_fit_derivatives",
    "geometric_grid",
    "save_profile_csv",
    "load_profile_csv",
]

# Default multiplier for finite-difference inequality tolerances tau = c_fd * h.
DEFAULT_C_FD = 10.0


def quadratic_fit_derivatives(x, f):
    """First and second derivatives from the local quadratic through 3 nodes.

    Interior nodes use the centered window, endpoints the one-sided window;
    this reproduces standard central differences on uniform grids and stays
    second order (first derivative) on smoothly graded ones.
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    m = len(x)
    if m < 3:
        raise ValueError("need at least 3 nodes for finite differences")
    d1 = np.empty(m)
    d2 = np.empty(m)
    idx = np.clip(np.arange(m), 1, m - 2)
    x0, x1, x2 = x[idx - 1], x[idx], x[idx + 1]
    f0, f1, f2 = f[idx - 1], f[idx], f[idx + 1]
    c0 = 1.0 / ((x0 - x1) * (x0 - x2))
    c1 = 1.0 / ((x1 - x0) * (x1 - x2))
    c2 = 1.0 / ((x2 - x0) * (x2 - x1))
    xe = x
    d1 = f0 * c0 * (2 * xe - x1 - x2) + f1 * c1 * (2 * xe - x0 - x2) + f2 * c2 * (2 * xe - x0 - x1)
    d2 = 2.0 * (f0 * c0 + f1 * c1 + f2 * c2)
    return d1, d2


def geometric_grid(r_max: float, r_min: float, q: float = 0.8) -> np.ndarray:
    """Geometric grid r_max * q^i down to r_min, returned increasing."""
    if not (0 < q < 1 and 0 < r_min < r_max):
        raise ValueError("need 0 < q < 1 and 0 < r_min < r_max")
    count = int(math.floor(math.log(r_min / r_max) / math.log(q))) + 1
    pts = r_max * q ** np.arange(count + 1)
    return np.sort(pts[pts >= r_min * (1 - 1e-12)])


@dataclass
class RadialProfile:
    """Sampled radial factor w(r) with derivative data on an increasing grid."""

    r: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    d2w: np.ndarray
    cone: ConeParams
    analytic: bool = False

    @classmethod
    def from_samples(cls, r, w, n: int, k: int, dw=None, d2w=None) -> "RadialProfile":
        r = np.asarray(r, dtype=float)
        w = np.asarray(w, dtype=float)
        if r.ndim != 1 or r.shape != w.shape:
            raise ValueError("r and w must be matching 1-d arrays")
        if r[0] <= 0.0 or np.any(np.diff(r) <= 0.0):
            raise ValueError("grid must be positive and strictly increasing")
        analytic = dw is not None and d2w is not None
        if not analytic:
            if len(r) < 3:
                raise ValueError("finite-difference mode needs at least 3 nodes")
            dw, d2w = quadratic_fit_derivatives(r, w)
        return cls(r, w, np.asarray(dw, dtype=float), np.asarray(d2w, dtype=float),
                   ConeParams(n, k), analytic)

    @classmethod
    def from_callables(cls, r, n: int, k: int, w, dw, d2w) -> "RadialProfile":
        r = np.asarray(r, dtype=float)
        return cls.from_samples(r, w(r), n, k, dw=dw(r), d2w=d2w(r))

    def local_spacing(self) -> np.ndarray:
        h = np.diff(self.r)
        return np.r_[h[0], np.maximum(h[:-1], h[1:]), h[-1]]


@dataclass
class RadialAB:
    """Radial eigenvalue pair: a = w'' + w'^2/2, b = w'/r - w'^2/2."""

    a: np.ndarray
    b: np.ndarray


def ab_reduce(p: RadialProfile) -> RadialAB:
    a = p.d2w + 0.5 * p.dw**2
    b = p.dw / p.r - 0.5 * p.dw**2
    return RadialAB(a, b)


def sigma_k_radial(ab: RadialAB, cone: ConeParams) -> np.ndarray:
    """sigma_k of the radial spectrum (b, ..., b, a)."""
    n, k = cone.n, cone.k
    bk = ab.b ** (k - 1)
    return math.comb(n - 1, k) * bk * ab.b + math.comb(n - 1, k - 1) * ab.a * bk


def sigma_k_radial_gradients(ab: RadialAB, cone: ConeParams):
    """(d sigma/d a, d sigma/d b) of the radial sigma_k, used by solver Jacobians."""
    n, k = cone.n, cone.k
    b = ab.b
    dsig_da = math.comb(n - 1, k - 1) * b ** (k - 1)
    dsig_db = k * math.comb(n - 1, k) * b ** (k - 1)
    if k >= 2:
        dsig_db = dsig_db + (k - 1) * math.comb(n - 1, k - 1) * ab.a * b ** (k - 2)
    return dsig_da, dsig_db


def radial_admissible(ab: RadialAB, cone: ConeParams, strict: bool = False,
                      tol: float = 0.0) -> np.ndarray:
    """Per-node cone membership of the radial spectrum (supercritical range only)."""
    cone.require_supercritical()
    combo = ab.a + cone.theta * ab.b
    if strict:
        return (ab.b > tol) & (combo > tol)
    return (ab.b >= -tol) & (combo >= -tol)


@dataclass
class MonotoneReport:
    rw: np.ndarray
    tol: float
    min_value: float
    max_value: float
    worst_decrease: float
    bounds_ok: bool
    monotone_ok: bool

    @property
    def passed(self) -> bool:
        return self.bounds_ok and self.monotone_ok


def check_rw_monotone(p: RadialProfile, c_fd: float = DEFAULT_C_FD) -> MonotoneReport:
    """Verify 0 <= r w' <= 2 and discrete monotonicity of r w' up to FD tolerance."""
    rw = p.r * p.dw
    tol = 0.0 if p.analytic else c_fd * float(p.local_spacing().max())
    tol = max(tol, 1e-12 * max(1.0, float(np.abs(rw).max())))
    decreases = np.diff(rw)
    worst = float(-decreases.min()) if len(decreases) else 0.0
    return MonotoneReport(
        rw=rw,
        tol=tol,
        min_value=float(rw.min()),
        max_value=float(rw.max()),
        worst_decrease=worst,
        bounds_ok=bool(rw.min() >= -tol and rw.max() <= 2.0 + tol),
        monotone_ok=bool(worst <= tol),
    )


@dataclass
class SingularityReport:
    klass: str                      # "fundamental" or "holder"
    C: float | None
    alpha_est: float | None
    saturated: bool
    diagnostics: dict


def _fd_cone_slack(r, dw, h, c_fd: float) -> np.ndarray:
    """Finite-difference slack for discrete cone checks.

    Models first-derivative noise (h s^2) plus the second-derivative noise of
    graded grids near singular centers (h^2 s^4), with the slope scale s
    capped at the admissible ceiling 2/r so inadmissible steepness cannot
    inflate its own tolerance.
    """
    s = np.maximum(1.0, np.minimum(np.abs(dw), 2.0 / r))
    return c_fd * (h * s**2 + h**2 * s**4)


def _admissibility_tolerances(p: RadialProfile, c_fd: float) -> np.ndarray:
    """Per-node slack for cone checks; analytic derivatives get a rounding floor."""
    if p.analytic:
        return 1e-11 * np.maximum(1.0, p.dw**2 + np.abs(p.d2w))
    return _fd_cone_slack(p.r, p.dw, p.local_spacing(), c_fd)


def classify_singularity(p: RadialProfile, eps_class: float = 0.05,
                         c_fd: float = DEFAULT_C_FD) -> SingularityReport:
    """Classify an admissible radial profile near r -> 0.

    The extrapolated limit of r w' decides the dichotomy: >= 2 - eps_class
    means the fundamental singularity w = 2 log r + C (offset fitted from the
    innermost nodes); anything smaller is the Holder branch, whose exponent
    estimate 1 + slope comes from a log-log fit of w'.
    """
    ab = ab_reduce(p)
    tol = _admissibility_tolerances(p, c_fd)
    ok = (ab.b >= -tol) & (ab.a + p.cone.theta * ab.b >= -tol)
    if not np.all(ok):
        worst = int(np.argmin(np.minimum(ab.b + tol, ab.a + p.cone.theta * ab.b + tol)))
        raise ValueError(
            "profile is not admissible near r={:.3e}: b={:.3e}, a+theta*b={:.3e}".format(
                p.r[worst], ab.b[worst], ab.a[worst] + p.cone.theta * ab.b[worst])
        )

    rw = p.r * p.dw
    s0, s1, s2 = rw[2], rw[1], rw[0]       # decreasing radius order
    denom = s2 - 2.0 * s1 + s0
    if abs(denom) > 1e-12 * max(1.0, abs(s2)):
        limit = s2 - (s2 - s1) ** 2 / denom     # Aitken extrapolation
    else:
        limit = s2
    diagnostics = {"rw_limit": float(limit), "rw_inner": [float(s2), float(s1), float(s0)]}

    if limit >= 2.0 - eps_class:
        offsets = p.w[:3] - 2.0 * np.log(p.r[:3])
        C = float(np.mean(offsets))
        diagnostics["offset_spread"] = float(np.ptp(offsets))
        return SingularityReport("fundamental", C, None, False, diagnostics)

    # Holder branch: fit log w' ~ log c - theta_hat log r on the usable nodes.
    mask = p.dw > 1e-13 * max(1.0, float(np.abs(p.w).max()))
    if mask.sum() < 3:
        diagnostics["fit_nodes"] = int(mask.sum())
        return SingularityReport("holder", None, 1.0, True, diagnostics)
    x = np.log(p.r[mask])
    y = np.log(p.dw[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    alpha = 1.0 + float(slope)
    saturated = alpha >= 1.0
    alpha = min(alpha, 1.0)
    diagnostics.update(fit_slope=float(slope), fit_intercept=float(intercept),
                       fit_residual=resid, fit_nodes=int(mask.sum()))
    return SingularityReport("holder", None, alpha, saturated, diagnostics)


# ---------------------------------------------------------------------------
# Cartesian grid fields and the radial envelope
# ---------------------------------------------------------------------------

@dataclass
class GridField:
    """Scalar samples on a uniform Cartesian box (2 or 3 dimensions)."""

    spacing: float
    values: np.ndarray
    origin: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim not in (2, 3):
            raise ValueError("grid fields must be 2- or 3-dimensional")
        if self.spacing <= 0.0:
            raise ValueError("spacing must be positive")
        if self.origin is None:
            # Center the box on the coordinate origin by default.
            self.origin = -0.5 * self.spacing * (np.array(self.values.shape) - 1.0)
        self.origin = np.asarray(self.origin, dtype=float)
        if self.origin.shape != (self.values.ndim,):
            raise ValueError("origin length must match field dimension")

    @property
    def dims(self) -> int:
        return self.values.ndim

    def axes(self):
        return [self.origin[d] + self.spacing * np.arange(s)
                for d, s in enumerate(self.values.shape)]

    def node_coordinates(self) -> np.ndarray:
        """(num_nodes, dims) array of node coordinates, row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @classmethod
    def from_function(cls, fn, spacing: float, shape, origin=None) -> "GridField":
        f = cls(spacing, np.zeros(shape), origin)
        coords = f.node_coordinates()
        f.values = fn(coords).reshape(shape)
        return f

    def save_raw(self, path):
        with open(path, "w") as fh:
            fh.write(f"dims {self.dims}\n")
            fh.write("shape " + " ".join(str(s) for s in self.values.shape) + "\n")
            fh.write(f"spacing {self.spacing:.16e}\n")
            fh.write("origin " + " ".join(f"{x:.16e}" for x in self.origin) + "\n")
            for row in self.values.reshape(self.values.shape[0], -1):
                fh.write(" ".join(f"{x:.16e}" for x in row) + "\n")

    @classmethod
    def load_raw(cls, path) -> "GridField":
        with open(path) as fh:
            header = {}
            pos = fh.tell()
            for _ in range(4):
                line = fh.readline()
                key, *rest = line.split()
                if key in ("dims", "shape", "spacing", "origin"):
                    header[key] = rest
                    pos = fh.tell()
                else:
                    fh.seek(pos)
                    break
            data = np.loadtxt(fh).ravel()
        shape = tuple(int(s) for s in header["shape"])
        origin = None
        if "origin" in header:
            origin = np.array([float(x) for x in header["origin"]])
        return cls(float(header["spacing"][0]), data.reshape(shape), origin)


@dataclass
class EnvelopeProfile:
    """Radial envelope w~(r): running supremum of a field over closed balls.

    r_attained holds the distance of the node realizing each supremum; the
    (r_attained, wtilde) pairs sample the exact envelope to second order in
    the grid spacing, while plain r carries the O(h) ball-quantization lag.
    """

    r: np.ndarray
    wtilde: np.ndarray
    r_attained: np.ndarray
    provenance: dict

    def attained_samples(self):
        """Deduplicated (r_attained, wtilde) samples on a strictly increasing grid."""
        keep = np.r_[True, np.diff(self.r_attained) > 1e-12]
        keep &= self.r_attained > 1e-12
        return self.r_attained[keep], self.wtilde[keep]


def radial_envelope(f: GridField, center, radii=None) -> EnvelopeProfile:
    """Sublevel-set radial envelope of a field about a center point.

    Computed as the supremum of the field over closed balls, which agrees
    with the inf-over-sublevel-boundary-distance definition for upper
    semi-continuous fields; the result is non-decreasing in r by
    construction.  Radii must not exceed the distance from the center to the
    box boundary.
    """
    center = np.asarray(center, dtype=float)
    if center.shape != (f.dims,):
        raise ValueError("center dimension does not match field")
    lo = f.origin
    hi = f.origin + f.spacing * (np.array(f.values.shape) - 1.0)
    if np.any(center <= lo) or np.any(center >= hi):
        raise ValueError("center must lie strictly inside the box")
    r_boundary = float(min((center - lo).min(), (hi - center).min()))
    if radii is None:
        radii = f.spacing * np.arange(1, int(r_boundary / f.spacing) + 1)
    radii = np.asarray(radii, dtype=float)
    if len(radii) == 0:
        raise ValueError("no envelope radii requested")
    if np.any(np.diff(radii) <= 0.0) or radii[0] <= 0.0:
        raise ValueError("radii must be positive and strictly increasing")
    if radii[-1] > r_boundary * (1.0 + 1e-12):
        raise ValueError(
            f"radius {radii[-1]:.4g} exceeds distance {r_boundary:.4g} to the box boundary")

    dist = np.sqrt(((f.node_coordinates() - center) ** 2).sum(axis=1))
    order = np.argsort(dist, kind="stable")
    dist_sorted = dist[order]
    vals_sorted = f.values.ravel()[order]
    running_max = np.maximum.accumulate(vals_sorted)
    # Distance at which each running maximum was attained.
    arg_running = np.arange(len(vals_sorted))
    improved = np.r_[True, vals_sorted[1:] > running_max[:-1]]
    last_improve = np.maximum.accumulate(np.where(improved, arg_running, -1))
    attained_dist = dist_sorted[last_improve]
    # Always include at least the node closest to the center.
    idx = np.maximum(np.searchsorted(dist_sorted, radii, side="right") - 1, 0)
    return EnvelopeProfile(radii, running_max[idx], attained_dist[idx], {
        "center": center.tolist(),
        "shape": list(f.values.shape),
        "spacing": f.spacing,
    })


@dataclass
class EnvelopeCheck:
    r: np.ndarray
    b: np.ndarray
    combo: np.ndarray
    tol: np.ndarray
    violations: list

    @property
    def passed(self) -> bool:
        return len(self.violations) == 0


def envelope_viscosity_check(e: EnvelopeProfile, cone: ConeParams,
                             c_fd: float = DEFAULT_C_FD) -> EnvelopeCheck:
    """Discrete check of the envelope inequalities

        w~'/r - (w~')^2/2 >= 0   and   (w~'' + w~'/r) - (1-theta)(w~'/r - (w~')^2/2) >= 0

    at interior nodes, with slack tau = c_fd * h * max(1, (w~')^2).  The check
    runs on the attained-radius samples, which are free of the O(h) ball
    quantization lag.  Both inequalities are discrete surrogates for the
    viscosity-sense statements; violations are listed with their magnitude.
    """
    cone.require_supercritical()
    r, wt = e.attained_samples()
    if len(r) < 5:
        raise ValueError("envelope too short for a finite-difference check")
    d1, d2 = quadratic_fit_derivatives(r, wt)
    b = d1 / r - 0.5 * d1**2
    combo = (d2 + d1 / r) - (1.0 - cone.theta) * b
    h = np.r_[np.diff(r)[0], np.maximum(np.diff(r)[:-1], np.diff(r)[1:]), np.diff(r)[-1]]
    tol = _fd_cone_slack(r, d1, h, c_fd)
    violations = []
    for i in range(1, len(r) - 1):
        if b[i] < -tol[i]:
            violations.append((int(i), float(r[i]), "b", float(b[i])))
        if combo[i] < -tol[i]:
            violations.append((int(i), float(r[i]), "a+theta*b", float(combo[i])))
    return EnvelopeCheck(r, b, combo, tol, violations)


# ---------------------------------------------------------------------------
# Profile CSV serialization (columns: r, w, dw, d2w)
# ---------------------------------------------------------------------------

def save_profile_csv(p: RadialProfile, path):
    with open(path, "w") as fh:
        fh.write("r,w,dw,d2w\n")
        for i in range(len(p.r)):
            fh.write(",".join(f"{x:.16e}" for x in (p.r[i], p.w[i], p.dw[i], p.d2w[i])) + "\n")


def load_profile_csv(path, n: int, k: int) -> RadialProfile:
    with open(path) as fh:
        text = fh.read()
    rows = np.genfromtxt(io.StringIO(text), delimiter=",", names=True)
    names = rows.dtype.names
    r = np.atleast_1d(rows["r"])
    w = np.atleast_1d(rows["w"])
    dw = d2w = None
    if "dw" in names and "d2w" in names:
        dw = np.atleast_1d(rows["dw"])
        d2w = np.atleast_1d(rows["d2w"])
        if np.any(~np.isfinite(dw)) or np.any(~np.isfinite(d2w)):
            dw = d2w = None
    return RadialProfile.from_samples(r, w, n, k, dw=dw, d2w=d2w)
