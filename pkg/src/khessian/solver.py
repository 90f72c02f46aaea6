"""Damped-Newton and continuation solvers for radial sigma_k curvature equations.

The unknown is the w-gauge factor on a radial grid; the operator is the
radial reduction sigma_k = C(n-1,k) b^k + C(n-1,k-1) a b^{k-1} with
second-order central stencils, so Jacobians are tridiagonal.  Right-hand
sides stated in the v-gauge, sigma_k(lambda(V)) = f v^p, are carried into
sigma_k(lambda(W)) = f (2/(n-2))^k e^{a w} with a = (n-2)(k-p)/2.

Three regimes:
  * p < k  (a > 0): cone-guarded damped Newton; the solution is unique.
  * p = k: the vanishing-exponent scheme; solve for a decreasing sequence of
    exponents, track theta_a = exp(a * inf w_a), extrapolate a -> 0.
  * p > k: pseudo-arclength continuation of sigma_k(lambda(V)) = t(delta_t
    + f v^p); the branch folds at t*, with two solutions below, one at, and
    none above the fold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .conformal import wgauge_rhs_amplitude, wgauge_rhs_exponent
from .radial import RadialAB, sigma_k_radial, sigma_k_radial_gradients
from .symfunc import ConeParams

__all__ = [
    "SolverError",
    "AdmissibilityError",
    "Annulus",
    "Ball",
    "SphereConstant",
    "RadialProblem",
    "SolverConfig",
    "ExpRHS",
    "vpower_rhs",
    "ContinuationRHS",
    "GeneralVRHS",
    "validate_growth",
    "RadialSystem",
    "assemble",
    "NewtonResult",
    "newton_solve",
    "Solution",
    "solve_subcritical",
    "EigenResult",
    "solve_eigenvalue",
    "Branch",
    "BranchSample",
    "FoldMarker",
    "continuation_supercritical",
    "general_rhs_continuation",
]

_EXP_CLIP = 700.0


class SolverError(RuntimeError):
    def __init__(self, message, history=None, diagnostics=None):
        super().__init__(message)
        self.history = history or []
        self.diagnostics = diagnostics or {}


class AdmissibilityError(SolverError):
    def __init__(self, message, node=None, values=None):
        super().__init__(message)
        self.node = node
        self.values = values


# ---------------------------------------------------------------------------
# Problem description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Annulus:
    r0: float
    r1: float
    w0: float
    w1: float

    def __post_init__(self):
        if not 0.0 < self.r0 < self.r1:
            raise ValueError("annulus needs 0 < r0 < r1")


@dataclass(frozen=True)
class Ball:
    """Ball of radius r1 with symmetry at the origin and Dirichlet data at r1."""

    r1: float
    w1: float

    def __post_init__(self):
        if self.r1 <= 0.0:
            raise ValueError("ball radius must be positive")


@dataclass(frozen=True)
class SphereConstant:
    """Constant-factor reduction on the round sphere (scalar problem)."""


@dataclass
class RadialProblem:
    cone: ConeParams
    domain: object
    p: float
    f: object = 1.0            # scalar or callable of r

    def __post_init__(self):
        self.cone.require_supercritical()

    def f_values(self, r):
        if self.f is None:
            raise ValueError("problem carries no f; supply the RHS directly")
        if callable(self.f):
            return np.asarray(self.f(r), dtype=float)
        return np.full_like(np.asarray(r, dtype=float), float(self.f))


@dataclass
class SolverConfig:
    N: int = 129
    tol: float = 1e-10
    max_iter: int = 50
    min_damping: float = 1e-12
    # continuation controls
    delta0: float = 1.0
    ds0: float = 0.05
    ds_min: float = 1e-12
    ds_max: float = 0.3
    max_steps: int = 2000
    t_start: float | None = None
    t_max: float = 10.0
    after_fold_frac: float = 0.7
    refine_fold: bool = True

    def __post_init__(self):
        if self.N < 1 or self.tol <= 0.0 or self.max_iter < 1:
            raise ValueError("invalid solver controls")


# ---------------------------------------------------------------------------
# Right-hand sides (all in the w-gauge)
# ---------------------------------------------------------------------------

def _exp(x):
    return np.exp(np.clip(x, -_EXP_CLIP, _EXP_CLIP))


class ExpRHS:
    """phi(r, w) = f(r) * exp(a * w)."""

    def __init__(self, f, a: float):
        self.f = f
        self.a = a

    def _fv(self, r):
        if callable(self.f):
            return np.asarray(self.f(r), dtype=float)
        return float(self.f)

    def phi(self, r, w):
        return self._fv(r) * _exp(self.a * w)

    def dphi_dw(self, r, w):
        return self.a * self.phi(r, w)


def vpower_rhs(f, n: int, k: int, p: float) -> ExpRHS:
    """w-gauge form of sigma_k(lambda(V)) = f v^p."""
    a = wgauge_rhs_exponent(n, k, p)
    if callable(f):
        conv = wgauge_rhs_amplitude(1.0, n, k)
        return ExpRHS(lambda r, _f=f, _c=conv: _c * np.asarray(_f(r), dtype=float), a)
    return ExpRHS(wgauge_rhs_amplitude(float(f), n, k), a)


def _smoothstep5(x):
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


def _smoothstep5_d(x):
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 30.0 * x**2 * (1.0 - x) ** 2, 0.0)


class ContinuationRHS:
    """w-gauge form of sigma_k(lambda(V)) = t (delta_t + f v^p).

    delta_t equals delta0 for t <= 1, equals 1 for t >= 2, and bridges
    monotonically through a quintic smoothstep on [1, 2].
    """

    def __init__(self, cone: ConeParams, p: float, f=1.0, delta0: float = 1.0):
        if not 0.0 < delta0 <= 1.0:
            raise ValueError("delta0 must lie in (0, 1]")
        self.cone = cone
        self.p = p
        self.f = f
        self.delta0 = delta0
        self.conv = wgauge_rhs_amplitude(1.0, cone.n, cone.k)
        self.beta = 0.5 * (cone.n - 2)

    def delta(self, t: float) -> float:
        return self.delta0 + (1.0 - self.delta0) * float(_smoothstep5(t - 1.0))

    def ddelta_dt(self, t: float) -> float:
        return (1.0 - self.delta0) * float(_smoothstep5_d(t - 1.0))

    def _fv(self, r):
        if callable(self.f):
            return np.asarray(self.f(r), dtype=float)
        return float(self.f)

    def _terms(self, r, w):
        k, p, b = self.cone.k, self.p, self.beta
        e_delta = _exp(k * b * w)
        e_power = _exp((k - p) * b * w)
        return e_delta, self._fv(r) * e_power

    def phi(self, r, w, t):
        e_delta, e_power = self._terms(r, w)
        return t * self.conv * (self.delta(t) * e_delta + e_power)

    def dphi_dw(self, r, w, t):
        k, p, b = self.cone.k, self.p, self.beta
        e_delta, e_power = self._terms(r, w)
        return t * self.conv * (k * b * self.delta(t) * e_delta + (k - p) * b * e_power)

    def dphi_dt(self, r, w, t):
        e_delta, e_power = self._terms(r, w)
        return self.conv * (self.delta(t) * e_delta + e_power
                            + t * self.ddelta_dt(t) * e_delta)


class GeneralVRHS:
    """w-gauge form of sigma_k(lambda(V)) = t * phi_v(r, v) for a user phi_v."""

    def __init__(self, cone: ConeParams, phi_v, dphi_v_dv, growth_class: str = "floor_super"):
        self.cone = cone
        self.phi_v = phi_v
        self.dphi_v_dv = dphi_v_dv
        self.growth_class = growth_class
        self.conv = wgauge_rhs_amplitude(1.0, cone.n, cone.k)
        self.beta = 0.5 * (cone.n - 2)

    def phi(self, r, w, t):
        k, b = self.cone.k, self.beta
        v = _exp(-b * w)
        return t * self.conv * _exp(k * b * w) * self.phi_v(r, v)

    def dphi_dw(self, r, w, t):
        k, b = self.cone.k, self.beta
        v = _exp(-b * w)
        base = _exp(k * b * w)
        return t * self.conv * base * (k * b * self.phi_v(r, v)
                                       - b * v * self.dphi_v_dv(r, v))

    def dphi_dt(self, r, w, t):
        k, b = self.cone.k, self.beta
        v = _exp(-b * w)
        return self.conv * _exp(k * b * w) * self.phi_v(r, v)


def validate_growth(phi_v, k: int, growth_class: str, v_lo: float = 1e-3,
                    v_hi: float = 1e3, c0: float = 0.0):
    """Numerically check a declared growth class at the sampled range endpoints.

    "floor_super": phi_v >= c0 > 0 on the range and v^{-k} phi_v increasing
    at the top (superlinear relative to v^k).
    "crossing": v^{-k} phi_v smaller at v_lo than at v_hi (the ratio crosses
    the eigenvalue level from below).
    """
    v = np.geomspace(v_lo, v_hi, 64)
    vals = np.asarray(phi_v(None, v), dtype=float)
    ratio = vals / v**k
    if growth_class == "floor_super":
        floor = c0 if c0 > 0.0 else 1e-12
        if vals.min() < floor:
            raise SolverError(
                f"growth validation failed: phi_v dips to {vals.min():.3e} below the floor")
        if ratio[-1] <= ratio[-8]:
            raise SolverError("growth validation failed: v^-k phi_v not increasing at the top")
    elif growth_class == "crossing":
        if not ratio[0] < ratio[-1]:
            raise SolverError("growth validation failed: v^-k phi_v does not increase across the range")
    else:
        raise SolverError(f"unknown growth class {growth_class!r}")


class _FrozenT:
    """Adapter freezing the continuation parameter of a t-dependent RHS."""

    def __init__(self, rhs, t: float):
        self.rhs = rhs
        self.t = t

    def phi(self, r, w):
        return self.rhs.phi(r, w, self.t)

    def dphi_dw(self, r, w):
        return self.rhs.dphi_dw(r, w, self.t)


# ---------------------------------------------------------------------------
# Discrete system
# ---------------------------------------------------------------------------

class RadialSystem:
    """Finite-difference system for one radial problem on a fixed grid."""

    def __init__(self, problem: RadialProblem, N: int):
        self.problem = problem
        self.cone = problem.cone
        dom = problem.domain
        if isinstance(dom, SphereConstant):
            self.kind = "sphere"
            self.N = 1
            self.r = np.array([1.0])      # placeholder; the RHS ignores r
            self.h = 0.0
            # sigma_k of the round-sphere matrix W = (1/2) I, independent of w.
            self.sigma_const = math.comb(self.cone.n, self.cone.k) * 0.5**self.cone.k
        elif isinstance(dom, Annulus):
            self.kind = "annulus"
            self.N = N
            self.r = np.linspace(dom.r0, dom.r1, N)
            self.h = self.r[1] - self.r[0]
        elif isinstance(dom, Ball):
            self.kind = "ball"
            self.N = N
            # Staggered half-cell grid keeps every node off the origin while the
            # mirrored ghost value encodes the symmetry condition w'(0) = 0.
            self.h = dom.r1 / (N - 0.5)
            self.r = (np.arange(N) + 0.5) * self.h
        else:
            raise ValueError(f"unknown domain {dom!r}")

    # -- finite differences ------------------------------------------------

    def _derivatives(self, w):
        """(w', w'') at equation nodes together with the equation-node index."""
        if self.kind == "sphere":
            return np.zeros(1), np.zeros(1), np.array([0])
        h = self.h
        if self.kind == "annulus":
            idx = np.arange(1, self.N - 1)
            d1 = (w[idx + 1] - w[idx - 1]) / (2 * h)
            d2 = (w[idx + 1] - 2 * w[idx] + w[idx - 1]) / h**2
            return d1, d2, idx
        # ball: interior rows 0..N-2; the ghost at -h/2 mirrors node 0
        idx = np.arange(0, self.N - 1)
        wm = np.r_[w[0], w[:-2]]          # w_{i-1} with ghost substitution at i = 0
        d1 = (w[idx + 1] - wm) / (2 * h)
        d2 = (w[idx + 1] - 2 * w[idx] + wm) / h**2
        return d1, d2, idx

    def ab(self, w) -> RadialAB:
        if self.kind == "sphere":
            # W = A_{g0} = (1/2) I for every constant factor on the round sphere.
            return RadialAB(np.array([0.5]), np.array([0.5]))
        d1, d2, idx = self._derivatives(w)
        r = self.r[idx]
        return RadialAB(d2 + 0.5 * d1**2, d1 / r - 0.5 * d1**2)

    def admissible(self, w, strict: bool = True, tol: float = 0.0) -> bool:
        if self.kind == "sphere":
            return True
        ab = self.ab(w)
        combo = ab.a + self.cone.theta * ab.b
        if strict:
            return bool(np.all(ab.b > tol) and np.all(combo > tol))
        return bool(np.all(ab.b >= -tol) and np.all(combo >= -tol))

    def _cone_guard(self, w):
        """Raise AdmissibilityError if w violates closure admissibility beyond
        a finite-difference-aware margin."""
        if self.kind == "sphere":
            return
        d1, d2, idx = self._derivatives(w)
        r = self.r[idx]
        ab = RadialAB(d2 + 0.5 * d1**2, d1 / r - 0.5 * d1**2)
        margin = 10.0 * self.h**2 * np.maximum(1.0, d1**2) * (1.0 + 1.0 / r**2)
        combo = ab.a + self.cone.theta * ab.b
        bad = np.minimum(ab.b + margin, combo + margin)
        worst = int(np.argmin(bad))
        if bad[worst] < 0.0:
            raise AdmissibilityError(
                f"iterate leaves the admissible cone at r={r[worst]:.6g} "
                f"(b={ab.b[worst]:.3e}, a+theta*b={combo[worst]:.3e})",
                node=int(idx[worst]),
                values=(float(ab.b[worst]), float(combo[worst])),
            )

    # -- residual and Jacobian ----------------------------------------------

    def residual(self, w, rhs):
        if self.kind == "sphere":
            return np.array([self.sigma_const - float(rhs.phi(self.r, w)[0])])
        F = np.empty(self.N)
        d1, d2, idx = self._derivatives(w)
        r = self.r[idx]
        ab = RadialAB(d2 + 0.5 * d1**2, d1 / r - 0.5 * d1**2)
        F[idx] = sigma_k_radial(ab, self.cone) - rhs.phi(r, w[idx])
        dom = self.problem.domain
        if self.kind == "annulus":
            F[0] = w[0] - dom.w0
            F[-1] = w[-1] - dom.w1
        else:
            F[-1] = w[-1] - dom.w1
        return F

    def root_residual(self, w, rhs):
        """Residual in the concave root form sigma^{1/k} - phi^{1/k}.

        Same zero set as the plain residual on the admissible cone, but the
        k-th root stays well scaled as iterates approach the cone boundary,
        which keeps damped Newton from stalling on degenerate problems.
        """
        if self.kind == "sphere":
            k = self.cone.k
            phi = max(float(rhs.phi(self.r, w)[0]), 0.0)
            return np.array([self.sigma_const ** (1.0 / k) - phi ** (1.0 / k)])
        k = self.cone.k
        G = np.empty(self.N)
        d1, d2, idx = self._derivatives(w)
        r = self.r[idx]
        ab = RadialAB(d2 + 0.5 * d1**2, d1 / r - 0.5 * d1**2)
        sig = np.maximum(sigma_k_radial(ab, self.cone), 0.0)
        phi = np.maximum(np.asarray(rhs.phi(r, w[idx]), dtype=float), 0.0)
        G[idx] = sig ** (1.0 / k) - phi ** (1.0 / k)
        dom = self.problem.domain
        if self.kind == "annulus":
            G[0] = w[0] - dom.w0
            G[-1] = w[-1] - dom.w1
        else:
            G[-1] = w[-1] - dom.w1
        return G

    def root_residual_jacobian(self, w, rhs):
        """Root-form residual and its tridiagonal Jacobian (chain rule on 1/k powers)."""
        k = self.cone.k
        if self.kind == "sphere":
            G = self.root_residual(w, rhs)
            phi = max(float(rhs.phi(self.r, w)[0]), 1e-300)
            dphi = float(rhs.dphi_dw(self.r, w)[0])
            J = np.zeros((3, 1))
            J[1, 0] = -(1.0 / k) * phi ** (1.0 / k - 1.0) * dphi
            return G, J
        h = self.h
        G = self.root_residual(w, rhs)
        J = np.zeros((3, self.N))
        d1, d2, idx = self._derivatives(w)
        r = self.r[idx]
        ab = RadialAB(d2 + 0.5 * d1**2, d1 / r - 0.5 * d1**2)
        sig = np.maximum(sigma_k_radial(ab, self.cone), 1e-300)
        sa, sb = sigma_k_radial_gradients(ab, self.cone)
        scale = (1.0 / k) * sig ** (1.0 / k - 1.0)
        sa = scale * sa
        sb = scale * sb
        phi = np.maximum(np.asarray(rhs.phi(r, w[idx]), dtype=float), 1e-300)
        phi_w = (1.0 / k) * phi ** (1.0 / k - 1.0) * np.asarray(
            rhs.dphi_dw(r, w[idx]), dtype=float)
        bcoef = sb * (1.0 / r - d1)
        if self.kind == "annulus":
            J[1, idx] = -2.0 * sa / h**2 - phi_w
            J[0, idx + 1] = sa * (1.0 / h**2 + d1 / (2 * h)) + bcoef / (2 * h)
            J[2, idx - 1] = sa * (1.0 / h**2 - d1 / (2 * h)) - bcoef / (2 * h)
            J[1, 0] = 1.0
            J[1, -1] = 1.0
            J[0, 1] = 0.0
            J[2, -2] = 0.0
        else:
            J[1, idx] = -2.0 * sa / h**2 - phi_w
            J[0, idx + 1] = sa * (1.0 / h**2 + d1 / (2 * h)) + bcoef / (2 * h)
            sub = sa * (1.0 / h**2 - d1 / (2 * h)) - bcoef / (2 * h)
            J[1, 0] += sub[0]
            J[2, idx[1:] - 1] = sub[1:]
            J[1, -1] = 1.0
            J[2, -2] = 0.0
        return G, J

    def residual_jacobian(self, w, rhs, check_cone: bool = False):
        if check_cone:
            self._cone_guard(w)
        if self.kind == "sphere":
            F = self.residual(w, rhs)
            J = np.zeros((3, 1))
            J[1, 0] = -float(rhs.dphi_dw(self.r, w)[0])
            return F, J
        h = self.h
        F = self.residual(w, rhs)
        J = np.zeros((3, self.N))        # solve_banded layout: upper, diag, lower
        d1, d2, idx = self._derivatives(w)
        r = self.r[idx]
        ab = RadialAB(d2 + 0.5 * d1**2, d1 / r - 0.5 * d1**2)
        sa, sb = sigma_k_radial_gradients(ab, self.cone)
        phi_w = rhs.dphi_dw(r, w[idx])
        bcoef = sb * (1.0 / r - d1)
        if self.kind == "annulus":
            J[1, idx] = -2.0 * sa / h**2 - phi_w
            J[0, idx + 1] = sa * (1.0 / h**2 + d1 / (2 * h)) + bcoef / (2 * h)
            J[2, idx - 1] = sa * (1.0 / h**2 - d1 / (2 * h)) - bcoef / (2 * h)
            J[1, 0] = 1.0
            J[1, -1] = 1.0
            J[0, 1] = 0.0
            J[2, -2] = 0.0
        else:
            J[1, idx] = -2.0 * sa / h**2 - phi_w
            J[0, idx + 1] = sa * (1.0 / h**2 + d1 / (2 * h)) + bcoef / (2 * h)
            sub = sa * (1.0 / h**2 - d1 / (2 * h)) - bcoef / (2 * h)
            # Fold the ghost coefficient of row 0 into its diagonal.
            J[1, 0] += sub[0]
            J[2, idx[1:] - 1] = sub[1:]
            J[1, -1] = 1.0
            J[2, -2] = 0.0
        return F, J

    def solve_linear(self, J, rhs_vec):
        if self.N == 1:
            return rhs_vec / J[1, 0]
        return solve_banded((1, 1), J, rhs_vec)

    def dense_jacobian(self, J):
        A = np.zeros((self.N, self.N))
        A[np.arange(self.N), np.arange(self.N)] = J[1]
        A[np.arange(self.N - 1), np.arange(1, self.N)] = J[0, 1:]
        A[np.arange(1, self.N), np.arange(self.N - 1)] = J[2, :-1]
        return A

    # -- initial iterates ----------------------------------------------------

    def initial_guess(self):
        if self.kind == "sphere":
            return np.zeros(1)
        dom = self.problem.domain
        theta = self.cone.theta
        r = self.r
        candidates = []
        if self.kind == "annulus":
            lin = dom.w0 + (dom.w1 - dom.w0) * (np.log(r / dom.r0) / math.log(dom.r1 / dom.r0))
            candidates.append(lin)
            scale = math.exp(min(max(np.mean(lin), -50.0), 50.0))
            for j in range(-2, 12):
                c = scale * 2.0**j / dom.r1**2
                candidates.append(np.log(np.exp(np.clip(lin, -_EXP_CLIP, _EXP_CLIP)) + c * r**2))
            c0 = 1.6 * dom.r1 ** (theta - 1.0)
            ref = (c0 / (1.0 - theta)) * r ** (1.0 - theta)
            ref += 0.5 * (dom.w0 + dom.w1) - ref.mean()
            candidates.append(ref)
        else:
            base = np.full(self.N, dom.w1)
            candidates.append(base)
            for j in range(-2, 12):
                c = math.exp(min(max(dom.w1, -50.0), 50.0)) * 2.0**j / dom.r1**2
                candidates.append(np.log(math.exp(dom.w1) + c * r**2))
        # Near-extremal boundary data can leave every candidate a hair outside
        # the open cone; a small inward nudge (decreasing perturbation raises b
        # and a) recovers strict admissibility without moving off the basin.
        if self.kind == "annulus":
            nudges = [0.0] + [10.0**j for j in range(-8, -1)]
            nudge_shape = (dom.r1 / r) ** 2
        else:
            nudges = [0.0]
            nudge_shape = np.zeros_like(r)
        for w in candidates:
            for eps in nudges:
                trial = w + eps * nudge_shape
                if self.admissible(trial, strict=True):
                    return trial
        raise SolverError("no strictly admissible initial iterate found")


def assemble(problem: RadialProblem, w, rhs, N: int | None = None,
             check_cone: bool = True):
    """Residual and tridiagonal Jacobian of a problem at the iterate w.

    Raises AdmissibilityError (carrying the worst node) when w leaves the
    closed cone beyond a finite-difference margin.
    """
    w = np.asarray(w, dtype=float)
    system = RadialSystem(problem, N if N is not None else len(w))
    if system.N != len(w):
        raise ValueError("iterate length does not match the grid")
    return system.residual_jacobian(w, rhs, check_cone=check_cone)


# ---------------------------------------------------------------------------
# Damped Newton
# ---------------------------------------------------------------------------

@dataclass
class NewtonResult:
    w: np.ndarray
    residual_history: list
    iterations: int
    converged: bool

    @property
    def residual(self) -> float:
        return self.residual_history[-1]


def _damped_newton(system: RadialSystem, rhs, w0, config: SolverConfig) -> NewtonResult:
    """Cone-guarded damped Newton.

    Directions and the line-search metric come from the concave root form
    sigma^{1/k} - phi^{1/k}; convergence is declared on the plain residual
    sigma - phi in the sup norm.  Trial iterates must be strictly admissible
    and decrease the root-form norm, with step halving otherwise.
    """
    w = np.asarray(w0, dtype=float).copy()
    if not system.admissible(w, strict=True):
        raise AdmissibilityError("initial iterate is not strictly admissible")
    G, J = system.root_residual_jacobian(w, rhs)
    gnorm = float(np.abs(G).max())
    norm = float(np.abs(system.residual(w, rhs)).max())
    history = [norm]
    for it in range(config.max_iter):
        if norm <= config.tol:
            return NewtonResult(w, history, it, True)
        step = system.solve_linear(J, -G)
        s = 1.0
        while True:
            trial = w + s * step
            if system.admissible(trial, strict=True):
                Gt = system.root_residual(trial, rhs)
                tnorm = float(np.abs(Gt).max())
                if tnorm < gnorm:
                    break
            s *= 0.5
            if s < config.min_damping:
                raise SolverError(
                    "Newton stalled: no admissible decreasing step "
                    "(consider a better initialization)",
                    history=history,
                    diagnostics={"w_best": w.copy()},
                )
        w = trial
        G, J = system.root_residual_jacobian(w, rhs)
        gnorm = float(np.abs(G).max())
        norm = float(np.abs(system.residual(w, rhs)).max())
        history.append(norm)
    if norm <= config.tol:
        return NewtonResult(w, history, config.max_iter, True)
    raise SolverError(f"Newton did not converge: residual {norm:.3e}",
                      history=history, diagnostics={"w_best": w.copy()})


def newton_solve(problem: RadialProblem, rhs, config: SolverConfig,
                 w0=None) -> NewtonResult:
    """Cone-guarded damped Newton for sigma_k(lambda(W)) = phi(r, w)."""
    system = RadialSystem(problem, config.N)
    if w0 is None:
        w0 = system.initial_guess()
    return _damped_newton(system, rhs, np.asarray(w0, dtype=float), config)


# ---------------------------------------------------------------------------
# Case 1: p < k
# ---------------------------------------------------------------------------

@dataclass
class Solution:
    w: np.ndarray
    r: np.ndarray
    newton: NewtonResult
    diagnostics: dict = field(default_factory=dict)


def solve_subcritical(problem: RadialProblem, config: SolverConfig,
                      w0=None) -> Solution:
    """Unique solution of sigma_k(lambda(V)) = f v^p for p < k.

    Also records a sub/super constant bracket built from the seed: for a
    large enough shift c, seed - c and seed + c are sub and super solutions,
    and the returned iterate is verified to lie between them.
    """
    n, k = problem.cone.n, problem.cone.k
    a = wgauge_rhs_exponent(n, k, problem.p)
    if a <= 0.0:
        raise ValueError("subcritical solve requires p < k")
    rhs = vpower_rhs(problem.f, n, k, problem.p)
    system = RadialSystem(problem, config.N)
    if np.any(problem.f_values(system.r) <= 0.0):
        raise ValueError("f must be positive on the domain")
    seed = np.asarray(w0, dtype=float) if w0 is not None else system.initial_guess()
    result = _damped_newton(system, rhs, seed, config)
    ab = system.ab(seed)
    sig = sigma_k_radial(ab, problem.cone)
    idx = slice(1, -1) if system.kind == "annulus" else slice(0, system.N - 1)
    if system.kind == "sphere":
        idx = slice(0, 1)
    phi_seed = rhs.phi(system.r[idx] if system.kind != "sphere" else system.r,
                       seed[idx] if system.kind != "sphere" else seed)
    with np.errstate(divide="ignore"):
        ratios = np.log(np.maximum(sig, 1e-300) / np.maximum(phi_seed, 1e-300))
    c = float(np.abs(ratios).max()) / a + 1.0
    lower, upper = seed - c, seed + c
    bracket_ok = bool(np.all(result.w >= lower - 1e-8) and np.all(result.w <= upper + 1e-8))
    return Solution(result.w, system.r, result,
                    {"n": n, "bracket_halfwidth": c, "bracket_ok": bracket_ok})


# ---------------------------------------------------------------------------
# Case 2: p = k (eigenvalue)
# ---------------------------------------------------------------------------

@dataclass
class EigenResult:
    theta: float
    w: np.ndarray              # normalized: inf w = 0
    r: np.ndarray
    theta_sequence: list
    a_sequence: list
    residual_check: float


def solve_eigenvalue(problem: RadialProblem, config: SolverConfig,
                     a_sequence=None, w0=None) -> EigenResult:
    """Eigenvalue of sigma_k(lambda(V)) = theta f v^k by the vanishing-exponent scheme.

    Solves the family sigma_k(lambda(W)) = f~ e^{a w} for a decreasing
    sequence of exponents, tracks theta_a = exp(a inf w_a), extrapolates the
    limit a -> 0, and returns the solution normalized by inf w = 0.  The
    normalized output is seed-independent (solutions are closed under
    additive constants).
    """
    n, k = problem.cone.n, problem.cone.k
    if a_sequence is None:
        a_sequence = [2.0**-j for j in range(1, 9)]
    system = RadialSystem(problem, config.N)
    w = np.asarray(w0, dtype=float).copy() if w0 is not None else system.initial_guess()
    thetas = []
    for a in a_sequence:
        result = _damped_newton(system, vpower_rhs(problem.f, n, k, k - 2.0 * a / (n - 2)),
                                w, config)
        w = result.w
        thetas.append(math.exp(a * float(w.min())))
    logt = np.log(thetas)
    aa = np.asarray(a_sequence, dtype=float)
    use = min(4, len(aa))
    coeffs = np.polyfit(aa[-use:], logt[-use:], min(2, use - 1))
    theta = float(np.exp(coeffs[-1]))
    if not np.isfinite(theta) or abs(math.log(max(thetas[-1], 1e-300)) - math.log(theta)) > 0.5:
        raise SolverError("theta sequence did not converge",
                          diagnostics={"theta_sequence": thetas, "a_sequence": list(aa)})
    w0 = w - w.min()
    if callable(problem.f):
        rhs_check = ExpRHS(lambda r, _f=problem.f, _c=theta * wgauge_rhs_amplitude(1.0, n, k):
                           _c * np.asarray(_f(r), dtype=float), 0.0)
    else:
        rhs_check = ExpRHS(theta * wgauge_rhs_amplitude(float(problem.f), n, k), 0.0)
    res = system.residual(w0, rhs_check)
    inner = res[:-1] if system.kind == "ball" else (res[1:-1] if system.kind == "annulus" else res)
    residual_check = float(np.abs(inner).max())
    return EigenResult(theta, w0, system.r, thetas, list(aa), residual_check)


# ---------------------------------------------------------------------------
# Case 3: p > k (continuation)
# ---------------------------------------------------------------------------

@dataclass
class BranchSample:
    t: float
    w: np.ndarray
    v_probe: float
    newton_iters: int
    tangent_t: float
    delta_t: float


@dataclass
class FoldMarker:
    t_star: float
    w_star: np.ndarray
    refined: bool


@dataclass
class Branch:
    samples: list
    folds: list
    termination: str
    cone: ConeParams
    _system: RadialSystem = field(repr=False, default=None)
    _rhs: object = field(repr=False, default=None)
    _config: SolverConfig = field(repr=False, default=None)

    @property
    def t_star(self) -> float | None:
        return self.folds[0].t_star if self.folds else None

    def solutions_at(self, t: float):
        """All branch solutions at parameter t, Newton-polished at fixed t."""
        nodes = [(s.t, s.w) for s in self.samples]
        found = []
        for (ta, wa), (tb, wb) in zip(nodes[:-1], nodes[1:]):
            if (ta - t) * (tb - t) <= 0.0 and ta != tb:
                lam = (t - ta) / (tb - ta)
                seed = (1.0 - lam) * wa + lam * wb
                frozen = _FrozenT(self._rhs, t)
                try:
                    res = _damped_newton(self._system, frozen, seed, self._config)
                except SolverError:
                    continue
                if not any(np.abs(res.w - w).max() <= 1e-6 * max(1.0, np.abs(w).max())
                           for w in found):
                    found.append(res.w)
        return found


def _v_probe(system: RadialSystem, w, beta: float) -> float:
    mid = len(w) // 2
    return float(np.exp(-beta * w[mid]))


def _dF_dt(system, rhs, w, t):
    """Derivative of the residual with respect to the continuation parameter."""
    Ft = np.zeros(system.N)
    if system.kind == "sphere":
        Ft[0] = -float(np.atleast_1d(rhs.dphi_dt(system.r, w, t))[0])
    else:
        idx = (np.arange(1, system.N - 1) if system.kind == "annulus"
               else np.arange(0, system.N - 1))
        Ft[idx] = -np.asarray(rhs.dphi_dt(system.r[idx], w[idx], t), dtype=float)
    return Ft


def _bordered_matrix(system, J_banded, Ft, bottom):
    """Dense bordered matrix [[J, Ft], [bottom]].

    The plain Jacobian is singular exactly at folds, so the continuation
    linear algebra always goes through this regular bordered form.
    """
    N = system.N
    A = np.zeros((N + 1, N + 1))
    A[:N, :N] = system.dense_jacobian(J_banded)
    A[:N, N] = Ft
    A[N, :] = bottom
    return A


def _tangent(system, rhs, w, t, prev=None):
    _, J = system.residual_jacobian(w, _FrozenT(rhs, t))
    Ft = _dF_dt(system, rhs, w, t)
    bottom = prev if prev is not None else np.r_[np.zeros(system.N), 1.0]
    A = _bordered_matrix(system, J, Ft, bottom)
    rhs_vec = np.r_[np.zeros(system.N), 1.0]
    tau = np.linalg.solve(A, rhs_vec)
    tau /= np.linalg.norm(tau)
    if prev is not None and float(tau @ prev) < 0.0:
        tau = -tau
    elif prev is None and tau[-1] < 0.0:
        tau = -tau
    return tau


def _corrector(system, rhs, w_pred, t_pred, tau, config, max_iter=12):
    """Pseudo-arclength corrector: solve F(w, t) = 0 under tau . (z - z_pred) = 0."""
    w = w_pred.copy()
    t = float(t_pred)
    tau_w, tau_t = tau[:-1], tau[-1]
    for it in range(max_iter):
        frozen = _FrozenT(rhs, t)
        F, J = system.residual_jacobian(w, frozen)
        g = float(tau_w @ (w - w_pred) + tau_t * (t - t_pred))
        norm = float(np.abs(F).max())
        if norm <= config.tol and abs(g) <= config.tol:
            if system.admissible(w, strict=True):
                return w, t, it
            raise SolverError("corrector left the admissible cone")
        A = _bordered_matrix(system, J, _dF_dt(system, rhs, w, t), tau)
        try:
            step = np.linalg.solve(A, -np.r_[F, g])
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular bordered system in corrector") from exc
        w = w + step[:-1]
        t = t + float(step[-1])
    raise SolverError("corrector did not converge")


def _refine_fold(system, rhs, w, t, phi0, config):
    """Newton on the extended fold system [F; J phi; c.phi - 1] = 0.

    Second-derivative blocks are approximated by finite differences on the
    analytic tridiagonal Jacobian.
    """
    N = system.N
    c = phi0 / np.linalg.norm(phi0)
    y = np.r_[w, t, phi0 / max(float(c @ phi0), 1e-300)]

    def blocks(yv):
        wv, tv, ph = yv[:N], float(yv[N]), yv[N + 1:]
        frozen = _FrozenT(rhs, tv)
        F, Jb = system.residual_jacobian(wv, frozen)
        J = system.dense_jacobian(Jb)
        Ft = np.zeros(N)
        if system.kind == "sphere":
            Ft[0] = -float(np.atleast_1d(rhs.dphi_dt(system.r, wv, tv))[0])
        else:
            idx = (np.arange(1, N - 1) if system.kind == "annulus"
                   else np.arange(0, N - 1))
            Ft[idx] = -np.asarray(rhs.dphi_dt(system.r[idx], wv[idx], tv), dtype=float)
        return F, J, Ft, ph

    for _ in range(30):
        wv, tv, ph = y[:N], float(y[N]), y[N + 1:]
        F, J, Ft, _ = blocks(y)
        G = np.r_[F, J @ ph, c @ ph - 1.0]
        scale = max(1.0, float(np.abs(F).max()))
        if float(np.abs(G).max()) <= 1e-12 * scale + 1e-13:
            return wv, tv, ph, True
        eps = 1e-7 * max(1.0, float(np.abs(wv).max()))
        dJph_dw = np.empty((N, N))
        for j in range(N):
            wp = wv.copy()
            wp[j] += eps
            _, Jp = system.residual_jacobian(wp, _FrozenT(rhs, tv))
            dJph_dw[:, j] = (system.dense_jacobian(Jp) @ ph - J @ ph) / eps
        te = 1e-7 * max(1.0, abs(tv))
        _, Jt = system.residual_jacobian(wv, _FrozenT(rhs, tv + te))
        dJph_dt = (system.dense_jacobian(Jt) @ ph - J @ ph) / te
        M = np.zeros((2 * N + 1, 2 * N + 1))
        M[:N, :N] = J
        M[:N, N] = Ft
        M[N:2 * N, :N] = dJph_dw
        M[N:2 * N, N] = dJph_dt
        M[N:2 * N, N + 1:] = J
        M[2 * N, N + 1:] = c
        try:
            dy = np.linalg.solve(M, -G)
        except np.linalg.LinAlgError:
            return wv, tv, ph, False
        y = y + dy
        if not system.admissible(y[:N], strict=True):
            return wv, tv, ph, False
    return y[:N], float(y[N]), y[N + 1:], False


def _continue_branch(problem: RadialProblem, rhs, config: SolverConfig) -> Branch:
    system = RadialSystem(problem, config.N)
    cone = problem.cone
    beta = 0.5 * (cone.n - 2)

    # Starting point: small-t solution.
    t = config.t_start
    if t is None:
        t = 0.01
    if system.kind == "sphere":
        # Seed from the small-parameter asymptotics sigma_const ~ t conv delta e^{k beta w}.
        conv = wgauge_rhs_amplitude(1.0, cone.n, cone.k)
        d0 = rhs.delta(t) if hasattr(rhs, "delta") else 1.0
        w0 = np.array([math.log(system.sigma_const / (t * conv * max(d0, 1e-12)))
                       / (cone.k * beta)])
    else:
        w0 = system.initial_guess()
    res = _damped_newton(system, _FrozenT(rhs, t), w0, config)
    w = res.w

    samples = []
    folds = []
    termination = "max steps"
    tau = _tangent(system, rhs, w, t, prev=None)
    if tau[-1] < 0.0:
        tau = -tau
    delta_of = rhs.delta if hasattr(rhs, "delta") else (lambda _t: 1.0)
    samples.append(BranchSample(t, w.copy(), _v_probe(system, w, beta),
                                res.iterations, float(tau[-1]), float(delta_of(t))))
    ds = config.ds0
    crossed_fold = False
    t_star = None

    for _ in range(config.max_steps):
        pred_w = w + ds * tau[:-1]
        pred_t = t + ds * tau[-1]
        try:
            w_new, t_new, iters = _corrector(system, rhs, pred_w, pred_t, tau, config)
        except SolverError:
            ds *= 0.5
            if ds < config.ds_min:
                termination = "step underflow"
                break
            continue
        tau_new = _tangent(system, rhs, w_new, t_new, prev=tau)

        if tau[-1] > 0.0 and tau_new[-1] < 0.0 and not crossed_fold:
            # Fold crossed between (w, t) and (w_new, t_new); bisect in arclength.
            a_state = (w.copy(), t, tau.copy())
            b_state = (w_new.copy(), t_new, tau_new.copy())
            gap = ds
            for _ in range(70):
                gap *= 0.5
                wa, ta, taua = a_state
                try:
                    wm, tm, _ = _corrector(system, rhs, wa + gap * taua[:-1],
                                           ta + gap * taua[-1], taua, config)
                except SolverError:
                    break
                taum = _tangent(system, rhs, wm, tm, prev=taua)
                if taum[-1] > 0.0:
                    a_state = (wm, tm, taum)
                else:
                    b_state = (wm, tm, taum)
                if abs(a_state[1] - b_state[1]) <= 1e-12 * max(1.0, abs(tm)):
                    break
            wa, ta, taua = a_state
            t_star, w_star, refined = ta, wa, False
            if config.refine_fold:
                try:
                    wf, tf, _, ok = _refine_fold(system, rhs, wa, ta, taua[:-1], config)
                    if ok and abs(tf - ta) <= 0.05 * max(1.0, abs(ta)):
                        t_star, w_star, refined = tf, wf, True
                except SolverError:
                    pass
            folds.append(FoldMarker(float(t_star), np.asarray(w_star).copy(), refined))
            samples.append(BranchSample(float(t_star), np.asarray(w_star).copy(),
                                        _v_probe(system, np.asarray(w_star), beta),
                                        0, 0.0, float(delta_of(t_star))))
            crossed_fold = True

        w, t, tau = w_new, t_new, tau_new
        samples.append(BranchSample(t, w.copy(), _v_probe(system, w, beta),
                                    iters, float(tau[-1]), float(delta_of(t))))
        if iters <= 3:
            ds = min(ds * 1.4, config.ds_max)
        if not crossed_fold and t >= config.t_max:
            termination = "t_max reached"
            break
        if crossed_fold and t_star is not None and t <= config.after_fold_frac * t_star:
            termination = "fold crossed"
            break
        if float(np.abs(w).max()) > 1e3:
            termination = "solution norm blow-up"
            break

    return Branch(samples, folds, termination, cone, system, rhs, config)


def continuation_supercritical(problem: RadialProblem, config: SolverConfig) -> Branch:
    """Branch of sigma_k(lambda(V)) = t (delta_t + f v^p) for p > k with fold detection."""
    if problem.p <= problem.cone.k:
        raise ValueError("supercritical continuation requires p > k")
    rhs = ContinuationRHS(problem.cone, problem.p, problem.f, config.delta0)
    return _continue_branch(problem, rhs, config)


def general_rhs_continuation(problem: RadialProblem, phi_v, dphi_v_dv,
                             growth_class: str, config: SolverConfig,
                             c0: float = 0.0) -> Branch:
    """Continuation for sigma_k(lambda(V)) = t phi_v(x, v) with a declared growth class."""
    validate_growth(phi_v, problem.cone.k, growth_class, c0=c0)
    rhs = GeneralVRHS(problem.cone, phi_v, dphi_v_dv, growth_class)
    return _continue_branch(problem, rhs, config)
