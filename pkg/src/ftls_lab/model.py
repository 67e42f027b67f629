"""Model ingredients: averaging kernel, speed limit, velocity law, flux algebra.

Everything here is immutable after construction and safe to share between
threads.  The flux is f(rho) = rho * phi(rho); each side of the road scales it
by its speed limit.  Critical densities are the intersections of a horizontal
flux level with the two scaled flux graphs, and the subcase classification
reads existence / uniqueness / stability off those intersections.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    IncompatibleAsymptotesError,
    NoRootError,
    OutOfRangeError,
    ValidationError,
)

BISECTION_TOL = 1e-12
BISECTION_MAX_ITER = 200
FLUX_MATCH_TOL = 1e-8
_VALIDATION_GRID = 1000


def _bisect(g, lo, hi, tol=BISECTION_TOL, max_iter=BISECTION_MAX_ITER):
    """Robust scalar bisection; g(lo) and g(hi) must differ in sign."""
    glo = g(lo)
    ghi = g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if glo * ghi > 0.0:
        raise NoRootError(f"no sign change on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0 or hi - lo < tol:
            return mid
        if glo * gm < 0.0:
            hi = mid
        else:
            lo, glo = mid, gm
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Kernel:
    """Forward-looking averaging weight with support [0, h].

    ``kind`` is "linear" for the default ramp 2/h - 2 s / h^2, or "tabulated"
    for a user-supplied piecewise-linear density given at ``nodes``.
    """

    h: float
    kind: str = "linear"
    nodes: tuple = field(default=None, compare=True)
    values: tuple = field(default=None, compare=True)

    @classmethod
    def linear(cls, h):
        if h <= 0:
            raise ValidationError("kernel support width must be positive")
        return cls(h=float(h), kind="linear")

    @classmethod
    def tabulated(cls, nodes, values):
        nodes = tuple(float(s) for s in nodes)
        values = tuple(float(v) for v in values)
        k = cls(h=nodes[-1], kind="tabulated", nodes=nodes, values=values)
        k.validate()
        return k

    def __call__(self, s):
        """Weight density at offset s; zero outside [0, h]."""
        s = np.asarray(s, dtype=float)
        if self.kind == "linear":
            out = 2.0 / self.h - 2.0 * s / self.h**2
            out = np.where((s < 0.0) | (s > self.h), 0.0, out)
        else:
            out = np.interp(s, self.nodes, self.values, left=0.0, right=0.0)
            out = np.where((s < 0.0) | (s > self.h), 0.0, out)
        return out if out.ndim else float(out)

    def cumulative(self, s):
        """Exact integral of the weight over [0, s], clipped to the support."""
        if self.kind == "linear":
            s = min(max(s, 0.0), self.h)
            return (2.0 / self.h) * s - s * s / self.h**2
        s = min(max(s, 0.0), self.h)
        nodes = self.nodes
        total = 0.0
        for a, b, va, vb in zip(nodes[:-1], nodes[1:], self.values[:-1], self.values[1:]):
            if s <= a:
                break
            hi = min(s, b)
            # linear segment: integrate exactly up to hi
            t = (hi - a) / (b - a)
            vh = va + (vb - va) * t
            total += 0.5 * (va + vh) * (hi - a)
        return total

    def mass(self, a, b):
        """Exact integral of the weight over [a, b]."""
        return self.cumulative(b) - self.cumulative(a)

    def validate(self, quad_nodes=10_000, tol=1e-8):
        problems = []
        if self.h <= 0:
            problems.append("kernel support width must be positive")
        s = np.linspace(0.0, self.h, quad_nodes)
        w = self(s)
        if np.any(w < -1e-14):
            problems.append("kernel weight must be nonnegative on its support")
        total = np.trapezoid(w, s)
        if abs(total - 1.0) > tol:
            problems.append(f"kernel mass is {total:.3e}, expected 1")
        if abs(self(self.h)) > 1e-12:
            problems.append("kernel weight must vanish at the right end of its support")
        if np.any(np.diff(w) > 1e-14):
            problems.append("kernel weight must be strictly decreasing on its support")
        if problems:
            raise ValidationError(problems)
        return True


# ---------------------------------------------------------------------------
# speed limit and velocity law
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RoadCondition:
    """Piecewise-constant speed limit with a single jump at x = 0."""

    V_minus: float
    V_plus: float

    def __post_init__(self):
        if self.V_minus <= 0 or self.V_plus <= 0:
            raise ValidationError("both speed limits must be strictly positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x < 0.0, self.V_minus, self.V_plus)
        return out if out.ndim else float(out)

    @property
    def V_max(self):
        return max(self.V_minus, self.V_plus)


@dataclass(frozen=True)
class VelocityLaw:
    """Normalized speed as a function of density on [0, 1]."""

    kind: str = "linear"
    _phi: callable = field(default=None, compare=False)
    _phi_prime: callable = field(default=None, compare=False)

    @classmethod
    def linear(cls):
        return cls(kind="linear")

    @classmethod
    def from_callables(cls, phi, phi_prime, validate=True):
        law = cls(kind="custom", _phi=phi, _phi_prime=phi_prime)
        if validate:
            law.validate()
        return law

    @classmethod
    def tabulated(cls, rho_nodes, phi_values, validate=True):
        rho_nodes = np.asarray(rho_nodes, dtype=float)
        phi_values = np.asarray(phi_values, dtype=float)

        def phi(r):
            return np.interp(r, rho_nodes, phi_values)

        slopes = np.diff(phi_values) / np.diff(rho_nodes)
        mids = 0.5 * (rho_nodes[:-1] + rho_nodes[1:])

        def phi_prime(r):
            idx = np.clip(np.searchsorted(mids, r), 0, len(slopes) - 1)
            return slopes[idx]

        law = cls(kind="tabulated", _phi=phi, _phi_prime=phi_prime)
        if validate:
            law.validate()
        return law

    def phi(self, rho):
        if self.kind == "linear":
            return 1.0 - np.asarray(rho, dtype=float) if np.ndim(rho) else 1.0 - rho
        return self._phi(rho)

    def phi_prime(self, rho):
        if self.kind == "linear":
            return np.full_like(np.asarray(rho, dtype=float), -1.0) if np.ndim(rho) else -1.0
        return self._phi_prime(rho)

    def validate(self, grid_nodes=_VALIDATION_GRID):
        problems = []
        rho = np.linspace(0.0, 1.0, grid_nodes)
        ph = np.asarray([self.phi(r) for r in rho]) if self.kind != "linear" else 1.0 - rho
        if abs(ph[-1]) > 1e-10:
            problems.append("velocity law must vanish at density 1")
        if abs(ph[0] - 1.0) > 1e-10:
            problems.append("velocity law must equal 1 at density 0")
        if np.any(np.diff(ph) > 1e-14):
            problems.append("velocity law must be strictly decreasing")
        # concavity of phi, sampled second differences
        d2 = ph[2:] - 2.0 * ph[1:-1] + ph[:-2]
        if np.any(d2 > 1e-10):
            problems.append("velocity law must be concave on [0, 1]")
        # concavity of the flux rho * phi(rho)
        f = rho * ph
        d2f = f[2:] - 2.0 * f[1:-1] + f[:-2]
        if np.any(d2f > 1e-10):
            problems.append("flux rho*phi(rho) must be concave on [0, 1]")
        if problems:
            raise ValidationError(problems)
        return True


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set: car length, kernel, road condition, velocity law."""

    ell: float
    kernel: Kernel
    road: RoadCondition
    law: VelocityLaw

    def __post_init__(self):
        if self.ell <= 0:
            raise ValidationError("car length must be positive")
        if self.ell >= self.kernel.h:
            warnings.warn(
                "car length is not smaller than the averaging horizon; "
                "this is allowed but unusual",
                stacklevel=2,
            )

    @classmethod
    def paper_defaults(cls, ell=0.05, h=0.5, V_minus=2.0, V_plus=1.0):
        return cls(
            ell=float(ell),
            kernel=Kernel.linear(h),
            road=RoadCondition(float(V_minus), float(V_plus)),
            law=VelocityLaw.linear(),
        )

    def with_ell(self, ell):
        return ModelParams(ell=float(ell), kernel=self.kernel, road=self.road, law=self.law)

    def with_horizon(self, h):
        if self.kernel.kind != "linear":
            raise ValidationError("horizon rescaling is only defined for the linear kernel")
        return ModelParams(ell=self.ell, kernel=Kernel.linear(h), road=self.road, law=self.law)


# ---------------------------------------------------------------------------
# flux algebra
# ---------------------------------------------------------------------------

def flux(rho, law=None):
    """Traffic flux rho * phi(rho)."""
    scalar = np.ndim(rho) == 0
    r = np.asarray(rho, dtype=float)
    if np.any((r < 0.0) | (r > 1.0)):
        raise DomainError(f"density must lie in [0, 1], got {rho}")
    ph = law.phi(r) if law is not None else 1.0 - r
    out = r * ph
    return float(out) if scalar else out


def critical_density(law=None):
    """The unique maximizer of the flux, by bisection on its derivative."""
    if law is None:
        law = VelocityLaw.linear()

    def fprime(r):
        return law.phi(r) + r * law.phi_prime(r)

    if fprime(0.0) <= 0.0 or fprime(1.0) >= 0.0:
        raise NoRootError("flux derivative does not change sign on (0, 1)")
    return _bisect(fprime, 0.0, 1.0)


def asymptotic_roots(fbar, V, law=None):
    """The two densities where V * flux equals the given level.

    Returns (rho_low, rho_high) with rho_low <= rho_hat <= rho_high.
    """
    if law is None:
        law = VelocityLaw.linear()
    if fbar < 0.0:
        raise OutOfRangeError("flux level must be nonnegative")
    rho_hat = critical_density(law)
    fmax = V * flux(rho_hat, law)
    if fbar > fmax * (1.0 + 1e-12) + 1e-15:
        raise OutOfRangeError(
            f"flux level {fbar} exceeds the attainable maximum {fmax} for speed {V}"
        )
    if fbar == 0.0:
        return 0.0, 1.0
    if fbar >= fmax:
        return rho_hat, rho_hat

    def g(r):
        return V * flux(r, law) - fbar

    lo = _bisect(g, 0.0, rho_hat)
    hi = _bisect(g, rho_hat, 1.0)
    return lo, hi


@dataclass(frozen=True)
class CriticalDensities:
    """The four flux-level crossings and the flux maximizer."""

    rho_hat: float
    fbar: float
    rho1: float
    rho2: float
    rho3: float
    rho4: float
    case: str  # "case1" (downward speed jump) or "case2" (upward)

    @classmethod
    def compute(cls, fbar, V_minus, V_plus, law=None):
        if law is None:
            law = VelocityLaw.linear()
        rho_hat = critical_density(law)
        case = "case1" if V_minus > V_plus else "case2"
        # outer pair belongs to the faster side, inner pair to the slower one
        V_fast, V_slow = max(V_minus, V_plus), min(V_minus, V_plus)
        rho1, rho4 = asymptotic_roots(fbar, V_fast, law)
        rho2, rho3 = asymptotic_roots(fbar, V_slow, law)
        return cls(rho_hat=rho_hat, fbar=fbar, rho1=rho1, rho2=rho2,
                   rho3=rho3, rho4=rho4, case=case)


# ---------------------------------------------------------------------------
# subcase classification
# ---------------------------------------------------------------------------

class Subcase(str, enum.Enum):
    S1A = "1A"
    S1B = "1B"
    S1C = "1C"
    S1D = "1D"
    S2A = "2A"
    S2B = "2B"
    S2C = "2C"
    S2D = "2D"
    TRIVIAL = "trivial-fbar-zero"
    UNIFORM_CONSTANT = "uniform-constant"
    UNIFORM_WAVE = "uniform-wave"


class Verdict(str, enum.Enum):
    UNIQUE = "unique-profile"
    INFINITE = "infinitely-many-profiles"
    NONE = "no-profile"


class Stability(str, enum.Enum):
    ATTRACTING = "attracting"
    NON_ATTRACTING = "non-attracting"
    NA = "n/a"


_VERDICT_TABLE = {
    Subcase.S1A: (Verdict.UNIQUE, Stability.NON_ATTRACTING),
    Subcase.S1B: (Verdict.INFINITE, Stability.ATTRACTING),
    Subcase.S1C: (Verdict.NONE, Stability.NA),
    Subcase.S1D: (Verdict.NONE, Stability.NA),
    Subcase.S2A: (Verdict.UNIQUE, Stability.NON_ATTRACTING),
    Subcase.S2B: (Verdict.INFINITE, Stability.ATTRACTING),
    Subcase.S2C: (Verdict.NONE, Stability.NA),
    Subcase.S2D: (Verdict.NONE, Stability.NA),
}


@dataclass(frozen=True)
class SubcaseReport:
    """Classification outcome for one pair of asymptotic densities."""

    subcase: Subcase
    rho_minus: float
    rho_plus: float
    fbar: float
    V_minus: float
    V_plus: float
    verdict: Verdict
    stability: Stability
    crit: CriticalDensities
    params: ModelParams = None

    def to_dict(self):
        return {
            "subcase": self.subcase.value,
            "rho_minus": self.rho_minus,
            "rho_plus": self.rho_plus,
            "fbar": self.fbar,
            "V_minus": self.V_minus,
            "V_plus": self.V_plus,
            "verdict": self.verdict.value,
            "stability": self.stability.value,
            "critical_densities": {
                "rho_hat": self.crit.rho_hat,
                "rho1": self.crit.rho1,
                "rho2": self.crit.rho2,
                "rho3": self.crit.rho3,
                "rho4": self.crit.rho4,
            },
        }


def classify(params: ModelParams, rho_minus, rho_plus) -> SubcaseReport:
    """Assign the subcase and its existence / stability verdict.

    The two asymptotic densities must carry the same flux (each side scaled by
    its speed limit); otherwise no profile can connect them and an
    IncompatibleAsymptotesError is raised.
    """
    law = params.law
    V_minus, V_plus = params.road.V_minus, params.road.V_plus
    for name, r in (("rho_minus", rho_minus), ("rho_plus", rho_plus)):
        if not 0.0 <= r <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {r}")
    f_left = V_minus * flux(rho_minus, law)
    f_right = V_plus * flux(rho_plus, law)
    if abs(f_left - f_right) > FLUX_MATCH_TOL:
        raise IncompatibleAsymptotesError(
            f"asymptotic fluxes disagree: {f_left} vs {f_right} "
            f"(no profile can connect these states)"
        )
    fbar = 0.5 * (f_left + f_right)
    crit = CriticalDensities.compute(fbar, V_minus, V_plus, law)
    rho_hat = crit.rho_hat

    if fbar <= 1e-12:
        # degenerate level: densities sit at {0, 1}; only the inverted-step
        # pattern (high on the left of a downward jump, low on the right)
        # fails to admit a profile
        left_high = rho_minus > rho_hat
        right_low = rho_plus <= rho_hat
        verdict = Verdict.NONE if (left_high and right_low) else Verdict.UNIQUE
        return SubcaseReport(Subcase.TRIVIAL, rho_minus, rho_plus, fbar,
                             V_minus, V_plus, verdict, Stability.NA, crit,
                             params=params)

    if V_minus == V_plus:
        # uniform road: not part of the jump-case tables
        if math.isclose(rho_minus, rho_plus, abs_tol=1e-12):
            return SubcaseReport(Subcase.UNIFORM_CONSTANT, rho_minus, rho_plus,
                                 fbar, V_minus, V_plus, Verdict.UNIQUE,
                                 Stability.NA, crit, params=params)
        if rho_minus < rho_plus:
            return SubcaseReport(Subcase.UNIFORM_WAVE, rho_minus, rho_plus,
                                 fbar, V_minus, V_plus, Verdict.INFINITE,
                                 Stability.ATTRACTING, crit, params=params)
        return SubcaseReport(Subcase.UNIFORM_WAVE, rho_minus, rho_plus, fbar,
                             V_minus, V_plus, Verdict.NONE, Stability.NA, crit,
                             params=params)

    case1 = V_minus > V_plus
    left_low = rho_minus <= rho_hat
    right_low = rho_plus <= rho_hat
    table = {
        (True, True): Subcase.S1A if case1 else Subcase.S2A,
        (True, False): Subcase.S1B if case1 else Subcase.S2B,
        (False, False): Subcase.S1C if case1 else Subcase.S2C,
        (False, True): Subcase.S1D if case1 else Subcase.S2D,
    }
    subcase = table[(left_low, right_low)]
    verdict, stability = _VERDICT_TABLE[subcase]
    return SubcaseReport(subcase, rho_minus, rho_plus, fbar, V_minus, V_plus,
                         verdict, stability, crit, params=params)


def classify_from_fbar(params: ModelParams, fbar, subcase) -> SubcaseReport:
    """Classification entry point parameterized by flux level and subcase tag."""
    sub = Subcase(subcase)
    crit = CriticalDensities.compute(
        fbar, params.road.V_minus, params.road.V_plus, params.law
    )
    pairs = {
        Subcase.S1A: (crit.rho1, crit.rho2),
        Subcase.S1B: (crit.rho1, crit.rho3),
        Subcase.S1C: (crit.rho4, crit.rho3),
        Subcase.S1D: (crit.rho4, crit.rho2),
        Subcase.S2A: (crit.rho2, crit.rho1),
        Subcase.S2B: (crit.rho2, crit.rho4),
        Subcase.S2C: (crit.rho3, crit.rho4),
        Subcase.S2D: (crit.rho3, crit.rho1),
    }
    if sub not in pairs:
        raise DomainError(f"subcase tag {subcase!r} cannot be combined with a flux level")
    expected_case = "case1" if sub.value.startswith("1") else "case2"
    if crit.case != expected_case:
        raise ValidationError(
            f"subcase {sub.value} requires a "
            f"{'downward' if expected_case == 'case1' else 'upward'} speed jump"
        )
    rho_minus, rho_plus = pairs[sub]
    return classify(params, rho_minus, rho_plus)
