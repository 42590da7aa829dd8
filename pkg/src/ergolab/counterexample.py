"""A C^r interval map of [0, 3/2] with a positive-measure set of points whose
empirical measures tend to the Dirac mass at 0 while their Lyapunov exponent
is log(lambda)/r > 0.

Layout of the map ``h``:

* ``[0, 1/lambda]``: the affine expansion ``x -> lambda x``.
* ``J_n = [1 - 1/n - 1/(2n^2), 1 - 1/n]`` for ``n0 <= n <= nmax``:
  ``h(x) = g_n + alpha_n f_{n^2}((x - 1 + 1/n) 2 n^2 N_n)``, where
  ``g_n = (1 - 1/(n+1)) lambda^{1 - r^n}`` and ``f_p`` is a 1-periodic
  sawtooth with 2 affine branches of slope +-1 per period.
* everywhere else: Hermite blends of degree 2r+1 that match value and r
  derivatives at each join. The certified properties never look at them.

Every quantity of size ``lambda^{-r^n}`` is held as a natural logarithm,
and points inside the transit region can be passed as :class:`LogPoint`.
"""
from __future__ import annotations

import bisect
import decimal
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.interpolate import BPoly

from .measures import EmpiricalMeasure, TestFunctionFamily, dmetric
from .systems import PhaseSpace, SystemSpec

DOMAIN = (0.0, 1.5)


class CounterexampleError(ValueError):
    pass


@dataclass(frozen=True)
class LogPoint:
    """A positive point stored as its natural logarithm."""

    log: float

    def __float__(self):
        return math.exp(self.log)


def _hermite(x0, x1, left, right):
    """Degree 2r+1 polynomial on [x0, x1] matching the given derivative stacks."""
    return BPoly.from_derivatives([x0, x1], [list(left), list(right)])


def _stack(value, slope, r):
    return [value, slope] + [0.0] * (r - 1)


class TentFamilyMember:
    """The 1-periodic C^r sawtooth ``f_p``.

    On one period the affine branches are
    ``[1/p, 1/2 - 1/p]``, where ``f_p(u) = u - 1/2 + 1/p`` (slope +1), and
    ``[1/2 + 1/p, 1 - 1/p]``, where ``f_p(u) = 1/2 + 1/p - u`` (slope -1).
    Both branches therefore map onto ``[-(1/2 - 2/p), 0]``. ``f_p`` vanishes
    with an order-r tangency at 0, 1/2 and 1.
    """

    def __init__(self, p: int, r: int):
        if p < 5:
            raise CounterexampleError("tent family needs p >= 5 so that branches are nondegenerate")
        self.p, self.r = p, r
        a = 1.0 / p
        depth = -(0.5 - 2.0 / p)
        self.depth = depth
        self.knots = [0.0, a, 0.5 - a, 0.5, 0.5 + a, 1.0 - a, 1.0]
        flat = _stack(0.0, 0.0, r)
        self._pieces = [
            _hermite(0.0, a, flat, _stack(depth, 1.0, r)),
            None,
            _hermite(0.5 - a, 0.5, _stack(0.0, 1.0, r), flat),
            _hermite(0.5, 0.5 + a, flat, _stack(0.0, -1.0, r)),
            None,
            _hermite(1.0 - a, 1.0, _stack(depth, -1.0, r), flat),
        ]

    @property
    def branches(self):
        a = 1.0 / self.p
        return [(a, 0.5 - a, 1.0), (0.5 + a, 1.0 - a, -1.0)]

    def _eval(self, u: float, nu: int) -> float:
        w = u - math.floor(u)
        i = min(bisect.bisect_right(self.knots, w) - 1, 5)
        a = 1.0 / self.p
        if i == 1:
            return [w - 0.5 + a, 1.0][nu] if nu < 2 else 0.0
        if i == 4:
            return [0.5 + a - w, -1.0][nu] if nu < 2 else 0.0
        return float(self._pieces[i](w, nu))

    def value(self, u: float) -> float:
        return self._eval(u, 0)

    def derivative(self, u: float) -> float:
        return self._eval(u, 1)


@dataclass
class StageData:
    n: int
    J: tuple
    log_g: float
    log_alpha: float
    log_N: float
    N: int  # exact, possibly with hundreds of digits
    p: int

    @property
    def branch_count(self) -> int:
        return 2 * self.N

    @property
    def log_branch_count(self) -> float:
        return math.log(2) + self.log_N

    @property
    def log_slope(self) -> float:
        """log |h'| on the affine branches: alpha_n * 2 n^2 N_n (tent slope 1)."""
        return self.log_alpha + math.log(2 * self.n**2) + self.log_N

    @property
    def log_branch_length(self) -> float:
        """Length of one affine branch in x."""
        return math.log(0.5 - 2.0 / self.p) - math.log(2 * self.n**2) - self.log_N

    def branch_fraction(self) -> float:
        """Total affine-branch length over |J_n|."""
        logfrac = self.log_branch_count + self.log_branch_length - math.log(self.J[1] - self.J[0])
        return math.exp(logfrac)

    def branch_interval(self, i: int) -> tuple:
        """x-endpoints of affine branch i (0 <= i < 2 N_n), listed left to right."""
        if not 0 <= i < 2 * self.N:
            raise IndexError(i)
        u0 = Fraction(i // 2 - self.N)
        a, half = Fraction(1, self.p), Fraction(1, 2)
        lo, hi = (u0 + a, u0 + half - a) if i % 2 == 0 else (u0 + half + a, u0 + 1 - a)
        scale = 2 * self.n**2 * self.N
        base = 1 - Fraction(1, self.n)
        return float(base + lo / scale), float(base + hi / scale)

    def first_condition_residual(self, r: int, lam: float) -> float:
        """Relative error of ``lambda^{r^n - 1} alpha_n (1/2 - 2/n^2) = 1/(2(n+1)^2)``."""
        lhs = (r**self.n - 1) * math.log(lam) + self.log_alpha + math.log(0.5 - 2.0 / self.n**2)
        rhs = -math.log(2 * (self.n + 1) ** 2)
        return abs(math.expm1(lhs - rhs))

    def norm_proxy(self, r: int) -> float:
        """``n^{2r} alpha_n (2 n^2 N_n)^r``, which should be close to 1/n."""
        return math.exp(2 * r * math.log(self.n) + self.log_alpha + r * (math.log(2 * self.n**2) + self.log_N))

    def to_record(self, r: int, lam: float) -> dict:
        return {
            "n": self.n,
            "J": [self.J[0], self.J[1]],
            "log10_g": self.log_g / math.log(10),
            "log10_alpha": self.log_alpha / math.log(10),
            "log10_N": self.log_N / math.log(10),
            "N": self.N if self.N < 2**53 else None,
            "first_condition_residual": self.first_condition_residual(r, lam),
            "norm_proxy_times_n": self.norm_proxy(r) * self.n,
            "branch_fraction": self.branch_fraction(),
        }


@dataclass
class ScheduleEntry:
    n: int
    branch_index: list
    transit_steps: int
    landing: tuple
    ok: bool
    max_landing_error: float
    first_failure: str | None = None

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "branches_checked": self.branch_index,
            "transit_steps": self.transit_steps,
            "landing": list(self.landing),
            "ok": self.ok,
            "max_landing_error": self.max_landing_error,
            "first_failure": self.first_failure,
        }


def J_interval(n: int) -> tuple:
    return (1.0 - 1.0 / n - 1.0 / (2.0 * n * n), 1.0 - 1.0 / n)


@dataclass
class CounterexampleMap:
    r: int
    lam: float
    n0: int
    nmax: int
    stages: dict = field(default_factory=dict)
    tents: dict = field(default_factory=dict)
    blends: list = field(default_factory=list)

    @property
    def log_lam(self) -> float:
        return math.log(self.lam)

    # -- evaluation ------------------------------------------------------

    def _piece(self, x: float):
        """Locate x: ('affine'|'stage'|'blend'|'zero', payload)."""
        if x <= 1.0 / self.lam:
            return "affine", None
        for n in range(self.n0, self.nmax + 1):
            lo, hi = self.stages[n].J
            if lo <= x <= hi:
                return "stage", self.stages[n]
        if x >= 1.0:
            return "zero", None
        for x0, x1, poly in self.blends:
            if x0 <= x <= x1:
                return "blend", poly
        raise CounterexampleError(f"no piece covers x={x!r}")

    def eval_h(self, x):
        """h(x). Accepts floats or LogPoints; LogPoints stay in log space on the affine piece."""
        if isinstance(x, LogPoint):
            if x.log <= -self.log_lam:
                return LogPoint(x.log + self.log_lam)
            x = float(x)
        x = float(x)
        if not DOMAIN[0] <= x <= DOMAIN[1]:
            raise CounterexampleError(f"x={x!r} outside [0, 3/2]")
        kind, data = self._piece(x)
        if kind == "affine":
            return self.lam * x
        if kind == "zero":
            return 0.0
        if kind == "blend":
            return float(data(x))
        st = data
        return math.exp(st.log_g) + math.exp(st.log_alpha) * self.tents[st.n].value(self._phase(st, x))

    def derivative(self, x: float) -> float:
        x = float(x)
        kind, data = self._piece(x)
        if kind == "affine":
            return self.lam
        if kind == "zero":
            return 0.0
        if kind == "blend":
            return float(data(x, 1))
        st = data
        return math.exp(st.log_slope) * self.tents[st.n].derivative(self._phase(st, x))

    @staticmethod
    def _phase(st: StageData, x: float) -> float:
        """Fractional part of ``(x - 1 + 1/n) 2 n^2 N_n``, computed exactly.

        N_n can have hundreds of digits, far beyond float resolution, so the
        float x is converted to an exact rational first.
        """
        u = (Fraction(x) - 1 + Fraction(1, st.n)) * (2 * st.n**2 * st.N)
        return float(u - math.floor(u))

    def system(self) -> SystemSpec:
        veval = np.vectorize(lambda v: self.eval_h(v), otypes=[float])
        vder = np.vectorize(self.derivative, otypes=[float])
        return SystemSpec(
            name="counterexample",
            space=PhaseSpace.interval(*DOMAIN),
            map=lambda x: veval(x),
            jacobian=lambda x: vder(x).reshape(len(x), 1, 1),
            smoothness_class="c_r",
            r=self.r,
            params={"r": self.r, "lambda": self.lam, "n0": self.n0, "nmax": self.nmax},
            step=lambda p: (self.eval_h(p[0]),),
        )

    # -- certified properties -------------------------------------------

    def _branch_image_logs(self, st: StageData):
        """log h at the two ends of any affine branch: f_p is depth or 0 there."""
        ratio = math.exp(st.log_alpha - st.log_g)
        depth = self.tents[st.n].depth
        return st.log_g + math.log1p(ratio * depth), st.log_g

    def verify_schedule(self, n: int, branches=None) -> ScheduleEntry:
        """Check ``h^k(I_n) in [0, 1/lambda]`` for k < r^n and ``h^{r^n}(I_n) = J_{n+1}``.

        Every branch has the same image under h because ``f_p`` is
        1-periodic, so the check runs on the branch endpoints' common image.
        For stages where branch positions fit in a float, the named branches
        (default: first and last) are also pushed through :meth:`eval_h` from
        their actual x-endpoints.
        """
        if not self.n0 <= n < self.nmax:
            raise CounterexampleError(f"schedule verifiable for n0 <= n < nmax, got {n}")
        st = self.stages[n]
        steps = self.r**n - 1
        target = self.stages[n + 1].J
        starts = list(self._branch_image_logs(st))
        checked = []
        if st.N < 10**6:
            idx = branches if branches is not None else [0, 2 * st.N - 1]
            for i in idx:
                a, b = st.branch_interval(i)
                for end in (a, b):
                    starts.append(math.log(self.eval_h(end)))
                checked.append(int(i))
        failure = None
        landed = []
        for k0, lg in enumerate(starts):
            pt = LogPoint(lg)
            for k in range(1, steps + 1):
                # pt is h^k(endpoint)
                if pt.log > -self.log_lam + 1e-12:
                    failure = failure or f"endpoint {k0}: h^{k} = {float(pt)!r} leaves [0, 1/lambda]"
                    break
                pt = self.eval_h(pt)
            landed.append(float(pt))
        lo, hi = target
        errs = [min(abs(v - lo) / lo, abs(v - hi) / hi) for v in landed]
        # both ends of the target must be hit
        hit_lo = any(abs(v - lo) / lo <= 1e-9 for v in landed)
        hit_hi = any(abs(v - hi) / hi <= 1e-9 for v in landed)
        worst = max(errs)
        if failure is None and not (hit_lo and hit_hi and worst <= 1e-9):
            failure = f"landing misses J_{n + 1}: relative error {worst:.3g}"
        return ScheduleEntry(n, checked, steps, target, failure is None, worst, failure)

    def cantor_measure(self, up_to: int) -> dict:
        """Leb(E_{n0}) prod_{n0 < n <= up_to} (1 - 4/n^2), plus its telescoped forms."""
        if up_to < self.n0:
            raise CounterexampleError("up_to must be >= n0")
        n0 = self.n0
        lo, hi = J_interval(n0)
        leb0 = (hi - lo) * (1.0 - 4.0 / n0**2)
        prod = 1.0
        for n in range(n0 + 1, up_to + 1):
            prod *= 1.0 - 4.0 / n**2
        a, b = n0 + 1, up_to
        if b >= a:
            exact = Fraction((a - 2) * (a - 1), (b - 1) * b) * Fraction((b + 1) * (b + 2), a * (a + 1))
        else:
            exact = Fraction(1)
        limit = Fraction((a - 2) * (a - 1), a * (a + 1))
        return {
            "leb_E_n0": leb0,
            "partial_product": prod,
            "partial_product_exact": float(exact),
            "limit_product": float(limit),
            "partial_measure": leb0 * prod,
            "limit_measure": leb0 * float(limit),
        }

    def surviving_measure(self, up_to: int) -> float:
        """Measure of the points of J_{n0} that follow the branch schedule through stage up_to.

        This is computed from the constructed stages. The branch lengths give
        |E_{n0}|. Each later stage keeps the fraction of J_n covered by its
        branches, because h^{r^n} maps every branch affinely onto J_{n+1}.
        """
        st = self.stages[self.n0]
        meas = math.exp(st.log_branch_count + st.log_branch_length)
        for n in range(self.n0 + 1, up_to + 1):
            meas *= self.stages[n].branch_fraction()
        return meas

    def stage_log_derivative(self, n: int) -> float:
        """Sum of log|h'| over one stage: r^n - 1 transit steps plus one branch step."""
        return (self.r**n - 1) * self.log_lam + self.stages[n].log_slope

    def exponent_on_E(self, stages: int, detail: bool = False):
        """Running Lyapunov exponent of an E-orbit after ``stages`` full stages."""
        if stages < 1:
            raise CounterexampleError("stages must be >= 1")
        last = self.n0 + stages - 1
        if last > self.nmax:
            raise CounterexampleError(f"only stages up to {self.nmax} are built")
        total, steps, curve = 0.0, 0, []
        for n in range(self.n0, last + 1):
            total += self.stage_log_derivative(n)
            steps += self.r**n
            curve.append({"n": n, "steps": steps, "exponent": total / steps})
        if detail:
            return total / steps, curve
        return total / steps

    def symbolic_orbit_logs(self, orbit_steps: int):
        """log-values and log|h'| along a tracked E-orbit.

        In each stage the tracked point is the left end of the first affine
        branch of J_n. Returns arrays (log x_k, log |h'(x_k)|, stage of k).
        """
        logs, ders, stage_of = [], [], []
        n = self.n0
        while len(logs) < orbit_steps:
            if n > self.nmax:
                raise CounterexampleError("orbit_steps exceeds the constructed stages")
            st = self.stages[n]
            x0 = st.branch_interval(0)[0]
            logs.append(math.log(x0))
            ders.append(st.log_slope)
            stage_of.append(n)
            first = self._branch_image_logs(st)[0]
            for k in range(1, self.r**n):
                logs.append(first + (k - 1) * self.log_lam)
                ders.append(self.log_lam)
                stage_of.append(n)
            n += 1
        return np.array(logs[:orbit_steps]), np.array(ders[:orbit_steps]), np.array(stage_of[:orbit_steps])

    def full_orbit_steps(self, through: int | None = None) -> int:
        through = self.nmax if through is None else through
        return sum(self.r**n for n in range(self.n0, through + 1))

    def certify(self, orbit_steps: int | None = None, delta: float = 0.01,
                exponent_rtol: float = 0.05, dirac_tol: float = 0.05, nphi: int = 33) -> "CertificationReport":
        if orbit_steps is None:
            orbit_steps = self.full_orbit_steps()
        if orbit_steps < self.full_orbit_steps(self.n0 + 2):
            raise CounterexampleError("orbit_steps must cover at least 3 full stages")
        logs, ders, stage_of = self.symbolic_orbit_logs(orbit_steps)
        frac = float(np.mean(logs < math.log(delta)))
        frac_needed = 1.0 - 10.0 / 2**self.n0
        cum = np.cumsum(ders) / np.arange(1, len(ders) + 1)
        ends = [int(np.flatnonzero(stage_of == n)[-1]) for n in np.unique(stage_of)]
        curve = [{"n": int(stage_of[i]), "steps": i + 1, "exponent": float(cum[i])} for i in ends]
        target = self.log_lam / self.r
        exponent = float(cum[-1])
        values = np.exp(logs)  # underflow to 0.0 is harmless here
        mu = EmpiricalMeasure.from_points(values.reshape(-1, 1))
        fam = TestFunctionFamily(PhaseSpace.interval(*DOMAIN), nphi)
        dist = dmetric(mu, EmpiricalMeasure.dirac([0.0]), fam)
        schedule = [self.verify_schedule(n) for n in range(self.n0, self.nmax)]
        conditions = [
            {
                "n": n,
                "first_condition_residual": self.stages[n].first_condition_residual(self.r, self.lam),
                "norm_proxy_times_n": self.stages[n].norm_proxy(self.r) * n,
            }
            for n in range(self.n0, self.nmax + 1)
        ]
        cond_ok = all(
            c["first_condition_residual"] <= 1e-12 and 0.5 <= c["norm_proxy_times_n"] <= 2.0 for c in conditions
        )
        measures = [dict(self.cantor_measure(q), up_to=q) for q in range(self.n0, self.nmax + 1)]
        checks = {
            "parameter_conditions": cond_ok,
            "schedule": all(s.ok for s in schedule),
            "time_near_zero": frac >= frac_needed,
            "exponent": abs(exponent - target) <= exponent_rtol * target,
            "dirac_limit": dist < dirac_tol,
        }
        return CertificationReport(
            params={"r": self.r, "lambda": self.lam, "n0": self.n0, "nmax": self.nmax},
            stages=[self.stages[n].to_record(self.r, self.lam) for n in range(self.n0, self.nmax + 1)],
            conditions=conditions,
            schedule=schedule,
            orbit_steps=orbit_steps,
            time_fraction_near_zero=frac,
            time_fraction_needed=frac_needed,
            exponent=exponent,
            exponent_target=target,
            exponent_curve=curve,
            dirac_distance=dist,
            measures=measures,
            checks=checks,
        )


@dataclass
class CertificationReport:
    params: dict
    stages: list
    conditions: list
    schedule: list
    orbit_steps: int
    time_fraction_near_zero: float
    time_fraction_needed: float
    exponent: float
    exponent_target: float
    exponent_curve: list
    dirac_distance: float
    measures: list
    checks: dict

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_record(self) -> dict:
        return {
            "params": self.params,
            "stages": self.stages,
            "conditions": self.conditions,
            "schedule": [s.to_record() for s in self.schedule],
            "orbit_steps": self.orbit_steps,
            "time_fraction_near_zero": self.time_fraction_near_zero,
            "time_fraction_needed": self.time_fraction_needed,
            "exponent": self.exponent,
            "exponent_target": self.exponent_target,
            "exponent_curve": self.exponent_curve,
            "dirac_distance": self.dirac_distance,
            "measures": self.measures,
            "checks": self.checks,
            "ok": self.ok,
        }


def _stage(n: int, r: int, lam: float) -> StageData:
    log_lam = math.log(lam)
    rn = r**n
    log_g = math.log(1.0 - 1.0 / (n + 1)) - (rn - 1) * log_lam
    log_alpha = -math.log(2 * (n + 1) ** 2) - math.log(0.5 - 2.0 / n**2) - (rn - 1) * log_lam
    # n^{2r} alpha (2 n^2 N)^r = 1/n
    log_N_real = (-(2 * r + 1) * math.log(n) - log_alpha) / r - math.log(2 * n**2)
    with decimal.localcontext() as ctx:
        ctx.prec = max(30, int(abs(log_N_real) / math.log(10)) + 30)
        N = int(decimal.Decimal(log_N_real).exp().to_integral_value(decimal.ROUND_HALF_EVEN))
    if N < 1:
        raise CounterexampleError(f"stage {n}: N_n rounds to 0; parameters too extreme")
    log_N = math.log(N)
    return StageData(n=n, J=J_interval(n), log_g=log_g, log_alpha=log_alpha, log_N=log_N, N=N, p=n * n)


def build(r: int = 2, lam: float = 2.0, n0: int = 5, nmax: int = 12) -> CounterexampleMap:
    """Construct h for smoothness r, slope lambda, and stages n0..nmax."""
    if r < 2:
        raise CounterexampleError("r must be >= 2: for r = 1 the transit time r^n - 1 vanishes")
    if not lam > 1:
        raise CounterexampleError("lambda must exceed 1")
    if n0 < 3:
        raise CounterexampleError("n0 must be >= 3 so that 1/2 - 2/n^2 > 0")
    if nmax <= n0:
        raise CounterexampleError("nmax must exceed n0")
    if r**nmax * math.log(lam) > 1e300:
        raise CounterexampleError("lambda^{r^nmax} is not representable even in log space")
    if 1.0 / lam >= J_interval(n0)[0]:
        raise CounterexampleError("need 1/lambda below J_{n0}; raise lambda or n0")
    hm = CounterexampleMap(r=r, lam=lam, n0=n0, nmax=nmax)
    for n in range(n0, nmax + 1):
        hm.stages[n] = _stage(n, r, lam)
        hm.tents[n] = TentFamilyMember(n * n, r)
    g = {n: math.exp(hm.stages[n].log_g) for n in hm.stages}
    blends = [(1.0 / lam, J_interval(n0)[0],
               _hermite(1.0 / lam, J_interval(n0)[0], _stack(1.0, lam, r), _stack(g[n0], 0.0, r)))]
    for n in range(n0, nmax):
        x0, x1 = J_interval(n)[1], J_interval(n + 1)[0]
        blends.append((x0, x1, _hermite(x0, x1, _stack(g[n], 0.0, r), _stack(g[n + 1], 0.0, r))))
    x0 = J_interval(nmax)[1]
    blends.append((x0, 1.0, _hermite(x0, 1.0, _stack(g[nmax], 0.0, r), _stack(0.0, 0.0, r))))
    hm.blends = blends
    for x0, x1, poly in blends:
        vals = poly(np.linspace(x0, x1, 513))
        if vals.min() < 0.0 or vals.max() > DOMAIN[1]:
            raise CounterexampleError(f"background blend on [{x0:.4g}, {x1:.4g}] leaves [0, 3/2]")
    return hm
