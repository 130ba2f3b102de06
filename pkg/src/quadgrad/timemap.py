"""Phase-plane analysis of the one-dimensional autonomous problem.

With constant coefficients on [-T/2, T/2] the transformed unknown
v = exp(mu u) - 1 solves

    -v'' = g(v),   g(v) = lam c (1+v) ln(1+v) + mu h (1+v),   v(+-T/2) = 0,

a Hamiltonian system with energy E = v'^2/2 + G(v), G' = g, G(0) = 0.
Only the product lam*c enters the ODE; c is kept for reporting.
Solutions correspond to shots v(-T/2) = 0, v'(-T/2) = s with v(T/2) = 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from numba import njit
from scipy import integrate, optimize

from .errors import ClassificationError, DomainError, InputError, UnboundedOrbitError
from .grid import format_float

CLASSES = ("positive", "negative", "sign_changing", "trivial")
BLOWUP = 1e8


@dataclass(frozen=True)
class PhaseParams:
    lam: float
    mu: float
    h: float
    c: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise InputError(f"mu must be positive, got {self.mu}")
        if not self.c > 0:
            raise InputError(f"c must be positive, got {self.c}")
        if not self.T > 0:
            raise InputError(f"T must be positive, got {self.T}")
        if self.lam < 0:
            raise InputError(f"lambda must be >= 0, got {self.lam}")

    @property
    def lc(self) -> float:
        return self.lam * self.c

    @property
    def muh(self) -> float:
        return self.mu * self.h

    def with_T(self, T: float) -> "PhaseParams":
        return PhaseParams(self.lam, self.mu, self.h, self.c, T)


def _check_domain(v):
    v = np.asarray(v, dtype=float)
    if np.any(~(v > -1)):
        raise DomainError("phase-plane functions need v > -1")
    return v


def g_eval(params: PhaseParams, v):
    """g(v) = lam c (1+v) ln(1+v) + mu h v + mu h."""
    x = _check_domain(v)
    out = (1.0 + x) * (params.lc * np.log1p(x) + params.muh)
    return float(out) if np.ndim(v) == 0 else out


def g_prime(params: PhaseParams, v):
    x = _check_domain(v)
    out = params.lc * (np.log1p(x) + 1.0) + params.muh
    return float(out) if np.ndim(v) == 0 else out


def _xlogx_integral(x: np.ndarray) -> np.ndarray:
    """int_0^x (1+t) ln(1+t) dt, with a series near 0 to avoid cancellation."""
    out = np.empty_like(x)
    small = np.abs(x) <= 0.1
    xs = x[small]
    acc = xs * xs / 2.0
    power = xs * xs
    for n in range(2, 32):
        power = power * xs
        acc = acc + (-1) ** n * power / ((n + 1) * n * (n - 1))
    out[small] = acc
    xl = x[~small]
    out[~small] = (2.0 * (1.0 + xl) ** 2 * np.log1p(xl) - xl * (2.0 + xl)) / 4.0
    return out


def G_eval(params: PhaseParams, v):
    """Closed-form antiderivative of g with G(0) = 0.

    G(v) = lam c [(1+v)^2 (2 ln(1+v) - 1) + 1]/4 + mu h (v^2/2 + v).
    """
    x = np.atleast_1d(_check_domain(v)).astype(float)
    out = params.lc * _xlogx_integral(x) + params.muh * (x * x / 2.0 + x)
    return float(out[0]) if np.ndim(v) == 0 else out.reshape(np.shape(v))


def G_at_minus_one(params: PhaseParams) -> float:
    """Limit of G at v = -1: lam c / 4 - mu h / 2."""
    return params.lc / 4.0 - params.muh / 2.0


class Equilibrium(NamedTuple):
    v: float
    kind: str  # "center" or "saddle"


def equilibria(params: PhaseParams, v_max_search: float = 1e6, n_scan: int = 4001) -> List[Equilibrium]:
    """Roots of g on (-1, v_max_search] by sign scan plus Brent refinement."""
    if params.lc == 0 and params.muh == 0:
        raise ClassificationError("g vanishes identically: every point is an equilibrium")
    # scan in z = ln(1+v), which spreads (-1, v_max] evenly
    z = np.linspace(-30.0, math.log1p(v_max_search), n_scan)
    v = np.expm1(z)
    gv = g_eval(params, v)
    out = []
    for i in range(n_scan - 1):
        if gv[i] == 0:
            root = v[i]
        elif gv[i] * gv[i + 1] < 0:
            root = optimize.brentq(lambda x: g_eval(params, x), v[i], v[i + 1],
                                   xtol=1e-14, rtol=4 * np.finfo(float).eps)
        else:
            continue
        kind = "center" if g_prime(params, root) > 0 else "saddle"
        out.append(Equilibrium(float(root), kind))
    return out


def case_classify(params: PhaseParams) -> str:
    """Case1: 0 <= lam c < 2 mu h; Case2: lam c > 2 mu h > 0; Case3: h < 0."""
    if params.h == 0:
        return "H_zero"
    if params.h < 0:
        return "Case3"
    if params.lc < 2.0 * params.muh:
        return "Case1"
    if params.lc > 2.0 * params.muh:
        return "Case2"
    return "boundary"


# ----------------------------------------------------------------------------
# time maps


def _G_scalar(lc: float, muh: float, v: float) -> float:
    if abs(v) <= 0.1:
        acc, power = v * v / 2.0, v * v
        for n in range(2, 32):
            power *= v
            acc += (-1) ** n * power / ((n + 1) * n * (n - 1))
    else:
        acc = (2.0 * (1.0 + v) ** 2 * math.log1p(v) - v * (2.0 + v)) / 4.0
    return lc * acc + muh * (v * v / 2.0 + v)


def _turning_point(params: PhaseParams, E: float, start: float = 0.0) -> float:
    """First v > start with G(v) = E (G < E on [start, v))."""
    lc, muh = params.lc, params.muh
    lo = start
    hi = max(1e-3, 2.0 * abs(start))
    while _G_scalar(lc, muh, hi) < E:
        lo, hi = hi, 2.0 * hi
        if hi > 1e15:
            raise UnboundedOrbitError(f"no turning point for energy {E:.6g}: orbit escapes")
    return optimize.brentq(lambda x: _G_scalar(lc, muh, x) - E, lo, hi,
                           xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


class _Gap:
    """level - G(vt - delta), Taylor-expanded about vt for small delta."""

    def __init__(self, params: PhaseParams, vt: float, level: float):
        lc, muh = params.lc, params.muh
        self.lc, self.muh, self.vt, self.level = lc, muh, vt, level
        one = 1.0 + vt
        self.c0 = level - _G_scalar(lc, muh, vt)
        self.g = one * (lc * math.log1p(vt) + muh)
        self.g1 = lc * (math.log1p(vt) + 1.0) + muh
        self.g2 = lc / one
        self.g3 = -lc / one ** 2
        self.cut = 1e-3 * max(abs(vt), 1e-300)

    def __call__(self, delta: float) -> float:
        if delta < self.cut:
            return (self.c0 + self.g * delta - self.g1 * delta ** 2 / 2.0
                    + self.g2 * delta ** 3 / 6.0 - self.g3 * delta ** 4 / 24.0)
        return self.level - _G_scalar(self.lc, self.muh, self.vt - delta)


def time_map_positive(params: PhaseParams, a: float) -> float:
    """Transit time T_+(a) of the orbit from (0, a) through v > 0 back to v = 0.

    Uses v = v_max (1 - w^2), which removes the square-root singularity at
    the turning point v_max.
    """
    if not a > 0:
        raise InputError("time_map_positive needs a > 0")
    E = 0.5 * a * a
    vmax = _turning_point(params, E)
    gmax = g_eval(params, vmax)
    if not gmax > 1e-12 * (1.0 + abs(params.lc) + abs(params.muh)):
        raise ClassificationError(f"degenerate turning point at v = {vmax:.6g}")

    gap = _Gap(params, vmax, E)

    def integrand(w):
        if w == 0:
            return 2.0 * vmax / math.sqrt(2.0 * gmax * vmax)
        return 2.0 * vmax * w / math.sqrt(2.0 * max(gap(vmax * w * w), 1e-300))

    # when g(0) < 0 the integrand has a layer of width ~E/|g(0)| near v = 0
    # (w = 1); log-spaced breakpoints let the adaptive rule resolve it
    points = []
    if params.muh < 0:
        v = E / -params.muh
        while v < 0.5 * vmax:
            points.append(math.sqrt(1.0 - v / vmax))
            v *= 10.0
    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-11, limit=400,
                            points=sorted(points) or None)
    return 2.0 * val


@dataclass(eq=False)
class TimeMapTable:
    a_values: np.ndarray
    T_plus: np.ndarray
    T0: Optional[float] = None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["a", "T_plus"])
            for a, t in zip(self.a_values, self.T_plus):
                w.writerow([format_float(a), format_float(t)])


def time_map_table(params: PhaseParams, a_lo: float = 1e-4, a_hi: float = 1e4,
                   n: int = 161) -> TimeMapTable:
    a = np.logspace(math.log10(a_lo), math.log10(a_hi), n)
    return TimeMapTable(a, np.array([time_map_positive(params, x) for x in a]))


def find_T0(params: PhaseParams, a_lo: float = 1e-4, a_hi: float = 1e4, n: int = 161,
            table: Optional[TimeMapTable] = None) -> float:
    """sup of T_+ over [a_lo, a_hi]: discrete argmax refined by bounded golden search."""
    kind = case_classify(params)
    if kind != "Case1":
        raise ClassificationError(f"T0 is defined for Case1, got {kind}")
    tab = time_map_table(params, a_lo, a_hi, n) if table is None else table
    i = int(np.argmax(tab.T_plus))
    la = np.log(tab.a_values)
    lo, hi = la[max(i - 1, 0)], la[min(i + 1, len(la) - 1)]
    best = float(tab.T_plus[i])
    if hi > lo:
        res = optimize.minimize_scalar(lambda x: -time_map_positive(params, math.exp(x)),
                                       bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10})
        best = max(best, -float(res.fun))
    tab.T0 = best
    return best


def find_T1(params: PhaseParams) -> float:
    """Period of the zero-energy orbit, whose minimum is v = 0 (Case 3).

    Its turning points are 0 and v_r > v*, with G(v_r) = 0; the substitution
    v = v_r (1 - cos t)/2 removes both square-root singularities.
    """
    if case_classify(params) != "Case3":
        raise ClassificationError("T1 needs h < 0")
    if params.lc == 0:
        raise ClassificationError("T1 needs lam c > 0 (no center otherwise)")
    centers = [e for e in equilibria(params) if e.kind == "center" and e.v > 0]
    if not centers:
        raise ClassificationError("no positive center: closed zero-energy orbit absent")
    vstar = centers[0].v
    vr = _turning_point(params, 0.0, start=vstar)
    scale = abs(params.lc) + abs(params.muh)

    gap = _Gap(params, vr, 0.0)
    gap.c0 = 0.0  # G(v_r) = 0 by construction

    def minus_G(v):
        # accurate near both ends: series at 0, Taylor at v_r
        if v < 0.5 * vr:
            return -_G_scalar(params.lc, params.muh, v)
        return gap(vr - v)

    def integrand(t):
        v = 0.5 * vr * (1.0 - math.cos(t))
        if t == 0:
            return vr / math.sqrt(-params.muh * vr / 2.0)
        val = minus_G(v)
        if not val > 0:
            return 0.0
        return vr * math.sin(t) / math.sqrt(2.0 * val)

    val, _ = integrate.quad(integrand, 0.0, math.pi, epsabs=0.0, epsrel=1e-11, limit=400)
    if not math.isfinite(val) or scale == 0:
        raise ClassificationError("T1 quadrature failed")
    return val


def transit_time(params: PhaseParams, a: float, t_max: float = 1e3) -> float:
    """Time for the ODE solution from (0, a) to return to v = 0 (adaptive RK)."""
    def rhs(t, y):
        return [y[1], -g_eval(params, y[0])]

    def hit(t, y):
        return y[0]
    hit.terminal = True
    hit.direction = -1

    def escape(t, y):
        return y[0] + 1.0 - 1e-12
    escape.terminal = True

    t0 = 1e-6 * min(1.0, 1.0 / a)
    # step off v = 0 with a Taylor start so the event does not fire at t = 0
    y0 = [a * t0 - 0.5 * params.muh * t0 * t0, a - params.muh * t0]
    # with g(0) < 0 the crossing is a dip of duration ~2a/|mu h|; events are
    # only seen at step ends, so the step must not jump over it
    max_step = 0.25 * a / -params.muh if params.muh < 0 else math.inf
    sol = integrate.solve_ivp(rhs, (t0, t_max), y0, method="DOP853", rtol=1e-13, atol=1e-14,
                              events=(hit, escape), max_step=max_step)
    if len(sol.t_events[0]) == 0:
        raise UnboundedOrbitError(f"orbit from (0, {a:.6g}) did not return to v = 0")
    return float(sol.t_events[0][0])


# ----------------------------------------------------------------------------
# shooting


class ShootResult(NamedTuple):
    s: float
    end_value: float
    admissible: bool
    classification: Optional[str]
    turns: int
    energy_drift: float = 0.0
    resolution_limited: bool = False


class _Batch(NamedTuple):
    end: np.ndarray
    admissible: np.ndarray
    crossings: np.ndarray
    first_sign: np.ndarray
    drift: np.ndarray


@njit(cache=True)
def _G_jit(lc, muh, v):
    if abs(v) <= 0.1:
        acc = v * v / 2.0
        power = v * v
        sign = 1.0
        for n in range(2, 32):
            power *= v
            acc += sign * power / ((n + 1) * n * (n - 1))
            sign = -sign
    else:
        acc = (2.0 * (1.0 + v) ** 2 * math.log1p(v) - v * (2.0 + v)) / 4.0
    return lc * acc + muh * (v * v / 2.0 + v)


@njit(cache=True)
def _shoot_kernel(lc, muh, T, s, n_steps, blowup):
    m = s.size
    end = np.zeros(m)
    alive = np.ones(m, dtype=np.bool_)
    crossings = np.zeros(m, dtype=np.int64)
    first_sign = np.zeros(m)
    drift = np.zeros(m)
    dt = T / n_steps
    for i in range(m):
        v = 0.0
        w = s[i]
        E0 = 0.5 * w * w
        scale = max(abs(E0), 1e-300)
        worst = 0.0
        prev = 0.0
        ok = True
        for step in range(1, n_steps + 1):
            k1v = w
            k1w = -(1.0 + v) * (lc * math.log1p(v) + muh)
            x = v + 0.5 * dt * k1v
            if x <= -1.0:
                ok = False
                break
            k2v = w + 0.5 * dt * k1w
            k2w = -(1.0 + x) * (lc * math.log1p(x) + muh)
            x = v + 0.5 * dt * k2v
            if x <= -1.0:
                ok = False
                break
            k3v = w + 0.5 * dt * k2w
            k3w = -(1.0 + x) * (lc * math.log1p(x) + muh)
            x = v + dt * k3v
            if x <= -1.0:
                ok = False
                break
            k4v = w + dt * k3w
            k4w = -(1.0 + x) * (lc * math.log1p(x) + muh)
            nv = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            nw = w + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
            if not (nv > -1.0) or abs(nv) > blowup or not math.isfinite(nw):
                ok = False
                break
            v = nv
            w = nw
            if step < n_steps and v != 0.0:
                sg = 1.0 if v > 0 else -1.0
                if prev != 0.0 and sg != prev:
                    crossings[i] += 1
                if first_sign[i] == 0.0:
                    first_sign[i] = sg
                prev = sg
            if step % 10 == 0 or step == n_steps:
                G = _G_jit(lc, muh, v)
                scale = max(scale, abs(G))
                worst = max(worst, abs(0.5 * w * w + G - E0))
        end[i] = v
        alive[i] = ok
        drift[i] = worst / scale
    return end, alive, crossings, first_sign, drift


def _shoot_batch(params: PhaseParams, s: np.ndarray, n_steps: int) -> _Batch:
    """Fixed-step RK4 for v'' = -g(v) from (0, s) over length T, one shot per s."""
    s = np.ascontiguousarray(np.atleast_1d(np.asarray(s, dtype=float)))
    return _Batch(*_shoot_kernel(float(params.lc), float(params.muh), float(params.T), s,
                                 int(n_steps), BLOWUP))


def _classify(batch: _Batch, i: int) -> Optional[str]:
    if not batch.admissible[i]:
        return None
    if batch.crossings[i] > 0:
        return "sign_changing"
    if batch.first_sign[i] > 0:
        return "positive"
    if batch.first_sign[i] < 0:
        return "negative"
    return "trivial"


def _result(s, batch: _Batch, i: int, limited: bool = False) -> ShootResult:
    cls = _classify(batch, i)
    turns = int((batch.crossings[i] + 1) // 2) if cls is not None else 0
    return ShootResult(float(s[i]), float(batch.end[i]), bool(batch.admissible[i]), cls, turns,
                       float(batch.drift[i]), limited)


def shoot(params: PhaseParams, s: float, n_steps: int = 10_000) -> ShootResult:
    """Integrate from (v, v') = (0, s) at -T/2 to T/2 with fixed-step RK4.

    ``turns`` is the number of full revolutions about the enclosing center,
    counted as (interior sign changes + 1) // 2.
    """
    arr = np.array([float(s)])
    return _result(arr, _shoot_batch(params, arr, n_steps), 0)


def shoot_many(params: PhaseParams, s: Sequence[float], n_steps: int = 10_000) -> List[ShootResult]:
    arr = np.asarray(s, dtype=float)
    batch = _shoot_batch(params, arr, n_steps)
    return [_result(arr, batch, i) for i in range(arr.size)]


def richardson_error(params: PhaseParams, s: float, n_steps: int = 10_000) -> float:
    """Estimated error of end_value at n_steps from a halved-step comparison."""
    arr = np.array([float(s)])
    fine = _shoot_batch(params, arr, 2 * n_steps).end[0]
    coarse = _shoot_batch(params, arr, n_steps).end[0]
    return float(abs(coarse - fine) * 16.0 / 15.0)


def s_grid(s_lo: float, s_hi: float, n: int, spacing: str = "asinh") -> np.ndarray:
    if spacing == "linear":
        return np.linspace(s_lo, s_hi, n)
    if spacing == "asinh":
        return np.sinh(np.linspace(math.asinh(s_lo), math.asinh(s_hi), n))
    raise InputError(f"unknown spacing {spacing!r}")


def count_solutions(params: PhaseParams, s_lo: float, s_hi: float, n_samples: int, *,
                    n_steps: int = 10_000, tol: float = 1e-10,
                    spacing: str = "asinh") -> List[ShootResult]:
    """Solutions of the boundary value problem among shots with s in [s_lo, s_hi].

    The end value is scanned on the s grid; admissible/inadmissible
    neighbors are first bisected so that sign changes right at the edge of
    the admissible set are seen.  Sign changes are refined by the Illinois
    variant of regula falsi until |end_value| <= tol.  When the bracket
    shrinks to a few ulps of s first (the end value is then too steep in s
    to reach tol), the root is kept and flagged ``resolution_limited``.
    """
    if not s_lo < s_hi or n_samples < 2:
        raise InputError("count_solutions needs s_lo < s_hi and n_samples >= 2")
    s = s_grid(s_lo, s_hi, n_samples, spacing)
    b = _shoot_batch(params, s, n_steps)
    end, adm = b.end.copy(), b.admissible.copy()

    edge = np.flatnonzero(adm[:-1] != adm[1:])
    if edge.size:
        ok = np.where(adm[edge], s[edge], s[edge + 1])
        no = np.where(adm[edge], s[edge + 1], s[edge])
        for _ in range(50):
            mid = 0.5 * (ok + no)
            mb = _shoot_batch(params, mid, n_steps)
            ok = np.where(mb.admissible, mid, ok)
            no = np.where(mb.admissible, no, mid)
        eb = _shoot_batch(params, ok, n_steps)
        s = np.concatenate([s, ok])
        end = np.concatenate([end, eb.end])
        adm = np.concatenate([adm, eb.admissible])
        order = np.argsort(s, kind="stable")
        s, end, adm = s[order], end[order], adm[order]

    pairs = np.flatnonzero(adm[:-1] & adm[1:] & (np.sign(end[:-1]) * np.sign(end[1:]) < 0))
    roots = [(float(x), False) for x in s[adm & (end == 0)]]
    if pairs.size:
        a, bb = s[pairs].copy(), s[pairs + 1].copy()
        fa, fb = end[pairs].copy(), end[pairs + 1].copy()
        side = np.zeros(pairs.size)
        x = a.copy()
        done = np.zeros(pairs.size, dtype=bool)
        collapsed = np.zeros(pairs.size, dtype=bool)
        ulp = 4 * np.finfo(float).eps
        for _ in range(400):
            trial = (a * fb - bb * fa) / (fb - fa)
            trial = np.where(np.isfinite(trial) & (trial > np.minimum(a, bb))
                             & (trial < np.maximum(a, bb)), trial, 0.5 * (a + bb))
            x = np.where(done, x, trial)
            fx = _shoot_batch(params, x, n_steps).end
            collapsed |= ~done & (np.abs(bb - a) <= ulp * np.maximum(np.abs(x), 1e-300))
            done |= (np.abs(fx) <= tol) | collapsed
            if np.all(done):
                break
            live = ~done
            left = live & (np.sign(fx) == np.sign(fa))   # root in [x, b]
            right = live & ~left
            # Illinois: halve the stale end's value when the same side repeats
            fb = np.where(left & (side == 1), fb / 2, fb)
            fa = np.where(right & (side == -1), fa / 2, fa)
            a, fa = np.where(left, x, a), np.where(left, fx, fa)
            bb, fb = np.where(right, x, bb), np.where(right, fx, fb)
            side = np.where(left, 1, np.where(right, -1, side))
        for xi, ci, di in zip(x, collapsed, done):
            if di:
                roots.append((float(xi), bool(ci)))
    if not roots:
        return []
    roots.sort()
    unique = []
    for r in roots:
        if not unique or abs(r[0] - unique[-1][0]) > 1e-12 * max(1.0, abs(r[0])):
            unique.append(r)
    arr = np.array([r[0] for r in unique])
    rb = _shoot_batch(params, arr, n_steps)
    out = []
    for i, (_, limited) in enumerate(unique):
        limited = bool(limited and abs(rb.end[i]) > tol)
        r = _result(arr, rb, i, limited)
        if r.admissible and (abs(r.end_value) <= tol or limited):
            out.append(r)
    return out


def write_solutions_csv(results: Sequence[ShootResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "end_value", "classification", "turns"])
        for r in results:
            w.writerow([format_float(r.s), format_float(r.end_value),
                        r.classification or "", r.turns])


def shot_profile(params: PhaseParams, s: float, n_nodes: int, n_steps: int = 10_000) -> np.ndarray:
    """v at n_nodes equispaced interior points of [-T/2, T/2] (RK4 dense output).

    Requires n_steps to be a multiple of n_nodes + 1 so nodes fall on steps.
    """
    if n_steps % (n_nodes + 1):
        raise InputError("n_steps must be a multiple of n_nodes + 1")
    dt = params.T / n_steps
    v, w = 0.0, float(s)
    stride = n_steps // (n_nodes + 1)
    out = []
    for step in range(1, n_steps + 1):
        k1v, k1w = w, -g_eval(params, v)
        k2v, k2w = w + 0.5 * dt * k1w, -g_eval(params, v + 0.5 * dt * k1v)
        k3v, k3w = w + 0.5 * dt * k2w, -g_eval(params, v + 0.5 * dt * k2v)
        k4v, k4w = w + dt * k3w, -g_eval(params, v + dt * k3v)
        v += dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        w += dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
        if step % stride == 0 and len(out) < n_nodes:
            out.append(v)
    return np.array(out)
