"""Exponential changes of variables removing the quadratic gradient term.

Two conventions are kept apart on purpose:

* ``v = exp(mu*u) - 1`` (:func:`cole_hopf_forward`), which turns
  -Lap u = lam c u + mu |grad u|^2 + h into the semilinear problem
  -Lap v - mu h v = lam c (1+v) ln(1+v) + mu h;
* ``w = (exp(mu_i*u) - 1) / mu_i`` (:func:`scaled_transform`), the
  scaled version used in a-priori bound arguments, with inverse
  ``g_i(s) = ln(1 + mu_i*s) / mu_i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, InputError, TransformRangeError

EXP_LIMIT = 700.0


def _check_mu(mu):
    if not mu > 0:
        raise InputError(f"mu must be positive, got {mu}")


def cole_hopf_forward(u, mu: float) -> np.ndarray:
    """v = exp(mu*u) - 1, nodewise."""
    _check_mu(mu)
    u = np.asarray(u, dtype=float)
    arg = mu * u
    if np.any(arg > EXP_LIMIT):
        node = int(np.argmax(arg))
        raise TransformRangeError(
            f"exp overflow: mu*u = {arg.flat[node]:.6g} > {EXP_LIMIT} at node {node}", node=node)
    return np.expm1(arg)


def cole_hopf_inverse(v, mu: float) -> np.ndarray:
    """u = ln(1+v)/mu, nodewise; requires v > -1."""
    _check_mu(mu)
    v = np.asarray(v, dtype=float)
    bad = ~(v > -1)
    if np.any(bad):
        node = int(np.flatnonzero(bad.ravel())[0])
        raise DomainError(f"v = {v.flat[node]:.6g} <= -1 at node {node}", node=node)
    return np.log1p(v) / mu


def scaled_transform(u, mu_i: float) -> np.ndarray:
    """w = (exp(mu_i*u) - 1)/mu_i."""
    return cole_hopf_forward(u, mu_i) / mu_i


def scaled_inverse(w, mu_i: float) -> np.ndarray:
    """g_i(w) = ln(1 + mu_i*w)/mu_i."""
    _check_mu(mu_i)
    return cole_hopf_inverse(mu_i * np.asarray(w, dtype=float), mu_i)


def m_nonlinearity(s, mu_bar: float):
    """Odd extension of (1/mu_bar)(1+mu_bar s)ln(1+mu_bar s).

    Accepts scalars or arrays.  Arguments with mu_bar*s <= -1 are rejected
    (the domain of the positive-branch formula), although the odd branch
    itself would be finite there.
    """
    _check_mu(mu_bar)
    s_arr = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s_arr)):
        raise DomainError("m_nonlinearity needs finite arguments")
    if np.any(s_arr <= -1.0 / mu_bar):
        raise DomainError(f"m_nonlinearity needs s > -1/mu_bar = {-1.0 / mu_bar:.6g}")
    a = mu_bar * np.abs(s_arr)
    out = np.sign(s_arr) * (1.0 + a) * np.log1p(a) / mu_bar
    return float(out) if np.ndim(s) == 0 else out


@dataclass(frozen=True)
class SemilinearRhs:
    """Right-hand side lam c (1+v)ln(1+v) + mu h v + mu h (constant mu)."""

    lam: float
    mu: float
    c: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        _check_mu(self.mu)
        c = np.asarray(self.c, dtype=float)
        if np.any(c < 0) or not np.any(c > 0):
            raise InputError("weight c must be nonnegative and not identically zero")


class SemilinearValue(NamedTuple):
    f: np.ndarray
    fprime: np.ndarray


def semilinear_eval(rhs: SemilinearRhs, v) -> SemilinearValue:
    v = np.asarray(v, dtype=float)
    bad = ~(v > -1)
    if np.any(bad):
        node = int(np.flatnonzero(bad)[0])
        raise DomainError(f"v = {v[node]:.6g} <= -1 at node {node}", node=node)
    log1v = np.log1p(v)
    lc = rhs.lam * np.asarray(rhs.c, dtype=float)
    muh = rhs.mu * np.asarray(rhs.h, dtype=float)
    f = lc * (1.0 + v) * log1v + muh * v + muh
    fprime = lc * (log1v + 1.0) + muh
    return SemilinearValue(f, fprime)
