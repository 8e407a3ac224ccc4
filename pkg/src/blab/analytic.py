"""Small descriptors for holomorphic test functions.

Each descriptor is a vectorized callable on complex arrays.  ``log_abs`` is
provided where it is cheaper or safer than ``log(abs(f(z)))`` (for exponentials
of polynomials it is exact and never overflows).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class Analytic:
    """Interface: ``f(z)`` and ``f.log_abs(z)``."""

    name = "analytic"

    def __call__(self, z):
        raise NotImplementedError

    def log_abs(self, z):
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self(z)))

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Polynomial(Analytic):
    coeffs: tuple = (1.0,)

    name = "poly"

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for c in reversed(self.coeffs):
            out = out * z + c
        return out

    def to_json(self):
        return {"kind": "poly", "coeffs": [_cx(c) for c in self.coeffs]}


def monomial(k: int, scale: complex = 1.0) -> Polynomial:
    return Polynomial(tuple([0.0] * k + [scale]))


@dataclass(frozen=True)
class ExpPolynomial(Analytic):
    """``exp(p(z))``: entire and zero-free."""

    coeffs: tuple = (0.0, 1.0)

    name = "exp_poly"

    def _exponent(self, z):
        return Polynomial(self.coeffs)(z)

    def __call__(self, z):
        return np.exp(self._exponent(z))

    def log_abs(self, z):
        return np.real(self._exponent(z))

    def to_json(self):
        return {"kind": "exp_poly", "coeffs": [_cx(c) for c in self.coeffs]}


@dataclass(frozen=True)
class Geometric(Analytic):
    """``1 / (1 - a z)`` with ``|a| < 1``; bounded on the disk."""

    a: complex = 0.5

    name = "geometric"

    def __post_init__(self):
        if abs(self.a) >= 1:
            raise ValueError("geometric descriptor needs |a| < 1")

    def __call__(self, z):
        return 1.0 / (1.0 - self.a * np.asarray(z, dtype=complex))

    def to_json(self):
        return {"kind": "geometric", "a": _cx(self.a)}


@dataclass(frozen=True)
class FromCallable(Analytic):
    fn: object = field(default=None, compare=False)
    label: str = "callable"

    def __call__(self, z):
        return np.asarray(self.fn(np.asarray(z, dtype=complex)), dtype=complex)

    def to_json(self):
        return {"kind": "callable", "label": self.label}


def _cx(c):
    c = complex(c)
    return c.real if c.imag == 0 else [c.real, c.imag]


def _uncx(v):
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def from_json(obj: dict) -> Analytic:
    kind = obj.get("kind")
    if kind == "poly":
        return Polynomial(tuple(_uncx(c) for c in obj["coeffs"]))
    if kind == "monomial":
        return monomial(int(obj["k"]))
    if kind == "exp_poly":
        return ExpPolynomial(tuple(_uncx(c) for c in obj["coeffs"]))
    if kind == "exp":
        return ExpPolynomial((0.0, _uncx(obj.get("a", 1.0))))
    if kind == "geometric":
        return Geometric(_uncx(obj["a"]))
    raise ValueError(f"unknown analytic descriptor kind {kind!r}")
