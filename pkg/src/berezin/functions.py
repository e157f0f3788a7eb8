"""Smooth test functions on the two models, with exact derivative calculus.

Torus functions are finite Fourier sums sum a_{pq} e^{2 pi i (p x + q y)};
sphere functions are polynomials in the ambient coordinates (x1, x2, x3).
Everything downstream (Hamiltonian fields, Laplacians, Poisson brackets,
holomorphic derivatives) is evaluated from closed forms on the grid, so no
numerical differentiation of symbols ever happens.
"""

from __future__ import annotations

import numpy as np

from .geometry import KahlerModel, check_sigma, dz_vector


def _clean(d: dict) -> dict:
    return {k: v for k, v in d.items() if abs(v) > 1e-300}


class TorusFunction:
    """Finite Fourier sum on the torus."""

    def __init__(self, modes: dict):
        self.modes = _clean({(int(p), int(q)): complex(a) for (p, q), a in modes.items()})

    @classmethod
    def mode(cls, p: int, q: int, amp: complex = 1.0) -> "TorusFunction":
        return cls({(p, q): amp})

    @classmethod
    def cos_x(cls) -> "TorusFunction":
        return cls({(1, 0): 0.5, (-1, 0): 0.5})

    def conj(self) -> "TorusFunction":
        return TorusFunction({(-p, -q): np.conj(a) for (p, q), a in self.modes.items()})

    def __add__(self, other):
        out = dict(self.modes)
        for m, a in other.modes.items():
            out[m] = out.get(m, 0.0) + a
        return TorusFunction(out)

    def __mul__(self, other):
        if np.isscalar(other):
            return TorusFunction({m: a * other for m, a in self.modes.items()})
        out: dict = {}
        for (p, q), a in self.modes.items():
            for (p2, q2), a2 in other.modes.items():
                m = (p + p2, q + q2)
                out[m] = out.get(m, 0.0) + a * a2
        return TorusFunction(out)

    __rmul__ = __mul__

    def values(self, model: KahlerModel) -> np.ndarray:
        x, y = model.coord1, model.coord2
        out = np.zeros(model.npts, dtype=complex)
        for (p, q), a in self.modes.items():
            out += a * np.exp(2j * np.pi * (p * x + q * y))
        return out

    def chart_derivatives(self, model: KahlerModel):
        x, y = model.coord1, model.coord2
        dx = np.zeros(model.npts, dtype=complex)
        dy = np.zeros(model.npts, dtype=complex)
        for (p, q), a in self.modes.items():
            e = a * np.exp(2j * np.pi * (p * x + q * y))
            dx += 2j * np.pi * p * e
            dy += 2j * np.pi * q * e
        return dx, dy

    def laplacian(self, model: KahlerModel, sigma: complex) -> "TorusFunction":
        """Laplace-Beltrami for the metric of the structure at sigma
        (negative spectrum convention)."""
        sigma = check_sigma(model, sigma)
        b = sigma.imag
        out = {}
        for (p, q), a in self.modes.items():
            w = q - sigma * p
            out[(p, q)] = a * (-2.0 * np.pi * abs(w) ** 2 / b)
        return TorusFunction(out)

    def dz_values(self, model: KahlerModel, sigma: complex, order: int = 1) -> np.ndarray:
        """Values of (d/dz)^order applied to the function."""
        sigma = check_sigma(model, sigma)
        b = sigma.imag
        x, y = model.coord1, model.coord2
        out = np.zeros(model.npts, dtype=complex)
        for (p, q), a in self.modes.items():
            wbar = q - np.conj(sigma) * p
            out += a * (np.pi * wbar / b) ** order * np.exp(2j * np.pi * (p * x + q * y))
        return out

    def dzbar_values(self, model, sigma, order: int = 1) -> np.ndarray:
        sigma = check_sigma(model, sigma)
        b = sigma.imag
        x, y = model.coord1, model.coord2
        out = np.zeros(model.npts, dtype=complex)
        for (p, q), a in self.modes.items():
            w = q - sigma * p
            out += a * (-np.pi * w / b) ** order * np.exp(2j * np.pi * (p * x + q * y))
        return out

    def hamiltonian(self, model: KahlerModel, sigma: complex):
        """Chart components (X^x, X^y) of the Hamiltonian field omega^{-1} df."""
        dx, dy = self.chart_derivatives(model)
        s = model.omega_scale
        return dy / s, -dx / s

    def poisson(self, other: "TorusFunction", model: KahlerModel, sigma: complex) -> np.ndarray:
        fx, fy = self.chart_derivatives(model)
        gx, gy = other.chart_derivatives(model)
        return (fx * gy - fy * gx) / model.omega_scale

    def sup(self, model: KahlerModel) -> float:
        return float(np.abs(self.values(model)).max())


def _sphere_xyz(model: KahlerModel):
    th, ph = model.coord1, model.coord2
    st = np.sin(th)
    return st * np.cos(ph), st * np.sin(ph), np.cos(th)


def _mono_partial(mono, i):
    """d/dx_i of a monomial key (a, b, c) -> (coeff factor, new key)."""
    e = list(mono)
    if e[i] == 0:
        return 0, mono
    f = e[i]
    e[i] -= 1
    return f, tuple(e)


class SphereFunction:
    """Polynomial in the ambient coordinates, restricted to the sphere."""

    def __init__(self, poly: dict):
        self.poly = _clean({tuple(int(e) for e in m): complex(c) for m, c in poly.items()})

    @classmethod
    def coordinate(cls, i: int) -> "SphereFunction":
        key = [0, 0, 0]
        key[i - 1] = 1
        return cls({tuple(key): 1.0})

    @classmethod
    def parse(cls, name: str) -> "SphereFunction":
        """Parse names like "x3" or products like "x3*x1"."""
        out = cls({(0, 0, 0): 1.0})
        for factor in name.split("*"):
            factor = factor.strip()
            if factor not in ("x1", "x2", "x3"):
                raise ValueError(f"unknown sphere function {name!r}")
            out = out * cls.coordinate(int(factor[1]))
        return out

    def conj(self) -> "SphereFunction":
        return SphereFunction({m: np.conj(c) for m, c in self.poly.items()})

    def __add__(self, other):
        out = dict(self.poly)
        for m, c in other.poly.items():
            out[m] = out.get(m, 0.0) + c
        return SphereFunction(out)

    def __mul__(self, other):
        if np.isscalar(other):
            return SphereFunction({m: c * other for m, c in self.poly.items()})
        out: dict = {}
        for m1, c1 in self.poly.items():
            for m2, c2 in other.poly.items():
                m = (m1[0] + m2[0], m1[1] + m2[1], m1[2] + m2[2])
                out[m] = out.get(m, 0.0) + c1 * c2
        return SphereFunction(out)

    __rmul__ = __mul__

    def values(self, model: KahlerModel) -> np.ndarray:
        x1, x2, x3 = _sphere_xyz(model)
        out = np.zeros(model.npts, dtype=complex)
        for (a, b, c), coeff in self.poly.items():
            out += coeff * x1**a * x2**b * x3**c
        return out

    def gradient_polys(self):
        grads = []
        for i in range(3):
            g: dict = {}
            for m, c in self.poly.items():
                f, m2 = _mono_partial(m, i)
                if f:
                    g[m2] = g.get(m2, 0.0) + f * c
            grads.append(SphereFunction(g))
        return grads

    def chart_derivatives(self, model: KahlerModel):
        """(d/dtheta, d/dphi) by the chain rule through the ambient coordinates."""
        th, ph = model.coord1, model.coord2
        x1, x2, _ = _sphere_xyz(model)
        dth = (np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th))
        dph = (-x2, x1, np.zeros(model.npts))
        g1, g2, g3 = (g.values(model) for g in self.gradient_polys())
        dtheta = g1 * dth[0] + g2 * dth[1] + g3 * dth[2]
        dphi = g1 * dph[0] + g2 * dph[1] + g3 * dph[2]
        return dtheta, dphi

    def laplacian(self, model: KahlerModel, sigma: complex = 0.0) -> "SphereFunction":
        """Laplace-Beltrami for the omega-induced round metric (radius^2 = 1/2).

        Exact via the homogeneous decomposition: for a degree-d homogeneous
        piece p_d, the unit-sphere Laplacian of its restriction is
        (Delta_R3 p_d)| - d(d+1) p_d|, and the metric here doubles it.
        """
        out: dict = {}
        for m, c in self.poly.items():
            d = sum(m)
            out[m] = out.get(m, 0.0) - 2.0 * d * (d + 1) * c
            # Delta_R3 of the monomial
            for i in range(3):
                if m[i] >= 2:
                    e = list(m)
                    e[i] -= 2
                    out[tuple(e)] = out.get(tuple(e), 0.0) + 2.0 * m[i] * (m[i] - 1) * c
        return SphereFunction(out)

    def hamiltonian(self, model: KahlerModel, sigma: complex = 0.0):
        """Chart components (X^theta, X^phi) of omega^{-1} df."""
        dth, dph = self.chart_derivatives(model)
        st = np.sin(model.coord1)
        return 2.0 * dph / st, -2.0 * dth / st

    def poisson(self, other: "SphereFunction", model: KahlerModel, sigma: complex = 0.0) -> np.ndarray:
        fth, fph = self.chart_derivatives(model)
        gth, gph = other.chart_derivatives(model)
        return 2.0 * (fth * gph - fph * gth) / np.sin(model.coord1)

    def _rational(self) -> "_ZRational":
        # x1 = (z + zb)/(1+z zb), x2 = -i(z - zb)/(1+z zb), x3 = (1 - z zb)/(1+z zb)
        x1 = _ZRational({(1, 0, 1): 1.0, (0, 1, 1): 1.0})
        x2 = _ZRational({(1, 0, 1): -1j, (0, 1, 1): 1j})
        x3 = _ZRational({(0, 0, 1): 2.0, (0, 0, 0): -1.0})
        out = _ZRational({})
        for (a, b, c), coeff in self.poly.items():
            term = _ZRational({(0, 0, 0): coeff})
            for base, e in ((x1, a), (x2, b), (x3, c)):
                for _ in range(e):
                    term = term * base
            out = out + term
        return out

    def dz_values(self, model: KahlerModel, sigma: complex, order: int = 1) -> np.ndarray:
        r = self._rational()
        for _ in range(order):
            r = r.dz()
        return r.values(model)

    def dzbar_values(self, model: KahlerModel, sigma: complex, order: int = 1) -> np.ndarray:
        r = self._rational()
        for _ in range(order):
            r = r.dzbar()
        return r.values(model)

    def sup(self, model: KahlerModel) -> float:
        return float(np.abs(self.values(model)).max())


class _ZRational:
    """Sums c * z^a zbar^b (1+|z|^2)^{-d}: the class of sphere symbols we
    meet, closed under d/dz and d/dzbar."""

    def __init__(self, terms: dict):
        self.terms = _clean({tuple(int(e) for e in m): complex(c) for m, c in terms.items()})

    def __add__(self, other):
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0.0) + c
        return _ZRational(out)

    def __mul__(self, other):
        out: dict = {}
        for (a1, b1, d1), c1 in self.terms.items():
            for (a2, b2, d2), c2 in other.terms.items():
                m = (a1 + a2, b1 + b2, d1 + d2)
                out[m] = out.get(m, 0.0) + c1 * c2
        return _ZRational(out)

    def dz(self):
        out: dict = {}
        for (a, b, d), c in self.terms.items():
            if a:
                m = (a - 1, b, d)
                out[m] = out.get(m, 0.0) + a * c
            if d:
                m = (a, b + 1, d + 1)
                out[m] = out.get(m, 0.0) - d * c
        return _ZRational(out)

    def dzbar(self):
        out: dict = {}
        for (a, b, d), c in self.terms.items():
            if b:
                m = (a, b - 1, d)
                out[m] = out.get(m, 0.0) + b * c
            if d:
                m = (a + 1, b, d + 1)
                out[m] = out.get(m, 0.0) - d * c
        return _ZRational(out)

    def values(self, model: KahlerModel) -> np.ndarray:
        from .geometry import sphere_z

        z = sphere_z(model)
        zb = np.conj(z)
        den = 1.0 + np.abs(z) ** 2
        out = np.zeros(model.npts, dtype=complex)
        for (a, b, d), c in self.terms.items():
            out += c * z**a * zb**b * den ** (-d)
        return out


def function_values(model: KahlerModel, f) -> np.ndarray:
    """Accept a function object or a plain grid array."""
    if hasattr(f, "values"):
        return np.asarray(f.values(model), dtype=complex)
    return np.asarray(f, dtype=complex).ravel()


def dz_scalar(model: KahlerModel, sigma: complex, f) -> np.ndarray:
    """d/dz of a scalar function from its chart derivatives."""
    d1, d2 = f.chart_derivatives(model)
    v = dz_vector(model, sigma)
    return v[0] * d1 + v[1] * d2


def dzbar_scalar(model: KahlerModel, sigma: complex, f) -> np.ndarray:
    d1, d2 = f.chart_derivatives(model)
    v = np.conj(dz_vector(model, sigma))
    return v[0] * d1 + v[1] * d2
