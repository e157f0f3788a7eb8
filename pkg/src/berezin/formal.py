"""Exact formal-series engine on the torus family.

Formal functions are truncated power series in h whose coefficients are
finite Fourier sums; the deformation parameter is identified with 1/k
throughout, and the 1/(2k+n) re-expansion is obtained by the explicit
substitution h -> h/(2+nh) when needed.

Closed forms used by the engine (w = q - sigma p, b = Im sigma):

* Berezin-Toeplitz product of modes, exact at every order:
      e_{pq} * e_{p'q'} = exp(h * pi conj(w) w' / b) e_{p+p', q+q'},
  i.e. c^(l)(f, g) = (-1)^l/l! (g^{z zbar})^l (d_z^l f)(d_zbar^l g).
* The one-form of the formal Hitchin connection: D_V f = V[f] + (h/2) E(V) f
  with the Fourier multiplier of E(V) equal to
      i pi (beta w^2 - alpha conj(w)^2) / (2 b^2)
  for the direction alpha d/dsigma + beta d/dsigma_bar.  The h^0 part of
  the one-form vanishes identically (flat family: zero Ricci potential).

sigma-dependence of coefficients is carried exactly by 2-jets (value plus
first and second derivatives in (Re sigma, Im sigma)), so derivation,
flatness, trivialization and sigma-independence residuals are pure
floating-point roundoff, never finite-difference error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .geometry import ModelError, TangentDirection


class Jet:
    """Complex value with partial derivatives in (a, b) = (Re s, Im s).

    ``depth`` is how many derivative levels are trustworthy (0, 1 or 2);
    arithmetic propagates the minimum depth of the operands.
    """

    __slots__ = ("val", "da", "db", "daa", "dab", "dbb", "depth")

    def __init__(self, val, da=0.0, db=0.0, daa=0.0, dab=0.0, dbb=0.0, depth=2):
        self.val = complex(val)
        self.da = complex(da)
        self.db = complex(db)
        self.daa = complex(daa)
        self.dab = complex(dab)
        self.dbb = complex(dbb)
        self.depth = depth

    @classmethod
    def const(cls, c, depth: int = 2) -> "Jet":
        return cls(c, depth=depth)

    @classmethod
    def sigma(cls, s: complex, depth: int = 2) -> "Jet":
        return cls(s, da=1.0, db=1j, depth=depth)

    @staticmethod
    def _lift(x):
        return x if isinstance(x, Jet) else Jet.const(x)

    def __add__(self, o):
        o = Jet._lift(o)
        return Jet(self.val + o.val, self.da + o.da, self.db + o.db,
                   self.daa + o.daa, self.dab + o.dab, self.dbb + o.dbb,
                   min(self.depth, o.depth))

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.da, -self.db, -self.daa, -self.dab, -self.dbb, self.depth)

    def __sub__(self, o):
        return self + (-Jet._lift(o))

    def __rsub__(self, o):
        return Jet._lift(o) + (-self)

    def __mul__(self, o):
        o = Jet._lift(o)
        u, v = self, o
        return Jet(u.val * v.val,
                   u.da * v.val + u.val * v.da,
                   u.db * v.val + u.val * v.db,
                   u.daa * v.val + 2 * u.da * v.da + u.val * v.daa,
                   u.dab * v.val + u.da * v.db + u.db * v.da + u.val * v.dab,
                   u.dbb * v.val + 2 * u.db * v.db + u.val * v.dbb,
                   min(u.depth, v.depth))

    __rmul__ = __mul__

    def reciprocal(self):
        u = self
        iv = 1.0 / u.val
        iv2 = iv * iv
        iv3 = iv2 * iv
        return Jet(iv, -u.da * iv2, -u.db * iv2,
                   -u.daa * iv2 + 2 * u.da * u.da * iv3,
                   -u.dab * iv2 + 2 * u.da * u.db * iv3,
                   -u.dbb * iv2 + 2 * u.db * u.db * iv3,
                   u.depth)

    def __truediv__(self, o):
        return self * Jet._lift(o).reciprocal()

    def __rtruediv__(self, o):
        return Jet._lift(o) * self.reciprocal()

    def conj(self):
        return Jet(np.conj(self.val), np.conj(self.da), np.conj(self.db),
                   np.conj(self.daa), np.conj(self.dab), np.conj(self.dbb), self.depth)

    def directional(self, V: TangentDirection) -> "Jet":
        """Derivative along alpha d/dsigma + beta d/dsigma_bar; depth drops by 1."""
        if self.depth < 1:
            raise ModelError("jet depth exhausted: deepen the input jets")
        # d/ds = (d/da - i d/db)/2 and d/dsbar = (d/da + i d/db)/2
        ca = 0.5 * (V.alpha + V.beta)
        cb = 0.5j * (V.beta - V.alpha)
        return Jet(ca * self.da + cb * self.db,
                   ca * self.daa + cb * self.dab,
                   ca * self.dab + cb * self.dbb,
                   depth=self.depth - 1)


def _b_jet(sj: Jet) -> Jet:
    return (sj - sj.conj()) * (-0.5j)


def _w_jet(sj: Jet, p: int, q: int) -> Jet:
    return Jet.const(q) - sj * p


def star_kernel(sj: Jet, mode1, mode2, order: int) -> Jet:
    """Order-``order`` coefficient of the mode product: mu^m / m! with
    mu = pi conj(w1) w2 / b."""
    w1 = _w_jet(sj, *mode1)
    w2 = _w_jet(sj, *mode2)
    mu = (np.pi * w1.conj() * w2) / _b_jet(sj)
    out = Jet.const(1.0 / math.factorial(order))
    for _ in range(order):
        out = out * mu
    return out


def e_multiplier(sj: Jet, V: TangentDirection, mode) -> Jet:
    """Fourier multiplier of the one-form E(V) on the given mode."""
    w = _w_jet(sj, *mode)
    b = _b_jet(sj)
    return (0.5j * np.pi) * (V.beta * w * w - V.alpha * w.conj() * w.conj()) / (b * b)


class FormalFunction:
    """Truncated h-series with finite Fourier-sum coefficients.

    ``coeffs[l]`` maps a mode (p, q) to the Jet of its amplitude; plain
    numbers are accepted and lifted to constant jets.
    """

    def __init__(self, order: int, coeffs=None):
        self.order = int(order)
        self.coeffs: list[dict] = [dict() for _ in range(self.order + 1)]
        if coeffs is not None:
            for l, layer in enumerate(coeffs[: self.order + 1]):
                for mode, amp in layer.items():
                    self.coeffs[l][(int(mode[0]), int(mode[1]))] = Jet._lift(amp)

    @classmethod
    def from_modes(cls, modes: dict, order: int) -> "FormalFunction":
        return cls(order, [modes])

    @classmethod
    def mode(cls, p: int, q: int, order: int, amp=1.0) -> "FormalFunction":
        return cls.from_modes({(p, q): amp}, order)

    @classmethod
    def constant(cls, c, order: int) -> "FormalFunction":
        return cls.from_modes({(0, 0): c}, order)

    def copy(self) -> "FormalFunction":
        out = FormalFunction(self.order)
        for l in range(self.order + 1):
            out.coeffs[l] = dict(self.coeffs[l])
        return out

    def add_term(self, l: int, mode, amp) -> None:
        if l > self.order:
            return
        key = (int(mode[0]), int(mode[1]))
        cur = self.coeffs[l].get(key)
        self.coeffs[l][key] = Jet._lift(amp) if cur is None else cur + amp

    def __add__(self, other):
        out = self.copy()
        for l in range(min(self.order, other.order) + 1):
            for mode, amp in other.coeffs[l].items():
                out.add_term(l, mode, amp)
        out.order = min(self.order, other.order)
        out.coeffs = out.coeffs[: out.order + 1]
        return out

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    def scaled(self, c) -> "FormalFunction":
        out = FormalFunction(self.order)
        for l in range(self.order + 1):
            for mode, amp in self.coeffs[l].items():
                out.coeffs[l][mode] = amp * c
        return out

    def modes(self) -> set:
        out = set()
        for layer in self.coeffs:
            out |= set(layer)
        return out

    def max_abs(self) -> float:
        worst = 0.0
        for layer in self.coeffs:
            for amp in layer.values():
                worst = max(worst, abs(amp.val))
        return worst

    def coefficient_table(self) -> list:
        return [{m: amp.val for m, amp in layer.items()} for layer in self.coeffs]

    def is_real(self, tol: float = 1e-12) -> bool:
        for layer in self.coeffs:
            for (p, q), amp in layer.items():
                mirror = layer.get((-p, -q))
                ref = 0.0 if mirror is None else mirror.val
                if abs(np.conj(amp.val) - ref) > tol:
                    return False
        return True


@dataclass(frozen=True)
class StarProduct:
    """The Berezin-Toeplitz product at one sigma, as mode-kernel rules."""

    sigma: complex
    karabegov_form: str = "omega/h"  # flat family: no Ricci term

    def kernel(self, mode1, mode2, order: int, depth: int = 2) -> Jet:
        return star_kernel(Jet.sigma(self.sigma, depth), mode1, mode2, order)


def bt_star(sigma: complex, f: FormalFunction, g: FormalFunction, L: int | None = None,
            depth: int = 2) -> FormalFunction:
    """f * g for the Berezin-Toeplitz product at sigma, to order L."""
    if L is None:
        L = min(f.order, g.order)
    sj = Jet.sigma(sigma, depth)
    out = FormalFunction(L)
    for r in range(L + 1):
        for s in range(L + 1 - r):
            for m1, a1 in f.coeffs[r].items() if r <= f.order else ():
                for m2, a2 in g.coeffs[s].items() if s <= g.order else ():
                    for m in range(L + 1 - r - s):
                        ker = star_kernel(sj, m1, m2, m)
                        out.add_term(r + s + m, (m1[0] + m2[0], m1[1] + m2[1]),
                                     a1 * a2 * ker)
    return out


def phi_series(n: int, L: int) -> list:
    """Coefficients of phi(h) = h/(2+nh) as a power series in h."""
    # h/(2+nh) = (h/2) sum_j (-n h/2)^j
    return [0.0] + [(0.5) * (-n / 2.0) ** j for j in range(L)]


def tilde_d_multiplier(sigma_or_jet, V: TangentDirection, l: int, mode) -> Jet:
    """Multiplier of the h^l piece of the formal Hitchin connection one-form.

    For the flat torus family the Ricci potential vanishes and H(V) = 0, so
    the one-form is phi(h) E(V) with n = 0: exactly (h/2) E(V).
    """
    if l == 1:
        sj = sigma_or_jet if isinstance(sigma_or_jet, Jet) else Jet.sigma(sigma_or_jet)
        return e_multiplier(sj, V, mode) * 0.5
    return Jet.const(0.0)


def formal_connection(sigma: complex, V: TangentDirection, f: FormalFunction,
                      L: int | None = None) -> FormalFunction:
    """D_V f = V[f] + sum_l h^l Dtilde^(l)(V) f (zero at order h^0)."""
    if L is None:
        L = f.order
    sj = Jet.sigma(sigma)
    out = FormalFunction(L)
    for l in range(min(L, f.order) + 1):
        for mode, amp in f.coeffs[l].items():
            out.add_term(l, mode, amp.directional(V))
            if l + 1 <= L:
                out.add_term(l + 1, mode, amp * tilde_d_multiplier(sj, V, 1, mode))
    return out


def derivation_residual(sigma: complex, V: TangentDirection, f: FormalFunction,
                        g: FormalFunction, L: int) -> FormalFunction:
    """D_V(f*g) - D_V(f)*g - f*D_V(g), expected zero at every order."""
    fg = bt_star(sigma, f, g, L)
    lhs = formal_connection(sigma, V, fg, L)
    rhs = bt_star(sigma, formal_connection(sigma, V, f, L), g, L) + \
        bt_star(sigma, f, formal_connection(sigma, V, g, L), L)
    return lhs - rhs


def flatness_residual(sigma: complex, V1: TangentDirection, V2: TangentDirection,
                      f: FormalFunction, L: int) -> FormalFunction:
    """([D_V1, D_V2] - D_[V1,V2]) f for commuting coordinate directions."""
    a = formal_connection(sigma, V1, formal_connection(sigma, V2, f, L), L)
    b = formal_connection(sigma, V2, formal_connection(sigma, V1, f, L), L)
    return a - b


# -- formal trivialization ---------------------------------------------------


def _leg_points(a: complex, b: complex):
    return a, b


class FormalTrivialization:
    """P = sum_l P_l h^l with P_0 = Id solving D_V(P f) = 0, built by
    integrating the recursion one-form along axis-aligned paths from the
    base point (horizontal leg first by default)."""

    def __init__(self, sigma0: complex, order: int, rtol: float = 1e-12):
        if sigma0.imag <= 0:
            raise ModelError("base point must lie in the upper half-plane")
        self.sigma0 = complex(sigma0)
        self.order = int(order)
        self.rtol = rtol
        self._cache: dict = {}

    # P_l multipliers are diagonal on modes; the recursion V[P_l] =
    # -sum_r Dtilde^(r)(V) P_{l-r} closes on scalars per mode.  Only the
    # r = 1 term is nonzero for this family.

    def _legs(self, sigma: complex, path: str):
        corner = complex(sigma.real, self.sigma0.imag) if path == "L" \
            else complex(self.sigma0.real, sigma.imag)
        return [(self.sigma0, corner), (corner, sigma)]

    def _integrate_mode(self, mode, sigma: complex, path: str):
        L = self.order
        rho = np.zeros(L, dtype=complex)  # rho_1..rho_L (rho_0 = 1)
        for a, b in self._legs(sigma, path):
            vel = b - a
            if vel == 0:
                continue
            V = TangentDirection.real(vel)

            def rhs(t, y):
                yc = y[:L] + 1j * y[L:]
                sj = Jet.sigma(a + t * vel, depth=0)
                d1 = (e_multiplier(sj, V, mode) * 0.5).val
                dy = np.empty(L, dtype=complex)
                dy[0] = -d1
                for l in range(1, L):
                    dy[l] = -d1 * yc[l - 1]
                return np.concatenate([dy.real, dy.imag])

            y0 = np.concatenate([rho.real, rho.imag])
            sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853",
                            rtol=self.rtol, atol=1e-14)
            if not sol.success:
                raise ModelError(f"trivialization integration failed: {sol.message}")
            rho = sol.y[:L, -1] + 1j * sol.y[L:, -1]
        return rho

    def multipliers(self, sigma: complex, mode, path: str = "L"):
        """Jets (depth 1) of the multipliers [P_0 .. P_L] at sigma for one mode.

        Values come from path integration; the first derivatives are the
        recursion one-form itself (exact once closedness holds).
        """
        key = (complex(sigma), tuple(mode), path)
        if key in self._cache:
            return self._cache[key]
        rho = self._integrate_mode(mode, sigma, path)
        sj = Jet.sigma(sigma)
        da_mult = (e_multiplier(sj, TangentDirection.real(1.0), mode) * 0.5).val
        db_mult = (e_multiplier(sj, TangentDirection.real(1j), mode) * 0.5).val
        jets = [Jet.const(1.0, depth=1)]
        for l in range(1, self.order + 1):
            prev = 1.0 if l == 1 else rho[l - 2]
            jets.append(Jet(rho[l - 1], da=-da_mult * prev, db=-db_mult * prev, depth=1))
        self._cache[key] = jets
        return jets

    def closedness_residual(self, sigma: complex, mode) -> float:
        """Mixed-partials residual of the recursion one-form alpha_l at sigma,
        maximized over 1 <= l <= order."""
        sj = Jet.sigma(sigma)
        jets = self.multipliers(sigma, mode)
        da_j = e_multiplier(sj, TangentDirection.real(1.0), mode) * 0.5
        db_j = e_multiplier(sj, TangentDirection.real(1j), mode) * 0.5
        worst = 0.0
        scale = max(abs(da_j.val), abs(db_j.val), 1e-300)
        for l in range(1, self.order + 1):
            prev = jets[l - 1]
            # alpha_l(V) = dtilde1(V) * rho_{l-1}; d_a acts on both factors
            d_a_of_alpha_b = db_j.da * prev.val + db_j.val * prev.da
            d_b_of_alpha_a = da_j.db * prev.val + da_j.val * prev.db
            worst = max(worst, abs(d_a_of_alpha_b - d_b_of_alpha_a))
        return worst / scale

    def apply(self, sigma: complex, f: FormalFunction, path: str = "L") -> FormalFunction:
        out = FormalFunction(f.order)
        for l in range(f.order + 1):
            for mode, amp in f.coeffs[l].items():
                mult = self.multipliers(sigma, mode, path)
                for r in range(f.order + 1 - l):
                    out.add_term(l + r, mode, amp * mult[r])
        return out

    def apply_inverse(self, sigma: complex, f: FormalFunction, path: str = "L") -> FormalFunction:
        out = FormalFunction(f.order)
        for l in range(f.order + 1):
            for mode, amp in f.coeffs[l].items():
                mult = self.multipliers(sigma, mode, path)
                inv = [Jet.const(1.0, depth=1)]
                for r in range(1, f.order + 1):
                    acc = Jet.const(0.0)
                    for s in range(1, r + 1):
                        acc = acc + mult[s] * inv[r - s]
                    inv.append(-acc)
                for r in range(f.order + 1 - l):
                    out.add_term(l + r, mode, amp * inv[r])
        return out

    def connection_residual(self, sigma: complex, V: TangentDirection,
                            f: FormalFunction) -> float:
        """Max coefficient of D_V(P f); zero iff P trivializes the connection."""
        return formal_connection(sigma, V, self.apply(sigma, f), f.order).max_abs()


def trivialize(sigma0: complex, L: int) -> FormalTrivialization:
    return FormalTrivialization(sigma0, L)


def invariant_star(triv: FormalTrivialization, sigma1: complex, sigma2: complex,
                   f: FormalFunction, g: FormalFunction, L: int) -> FormalFunction:
    """Difference of P^{-1}(P f * P g) at the two points; zero means the
    trivialized product does not depend on sigma."""
    def transported(s):
        pf = triv.apply(s, f)
        pg = triv.apply(s, g)
        return triv.apply_inverse(s, bt_star(s, pf, pg, L))

    return transported(sigma1) - transported(sigma2)


def multiplier_degree_residual(values: dict, degree: int) -> float:
    """Least-squares residual of fitting mode -> value by a polynomial of
    total degree <= degree in (p, q); small residual certifies the
    differential-operator order bound."""
    modes = sorted(values)
    terms = [(a, b) for a in range(degree + 1) for b in range(degree + 1 - a)]
    A = np.array([[float(p) ** a * float(q) ** b for (a, b) in terms] for (p, q) in modes],
                 dtype=complex)
    y = np.array([values[m] for m in modes], dtype=complex)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = np.abs(A @ coef - y).max()
    return float(res / max(1.0, np.abs(y).max()))
