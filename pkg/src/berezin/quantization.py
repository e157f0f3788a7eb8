"""Holomorphic section bases, Gram matrices, projections, Toeplitz and
prequantum operators, and the order-reduction identities.

Level-k sections are stored in the unitary trivialization as complex grid
fields.  Torus bases are the classical level-k theta functions

    s_j(x, y) = sum_m exp(2 pi i k m x) exp(i pi k sigma (m + y)^2),

with m running over Z + j/k (lattice tail truncated below a recorded
bound); the connection is nabla = d + 2 pi i k y dx.  Sphere bases are the
monomials z^j (1 + |z|^2)^{-k/2}.  All covariant derivatives of basis
sections come from closed forms, never from differencing.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geometry import KahlerModel, ModelError, check_sigma, complex_structure, sphere_z
from .functions import function_values

DEFAULT_TAIL = 1e-18


class LevelMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Section:
    """A smooth level-k section; coeffs is an optional expansion in a basis."""

    k: int
    values: np.ndarray
    coeffs: np.ndarray | None = None


@dataclass(frozen=True)
class OperatorMatrix:
    """Matrix of an endomorphism of H^(k) acting on coefficient vectors."""

    k: int
    sigma: complex
    matrix: np.ndarray
    symbol: str | None = None


def _theta_range(k: int, b: float, tail: float) -> int:
    # include every lattice term whose Gaussian weight on y in [0,1] exceeds tail
    return int(np.ceil(np.sqrt(-np.log(tail) / (np.pi * k * b)))) + 2


class SectionBasis:
    """Basis of H^(k) for one (model, sigma, k), with Gram data.

    Besides the raw section values this object provides the covariant
    derivative fields needed downstream (nabla_z, nabla_z^2, d/dsigma), each
    evaluated from the defining series or closed form.
    """

    def __init__(self, model: KahlerModel, sigma: complex, k: int, tail: float = DEFAULT_TAIL):
        if k < 1:
            raise ModelError(f"level k={k} must be >= 1")
        if 2 * k + model.chern_n == 0:
            raise ModelError("2k + n = 0 is outside the quantizable range")
        self.model = model
        self.sigma = check_sigma(model, sigma)
        self.k = int(k)
        self.tail = float(tail)
        if model.kind == "torus":
            self.dim = self.k
            self._mrange = _theta_range(self.k, self.sigma.imag, tail)
        else:
            self.dim = self.k + 1
            self._mrange = 0

    # -- section field construction -------------------------------------

    def _theta_fields(self, polys):
        """Evaluate sum_m P(m+y) e^{2 pi i k m x + i pi k sigma (m+y)^2} for
        several polynomials P at once (columns = basis index)."""
        model, k, sigma = self.model, self.k, self.sigma
        x, y = model.coord1, model.coord2
        outs = [np.zeros((model.npts, self.dim), dtype=complex) for _ in polys]
        R = self._mrange
        for j in range(self.dim):
            ms = np.arange(-R, R + 1) + j / k
            t = ms[:, None] + y[None, :]
            ph = np.exp(2j * np.pi * k * ms[:, None] * x[None, :] + 1j * np.pi * k * sigma * t * t)
            for out, poly in zip(outs, polys):
                P = np.zeros_like(t, dtype=complex)
                for r, c in enumerate(poly):
                    if c != 0:
                        P = P + c * t**r
                out[:, j] = (P * ph).sum(axis=0)
        return outs

    @cached_property
    def values(self) -> np.ndarray:
        if self.model.kind == "torus":
            return self._theta_fields([(1.0,)])[0]
        z = sphere_z(self.model)
        r2 = np.abs(z) ** 2
        cols = [z**j * (1.0 + r2) ** (-self.k / 2) for j in range(self.dim)]
        return np.stack(cols, axis=1)

    @cached_property
    def _torus_derivs(self):
        k, b = self.k, self.sigma.imag
        c1 = 2j * np.pi * k
        nz, nz2, dsig = self._theta_fields([
            (0.0, c1),                       # nabla_z: 2 pi i k (m+y)
            (np.pi * k / b, 0.0, c1 * c1),   # nabla_z^2
            (0.0, 0.0, 1j * np.pi * k),      # d/dsigma at fixed (x, y)
        ])
        return nz, nz2, dsig

    @cached_property
    def nabla_z(self) -> np.ndarray:
        if self.model.kind == "torus":
            return self._torus_derivs[0]
        z = sphere_z(self.model)
        r2 = np.abs(z) ** 2
        wgt = (1.0 + r2) ** (-self.k / 2)
        conn = -self.k * np.conj(z) / (1.0 + r2)
        out = np.empty_like(self.values)
        for j in range(self.dim):
            # nabla_z (z^j wgt) = (j z^{j-1} + conn z^j) wgt
            out[:, j] = (j * z ** (j - 1) if j else 0.0) * wgt + conn * self.values[:, j]
        return out

    @cached_property
    def nabla_z2(self) -> np.ndarray:
        if self.model.kind == "torus":
            return self._torus_derivs[1]
        z = sphere_z(self.model)
        r2 = np.abs(z) ** 2
        zb = np.conj(z)
        out = np.empty_like(self.values)
        for j in range(self.dim):
            G = (j / z if j else 0.0) - self.k * zb / (1.0 + r2)
            dG = (-j / z**2 if j else 0.0) + self.k * zb**2 / (1.0 + r2) ** 2
            out[:, j] = (dG + G * G) * self.values[:, j]
        return out

    @cached_property
    def dsigma(self) -> np.ndarray:
        """Derivative of the section values in sigma at fixed grid point."""
        if self.model.kind == "torus":
            return self._torus_derivs[2]
        return np.zeros_like(self.values)

    def dbar_of_poly_series(self, polys) -> list:
        """nabla^{0,1} of torus series with polynomial factors P: the
        coefficient against dzbar is (i/2b) * (series with P')."""
        b = self.sigma.imag
        dpolys = [tuple((r + 1) * p[r + 1] for r in range(len(p) - 1)) or (0.0,) for p in polys]
        fields = self._theta_fields(dpolys)
        return [1j / (2 * b) * f for f in fields]

    # -- Gram data --------------------------------------------------------

    @cached_property
    def gram(self) -> np.ndarray:
        return gram_matrix(self.model, self.values)

    @cached_property
    def gram_inv(self) -> np.ndarray:
        return np.linalg.inv(self.gram)

    @cached_property
    def chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.gram)

    def compress(self, fields: np.ndarray) -> np.ndarray:
        """Coefficient matrix of the projection of the given section fields."""
        w = self.model.weights
        return self.gram_inv @ (self.values.conj().T @ (w[:, None] * fields))

    def pair(self, fields_a: np.ndarray, fields_b: np.ndarray) -> np.ndarray:
        """Matrix of inner products <a_j, b_i> (row i conjugated)."""
        w = self.model.weights
        return fields_b.conj().T @ (w[:, None] * fields_a)

    def validate(self) -> dict:
        """Invariant residuals for this basis (cheap except dbar on big grids)."""
        G = self.gram
        herm = float(np.abs(G - G.conj().T).max())
        mineig = float(np.linalg.eigvalsh((G + G.conj().T) / 2).min())
        inv = float(np.abs(G @ self.gram_inv - np.eye(self.dim)).max())
        return {"gram_hermitian": herm, "gram_min_eig": mineig,
                "gram_inverse": inv, "dbar_residual": dbar_residual(self)}


def holomorphic_basis(model: KahlerModel, sigma: complex, k: int,
                      tail: float = DEFAULT_TAIL) -> SectionBasis:
    return SectionBasis(model, sigma, k, tail)


def gram_matrix(model: KahlerModel, values: np.ndarray) -> np.ndarray:
    """Quadrature Gram matrix G[i, j] = <s_j, s_i> against the symplectic volume."""
    w = model.weights
    return values.conj().T @ (w[:, None] * values)


def project(basis: SectionBasis, section) -> Section:
    """Orthogonal projection onto H^(k) through the Gram inverse."""
    if isinstance(section, Section):
        if section.k != basis.k:
            raise LevelMismatch(f"section level {section.k} != basis level {basis.k}")
        vals = section.values
    else:
        vals = np.asarray(section, dtype=complex).ravel()
    c = basis.compress(vals[:, None])[:, 0]
    return Section(basis.k, basis.values @ c, c)


def toeplitz(basis: SectionBasis, f, symbol: str | None = None) -> OperatorMatrix:
    fv = function_values(basis.model, f)
    mat = basis.compress(fv[:, None] * basis.values)
    return OperatorMatrix(basis.k, basis.sigma, mat, symbol)


def identity_operator(basis: SectionBasis) -> OperatorMatrix:
    return OperatorMatrix(basis.k, basis.sigma, np.eye(basis.dim, dtype=complex), "1")


def prequantum(basis: SectionBasis, f) -> OperatorMatrix:
    """pi o P_f with P_f = -(1/k) nabla_{X_f} + i f, X_f = omega^{-1} df.

    Holomorphy of the basis kills the (0,1)-part of X_f, so only the
    dz-pairing of the Hamiltonian field enters.
    """
    model, sigma = basis.model, basis.sigma
    cs = complex_structure(model, sigma)
    X1, X2 = f.hamiltonian(model, sigma)
    Xz = cs.dz_frame[0] * X1 + cs.dz_frame[1] * X2
    fv = function_values(model, f)
    fields = -(1.0 / basis.k) * Xz[:, None] * basis.nabla_z + 1j * fv[:, None] * basis.values
    return OperatorMatrix(basis.k, sigma, basis.compress(fields), "prequantum")


def operator_norm(basis: SectionBasis, A) -> float:
    """Operator norm induced by the section inner product (Cholesky congruence)."""
    mat = A.matrix if isinstance(A, OperatorMatrix) else np.asarray(A)
    C = basis.chol
    M = C.conj().T @ mat @ np.linalg.inv(C.conj().T)
    return float(np.linalg.norm(M, 2))


def gram_adjoint(basis: SectionBasis, A) -> np.ndarray:
    mat = A.matrix if isinstance(A, OperatorMatrix) else np.asarray(A)
    return basis.gram_inv @ mat.conj().T @ basis.gram


# -- holomorphic vector fields and the order-reduction identities ---------


class TorusHoloField:
    """A section phi(x, y) d/dz of the holomorphic tangent bundle."""

    def __init__(self, phi):
        self.phi = phi  # TorusFunction

    def z_component(self, model, sigma):
        return self.phi.values(model)

    def z_component_dz(self, model, sigma):
        return self.phi.dz_values(model, sigma, 1)

    def f_X(self, model, sigma):
        # f_X = -Lambda d(i_X omega) = -dphi/dz on the flat torus
        return -self.phi.dz_values(model, sigma, 1)

    def f_X_dz(self, model, sigma):
        return -self.phi.dz_values(model, sigma, 2)


class SphereHoloField:
    """chi(z) d/dz with polynomial chi; degree <= 2 extends over the sphere."""

    def __init__(self, chi_coeffs):
        self.chi = list(map(complex, chi_coeffs))

    def _chi(self, z, order=0):
        c = self.chi
        for _ in range(order):
            c = [j * c[j] for j in range(1, len(c))] or [0.0]
        out = np.zeros_like(z)
        for j, cj in enumerate(c):
            out = out + cj * z**j
        return out

    def z_component(self, model, sigma):
        return self._chi(sphere_z(model))

    def z_component_dz(self, model, sigma):
        return self._chi(sphere_z(model), 1)

    def f_X(self, model, sigma):
        z = sphere_z(model)
        r2 = np.abs(z) ** 2
        return -self._chi(z, 1) + 2 * np.conj(z) * self._chi(z) / (1 + r2)

    def f_X_dz(self, model, sigma):
        z = sphere_z(model)
        r2 = np.abs(z) ** 2
        zb = np.conj(z)
        return (-self._chi(z, 2) + 2 * zb * self._chi(z, 1) / (1 + r2)
                - 2 * zb**2 * self._chi(z) / (1 + r2) ** 2)


@dataclass(frozen=True)
class FirstOrderReduction:
    matrix: OperatorMatrix          # pi nabla_X restricted to H^(k)
    toeplitz: OperatorMatrix        # T_{f_X}
    symbol: np.ndarray              # f_X on the grid
    residual: float


def reduce_first_order(basis: SectionBasis, X) -> FirstOrderReduction:
    """pi nabla_X = T_{f_X} for X a section of the holomorphic tangent bundle."""
    model, sigma = basis.model, basis.sigma
    chi = X.z_component(model, sigma)
    mat = OperatorMatrix(basis.k, sigma, basis.compress(chi[:, None] * basis.nabla_z))
    fX = X.f_X(model, sigma)
    T = toeplitz(basis, fX, "f_X")
    res = operator_norm(basis, mat.matrix - T.matrix)
    return FirstOrderReduction(mat, T, fX, res)


@dataclass(frozen=True)
class SecondOrderReduction:
    second_matrix: OperatorMatrix
    second_symbol: np.ndarray
    residual_second: float
    residual_adjoint: float
    residual_five_term: float


def reduce_second_order(basis: SectionBasis, X1, X2, h) -> SecondOrderReduction:
    """The iterated and adjoint reduction identities on H^(k):

    * pi nabla_{X1} nabla_{X2} = T_{f_{X2} f_{X1} - X2(f_{X1})},
    * pi (nabla_{X1})^* pi = -T_{f_{X1bar}},
    * the five-term expansion of pi (nabla_{X1})^* (nabla_{X2})^* h pi.
    """
    model, sigma = basis.model, basis.sigma
    w = model.weights
    chi1 = X1.z_component(model, sigma)
    chi2 = X2.z_component(model, sigma)
    d2 = chi1[:, None] * (X2.z_component_dz(model, sigma)[:, None] * basis.nabla_z
                          + chi2[:, None] * basis.nabla_z2)
    M2 = basis.compress(d2)
    f1 = X1.f_X(model, sigma)
    f2 = X2.f_X(model, sigma)
    sym2 = f2 * f1 - chi2 * X1.f_X_dz(model, sigma)
    T2 = toeplitz(basis, sym2)
    res2 = operator_norm(basis, M2 - T2.matrix)

    # adjoint identity pi (nabla_X1)^* pi = T_{f_{X1bar}}, using
    # <(nabla_X1)^* s_j, s_i> = <s_j, nabla_X1 s_i>
    nX1 = chi1[:, None] * basis.nabla_z
    Madj = basis.gram_inv @ basis.pair(basis.values, nX1)
    resadj = operator_norm(basis, Madj - toeplitz(basis, np.conj(f1)).matrix)

    # five-term identity with the multiplication operator h in the middle
    if h is None or np.isscalar(h):
        hv = np.full(model.npts, 1.0 if h is None else complex(h))
        hzb1 = np.zeros(model.npts, complex)
        hzb2 = np.zeros(model.npts, complex)
    else:
        hv = function_values(model, h)
        hzb1 = h.dzbar_values(model, sigma, 1)
        hzb2 = h.dzbar_values(model, sigma, 2)
    d21 = chi2[:, None] * (X1.z_component_dz(model, sigma)[:, None] * basis.nabla_z
                           + chi1[:, None] * basis.nabla_z2)
    MF = basis.gram_inv @ basis.pair(hv[:, None] * basis.values, d21)
    c1b, c2b = np.conj(chi1), np.conj(chi2)
    f1b, f2b = np.conj(f1), np.conj(f2)
    X2bar_h = c2b * hzb1
    X1bar_X2bar_h = c1b * (np.conj(X2.z_component_dz(model, sigma)) * hzb1 + c2b * hzb2)
    X1bar_f2bar = c1b * np.conj(X2.f_X_dz(model, sigma))
    rhs = (X1bar_X2bar_h - f1b * X2bar_h - f2b * c1b * hzb1
           - X1bar_f2bar * hv + f1b * f2b * hv)
    res5 = operator_norm(basis, MF - toeplitz(basis, rhs).matrix)

    return SecondOrderReduction(OperatorMatrix(basis.k, sigma, M2), sym2, res2, resadj, res5)


# -- discrete dbar residual -------------------------------------------------


def torus_section_gradient(model: KahlerModel, k: int, values: np.ndarray):
    """Spectral (d/dx, d/dy) of a level-k torus section sampled on the grid.

    x is an honest Fourier direction.  In y the section is only
    quasi-periodic; its x-frequency profiles satisfy c_n(y+1) = c_{n+k}(y),
    so each profile is unfolded along its frequency orbit into a smooth,
    rapidly decaying window and differentiated spectrally there.
    """
    n = model.shape[0]
    V = np.asarray(values, dtype=complex).reshape(model.shape)
    freqs = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    C = np.fft.fft(V, axis=0) / n  # c_n(y_j) in fft frequency order
    dX = np.fft.ifft(2j * np.pi * freqs[:, None] * C, axis=0) * n

    # One unfolded profile per residue class r = n mod k, spanning the whole
    # available frequency range, so the stitched window decays to nothing at
    # both ends for any grid-resolved section.
    idx = {int(f): i for i, f in enumerate(freqs)}
    dC = np.zeros_like(C)
    for r in range(k):
        ms = np.array(sorted((int(f) - r) // k for f in freqs if (int(f) - r) % k == 0))
        win = len(ms)
        prof = np.empty(win * n, dtype=complex)
        for pos, m in enumerate(ms):
            prof[pos * n:(pos + 1) * n] = C[idx[r + m * k]]
        wf = np.fft.fftfreq(win * n, d=1.0 / n)
        dprof = np.fft.ifft(2j * np.pi * wf * np.fft.fft(prof))
        for pos, m in enumerate(ms):
            dC[idx[r + m * k]] = dprof[pos * n:(pos + 1) * n]
    dY = np.fft.ifft(dC, axis=0) * n
    return dX.ravel(), dY.ravel()


def dbar_residual(basis: SectionBasis) -> float:
    """Discrete residual of the holomorphy equation, independent of the
    construction path of the basis sections."""
    model, sigma, k = basis.model, basis.sigma, basis.k
    if model.kind == "torus":
        b = sigma.imag
        y = model.coord2
        worst = 0.0
        scale = np.abs(basis.nabla_z).max()
        for j in range(basis.dim):
            dX, dY = torus_section_gradient(model, k, basis.values[:, j])
            cdx = dX + 2j * np.pi * k * y * basis.values[:, j]  # nabla_x
            dbar = -1j / (2 * b) * (sigma * cdx - dY)
            worst = max(worst, float(np.abs(dbar).max()))
        return worst / max(scale, 1e-300)
    # sphere: weak-form residual <f_Xbar s_j, s_l> - <s_j, nabla_X s_l> with X = d/dz
    z = sphere_z(model)
    r2 = np.abs(z) ** 2
    fXbar = np.conj(2 * np.conj(z) / (1 + r2))
    lhs = basis.pair(fXbar[:, None] * basis.values, basis.values)
    rhs = basis.pair(basis.values, basis.nabla_z)
    scale = max(np.abs(rhs).max(), 1.0)
    return float(np.abs(lhs - rhs).max() / scale)
