"""Desk-scale Kahler models: the flat torus family and the round sphere.

Conventions (fixed once, used by every other module):

* Torus: M = [0,1)^2 with symplectic form omega = 2*pi dx^dy, so the total
  symplectic volume is 2*pi (one prequantum unit).  The complex structure at
  a point sigma of the upper half-plane is the one with holomorphic
  coordinate z = x + sigma*y.
* Sphere: the Fubini-Study form normalized to total volume 2*pi, written in
  the affine coordinate z = tan(theta/2) e^{i phi}; the anticanonical twist
  gives first Chern class 2[omega].
* The contraction in V[I] = Gtilde(V) . omega inserts omega on its first
  slot; in matrix form V[I] = Gtilde @ W with W_{cb} = omega_{bc}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OMEGA_SCALE = 2.0 * np.pi  # one prequantum unit of symplectic volume

_MIN_GRID = 4


class ModelError(ValueError):
    """Bad model parameters (unknown kind, undersized grid, invalid sigma)."""


@dataclass(frozen=True)
class KahlerModel:
    """A compact Kahler model with its quadrature grid.

    ``weights`` are quadrature weights against the symplectic volume form,
    so ``weights @ f`` approximates the integral of f against omega.  Both
    coordinate arrays are flattened C-order copies of the 2-d grid.
    """

    kind: str
    omega_scale: float
    chern_n: int
    shape: tuple[int, int]
    coord1: np.ndarray  # torus: x, sphere: theta
    coord2: np.ndarray  # torus: y, sphere: phi
    weights: np.ndarray

    @property
    def npts(self) -> int:
        return self.weights.size

    def symplectic_volume(self) -> float:
        return float(np.sum(self.weights))

    def grid(self, values):
        """Reshape a flattened field back to the 2-d grid."""
        return np.asarray(values).reshape(self.shape)


@dataclass(frozen=True)
class ComplexStructurePoint:
    """Almost-complex structure data at one point of the family."""

    sigma: complex
    I_matrix: np.ndarray   # (2, 2, npts) real
    metric: np.ndarray     # (2, 2, npts) real, g = omega(., I .)
    dz_frame: np.ndarray   # (2, npts) complex components of dz in the chart coframe


@dataclass(frozen=True)
class TangentDirection:
    """Tangent vector of the family, alpha * d/dsigma + beta * d/dsigma_bar.

    A real vector v1*d/d(Re sigma) + v2*d/d(Im sigma) is (v, conj(v)) with
    v = v1 + i v2.
    """

    alpha: complex
    beta: complex

    @classmethod
    def real(cls, v: complex) -> "TangentDirection":
        v = complex(v)
        return cls(v, np.conj(v))

    @classmethod
    def holomorphic(cls, v: complex = 1.0) -> "TangentDirection":
        return cls(complex(v), 0.0)

    @classmethod
    def antiholomorphic(cls, v: complex = 1.0) -> "TangentDirection":
        return cls(0.0, complex(v))

    @property
    def is_real(self) -> bool:
        return abs(self.beta - np.conj(self.alpha)) < 1e-15 * max(1.0, abs(self.alpha))

    def scaled(self, c: float) -> "TangentDirection":
        # real scaling only; complex rescaling would leave the real slice
        return TangentDirection(self.alpha * c, self.beta * c)

    def plus(self, other: "TangentDirection") -> "TangentDirection":
        return TangentDirection(self.alpha + other.alpha, self.beta + other.beta)


@dataclass(frozen=True)
class FamilyVariation:
    """Derivative of the complex-structure family along one direction."""

    direction: TangentDirection
    VI: np.ndarray          # (2, 2, npts), derivative of I along the direction
    G_coeff: np.ndarray     # (npts,) coefficient of G(V) on dz_frame tensor dz_frame
    Gtilde: np.ndarray      # (2, 2, npts) complex, self-conjugate completion


@dataclass(frozen=True)
class RicciData:
    F: np.ndarray           # Ricci potential, mean zero
    ricci_coeff: np.ndarray # Ricci form = ricci_coeff * omega pointwise
    chern_n: int


def build_model(kind: str, **grid) -> KahlerModel:
    """Construct a model: build_model("torus", n=64) or
    build_model("sphere", n_theta=24, n_phi=48).

    Torus quadrature is the uniform trapezoid rule; the sphere uses
    Gauss-Legendre nodes in cos(theta) times a uniform phi grid, which
    integrates every section pairing used here exactly (up to roundoff).
    """
    if kind == "torus":
        n = int(grid.pop("n"))
        if grid:
            raise ModelError(f"unknown torus grid parameters: {sorted(grid)}")
        if n < _MIN_GRID:
            raise ModelError(f"torus grid n={n} below minimum {_MIN_GRID}")
        xs = np.arange(n) / n
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        w = np.full(n * n, OMEGA_SCALE / (n * n))
        return KahlerModel("torus", OMEGA_SCALE, 0, (n, n), X.ravel(), Y.ravel(), w)
    if kind == "sphere":
        n_theta = int(grid.pop("n_theta"))
        n_phi = int(grid.pop("n_phi"))
        if grid:
            raise ModelError(f"unknown sphere grid parameters: {sorted(grid)}")
        if n_theta < _MIN_GRID or n_phi < _MIN_GRID:
            raise ModelError("sphere grid below minimum size 4")
        t, wt = np.polynomial.legendre.leggauss(n_theta)
        theta = np.arccos(t)
        phi = np.arange(n_phi) * 2.0 * np.pi / n_phi
        TH, PH = np.meshgrid(theta, phi, indexing="ij")
        # omega = (1/2) sin(theta) dtheta^dphi = (1/2) d(cos theta)^dphi
        W = np.outer(wt, np.full(n_phi, 2.0 * np.pi / n_phi)) / 2.0
        return KahlerModel("sphere", OMEGA_SCALE, 2, (n_theta, n_phi),
                           TH.ravel(), PH.ravel(), W.ravel())
    raise ModelError(f"unknown model kind: {kind!r}")


def sphere_z(model: KahlerModel) -> np.ndarray:
    """Affine coordinate z = tan(theta/2) e^{i phi} on the sphere grid."""
    if model.kind != "sphere":
        raise ModelError("sphere_z needs a sphere model")
    return np.tan(model.coord1 / 2.0) * np.exp(1j * model.coord2)


def check_sigma(model: KahlerModel, sigma: complex) -> complex:
    sigma = complex(sigma)
    if model.kind == "torus" and sigma.imag <= 0:
        raise ModelError(f"sigma={sigma} not in the upper half-plane")
    return sigma


def _torus_I(sigma: complex) -> np.ndarray:
    a, b = sigma.real, sigma.imag
    return np.array([[-a / b, -(a * a + b * b) / b],
                     [1.0 / b, a / b]])


def complex_structure(model: KahlerModel, sigma: complex) -> ComplexStructurePoint:
    """Almost-complex structure solving dz o I = i dz for the model chart."""
    sigma = check_sigma(model, sigma)
    npts = model.npts
    if model.kind == "torus":
        a, b = sigma.real, sigma.imag
        I = np.repeat(_torus_I(sigma)[:, :, None], npts, axis=2)
        g = np.repeat((OMEGA_SCALE / b * np.array([[1.0, a], [a, a * a + b * b]]))[:, :, None],
                      npts, axis=2)
        dz = np.vstack([np.ones(npts), np.full(npts, sigma)]).astype(complex)
        return ComplexStructurePoint(sigma, I, g, dz)
    # sphere: z = tan(theta/2) e^{i phi}, dz = (z/sin theta) dtheta + i z dphi
    theta = model.coord1
    st = np.sin(theta)
    I = np.zeros((2, 2, npts))
    I[0, 1] = -st
    I[1, 0] = 1.0 / st
    g = np.zeros((2, 2, npts))
    g[0, 0] = 0.5
    g[1, 1] = 0.5 * st * st
    z = sphere_z(model)
    dz = np.vstack([z / st, 1j * z])
    return ComplexStructurePoint(sigma, I, g, dz)


def dz_vector(model: KahlerModel, sigma: complex) -> np.ndarray:
    """Chart components of the holomorphic frame vector d/dz, shape (2, npts)."""
    sigma = check_sigma(model, sigma)
    if model.kind == "torus":
        b = sigma.imag
        comp = 1j / (2 * b) * np.array([np.conj(sigma), -1.0])
        return np.repeat(comp[:, None], model.npts, axis=1)
    theta = model.coord1
    z = sphere_z(model)
    r2 = np.abs(z) ** 2
    # invert dz = (z/sin th) dth + i z dph together with its conjugate
    st = np.sin(theta)
    dzdth = z / st
    dzdph = 1j * z
    det = dzdth * np.conj(dzdph) - dzdph * np.conj(dzdth)
    return np.vstack([np.conj(dzdph), -np.conj(dzdth)]) / det


def inverse_metric_zzbar(model: KahlerModel, sigma: complex):
    """The g^{z zbar} component of the inverse Kahler metric on the grid."""
    sigma = check_sigma(model, sigma)
    if model.kind == "torus":
        return np.full(model.npts, sigma.imag / np.pi)
    r2 = np.abs(sphere_z(model)) ** 2
    return (1.0 + r2) ** 2


def variation(model: KahlerModel, sigma: complex, V: TangentDirection) -> FamilyVariation:
    """Differentiate the family of complex structures along V.

    On the torus the holomorphic part is G(V) = -(i alpha / pi) dz x dz in
    the frame of complex_structure; the sphere has no family and returns the
    zero variation.
    """
    sigma = check_sigma(model, sigma)
    npts = model.npts
    if model.kind == "sphere" or (V.alpha == 0 and V.beta == 0):
        zeros22 = np.zeros((2, 2, npts))
        return FamilyVariation(V, zeros22, np.zeros(npts, complex),
                               np.zeros((2, 2, npts), complex))
    a, b = sigma.real, sigma.imag
    sb = np.conj(sigma)
    # d I / d sigma in closed form; d I / d sigma_bar is its conjugate
    dIds = (1j / (2 * b * b)) * np.array([[-sb, -sb * sb], [1.0, sb]])
    VI = (V.alpha * dIds + V.beta * np.conj(dIds)).real
    if np.abs((V.alpha * dIds + V.beta * np.conj(dIds)).imag).max() > 1e-13 * max(1.0, np.abs(VI).max()):
        # non-real directions keep the complex matrix
        VI = V.alpha * dIds + V.beta * np.conj(dIds)
    g_c = -1j * V.alpha / np.pi
    g_c_bar = 1j * V.beta / np.pi  # conjugate slot, = conj(g_c) for real V
    dz = dz_vector(model, sigma)[:, 0]
    Pz = np.einsum("a,b->ab", dz, dz)
    Gt = g_c * Pz + g_c_bar * np.conj(Pz)
    Gtilde = np.repeat(Gt[:, :, None], npts, axis=2)
    VI_field = np.repeat(np.asarray(VI, dtype=Gtilde.dtype)[:, :, None], npts, axis=2)
    return FamilyVariation(V, VI_field, np.full(npts, g_c), Gtilde)


def omega_matrix(model: KahlerModel) -> np.ndarray:
    """Components omega_{ab} in the chart (constant on the torus)."""
    s = model.omega_scale
    if model.kind == "torus":
        return np.broadcast_to(np.array([[0.0, s], [-s, 0.0]])[:, :, None],
                               (2, 2, model.npts)).copy()
    st = np.sin(model.coord1)
    W = np.zeros((2, 2, model.npts))
    W[0, 1] = 0.5 * st
    W[1, 0] = -0.5 * st
    return W


def reconstruct_VI(model: KahlerModel, var: FamilyVariation) -> np.ndarray:
    """Gtilde contracted with omega (first slot), for the reconstruction check."""
    om = omega_matrix(model)
    W = np.transpose(om, (1, 0, 2))  # W_{cb} = omega_{bc}
    return np.einsum("acp,cbp->abp", var.Gtilde, W)


def rigidity_residual(model: KahlerModel, sigma: complex, V: TangentDirection) -> float:
    """Sup-norm of dbar applied to the G(V) coefficient over the grid."""
    var = variation(model, sigma, V)
    if model.kind == "sphere":
        return 0.0
    n = model.shape[0]
    field = var.G_coeff.reshape(model.shape)
    freq = np.fft.fftfreq(n, d=1.0 / n)
    kx = freq[:, None]
    ky = freq[None, :]
    fh = np.fft.fft2(field)
    dx = np.fft.ifft2(2j * np.pi * kx * fh)
    dy = np.fft.ifft2(2j * np.pi * ky * fh)
    b = sigma.imag
    dbar = -1j / (2 * b) * (sigma * dx - dy)
    return float(np.abs(dbar).max())


def ricci_data(model: KahlerModel, sigma: complex) -> RicciData:
    """Ricci potential and Ricci form; both built-in models are Einstein."""
    check_sigma(model, sigma)
    F = np.zeros(model.npts)
    coeff = np.full(model.npts, float(model.chern_n))
    return RicciData(F, coeff, model.chern_n)
