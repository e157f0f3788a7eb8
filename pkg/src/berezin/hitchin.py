"""The Hitchin connection: its second-order form u(V), the holomorphicity
preservation residual, parallel transport over the family, and the
projection-derivative identity.

On the torus the connection form reduces to u(V) = (1/4k) Delta_{G(V)},
with Delta_{G(V)} = g_c nabla_z nabla_z for the constant frame coefficient
g_c of the variation; the gradient and potential parts vanish because the
Ricci potential is identically zero.  The sphere has no family, so every
operation returns zero data there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (KahlerModel, ModelError, TangentDirection, check_sigma,
                       dz_vector, variation)
from .quantization import OperatorMatrix, SectionBasis, holomorphic_basis


def torus_function_gradient(model: KahlerModel, values: np.ndarray):
    """Spectral (d/dx, d/dy) of a doubly periodic grid function."""
    n = model.shape[0]
    F = np.asarray(values, dtype=complex).reshape(model.shape)
    freq = np.fft.fftfreq(n, d=1.0 / n)
    Fh = np.fft.fft2(F)
    dx = np.fft.ifft2(2j * np.pi * freq[:, None] * Fh).ravel()
    dy = np.fft.ifft2(2j * np.pi * freq[None, :] * Fh).ravel()
    return dx, dy


@dataclass(frozen=True)
class HitchinForm:
    """u(V) and its three parts, with the basis sections as domain.

    The ``*_fields`` arrays hold the operator applied to each basis section
    as a grid field (npts x dim); the target is smooth sections, not H^(k),
    since on the torus the compression of Delta_{G(V)} to H^(k) vanishes
    identically by the second-order reduction identity.  ``u_matrix`` is
    that (informative but near-zero) compression.
    """

    sigma: complex
    direction: TangentDirection
    k: int
    laplace_fields: np.ndarray       # (1/2) Delta_{G(V)} on the basis sections
    gradient_fields: np.ndarray      # -nabla_{G(V) dF}; zero for both models
    potential_fields: np.ndarray     # 2k V'[F]; zero for both models
    u_fields: np.ndarray
    u_matrix: OperatorMatrix
    assembly_residual: float         # direct vs (X_r, Y_r, Z) assembly, sup norm


def u_apply(basis: SectionBasis, V: TangentDirection) -> np.ndarray:
    """u(V) applied to the basis sections, as grid fields."""
    model = basis.model
    if model.kind == "sphere":
        return np.zeros_like(basis.values)
    var = variation(model, basis.sigma, V)
    g_c = var.G_coeff[0]
    n = model.chern_n
    return (0.5 * g_c / (2 * basis.k + n)) * basis.nabla_z2


def hitchin_form(model: KahlerModel, sigma: complex, V: TangentDirection, k: int,
                 basis: SectionBasis | None = None) -> HitchinForm:
    """Assemble u(V) = (1/(2k+n)) { (1/2) Delta_{G(V)} - nabla_{G(V)dF} + 2k V'[F] }.

    The direct Laplacian chain (nabla^{1,0}, contraction with G, second
    covariant derivative, trace) is cross-assembled against the one-pair
    decomposition G(V) = 2 X Y with X = Y = sqrt(g_c/2) d/dz, whose lower
    order term Z = Tr(nabla X) Y - 2 X(F) Y is computed spectrally from the
    coefficient fields.
    """
    sigma = check_sigma(model, sigma)
    if basis is None:
        basis = holomorphic_basis(model, sigma, k)
    dim = basis.dim
    zero_fields = np.zeros((model.npts, dim), dtype=complex)
    zero_mat = OperatorMatrix(k, sigma, np.zeros((dim, dim), dtype=complex))
    if model.kind == "sphere":
        return HitchinForm(sigma, V, k, zero_fields, zero_fields, zero_fields,
                           zero_fields, zero_mat, 0.0)

    var = variation(model, sigma, V)
    g_c = var.G_coeff  # constant field
    n = model.chern_n

    # direct chain: eta = nabla_z s; G eta = g_c eta d/dz; trace of the
    # second (1,0)-derivative gives d_z(g_c) eta + g_c nabla_z^2 s
    dgx, dgy = torus_function_gradient(model, g_c)
    dzv = dz_vector(model, sigma)
    dz_gc = dzv[0] * dgx + dzv[1] * dgy
    lap_fields = 0.5 * (dz_gc[:, None] * basis.nabla_z + g_c[:, None] * basis.nabla_z2)
    u_fields = lap_fields / (2 * k + n)
    u_mat = OperatorMatrix(k, sigma, basis.compress(u_fields), "u(V)")

    # decomposition assembly with the single global pair G = 2 X Y,
    # X = Y = sqrt(g_c/2) d/dz, Z = Tr(nabla X) Y - 2 X(F) Y (F = 0 here)
    c = np.sqrt(complex(g_c[0]) / 2.0)
    cf = np.full(model.npts, c)
    dcx, dcy = torus_function_gradient(model, cf)
    dz_c = dzv[0] * dcx + dzv[1] * dcy
    dec_fields = cf[:, None] * (dz_c[:, None] * basis.nabla_z + cf[:, None] * basis.nabla_z2)
    dec_fields = dec_fields + (dz_c * cf)[:, None] * basis.nabla_z
    scale = max(np.abs(lap_fields).max(), 1e-300)
    residual = float(np.abs(lap_fields - dec_fields).max() / scale)

    return HitchinForm(sigma, V, k, lap_fields, zero_fields, zero_fields,
                       u_fields, u_mat, residual)


def eqcond_residual(model: KahlerModel, sigma: complex, V: TangentDirection, k: int,
                    basis: SectionBasis | None = None) -> float:
    """Relative sup-norm of (i/2) V[I] nabla^{1,0} s + nabla^{0,1} (u(V) s)
    over the basis sections.  Zero means the connection preserves H^(k)."""
    sigma = check_sigma(model, sigma)
    if model.kind == "sphere":
        return 0.0
    if basis is None:
        basis = holomorphic_basis(model, sigma, k)
    var = variation(model, sigma, V)
    if not np.abs(var.VI).any():
        return 0.0
    VI = var.VI[:, :, 0]
    b = sigma.imag
    dzbar_vec = np.array([-1j * sigma / (2 * b), 1j / (2 * b)])
    kappa = np.array([1.0, sigma]) @ VI @ dzbar_vec  # dz o V[I] on d/dzbar
    g_c = var.G_coeff[0]
    n = model.chern_n
    c1 = 2j * np.pi * k
    coef = 0.5 * g_c / (2 * k + n)
    u_poly = (coef * np.pi * k / b, 0.0, coef * c1 * c1)
    dbar_u = basis.dbar_of_poly_series([u_poly])[0]
    resid = 0.5j * kappa * basis.nabla_z + dbar_u
    scale = max(np.abs(basis.nabla_z).max(), 1e-300)
    return float(np.abs(resid).max() / scale)


def frame_generator(model: KahlerModel, sigma: complex, velocity: complex, k: int) -> np.ndarray:
    """Coefficient matrix of d/dt in the moving theta frame along a path with
    the given complex velocity: the projection of u(V)s - V[s]."""
    basis = holomorphic_basis(model, sigma, k)
    V = TangentDirection.real(velocity)
    fields = u_apply(basis, V) - V.alpha * basis.dsigma
    return basis.compress(fields)


@dataclass(frozen=True)
class TransportResult:
    path: tuple
    k: int
    propagator: np.ndarray
    step_count: int
    local_error_estimate: float


def _rk4_run(model, waypoints, k, step):
    dim = k if model.kind == "torus" else k + 1
    U = np.eye(dim, dtype=complex)
    steps = 0
    for a, b in zip(waypoints[:-1], waypoints[1:]):
        vel = b - a
        if vel == 0:
            continue
        nsteps = max(1, int(np.ceil(1.0 / step)))
        h = 1.0 / nsteps
        for i in range(nsteps):
            t0 = i * h
            B1 = frame_generator(model, a + t0 * vel, vel, k)
            Bm = frame_generator(model, a + (t0 + h / 2) * vel, vel, k)
            B3 = frame_generator(model, a + (t0 + h) * vel, vel, k)
            k1 = B1 @ U
            k2 = Bm @ (U + 0.5 * h * k1)
            k3 = Bm @ (U + 0.5 * h * k2)
            k4 = B3 @ (U + h * k3)
            U = U + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            steps += 1
    return U, steps


def transport(model: KahlerModel, path, k: int, step: float = 0.05) -> TransportResult:
    """Parallel transport in the moving theta frame with classical RK4.

    The propagator maps coefficient vectors at path[0] to coefficient
    vectors at path[-1].  The local error estimate compares against one run
    at half the step; transport is refused when that defect exceeds 1e-2.
    """
    waypoints = [complex(s) for s in path]
    if len(waypoints) < 2:
        basisdim = k if model.kind == "torus" else k + 1
        return TransportResult(tuple(waypoints), k, np.eye(basisdim, dtype=complex), 0, 0.0)
    if model.kind == "torus":
        for a, b in zip(waypoints[:-1], waypoints[1:]):
            ts = np.linspace(0, 1, 17)
            if np.min([(a + t * (b - a)).imag for t in ts]) <= 0:
                raise ModelError("transport path touches the real axis")
    if step <= 0:
        raise ModelError("transport step must be positive")
    U, steps = _rk4_run(model, waypoints, k, step)
    U2, _ = _rk4_run(model, waypoints, k, step / 2)
    defect = float(np.abs(U - U2).max())
    if defect > 1e-2:
        raise ModelError(f"transport step {step} too large to converge (defect {defect:.2e})")
    return TransportResult(tuple(waypoints), k, U, steps, defect)


def off_scalar_defect(propagator: np.ndarray) -> tuple[complex, float]:
    """Scalar part of a loop propagator and the relative off-scalar defect."""
    lam = np.trace(propagator) / propagator.shape[0]
    defect = float(np.abs(propagator - lam * np.eye(propagator.shape[0])).max() / abs(lam))
    return complex(lam), defect


def projection_derivative_residual(model: KahlerModel, sigma: complex, V: TangentDirection,
                                   k: int, fd_step: float = 1e-4, probes=None):
    """Residual of pi V[pi] = pi u(V)^* - pi u(V)^* pi on a probe set.

    V[pi] is a central finite difference of the Gram projection at
    sigma +/- fd_step * V.  Returns (residual, cancellation_estimate); the
    latter grows like eps/fd_step and flags an unusable step size.
    """
    sigma = check_sigma(model, sigma)
    if fd_step <= 0:
        raise ModelError("fd_step must be positive")
    basis = holomorphic_basis(model, sigma, k)
    if model.kind == "sphere" or (V.alpha == 0 and V.beta == 0):
        return 0.0, 0.0
    if not V.is_real:
        raise ModelError("projection derivative uses real directions")
    v = V.alpha
    if probes is None:
        x, y = model.coord1, model.coord2
        probes = [np.exp(2j * np.pi * x) * basis.values[:, 0],
                  np.exp(-2j * np.pi * y) * basis.values[:, -1],
                  np.exp(2j * np.pi * (x + y)) * basis.values[:, 0],
                  basis.values[:, 0]]
    bp = holomorphic_basis(model, sigma + fd_step * v, k)
    bm = holomorphic_basis(model, sigma - fd_step * v, k)
    us = u_apply(basis, V)
    w = model.weights

    def proj_vals(b, phi):
        return b.values @ (b.gram_inv @ (b.values.conj().T @ (w * phi)))

    def pi_ustar(phi):
        c = basis.gram_inv @ (us.conj().T @ (w * phi))
        return basis.values @ c

    worst = 0.0
    scale = 0.0
    for phi in probes:
        dpi = (proj_vals(bp, phi) - proj_vals(bm, phi)) / (2 * fd_step)
        lhs = proj_vals(basis, dpi)
        rhs = pi_ustar(phi) - pi_ustar(proj_vals(basis, phi))
        worst = max(worst, float(np.abs(lhs - rhs).max()))
        scale = max(scale, float(np.abs(rhs).max()), float(np.abs(phi).max()))
    cancellation = np.finfo(float).eps * scale / fd_step
    return worst / max(scale, 1e-300), cancellation
