"""Named verification suites run by the CLI.

Each suite returns a list of CheckRecord; thresholds come from the spec
defaults and can be overridden per check through the config's tolerances
table.  All suites are deterministic: the only randomness (the linearity
and derivation property samples) is drawn from the seed recorded in the
config.
"""

from __future__ import annotations

import time

import numpy as np

from . import asymptotics as asym
from . import formal
from . import hitchin
from . import quantization as qn
from .config import ConfigError, ExperimentConfig, default_functions
from .functions import TorusFunction, function_values
from .geometry import TangentDirection, build_model
from .report import CheckRecord, Report, environment_stamp

TORUS_SUITES = ("tuynman", "toeplitz-asymptotics", "norm-limit", "hitchin-eqcond",
                "transport-holonomy", "projection-derivative", "formal-derivation",
                "formal-flatness", "trivialization", "invariant-star")
SPHERE_SUITES = ("tuynman", "toeplitz-asymptotics", "norm-limit")


def _timer():
    t0 = time.perf_counter()
    return lambda: time.perf_counter() - t0


def _function_labels(cfg: ExperimentConfig):
    funcs = default_functions(cfg)
    labels = []
    for i, spec in enumerate(cfg.functions or [{}] * len(funcs)):
        if isinstance(spec, dict) and "name" in spec:
            labels.append(spec["name"])
        elif isinstance(spec, dict) and "modes" in spec:
            labels.append("modes" + "".join(f"({r[0]},{r[1]})" for r in spec["modes"]))
        else:
            labels.append(["cos2pix", "x3", "x1"][i] if cfg.kind != "torus" or i == 0 else f"f{i}")
    return list(zip(labels, funcs))


def _slope_record(name, check: asym.DecayCheck, runtime, table=None) -> CheckRecord:
    value = 0.0 if check.at_floor else abs(check.slope - check.expected)
    details = {"slope": None if check.at_floor else check.slope,
               "expected_slope": check.expected, "at_noise_floor": check.at_floor}
    return CheckRecord(name, value, 0.3, check.passed, runtime, "<=", details, table)


def suite_tuynman(cfg: ExperimentConfig) -> list:
    model = build_model(cfg.kind, **cfg.grid)
    tol = cfg.tolerance("tuynman", 1e-8)
    records = []
    for label, f in _function_labels(cfg):
        t = _timer()
        rows = []
        for k in cfg.k_values():
            for sigma in (cfg.sigmas if cfg.kind == "torus" else [0.0]):
                basis = qn.holomorphic_basis(model, sigma, k)
                lap = f.laplacian(model, sigma)
                corrected = f + lap * (-1.0 / (2.0 * k))
                P = qn.prequantum(basis, f)
                T = qn.toeplitz(basis, corrected)
                r = qn.operator_norm(basis, P.matrix - 1j * T.matrix)
                rows.append((k, r, 0.0, r))
        worst = max(r[1] for r in rows)
        records.append(CheckRecord(f"tuynman/{label}", worst, tol, worst <= tol,
                                   t(), "<=", {"k_range": [cfg.k_min, cfg.k_max]}, rows))
    return records


def suite_norm_limit(cfg: ExperimentConfig) -> list:
    model = build_model(cfg.kind, **cfg.grid)
    records = []
    for label, f in _function_labels(cfg):
        t = _timer()
        sup = f.sup(model)
        sigma = cfg.sigmas[0] if cfg.kind == "torus" else 0.0
        ks = cfg.k_values()
        diffs, rows = [], []
        for k in ks:
            basis = qn.holomorphic_basis(model, sigma, k)
            nrm = qn.operator_norm(basis, qn.toeplitz(basis, f))
            d = sup - nrm
            diffs.append(d)
            rows.append((k, d, 3.0 * sup / k, d - 3.0 * sup / k))
        diffs = np.array(diffs)
        bound = np.array([3.0 * sup / k for k in ks])
        ratio = float((diffs / bound).max())
        ok = bool(np.all(diffs > 0) and ratio <= 1.0)
        records.append(CheckRecord(f"norm-bound/{label}", ratio, 1.0, ok, t(), "<=",
                                   {"positive_gap": bool(np.all(diffs > 0)),
                                    "min_gap": float(diffs.min())}, rows))
        tmono = _timer()
        growth = float(np.max(np.diff(diffs))) if len(diffs) > 1 else -1.0
        records.append(CheckRecord(f"norm-gap-decreasing/{label}", growth, 1e-12,
                                   growth <= 1e-12, tmono(), "<="))
        if cfg.kind == "sphere" and label == "x3":
            t2 = _timer()
            errs = []
            for k in ks:
                basis = qn.holomorphic_basis(model, 0.0, k)
                nrm = qn.operator_norm(basis, qn.toeplitz(basis, f))
                errs.append(abs(nrm - k / (k + 2.0)))
            tolx = cfg.tolerance("norm-x3", 1e-8)
            worst = max(errs)
            records.append(CheckRecord("norm-x3-exact", worst, tolx, worst <= tolx, t2()))
    return records


def suite_toeplitz_asymptotics(cfg: ExperimentConfig) -> list:
    if cfg.kind == "sphere":
        return _sphere_product_asymptotics(cfg)
    return _torus_connection_asymptotics(cfg)


def _sphere_product_asymptotics(cfg: ExperimentConfig) -> list:
    model = build_model(cfg.kind, **cfg.grid)
    funcs = _function_labels(cfg)
    if len(funcs) < 2:
        raise ConfigError("toeplitz-asymptotics on the sphere needs two functions")
    (lf, f), (lg, g) = funcs[0], funcs[1]
    ks = cfg.k_values()
    records = []

    t = _timer()
    nprobe = len(asym.default_probe_basis(model))
    ks_rec = [k for k in ks if k + 1 >= 2 * nprobe]
    if len(ks_rec) < 4:
        raise ConfigError("k_range too small for symbol recovery (need several k >= 17)")
    sc = asym.star_coefficients(model, 0.0, f, g, 1, ks_rec)
    fg = function_values(model, f) * function_values(model, g)
    rt = t()

    t = _timer()
    r0 = asym.product_remainder_norms(model, 0.0, f, g, [fg], ks)
    fit0 = asym.fit_expansion(np.array(ks, float), r0, 0)
    chk = asym.check_decay_order(ks, r0, 1)
    rows = [(k, float(v), float(fit0.coefficients[0]), float(rv))
            for k, v, rv in zip(ks, r0, fit0.residual_norms)]
    records.append(_slope_record(f"schlichenmaier-L0/{lf}*{lg}", chk, t(), rows))

    t = _timer()
    r1 = asym.product_remainder_norms(model, 0.0, f, g, [fg, sc.functions[1]], ks)
    chk1 = asym.check_decay_order(ks, r1, 2)
    rows1 = [(k, float(v), 0.0, float(v)) for k, v in zip(ks, r1)]
    records.append(_slope_record(f"schlichenmaier-L1/{lf}*{lg}", chk1, t(), rows1))

    t = _timer()
    c0err = float(np.abs(sc.functions[0] - fg).max() / max(np.abs(fg).max(), 1e-300))
    tol0 = cfg.tolerance("c0-law", 0.02)
    records.append(CheckRecord(f"c0-law/{lf}*{lg}", c0err, tol0, c0err <= tol0, rt + t(),
                               "<=", {"recovery_condition": float(sc.condition_numbers.max())}))

    t = _timer()
    sc_rev = asym.star_coefficients(model, 0.0, g, f, 1, ks_rec)
    anti = sc.functions[1] - sc_rev.functions[1]
    pb = f.poisson(g, model)
    mask = np.abs(pb) > 0.1 * np.abs(pb).max()
    ratio = anti[mask] / pb[mask]
    spread = float(np.abs(ratio.std() / ratio.mean()))
    tol1 = cfg.tolerance("c1-antisymmetry", 0.05)
    records.append(CheckRecord(f"c1-antisymmetry/{lf}*{lg}", spread, tol1, spread <= tol1,
                               t(), "<=", {"fitted_ratio": [float(ratio.mean().real),
                                                            float(ratio.mean().imag)]}))
    return records


def _torus_connection_asymptotics(cfg: ExperimentConfig) -> list:
    model = build_model(cfg.kind, **cfg.grid)
    sigma = cfg.sigmas[0]
    label, f = _function_labels(cfg)[0]
    if not isinstance(f, TorusFunction):
        raise ConfigError("torus toeplitz-asymptotics needs a torus function")
    ks = cfg.k_values()
    records = []
    # pick the coordinate direction whose one-form coefficient is largest on f
    best, best_v = 0.0, TangentDirection.real(1.0)
    sj = formal.Jet.sigma(sigma)
    for v in (1.0, 1j):
        V = TangentDirection.real(v)
        size = sum(abs((formal.e_multiplier(sj, V, m)).val * a) for m, a in f.modes.items())
        if size > best:
            best, best_v = size, V
    for L, order in ((0, 1), (1, 2)):
        t = _timer()
        r = asym.connection_remainder_norms(model, sigma, best_v, f, L, ks,
                                            fd_step=cfg.fd_step)
        chk = asym.check_decay_order(ks, r, order)
        rows = [(k, float(v), 0.0, float(v)) for k, v in zip(ks, r)]
        rec = _slope_record(f"formal-connection-L{L}/{label}", chk, t(), rows)
        rec.details["direction"] = [best_v.alpha.real, best_v.alpha.imag]
        records.append(rec)
    return records


def suite_hitchin_eqcond(cfg: ExperimentConfig) -> list:
    model = build_model(cfg.kind, **cfg.grid)
    records = []
    tol = cfg.tolerance("eqcond", 1e-6)
    t = _timer()
    worst = 0.0
    count = 0
    for sigma in cfg.sigmas:
        for v in (1.0, 1j):
            V = TangentDirection.real(v)
            for k in cfg.k_values():
                worst = max(worst, hitchin.eqcond_residual(model, sigma, V, k))
                count += 1
    records.append(CheckRecord("eqcond-residual", worst, tol, worst <= tol, t(), "<=",
                               {"cases": count}))

    t = _timer()
    rng = np.random.default_rng(cfg.seed)
    lin_tol = cfg.tolerance("u-linearity", 1e-10)
    worst = 0.0
    sigma = cfg.sigmas[0]
    k = min(4, cfg.k_max)
    for _ in range(3):
        a, b = rng.standard_normal(2)
        V1, V2 = TangentDirection.real(1.0), TangentDirection.real(1j)
        f1 = hitchin.hitchin_form(model, sigma, V1, k)
        f2 = hitchin.hitchin_form(model, sigma, V2, k)
        fc = hitchin.hitchin_form(model, sigma, V1.scaled(a).plus(V2.scaled(b)), k)
        num = np.abs(a * f1.u_fields + b * f2.u_fields - fc.u_fields).max()
        worst = max(worst, float(num / max(np.abs(fc.u_fields).max(), 1e-300)))
    records.append(CheckRecord("u-linearity", worst, lin_tol, worst <= lin_tol, t()))

    t = _timer()
    asm_tol = cfg.tolerance("u-assembly", 1e-10)
    worst = max(hitchin.hitchin_form(model, sigma, TangentDirection.real(v),
                                     min(4, cfg.k_max)).assembly_residual
                for sigma in cfg.sigmas for v in (1.0, 1j, 0.6 - 0.8j))
    records.append(CheckRecord("u-assembly", worst, asm_tol, worst <= asm_tol, t()))
    return records


def _default_loops():
    return [
        [1j, 1 + 1j, 1 + 2j, 2j, 1j],
        [2j, 1 + 2j, 1 + 3j, 3j, 2j],
        [1j, 0.75 + 1.75j, 2.5j, -0.75 + 1.75j, 1j],
    ]


def suite_transport_holonomy(cfg: ExperimentConfig) -> list:
    ks = [k for k in (2, 3, 4) if cfg.k_min <= k <= cfg.k_max] or [cfg.k_min]
    # a coarse grid keeps the per-stage quadrature cheap at these levels
    model = build_model("torus", n=max(32, 4 * max(ks) + 16))
    loops = [p for p in cfg.paths if len(p) >= 3 and p[0] == p[-1]] or _default_loops()
    records = []
    tol = cfg.tolerance("holonomy", 1e-5)
    t = _timer()
    worst = 0.0
    scalars = []
    for path in loops:
        for k in ks:
            res = hitchin.transport(model, path, k, step=cfg.step)
            lam, defect = hitchin.off_scalar_defect(res.propagator)
            worst = max(worst, defect)
            scalars.append([lam.real, lam.imag])
    records.append(CheckRecord("holonomy-off-scalar", worst, tol, worst <= tol, t(), "<=",
                               {"loops": len(loops), "k": ks, "loop_scalars": scalars}))

    t = _timer()
    steps = [0.2, 0.1, 0.05, 0.025]
    ref = hitchin.transport(model, [1j, 2j], ks[0], step=0.00625).propagator
    defects = [float(np.abs(hitchin.transport(model, [1j, 2j], ks[0], step=s).propagator
                            - ref).max()) for s in steps]
    slope = float(np.polyfit(np.log(steps), np.log(defects), 1)[0])
    dev = abs(slope - 4.0)
    rows = [(1.0 / s, d, 0.0, d) for s, d in zip(steps, defects)]
    records.append(CheckRecord("transport-step-order", dev, 0.3, dev <= 0.3, t(), "<=",
                               {"slope": slope, "steps": steps}, rows))
    return records


def suite_projection_derivative(cfg: ExperimentConfig) -> list:
    model = build_model(cfg.kind, **cfg.grid)
    ks = [k for k in (2, 4, 8) if cfg.k_min <= k <= cfg.k_max] or [cfg.k_min]
    tol = cfg.tolerance("derivepi", 1e-5)
    t = _timer()
    worst, worst_cancel = 0.0, 0.0
    for sigma in cfg.sigmas:
        for v in (1.0, 1j):
            for k in ks:
                r, c = hitchin.projection_derivative_residual(
                    model, sigma, TangentDirection.real(v), k, cfg.fd_step)
                worst = max(worst, r)
                worst_cancel = max(worst_cancel, c)
    return [CheckRecord("projection-derivative", worst, tol, worst <= tol, t(), "<=",
                        {"fd_step": cfg.fd_step, "cancellation_estimate": worst_cancel,
                         "k": ks})]


def _formal_pairs(cfg: ExperimentConfig, L: int):
    pairs = [(formal.FormalFunction.mode(1, 0, L), formal.FormalFunction.mode(0, 1, L)),
             (formal.FormalFunction.mode(1, 0, L), formal.FormalFunction.mode(-1, 0, L))]
    rng = np.random.default_rng(cfg.seed)
    for _ in range(3):
        def rand_fn():
            out = formal.FormalFunction(L)
            for _ in range(2):
                p, q = rng.integers(-1, 2, size=2)
                amp = complex(*rng.standard_normal(2))
                out.add_term(0, (int(p), int(q)), amp)
            return out
        pairs.append((rand_fn(), rand_fn()))
    return pairs


def suite_formal_derivation(cfg: ExperimentConfig) -> list:
    L = cfg.order
    tol = cfg.tolerance("derivation", 1e-10)
    t = _timer()
    worst = 0.0
    for sigma in cfg.sigmas:
        for v in (1.0, 1j):
            for f, g in _formal_pairs(cfg, L):
                r = formal.derivation_residual(sigma, TangentDirection.real(v), f, g, L)
                scale = max(formal.bt_star(sigma, f, g, L).max_abs(), 1.0)
                worst = max(worst, r.max_abs() / scale)
    return [CheckRecord("derivation-residual", worst, tol, worst <= tol, t(), "<=",
                        {"order": L})]


def suite_formal_flatness(cfg: ExperimentConfig) -> list:
    L = cfg.order
    tol = cfg.tolerance("flatness", 1e-10)
    records = []
    t = _timer()
    worst = 0.0
    V1, V2 = TangentDirection.real(1.0), TangentDirection.real(1j)
    for sigma in cfg.sigmas:
        for f, _ in _formal_pairs(cfg, L):
            worst = max(worst, formal.flatness_residual(sigma, V1, V2, f, L).max_abs())
    records.append(CheckRecord("flatness-residual", worst, tol, worst <= tol, t(), "<=",
                               {"order": L}))
    t = _timer()
    f = formal.FormalFunction.mode(1, 1, L)
    h0 = formal.formal_connection(cfg.sigmas[0], V1, f, L)
    leading = max(abs(a.val) for a in h0.coeffs[0].values()) if h0.coeffs[0] else 0.0
    records.append(CheckRecord("one-form-vanishes-mod-h", leading, 0.0, leading == 0.0,
                               t(), "<="))
    return records


def suite_trivialization(cfg: ExperimentConfig) -> list:
    L = cfg.order
    sigma0 = cfg.sigmas[0]
    target = cfg.sigmas[1] if len(cfg.sigmas) > 1 else 1 + 2j
    triv = formal.trivialize(sigma0, L)
    records = []
    modes = [(1, 0), (0, 1), (1, 1), (-1, 2)]

    t = _timer()
    tol = cfg.tolerance("closedness", 1e-10)
    worst = max(triv.closedness_residual(target, m) for m in modes)
    records.append(CheckRecord("recursion-form-closed", worst, tol, worst <= tol, t()))

    t = _timer()
    tol = cfg.tolerance("path-independence", 1e-10)
    worst = 0.0
    for m in modes:
        a = triv.multipliers(target, m, path="L")
        b = triv.multipliers(target, m, path="V")
        worst = max(worst, max(abs(x.val - y.val) for x, y in zip(a, b)))
    records.append(CheckRecord("path-independence", worst, tol, worst <= tol, t()))

    t = _timer()
    tol = cfg.tolerance("trivialization", 1e-10)
    worst = 0.0
    for v in (1.0, 1j):
        for m in modes:
            f = formal.FormalFunction.mode(*m, L)
            worst = max(worst, triv.connection_residual(target, TangentDirection.real(v), f))
    records.append(CheckRecord("covariant-constancy", worst, tol, worst <= tol, t()))

    t = _timer()
    grid_modes = [(p, q) for p in range(-3, 4) for q in range(-3, 4)]
    worst = 0.0
    for l in range(1, L + 1):
        vals = {m: triv.multipliers(target, m)[l].val for m in grid_modes}
        worst = max(worst, formal.multiplier_degree_residual(vals, 2 * l))
    tol = cfg.tolerance("operator-order", 1e-10)
    records.append(CheckRecord("multiplier-degree-bound", worst, tol, worst <= tol, t(),
                               "<=", {"degree_bound": [2 * l for l in range(1, L + 1)]}))
    return records


def suite_invariant_star(cfg: ExperimentConfig) -> list:
    L = cfg.order
    sigma0 = cfg.sigmas[0]
    triv = formal.trivialize(sigma0, L)
    pairs = [(formal.FormalFunction.mode(1, 0, L), formal.FormalFunction.mode(0, 1, L)),
             (formal.FormalFunction.mode(1, 1, L), formal.FormalFunction.mode(-1, 0, L))]
    sigmas = cfg.sigmas + ([1 + 2j] if len(cfg.sigmas) < 2 else [])
    tol = cfg.tolerance("invariant-star", 1e-10)
    t = _timer()
    worst = 0.0
    for i in range(len(sigmas)):
        for j in range(i + 1, len(sigmas)):
            for f, g in pairs:
                d = formal.invariant_star(triv, sigmas[i], sigmas[j], f, g, L)
                worst = max(worst, d.max_abs())
    return [CheckRecord("invariant-star-independence", worst, tol, worst <= tol, t(), "<=",
                        {"base_point": [sigma0.real, sigma0.imag], "order": L})]


_SUITE_FUNCS = {
    "tuynman": suite_tuynman,
    "toeplitz-asymptotics": suite_toeplitz_asymptotics,
    "norm-limit": suite_norm_limit,
    "hitchin-eqcond": suite_hitchin_eqcond,
    "transport-holonomy": suite_transport_holonomy,
    "projection-derivative": suite_projection_derivative,
    "formal-derivation": suite_formal_derivation,
    "formal-flatness": suite_formal_flatness,
    "trivialization": suite_trivialization,
    "invariant-star": suite_invariant_star,
}


def run_suite(cfg: ExperimentConfig, suite: str | None = None) -> Report:
    """Execute a named suite (or 'all') against the configured model."""
    name = suite or cfg.suite
    allowed = TORUS_SUITES if cfg.kind == "torus" else SPHERE_SUITES
    if name == "all":
        names = list(allowed)
    else:
        if name not in _SUITE_FUNCS:
            raise ConfigError(f"unknown suite {name!r}")
        if name not in allowed:
            raise ConfigError(f"suite {name!r} needs the torus family, got {cfg.kind}")
        names = [name]
    records = []
    for n in names:
        records.extend(_SUITE_FUNCS[n](cfg))
    return Report(name, records, environment_stamp(cfg), cfg)
