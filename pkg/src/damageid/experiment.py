"""Synthetic data and diagnostic studies built on a parsed configuration."""
import numpy as np

from .errors import ConfigurationError
from .forward import ForwardConfig, ForwardModel, contraction_estimate
from .inversion import (Measurement, cone_constant_estimate, landweber_run, semiconvergence_probe,
                        spectrum_probe)
from .process import DamageProcess
from .sensitivity import SensitivityWorkspace, build_parameter_gram

TAYLOR_EPS = (1e-1, 1e-2, 1e-3, 1e-4)


def synthesize_data(model: ForwardModel, truth, noise_fraction, seed, fwd=None):
    """Data ``u_delta = Phi(truth) + noise`` with ``||noise|| = noise_fraction * ||Phi(truth)||``.

    The Gaussian draw is rescaled so the recorded ``delta`` is the exact
    data-space norm of the perturbation. Returns ``(Measurement, state)``.
    """
    if noise_fraction < 0:
        raise ConfigurationError("must be >= 0", "landweber.noise")
    state = model.solve(truth, fwd)
    u = state.u.ravel()
    ds = model.data_space
    if noise_fraction == 0:
        return Measurement(u.copy(), 0.0), state
    noise = np.random.default_rng(seed).standard_normal(u.size)
    noise *= noise_fraction * ds.norm(u) / ds.norm(noise)
    return Measurement(u + noise, ds.norm(noise)), state


def linearization_point(cfg, basis=None):
    """The configured truth when it is an interior spline process, else the initial guess."""
    basis = basis or cfg.basis()
    truth = cfg.truth(basis)
    if isinstance(truth, DamageProcess):
        c = truth.flat
        if np.all(c > 0) and np.all(c < truth.g_max):
            return truth
    return cfg.initial_guess(basis)


def box_direction(rng, g: DamageProcess, reach=0.1):
    """Random direction ``h`` with ``g + eps h`` admissible for ``|eps| <= reach``."""
    c = g.flat
    margin = np.minimum(c, g.g_max - c) / reach
    return rng.uniform(-1.0, 1.0, c.size) * margin


def taylor_study(cfg, trials=10, seed=0, eps_list=TAYLOR_EPS):
    """Remainders ``||Phi(g + eps h) - Phi(g) - eps dPhi(g)h||`` and their log-log slopes."""
    model = cfg.forward_model()
    basis = cfg.basis()
    g = linearization_point(cfg, basis)
    fwd = ForwardConfig(tol=1e-13, max_sweeps=cfg["forward"]["max_sweeps"])
    state = model.solve(g, fwd)
    ws = SensitivityWorkspace(model, g, state)
    ds = model.data_space
    phi = state.u.ravel()
    rng = np.random.default_rng(seed)
    rows = []
    slopes = []
    for k in range(trials):
        h = box_direction(rng, g, max(eps_list))
        lin = ws.linearized_apply(h)
        rem = []
        for eps in eps_list:
            pert = model.solve(g.with_coeffs(g.flat + eps * h), fwd).u.ravel()
            rem.append(ds.norm(pert - phi - eps * lin))
        slope = float(np.polyfit(np.log10(eps_list), np.log10(rem), 1)[0])
        slopes.append(slope)
        rows.extend((k, eps, r, slope) for eps, r in zip(eps_list, rem))
    return {"columns": ("trial", "eps", "remainder", "slope"), "rows": rows, "slopes": np.array(slopes)}


def adjoint_study(cfg, trials=20, seed=0):
    """``|<dPhi h, r> - <h, dPhi^* r>_{M_s}| / (||dPhi h|| ||r||)`` on random pairs."""
    model = cfg.forward_model()
    basis = cfg.basis()
    g = linearization_point(cfg, basis)
    gram = build_parameter_gram(basis, cfg.gram_exponent())
    state = model.solve(g)
    ws = SensitivityWorkspace(model, g, state, gram)
    ds = model.data_space
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(trials):
        h = rng.standard_normal(basis.size)
        r = rng.standard_normal(ds.size)
        Jh = ws.linearized_apply(h)
        lhs = ds.inner(Jh, r)
        rhs = gram.inner(h, ws.adjoint_apply(r))
        rel = abs(lhs - rhs) / (ds.norm(Jh) * ds.norm(r))
        rows.append((k, lhs, rhs, rel))
    mism = np.array([r[3] for r in rows])
    return {"columns": ("trial", "lhs", "rhs", "rel_mismatch"), "rows": rows, "max": float(mism.max())}


def cone_study(cfg, scales=(1e-1, 1e-2, 1e-3), trials=50, seed=0):
    model = cfg.forward_model()
    basis = cfg.basis()
    g = linearization_point(cfg, basis)
    gram = build_parameter_gram(basis, cfg.gram_exponent())
    rows, maxima = [], []
    for scale in scales:
        est = cone_constant_estimate(model, g, gram, trials=trials, scale=scale, seed=seed)
        maxima.append(est["max_ratio"])
        rows.extend((scale, i, r, e) for i, (r, e) in enumerate(zip(est["ratios"], est["eta"])))
    return {"columns": ("scale", "sample", "ratio", "eta"), "rows": rows,
            "max_ratio": dict(zip(scales, maxima))}


def contraction_study(cfg, lams=(0.5, 1.0, 2.0, 4.0, 8.0, 16.0), trials=10, seed=0):
    model = cfg.forward_model()
    q = contraction_estimate(model, cfg.truth(), lams, trials=trials, seed=seed)
    return {"columns": ("lam", "q"), "rows": list(zip(lams, q)), "q": q}


def spectrum_study(cfg, k=None, dense=False):
    model = cfg.forward_model()
    basis = cfg.basis()
    g = linearization_point(cfg, basis)
    gram = build_parameter_gram(basis, cfg.gram_exponent())
    ws = SensitivityWorkspace(model, g, model.solve(g), gram)
    k = k or basis.size // 2
    sigma, resid = spectrum_probe(ws, k=k, dense=dense)
    rows = [(i + 1, s, s / sigma[0], r) for i, (s, r) in enumerate(zip(sigma, resid))]
    return {"columns": ("k", "sigma", "ratio", "residual"), "rows": rows, "sigma": sigma}


def inversion_setup(cfg, noise=None, seed=None):
    model = cfg.forward_model()
    basis = cfg.basis()
    truth = cfg.truth(basis)
    noise = cfg["landweber"]["noise"] if noise is None else noise
    seed = cfg["experiment"]["seed"] if seed is None else seed
    meas, _ = synthesize_data(model, truth, noise, seed)
    gram = build_parameter_gram(basis, cfg.gram_exponent())
    return model, gram, meas, cfg.initial_guess(basis), truth


def invert(cfg, meas=None, noise=None, seed=None, max_iter=None):
    model, gram, synth, g0, truth = inversion_setup(cfg, noise, seed)
    meas = meas or synth
    lw = cfg.landweber_config()
    if max_iter is not None:
        lw.max_iter = max_iter
    tr = truth if isinstance(truth, DamageProcess) else None
    return landweber_run(model, gram, lw, meas, g0, truth=tr, fwd=cfg.forward_config())


def semiconvergence_study(cfg, noise=0.05, seed=None, max_iter=None):
    model, gram, meas, g0, truth = inversion_setup(cfg, noise, seed)
    lw = cfg.landweber_config()
    if max_iter is not None:
        lw.max_iter = max_iter
    out = semiconvergence_probe(model, gram, lw, meas, g0, truth, fwd=cfg.forward_config())
    rows = list(zip(range(len(out["errors"])), out["residuals"], out["errors"]))
    out.update(columns=("iter", "residual_L2", "error_Ms"), rows=rows)
    return out
