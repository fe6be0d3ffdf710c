"""Projected Landweber iteration and convergence diagnostics."""
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, NumericalError
from .forward import ForwardConfig, ForwardModel
from .process import DamageProcess, project_admissible
from .sensitivity import ParameterGram, SensitivityWorkspace

LOG_COLUMNS = ("iter", "residual_L2", "grad_norm_Ms", "step", "cone_sample_max", "wallclock_s")
ZERO_NOISE_FLOOR = 1e-10


class ResidualIncreaseWarning(UserWarning):
    """The Landweber residual grew; the step size is probably too large."""


@dataclass
class Measurement:
    """Flat space-time displacement data and the noise level ``delta``."""

    values: np.ndarray
    delta: float

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("noise level must be >= 0")


@dataclass
class LandweberConfig:
    step: float = None  # None: 0.9 / sigma_1^2 at the initial guess
    tau: float = 1.5
    max_iter: int = 500
    timing: bool = True

    def __post_init__(self):
        if self.step is not None and not self.step > 0:
            raise ConfigurationError("step must be positive", "landweber.step")
        if not self.tau > 1:
            raise ConfigurationError("discrepancy factor must exceed 1", "landweber.tau")
        if self.max_iter < 0:
            raise ConfigurationError("max_iter must be >= 0", "landweber.max_iter")


@dataclass
class LandweberResult:
    iterates: list
    log: list
    stop_index: int
    stopped: bool
    status: str = "ok"
    message: str = ""
    warnings: list = field(default_factory=list)
    errors: list = None  # ||g_k - g_true||_{M_s} when a truth was supplied

    @property
    def final(self):
        return self.iterates[-1]

    @property
    def residuals(self):
        return np.array([row[1] for row in self.log])


def discrepancy_stop(residual_norm, delta, tau=1.5, floor=ZERO_NOISE_FLOOR):
    """Morozov rule ``residual <= tau * delta`` (absolute ``floor`` when ``delta == 0``)."""
    if delta < 0:
        raise ValueError("noise level must be >= 0")
    if delta == 0:
        return residual_norm <= floor
    return residual_norm <= tau * delta


def operator_norm_estimate(ws: SensitivityWorkspace, iters=30, seed=0, rtol=1e-8):
    """Largest singular value of ``dPhi`` (``M_s`` to data ``L2``) by power iteration."""
    gram = ws.gram
    ds = ws.model.data_space
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(ws.process.basis.size)
    v /= gram.norm(v)
    sigma2 = 0.0
    for _ in range(iters):
        w = ws.adjoint_apply(ws.linearized_apply(v))
        new = gram.norm(w)
        v = w / new
        if abs(new - sigma2) <= rtol * new:
            sigma2 = new
            break
        sigma2 = new
    return float(np.sqrt(sigma2))


def landweber_run(model: ForwardModel, gram: ParameterGram, cfg: LandweberConfig,
                  meas: Measurement, g0: DamageProcess, truth: DamageProcess = None,
                  stop: bool = True, fwd: ForwardConfig = None) -> LandweberResult:
    """Projected Landweber ``g <- P(g + step * dPhi(g)^* (u_delta - Phi(g)))``.

    Each log row holds the residual and gradient at iterate ``k``, the step
    size, the largest tangential-cone ratio observed along the steps taken so
    far and the elapsed wall time (0 when ``cfg.timing`` is off).
    """
    if not g0.is_admissible(1e-14):
        raise ConfigurationError("initial guess is not admissible", "landweber.initial_fraction")
    ds = model.data_space
    g = g0
    step = cfg.step
    iterates, log, errors = [g], [], ([] if truth is not None else None)
    warned = []
    cone_max = 0.0
    pending = None  # (Phi(g_prev), dPhi(g_prev)(g - g_prev))
    res_prev = np.inf
    t0 = time.perf_counter()
    status, message, stopped = "ok", "", False
    k = 0
    while True:
        try:
            state = model.solve(g, fwd)
        except NumericalError as exc:
            status, message = "forward_failure", str(exc)
            break
        phi = state.u.ravel()
        if pending is not None:
            prev_phi, lin = pending
            diff = phi - prev_phi
            den = ds.norm(diff)
            if den > 0:
                cone_max = max(cone_max, ds.norm(diff - lin) / den)
        r = meas.values - phi
        res = ds.norm(r)
        if errors is not None:
            errors.append(gram.norm(g.flat - truth.flat))
        if res > res_prev and not warned:
            msg = f"residual increased at iteration {k} ({res_prev:.4e} -> {res:.4e})"
            warnings.warn(msg, ResidualIncreaseWarning, stacklevel=2)
            warned.append(msg)
        res_prev = res
        done = stop and discrepancy_stop(res, meas.delta, cfg.tau)
        if done or k >= cfg.max_iter:
            elapsed = time.perf_counter() - t0 if cfg.timing else 0.0
            log.append((k, res, float("nan"), float("nan") if step is None else step, cone_max, elapsed))
            stopped = done
            break
        ws = SensitivityWorkspace(model, g, state, gram)
        if step is None:
            sigma = operator_norm_estimate(ws)
            step = 0.9 / sigma ** 2
        grad = ws.adjoint_apply(r)
        if not np.all(np.isfinite(grad)):
            status, message = "nonfinite_gradient", f"non-finite gradient at iteration {k}"
            break
        elapsed = time.perf_counter() - t0 if cfg.timing else 0.0
        log.append((k, res, gram.norm(grad), step, cone_max, elapsed))
        g_next = project_admissible(g.with_coeffs(g.flat + step * grad))
        pending = (phi, ws.linearized_apply(g_next.flat - g.flat))
        g = g_next
        iterates.append(g)
        k += 1
    return LandweberResult(iterates, log, len(log) - 1, stopped, status, message, warned, errors)


def cone_constant_estimate(model: ForwardModel, g: DamageProcess, gram: ParameterGram,
                           trials=50, scale=1e-2, seed=0, fwd: ForwardConfig = None):
    """Sampled tangential-cone ratios around ``g``.

    Perturbations are ``h = P(g + scale * g_max * xi) - g`` with ``xi`` uniform
    in ``[-1, 1]``. For each sample the ratio
    ``||Phi(g+h) - Phi(g) - dPhi(g)h|| / (||h||_{M_s} ||Phi(g+h) - Phi(g)||)``
    and ``eta = ratio * ||h||_{M_s}`` are returned; samples with
    ``Phi(g+h) == Phi(g)`` are skipped and counted.
    """
    fwd = fwd or ForwardConfig(tol=1e-13)
    rng = np.random.default_rng(seed)
    ds = model.data_space
    state = model.solve(g, fwd)
    ws = SensitivityWorkspace(model, g, state, gram)
    phi = state.u.ravel()
    ratios, etas, skipped = [], [], 0
    for _ in range(trials):
        xi = rng.uniform(-1.0, 1.0, g.basis.size)
        gh = project_admissible(g.with_coeffs(g.flat + scale * g.g_max * xi))
        h = gh.flat - g.flat
        hn = gram.norm(h)
        diff = model.solve(gh, fwd).u.ravel() - phi
        dn = ds.norm(diff)
        if hn == 0 or dn <= 1e-14 * max(ds.norm(phi), 1e-300):
            skipped += 1
            continue
        num = ds.norm(diff - ws.linearized_apply(h))
        ratios.append(num / (hn * dn))
        etas.append(num / dn)
    return {"ratios": np.array(ratios), "eta": np.array(etas), "skipped": skipped,
            "max_ratio": float(np.max(ratios)) if ratios else float("nan")}


def spectrum_probe(ws: SensitivityWorkspace, k=10, dense=False, tol=1e-10):
    """Top-``k`` singular values of ``dPhi(g)`` from ``(R^n, M_s)`` to data ``L2``.

    Uses Lanczos (``eigsh``) on ``C^T dPhi^T W dPhi C`` where ``C`` is an
    ``M_s``-orthonormal coordinate map; ``dense=True`` forms the matrix
    explicitly instead. Returns ``(sigma, residuals)`` in non-increasing order.
    """
    C = ws.gram.isometry
    ds = ws.model.data_space
    n = C.shape[1]
    if k > n:
        raise ValueError(f"k={k} exceeds parameter dimension {n}")

    def normal(v):
        return C.T @ ws.adjoint_raw(ws.linearized_apply(C @ v))

    if dense or k >= n - 1:
        JC = np.column_stack([ws.linearized_apply(C[:, j]) for j in range(n)])
        H = JC.T @ np.column_stack([ds.riesz(JC[:, j]) for j in range(n)])
        lam, vec = np.linalg.eigh(0.5 * (H + H.T))
    else:
        op = spla.LinearOperator((n, n), matvec=normal, dtype=float)
        lam, vec = spla.eigsh(op, k=k, which="LA", tol=tol, v0=np.ones(n))
    order = np.argsort(lam)[::-1][:k]
    lam, vec = lam[order], vec[:, order]
    resid = np.array([np.linalg.norm(normal(vec[:, i]) - lam[i] * vec[:, i]) for i in range(len(lam))])
    return np.sqrt(np.clip(lam, 0.0, None)), resid


def semiconvergence_probe(model, gram, cfg: LandweberConfig, meas, g0, truth, fwd=None):
    """Landweber without stopping; returns the error curve and reference indices."""
    res = landweber_run(model, gram, cfg, meas, g0, truth=truth, stop=False, fwd=fwd)
    errors = np.array(res.errors)
    residuals = res.residuals
    hits = np.flatnonzero([discrepancy_stop(r, meas.delta, cfg.tau) for r in residuals])
    return {
        "errors": errors,
        "residuals": residuals,
        "argmin": int(np.argmin(errors)),
        "discrepancy_index": int(hits[0]) if len(hits) else None,
        "result": res,
    }
