"""Experiment configuration: flat INI sections with validated, typed keys.

Every key has a type and a default; unknown sections or keys are rejected
with a close-match suggestion. :func:`dump_config` writes the effective
values back so that ``parse_config(dump_config(cfg))`` is the identity.
"""
import configparser
import difflib
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .damage import TimeGrid
from .errors import ConfigurationError
from .fem import DomainSpec, LoadSet, MaterialModel, build_mesh
from .forward import ForwardConfig, ForwardModel
from .inversion import LandweberConfig
from .mollifier import MollifierSpec
from .process import DamageProcess, ProcessBasis, quadratic_process
from .sensitivity import default_gram_exponent

# section -> key -> (kind, default); kinds: int, float, str, bool, floats, ints, strs, auto-float
SCHEMA = {
    "domain": {
        "dim": ("int", 1),
        "extent": ("floats", (1.0,)),
        "elements": ("ints", (64,)),
        "gamma0": ("strs", ("left",)),
        "traction_faces": ("strs", ()),
    },
    "time": {
        "horizon": ("float", 1.0),
        "steps": ("int", 32),
    },
    "material": {
        "youngs": ("float", 1.0),
        "lame_lambda": ("float", 1.0),
        "lame_mu": ("float", 1.0),
        "alpha": ("float", 1.0),
        "omega0": ("float", 0.0),
        "omega1": ("float", 0.5),
        "ybar": ("float", 4.5),
        "d0": ("float", 0.0),
    },
    "mollifier": {
        "radius": ("auto-float", None),
        "variant": ("str", "difference"),
    },
    "process": {
        "n_t": ("int", 4),
        "n_x": ("ints", (4,)),
        "n_y": ("int", 12),
        "truth": ("str", "smooth-step"),
    },
    "loads": {
        "body_force": ("floats", (1.5,)),
        "traction": ("floats", (2.0,)),
        "profile": ("str", "ramp"),
    },
    "forward": {
        "tol": ("float", 1e-10),
        "max_sweeps": ("int", 100),
        "lam": ("float", 1.0),
    },
    "landweber": {
        "step": ("auto-float", None),
        "tau": ("float", 1.5),
        "max_iter": ("int", 500),
        "initial_fraction": ("float", 0.5),
        "s": ("auto-float", None),
        "noise": ("float", 0.01),
    },
    "experiment": {
        "seed": ("int", 0),
        "out": ("str", "out"),
        "trials": ("int", 10),
        "timing": ("bool", True),
    },
}

PROFILES = ("constant", "ramp", "sine")
TRUTHS = ("zero", "full", "half", "smooth-step", "quadratic")


def _fmt(kind, value):
    if value is None:
        return "auto"
    if kind in ("floats", "ints", "strs"):
        return ", ".join(_fmt(kind[:-1], v) for v in value)
    if kind in ("float", "auto-float"):
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    return str(value)


def _convert(kind, text, key):
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "auto-float":
            return None if text.lower() == "auto" else float(text)
        if kind == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind in ("floats", "ints", "strs"):
            parts = [p.strip() for p in text.replace(";", ",").split(",") if p.strip()]
            conv = {"floats": float, "ints": int, "strs": str}[kind]
            return tuple(conv(p) for p in parts)
        return text
    except ValueError:
        raise ConfigurationError(f"cannot parse {text!r} as {kind}", key) from None


def _suggest(name, options):
    close = difflib.get_close_matches(name, list(options), n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


@dataclass
class ExperimentConfig:
    """Validated configuration values, ``values[section][key]``."""

    values: dict

    def __getitem__(self, section):
        return self.values[section]

    # -- builders -----------------------------------------------------------------
    def domain_spec(self):
        d = self["domain"]
        faces = d["traction_faces"] or None
        return DomainSpec(d["dim"], d["extent"], d["elements"], d["gamma0"], faces)

    def mesh(self):
        return build_mesh(self.domain_spec())

    def grid(self):
        return TimeGrid(self["time"]["horizon"], self["time"]["steps"])

    def material(self):
        m = self["material"]
        return MaterialModel(youngs=m["youngs"], lame_lambda=m["lame_lambda"], lame_mu=m["lame_mu"],
                             alpha=m["alpha"], omega0=m["omega0"], omega1=m["omega1"],
                             ybar=m["ybar"], horizon=self["time"]["horizon"])

    def mollifier_spec(self):
        mo = self["mollifier"]
        radius = mo["radius"]
        if radius is None:
            spec = self.domain_spec()
            radius = 2 * max(L / n for L, n in zip(spec.extent, spec.elements))
        return MollifierSpec(radius, mo["variant"])

    def basis(self):
        p = self["process"]
        return ProcessBasis(self["time"]["horizon"], self["domain"]["extent"], p["n_t"], p["n_x"],
                            p["n_y"], self["material"]["ybar"])

    def loads(self):
        lo = self["loads"]
        T = self["time"]["horizon"]
        dim = self["domain"]["dim"]
        profile = time_profile(lo["profile"], T)
        f = np.resize(np.array(lo["body_force"]), dim)
        tau = np.resize(np.array(lo["traction"]), dim)
        return LoadSet(lambda t, x: profile(t) * f, lambda t, x: profile(t) * tau)

    def forward_config(self):
        fw = self["forward"]
        return ForwardConfig(fw["tol"], fw["max_sweeps"], fw["lam"])

    def landweber_config(self):
        lw = self["landweber"]
        return LandweberConfig(step=lw["step"], tau=lw["tau"], max_iter=lw["max_iter"],
                               timing=self["experiment"]["timing"])

    def gram_exponent(self):
        s = self["landweber"]["s"]
        return default_gram_exponent(self["domain"]["dim"]) if s is None else s

    def forward_model(self):
        mesh = self.mesh()
        return ForwardModel(mesh, self.material(), self.mollifier_spec(), self.grid(), self.loads(),
                            self["material"]["d0"], self.forward_config())

    def truth(self, basis=None):
        return truth_process(self["process"]["truth"], basis or self.basis(), self.material().g_max)

    def initial_guess(self, basis=None):
        basis = basis or self.basis()
        gm = self.material().g_max
        return DamageProcess(basis, np.full(basis.shape, self["landweber"]["initial_fraction"] * gm), gm)

    def hash(self):
        return hashlib.sha256(dump_config(self).encode()).hexdigest()[:16]


def time_profile(name, horizon):
    """Scalar load multiplier ``p(t)``; ``table:PATH`` reads ``t, scale`` rows."""
    if name == "constant":
        return lambda t: 1.0
    if name == "ramp":
        return lambda t: t / horizon
    if name == "sine":
        return lambda t: np.sin(0.5 * np.pi * t / horizon)
    if name.startswith("table:"):
        data = np.loadtxt(name[6:], delimiter=",", comments="#", ndmin=2)
        return lambda t: float(np.interp(t, data[:, 0], data[:, 1]))
    raise ConfigurationError(f"unknown profile {name!r}{_suggest(name, PROFILES)}", "loads.profile")


def smooth_step_coeffs(basis, g_max, center=1.5, width=0.5, low=0.1, high=0.9):
    """In-box spline coefficients rising smoothly in ``y`` (same in every cell)."""
    xi = basis.greville()
    prof = g_max * (low + (high - low) / (1.0 + np.exp(-(xi - center) / width)))
    return np.broadcast_to(prof, basis.shape).copy()


def truth_process(name, basis, g_max):
    """Named process preset, or ``file:PATH`` with a coefficient table."""
    if name == "zero":
        return DamageProcess(basis, np.zeros(basis.shape), g_max)
    if name == "full":
        return DamageProcess(basis, np.full(basis.shape, g_max), g_max)
    if name == "half":
        return DamageProcess(basis, np.full(basis.shape, 0.5 * g_max), g_max)
    if name == "smooth-step":
        return DamageProcess(basis, smooth_step_coeffs(basis, g_max), g_max)
    if name == "quadratic":
        return quadratic_process(g_max)
    if name.startswith("file:"):
        from .tables import read_process

        p = read_process(name[5:], basis, g_max)
        if not p.is_admissible(1e-12):
            raise ConfigurationError("tabulated process is not admissible", "process.truth")
        return p
    raise ConfigurationError(f"unknown truth {name!r}{_suggest(name, TRUTHS)}", "process.truth")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate INI text; missing keys take their defaults."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    values = {sec: {k: v[1] for k, v in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigurationError(f"unknown section{_suggest(sec, SCHEMA)}", sec)
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigurationError(f"unknown key{_suggest(key, SCHEMA[sec])}", f"{sec}.{key}")
            kind = SCHEMA[sec][key][0]
            values[sec][key] = _convert(kind, raw, f"{sec}.{key}")
    cfg = ExperimentConfig(values)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for key, (kind, _) in keys.items():
            lines.append(f"{key} = {_fmt(kind, cfg.values[sec][key])}")
        lines.append("")
    return "\n".join(lines)


def validate(cfg: ExperimentConfig):
    """Check invariants by building every component; errors carry key paths."""
    v = cfg.values
    m = v["material"]
    if not m["omega1"] < 1:
        raise ConfigurationError(f"must be < 1, got {m['omega1']}", "material.omega1")
    if not 0 <= m["omega0"] <= m["omega1"]:
        raise ConfigurationError("need 0 <= omega0 <= omega1", "material.omega0")
    if not 0 <= m["d0"] <= m["omega0"]:
        raise ConfigurationError("initial damage must lie in [0, omega0]", "material.d0")
    if m["alpha"] < 1:
        raise ConfigurationError("must be >= 1", "material.alpha")
    if m["youngs"] <= 0 or m["lame_mu"] <= 0 or m["lame_lambda"] + m["lame_mu"] <= 0:
        raise ConfigurationError("elastic coefficients violate ellipticity", "material.youngs")
    dim = v["domain"]["dim"]
    if dim not in (1, 2):
        raise ConfigurationError("must be 1 or 2", "domain.dim")
    for key in ("extent", "elements"):
        if len(v["domain"][key]) == 1 and dim == 2:
            v["domain"][key] = v["domain"][key] * 2
    if v["loads"]["profile"] not in PROFILES and not v["loads"]["profile"].startswith("table:"):
        raise ConfigurationError(f"unknown profile{_suggest(v['loads']['profile'], PROFILES)}",
                                 "loads.profile")
    if v["landweber"]["noise"] < 0:
        raise ConfigurationError("must be >= 0", "landweber.noise")
    if not 0 <= v["landweber"]["initial_fraction"] <= 1:
        raise ConfigurationError("must lie in [0, 1]", "landweber.initial_fraction")
    if v["experiment"]["trials"] < 1:
        raise ConfigurationError("must be >= 1", "experiment.trials")
    cfg.domain_spec().validate()
    cfg.grid()
    cfg.material().validate()
    cfg.mollifier_spec().validate(cfg.mesh())
    cfg.basis()
    cfg.forward_config()
    cfg.landweber_config()
    name = v["process"]["truth"]
    if name not in TRUTHS and not name.startswith("file:"):
        raise ConfigurationError(f"unknown truth{_suggest(name, TRUTHS)}", "process.truth")
