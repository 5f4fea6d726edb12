"""Scenario configuration files: strict TOML parsing and physical validation.

Unknown keys are rejected everywhere so that a misspelled tolerance cannot
silently fall back to its default. Parse and schema problems raise
:class:`ConfigError`; a well-formed scenario whose initial state reaches the
domain boundary raises :class:`ValidationError`.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import SmoothPathsError
from .grid import Grid1D
from .hamiltonian import HamiltonianSpec, free, harmonic, uniform_vector_potential
from .states import DensityMatrix, WaveFunction, coherent, density_from_mixture, gaussian, \
    harmonic_eigenstate

BOUNDARY_TOL = 1e-12


class ConfigError(SmoothPathsError, ValueError):
    """Malformed or schema-violating configuration; names the offending field."""


class ValidationError(SmoothPathsError, ValueError):
    """Configuration parses but describes an unusable scenario."""


_TOP = {"id", "description", "seed", "output_dir", "checks", "grid", "hamiltonian", "state",
        "run", "tolerances"}
_GRID = {"n", "x_min", "x_max"}
_HAM = {"preset", "m", "hbar", "e", "omega", "center", "A0", "phi0",
        "V_polynomial", "V_gaussian"}
_STATE = {"family", "x0", "sigma", "k0", "p0", "n", "omega", "components", "s", "S",
          "two_particle_n", "two_particle_half_width"}
_COMPONENT = {"weight", "family", "x0", "sigma", "k0", "p0", "n", "omega"}
_RUN = {"dt", "n_steps", "method", "refine_levels", "dt_fractions", "sigma_reg",
        "hbar_list", "n_samples", "km_stride"}
PRESETS = ("free", "harmonic", "uniform_A")
FAMILIES = ("gaussian", "harmonic_eigenstate", "coherent", "mixture", "epr_gaussian")
METHODS = ("split-step", "crank-nicolson", "exact")


@dataclass(frozen=True)
class RunSpec:
    dt: float = 1e-3
    n_steps: int = 100
    method: str = "split-step"
    refine_levels: int = 3
    dt_fractions: tuple = (0.2, 0.1, 0.05)
    sigma_reg: tuple = (0.15, 0.1, 0.075)
    hbar_list: tuple = (0.025, 0.05, 0.1, 0.2)
    n_samples: int = 100_000
    km_stride: int = 4


@dataclass(frozen=True)
class ScenarioConfig:
    id: str
    grid: Grid1D
    hamiltonian: dict
    state: dict
    run: RunSpec
    checks: tuple
    tolerances: dict = field(default_factory=dict)
    output_dir: str = ""
    seed: int = 0
    description: str = ""
    source: str = ""

    def build_hamiltonian(self) -> HamiltonianSpec:
        return build_hamiltonian(self.hamiltonian)

    def build_state(self):
        return build_state(self.state, self.grid, self.build_hamiltonian())

    def echo(self) -> dict:
        return {"id": self.id, "description": self.description,
                "grid": {"n": self.grid.n_points, "x_min": self.grid.x_min,
                         "x_max": self.grid.x_max},
                "hamiltonian": self.hamiltonian, "state": self.state,
                "run": dict(self.run.__dict__), "checks": list(self.checks),
                "tolerances": self.tolerances, "seed": self.seed}


def _reject_unknown(table: dict, allowed: set, where: str):
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _number(table, key, where, default=None, kind=float, positive=False):
    if key not in table:
        if default is None:
            raise ConfigError(f"missing required field {where}.{key}")
        return default
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    if kind is int and not isinstance(value, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {value!r}")
    value = kind(value)
    if positive and not value > 0:
        raise ConfigError(f"{where}.{key} must be positive, got {value!r}")
    return value


def _number_list(table, key, where, default):
    if key not in table:
        return default
    value = table[key]
    if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ConfigError(f"{where}.{key} must be a list of numbers")
    return tuple(float(v) for v in value)


def _parse_grid(table) -> Grid1D:
    if not isinstance(table, dict):
        raise ConfigError("missing [grid] table")
    _reject_unknown(table, _GRID, "grid")
    n = _number(table, "n", "grid", kind=int, positive=True)
    if n & (n - 1):
        raise ConfigError(f"grid.n must be a power of two, got {n}")
    x_min = _number(table, "x_min", "grid")
    x_max = _number(table, "x_max", "grid")
    if not x_max > x_min:
        raise ConfigError("grid.x_max must exceed grid.x_min")
    return Grid1D(n, x_min, x_max)


def _parse_hamiltonian(table) -> dict:
    table = dict(table or {})
    _reject_unknown(table, _HAM, "hamiltonian")
    preset = table.get("preset", "free")
    if preset not in PRESETS:
        raise ConfigError(f"hamiltonian.preset {preset!r} is not one of {PRESETS}")
    out = {"preset": preset}
    for key, default, pos in (("m", 1.0, True), ("hbar", 1.0, True), ("e", 0.0, False),
                              ("omega", 1.0, True), ("center", 0.0, False),
                              ("A0", 0.0, False), ("phi0", 0.0, False)):
        out[key] = _number(table, key, "hamiltonian", default, positive=pos)
    out["V_polynomial"] = list(_number_list(table, "V_polynomial", "hamiltonian", ()))
    gauss = _number_list(table, "V_gaussian", "hamiltonian", ())
    if gauss and len(gauss) != 3:
        raise ConfigError("hamiltonian.V_gaussian must be [height, center, width]")
    if gauss and not gauss[2] > 0:
        raise ConfigError("hamiltonian.V_gaussian width must be positive")
    out["V_gaussian"] = list(gauss)
    if preset == "uniform_A" and out["e"] == 0:
        raise ConfigError("hamiltonian.e must be nonzero for the uniform_A preset")
    return out


def _parse_family(table, where, allowed) -> dict:
    _reject_unknown(table, allowed, where)
    family = table.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"{where}.family {family!r} is not one of {FAMILIES}")
    out = {"family": family}
    for key in ("x0", "sigma", "k0", "p0", "omega", "s", "S", "two_particle_half_width"):
        if key in table:
            out[key] = _number(table, key, where,
                               positive=key in ("sigma", "omega", "s", "S",
                                                "two_particle_half_width"))
    for key in ("n", "two_particle_n"):
        if key in table:
            out[key] = _number(table, key, where, kind=int)
            if out[key] < 0:
                raise ConfigError(f"{where}.{key} must be non-negative")
    return out


def _parse_state(table) -> dict:
    if not isinstance(table, dict):
        raise ConfigError("missing [state] table")
    out = _parse_family(table, "state", _STATE)
    if out["family"] == "mixture":
        comps = table.get("components")
        if not isinstance(comps, list) or not comps:
            raise ConfigError("state.components must list the mixture members")
        parsed = []
        for i, comp in enumerate(comps):
            where = f"state.components[{i}]"
            c = _parse_family(comp, where, _COMPONENT)
            if c["family"] in ("mixture", "epr_gaussian"):
                raise ConfigError(f"{where}.family must be a pure single-particle family")
            c["weight"] = _number(comp, "weight", where, positive=True)
            parsed.append(c)
        total = sum(c["weight"] for c in parsed)
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"state.components weights sum to {total!r}, not 1")
        out["components"] = parsed
    elif "components" in table:
        raise ConfigError("state.components is only valid for the mixture family")
    if out["family"] == "epr_gaussian":
        n2 = out.setdefault("two_particle_n", 256)
        if n2 & (n2 - 1) or n2 > 256 or n2 < 2:
            raise ConfigError("state.two_particle_n must be a power of two <= 256")
        out.setdefault("two_particle_half_width", 8.0)
    return out


def _parse_run(table) -> RunSpec:
    table = dict(table or {})
    _reject_unknown(table, _RUN, "run")
    base = RunSpec()
    method = table.get("method", base.method)
    if method not in METHODS:
        raise ConfigError(f"run.method {method!r} is not one of {METHODS}")
    return RunSpec(
        dt=_number(table, "dt", "run", base.dt, positive=True),
        n_steps=_number(table, "n_steps", "run", base.n_steps, kind=int, positive=True),
        method=method,
        refine_levels=_number(table, "refine_levels", "run", base.refine_levels, kind=int,
                              positive=True),
        dt_fractions=_number_list(table, "dt_fractions", "run", base.dt_fractions),
        sigma_reg=_number_list(table, "sigma_reg", "run", base.sigma_reg),
        hbar_list=_number_list(table, "hbar_list", "run", base.hbar_list),
        n_samples=_number(table, "n_samples", "run", base.n_samples, kind=int, positive=True),
        km_stride=_number(table, "km_stride", "run", base.km_stride, kind=int, positive=True),
    )


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    """Parse TOML text into a :class:`ScenarioConfig` (no physical validation)."""
    from .checks import CHECKS, TOLERANCE_KEYS

    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    _reject_unknown(data, _TOP, "top level")
    sid = data.get("id")
    if not isinstance(sid, str) or not sid:
        raise ConfigError("missing required field id")
    checks = data.get("checks", [])
    if not isinstance(checks, list) or not all(isinstance(c, str) for c in checks):
        raise ConfigError("checks must be a list of check names")
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown check(s) in checks: {', '.join(unknown)}")
    tolerances = data.get("tolerances", {})
    if not isinstance(tolerances, dict):
        raise ConfigError("tolerances must be a table")
    _reject_unknown(tolerances, TOLERANCE_KEYS, "tolerances")
    for k in tolerances:
        _number(tolerances, k, "tolerances")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    out_dir = data.get("output_dir", sid)
    if not isinstance(out_dir, str):
        raise ConfigError("output_dir must be a string")
    state = _parse_state(data.get("state"))
    kind = {"mixture": "mixed", "epr_gaussian": "two_particle"}.get(state["family"], "pure")
    misfit = [c for c in checks if kind not in CHECKS[c].applies_to]
    if misfit:
        raise ConfigError(f"check(s) {', '.join(misfit)} do not apply to state.family "
                          f"{state['family']!r}")
    return ScenarioConfig(
        id=sid, grid=_parse_grid(data.get("grid")),
        hamiltonian=_parse_hamiltonian(data.get("hamiltonian")),
        state=state, run=_parse_run(data.get("run")),
        checks=tuple(checks), tolerances={k: float(v) for k, v in tolerances.items()},
        output_dir=out_dir, seed=seed, description=str(data.get("description", "")),
        source=source)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, str(path))


# builders -------------------------------------------------------------------

def build_hamiltonian(h: dict) -> HamiltonianSpec:
    m, hbar = h["m"], h["hbar"]
    if h["preset"] == "harmonic":
        ham = harmonic(h["omega"], m, hbar, h["center"])
    else:
        ham = free(m, hbar)
    extra_poly = tuple(h.get("V_polynomial", ()))
    gauss = tuple(h.get("V_gaussian", ()))
    if extra_poly or gauss:
        base_V = ham.V

        def V(x, t, base_V=base_V):
            out = np.zeros_like(np.asarray(x, dtype=float)) if base_V is None else base_V(x, t)
            if extra_poly:
                out = out + np.polynomial.polynomial.polyval(x, extra_poly)
            if gauss:
                height, c, w = gauss
                out = out + height * np.exp(-0.5 * ((x - c) / w) ** 2)
            return out

        # a deformed oscillator no longer has the closed-form frequency
        ham = ham.with_(V=V, name=f"{ham.name}+V", omega=None)
    if h["phi0"] != 0.0 or h["e"] != 0.0:
        ham = ham.with_(e=h["e"], phi=h["phi0"] if h["phi0"] != 0.0 else None)
    if h["preset"] == "uniform_A":
        ham = uniform_vector_potential(h["A0"], h["e"], m, hbar, base=ham)
    return ham


def _pure(spec: dict, grid: Grid1D, ham: HamiltonianSpec) -> WaveFunction:
    family = spec["family"]
    m, hbar = ham.m, ham.hbar
    if family == "gaussian":
        return gaussian(grid, spec.get("x0", 0.0), spec.get("sigma", 1.0), spec.get("k0", 0.0),
                        m, hbar)
    omega = spec.get("omega", ham.omega if ham.omega is not None else 1.0)
    if family == "harmonic_eigenstate":
        return harmonic_eigenstate(grid, spec.get("n", 0), omega, m, hbar, spec.get("x0", 0.0))
    if family == "coherent":
        return coherent(grid, spec.get("x0", 0.0), spec.get("p0", 0.0), omega, m, hbar)
    raise ConfigError(f"family {family!r} is not a pure single-particle state")


def build_components(spec: dict, grid: Grid1D, ham: HamiltonianSpec) -> list:
    """``[(weight, WaveFunction)]``; a pure state is a single unit-weight member."""
    if spec["family"] == "mixture":
        return [(c["weight"], _pure(c, grid, ham)) for c in spec["components"]]
    if spec["family"] == "epr_gaussian":
        raise ConfigError("two-particle states have no single-particle components")
    return [(1.0, _pure(spec, grid, ham))]


def build_state(spec: dict, grid: Grid1D, ham: HamiltonianSpec):
    """``WaveFunction``, ``DensityMatrix`` (mixtures) or ``TwoParticleState``."""
    family = spec["family"]
    if family == "mixture":
        return density_from_mixture([(c["weight"], _pure(c, grid, ham))
                                     for c in spec["components"]])
    if family == "epr_gaussian":
        from .bell import epr_gaussian

        half = spec["two_particle_half_width"]
        g2 = Grid1D(spec["two_particle_n"], -half, half)
        return epr_gaussian(g2, g2, spec.get("s", 0.5), spec.get("S", 2.0), ham.m, ham.hbar)
    return _pure(spec, grid, ham)


def boundary_mass(state) -> float:
    """Largest density on the outermost grid cells."""
    if isinstance(state, WaveFunction):
        P = state.density
        return float(max(P[0], P[-1]))
    if isinstance(state, DensityMatrix):
        P = state.density
        return float(max(P[0], P[-1]))
    P = state.density
    return float(max(P[0].max(), P[-1].max(), P[:, 0].max(), P[:, -1].max()))


def validate(config: ScenarioConfig):
    """Build and check the initial state; returns ``(ham, state)``."""
    ham = config.build_hamiltonian()
    try:
        state = config.build_state()
    except (ValueError, SmoothPathsError) as exc:
        raise ValidationError(f"cannot build initial state: {exc}") from exc
    edge = boundary_mass(state)
    if not edge < BOUNDARY_TOL:
        raise ValidationError(
            f"initial density at the domain boundary is {edge:.3g} (limit {BOUNDARY_TOL:g})")
    return ham, state
