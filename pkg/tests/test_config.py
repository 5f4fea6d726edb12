import pytest

from smoothpaths.bell import TwoParticleState
from smoothpaths.cli import bundled_scenarios
from smoothpaths.config import ConfigError, ValidationError, load_config, parse_config, validate
from smoothpaths.states import DensityMatrix, WaveFunction

BASE = """
id = "t"
checks = ["density_axioms"]
[grid]
n = 256
x_min = -16.0
x_max = 16.0
[hamiltonian]
preset = "free"
[state]
family = "gaussian"
"""


def test_minimal_config_defaults():
    cfg = parse_config(BASE)
    assert cfg.output_dir == "t" and cfg.run.dt == 1e-3 and cfg.run.method == "split-step"
    ham, state = validate(cfg)
    assert isinstance(state, WaveFunction) and state.is_normalized()


@pytest.mark.parametrize("name", sorted(bundled_scenarios()))
def test_bundled_scenarios_parse(name):
    cfg = load_config(bundled_scenarios()[name])
    assert cfg.id == name
    validate(cfg)


def test_state_kinds():
    mix = load_config(bundled_scenarios()["mixture"])
    assert isinstance(validate(mix)[1], DensityMatrix)
    epr = load_config(bundled_scenarios()["epr_gaussian"])
    assert isinstance(validate(epr)[1], TwoParticleState)


@pytest.mark.parametrize("edit, field", [
    (("n = 256", "n = 100"), "grid.n"),
    (('preset = "free"', 'preset = "free"\nmass = 2.0'), "mass"),
    (('checks = ["density_axioms"]', 'checks = ["density_axiom"]'), "density_axiom"),
    (('family = "gaussian"', 'family = "gaussian"\nsigma = -1.0'), "state.sigma"),
    (('id = "t"', 'id = "t"\n[tolerances]\nunitarty = 1e-9'), "unitarty"),
    (('family = "gaussian"', 'family = "gaussian"\n[run]\nmethod = "euler"'), "run.method"),
    (('checks = ["density_axioms"]', 'checks = ["bell_gap"]'), "bell_gap"),
])
def test_config_errors_name_the_field(edit, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config(BASE.replace(*edit))


def test_mixture_weights_must_sum_to_one():
    text = BASE.replace('family = "gaussian"', """family = "mixture"
components = [
  {weight = 0.5, family = "gaussian", x0 = -2.0},
  {weight = 0.4, family = "gaussian", x0 = 2.0},
]""")
    with pytest.raises(ConfigError, match="weights"):
        parse_config(text)


def test_bad_toml_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config("id = ")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_boundary_validation():
    cfg = parse_config(BASE.replace('family = "gaussian"', 'family = "gaussian"\nx0 = 13.0'))
    with pytest.raises(ValidationError, match="boundary"):
        validate(cfg)
