import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viscodamage.config import SCHEMA, ConfigError, RunConfig, config_hash, dump_config, parse_config, provenance


def test_defaults_are_valid_and_complete():
    cfg = parse_config("")
    assert set(cfg) == set(SCHEMA) | {"seed"}
    assert cfg["time"]["beta"] == 0.01 and cfg["geometry"]["cells"] == [16, 16]


def test_unknown_field_reports_line():
    text = "time:\n  T: 0.5\n  tua: 0.1\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "x.yaml")
    assert exc.value.line == 3
    assert "time.tua" in str(exc.value) and "x.yaml" in str(exc.value)


def test_unknown_section():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("solver: {}\n")


@pytest.mark.parametrize(
    "text, needle",
    [
        ("time: {T: 0.5, tau: 1.0}\n", "exceeds T"),
        ("time: {T: 0.5, tau: 0.3}\n", "not an integer"),
        ("time: {beta: 1.5}\n", "time.beta"),
        ("geometry: {dim: 1}\n", "geometry.extents"),
        ("control: {b_min: 0.5}\n", "control.b_min"),
        ("control: {lambda_Omega: 0, lambda_Sigma: 0}\n", "must not all vanish"),
        ("time: {beta: .nan}\n", "finite"),
        ("forcing: {traction_sides: [front]}\n", "unknown side"),
        ("time: [1, 2\n", "YAML syntax"),
        ("seed: -3\n", "seed"),
    ],
)
def test_invalid_configs(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


@settings(deadline=None, max_examples=40)
@given(
    T=st.sampled_from([0.5, 1.0, 2.0]),
    n=st.integers(1, 40),
    beta=st.floats(1e-6, 0.9),
    seed=st.integers(0, 2**31),
    cells=st.integers(1, 64),
)
def test_round_trip_and_hash(T, n, beta, seed, cells):
    text = f"seed: {seed}\ngeometry: {{cells: [{cells}, {cells}]}}\ntime: {{T: {T}, tau: {T / n!r}, beta: {beta!r}}}\n"
    cfg = parse_config(text.replace("tau_reference", ""))
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)
    assert provenance(cfg).endswith(config_hash(cfg))


def test_hash_changes_with_content():
    assert config_hash(parse_config("seed: 1\n")) != config_hash(parse_config("seed: 2\n"))


def test_run_config_builds_problem(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("geometry: {dim: 1, extents: [1.0], cells: [4]}\nforcing: {traction_direction: [1.0]}\n"
                 "control: {basis_directions: [[1.0]]}\ntime: {T: 0.1, tau: 0.05}\n"
                 "verify: {tau_list: [0.05, 0.025], tau_reference: 0.0125}\n")
    rc = RunConfig.from_file(p)
    prob = rc.problem()
    assert prob.grid.dim == 1 and prob.grid.n_nodes == 5
    tr = prob.run(rc["time"]["beta"])
    assert not tr.failed
    cp = rc.control_problem(workers=1)
    assert cp.space.basis.n_coeffs == 2


def test_nonconstant_d_is_carried_to_material():
    rc = RunConfig(parse_config("material: {d: 2.0}\ngeometry: {cells: [2, 2]}\n"))
    assert not rc.material().d_is_one
    assert np.isclose(rc.material().d(0.3), 2.0)
