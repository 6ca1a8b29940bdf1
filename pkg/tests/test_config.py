import json

import pytest

from vnsflow.config import RunConfig, from_dict, load, load_plan, plan_from_dict
from vnsflow.errors import ConfigError


def test_defaults_validate_and_hash_ignores_out():
    cfg = from_dict({})
    assert cfg.system == "kinetic" and cfg.steps == 100
    assert cfg.content_hash() == from_dict({"out": "elsewhere"}).content_hash()
    assert cfg.content_hash() != from_dict({"seed": 1}).content_hash()


@pytest.mark.parametrize(
    "patch,field",
    [
        ({"system": "plasma"}, "system"),
        ({"n": 24}, "n"),
        ({"T": 0.0123}, "T"),
        ({"sigma": 0.0}, "sigma"),
        ({"system": "particle", "beta": 0.3}, "beta"),
        ({"system": "particle", "splitting": "strang"}, "splitting"),
        ({"system": "kinetic_cutoff"}, "R"),
        ({"R": 0.5, "system": "kinetic_cutoff"}, "R"),
        ({"dt": 0.05}, "dt"),
        ({"kinetic": {"nx": 16}}, "kinetic.nx"),
        ({"bogus": 1}, "bogus"),
        ({"f0": {"ax": 2.0}}, "f0"),
        ({"system": "particle", "noise_dt": 0.003}, "noise_dt"),
    ],
)
def test_invalid_fields_are_named(patch, field):
    with pytest.raises(ConfigError, match=f"field '{field}"):
        from_dict(patch)


def test_beta_message_names_hypothesis():
    with pytest.raises(ConfigError, match="β ≤ 1/4"):
        from_dict({"system": "particle", "beta": 0.3})


def test_zero_sigma_behind_flag():
    assert from_dict({"sigma": 0.0, "allow_zero_sigma": True}).sigma == 0.0


def test_default_vmax_tracks_initial_spread():
    cfg = from_dict({"f0": {"v_std": 0.4, "v_mean": [0.5, -1.0]}})
    assert cfg.vmax == pytest.approx(5 * 0.4 + 1.0)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load(tmp_path / "bad.json")


def _plan(**kw):
    base = {"system": "particle", "n": 16, "N": 100, "kinetic": {"nv": 16}, "T": 0.02, "dt": 0.005}
    d = {"base": base, "values": [50, 100, 200], "seeds": 8}
    d.update(kw)
    return d


def test_plan_validation(tmp_path):
    plan = plan_from_dict(_plan())
    assert plan.reference_config().system == "kinetic"
    assert plan.run_config(200, 3).N == 200 and plan.run_config(200, 3).seed == 3
    with pytest.raises(ConfigError, match="seeds"):
        plan_from_dict(_plan(seeds=1))
    with pytest.raises(ConfigError, match="values"):
        plan_from_dict(_plan(values=[10, 20]))
    with pytest.raises(ConfigError, match="reference.sigma"):
        plan_from_dict(_plan(reference={"system": "kinetic", "n": 16, "kinetic": {"nv": 16}, "T": 0.02, "dt": 0.005, "sigma": 0.9}))
    (tmp_path / "p.json").write_text(json.dumps(_plan()))
    assert load_plan(tmp_path / "p.json").values == (50, 100, 200)


def test_cutoff_plan_uses_cutoff_reference():
    plan = plan_from_dict(_plan(base={"system": "particle_cutoff", "R": 3.0, "n": 16, "kinetic": {"nv": 16}, "T": 0.02, "dt": 0.005}))
    ref = plan.reference_config()
    assert ref.system == "kinetic_cutoff" and ref.R == 3.0


def test_runconfig_is_frozen():
    with pytest.raises(Exception):
        RunConfig().seed = 3
