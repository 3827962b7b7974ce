import json

import pytest
from hypothesis import given, strategies as st

from nvdnp import constants as C
from nvdnp.config import (
    KINDS,
    default_config,
    parse_config,
    parse_quantity,
    parse_subsets,
    with_overrides,
)
from nvdnp.errors import ConfigError

MINIMAL = """\
[run]
kind = spectrum
[sweep]
start = 2.362 GHz
stop = 2.380 GHz
"""


def test_minimal_config_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.kind == "spectrum"
    assert cfg.get("system", "field") == C.FIELD_DNP
    assert cfg.get("sweep", "points") == 61
    assert "system.field" in cfg.defaulted and "sweep.start" not in cfg.defaulted
    assert len(cfg.fingerprint()) == 64
    assert cfg.fingerprint() == parse_config(MINIMAL).fingerprint()


def test_units_scale_exactly():
    assert parse_quantity("17.6 mT") == (0.0176, "field")
    assert parse_quantity("2.16 MHz", "frequency")[0] == 2.16e6
    assert parse_quantity("3 W/cm2", "density")[0] == 30.0
    assert parse_quantity("-2.16MHz")[0] == -2.16e6


@pytest.mark.parametrize("text,needle", [
    ("5", "missing unit"),
    ("5 furlongs", "unknown unit"),
    ("five mT", "cannot read"),
])
def test_bad_quantities(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_quantity(text, "field", "system.field", 3)


def test_duplicate_key_reports_line():
    text = MINIMAL + "[system]\nfield = 17 mT\nfield = 18 mT\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == 8
    assert "system.field" in str(info.value)


def test_duplicate_key_in_json_reports_line():
    text = '{\n "run": {"kind": "spectrum"},\n "sweep": {\n  "start": "1 GHz",\n  "start": "2 GHz",\n  "stop": "3 GHz"}\n}\n'
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == 5


def test_json_matches_ini():
    data = {"run": {"kind": "spectrum"}, "sweep": {"start": "2.362 GHz", "stop": "2.380 GHz"}}
    assert parse_config(json.dumps(data, indent=1)) == parse_config(MINIMAL)


@pytest.mark.parametrize("extra,key,line", [
    ("[system]\nfeild = 1 T\n", "system.feild", 7),
    ("[system]\nfield = 17.6\n", "system.field", 7),
    ("[system]\nfield = 17.6 MHz\n", "system.field", 7),
    ("[system]\nfield = -1 T\n", "system.field", 7),
    ("[laser]\nalpha = 1 K/(mW/mm2)\n", "laser", 6),
    ("[drive]\ntransition = 0\n", "drive.transition", 7),
])
def test_rejections_name_key_and_line(extra, key, line):
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL + extra)
    assert info.value.key == key
    assert info.value.line == line
    assert info.value.expected


def test_kind_mismatch_and_missing_kind():
    with pytest.raises(ConfigError, match="does not match"):
        parse_config(MINIMAL, kind="power-sweep")
    with pytest.raises(ConfigError, match="kind not given"):
        parse_config("[sweep]\nstart = 1 GHz\nstop = 2 GHz\n")
    cfg = parse_config("[sweep]\nstart = 1 GHz\nstop = 2 GHz\n", kind="spectrum")
    assert cfg.kind == "spectrum"


def test_cross_field_constraints():
    with pytest.raises(ConfigError, match="start equals stop"):
        parse_config("[run]\nkind = spectrum\n[sweep]\nstart = 1 GHz\nstop = 1000 MHz\n")
    with pytest.raises(ConfigError, match="geometric"):
        parse_config("[run]\nkind = power-sweep\n[sweep]\nstart = 0 Hz\nstop = 1 MHz\n")
    with pytest.raises(ConfigError, match="duration"):
        parse_config(MINIMAL + "[protocol]\nmode = evolve\n")
    with pytest.raises(ConfigError, match="go together"):
        parse_config("[run]\nkind = estimate\n[estimate]\ns_hyper = 2\n")
    with pytest.raises(ConfigError, match="exceed"):
        parse_config("[run]\nkind = estimate\n[thermometry]\nf_minus = 3 GHz\nf_plus = 2 GHz\n")


def test_subsets():
    assert parse_subsets("1; 1,2; 1,2,3", 3) == ((0,), (0, 1), (0, 1, 2))
    assert parse_subsets("", 2) == ((0,), (0, 1))
    with pytest.raises(ValueError):
        parse_subsets("1; 4", 3)
    with pytest.raises(ValueError):
        parse_subsets("1;;2", 3)


def test_overrides():
    cfg = default_config("spectrum")
    new = with_overrides(cfg, {"system.field": "20 mT", "sweep.points": "11"})
    assert new.get("system", "field") == 0.02 and new.get("sweep", "points") == 11
    assert "system.field" not in new.defaulted
    assert new.fingerprint() != cfg.fingerprint()
    with pytest.raises(ConfigError):
        with_overrides(cfg, {"laser.alpha": "1 K/(mW/mm2)"})
    with pytest.raises(ConfigError):
        with_overrides(cfg, {"system.field": "20"})


@pytest.mark.parametrize("kind", KINDS)
def test_defaults_render_round_trip(kind):
    cfg = default_config(kind)
    assert parse_config(cfg.render()) == cfg


_floats = st.floats(1e-6, 1e10, allow_nan=False, allow_infinity=False)


@given(
    kind=st.sampled_from(["spectrum", "power-sweep"]),
    field=_floats, rabi=st.floats(0, 1e7), start=_floats, width=_floats,
    points=st.integers(1, 500), nitrogen=st.booleans(), seed=st.integers(0, 2 ** 31),
    t_e=st.floats(0, 1e8),
)
def test_render_parse_round_trip(kind, field, rabi, start, width, points, nitrogen, seed, t_e):
    text = (f"[run]\nkind = {kind}\nseed = {seed}\n"
            f"[system]\nfield = {field!r} T\nnitrogen = {'yes' if nitrogen else 'no'}\n"
            f"[dissipators]\nelectron_t1 = {t_e!r} /s\n"
            f"[drive]\nrabi = {rabi!r} Hz\n"
            f"[sweep]\nstart = {start!r} Hz\nstop = {start + width!r} Hz\npoints = {points}\n")
    if start + width == start:
        return
    cfg = parse_config(text)
    again = parse_config(cfg.render())
    assert again == cfg
    assert again.fingerprint() == cfg.fingerprint()
