import math

import pytest

from fixpoint.iteration import CROSSCHECK, FALLBACK, STRICT
from helpers.config import default_nu, load_config, parse_config_text
from helpers.errors import ParseError, ValidationError
from tests.conftest import write_config

POTENTIAL = '\'[{"q":[1,0],"re":1,"im":0},{"q":[-1,0],"re":1,"im":0}]\''


def minimal(**extra) -> str:
    lines = ["n=2", "l=2", f"potential={POTENTIAL}"]
    lines += [f"{k}={v}" for k, v in extra.items()]
    return "\n".join(lines) + "\n"


def test_minimal_config_applies_defaults():
    cfg = parse_config_text(minimal())
    p = cfg.params
    assert p.delta == pytest.approx(0.9)
    assert p.k == 30.0 and p.R == 12 and p.r_max == 12
    assert p.sigma == 0.0 and p.A == 1.0
    assert cfg.mode == CROSSCHECK
    assert cfg.bounds == "hard"
    assert cfg.potential.star_norm() == pytest.approx(2.0)
    assert cfg.potential.hermitian
    assert cfg.nu == pytest.approx(default_nu(2))
    # t 来自默认方向的分解
    assert all(0.0 <= x < 2 * math.pi for x in p.t)


def test_delta_constraint():
    with pytest.raises(ValidationError, match="δ"):
        parse_config_text(minimal(delta=1.0))


def test_nonzero_mean_rejected():
    text = 'n=2\nl=2\npotential=\'[{"q":[0,0],"re":0.5,"im":0}]\'\n'
    with pytest.raises(ValidationError, match="v₀"):
        parse_config_text(text)


def test_unknown_key_rejected():
    with pytest.raises(ValidationError, match="sigmaa"):
        parse_config_text(minimal(sigmaa=0.1))


def test_missing_required_key():
    with pytest.raises(ValidationError, match="potential"):
        parse_config_text("n=2\nl=2\n")


def test_bad_value_reports_line_and_column():
    text = "n=2\nl=abc\n" + f"potential={POTENTIAL}\n"
    with pytest.raises(ParseError) as err:
        parse_config_text(text)
    assert err.value.line == 2
    assert err.value.column == 3


def test_bad_json_is_parse_error():
    with pytest.raises(ParseError) as err:
        parse_config_text("n=2\nl=2\npotential='[{q:1}]'\n")
    assert err.value.line == 3


def test_duplicate_key():
    with pytest.raises(ParseError):
        parse_config_text(minimal(n=3))


def test_t_and_nu_are_exclusive():
    with pytest.raises(ValidationError):
        parse_config_text(minimal(t="0.1,0.2", nu="0.6,0.8"))


def test_explicit_values():
    cfg = parse_config_text(minimal(
        sigma=0.1, A="1+0.5j", t="0.25,1.5", k=25, R=4, strict="true", bounds="soft", seed=9,
    ))
    assert cfg.params.A == complex(1, 0.5)
    assert cfg.params.t == (0.25, 1.5)
    assert cfg.nu is None
    assert cfg.mode == STRICT
    assert cfg.bounds == "soft"
    assert cfg.seed == 9


def test_crosscheck_off_means_fallback():
    assert parse_config_text(minimal(crosscheck="false")).mode == FALLBACK


def test_comments_and_blank_lines(tmp_path):
    path = write_config(tmp_path / "c.env", n=2, l=2, potential=POTENTIAL)
    text = "# header\n\n" + open(path, encoding="utf-8").read()
    (tmp_path / "c.env").write_text(text, encoding="utf-8")
    cfg = load_config(path)
    assert cfg.source == path


def test_missing_file(tmp_path):
    with pytest.raises(ValidationError):
        load_config(str(tmp_path / "missing.env"))


def test_amplitude_condition_checked_at_load():
    with pytest.raises(ValidationError, match="振幅"):
        parse_config_text(minimal(sigma=1e6))
    with pytest.raises(ValidationError, match="振幅"):
        parse_config_text(minimal(sigma=0.5, A=40))
    assert parse_config_text(minimal(sigma=0.1)).params.coupling == pytest.approx(0.1)


def test_documented_direction_is_accepted():
    cfg = parse_config_text(minimal(nu="0.6,0.8"))
    assert cfg.nu == pytest.approx((0.6, 0.8))
