import pytest
from hypothesis import given, settings, strategies as st

from sle_lab.config import KINDS, ConfigError, validate_config


def test_empty_text_gives_defaults():
    cfg = validate_config("")
    assert cfg.kind == "escape"
    assert cfg.scales == (2.0, 4.0, 8.0, 16.0) and cfg.trials == 4000
    assert cfg.seed == 0 and cfg.workers == 1 and cfg.warnings == ()


def test_comments_and_blank_lines():
    cfg = validate_config("# header\n\nkind = bessel   # trailing\nkappa = 8\n")
    assert cfg.kind == "bessel" and cfg.kappa == 8.0


@pytest.mark.parametrize("kind", KINDS)
def test_every_kind_has_valid_defaults(kind):
    cfg = validate_config(f"kind = {kind}")
    assert cfg.kind == kind and len(cfg.scales) >= 3


def test_epsilon_not_below_a_names_both_fields():
    with pytest.raises(ConfigError) as exc:
        validate_config("kind = boundary-times\na = 0.1\nscales = 0.01, 0.05, 0.2")
    msgs = [e for e in exc.value.errors if e.startswith("scales[2]")]
    assert len(msgs) == 1 and "a" in msgs[0].split(":")[0]


def test_cut_sde_outside_regime_warns():
    cfg = validate_config("kind = cut-sde\nkappa = 9")
    assert any("outside (4, 8)" in w for w in cfg.warnings)


def test_all_errors_are_reported():
    text = "kind = escape\ntrials = 0\nscales = 0.5, x, 4\nbogus = 1\nworkers = -2"
    with pytest.raises(ConfigError) as exc:
        validate_config(text)
    fields = {e.split(":")[0] for e in exc.value.errors}
    assert {"trials", "scales[1]", "scales[0]", "bogus", "workers"} <= fields


def test_syntax_and_duplicates():
    with pytest.raises(ConfigError) as exc:
        validate_config("kind escape\nseed = 1\nseed = 2")
    assert any(e.startswith("line 1") for e in exc.value.errors)
    assert any(e.startswith("seed") for e in exc.value.errors)


def test_cross_field_rules():
    for text in ("kind = bessel\nkappa = 4", "kind = disconnection\nkappa = 8",
                 "kind = perco-two-arm\ndelta = 0.1\nscales = 0.5, 0.25, 0.125",
                 "kind = perco-disk-hit\ndelta = 0.25",
                 "kind = flow-moment\ngridsize = 8",
                 "kind = trace-dimension\nmethod = occupancy\nkappa = 3"):
        with pytest.raises(ConfigError):
            validate_config(text)


def test_overrides_take_precedence():
    cfg = validate_config("seed = 1", {"seed": 5, "output": "x"})
    assert cfg.seed == 5 and cfg.output == "x"


def test_fingerprint_ignores_scheduling_fields():
    a = validate_config("seed = 3\nworkers = 1")
    b = validate_config("seed = 3\nworkers = 8\noutput = elsewhere")
    c = validate_config("seed = 4")
    assert a.fingerprint() == b.fingerprint() != c.fingerprint()


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(KINDS), seed=st.integers(0, 2**40), trials=st.integers(1, 10**6))
def test_text_round_trip(kind, seed, trials):
    cfg = validate_config(f"kind = {kind}\nseed = {seed}\ntrials = {trials}")
    again = validate_config(cfg.to_text())
    assert again == cfg and again.to_text() == cfg.to_text()
