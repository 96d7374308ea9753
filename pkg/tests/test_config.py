import pytest

from polycaloric.config import DEFAULT_CONFIG, ConfigError, load_config, parse_config


def test_default_scenario():
    cfg = load_config(None)
    assert cfg.n == 1 and cfg.gamma == (0.25,)
    assert cfg.verification["fd"] == {"L": 8.0, "N": 2048, "dt": 1e-4, "T": 0.5}
    prob = cfg.build_problem()
    assert prob.m == 1 and prob.source is None


def test_hash_is_stable_and_sensitive():
    a = parse_config(DEFAULT_CONFIG)
    b = parse_config("# a comment\n" + DEFAULT_CONFIG)
    assert a.config_hash == b.config_hash
    c = parse_config(DEFAULT_CONFIG.replace("0.25", "0.2"))
    assert a.config_hash != c.config_hash


def test_scalar_shorthands():
    cfg = parse_config('[problem]\ngamma = 0.1\ninitial = "gaussian"\nsource = "constant"\n')
    prob = cfg.build_problem()
    assert prob.n == 1 and prob.source is not None


def test_two_dimensional_second_order():
    text = '[problem]\ngamma = [0.1, -0.2]\ninitial = [{ id = "poly_gauss", q = 2 }, "gaussian"]\n'
    prob = parse_config(text).build_problem()
    assert (prob.n, prob.m) == (2, 2)


def test_file_roundtrip(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text(DEFAULT_CONFIG)
    assert load_config(p).source == str(p)


@pytest.mark.parametrize(
    "text,line,needle",
    [
        ("[problem]\ninitial = ['gaussian']\n", 1, "missing required key 'gamma'"),
        ("[problem]\ngamma = [0.7]\ninitial = ['gaussian']\n", 2, "|gamma| < 1/2"),
        ("[problem]\ngamma = [0.1]\n", 1, "'initial'"),
        ("[problem]\ngamma = [0.1]\ninitial = ['nope']\n", 3, "unknown field id"),
        ("[problem]\ngamma = [0.1]\ninitial = ['gaussian']\nsource = 'x'\n", 4, "unknown source id"),
        ("[problem]\ngamma = [0.1, 0.2]\nn = 1\ninitial = ['gaussian']\n", 2, "entries but n"),
        ("[problem]\ngamma = [0.1]\ninitial = ['gaussian']\n[quadrature]\nrtol = -1\n", 5, "positive"),
        ("[problem]\ngamma = [0.1]\ninitial = ['gaussian']\n[verification]\ntolerances = { 'kernel.mass' = 0 }\n", 5, "positive"),
        ("[problem\ngamma = 1\n", 1, "TOML syntax error"),
        ("x = 1\n", 1, "missing [problem]"),
    ],
)
def test_errors_name_the_line(text, line, needle):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "bad.toml")
    assert info.value.line == line
    assert needle in str(info.value)
    assert str(info.value).startswith(f"bad.toml:{line}: ")


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")
