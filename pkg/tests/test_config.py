"""Config parsing: schema, aliases, defaults, and error reporting."""

import pytest

from deepbsde.config import RunConfig, parse_config, parse_config_text
from deepbsde.errors import ConfigError
from deepbsde.optim import lr_at

MINIMAL = """
problem = heat
d = 2
N = 20
batch = 256
iterations = 2000
seed = 1
"""


def test_minimal_config_parses():
    cfg = parse_config_text(MINIMAL)
    assert cfg.problem == "heat"
    assert cfg.d == 2
    assert cfg.N == 20
    assert cfg.batch_size == 256  # 'batch' is an alias
    assert cfg.iterations == 2000
    assert cfg.seed == 1


def test_minimal_config_defaults():
    cfg = parse_config_text(MINIMAL)
    assert cfg.T == 1.0
    assert cfg.optimizer == "adam"
    assert cfg.lr == pytest.approx(5e-3)
    assert cfg.xi_mode == "point"
    # point start with no explicit mode resolves to the scalar-head variant
    assert cfg.mode == "deterministic_xi"
    assert cfg.sharing == "independent"
    assert cfg.activation == "tanh"
    assert cfg.hidden is None
    assert cfg.hidden_widths() == (12, 12)


def test_comments_and_blank_lines_ignored():
    text = """
    # leading comment
    problem = heat   # trailing comment
    d = 2

    N = 20
    batch_size = 256
    iterations = 10
    seed = 7
    """
    cfg = parse_config_text(text)
    assert cfg.problem == "heat"
    assert cfg.seed == 7


def test_zero_batch_size_rejected():
    text = MINIMAL.replace("batch = 256", "batch_size = 0")
    with pytest.raises(ConfigError, match="'batch_size' must be at least 1"):
        parse_config_text(text)


def test_unknown_key_lists_accepted():
    text = MINIMAL + "momentum_rate = 0.9\n"
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    message = str(info.value)
    assert "momentum_rate" in message
    # the accepted list should be in the message so typos are self-serve
    assert "batch_size" in message
    assert "lr" in message


def test_duplicate_key_rejected():
    text = MINIMAL + "d = 3\n"
    with pytest.raises(ConfigError, match="'d' already set"):
        parse_config_text(text)


def test_alias_collides_with_canonical_key():
    # batch and batch_size write the same field; giving both is a duplicate
    text = MINIMAL + "batch_size = 128\n"
    with pytest.raises(ConfigError, match="already set"):
        parse_config_text(text)


def test_missing_required_keys_listed():
    with pytest.raises(ConfigError) as info:
        parse_config_text("problem = heat\nd = 2\n")
    message = str(info.value)
    assert "missing required keys" in message
    for key in ("N", "batch_size", "iterations", "seed"):
        assert key in message


def test_bad_value_reports_file_and_line():
    text = "problem = heat\nd = 2\nN = 20\nbatch = 256\niterations = 2000\nseed = 1\nlr = banana\n"
    with pytest.raises(ConfigError, match=r"run\.cfg:7: bad value for 'lr'"):
        parse_config_text(text, source="run.cfg")


def test_line_without_equals_rejected():
    text = MINIMAL + "just some words\n"
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        parse_config_text(text)


def test_non_finite_float_rejected():
    text = MINIMAL + "lr = inf\n"
    with pytest.raises(ConfigError, match="non-finite"):
        parse_config_text(text)


def test_comma_lists():
    text = MINIMAL + "hidden = 32, 32, 16\nxi0 = 0.5, -0.5\n"
    cfg = parse_config_text(text)
    assert cfg.hidden == (32, 32, 16)
    assert cfg.hidden_widths() == (32, 32, 16)
    assert cfg.xi0 == (0.5, -0.5)


def test_lambda_alias():
    text = MINIMAL.replace("problem = heat", "problem = hjb") + "lambda = 2.5\n"
    cfg = parse_config_text(text)
    assert cfg.lam == pytest.approx(2.5)
    assert cfg.problem_overrides()["lambda"] == pytest.approx(2.5)


def test_lambda_only_forwarded_for_hjb():
    cfg = parse_config_text(MINIMAL)
    assert "lambda" not in cfg.problem_overrides()


def test_lr_schedule_pairing():
    text = MINIMAL + "lr_values = 0.01, 0.001\nlr_boundaries = 500\n"
    cfg = parse_config_text(text)
    schedule = cfg.schedule()
    assert lr_at(schedule, 0) == pytest.approx(0.01)
    assert lr_at(schedule, 499) == pytest.approx(0.01)
    assert lr_at(schedule, 500) == pytest.approx(0.001)


def test_lr_values_without_boundaries_rejected():
    text = MINIMAL + "lr_values = 0.01, 0.001\n"
    with pytest.raises(ConfigError, match="given together"):
        parse_config_text(text)


def test_lr_pairing_length_mismatch():
    text = MINIMAL + "lr_values = 0.01, 0.001, 0.0001\nlr_boundaries = 500\n"
    with pytest.raises(ConfigError, match="one more entry"):
        parse_config_text(text)


def test_constant_schedule_from_lr():
    cfg = parse_config_text(MINIMAL + "lr = 0.02\n")
    schedule = cfg.schedule()
    assert lr_at(schedule, 0) == pytest.approx(0.02)
    assert lr_at(schedule, 10 ** 6) == pytest.approx(0.02)


def test_box_start_defaults_to_general_mode():
    text = MINIMAL + "xi_mode = box\nbox_low = -1, -1\nbox_high = 1, 1\n"
    cfg = parse_config_text(text)
    assert cfg.mode == "general_xi"
    overrides = cfg.problem_overrides()
    assert overrides["box_low"] == (-1.0, -1.0)
    assert "xi0" not in overrides


def test_deterministic_mode_requires_point_start():
    text = MINIMAL + "xi_mode = box\nmode = deterministic_xi\n"
    with pytest.raises(ConfigError, match="requires xi_mode 'point'"):
        parse_config_text(text)


def test_unknown_enum_values_rejected():
    for extra, fragment in [
        ("optimizer = lbfgs", "unknown optimizer"),
        ("sharing = tied", "unknown sharing"),
        ("xi_mode = gaussian", "unknown xi_mode"),
        ("mode = mystery", "unknown mode"),
    ]:
        with pytest.raises(ConfigError, match=fragment):
            parse_config_text(MINIMAL + extra + "\n")


def test_unknown_problem_rejected():
    with pytest.raises(ConfigError, match="unknown problem 'kpz'"):
        parse_config_text(MINIMAL.replace("problem = heat", "problem = kpz"))


def test_value_range_checks():
    cases = [
        ("T = -1.0", "'T' must be positive"),
        ("iterations = -1", "'iterations' must be non-negative"),
        ("beta1 = 1.0", r"'beta1' must lie in \[0, 1\)"),
        ("eps = 0.0", "'eps' must be positive"),
        ("grad_clip = -0.5", "'grad_clip' must be non-negative"),
        ("hidden = 8, 0", "'hidden' widths must be positive"),
    ]
    for extra, fragment in cases:
        base = MINIMAL.replace("iterations = 2000\n", "") if extra.startswith("iterations") \
            else MINIMAL
        with pytest.raises(ConfigError, match=fragment):
            parse_config_text(base + extra + "\n")


def test_parse_config_reads_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(MINIMAL, encoding="utf-8")
    cfg = parse_config(path)
    assert cfg.problem == "heat"


def test_parse_config_error_names_the_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(MINIMAL + "lr = banana\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="run.cfg"):
        parse_config(path)


def test_parse_config_missing_file_is_oserror(tmp_path):
    with pytest.raises(OSError):
        parse_config(tmp_path / "nope.cfg")


def test_build_problem_applies_overrides():
    text = MINIMAL + "T = 0.5\nxi0 = 1.0, 2.0\n"
    cfg = parse_config_text(text)
    problem = cfg.build_problem()
    assert problem.T == pytest.approx(0.5)
    assert problem.d == 2


def test_build_bank_matches_config():
    cfg = parse_config_text(MINIMAL + "hidden = 6, 6\n")
    bank = cfg.build_bank(seed=3)
    assert bank.mode == "deterministic_xi"
    assert bank.d == 2
    assert bank.num_steps == 20
    assert bank.z_nets[1].config.layer_widths == (2, 6, 6, 2)


def test_runconfig_direct_construction_validates():
    with pytest.raises(ConfigError, match="'d' must be at least 1"):
        RunConfig(problem="heat", d=0, N=20, batch_size=8, iterations=1, seed=0)
