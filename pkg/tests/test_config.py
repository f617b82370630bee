import pytest

from shellmc.config import ProblemConfig, parse_assignments, parse_config
from shellmc.errors import ConfigError


def test_minimal_stationary():
    cfg = parse_config("r0=0.1\nr1=1\nkappa_s=0.9\nkappa_t=1\nn=1000\nseed=42\n")
    assert (cfg.alpha, cfg.r1, cfg.kappa_s, cfg.kappa_t, cfg.n, cfg.seed) == (0.1, 1.0, 0.9, 1.0, 1000, 42)
    assert cfg.mode == "stationary" and cfg.n_r == 90 and not cfg.importance


def test_kappa_order():
    with pytest.raises(ConfigError, match="kappa_s exceeds kappa_t"):
        parse_config("kappa_s=1.1\nkappa_t=1")


def test_moving_target_positive():
    cfg = parse_config("mode=unsteady\nalpha=0.37625\nbeta=-0.027625\nt_final=10")
    assert cfg.inner_radius(10.0) == pytest.approx(0.1)
    assert cfg.n_steps == 1000


def test_comments_blank_lines_and_extras():
    cfg, extras = parse_config("# header\n\nn = 5  # trailing\nworkers=2\noutput_dir=/tmp/x\n", with_extras=True)
    assert cfg.n == 5 and extras == {"workers": 2, "output_dir": "/tmp/x"}


@pytest.mark.parametrize("text,key", [
    ("bogus=1", "bogus"),
    ("n=abc", "n"),
    ("n=1.5", "n"),
    ("importance=maybe", "importance"),
    ("kappa_t=nan", "kappa_t"),
    ("mode=fast", "mode"),
    ("beta=0.1", "beta"),
    ("mode=unsteady\ndt=0.3", "dt"),
    ("alpha=1.2", "alpha"),
    ("workers=0", "workers"),
    ("no equals sign", "line 1"),
])
def test_rejections(text, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(text)


def test_source_stop_and_overrides():
    base = ProblemConfig()
    cfg, _ = parse_assignments([("source_stop", "none"), ("particles", "7")], base)
    assert cfg.source_stop is None and cfg.source_end == cfg.t_final and cfg.n == 7
    assert parse_config("source_stop=9").source_end == 9.0
