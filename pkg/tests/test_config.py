import pytest

from meshtone.config import WORKERS_ENV, PipelineConfig, env_worker_count, parse_config_text


def test_defaults():
    c = PipelineConfig()
    assert (c.alpha, c.min_pixels, c.visibility_fraction, c.min_overlap, c.agreement_threshold) == (0.3, 5, 0.75, 3, 0.0)


def test_text_round_trip():
    c = PipelineConfig(alpha=0.25, channels="gray", dump_gains=True, min_patch_mean=1 / 255)
    assert PipelineConfig.from_text(c.to_text()) == c


def test_file_round_trip(tmp_path):
    c = PipelineConfig(worker_count=3, seed=11)
    c.save(tmp_path / "c.txt")
    assert PipelineConfig.load(tmp_path / "c.txt") == c


def test_comments_and_blank_lines():
    assert parse_config_text("# x\n\nalpha = 0.2  # trim\n") == {"alpha": "0.2"}


@pytest.mark.parametrize(
    "text",
    ["alpha = 0.5", "alpha = nope", "bogus = 1", "channels = cmyk", "dump_gains = maybe", "alpha"],
)
def test_rejects_bad_values(text):
    with pytest.raises(ValueError):
        PipelineConfig.from_text(text)


def test_updated_skips_none():
    c = PipelineConfig().updated(alpha=None, min_pixels=7)
    assert c.alpha == 0.3 and c.min_pixels == 7


def test_env_workers(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    assert env_worker_count() is None
    monkeypatch.setenv(WORKERS_ENV, "6")
    assert env_worker_count() == 6
