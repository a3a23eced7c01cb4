from dataclasses import dataclass

import pytest

from elevgan.config import ConfigError, from_mapping, parse_kv, to_kv


@dataclass(frozen=True)
class Sample:
    count: int = 1
    rate: float = 0.5
    name: str = "x"
    flag: bool = False


def test_parse_comments_and_blanks():
    text = "# header\n\ncount = 3  \nname=a b # comment\n"
    raw = parse_kv(text)
    assert raw["count"] == "3"
    assert raw["name"] == "a b"


@pytest.mark.parametrize("text", ["novalue\n", "=3\n", "a=1\na=2\n"])
def test_parse_rejects_malformed(text):
    with pytest.raises(ConfigError):
        parse_kv(text)


def test_from_mapping_converts_types():
    cfg = from_mapping(Sample, {"count": "1e3", "rate": "0.25", "flag": "true", "name": "\\n"})
    assert cfg == Sample(1000, 0.25, "\n", True)


def test_from_mapping_rejects_unknown_and_bad_values():
    with pytest.raises(ConfigError, match="unknown"):
        from_mapping(Sample, {"colour": "red"})
    with pytest.raises(ConfigError):
        from_mapping(Sample, {"count": "three"})
    with pytest.raises(ConfigError):
        from_mapping(Sample, {"flag": "maybe"})


def test_to_kv_roundtrip():
    cfg = Sample(7, 0.125, "abc", True)
    assert from_mapping(Sample, parse_kv(to_kv(cfg))) == cfg
