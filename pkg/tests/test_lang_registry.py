import unicodedata

import pytest

from corpusforge.lang_registry import (
    FAMILIES,
    IndeterminateScript,
    LanguageTag,
    Registry,
    TagParseError,
    default_registry,
    dominant_script,
    format_tag,
    parse_tag,
)

from oracles import letter_script_counts


def test_registry_has_38_entries_with_sequential_ids():
    reg = default_registry()
    assert len(reg) == 38
    assert [e.id for e in reg] == list(range(1, 39))


def test_registry_pairs_unique_and_dual_script_languages():
    reg = default_registry()
    keys = [(e.tag.code, e.tag.script) for e in reg]
    assert len(set(keys)) == 38
    scripts = {}
    for code, script in keys:
        scripts.setdefault(code, set()).add(script)
    assert scripts["kas"] == {"Arab", "Deva"}
    assert scripts["snd"] == {"Arab", "Deva"}
    assert scripts["mni"] == {"Beng", "Mtei"}
    assert ("hingh", "Deva") in keys
    assert ("hoc", "Wara") in keys


def test_every_family_used_is_known():
    assert {e.tag.family for e in default_registry()} <= set(FAMILIES)
    assert len(FAMILIES) == 9


@pytest.mark.parametrize("info", list(default_registry()), ids=lambda i: i.tag.key)
def test_round_trip_every_entry(info):
    s = format_tag(info.tag)
    assert format_tag(parse_tag(s)) == s
    assert parse_tag(s) == info.tag
    assert parse_tag(s).registered


def test_parse_examples():
    assert parse_tag("CentralIndic+hin_Deva") == LanguageTag("CentralIndic", "hin", "Deva")
    t = parse_tag("WestGermanic+eng_Latn")
    assert (t.family, t.code, t.script) == ("WestGermanic", "eng", "Latn")


def test_format_examples():
    assert format_tag(LanguageTag("Dravidian", "tel", "Telu")) == "Dravidian+tel_Telu"
    assert format_tag(LanguageTag("WestGermanic", "eng", "Latn")) == "WestGermanic+eng_Latn"


def test_parse_error_names_separator():
    with pytest.raises(TagParseError, match="_"):
        parse_tag("CentralIndic+hinDeva")


@pytest.mark.parametrize("bad", ["CentralIndichin_Deva", "", "CentralIndic+hin_deva", "CentralIndic+HIN_Deva", "CentralIndic+hi_Deva"])
def test_malformed_tags(bad):
    with pytest.raises(TagParseError):
        parse_tag(bad)


def test_unknown_family_rejected():
    with pytest.raises(TagParseError, match="family"):
        parse_tag("Klingon+hin_Deva")


def test_family_mismatch_rejected():
    with pytest.raises(TagParseError):
        parse_tag("Dravidian+hin_Deva")


def test_unregistered_pair_parses_flagged():
    t = parse_tag("CentralIndic+xyz_Deva")
    assert not t.registered
    assert format_tag(t) == "CentralIndic+xyz_Deva"


def test_registry_load_from_lines():
    reg = Registry.from_lines(["# v1", "1\tCentralIndic\thin\tDeva\tHindi"])
    assert len(reg) == 1
    assert reg.lookup("hin", "Deva").display_name == "Hindi"


def test_registry_rejects_duplicates():
    with pytest.raises(ValueError):
        Registry.from_lines(["1\tCentralIndic\thin\tDeva\tHindi", "2\tCentralIndic\thin\tDeva\tHindi again"])


def _name_oracle(text):
    # independent of the block table: the Unicode character name
    counts, total = {}, 0
    for ch in text:
        if unicodedata.category(ch)[0] not in "LM":
            continue
        total += 1
        name = unicodedata.name(ch)
        if name.startswith("DEVANAGARI"):
            counts["Deva"] = counts.get("Deva", 0) + 1
        elif name.startswith("LATIN"):
            counts["Latn"] = counts.get("Latn", 0) + 1
    return counts, total


def test_dominant_script_examples():
    assert dominant_script("नमस्ते दुनिया") == ("Deva", 1.0)
    script, share = dominant_script("hello दुनिया")
    counts, total = _name_oracle("hello दुनिया")
    assert script == "Deva"
    assert share == pytest.approx(counts["Deva"] / total) == pytest.approx(6 / 11)


def test_dominant_script_matches_block_oracle_on_mixed_text():
    text = "abc दुनिया తెలుగు ਪੰਜਾਬੀ xyz"
    blocks = [(0x41, 0x5A, "Latn"), (0x61, 0x7A, "Latn"), (0x900, 0x97F, "Deva"), (0xA00, 0xA7F, "Guru"), (0xC00, 0xC7F, "Telu")]
    counts, total = letter_script_counts(text, blocks)
    best = min(counts, key=lambda s: (-counts[s], s))
    assert dominant_script(text) == (best, counts[best] / total)


@pytest.mark.parametrize("text", ["1234 …!!", "   ", "12.5%"])
def test_dominant_script_indeterminate(text):
    with pytest.raises(IndeterminateScript):
        dominant_script(text)


def test_dominant_script_deterministic():
    assert dominant_script("ab दु") == dominant_script("ab दु")
