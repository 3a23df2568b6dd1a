import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import chain_doc, coin_doc
from textplay.game_model import (
    GameParseError,
    GameSchemaError,
    classify_game,
    dump_game,
    game_from_dict,
    parse_game_file,
    validate_game,
)
from textplay.harness import bundled_games, load_game


def test_minimal_terminal_document():
    doc = {"meta": {"name": "tiny"}, "start": "only",
           "nodes": {"only": {"descriptions": [{"text": "Nothing happens."}], "terminal": True, "actions": []}}}
    g = parse_game_file(json.dumps(doc))
    assert len(g.nodes) == 1
    assert g.nodes["only"].actions == ()
    assert g.max_steps == 500


def test_two_node_chain_document(tmp_path):
    path = tmp_path / "two.json"
    path.write_text(json.dumps(chain_doc(steps=1, reward=10)))
    g = parse_game_file(path)
    assert len(g.nodes) == 2
    assert g.nodes["n0"].actions[0].outcomes[0].reward == 10


def test_parse_accepts_bytes():
    g = parse_game_file(json.dumps(chain_doc()).encode())
    assert g.name == "chain"


def test_missing_start_names_field():
    doc = chain_doc()
    del doc["start"]
    with pytest.raises(GameSchemaError) as exc:
        game_from_dict(doc)
    assert exc.value.field == "start"


def test_nested_missing_field_is_named():
    doc = chain_doc()
    del doc["nodes"]["n1"]["actions"][0]["outcomes"][0]["reward"]
    with pytest.raises(GameSchemaError) as exc:
        game_from_dict(doc)
    assert "reward" in exc.value.field and "n1" in exc.value.field


def test_wrong_type_rejected():
    doc = chain_doc()
    doc["nodes"]["n0"]["terminal"] = "no"
    with pytest.raises(GameSchemaError):
        game_from_dict(doc)


def test_malformed_json_reports_position():
    with pytest.raises(GameParseError) as exc:
        parse_game_file('{"meta": {"name": "x"},\n "start": }')
    assert exc.value.line == 2
    assert exc.value.column > 1


def test_omitted_probabilities_are_uniform():
    doc = chain_doc()
    doc["nodes"]["n0"]["descriptions"] = [{"text": "a"}, {"text": "b"}, {"text": "c", "prob": 0.5}]
    g = game_from_dict(doc)
    assert [d.prob for d in g.nodes["n0"].descriptions] == [0.25, 0.25, 0.5]


def test_valid_chain_has_empty_report(chain):
    report = validate_game(chain)
    assert len(report) == 0 and report.ok


def test_dangling_target():
    doc = chain_doc()
    doc["nodes"]["n1"]["actions"][0]["outcomes"][0]["target"] = "ghost"
    report = validate_game(game_from_dict(doc))
    dangling = [f for f in report.errors if f.kind == "dangling-target"]
    assert [f.detail for f in dangling] == ["ghost"]


def test_description_probability_sum():
    doc = chain_doc()
    doc["nodes"]["n0"]["descriptions"] = [{"text": "a", "prob": 0.5}, {"text": "b", "prob": 0.4}]
    report = validate_game(game_from_dict(doc))
    assert "probability-sum" in report.kinds()
    assert not report.ok


def test_probability_sum_tolerance():
    doc = chain_doc()
    doc["nodes"]["n0"]["descriptions"] = [{"text": "a", "prob": 0.1}, {"text": "b", "prob": 0.2},
                                          {"text": "c", "prob": 0.7 + 5e-10}]
    assert validate_game(game_from_dict(doc)).ok


def test_structural_errors_collected():
    doc = chain_doc()
    doc["nodes"]["n3"]["actions"] = [{"text": "again", "outcomes": [{"target": "n0", "reward": 0}]}]
    doc["nodes"]["n2"]["actions"] = []
    doc["nodes"]["orphan"] = {"descriptions": [{"text": "lost"}], "terminal": True, "actions": []}
    doc["nodes"]["n1"]["actions"][0]["outcomes"][0]["prob"] = 1.5
    report = validate_game(game_from_dict(doc))
    assert {"terminal-with-actions", "dead-end", "probability-range", "unreachable"} <= report.kinds()
    # n2 lost its action, so n3 is cut off along with the orphan
    assert {(f.kind, f.node) for f in report.warnings} == {("unreachable", "n3"), ("unreachable", "orphan")}


def test_unreachable_is_only_a_warning():
    doc = chain_doc()
    doc["nodes"]["orphan"] = {"descriptions": [{"text": "lost"}], "terminal": True, "actions": []}
    report = validate_game(game_from_dict(doc))
    assert report.ok and len(report.warnings) == 1


def test_missing_start_node_and_bad_reward():
    doc = chain_doc()
    doc["start"] = "nowhere"
    doc["nodes"]["n0"]["actions"][0]["outcomes"][0]["reward"] = float("nan")
    report = validate_game(game_from_dict(doc))
    assert {"missing-start", "non-finite-reward"} <= report.kinds()


def test_validation_is_pure(coin):
    assert validate_game(coin) == validate_game(coin)


def test_classify_chain(chain):
    assert classify_game(chain) == (True, True)


def test_classify_coin(coin):
    assert classify_game(coin) == (False, True)


def test_bundled_corpus_is_valid_and_classified():
    expected = {
        "lighthouse": (True, True),
        "expedition": (True, True),
        "expedition_twin": (True, True),
        "station": (True, True),
        "fork": (False, True),
        "marsh": (True, False),
    }
    assert set(bundled_games()) == set(expected)
    for name, cls in expected.items():
        g = load_game(name)
        assert classify_game(g) == cls, name
        assert len(g.nodes) <= 60
        assert validate_game(g).ok


# -- round trip -----------------------------------------------------------------

_text = st.text(alphabet="abcdefgh ,.!", min_size=1, max_size=20).filter(lambda s: s.strip())


@st.composite
def game_docs(draw):
    n = draw(st.integers(1, 6))
    ids = [f"s{i}" for i in range(n)]
    nodes = {}
    for node_id in ids:
        terminal = draw(st.booleans())
        k = draw(st.integers(1, 3))
        descriptions = [{"text": draw(_text), "prob": 1.0 / k} for _ in range(k)]
        actions = []
        if not terminal:
            for _ in range(draw(st.integers(1, 3))):
                m = draw(st.integers(1, 3))
                outcomes = [{"target": draw(st.sampled_from(ids)), "prob": 1.0 / m,
                             "reward": draw(st.floats(-100, 100, allow_nan=False))} for _ in range(m)]
                actions.append({"text": draw(_text), "outcomes": outcomes})
        nodes[node_id] = {"descriptions": descriptions, "terminal": terminal, "actions": actions}
    return {"meta": {"name": draw(_text), "max_steps": draw(st.integers(1, 1000))}, "start": ids[0], "nodes": nodes}


@given(game_docs())
@settings(max_examples=60, deadline=None)
def test_round_trip(doc):
    g = game_from_dict(doc)
    again = parse_game_file(dump_game(g))
    assert again == g
    assert dump_game(again) == dump_game(g)
