import io
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from cerf import serialize
from cerf.algebra import Event, Predicate
from cerf.automaton import Sra, Transition, run_accepts
from cerf.cli import MalformedInput, main, read_events
from cerf.compiler import complete, determinize
from cerf.forecast import Pst, SymbolMap
from cerf.pattern import accepts, parse

from conftest import E1_TEXT, E3_TEXT, make_table1, make_two_state_dfa

TABLE1_JSONL = "\n".join(
    json.dumps(row)
    for row in (
        {"type": "T", "id": 1, "value": 22},
        {"type": "T", "id": 1, "value": 24},
        {"type": "T", "id": 2, "value": 32},
        {"type": "H", "id": 1, "value": 70},
        {"type": "H", "id": 1, "value": 68},
        {"type": "T", "id": 2, "value": 33},
    )
) + "\n"

TABLE1_CSV = (
    "type,id,value\n"
    "T,1,22\n"
    "T,1,24\n"
    "T,2,32\n"
    "H,1,70\n"
    "H,1,68\n"
    "T,2,33\n"
)


def _indexes(stdout):
    return [json.loads(line)["index"] for line in stdout.splitlines() if line]


class TestSerializeAutomaton:
    def test_round_trip_preserves_language_and_shape(self):
        _, e3 = parse(E3_TEXT)
        d = determinize(e3)
        doc = serialize.automaton_to_doc(d)
        back, _library = serialize.automaton_from_doc(doc)
        assert back.stats() == d.stats()
        assert back.start == d.start
        assert back.deterministic and back.window == d.window
        stream = make_table1()
        for n in range(4):
            assert run_accepts(back, stream[:n]) == run_accepts(d, stream[:n])

    def test_doc_shape(self, two_state_dfa):
        doc = serialize.automaton_to_doc(two_state_dfa)
        assert doc["format"] == "sra" and doc["version"] == 1
        assert doc["states"] == ["1", "2"]
        assert all(set(t) == {"source", "target", "condition", "writes"}
                   for t in doc["transitions"])
        json.dumps(doc)

    def test_unsourced_predicate_rejected(self):
        from cerf.algebra import CURRENT, Atom

        bare = Predicate("NoSrc", 1, lambda e: True)
        a = Sra(
            states=frozenset({"q"}),
            start="q",
            finals=frozenset({"q"}),
            registers=frozenset(),
            transitions=(Transition("q", "q", Atom(bare, (CURRENT,))),),
        )
        with pytest.raises(ValueError):
            serialize.automaton_to_doc(a)

    def test_header_validation(self, two_state_dfa):
        doc = serialize.automaton_to_doc(two_state_dfa)
        wrong_format = dict(doc, format="something-else")
        with pytest.raises(ValueError):
            serialize.automaton_from_doc(wrong_format)
        wrong_version = dict(doc, version=99)
        with pytest.raises(ValueError):
            serialize.automaton_from_doc(wrong_version)

    def test_dump_and_load(self, tmp_path, two_state_dfa):
        doc = serialize.automaton_to_doc(two_state_dfa)
        target = tmp_path / "a.json"
        serialize.dump(doc, str(target))
        text = target.read_text()
        assert text.endswith("\n") and json.loads(text) == doc
        assert serialize.load(str(target)) == doc
        buf = io.StringIO()
        serialize.dump(doc, buf)
        assert json.loads(buf.getvalue()) == doc


class TestSerializeModel:
    def _model(self):
        _, e3 = parse(E3_TEXT)
        d = complete(determinize(e3))
        smap = SymbolMap.for_automaton(d)
        from cerf.forecast import symbolize

        symbols = symbolize(d, make_table1() * 50, smap)
        pst = Pst.learn(symbols, max_order=2, alphabet=smap.symbols)
        return d, smap, pst

    def test_pst_floats_bit_exact(self):
        _, _, pst = self._model()
        doc = serialize.pst_to_doc(pst)
        back = serialize.pst_from_doc(doc)
        assert back.max_order == pst.max_order
        assert back.alphabet == pst.alphabet
        assert back.nodes == pst.nodes

    def test_model_round_trip(self):
        d, smap, pst = self._model()
        doc = serialize.model_to_doc(d, smap, pst)
        assert doc["format"] == "cerf-model"
        d2, smap2, pst2, _library = serialize.model_from_doc(doc)
        assert d2.stats() == d.stats()
        assert [s for _, s in smap2.items()] == [s for _, s in smap.items()]
        assert pst2.nodes == pst.nodes

    def test_symbol_map_entry_order(self, two_state_dfa, dfa_symbol_map):
        entries = serialize.symbol_map_to_entries(dfa_symbol_map)
        assert [e["symbol"] for e in entries] == ["a", "b"]
        lib_doc = serialize.automaton_to_doc(two_state_dfa)
        _, library = serialize.automaton_from_doc(lib_doc)
        back = serialize.symbol_map_from_entries(entries, library, [])
        assert back.symbols == dfa_symbol_map.symbols


class TestReadEvents:
    def test_jsonl_happy_path(self):
        fp = io.StringIO('{"a": 1}\n\n{"a": 2, "b": "x"}\n')
        events = list(read_events(fp))
        assert [e.get("a") for e in events] == [1, 2]
        assert events[1].get("b") == "x"

    def test_jsonl_skips_bad_lines_with_diagnostics(self):
        fp = io.StringIO('{"a": 1}\nnot json\n{"a": []}\n{"a": 2}\n')
        seen = []
        events = list(read_events(fp, on_error=seen.append))
        assert [e.get("a") for e in events] == [1, 2]
        assert len(seen) == 2 and "line 2" in seen[0] and "line 3" in seen[1]

    def test_jsonl_strict_raises(self):
        fp = io.StringIO('{"a": 1}\nnot json\n')
        with pytest.raises(MalformedInput):
            list(read_events(fp, strict=True))

    def test_booleans_and_non_objects_rejected(self):
        for line in ('{"a": true}', "[1, 2]", "{}", '"scalar"'):
            with pytest.raises(MalformedInput):
                list(read_events(io.StringIO(line + "\n"), strict=True))

    def test_csv_coercion(self):
        fp = io.StringIO("name,count,ratio\nalpha,3,0.5\n")
        (event,) = list(read_events(fp, fmt="csv"))
        assert event.get("name") == "alpha"
        assert event.get("count") == 3 and isinstance(event.get("count"), int)
        assert event.get("ratio") == 0.5 and isinstance(event.get("ratio"), float)

    def test_csv_row_length_mismatch_skipped(self):
        fp = io.StringIO("a,b\n1,2\n1\n3,4\n")
        seen = []
        events = list(read_events(fp, fmt="csv", on_error=seen.append))
        assert [e.get("a") for e in events] == [1, 3]
        assert len(seen) == 1 and "line 3" in seen[0]

    def test_csv_bad_header_fatal(self):
        fp = io.StringIO("a,a\n1,2\n")
        with pytest.raises(MalformedInput):
            list(read_events(fp, fmt="csv"))

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            list(read_events(io.StringIO(""), fmt="xml"))


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    Path("e1.pat").write_text(E1_TEXT)
    Path("e3.pat").write_text(E3_TEXT)
    Path("events.jsonl").write_text(TABLE1_JSONL)
    Path("events.csv").write_text(TABLE1_CSV)
    return tmp_path


class TestCompileCommand:
    def test_default_stage_writes_document(self, runner, workdir):
        result = runner.invoke(main, ["compile", "e1.pat"])
        assert result.exit_code == 0, result.stderr
        doc = json.loads(result.stdout)
        assert doc["format"] == "sra"
        assert all(t["condition"] is not None for t in doc["transitions"])

    def test_dsra_stage_pinned_shape(self, runner, workdir):
        result = runner.invoke(main, ["compile", "e3.pat", "--stage", "dsra"])
        assert result.exit_code == 0, result.stderr
        doc = json.loads(result.stdout)
        assert doc["deterministic"] is True and doc["window"] == 3
        assert len(doc["states"]) == 11 and len(doc["transitions"]) == 16

    def test_complement_stage_pinned_shape(self, runner, workdir):
        result = runner.invoke(main, ["compile", "e3.pat", "--stage", "complement"])
        doc = json.loads(result.stdout)
        assert len(doc["states"]) == 12 and len(doc["transitions"]) == 28
        assert len(doc["finals"]) == 7

    def test_window_flag_overrides(self, runner, workdir):
        kept = runner.invoke(main, ["compile", "e3.pat", "--stage", "nsra-unrolled"])
        assert json.loads(kept.stdout)["window"] == 3
        assert len(json.loads(kept.stdout)["states"]) == 8
        result = runner.invoke(
            main, ["compile", "e3.pat", "--stage", "nsra-unrolled", "--window", "2"]
        )
        assert result.exit_code == 0, result.stderr
        doc = json.loads(result.stdout)
        assert doc["window"] == 2 and len(doc["states"]) == 3

    def test_unrolled_without_window_fails(self, runner, workdir):
        result = runner.invoke(main, ["compile", "e1.pat", "--stage", "nsra-unrolled"])
        assert result.exit_code == 3
        assert "error:" in result.stderr

    def test_syntax_error_exit_code(self, runner, workdir):
        Path("bad.pat").write_text("TRUE ;;\n")
        result = runner.invoke(main, ["compile", "bad.pat"])
        assert result.exit_code == 2 and "error:" in result.stderr

    def test_unknown_predicate_exit_code(self, runner, workdir):
        Path("bad.pat").write_text("Missing(~)\n")
        result = runner.invoke(main, ["compile", "bad.pat"])
        assert result.exit_code == 2 and "Missing" in result.stderr

    def test_unknown_register_exit_code(self, runner, workdir):
        Path("bad.pat").write_text(
            'pred EqualId(x, y): x.id == y.id\n\n(TRUE -> r1) ; EqualId(~, r2)\n'
        )
        result = runner.invoke(main, ["compile", "bad.pat"])
        assert result.exit_code == 2 and "r2" in result.stderr

    def test_out_dot_and_stats(self, runner, workdir):
        result = runner.invoke(
            main,
            ["compile", "e3.pat", "--stage", "dsra",
             "--out", "a.json", "--dot", "a.dot", "--stats"],
        )
        assert result.exit_code == 0
        assert result.stdout == ""
        assert json.loads(Path("a.json").read_text())["deterministic"] is True
        assert Path("a.dot").read_text().startswith("digraph")
        assert "states=11" in result.stderr


class TestRecognizeCommand:
    def test_streaming_matches(self, runner, workdir):
        result = runner.invoke(main, ["recognize", "e1.pat", "--input", "events.jsonl"])
        assert result.exit_code == 0, result.stderr
        assert _indexes(result.stdout) == [4, 5]

    def test_windowed_matches(self, runner, workdir):
        result = runner.invoke(main, ["recognize", "e3.pat", "--input", "events.jsonl"])
        assert result.exit_code == 0, result.stderr
        assert _indexes(result.stdout) == [4]

    def test_window_override_widens(self, runner, workdir):
        result = runner.invoke(
            main, ["recognize", "e3.pat", "--input", "events.jsonl", "--window", "4"]
        )
        assert _indexes(result.stdout) == [4, 5]

    def test_csv_input(self, runner, workdir):
        result = runner.invoke(
            main, ["recognize", "e1.pat", "--input", "events.csv", "--format", "csv"]
        )
        assert _indexes(result.stdout) == [4, 5]

    def test_stdin_input(self, runner, workdir):
        result = runner.invoke(main, ["recognize", "e1.pat"], input=TABLE1_JSONL)
        assert _indexes(result.stdout) == [4, 5]

    def test_malformed_line_diagnostic_vs_strict(self, runner, workdir):
        lines = TABLE1_JSONL.splitlines()
        lines.insert(2, "not json")
        Path("dirty.jsonl").write_text("\n".join(lines) + "\n")
        tolerant = runner.invoke(main, ["recognize", "e1.pat", "--input", "dirty.jsonl"])
        assert tolerant.exit_code == 0
        assert _indexes(tolerant.stdout) == [4, 5]
        assert "line 3" in tolerant.stderr
        strict = runner.invoke(
            main, ["recognize", "e1.pat", "--input", "dirty.jsonl", "--strict"]
        )
        assert strict.exit_code == 2

    def test_report_empty_match(self, runner, workdir):
        Path("any.pat").write_text("TRUE*\n")
        result = runner.invoke(
            main,
            ["recognize", "any.pat", "--input", "events.jsonl", "--report-empty-match"],
        )
        assert _indexes(result.stdout) == [0, 1, 2, 3, 4, 5, 6]
        plain = runner.invoke(main, ["recognize", "any.pat", "--input", "events.jsonl"])
        assert _indexes(plain.stdout) == [1, 2, 3, 4, 5, 6]

    def test_cap_exceeded(self, runner, workdir):
        result = runner.invoke(
            main, ["recognize", "e1.pat", "--input", "events.jsonl", "--cap", "1"]
        )
        assert result.exit_code == 4


class TestPipelineCommands:
    def test_determinize_pattern(self, runner, workdir):
        result = runner.invoke(main, ["determinize", "e3.pat"])
        assert result.exit_code == 0, result.stderr
        assert json.loads(result.stdout)["deterministic"] is True

    def test_determinize_needs_window(self, runner, workdir):
        result = runner.invoke(main, ["determinize", "e1.pat"])
        assert result.exit_code == 3

    def test_determinize_saved_automaton(self, runner, workdir):
        save = runner.invoke(
            main, ["compile", "e3.pat", "--stage", "nsra-unrolled", "--out", "u.json"]
        )
        assert save.exit_code == 0
        result = runner.invoke(main, ["determinize", "--automaton", "u.json"])
        assert result.exit_code == 0, result.stderr
        doc = json.loads(result.stdout)
        assert doc["deterministic"] is True and len(doc["states"]) == 11

    def test_pattern_and_automaton_are_exclusive(self, runner, workdir):
        result = runner.invoke(main, ["determinize", "e3.pat", "--automaton", "u.json"])
        assert result.exit_code == 2

    def test_complement_pattern(self, runner, workdir):
        result = runner.invoke(main, ["complement", "e3.pat"])
        doc = json.loads(result.stdout)
        assert len(doc["finals"]) == 7 and len(doc["states"]) == 12

    def test_complement_saved_dsra(self, runner, workdir):
        runner.invoke(main, ["compile", "e3.pat", "--stage", "dsra", "--out", "d.json"])
        result = runner.invoke(main, ["complement", "--automaton", "d.json"])
        assert result.exit_code == 0, result.stderr
        assert len(json.loads(result.stdout)["finals"]) == 7

    def test_to_srem_round_trip(self, runner, workdir):
        result = runner.invoke(main, ["to-srem", "e1.pat"])
        assert result.exit_code == 0, result.stderr
        library, back = parse(result.stdout)
        _, original = parse(E1_TEXT)
        stream = make_table1()
        for n in range(7):
            assert accepts(back, stream[:n]) == accepts(original, stream[:n])

    def test_to_srem_saved_automaton(self, runner, workdir):
        runner.invoke(main, ["compile", "e1.pat", "--out", "a.json"])
        result = runner.invoke(main, ["to-srem", "--automaton", "a.json"])
        assert result.exit_code == 0, result.stderr
        _, back = parse(result.stdout)
        _, original = parse(E1_TEXT)
        stream = make_table1()
        for n in range(7):
            assert accepts(back, stream[:n]) == accepts(original, stream[:n])


class TestLearnAndForecast:
    def _train_file(self, copies=200):
        rows = TABLE1_JSONL * copies
        Path("train.jsonl").write_text(rows)

    def test_learn_writes_model(self, runner, workdir):
        self._train_file()
        result = runner.invoke(
            main,
            ["learn", "e3.pat", "--train", "train.jsonl", "--max-order", "2",
             "--out", "model.json"],
        )
        assert result.exit_code == 0, result.stderr
        assert "trained on 1200 symbols" in result.stderr
        doc = json.loads(Path("model.json").read_text())
        assert doc["format"] == "cerf-model"
        for node in doc["pst"]["nodes"]:
            total = sum(p for _, p in node["distribution"].items())
            assert abs(total - 1.0) < 1e-9

    def test_model_reload_is_bit_exact(self, runner, workdir):
        self._train_file()
        runner.invoke(
            main,
            ["learn", "e3.pat", "--train", "train.jsonl", "--max-order", "2",
             "--out", "model.json"],
        )
        doc = serialize.load("model.json")
        serialize.dump(doc, "again.json")
        assert Path("model.json").read_bytes() == Path("again.json").read_bytes()

    def test_learn_insufficient_data(self, runner, workdir):
        self._train_file(copies=1)
        result = runner.invoke(
            main,
            ["learn", "e3.pat", "--train", "train.jsonl", "--max-order", "50",
             "--out", "model.json"],
        )
        assert result.exit_code == 5

    def test_forecast_stream(self, runner, workdir):
        self._train_file()
        runner.invoke(
            main,
            ["learn", "e3.pat", "--train", "train.jsonl", "--max-order", "2",
             "--out", "model.json"],
        )
        result = runner.invoke(
            main,
            ["forecast", "--model", "model.json", "--input", "events.jsonl",
             "--emit-dist", "--horizon", "8"],
        )
        assert result.exit_code == 0, result.stderr
        records = [json.loads(line) for line in result.stdout.splitlines()]
        assert [r["index"] for r in records] == [1, 2, 3, 4, 5, 6]
        for r in records:
            assert isinstance(r["classification"], bool)
            assert 1 <= r["regression"] <= 8
            assert abs(sum(r["dist"]) + r["residual"] - 1.0) < 1e-9
        replay = runner.invoke(
            main,
            ["forecast", "--model", "model.json", "--input", "events.jsonl",
             "--emit-dist", "--horizon", "8"],
        )
        assert replay.stdout == result.stdout

    def test_forecast_threshold_flags(self, runner, workdir):
        self._train_file()
        runner.invoke(
            main,
            ["learn", "e3.pat", "--train", "train.jsonl", "--max-order", "2",
             "--out", "model.json"],
        )
        low = runner.invoke(
            main,
            ["forecast", "--model", "model.json", "--input", "events.jsonl",
             "--classify-window", "8", "--threshold", "0.0"],
        )
        records = [json.loads(line) for line in low.stdout.splitlines()]
        assert all(r["classification"] for r in records)


class TestOracleCommand:
    def test_membership(self, runner, workdir):
        full = runner.invoke(main, ["oracle", "e1.pat", "--input", "events.jsonl"])
        assert json.loads(full.stdout) == {"accepts": False}
        Path("first5.jsonl").write_text(
            "".join(TABLE1_JSONL.splitlines(keepends=True)[:5])
        )
        first5 = runner.invoke(main, ["oracle", "e1.pat", "--input", "first5.jsonl"])
        assert json.loads(first5.stdout) == {"accepts": True}
        Path("first3.jsonl").write_text(
            "".join(TABLE1_JSONL.splitlines(keepends=True)[:3])
        )
        first3 = runner.invoke(main, ["oracle", "e1.pat", "--input", "first3.jsonl"])
        assert json.loads(first3.stdout) == {"accepts": False}

    def test_enumerate_counts_and_payloads(self, runner, workdir):
        Path("universe.jsonl").write_text(
            '{"type": "T", "id": 1, "value": 22}\n{"type": "H", "id": 1, "value": 70}\n'
        )
        result = runner.invoke(
            main,
            ["oracle", "e1.pat", "--enumerate", "--universe", "universe.jsonl",
             "--max-len", "2"],
        )
        assert result.exit_code == 0, result.stderr
        records = [json.loads(line) for line in result.stdout.splitlines()]
        assert len(records) == 7
        assert records[0]["events"] == [] and records[0]["accepts"] is False
        accepted = [r["events"] for r in records if r["accepts"]]
        assert accepted == [
            [{"type": "T", "id": 1, "value": 22}, {"type": "H", "id": 1, "value": 70}]
        ]

    def test_enumerate_sampling_is_seeded(self, runner, workdir):
        Path("universe.jsonl").write_text(
            '{"type": "T", "id": 1, "value": 22}\n{"type": "H", "id": 1, "value": 70}\n'
        )
        args = ["oracle", "e1.pat", "--enumerate", "--universe", "universe.jsonl",
                "--max-len", "3", "--sample", "5", "--seed", "9"]
        first = runner.invoke(main, args)
        second = runner.invoke(main, args)
        assert first.stdout == second.stdout
        assert len(first.stdout.splitlines()) == 5

    def test_enumerate_needs_universe(self, runner, workdir):
        result = runner.invoke(main, ["oracle", "e1.pat", "--enumerate"])
        assert result.exit_code == 2

    def test_membership_needs_input(self, runner, workdir):
        result = runner.invoke(main, ["oracle", "e1.pat"])
        assert result.exit_code == 2


class TestEntryPoint:
    def test_version(self, runner):
        result = runner.invoke(main, ["--version"])
        assert result.exit_code == 0 and "0.1.0" in result.stdout

    def test_help_lists_commands(self, runner):
        result = runner.invoke(main, ["--help"])
        for name in ("compile", "recognize", "determinize", "complement",
                     "to-srem", "learn", "forecast", "oracle"):
            assert name in result.stdout
