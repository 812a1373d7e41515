import pytest

from cerf.algebra import (
    CURRENT,
    EMPTY_VALUATION,
    TRUE,
    And,
    Atom,
    EvalCounters,
    Event,
    Not,
    Register,
    Valuation,
    comparison_predicate,
)
from cerf.automaton import (
    Configuration,
    ConfigurationCapExceeded,
    DeterministicRunner,
    NoTransition,
    NotDeterministic,
    Sra,
    StreamEngine,
    Transition,
    UnverifiableDeterminism,
    is_deterministic,
    run_accepts,
    successors,
    to_dot,
)
from cerf import compiler
from cerf.pattern import parse, to_streaming

from conftest import E1_TEXT, make_table1, make_t_then_h_automaton
from gen import UNIVERSE, universe_library

R1 = Register("r1")


def _atom(name, *args):
    return Atom(universe_library().get(name), args)


class TestSraValidation:
    def test_endpoints_must_be_states(self):
        with pytest.raises(ValueError):
            Sra(
                states=frozenset({"a"}),
                start="a",
                finals=frozenset(),
                registers=frozenset(),
                transitions=(Transition("a", "b", TRUE),),
            )

    def test_start_must_be_a_state(self):
        with pytest.raises(ValueError):
            Sra(
                states=frozenset({"a"}),
                start="x",
                finals=frozenset(),
                registers=frozenset(),
                transitions=(),
            )

    def test_condition_reads_must_be_declared(self):
        with pytest.raises(ValueError):
            Sra(
                states=frozenset({"a"}),
                start="a",
                finals=frozenset(),
                registers=frozenset(),
                transitions=(Transition("a", "a", _atom("SameNum", CURRENT, R1)),),
            )

    def test_writes_must_be_declared(self):
        with pytest.raises(ValueError):
            Sra(
                states=frozenset({"a"}),
                start="a",
                finals=frozenset(),
                registers=frozenset(),
                transitions=(Transition("a", "a", TRUE, frozenset({R1})),),
            )

    def test_epsilon_cannot_write(self):
        with pytest.raises(ValueError):
            Transition("a", "b", None, frozenset({R1}))

    def test_stats_and_flags(self, t_then_h):
        st = t_then_h.stats()
        assert st["states"] == 3 and st["transitions"] == 4
        assert not t_then_h.has_epsilon
        assert t_then_h.is_single_write
        assert not t_then_h.is_acyclic()


class TestRuns:
    def test_table1_prefix_acceptance(self, t_then_h, table1):
        assert not run_accepts(t_then_h, table1[:3])
        assert run_accepts(t_then_h, table1[:4])
        assert run_accepts(t_then_h, table1[:5])
        assert not run_accepts(t_then_h, table1)

    def test_empty_string_needs_final_start(self, t_then_h):
        assert not run_accepts(t_then_h, [])
        accepting = Sra(
            states=frozenset({"s"}),
            start="s",
            finals=frozenset({"s"}),
            registers=frozenset(),
            transitions=(),
        )
        assert run_accepts(accepting, [])

    def test_successors_on_epsilon_and_event_moves(self):
        a = Sra(
            states=frozenset({"p", "q", "r"}),
            start="p",
            finals=frozenset({"r"}),
            registers=frozenset({R1}),
            transitions=(
                Transition("p", "q", None),
                Transition("q", "r", TRUE, frozenset({R1})),
            ),
        )
        c0 = Configuration(1, "p", EMPTY_VALUATION)
        eps = successors(a, c0)
        assert [c.state for c in eps] == ["q"]
        assert eps[0].index == 1
        ev = Event.of(x=1)
        stepped = successors(a, eps[0], ev)
        assert [c.state for c in stepped] == ["r"]
        assert stepped[0].index == 2
        assert stepped[0].valuation.get(R1) == ev

    def test_cap_exceeded(self):
        # every event spawns a fresh binding that never dies
        a = Sra(
            states=frozenset({"s", "t"}),
            start="s",
            finals=frozenset(),
            registers=frozenset({R1}),
            transitions=(
                Transition("s", "s", TRUE),
                Transition("s", "t", TRUE, frozenset({R1})),
                Transition("t", "t", TRUE),
            ),
        )
        distinct = [Event.of(n=i) for i in range(10)]
        with pytest.raises(ConfigurationCapExceeded):
            run_accepts(a, distinct, cap=4)


class TestStreamEngine:
    def test_rejects_epsilon_automata(self):
        a = Sra(
            states=frozenset({"a", "b"}),
            start="a",
            finals=frozenset({"b"}),
            registers=frozenset(),
            transitions=(Transition("a", "b", None),),
        )
        with pytest.raises(ValueError):
            StreamEngine(a)

    def test_match_indexes_on_table1(self, table1):
        _, e1 = parse(E1_TEXT)
        a = compiler.eliminate_epsilon(compiler.compile_expr(to_streaming(e1)))
        engine = StreamEngine(a)
        hits = [i + 1 for i, ev in enumerate(table1) if engine.step(ev)]
        assert hits == [4, 5]
        assert engine.consumed == len(table1)

    def test_matched_at_start(self):
        lib = universe_library()
        _, e = parse("KindA(~)*", lib)
        a = compiler.eliminate_epsilon(compiler.compile_expr(to_streaming(e)))
        engine = StreamEngine(a)
        assert engine.matched_at_start
        # and a non-nullable pattern does not match the empty prefix
        _, e2 = parse("KindA(~)", lib)
        a2 = compiler.eliminate_epsilon(compiler.compile_expr(to_streaming(e2)))
        assert not StreamEngine(a2).matched_at_start

    def test_cap_applies_per_step(self, table1):
        _, e1 = parse(E1_TEXT)
        a = compiler.eliminate_epsilon(compiler.compile_expr(to_streaming(e1)))
        engine = StreamEngine(a, cap=2)
        with pytest.raises(ConfigurationCapExceeded):
            for ev in table1:
                engine.step(ev)

    def test_live_configurations_exposed(self, table1):
        _, e1 = parse(E1_TEXT)
        a = compiler.eliminate_epsilon(compiler.compile_expr(to_streaming(e1)))
        engine = StreamEngine(a)
        engine.step(table1[0])
        assert len(engine.live_configurations) >= 2


class TestDeterminism:
    def test_fig_style_automaton_is_nondeterministic(self, t_then_h, table1):
        v = EMPTY_VALUATION.set(R1, table1[0])
        assert (
            is_deterministic(t_then_h, universe=table1, valuations=[v, EMPTY_VALUATION])
            is False
        )

    def test_epsilon_means_nondeterministic(self):
        a = Sra(
            states=frozenset({"a", "b"}),
            start="a",
            finals=frozenset({"b"}),
            registers=frozenset(),
            transitions=(Transition("a", "b", None),),
        )
        assert is_deterministic(a) is False

    def test_syntactic_minterm_family_verifies(self):
        phi = _atom("KindA", CURRENT)
        a = Sra(
            states=frozenset({"s", "t"}),
            start="s",
            finals=frozenset({"t"}),
            registers=frozenset(),
            transitions=(
                Transition("s", "t", phi),
                Transition("s", "s", Not(phi)),
            ),
        )
        assert is_deterministic(a) is True

    def test_needs_universe_when_syntax_is_inconclusive(self, two_state_dfa):
        with pytest.raises(UnverifiableDeterminism):
            is_deterministic(two_state_dfa)
        events = [Event.of(sym="a"), Event.of(sym="b")]
        assert is_deterministic(two_state_dfa, universe=events) is True

    def test_register_conditions_need_valuations(self, t_then_h, table1):
        with pytest.raises(UnverifiableDeterminism):
            is_deterministic(t_then_h, universe=table1)


class TestDeterministicRunner:
    def _runner(self):
        _, e3 = parse(
            'pred KindA(x): x.kind == "A"\n'
            'pred SameNum(x, y): x.num == y.num\n'
            "\n"
            "(TRUE* ; (KindA(~) -> r1) ; TRUE* ; SameNum(~, r1)) within 3"
        )
        d = compiler.complete(compiler.determinize(e3))
        return DeterministicRunner(d), d

    def test_requires_deterministic_flag(self, t_then_h):
        with pytest.raises(NotDeterministic):
            DeterministicRunner(t_then_h)

    def test_single_transition_per_event(self):
        runner, d = self._runner()
        for ev in UNIVERSE:
            taken = runner.step(ev)
            assert taken.source in d.states and taken.target == runner.state
        assert runner.consumed == len(UNIVERSE)

    def test_incomplete_raises_no_transition(self):
        phi = _atom("KindA", CURRENT)
        a = Sra(
            states=frozenset({"s", "t"}),
            start="s",
            finals=frozenset({"t"}),
            registers=frozenset(),
            transitions=(Transition("s", "t", phi),),
            deterministic=True,
        )
        runner = DeterministicRunner(a)
        with pytest.raises(NoTransition):
            runner.step(Event.of(kind="B", num=1))

    def test_counters_accumulate(self):
        counters = EvalCounters()
        runner, d = self._runner()
        runner.counters = counters
        runner.step(UNIVERSE[0])
        assert counters.condition_evals >= 1
        assert counters.register_reads <= len(d.registers)


class TestDot:
    def test_dot_output_shape(self, t_then_h):
        dot = to_dot(t_then_h)
        assert dot.startswith("digraph")
        assert dot.count("doublecircle") == 1
        assert "q_s" in dot and "q_f" in dot
        # one edge line per transition plus the start arrow
        assert dot.count(" -> ") == len(t_then_h.transitions) + 1
        assert "↓ r1" in dot

    def test_epsilon_label(self):
        a = Sra(
            states=frozenset({"a", "b"}),
            start="a",
            finals=frozenset({"b"}),
            registers=frozenset(),
            transitions=(Transition("a", "b", None),),
        )
        assert "ε" in to_dot(a)
