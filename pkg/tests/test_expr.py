import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lockstep.expr import (
    ArityError,
    BinOp,
    BoolOp,
    Call,
    Compare,
    DomainError,
    MalformedAccessor,
    Neg,
    Not,
    Num,
    ParseError,
    TypeMismatch,
    UnboundVariable,
    Var,
    evaluate,
    free_vars,
    parse,
    to_source,
    translate_legacy,
)

FORWARD_SRC = (
    "((vehicle_speed_kmph_t5 / m_per_sec_to_km_per_h_factor) ** 2)"
    " / (2 * road_friction_mu * g) < perception_range_limit"
)
REAR_SRC = (
    "(vehicle_speed_kmph_t0 - vehicle_speed_kmph_t5)"
    " / (transition_window_seconds * m_per_sec_to_km_per_h_factor)"
    " <= max_deceleration_limit"
)


class TestParse:
    def test_precedence_mul_over_add(self):
        assert parse("1 + 2 * 3") == BinOp(
            "+", Num(1.0), BinOp("*", Num(2.0), Num(3.0))
        )
        assert evaluate(parse("1 + 2 * 3"), {}) == 7.0

    def test_forward_rule_parses_with_five_free_vars(self):
        ast = parse(FORWARD_SRC)
        assert isinstance(ast, Compare)
        assert free_vars(ast) == {
            "vehicle_speed_kmph_t5",
            "m_per_sec_to_km_per_h_factor",
            "road_friction_mu",
            "g",
            "perception_range_limit",
        }

    def test_min_arity(self):
        with pytest.raises(ArityError) as e:
            parse("min(1, 2, 3)")
        assert e.value.function == "min"
        assert e.value.got == 3
        assert e.value.want == 2

    def test_power_right_associative(self):
        assert evaluate(parse("2 ** 3 ** 2"), {}) == 512.0

    def test_unary_minus_binds_looser_than_power(self):
        assert evaluate(parse("-2 ** 2"), {}) == -4.0
        assert evaluate(parse("(-2) ** 2"), {}) == 4.0
        assert evaluate(parse("2 ** -1"), {}) == 0.5

    def test_parse_error_carries_offset_and_expected(self):
        with pytest.raises(ParseError) as e:
            parse("1 + ")
        assert e.value.offset == 4
        assert e.value.expected

    def test_chained_comparison_rejected(self):
        with pytest.raises(ParseError):
            parse("1 < 2 < 3")

    def test_unknown_function_rejected(self):
        with pytest.raises(ParseError):
            parse("log(10)")

    def test_boolean_precedence(self):
        # or < and < not < comparison
        ast = parse("not 1 > 2 and 3 < 4 or 5 > 6")
        assert evaluate(ast, {}) is True

    def test_scientific_notation(self):
        assert evaluate(parse("2.5e8 * 1e-8"), {}) == 2.5


class TestEvaluate:
    def test_forward_rule_false_at_84(self):
        facts = {
            "vehicle_speed_kmph_t5": 84.0,
            "m_per_sec_to_km_per_h_factor": 3.6,
            "road_friction_mu": 0.4,
            "g": 9.8,
            "perception_range_limit": 30.0,
        }
        assert evaluate(parse(FORWARD_SRC), facts) is False

    def test_deceleration_value(self):
        src = (
            "(vehicle_speed_kmph_t0 - vehicle_speed_kmph_t5)"
            " / (transition_window_seconds * m_per_sec_to_km_per_h_factor)"
        )
        facts = {
            "vehicle_speed_kmph_t0": 120.0,
            "vehicle_speed_kmph_t5": 55.0,
            "transition_window_seconds": 5.0,
            "m_per_sec_to_km_per_h_factor": 3.6,
        }
        assert evaluate(parse(src), facts) == pytest.approx(3.611111111111111, abs=1e-12)

    def test_identities(self):
        assert evaluate(parse("exp(0) + ln(1)"), {}) == 1.0

    def test_unbound_variable(self):
        with pytest.raises(UnboundVariable) as e:
            evaluate(parse("x + 1"), {})
        assert e.value.name == "x"

    def test_division_by_zero_is_domain_error(self):
        with pytest.raises(DomainError):
            evaluate(parse("1 / 0"), {})

    def test_ln_of_negative_is_domain_error(self):
        with pytest.raises(DomainError):
            evaluate(parse("ln(0 - 1)"), {})

    def test_sqrt_of_negative_is_domain_error(self):
        with pytest.raises(DomainError):
            evaluate(parse("sqrt(-4)"), {})

    def test_negative_base_non_integer_exponent(self):
        with pytest.raises(DomainError):
            evaluate(parse("(-8) ** 0.5"), {})
        assert evaluate(parse("(-8) ** 2"), {}) == 64.0

    def test_overflow_is_domain_error(self):
        with pytest.raises(DomainError):
            evaluate(parse("1e308 * 1e308"), {})

    def test_bool_arithmetic_is_type_mismatch(self):
        with pytest.raises(TypeMismatch):
            evaluate(parse("flag + 1"), {"flag": True})

    def test_bool_equality(self):
        assert evaluate(parse("flag == other"), {"flag": True, "other": True}) is True
        with pytest.raises(TypeMismatch):
            evaluate(parse("flag == 1"), {"flag": True})

    def test_numbers_compare_exact_ieee(self):
        assert evaluate(parse("x == 0.1"), {"x": 0.1}) is True
        assert evaluate(parse("x == y"), {"x": 0.1 + 0.2, "y": 0.3}) is False

    def test_min_max_abs(self):
        assert evaluate(parse("min(3, 2) + max(3, 2) + abs(-1)"), {}) == 6.0


class TestFreeVars:
    def test_dedupe(self):
        assert free_vars(parse("x + y * x")) == {"x", "y"}

    def test_rear_rule_vars(self):
        assert free_vars(parse(REAR_SRC)) == {
            "vehicle_speed_kmph_t0",
            "vehicle_speed_kmph_t5",
            "transition_window_seconds",
            "m_per_sec_to_km_per_h_factor",
            "max_deceleration_limit",
        }

    def test_no_vars(self):
        assert free_vars(parse("3.14 < 4")) == frozenset()


class TestTranslateLegacy:
    def test_single_quoted(self):
        assert translate_legacy("input.get('g') * 2") == "g * 2"

    def test_double_quoted(self):
        assert translate_legacy('input.get("mu") + input.get("g")') == "mu + g"

    def test_idempotent_on_plain_text(self):
        assert translate_legacy("g * 2") == "g * 2"

    def test_unquoted_is_malformed(self):
        with pytest.raises(MalformedAccessor):
            translate_legacy("input.get(x)")

    def test_malformed_offset(self):
        with pytest.raises(MalformedAccessor) as e:
            translate_legacy("1 + input.get(")
        assert e.value.offset == 4

    def test_idempotence_on_translated_output(self):
        src = "input.get('a') < input.get('b')"
        once = translate_legacy(src)
        assert translate_legacy(once) == once


# ---------------------------------------------------------------------------
# Property tests

_names = st.sampled_from(["x", "y", "z", "speed", "limit"])


def _numeric_exprs(depth: int):
    # Literals are non-negative: the grammar has no negative literals
    # (negation is a unary node), so this generates parser-image ASTs.
    if depth == 0:
        return st.one_of(
            st.floats(min_value=0, max_value=100, allow_nan=False).map(
                lambda v: Num(float(v))
            ),
            _names.map(Var),
        )
    sub = _numeric_exprs(depth - 1)
    return st.one_of(
        sub,
        st.builds(Neg, sub),
        st.builds(BinOp, st.sampled_from(["+", "-", "*", "/", "**"]), sub, sub),
        st.builds(Call, st.just("exp"), st.tuples(sub)),
        st.builds(Call, st.just("ln"), st.tuples(sub)),
        st.builds(Call, st.just("sqrt"), st.tuples(sub)),
        st.builds(Call, st.just("abs"), st.tuples(sub)),
        st.builds(Call, st.just("min"), st.tuples(sub, sub)),
        st.builds(Call, st.just("max"), st.tuples(sub, sub)),
    )


def _exprs(depth: int):
    num = _numeric_exprs(max(depth - 1, 0))
    cmp_ = st.builds(Compare, st.sampled_from(["<", "<=", ">", ">=", "==", "!="]), num, num)
    if depth <= 1:
        return st.one_of(num, cmp_)
    boolean = st.one_of(
        cmp_,
        st.builds(Not, cmp_),
        st.builds(BoolOp, st.sampled_from(["and", "or"]), cmp_, cmp_),
    )
    return st.one_of(num, boolean)


_fact_values = st.floats(min_value=-50, max_value=50, allow_nan=False)


@given(expr=_exprs(8), facts=st.fixed_dictionaries({n: _fact_values for n in ["x", "y", "z", "speed", "limit"]}))
@settings(max_examples=300, deadline=None)
def test_totality_random_asts(expr, facts):
    """evaluate() either returns a value or raises a typed error; never hangs."""
    try:
        out = evaluate(expr, facts)
        assert isinstance(out, (float, bool))
        if isinstance(out, float):
            assert math.isfinite(out)
    except (DomainError, TypeMismatch, UnboundVariable):
        pass


@given(expr=_exprs(8), facts=st.fixed_dictionaries({n: _fact_values for n in ["x", "y", "z", "speed", "limit"]}))
@settings(max_examples=200, deadline=None)
def test_determinism_random_asts(expr, facts):
    def run():
        try:
            return ("ok", evaluate(expr, facts))
        except (DomainError, TypeMismatch, UnboundVariable) as e:
            return ("err", type(e).__name__)

    first, second = run(), run()
    assert first == second
    if first[0] == "ok" and isinstance(first[1], float):
        # bit-identical: compare raw representations, not approximate values
        assert repr(first[1]) == repr(second[1])


@given(expr=_exprs(8))
@settings(max_examples=300, deadline=None)
def test_round_trip_random_asts(expr):
    assert parse(to_source(expr)) == expr


@given(expr=_exprs(8))
@settings(max_examples=200, deadline=None)
def test_round_trip_normalized_source(expr):
    # parse(print(parse(s))) == parse(s) for any source s the printer emits
    s = to_source(expr)
    assert parse(to_source(parse(s))) == parse(s)


@given(text=st.text(min_size=0, max_size=80))
@settings(max_examples=200, deadline=None)
def test_translate_legacy_idempotent(text):
    try:
        once = translate_legacy(text)
    except MalformedAccessor:
        return
    assert translate_legacy(once) == once
