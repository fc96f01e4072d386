import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coevo.answers import (
    ANSWER_TOLERANCE,
    CanonicalAnswer,
    answers_equal,
    canonicalize,
    extract_answer,
)
from coevo.errors import InvalidArgumentError


def decode(spec):
    kind, value = spec["kind"], spec["value"]
    if kind == "rational":
        num, den = value.split("/")
        return CanonicalAnswer("rational", Fraction(int(num), int(den)))
    if kind == "integer":
        return CanonicalAnswer("integer", int(value))
    if kind == "decimal":
        return CanonicalAnswer("decimal", float(value))
    return CanonicalAnswer("symbolic", value)


class TestCanonicalize:
    def test_boxed_integer(self):
        assert canonicalize("\\boxed{42}") == CanonicalAnswer("integer", 42)

    def test_latex_fraction_lowest_terms(self):
        got = canonicalize("\\frac{3}{6}")
        assert got.kind == "rational"
        assert got.value == Fraction(1, 2)

    def test_fraction_decimal_equivalence(self):
        assert answers_equal(canonicalize("\\frac{1}{2}"), canonicalize("0.5"))

    def test_symbolic_fallback_idempotent(self):
        got = canonicalize("x^2+1")
        assert got == CanonicalAnswer("symbolic", "x^2+1")
        assert canonicalize(got.render()) == got

    def test_dollar_wrappers_stripped(self):
        assert canonicalize("$-3$") == CanonicalAnswer("integer", -3)

    def test_trailing_period_stripped(self):
        assert canonicalize("12.") == CanonicalAnswer("integer", 12)

    def test_unicode_minus(self):
        assert canonicalize("−5") == CanonicalAnswer("integer", -5)

    def test_thousands_separators(self):
        assert canonicalize("1,234,567") == CanonicalAnswer("integer", 1234567)

    def test_paren_wrapped_number_unwraps(self):
        assert canonicalize("(14)") == CanonicalAnswer("integer", 14)

    def test_interval_stays_symbolic(self):
        assert canonicalize("(0, 1)").kind == "symbolic"

    def test_negative_latex_fraction(self):
        assert canonicalize("-\\frac{5}{10}").value == Fraction(-1, 2)

    def test_fraction_collapsing_to_integer(self):
        assert canonicalize("\\frac{9}{3}") == CanonicalAnswer("integer", 3)

    def test_empty_raises(self):
        with pytest.raises(InvalidArgumentError):
            canonicalize("   ")

    @settings(max_examples=300)
    @given(st.text(min_size=1).filter(lambda s: s.strip()))
    def test_total_and_idempotent(self, text):
        first = canonicalize(text)
        again = canonicalize(first.render()) if first.render().strip() else first
        assert again == first

    @given(st.integers(min_value=-10**12, max_value=10**12))
    def test_integer_round_trip(self, n):
        assert canonicalize(str(n)) == CanonicalAnswer("integer", n)

    @given(st.fractions(min_value=-1000, max_value=1000))
    def test_fraction_round_trip(self, q):
        got = canonicalize(f"{q.numerator}/{q.denominator}")
        assert got.as_fraction() == q
        # stored in lowest terms with positive denominator
        if got.kind == "rational":
            assert got.value.denominator > 0
            assert Fraction(got.value.numerator, got.value.denominator) == got.value


class TestExtractAnswer:
    def test_corpus(self, fixtures_dir):
        records = [
            json.loads(line)
            for line in (fixtures_dir / "extraction_corpus.jsonl").read_text().splitlines()
            if line.strip()
        ]
        assert len(records) >= 60
        for record in records:
            result = extract_answer(record["input_text"])
            assert result.found == record["found"], record["input_text"]
            if not record["found"]:
                continue
            assert result.method == record["method"], record["input_text"]
            expected = decode(record["expected"])
            assert result.canonical.kind == expected.kind, record["input_text"]
            assert answers_equal(result.canonical, expected), record["input_text"]
            if "equals" in record:
                assert answers_equal(result.canonical, decode(record["equals"]))

    def test_boxed_beats_indicator(self):
        result = extract_answer("Therefore, the answer is 8. And \\boxed{9}.")
        assert result.method == "boxed"
        assert result.canonical.value == 9
        assert result.confidence == "high"

    def test_last_boxed_wins(self):
        assert extract_answer("\\boxed{1} ... \\boxed{2}").canonical.value == 2

    def test_last_indicator_wins(self):
        result = extract_answer("Thus 5. But actually, the answer is 6.")
        assert result.canonical.value == 6

    def test_indicator_confidence_low(self):
        assert extract_answer("Therefore, the answer is 3.").confidence == "low"

    def test_no_answer(self):
        result = extract_answer("I am not sure.")
        assert not result.found
        assert result.canonical is None
        assert result.method == "none"

    def test_non_string_input(self):
        assert not extract_answer(None).found

    @settings(max_examples=2000, deadline=None)
    @given(st.text(max_size=300))
    def test_never_aborts_on_arbitrary_text(self, text):
        result = extract_answer(text)
        if result.found:
            assert result.canonical is not None


class TestAnswersEqual:
    def test_integer_vs_decimal_promotion(self):
        assert answers_equal(CanonicalAnswer("integer", 42), CanonicalAnswer("decimal", 42.0))

    def test_rational_vs_decimal_within_tolerance(self):
        third = CanonicalAnswer("rational", Fraction(1, 3))
        assert answers_equal(third, CanonicalAnswer("decimal", 0.333333))
        assert not answers_equal(third, CanonicalAnswer("decimal", 0.3333))

    def test_exact_for_integer_rational(self):
        assert answers_equal(
            CanonicalAnswer("integer", 2), CanonicalAnswer("rational", Fraction(4, 2))
        )
        assert not answers_equal(
            CanonicalAnswer("rational", Fraction(1, 3)),
            CanonicalAnswer("rational", Fraction(333333, 1000000)),
        )

    def test_symbolic_no_algebra(self):
        assert not answers_equal(
            CanonicalAnswer("symbolic", "x+1"), CanonicalAnswer("symbolic", "1+x")
        )
        assert answers_equal(
            CanonicalAnswer("symbolic", "x+1"), CanonicalAnswer("symbolic", "x+1")
        )

    def test_symbolic_vs_numeric_false(self):
        assert not answers_equal(
            CanonicalAnswer("symbolic", "42"), CanonicalAnswer("integer", 42)
        )

    @given(
        st.sampled_from(["integer", "rational", "decimal", "symbolic"]),
        st.integers(min_value=-50, max_value=50),
    )
    def test_reflexive(self, kind, n):
        if kind == "integer":
            a = CanonicalAnswer("integer", n)
        elif kind == "rational":
            a = CanonicalAnswer("rational", Fraction(n, 7))
        elif kind == "decimal":
            a = CanonicalAnswer("decimal", n / 3.0)
        else:
            a = CanonicalAnswer("symbolic", f"expr{n}")
        assert answers_equal(a, a)

    @given(
        st.floats(min_value=-100, max_value=100, allow_nan=False),
        st.floats(min_value=-100, max_value=100, allow_nan=False),
    )
    def test_symmetric(self, x, y):
        a, b = CanonicalAnswer("decimal", x), CanonicalAnswer("decimal", y)
        assert answers_equal(a, b) == answers_equal(b, a)

    def test_tolerance_boundary(self):
        a = CanonicalAnswer("decimal", 0.0)
        assert answers_equal(a, CanonicalAnswer("decimal", ANSWER_TOLERANCE))
        assert not answers_equal(a, CanonicalAnswer("decimal", ANSWER_TOLERANCE * 2.0))
