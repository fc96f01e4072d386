"""Rule-based final-answer extraction and canonicalization for math solutions.

Extraction scans LaTeX boxed expressions first and falls back to indicator
phrases ("Therefore", "Thus", "The answer is"); within the winning method the
last match in document order is taken, since solutions often restate
intermediate results before the final one. Both extraction and
canonicalization are total: arbitrary input yields a result, never an abort.

Canonical forms are exact where possible (integers, fractions in lowest
terms) and fall back to a whitespace-normalized symbolic string. Numeric
comparisons involving a decimal use an absolute tolerance of 1e-6.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .errors import InvalidArgumentError

ANSWER_TOLERANCE = 1e-6

# Longest indicator listed first so "the answer is" wins its own span.
_INDICATOR_RE = re.compile(r"(?i)\b(?:the\s+(?:final\s+)?answer\s+is|therefore|thus)\b[\s,:]*")
_BOXED_RE = re.compile(r"\\boxed\s*\{")
_MATH_SEGMENT_RE = re.compile(r"\$([^$\n]+)\$")
_FRAC_TOKEN_RE = re.compile(r"[+-]?\\[dtc]?frac\s*\{[^{}]*\}\s*\{[^{}]*\}")
_NUMERIC_TOKEN_RE = re.compile(r"[+-]?(?:\d+\.\d+|\.\d+|\d[\d,]*)(?:\s*/\s*\d+)?")
_VAR_EQ_PREFIX_RE = re.compile(r"^[A-Za-z](?:_\{?\w+\}?)?\s*=\s*")

_INT_RE = re.compile(r"^[+-]?\d+$")
_GROUPED_NUMBER_RE = re.compile(r"^[+-]?\d{1,3}(?:,\d{3})+(?:\.\d+)?$")
_DECIMAL_RE = re.compile(r"^[+-]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?$")
_FRAC_RE = re.compile(r"^([+-]?)\\[dtc]?frac\s*\{\s*([+-]?\d+)\s*\}\s*\{\s*([+-]?\d+)\s*\}$")
_FRAC_COMPACT_RE = re.compile(r"^([+-]?)\\[dtc]?frac\s*(\d)\s*(\d)$")
_SLASH_FRAC_RE = re.compile(r"^([+-]?\d+)\s*/\s*([+-]?\d+)$")

# Expression-looking spans after an indicator phrase must contain one of these
# to count as an answer; plain prose ("we proceed to the next step") does not.
_EXPRESSION_HINT_RE = re.compile(r"[0-9\\^+*/=]")


@dataclass(frozen=True)
class CanonicalAnswer:
    kind: str  # "integer" | "rational" | "decimal" | "symbolic"
    value: int | Fraction | float | str

    def render(self) -> str:
        if self.kind == "integer":
            return str(self.value)
        if self.kind == "rational":
            return f"{self.value.numerator}/{self.value.denominator}"
        if self.kind == "decimal":
            return repr(float(self.value))
        return str(self.value)

    @property
    def numeric(self) -> bool:
        return self.kind in ("integer", "rational", "decimal")

    def as_fraction(self) -> Fraction:
        if self.kind == "integer":
            return Fraction(self.value)
        if self.kind == "rational":
            return self.value
        raise InvalidArgumentError(f"{self.kind} answer has no exact fraction form")

    def as_float(self) -> float:
        if self.kind == "integer":
            return float(self.value)
        if self.kind == "rational":
            return self.value.numerator / self.value.denominator
        if self.kind == "decimal":
            return float(self.value)
        raise InvalidArgumentError("symbolic answer has no numeric value")


@dataclass(frozen=True)
class ExtractionResult:
    found: bool
    raw_span: str = ""
    canonical: CanonicalAnswer | None = None
    method: str = "none"  # "boxed" | "indicator_phrase" | "none"
    confidence: str = "low"  # "high" | "low"


_NOT_FOUND = ExtractionResult(found=False)


def _strip_wrappers(text: str) -> str:
    s = text.replace("\u2212", "-").replace("\u2013", "-").strip()
    for token in ("\\left", "\\right", "\\displaystyle", "\\,", "\\;", "\\!", "\\ "):
        s = s.replace(token, "")
    previous = None
    while s != previous:
        previous = s
        s = s.strip()
        if len(s) >= 2 and s.startswith("$") and s.endswith("$"):
            s = s[1:-1]
            continue
        for opener, closer in (("\\(", "\\)"), ("\\[", "\\]")):
            if s.startswith(opener) and s.endswith(closer):
                s = s[len(opener) : -len(closer)]
                break
        for macro in ("\\boxed", "\\text", "\\mathrm", "\\textbf", "\\mathbf"):
            if s.startswith(macro):
                rest = s[len(macro) :].lstrip()
                if rest.startswith("{") and rest.endswith("}") and _balanced(rest):
                    s = rest[1:-1]
                    break
        if len(s) >= 2 and s.startswith("{") and s.endswith("}") and _balanced(s):
            s = s[1:-1]
            continue
        s = s.rstrip(".,;")
    return s.strip()


def _balanced(span: str) -> bool:
    """True when span is a single {...} group closing exactly at the end."""
    depth = 0
    for idx, ch in enumerate(span):
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return idx == len(span) - 1
            if depth < 0:
                return False
    return False


def _parse_numeric(candidate: str) -> CanonicalAnswer | None:
    if _GROUPED_NUMBER_RE.match(candidate):
        candidate = candidate.replace(",", "")
    if _INT_RE.match(candidate):
        return CanonicalAnswer("integer", int(candidate))

    match = _FRAC_RE.match(candidate) or _FRAC_COMPACT_RE.match(candidate)
    if match:
        sign, num, den = match.groups()
        if int(den) != 0:
            value = Fraction(int(num), int(den))
            if sign == "-":
                value = -value
            if value.denominator == 1:
                return CanonicalAnswer("integer", int(value))
            return CanonicalAnswer("rational", value)

    match = _SLASH_FRAC_RE.match(candidate)
    if match and int(match.group(2)) != 0:
        value = Fraction(int(match.group(1)), int(match.group(2)))
        if value.denominator == 1:
            return CanonicalAnswer("integer", int(value))
        return CanonicalAnswer("rational", value)

    if _DECIMAL_RE.match(candidate):
        return CanonicalAnswer("decimal", float(candidate))
    return None


def canonicalize(answer_text: str) -> CanonicalAnswer:
    """Parse an answer string into its canonical form.

    Integers, fractions (inline and LaTeX), and decimals become exact or
    float values; everything else becomes a whitespace-normalized symbolic
    string. Raises on empty input only.
    """
    if not isinstance(answer_text, str) or not answer_text.strip():
        raise InvalidArgumentError("answer text is empty")
    s = _strip_wrappers(answer_text)
    if not s:
        return CanonicalAnswer("symbolic", "")
    compact = re.sub(r"\s+", " ", s).strip()

    parsed = _parse_numeric(compact.replace(" ", ""))
    if parsed is not None:
        return parsed
    # A purely numeric value wrapped in one pair of parentheses unwraps;
    # tuple/interval-like content does not parse and keeps its parens.
    if compact.startswith("(") and compact.endswith(")"):
        inner = compact[1:-1].strip().replace(" ", "")
        if inner:
            parsed = _parse_numeric(inner)
            if parsed is not None:
                return parsed
    return CanonicalAnswer("symbolic", compact)


def _boxed_contents(text: str) -> list[str]:
    spans: list[str] = []
    for match in _BOXED_RE.finditer(text):
        depth = 1
        start = match.end()
        for idx in range(start, len(text)):
            ch = text[idx]
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    spans.append(text[start:idx])
                    break
    return spans


def _candidate_from_tail(tail: str) -> str | None:
    line = tail.split("\n", 1)[0].replace("−", "-").strip()
    if not line:
        return None
    segments = _MATH_SEGMENT_RE.findall(line)
    if segments:
        inner = segments[0].strip()
        inner = _VAR_EQ_PREFIX_RE.sub("", inner)
        return inner or None
    frac = _FRAC_TOKEN_RE.search(line)
    numeric = _NUMERIC_TOKEN_RE.search(line)
    if frac and (not numeric or frac.start() <= numeric.start()):
        return frac.group(0)
    # A single expression-looking token ("x^2+1", "-1/2") is the answer
    # itself; digits inside it must not be mistaken for a standalone number.
    span = line.rstrip(".,;:!?").strip()
    if span and " " not in span and len(span) <= 40 and _EXPRESSION_HINT_RE.search(span):
        return span
    if numeric:
        return numeric.group(0)
    if 0 < len(span) <= 40 and _EXPRESSION_HINT_RE.search(span):
        return span
    return None


def extract_answer(solution_text: str) -> ExtractionResult:
    """Scan a solution for its final answer; never raises on arbitrary input."""
    if not isinstance(solution_text, str) or not solution_text:
        return _NOT_FOUND

    boxed = [span for span in _boxed_contents(solution_text) if span.strip()]
    if boxed:
        raw = boxed[-1]
        return ExtractionResult(
            found=True,
            raw_span=raw,
            canonical=canonicalize(raw),
            method="boxed",
            confidence="high",
        )

    best: str | None = None
    for match in _INDICATOR_RE.finditer(solution_text):
        candidate = _candidate_from_tail(solution_text[match.end() :])
        if candidate:
            best = candidate
    if best is not None:
        return ExtractionResult(
            found=True,
            raw_span=best,
            canonical=canonicalize(best),
            method="indicator_phrase",
            confidence="low",
        )
    return _NOT_FOUND


def answers_equal(a: CanonicalAnswer, b: CanonicalAnswer) -> bool:
    """Exact comparison for integer/rational pairs, 1e-6 absolute tolerance as
    soon as a decimal is involved, text equality for symbolic forms.

    Symbolic answers are compared by normalized text only; no algebraic
    rewriting is attempted, so "x+1" and "1+x" differ.
    """
    if a.kind == "symbolic" or b.kind == "symbolic":
        if a.kind != b.kind:
            return False
        return a.value == b.value
    if a.kind != "decimal" and b.kind != "decimal":
        return a.as_fraction() == b.as_fraction()
    return abs(a.as_float() - b.as_float()) <= ANSWER_TOLERANCE
