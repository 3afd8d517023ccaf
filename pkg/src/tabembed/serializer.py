"""Record-to-text serialization and prompt assembly.

Four output formats: narrative (template-driven), json, html, markdown.
Narrative templates are plain text files where `[value:<feature-name>]`
marks a value slot and `[[ ... ]]` marks a span that is dropped entirely
when any feature it references has no observations.  Features with no
observations never appear in any format.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import ConfigError, EmptyQuestion, ParseFailure, UnknownTemplate
from .schema import FeatureDef, FeatureSchema
from .tabular import Record

FORMATS = ("narrative", "json", "html", "markdown")

GENERAL_DIAGNOSIS_QUESTION = "What are the diagnoses for this patient?"

SYSTEM_PROMPTS = {
    1: (
        "As a healthcare provider, please assess the patient's condition "
        "provided below and outline the likely causes or diagnoses for their "
        "clinical worsening. List only the diagnoses and keep your response "
        "brief."
    ),
    2: (
        "You are an AI with medical expertise. Create an embedding for the "
        "probable problems or diagnoses that are causing clinical "
        "deterioration, based on the patient's condition detailed below, to "
        "aid in training a diagnostic prediction machine learning "
        "classifier. Be brief in your description."
    ),
    3: (
        "As a medical expert, please examine the patient's condition by "
        "first identifying any abnormal values. Next, critically analyze "
        "these values to assess their impact, and clearly state your final "
        "diagnosis regarding what might be causing the clinical "
        "deterioration. Keep your summary brief."
    ),
    4: (
        "You are a medical doctor. Based on the patient's condition, "
        "determine the likelihood that diagnosis {target} is causing their "
        "clinical deterioration. Be aware that diagnosis {target} occurs in "
        "{prevalence}% of similar cases."
    ),
}

_SPAN_RE = re.compile(r"\[\[(.*?)\]\]", re.DOTALL)
_SLOT_RE = re.compile(r"\[value:([A-Za-z0-9_]+)\]")
_NUMBER_PAT = r"-?\d+(?:\.\d+)?"
_LIST_PAT = rf"{_NUMBER_PAT}(?:, {_NUMBER_PAT})*"


def system_prompt(persona: int, target: str = "", prevalence_percent=None) -> str:
    """Return one of the four shipped system instructions.

    Persona 4 carries target/prevalence placeholders; the prevalence is a
    percentage in [0, 100].
    """
    if persona not in SYSTEM_PROMPTS:
        raise ConfigError(f"unknown system prompt persona {persona}")
    text = SYSTEM_PROMPTS[persona]
    if persona == 4:
        if prevalence_percent is None:
            raise ConfigError("persona 4 requires target and prevalence_percent")
        if not 0 <= prevalence_percent <= 100:
            raise ConfigError("prevalence_percent must lie in [0, 100]")
        text = text.format(
            target=target, prevalence=format_number(prevalence_percent, 2)
        )
    return text


@dataclass(frozen=True)
class SerializationConfig:
    format: str = "narrative"
    template_id: str = "clinical_narrative"
    decimal_places: int = 2

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}")
        if not 0 <= self.decimal_places <= 6:
            raise ConfigError("decimal_places must lie in [0, 6]")


@dataclass(frozen=True)
class FewShotExample:
    serialized_input: str
    answer: str
    cot_explanation: Optional[str] = None

    def __post_init__(self):
        if not self.answer:
            raise ConfigError("few-shot answer must be nonempty")


@dataclass(frozen=True)
class QuestionType:
    kind: str = "general"  # "general" | "binary"
    target: Optional[str] = None
    prevalence_percent: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("general", "binary"):
            raise ConfigError(f"unknown question kind {self.kind!r}")
        if self.kind == "binary" and not self.target:
            raise ConfigError("binary question type requires a target name")
        if self.prevalence_percent is not None and not (
            0 <= self.prevalence_percent <= 100
        ):
            raise ConfigError("prevalence_percent must lie in [0, 100]")


@dataclass(frozen=True)
class PromptConfig:
    question: str = GENERAL_DIAGNOSIS_QUESTION
    question_type: QuestionType = field(default_factory=QuestionType)
    system_instruction: Optional[str] = None
    fewshot: tuple = ()
    chat_template: str = "plain"  # "plain" | "inst-wrapped"

    def __post_init__(self):
        object.__setattr__(self, "fewshot", tuple(self.fewshot))
        if self.chat_template not in ("plain", "inst-wrapped"):
            raise ConfigError(f"unknown chat_template {self.chat_template!r}")


@dataclass(frozen=True)
class PromptBundle:
    rendered_text: str
    format: str
    token_estimate: int
    source_record_id: str
    question_kind: str = "general"
    target: Optional[str] = None

    def __post_init__(self):
        if not self.rendered_text:
            raise ConfigError("rendered_text must be nonempty")
        if self.token_estimate <= 0:
            raise ConfigError("token_estimate must be positive")


# --------------------------------------------------------------------------
# value rendering


def format_number(value: float, decimal_places: int) -> str:
    """Fixed-point rendering with trailing zeros trimmed; exact to reparse."""
    s = f"{float(value):.{decimal_places}f}"
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    if s in ("-0", ""):
        s = "0"
    return s


def _unique_stable(values):
    seen = set()
    out = []
    for v in values:
        if v not in seen:
            seen.add(v)
            out.append(v)
    return out


def _feature_values(record: Record, name: str):
    """Observed values for a feature: scalar, category string, or series list."""
    if name in record.static_values:
        return record.static_values[name]
    if name in record.series_values:
        return _unique_stable([v for _, v in record.series_values[name]])
    return None


def _render_value(value, decimal_places: int) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, list):
        return ", ".join(format_number(v, decimal_places) for v in value)
    return format_number(value, decimal_places)


def _rounded(value, decimal_places: int):
    if isinstance(value, str):
        return value
    if isinstance(value, list):
        return [float(format_number(v, decimal_places)) for v in value]
    return float(format_number(value, decimal_places))


# --------------------------------------------------------------------------
# narrative templates


def load_template(template_id: str, schema: FeatureSchema) -> str:
    if template_id in ("clinical_narrative", "icu_series_narrative"):
        ref = resources.files("tabembed") / "templates" / f"{template_id}.txt"
        return ref.read_text(encoding="utf-8").rstrip("\n")
    if template_id == "auto":
        return build_auto_template(schema, series_style=False)
    if template_id == "auto_series":
        return build_auto_template(schema, series_style=True)
    path = Path(template_id)
    if template_id.endswith(".txt") and path.is_file():
        return path.read_text(encoding="utf-8").rstrip("\n")
    raise UnknownTemplate(f"unknown template {template_id!r}")


def build_auto_template(schema: FeatureSchema, series_style: bool) -> str:
    """Generate a narrative template covering every schema feature."""
    if series_style:
        head = (
            "Hospitalized patient with lab and vital signs available: "
            "in the past 24 hours,"
        )
        spans = [
            f"[[ the observed {f.display_name} values are [value:{f.name}],]]"
            for f in schema
        ]
        return head + "".join(spans)
    head = "Hospitalized patient getting worse has labs and vitals values of"
    spans = []
    for f in schema:
        unit = f" {f.unit}" if f.unit else ""
        spans.append(f"[[ {f.display_name} [value:{f.name}]{unit},]]")
    return head + "".join(spans)


def _split_template(template_text: str):
    """Yield (is_span, text) chunks in template order.

    Slots are masked with sentinels first so a slot's closing `]` cannot
    be mistaken for part of a span's `]]` terminator.
    """
    masked = _SLOT_RE.sub(lambda m: f"\x00{m.group(1)}\x01", template_text)

    def unmask(s: str) -> str:
        return re.sub("\x00([A-Za-z0-9_]+)\x01", r"[value:\1]", s)

    pos = 0
    for m in _SPAN_RE.finditer(masked):
        if m.start() > pos:
            yield False, unmask(masked[pos : m.start()])
        yield True, unmask(m.group(1))
        pos = m.end()
    if pos < len(masked):
        yield False, unmask(masked[pos:])


def _fill_slots(text: str, record: Record, decimal_places: int) -> str:
    def repl(m):
        value = _feature_values(record, m.group(1))
        return "" if value is None else _render_value(value, decimal_places)

    return _SLOT_RE.sub(repl, text)


def _render_narrative(template_text: str, record: Record, decimal_places: int) -> str:
    parts = []
    for is_span, chunk in _split_template(template_text):
        if is_span:
            names = _SLOT_RE.findall(chunk)
            if any(_feature_values(record, n) is None for n in names):
                continue
        parts.append(_fill_slots(chunk, record, decimal_places))
    text = re.sub(r"[ \t]+", " ", "".join(parts)).strip()
    if text.endswith(","):
        text = text[:-1] + "."
    return text


# --------------------------------------------------------------------------
# serialize


def serialize(record: Record, schema: FeatureSchema, cfg: SerializationConfig) -> str:
    """Render one record as text in the configured format.

    Output is deterministic: identical (record, cfg) yields identical
    bytes.  Unobserved features are omitted in every format.
    """
    dp = cfg.decimal_places
    if cfg.format == "narrative":
        template = load_template(cfg.template_id, schema)
        return _render_narrative(template, record, dp)

    items = []
    for fdef in schema:
        value = _feature_values(record, fdef.name)
        if value is None:
            continue
        items.append((fdef, value))

    if cfg.format == "json":
        obj = {fdef.name: _rounded(v, dp) for fdef, v in items}
        return json.dumps(obj, indent=2)

    if cfg.format == "html":
        lines = ["<table>", "<tr><th>feature</th><th>value</th></tr>"]
        for fdef, v in items:
            lines.append(
                f"<tr><td>{fdef.display_name}</td>"
                f"<td>{_render_value(v, dp)}</td></tr>"
            )
        lines.append("</table>")
        return "\n".join(lines)

    # markdown pipe table
    lines = ["| feature | value |", "| --- | --- |"]
    for fdef, v in items:
        lines.append(f"| {fdef.display_name} | {_render_value(v, dp)} |")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# round-trip recovery (test oracle for the serializers)


def _parse_number_list(cell: str):
    cell = cell.strip()
    if ", " in cell:
        return [float(x) for x in cell.split(", ")]
    return float(cell)


def _narrative_patterns(template_text: str, schema: FeatureSchema):
    """Build a per-feature regex from each template span."""
    patterns = {}
    for is_span, chunk in _split_template(template_text):
        if not is_span:
            continue
        names = _SLOT_RE.findall(chunk)
        numeric = [n for n in names if n in schema.names and schema.get(n).is_numeric]
        if not numeric:
            continue
        pat = ""
        pos = 0
        for m in _SLOT_RE.finditer(chunk):
            pat += re.escape(chunk[pos : m.start()]).replace(r"\ ", r"\s+")
            if m.group(1) in numeric:
                pat += f"(?P<{m.group(1)}>{_LIST_PAT})"
            else:
                pat += r"[^,.]+?"
            pos = m.end()
        tail = chunk[pos:]
        pat += re.escape(tail).replace(r"\ ", r"\s+")
        if tail.endswith(","):
            pat = pat[: -len(re.escape(","))] + r"[,.]"
        patterns[tuple(numeric)] = re.compile(pat)
    return patterns


def roundtrip_check(
    serialized: str, cfg: SerializationConfig, schema: FeatureSchema
) -> dict:
    """Recover every numeric value emitted by `serialize`.

    Returns feature name -> float or list of floats.  Works on text that
    merely contains the serialized block (a full prompt), so the
    informative mock backend shares this grammar.  Categorical features
    are not recovered.
    """
    numeric = {f.name for f in schema if f.is_numeric}
    display_to_name = {f.display_name: f.name for f in schema}
    out: dict = {}

    if cfg.format == "narrative":
        template = load_template(cfg.template_id, schema)
        for names, pattern in _narrative_patterns(template, schema).items():
            m = pattern.search(serialized)
            if not m:
                continue
            for n in names:
                out[n] = _parse_number_list(m.group(n))
        return out

    if cfg.format == "json":
        start = serialized.find("{")
        if start < 0:
            raise ParseFailure("no JSON object found")
        depth = 0
        end = None
        for i, ch in enumerate(serialized[start:], start):
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    end = i + 1
                    break
        if end is None:
            raise ParseFailure("unbalanced JSON object")
        try:
            obj = json.loads(serialized[start:end])
        except json.JSONDecodeError as e:
            raise ParseFailure(f"bad JSON payload: {e}") from None
        for key, value in obj.items():
            if key in numeric and not isinstance(value, str):
                out[key] = value
        return out

    if cfg.format == "html":
        rows = re.findall(
            r"<tr><td>(.*?)</td><td>(.*?)</td></tr>", serialized, re.DOTALL
        )
        for display, cell in rows:
            name = display_to_name.get(display.strip())
            if name in numeric:
                try:
                    out[name] = _parse_number_list(cell)
                except ValueError:
                    raise ParseFailure(
                        f"unparseable html cell for {name!r}: {cell!r}"
                    ) from None
        return out

    # markdown
    for line in serialized.splitlines():
        m = re.match(r"^\|\s*(.+?)\s*\|\s*(.+?)\s*\|$", line)
        if not m or m.group(1) in ("feature", "---"):
            continue
        name = display_to_name.get(m.group(1))
        if name in numeric:
            try:
                out[name] = _parse_number_list(m.group(2))
            except ValueError:
                raise ParseFailure(
                    f"unparseable markdown cell for {name!r}"
                ) from None
    return out


# --------------------------------------------------------------------------
# prompt assembly


def _question_text(pcfg: PromptConfig) -> str:
    qt = pcfg.question_type
    if qt.kind == "binary":
        text = f"Does this patient have {qt.target}?"
        if qt.prevalence_percent is not None:
            text += (
                f" Be aware that {qt.target} occurs in "
                f"{format_number(qt.prevalence_percent, 2)}% of similar cases."
            )
        return text
    if not pcfg.question:
        raise EmptyQuestion("general question text must be nonempty")
    return pcfg.question


def assemble_prompt(
    serialized: str,
    pcfg: PromptConfig,
    *,
    format: str = "narrative",
    source_record_id: str = "",
) -> PromptBundle:
    """Assemble the full model input.

    Segment order: system instruction, few-shot examples (input, CoT
    explanation when present, answer), serialized record, question.
    """
    if not serialized:
        raise ConfigError("serialized record must be nonempty")
    question = _question_text(pcfg)

    segments = []
    if pcfg.system_instruction:
        segments.append(pcfg.system_instruction)
    for ex in pcfg.fewshot:
        block = [ex.serialized_input]
        if ex.cot_explanation:
            block.append(ex.cot_explanation)
        block.append(ex.answer)
        segments.append("\n".join(block))
    segments.append(serialized)
    segments.append(question)

    body = "\n\n".join(segments)
    if pcfg.chat_template == "inst-wrapped":
        text = f"[INST] {body} [/INST]"
    else:
        text = body

    return PromptBundle(
        rendered_text=text,
        format=format,
        token_estimate=max(1, math.ceil(len(text.encode("utf-8")) / 4)),
        source_record_id=source_record_id,
        question_kind=pcfg.question_type.kind,
        target=pcfg.question_type.target,
    )
