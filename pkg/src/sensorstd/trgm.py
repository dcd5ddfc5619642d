"""Transformation-rule generation and reusable transformation scripts.

Given one example pair (raw input document, standardized dataset), the deriver
locates every output leaf in the input and emits an ``inputPath -> outputPath``
JSONPath rule for it. Leaves that only match after timestamp normalization or a
unit conversion get a matching post-op. The resulting :class:`TransformationScript`
then standardizes structurally identical payloads without a model in the loop.

Script file format::

    {"rules": [{"inputPath": "$.sensor_data.Accelerometer.timestamp",
                "outputPath": "$[?(@.name == 'Accelerometer')].time"}, ...],
     "post_ops": [{"target": "$[?(@.name == 'Accelerometer')].time",
                   "op": "NormalizeTimestamp"}, ...]}
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import jsonpath
from .exceptions import UnmatchedLeaf, UnknownUnit, UnparseableTimestamp, NegativeTimestamp
from .jsonpath import Child, Filter, PathExpr, Root
from .schema import canonical_unit, coerce_units, compatible_units, normalize_timestamp
from .validation import ErrorCode, ValidationError, ValidationReport, validate_dataset

logger = logging.getLogger(__name__)

UNIT_REL_TOL = 1e-9
COMPARE_REL_TOL = 1e-9


# ---------------------------------------------------------------------------
# rules and scripts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransformationRule:
    inputPath: str
    outputPath: str

    def __post_init__(self):
        jsonpath.parse_path(self.inputPath)
        if jsonpath.parse_path(self.outputPath).has_wildcard:
            raise ValueError(f"outputPath must be wildcard-free: {self.outputPath}")

    def to_document(self) -> dict:
        return {"inputPath": self.inputPath, "outputPath": self.outputPath}


class PostOpKind(str, enum.Enum):
    NORMALIZE_TIMESTAMP = "NormalizeTimestamp"
    COERCE_UNIT = "CoerceUnit"


def _target_kind_field(target: str) -> tuple:
    segs = jsonpath.parse_path(target).segments
    kind = next((s.literal for s in segs if isinstance(s, Filter) and s.field == "name"), None)
    name = next((s.name for s in reversed(segs) if isinstance(s, Child)), None)
    return kind, name


@dataclass(frozen=True)
class PostOp:
    target: str
    op: PostOpKind
    unit: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "op", PostOpKind(self.op))
        if jsonpath.parse_path(self.target).has_wildcard:
            raise ValueError(f"post-op target must be wildcard-free: {self.target}")
        if self.op is PostOpKind.COERCE_UNIT:
            if not self.unit:
                raise ValueError("CoerceUnit needs a unit")
            kind, name = _target_kind_field(self.target)
            if kind is None or name is None:
                raise ValueError(f"cannot infer kind/field from {self.target}")

    def apply(self, value):
        if self.op is PostOpKind.NORMALIZE_TIMESTAMP:
            return normalize_timestamp(value)
        kind, name = _target_kind_field(self.target)
        return coerce_units(kind, name, value, self.unit)

    def to_document(self) -> dict:
        doc = {"target": self.target, "op": self.op.value}
        if self.unit:
            doc["unit"] = self.unit
        return doc


@dataclass(frozen=True)
class TransformationScript:
    rules: tuple = ()
    post_ops: tuple = ()

    def to_document(self) -> dict:
        return {"rules": [r.to_document() for r in self.rules],
                "post_ops": [p.to_document() for p in self.post_ops]}

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "TransformationScript":
        rules = tuple(TransformationRule(r["inputPath"], r["outputPath"]) for r in doc.get("rules", []))
        ops = tuple(PostOp(p["target"], p["op"], p.get("unit")) for p in doc.get("post_ops", []))
        return cls(rules, ops)

    @classmethod
    def load(cls, path) -> "TransformationScript":
        with open(path, encoding="utf-8") as fh:
            return cls.from_document(json.load(fh))

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_document(), fh, indent=2, ensure_ascii=False)
            fh.write("\n")


# ---------------------------------------------------------------------------
# matching
# ---------------------------------------------------------------------------


class MatchKind(str, enum.Enum):
    EXACT = "Exact"
    TIMESTAMP = "Timestamp"
    UNIT = "Unit"


@dataclass(frozen=True)
class Match:
    kind: MatchKind
    unit: str | None = None

    @property
    def rank(self) -> int:
        return [MatchKind.EXACT, MatchKind.TIMESTAMP, MatchKind.UNIT].index(self.kind)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _scalar_equal(a, b) -> bool:
    if _is_num(a) and _is_num(b):
        return a == b
    return type(a) is type(b) and a == b


def _all_unit_tables(kind, field_name):
    if kind is not None and field_name is not None:
        try:
            return [compatible_units(kind, field_name)]
        except KeyError:
            pass
    from .schema import UNIT_REGISTRY

    return list(UNIT_REGISTRY.values())


def value_match(input_leaf, output_leaf, kind=None, field_name=None) -> Match | None:
    """How ``input_leaf`` can produce ``output_leaf``: Exact > Timestamp > Unit, else None.

    ``kind``/``field_name`` (when known) restrict timestamp matching to ``time``
    fields and unit matching to the field's dimension.
    """
    if _scalar_equal(input_leaf, output_leaf):
        return Match(MatchKind.EXACT)
    if field_name in (None, "time") and isinstance(output_leaf, int) and not isinstance(output_leaf, bool):
        if isinstance(input_leaf, (int, float, str)) and not isinstance(input_leaf, bool):
            try:
                if normalize_timestamp(input_leaf) == output_leaf:
                    return Match(MatchKind.TIMESTAMP)
            except (UnparseableTimestamp, NegativeTimestamp):
                pass
    if field_name == "time" or not (_is_num(input_leaf) and _is_num(output_leaf)) or output_leaf == 0:
        return None
    for table in _all_unit_tables(kind, field_name):
        for unit, factor in table.items():
            if factor == 1.0:
                continue
            if abs(input_leaf * factor - output_leaf) <= UNIT_REL_TOL * abs(output_leaf):
                return Match(MatchKind.UNIT, unit)
    return None


# ---------------------------------------------------------------------------
# derivation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OutputLeaf:
    path: PathExpr
    value: Any
    kind: str
    field: str

    @property
    def text(self) -> str:
        return jsonpath.render_path(self.path)


def output_leaves(dataset: Sequence[Mapping[str, Any]]) -> list:
    """Scalar leaves of a standardized dataset, addressed with ``$[?(@.name == '<Kind>')]`` paths."""
    seen = set()
    leaves = []
    for rec in dataset:
        kind = rec["name"]
        if kind in seen:
            raise ValueError(f"example output has more than one {kind} record; rules address records by kind")
        seen.add(kind)
        prefix = PathExpr((Root(), Filter("name", kind)))
        body = {k: v for k, v in rec.items() if k != "name"}
        for path, value in jsonpath.leaf_paths(body, prefix):
            fname = next(s.name for s in reversed(path.segments) if isinstance(s, Child))
            leaves.append(OutputLeaf(path, value, kind, fname))
    return leaves


def _last_name(path: PathExpr) -> str:
    for seg in reversed(path.segments):
        if isinstance(seg, Child):
            return seg.name.lower()
    return ""


def _name_score(path: PathExpr, field_name: str) -> int:
    key = _last_name(path)
    f = field_name.lower()
    if key == f:
        return 0
    if key and (f in key or key in f):
        return 1
    return 2


def _kind_score(path: PathExpr, kind: str) -> int:
    k = kind.lower()
    for seg in path.segments:
        if isinstance(seg, Child):
            s = seg.name.lower()
            if s == k or (len(s) >= 3 and (k.startswith(s) or k in s)):
                return 0
    return 1


@dataclass
class Derivation:
    rules: list = field(default_factory=list)
    post_ops: list = field(default_factory=list)
    unmatched: list = field(default_factory=list)


def _derive(example_input, example_output, only: set | None = None) -> Derivation:
    inputs = [(p, v) for p, v in jsonpath.leaf_paths(example_input) if v is not None]
    out = Derivation()
    units: dict = {}
    zeros: list = []
    for leaf in output_leaves(example_output):
        if only is not None and leaf.text not in only:
            continue
        best = None
        for order, (ipath, ivalue) in enumerate(inputs):
            m = value_match(ivalue, leaf.value, leaf.kind, leaf.field)
            if m is None:
                continue
            key = (m.rank, _kind_score(ipath, leaf.kind), _name_score(ipath, leaf.field), order)
            if best is None or key < best[0]:
                best = (key, ipath, m)
        if best is None:
            out.unmatched.append(leaf.text)
            continue
        _, ipath, m = best
        out.rules.append(TransformationRule(jsonpath.render_path(ipath), leaf.text))
        if m.kind is MatchKind.TIMESTAMP:
            out.post_ops.append(PostOp(leaf.text, PostOpKind.NORMALIZE_TIMESTAMP))
        elif m.kind is MatchKind.UNIT:
            out.post_ops.append(PostOp(leaf.text, PostOpKind.COERCE_UNIT, m.unit))
            units.setdefault((leaf.kind, _canonical(leaf)), set()).add(m.unit)
        elif _is_num(leaf.value) and leaf.value == 0:
            zeros.append(leaf)
    # a zero reads the same in every unit; take the unit its sibling fields were sent in
    for leaf in zeros:
        found = units.get((leaf.kind, _canonical(leaf)), set())
        if len(found) == 1:
            out.post_ops.append(PostOp(leaf.text, PostOpKind.COERCE_UNIT, next(iter(found))))
    return out


def _canonical(leaf: OutputLeaf) -> str | None:
    try:
        return canonical_unit(leaf.kind, leaf.field)
    except (KeyError, ValueError):
        return None


def derive_script(example_input, example_output) -> TransformationScript:
    """Script reproducing ``example_output`` from ``example_input``; raises UnmatchedLeaf."""
    d = _derive(example_input, example_output)
    if d.unmatched:
        raise UnmatchedLeaf(d.unmatched, d.rules)
    return TransformationScript(tuple(d.rules), tuple(d.post_ops))


def derive_rules(example_input, example_output) -> list:
    """One rule per output leaf; raises :class:`UnmatchedLeaf` naming every leaf without a source."""
    return list(derive_script(example_input, example_output).rules)


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------


@dataclass
class ScriptResult:
    records: list
    missing: list = field(default_factory=list)  # rules whose inputPath matched nothing
    warnings: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.missing


def apply_script(script: TransformationScript, document: Any) -> ScriptResult:
    out: list = []
    result = ScriptResult(out)
    for rule in script.rules:
        values = jsonpath.get(document, rule.inputPath)
        if not values:
            result.missing.append(rule)
            continue
        if len(values) > 1:
            result.warnings.append(f"{rule.inputPath} matched {len(values)} values; using the first")
        out = jsonpath.set_value(out, rule.outputPath, values[0])
    for op in script.post_ops:
        current = jsonpath.get(out, op.target)
        if not current:
            continue
        try:
            out = jsonpath.set_value(out, op.target, op.apply(current[0]))
        except (UnparseableTimestamp, NegativeTimestamp, UnknownUnit, TypeError) as exc:
            result.warnings.append(f"post-op {op.op.value} on {op.target} failed: {exc}")
    result.records = out
    return result


def _values_equal(a, b) -> bool:
    if _is_num(a) and _is_num(b):
        if isinstance(a, int) and isinstance(b, int):
            return a == b
        return math.isclose(a, b, rel_tol=COMPARE_REL_TOL, abs_tol=0.0) or a == b
    return type(a) is type(b) and a == b


def compare_datasets(actual: Sequence, expected: Sequence) -> list:
    """Leaf-level differences between two datasets, as validation errors keyed by output path."""
    errors = []
    try:
        exp = {leaf.text: leaf.value for leaf in output_leaves(expected)}
        act = {leaf.text: leaf.value for leaf in output_leaves(actual)}
    except (KeyError, TypeError, ValueError) as exc:
        return [ValidationError("$", ErrorCode.WRONG_TYPE, f"not comparable: {exc}")]
    for path, value in exp.items():
        if path not in act:
            errors.append(ValidationError(path, ErrorCode.MISSING_FIELD, "leaf not produced by script"))
        elif not _values_equal(act[path], value):
            errors.append(ValidationError(path, ErrorCode.VALUE_MISMATCH, f"got {act[path]!r}, expected {value!r}"))
    for path in act:
        if path not in exp:
            errors.append(ValidationError(path, ErrorCode.EXTRA_FIELD, "leaf not in expected output"))
    if not errors:
        names_a = [r.get("name") for r in actual]
        names_e = [r.get("name") for r in expected]
        if names_a != names_e:
            errors.append(ValidationError("$", ErrorCode.VALUE_MISMATCH, f"record order {names_a} != {names_e}"))
    return errors


@dataclass(frozen=True)
class ScriptValidation:
    script: TransformationScript
    converged: bool
    iterations_used: int
    report: ValidationReport


def _merge(script: TransformationScript, d: Derivation, drop: set, order: list) -> TransformationScript:
    replaced = drop | {r.outputPath for r in d.rules}
    rules = [r for r in script.rules if r.outputPath not in replaced] + d.rules
    ops = [p for p in script.post_ops if p.target not in replaced] + d.post_ops
    rank = {path: i for i, path in enumerate(order)}
    rules.sort(key=lambda r: rank.get(r.outputPath, len(rank)))
    ops.sort(key=lambda p: rank.get(p.target, len(rank)))
    return TransformationScript(tuple(rules), tuple(ops))


def validate_script(script: TransformationScript, example_input, expected: Sequence,
                    max_iterations: int = 5) -> ScriptValidation:
    """Run ``script``, compare with ``expected``, re-derive mismatched leaves; repeat up to the cap."""
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    pre = validate_dataset(list(expected))
    if not pre.valid:
        raise ValueError(f"expected dataset does not validate: {pre.errors[0].path} {pre.errors[0].code}")
    order = [leaf.text for leaf in output_leaves(expected)]
    errors: list = []
    for iteration in range(1, max_iterations + 1):
        result = apply_script(script, example_input)
        errors = compare_datasets(result.records, expected)
        if not errors:
            return ScriptValidation(script, True, iteration, ValidationReport.from_errors([]))
        if iteration == max_iterations:
            break
        redo = {e.path for e in errors if e.code in (ErrorCode.MISSING_FIELD, ErrorCode.VALUE_MISMATCH)}
        extra = {e.path for e in errors if e.code is ErrorCode.EXTRA_FIELD}
        if "$" in redo:
            redo = set(order)
        d = _derive(example_input, expected, only=redo)
        script = _merge(script, d, extra, order)
    return ScriptValidation(script, False, max_iterations, ValidationReport.from_errors(errors))


# ---------------------------------------------------------------------------
# model-backed derivation
# ---------------------------------------------------------------------------

RULES_PROMPT = (
    "Derive JSONPath transformation rules. Each rule maps an inputPath in the input JSON "
    "to an outputPath in the standardized output array, using the form "
    "$[?(@.name == '<Kind>')].<field>. Reply with JSON only: "
    '{"rules": [{"inputPath": "...", "outputPath": "..."}], '
    '"post_ops": [{"target": "<outputPath>", "op": "NormalizeTimestamp" | "CoerceUnit", "unit": "..."}]}'
)


def llm_derive_script(backend, example_input, example_output) -> TransformationScript:
    """Ask a remote chat backend for the rules when structural matching fails.

    ``backend`` must expose ``chat_body(system, user)`` and ``complete(body)``
    (see :class:`sensorstd.standardizer.RemoteLLMBackend`).
    """
    from .schema import dumps_doc
    from .standardizer import strip_fences

    user = "Input:\n" + dumps_doc(example_input) + "\n\nOutput:\n" + dumps_doc(list(example_output))
    text = backend.complete(backend.chat_body(RULES_PROMPT, user))
    return TransformationScript.from_document(json.loads(strip_fences(text)))


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------


class RuleTransformer(BaseEstimator, TransformerMixin):
    """Learn a transformation script from example pairs, then apply it.

    ``fit(X, y)`` takes raw input documents ``X`` and their standardized datasets
    ``y``. The script is derived from the first pair and refined against every
    pair with :func:`validate_script`.

    Attributes
    ----------
    script_ : TransformationScript
    n_iter_ : list of int, loop iterations used per training pair
    converged_ : bool, whether every pair was reproduced exactly
    reports_ : list of ValidationReport
    """

    def __init__(self, max_iterations: int = 5, backend=None):
        self.max_iterations = max_iterations
        self.backend = backend

    def fit(self, X: Sequence, y: Sequence):
        if len(X) != len(y) or not len(X):
            raise ValueError("X and y must be non-empty and of equal length")
        try:
            script = derive_script(X[0], y[0])
        except UnmatchedLeaf:
            if self.backend is None:
                raise
            script = llm_derive_script(self.backend, X[0], y[0])
        self.n_iter_, self.reports_ = [], []
        for doc, target in zip(X, y):
            outcome = validate_script(script, doc, target, self.max_iterations)
            script = outcome.script
            self.n_iter_.append(outcome.iterations_used)
            self.reports_.append(outcome.report)
        self.script_ = script
        self.converged_ = all(r.valid for r in self.reports_)
        return self

    def transform(self, X: Iterable) -> list:
        check_is_fitted(self, "script_")
        return [apply_script(self.script_, doc).records for doc in X]
