"""Combined-query filters: a conjunction list plus a disjunction list.

A record matches iff every ``all`` predicate holds AND (``any`` is empty OR
at least one ``any`` predicate holds).  Null record values match only ``ne``
against a (necessarily non-null) literal.  The wire form is JSON::

    {"all": [{"field": "year", "op": "ge", "value": 2018}],
     "any": [{"field": "model", "op": "eq", "value": "sedan"}]}
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from .errors import BadFilter
from .model import SchemaDef, normalize_value

OPS = ("eq", "ne", "lt", "le", "gt", "ge", "contains", "in")

_ORDERING_OPS = ("lt", "le", "gt", "ge")
_ORDERABLE_FTYPES = ("int", "float", "date")


@dataclass(frozen=True)
class Predicate:
    fname: str
    op: str
    literal: object


@dataclass(frozen=True)
class FilterExpr:
    all: tuple = ()
    any: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "all", tuple(self.all))
        object.__setattr__(self, "any", tuple(self.any))

    @property
    def empty(self) -> bool:
        return not self.all and not self.any


EMPTY_FILTER = FilterExpr()


def _predicate_from_wire(obj) -> Predicate:
    if not isinstance(obj, Mapping):
        raise BadFilter(f"predicate must be an object, got {type(obj).__name__}")
    extra = set(obj) - {"field", "op", "value"}
    if extra:
        raise BadFilter(f"unknown predicate keys: {sorted(extra)}")
    for key in ("field", "op"):
        if key not in obj:
            raise BadFilter(f"predicate missing {key!r}")
    if "value" not in obj:
        raise BadFilter("predicate missing 'value'")
    return Predicate(obj["field"], obj["op"], obj["value"])


def filter_from_wire(obj) -> FilterExpr:
    """Parse the JSON wire form; shape errors raise BadFilter."""
    if obj is None:
        return EMPTY_FILTER
    if not isinstance(obj, Mapping):
        raise BadFilter(f"filter must be an object, got {type(obj).__name__}")
    extra = set(obj) - {"all", "any"}
    if extra:
        raise BadFilter(f"unknown filter keys: {sorted(extra)}")
    clauses = {}
    for key in ("all", "any"):
        raw = obj.get(key, [])
        if not isinstance(raw, (list, tuple)):
            raise BadFilter(f"filter {key!r} must be a list")
        clauses[key] = tuple(_predicate_from_wire(p) for p in raw)
    return FilterExpr(all=clauses["all"], any=clauses["any"])


def filter_to_wire(expr: FilterExpr) -> dict:
    def pred(p: Predicate):
        value = p.literal
        if hasattr(value, "isoformat"):
            value = value.isoformat()
        elif isinstance(value, (list, tuple)):
            value = [v.isoformat() if hasattr(v, "isoformat") else v for v in value]
        return {"field": p.fname, "op": p.op, "value": value}

    return {"all": [pred(p) for p in expr.all], "any": [pred(p) for p in expr.any]}


def _normalize_literal(p: Predicate, ftype: str) -> Predicate:
    if p.op == "in":
        if not isinstance(p.literal, (list, tuple)):
            raise BadFilter(f"field {p.fname!r}: 'in' needs a list literal")
        items = []
        for item in p.literal:
            if item is None:
                raise BadFilter(f"field {p.fname!r}: null not allowed in 'in' list")
            try:
                items.append(normalize_value(item, ftype))
            except ValueError as exc:
                raise BadFilter(f"field {p.fname!r}: {exc}") from None
        return Predicate(p.fname, p.op, tuple(items))
    if p.literal is None:
        raise BadFilter(f"field {p.fname!r}: null literal not allowed")
    try:
        literal = normalize_value(p.literal, ftype)
    except ValueError as exc:
        raise BadFilter(f"field {p.fname!r}: {exc}") from None
    return Predicate(p.fname, p.op, literal)


def validate_filter(expr: FilterExpr, schema: SchemaDef) -> FilterExpr:
    """Check field existence and op/type compatibility; normalize literals.

    contains applies to string fields only; ordering ops to int, float and
    date fields.  Returns the normalized expression or raises BadFilter.
    """
    fields = schema.field_map()

    def check(p: Predicate) -> Predicate:
        if p.op not in OPS:
            raise BadFilter(f"unknown op {p.op!r} (expected one of {', '.join(OPS)})")
        f = fields.get(p.fname)
        if f is None:
            raise BadFilter(f"unknown field {p.fname!r}")
        if p.op == "contains" and f.ftype != "string":
            raise BadFilter(f"field {p.fname!r}: 'contains' applies to string fields only")
        if p.op in _ORDERING_OPS and f.ftype not in _ORDERABLE_FTYPES:
            raise BadFilter(
                f"field {p.fname!r}: {p.op!r} applies to int, float and date fields only"
            )
        return _normalize_literal(p, f.ftype)

    return FilterExpr(
        all=tuple(check(p) for p in expr.all),
        any=tuple(check(p) for p in expr.any),
    )


def _predicate_matches(p: Predicate, values: Mapping) -> bool:
    value = values.get(p.fname)
    if value is None:
        return p.op == "ne"
    if p.op == "eq":
        return value == p.literal
    if p.op == "ne":
        return value != p.literal
    if p.op == "lt":
        return value < p.literal
    if p.op == "le":
        return value <= p.literal
    if p.op == "gt":
        return value > p.literal
    if p.op == "ge":
        return value >= p.literal
    if p.op == "contains":
        return p.literal in value
    if p.op == "in":
        return value in p.literal
    raise BadFilter(f"unknown op {p.op!r}")


def matches(expr: FilterExpr, values: Mapping) -> bool:
    if not all(_predicate_matches(p, values) for p in expr.all):
        return False
    if not expr.any:
        return True
    return any(_predicate_matches(p, values) for p in expr.any)
