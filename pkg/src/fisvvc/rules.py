"""Rule language and variable declarations.

Rules are written one per line in the operator-friendly form::

    If (Voltage is H) and (Reactive_power is Good) and (Tap is not Tap1) then (Tap is -1)

Keywords (``if``, ``and``, ``is``, ``not``, ``then``) are case-insensitive,
variable and set names are case-sensitive. Parentheses around a clause may be
omitted; the canonical form written by :func:`format_rule` always has them.
A trailing period is tolerated. ``#`` starts a comment.

Declarations live in a JSON document::

    {
      "variables": [
        {"name": "Voltage", "role": "input", "unit": "kV",
         "universe": [19.5, 22.5],
         "aliases": [],
         "sets": [{"name": "G", "shape": "trapezoid", "points": [20.8, 20.9, 21.15, 21.35]}]},
        {"name": "Taps", "role": "output", "unit": "tap", "universe": [-3, 3],
         "neutral": 0.0, "aliases": ["Tap"], "sets": [...]}
      ]
    }

``shape`` is ``trapezoid`` (4 points), ``triangle`` (3) or ``singleton`` (1).
Antecedent names resolve against inputs and consequent names against outputs,
so an input and an output may share a name through ``aliases``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from os import PathLike
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ConfigError, RuleBaseError, RuleSyntaxError
from .fis import Clause, LinguisticVariable, MembershipFunction, Rule, RuleBase

UNITS = {"kV", "MVAr", "tap", "status", "period"}
ROLES = {"input", "output"}
SHAPE_ARITY = {"trapezoid": 4, "triangle": 3, "singleton": 1}
KEYWORDS = {"if", "and", "is", "not", "then"}

_TOKEN_RE = re.compile(r"\s+|(?P<punct>[().])|(?P<word>[A-Za-z0-9_+\-]+)")
IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
SETNAME_RE = re.compile(r"[A-Za-z0-9_+\-]+\Z")


@dataclass(frozen=True)
class Token:
    kind: str  # "word", "(", ")", ".", "eof"
    text: str
    col: int  # 1-based

    @property
    def keyword(self) -> str | None:
        if self.kind == "word" and self.text.lower() in KEYWORDS:
            return self.text.lower()
        return None


def tokenize(text: str, line: int | None = None) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line=line,
                                  col=pos + 1, token=text[pos])
        if m.group("punct"):
            tokens.append(Token(m.group("punct"), m.group("punct"), pos + 1))
        elif m.group("word"):
            tokens.append(Token("word", m.group("word"), pos + 1))
        pos = m.end()
    tokens.append(Token("eof", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, line: int | None):
        self.line = line
        self.tokens = tokenize(text, line)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Token | None = None) -> RuleSyntaxError:
        tok = tok or self.tok
        shown = tok.text if tok.kind != "eof" else "<end of line>"
        return RuleSyntaxError(f"{message}, found {shown!r}", line=self.line,
                               col=tok.col, token=shown)

    def advance(self) -> Token:
        tok = self.tok
        self.i += 1
        return tok

    def expect_keyword(self, kw: str) -> Token:
        if self.tok.keyword != kw:
            raise self.error(f"expected '{kw}'")
        return self.advance()

    def rule(self) -> Rule:
        self.expect_keyword("if")
        antecedents = [self.clause("antecedent")]
        while self.tok.keyword == "and":
            self.advance()
            antecedents.append(self.clause("antecedent"))
        self.expect_keyword("then")
        if not self.starts_clause():
            raise self.error("expected consequent clause after 'then'")
        consequents = [self.clause("consequent")]
        while self.starts_clause():
            consequents.append(self.clause("consequent"))
        if self.tok.kind == ".":
            self.advance()
        if self.tok.kind != "eof":
            if self.tok.keyword == "and":
                raise self.error("consequents are juxtaposed, not joined with 'and'")
            raise self.error("unexpected token after rule")
        return Rule(tuple(antecedents), tuple(consequents), line=self.line)

    def starts_clause(self) -> bool:
        tok = self.tok
        return tok.kind == "(" or (tok.kind == "word" and tok.keyword is None)

    def clause(self, what: str) -> Clause:
        paren = self.tok.kind == "("
        if paren:
            self.advance()
        tok = self.tok
        if tok.kind != "word" or tok.keyword is not None or not IDENT_RE.match(tok.text):
            raise self.error(f"expected variable name in {what}")
        variable = self.advance().text
        self.expect_keyword("is")
        negated = False
        if self.tok.keyword == "not":
            self.advance()
            negated = True
        tok = self.tok
        if tok.kind != "word" or tok.keyword is not None or not SETNAME_RE.match(tok.text):
            raise self.error(f"expected set name after '{variable} is'")
        term = self.advance().text
        if paren:
            if self.tok.kind != ")":
                raise self.error("expected ')'")
            self.advance()
        return Clause(variable, term, negated)


def parse_rule(text: str, line: int | None = None) -> Rule:
    """Parse one rule line into a :class:`Rule` (names left unresolved)."""
    return _Parser(text, line).rule()


def format_clause(clause: Clause) -> str:
    verb = "is not" if clause.negated else "is"
    return f"({clause.variable} {verb} {clause.term})"


def format_rule(rule: Rule) -> str:
    ante = " and ".join(format_clause(c) for c in rule.antecedents)
    cons = "".join(format_clause(c) for c in rule.consequents)
    return f"If {ante} then {cons}"


def iter_rule_lines(text: str) -> Iterator[tuple[int, str]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            yield lineno, body


def parse_rules(text: str, source: str | None = None) -> tuple[list[Rule], list[ConfigError]]:
    """Parse every rule line, collecting syntax errors instead of stopping at the first."""
    rules, errors = [], []
    for lineno, body in iter_rule_lines(text):
        try:
            rules.append(parse_rule(body, line=lineno))
        except RuleSyntaxError as exc:
            exc.source = source
            errors.append(exc)
    return rules, errors


# -- declarations ------------------------------------------------------------

@dataclass(frozen=True)
class SetDeclaration:
    name: str
    shape: str
    points: tuple[float, ...]

    def to_mf(self) -> MembershipFunction:
        if self.shape == "trapezoid":
            return MembershipFunction.trapezoid(*self.points)
        if self.shape == "triangle":
            return MembershipFunction.triangle(*self.points)
        return MembershipFunction.singleton(*self.points)


@dataclass(frozen=True)
class VariableDeclaration:
    name: str
    role: str
    unit: str
    universe: tuple[float, float]
    sets: tuple[SetDeclaration, ...]
    aliases: tuple[str, ...] = ()
    neutral: float | None = None

    def to_variable(self) -> LinguisticVariable:
        names = [s.name for s in self.sets]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ConfigError(f"variable {self.name}: duplicate set name(s) {', '.join(dupes)}",
                              token=dupes[0])
        return LinguisticVariable(
            name=self.name,
            universe=self.universe,
            sets={s.name: s.to_mf() for s in self.sets},
            unit=self.unit,
            role=self.role,
            aliases=self.aliases,
            neutral=self.neutral,
        )

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "role": self.role,
            "unit": self.unit,
            "universe": list(self.universe),
            "aliases": list(self.aliases),
            "sets": [{"name": s.name, "shape": s.shape, "points": list(s.points)} for s in self.sets],
        }
        if self.neutral is not None:
            out["neutral"] = self.neutral
        return out


def _decl_from_json(obj: dict, index: int, source: str | None) -> VariableDeclaration:
    where = f"variables[{index}]"

    def fail(msg: str, token: str | None = None) -> ConfigError:
        return ConfigError(f"{where}: {msg}", token=token, source=source)

    if not isinstance(obj, dict):
        raise fail("expected an object")
    name = obj.get("name")
    if not isinstance(name, str) or not IDENT_RE.match(name):
        raise fail(f"invalid variable name {name!r}", token=str(name))
    where = f"variable {name}"
    role = obj.get("role")
    if role not in ROLES:
        raise fail(f"role must be one of {sorted(ROLES)}, got {role!r}", token=str(role))
    unit = obj.get("unit")
    if unit not in UNITS:
        raise fail(f"unit must be one of {sorted(UNITS)}, got {unit!r}", token=str(unit))
    universe = obj.get("universe")
    if (not isinstance(universe, list) or len(universe) != 2
            or not all(isinstance(u, (int, float)) for u in universe)):
        raise fail("universe must be [low, high]")
    aliases = obj.get("aliases", [])
    if not isinstance(aliases, list) or not all(isinstance(a, str) and IDENT_RE.match(a) for a in aliases):
        raise fail("aliases must be a list of identifiers")
    neutral = obj.get("neutral")
    if neutral is not None and not isinstance(neutral, (int, float)):
        raise fail("neutral must be a number")
    sets = []
    for j, s in enumerate(obj.get("sets") or []):
        if not isinstance(s, dict):
            raise fail(f"sets[{j}] must be an object")
        sname, shape, points = s.get("name"), s.get("shape"), s.get("points")
        if not isinstance(sname, str) or not SETNAME_RE.match(sname):
            raise fail(f"invalid set name {sname!r}", token=str(sname))
        if shape not in SHAPE_ARITY:
            raise fail(f"set {sname}: unknown shape {shape!r}", token=str(shape))
        if (not isinstance(points, list) or len(points) != SHAPE_ARITY[shape]
                or not all(isinstance(p, (int, float)) for p in points)):
            raise fail(f"set {sname}: {shape} needs {SHAPE_ARITY[shape]} numeric points", token=sname)
        sets.append(SetDeclaration(sname, shape, tuple(float(p) for p in points)))
    if not sets:
        raise fail("at least one set is required")
    return VariableDeclaration(
        name=name, role=role, unit=unit,
        universe=(float(universe[0]), float(universe[1])),
        sets=tuple(sets), aliases=tuple(aliases),
        neutral=None if neutral is None else float(neutral),
    )


def parse_declarations(text: str, source: str | None = None) -> list[VariableDeclaration]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno, col=exc.colno,
                          source=source) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("variables"), list):
        raise ConfigError("declarations must be an object with a 'variables' list", source=source)
    return [_decl_from_json(v, i, source) for i, v in enumerate(doc["variables"])]


def dump_declarations(decls: Iterable[VariableDeclaration]) -> str:
    return json.dumps({"variables": [d.to_json() for d in decls]}, indent=2) + "\n"


# -- cross-checked rulebase ----------------------------------------------------

def _build_variables(declarations: list[VariableDeclaration], source: str | None):
    errors: list[ConfigError] = []
    variables: dict[str, dict[str, LinguisticVariable]] = {"input": {}, "output": {}}
    seen_names: dict[str, dict[str, str]] = {"input": {}, "output": {}}
    for decl in declarations:
        names = seen_names[decl.role]
        clash = [n for n in (decl.name, *decl.aliases) if n in names]
        if clash:
            errors.append(ConfigError(f"duplicate {decl.role} variable name {clash[0]}",
                                      token=clash[0], source=source))
            continue
        try:
            var = decl.to_variable()
        except ConfigError as exc:
            exc.source = exc.source or source
            errors.append(exc)
            continue
        for n in (decl.name, *decl.aliases):
            names[n] = decl.name
        variables[decl.role][decl.name] = var
    return variables, errors


def _resolve(table: dict[str, LinguisticVariable], name: str) -> LinguisticVariable | None:
    if name in table:
        return table[name]
    for var in table.values():
        if name in var.aliases:
            return var
    return None


def check_rules(rules: list[Rule], inputs: dict[str, LinguisticVariable],
                outputs: dict[str, LinguisticVariable], source: str | None = None) -> list[ConfigError]:
    errors = []
    for rule in rules:
        for side, clauses, table, other, other_role in (
            ("antecedent", rule.antecedents, inputs, outputs, "output"),
            ("consequent", rule.consequents, outputs, inputs, "input"),
        ):
            for clause in clauses:
                var = _resolve(table, clause.variable)
                if var is None:
                    if _resolve(other, clause.variable) is not None:
                        msg = f"{other_role} variable {clause.variable} used as {side}"
                    else:
                        msg = f"undeclared variable {clause.variable}"
                    errors.append(ConfigError(msg, line=rule.line, token=clause.variable, source=source))
                    continue
                if clause.term not in var.sets:
                    errors.append(ConfigError(
                        f"undeclared set {clause.term} for variable {var.name}",
                        line=rule.line, token=clause.term, source=source))
                if side == "consequent" and clause.negated:
                    errors.append(ConfigError("negated consequent", line=rule.line,
                                              token=clause.term, source=source))
    return errors


def load_rulebase(declarations: list[VariableDeclaration], rules_text: str,
                  source: str | None = None) -> RuleBase:
    """Parse ``rules_text`` and cross-check it against ``declarations``.

    Raises :class:`RuleBaseError` listing every problem found.
    """
    variables, errors = _build_variables(declarations, None)
    rules, syntax_errors = parse_rules(rules_text, source)
    errors.extend(syntax_errors)
    errors.extend(check_rules(rules, variables["input"], variables["output"], source))
    if not variables["input"]:
        errors.append(ConfigError("no input variables declared"))
    if not variables["output"]:
        errors.append(ConfigError("no output variables declared"))
    if not rules and not syntax_errors:
        errors.append(ConfigError("no rules", source=source))
    if errors:
        raise RuleBaseError(errors)
    return RuleBase(variables["input"], variables["output"], tuple(rules))


def read_rulebase(declarations_path: str | PathLike, rules_path: str | PathLike) -> RuleBase:
    decl_path, rule_path = Path(declarations_path), Path(rules_path)
    decls = parse_declarations(decl_path.read_text(encoding="utf-8"), source=str(decl_path))
    return load_rulebase(decls, rule_path.read_text(encoding="utf-8"), source=str(rule_path))


def data_path(name: str) -> Path:
    return Path(__file__).resolve().parent / "data" / name


def default_rulebase() -> RuleBase:
    """The shipped 14-rule volt/var rulebase."""
    return read_rulebase(data_path("declarations.json"), data_path("rules.fis"))
