"""Formula terms, SMT-LIB2 emission, and the external solver driver.

Terms are immutable trees over exact rationals. The constructors fold
constants eagerly so that, e.g., a neuron whose pre-activation does not
depend on any free weight collapses to a plain number before emission.
Division never appears in emitted arithmetic; rationals are printed as
``(/ p q)`` literals, so every formula stays inside polynomial real
arithmetic.

The solver is an external SMT-LIB2 process (Z3 by default). One process is
spawned per query and killed at the wall-clock timeout.
"""

from __future__ import annotations

import os
import subprocess
import time
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence, Union

Rational = Union[int, float, Fraction]


class EmissionError(ValueError):
    """Malformed script, e.g. a referenced variable was never declared."""


class UnsupportedValueError(ValueError):
    """The solver printed a value we refuse to approximate (e.g. root-obj)."""


class SolverError(RuntimeError):
    """The solver process could not be run or produced unusable output."""


# ---------------------------------------------------------------------------
# terms


@dataclass(frozen=True)
class RealConst:
    value: Fraction


@dataclass(frozen=True)
class BoolConst:
    value: bool


@dataclass(frozen=True)
class Var:
    name: str
    sort: str = "Real"


@dataclass(frozen=True)
class Add:
    args: tuple


@dataclass(frozen=True)
class Sub:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Neg:
    arg: "Term"


@dataclass(frozen=True)
class Mul:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Ite:
    cond: "Term"
    then: "Term"
    els: "Term"


@dataclass(frozen=True)
class Cmp:
    op: str  # one of > >= = < <=
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class And:
    args: tuple


@dataclass(frozen=True)
class Or:
    args: tuple


@dataclass(frozen=True)
class Not:
    arg: "Term"


@dataclass(frozen=True)
class Implies:
    left: "Term"
    right: "Term"


@dataclass(frozen=True)
class Forall:
    bindings: tuple  # of (name, sort)
    body: "Term"


@dataclass(frozen=True)
class Let:
    bindings: tuple  # of (name, Term)
    body: "Term"


@dataclass(frozen=True)
class AtLeastK:
    """Pseudo-Boolean threshold: at least k of the Boolean args are true."""

    args: tuple
    k: int


Term = Union[
    RealConst, BoolConst, Var, Add, Sub, Neg, Mul, Ite, Cmp, And, Or, Not,
    Implies, Forall, Let, AtLeastK,
]

TRUE = BoolConst(True)
FALSE = BoolConst(False)


def rat(value: Rational) -> Fraction:
    """Exact rational image of a number. Floats convert at their exact
    binary value, so nothing is lost between evaluation and encoding."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value)
    return Fraction(int(value))


def real(value: Rational) -> RealConst:
    return RealConst(rat(value))


def is_const(t: Term) -> bool:
    return isinstance(t, RealConst)


def add(*terms: Term) -> Term:
    """Sum with constant folding; zero terms are dropped."""
    const = Fraction(0)
    rest: list[Term] = []
    for t in terms:
        if isinstance(t, RealConst):
            const += t.value
        elif isinstance(t, Add):
            # flatten nested sums built incrementally
            for s in t.args:
                if isinstance(s, RealConst):
                    const += s.value
                else:
                    rest.append(s)
        else:
            rest.append(t)
    if not rest:
        return RealConst(const)
    if const != 0:
        rest.append(RealConst(const))
    if len(rest) == 1:
        return rest[0]
    return Add(tuple(rest))


def sub(a: Term, b: Term) -> Term:
    if isinstance(a, RealConst) and isinstance(b, RealConst):
        return RealConst(a.value - b.value)
    if isinstance(b, RealConst) and b.value == 0:
        return a
    if isinstance(a, RealConst) and a.value == 0:
        return neg(b)
    return Sub(a, b)


def neg(a: Term) -> Term:
    if isinstance(a, RealConst):
        return RealConst(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def mul(a: Term, b: Term) -> Term:
    if isinstance(a, RealConst) and isinstance(b, RealConst):
        return RealConst(a.value * b.value)
    for c, other in ((a, b), (b, a)):
        if isinstance(c, RealConst):
            if c.value == 0:
                return RealConst(Fraction(0))
            if c.value == 1:
                return other
            if c.value == -1:
                return neg(other)
    return Mul(a, b)


def _cmp_fold(op: str, a: Fraction, b: Fraction) -> bool:
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if op == "=":
        return a == b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    raise ValueError(f"unknown comparison {op!r}")


def cmp(op: str, a: Term, b: Term) -> Term:
    if op not in (">", ">=", "=", "<", "<="):
        raise ValueError(f"unknown comparison {op!r}")
    if isinstance(a, RealConst) and isinstance(b, RealConst):
        return BoolConst(_cmp_fold(op, a.value, b.value))
    return Cmp(op, a, b)


def gt(a: Term, b: Term) -> Term:
    return cmp(">", a, b)


def ge(a: Term, b: Term) -> Term:
    return cmp(">=", a, b)


def lt(a: Term, b: Term) -> Term:
    return cmp("<", a, b)


def le(a: Term, b: Term) -> Term:
    return cmp("<=", a, b)


def eq(a: Term, b: Term) -> Term:
    return cmp("=", a, b)


def ite(cond: Term, then: Term, els: Term) -> Term:
    if isinstance(cond, BoolConst):
        return then if cond.value else els
    return Ite(cond, then, els)


def relu(pre: Term) -> Term:
    """max(0, pre) as an if-then-else gated on the pre-activation sign."""
    if isinstance(pre, RealConst):
        return pre if pre.value > 0 else RealConst(Fraction(0))
    zero = RealConst(Fraction(0))
    return Ite(Cmp(">", pre, zero), pre, zero)


def and_(*terms: Term) -> Term:
    rest = []
    for t in terms:
        if isinstance(t, BoolConst):
            if not t.value:
                return FALSE
        elif isinstance(t, And):
            rest.extend(t.args)
        else:
            rest.append(t)
    if not rest:
        return TRUE
    if len(rest) == 1:
        return rest[0]
    return And(tuple(rest))


def or_(*terms: Term) -> Term:
    rest = []
    for t in terms:
        if isinstance(t, BoolConst):
            if t.value:
                return TRUE
        elif isinstance(t, Or):
            rest.extend(t.args)
        else:
            rest.append(t)
    if not rest:
        return FALSE
    if len(rest) == 1:
        return rest[0]
    return Or(tuple(rest))


def not_(t: Term) -> Term:
    if isinstance(t, BoolConst):
        return BoolConst(not t.value)
    if isinstance(t, Not):
        return t.arg
    return Not(t)


def implies(a: Term, b: Term) -> Term:
    if isinstance(a, BoolConst):
        return b if a.value else TRUE
    if isinstance(b, BoolConst) and b.value:
        return TRUE
    return Implies(a, b)


def forall(bindings: Sequence[tuple[str, str]], body: Term) -> Term:
    if isinstance(body, BoolConst):
        return body
    return Forall(tuple(bindings), body)


def let(bindings: Sequence[tuple[str, Term]], body: Term) -> Term:
    if not bindings:
        return body
    return Let(tuple(bindings), body)


def at_least_k(args: Sequence[Term], k: int) -> Term:
    if k < 1:
        return TRUE
    if k > len(args):
        raise ValueError(f"threshold {k} exceeds {len(args)} constraints")
    return AtLeastK(tuple(args), k)


# ---------------------------------------------------------------------------
# emission


def _emit_rational(f: Fraction) -> str:
    if f < 0:
        return f"(- {_emit_rational(-f)})"
    if f.denominator == 1:
        return f"{f.numerator}.0"
    return f"(/ {f.numerator} {f.denominator})"


def emit_term(t: Term) -> str:
    if isinstance(t, RealConst):
        return _emit_rational(t.value)
    if isinstance(t, BoolConst):
        return "true" if t.value else "false"
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Add):
        return "(+ " + " ".join(emit_term(a) for a in t.args) + ")"
    if isinstance(t, Sub):
        return f"(- {emit_term(t.left)} {emit_term(t.right)})"
    if isinstance(t, Neg):
        return f"(- {emit_term(t.arg)})"
    if isinstance(t, Mul):
        return f"(* {emit_term(t.left)} {emit_term(t.right)})"
    if isinstance(t, Ite):
        return f"(ite {emit_term(t.cond)} {emit_term(t.then)} {emit_term(t.els)})"
    if isinstance(t, Cmp):
        return f"({t.op} {emit_term(t.left)} {emit_term(t.right)})"
    if isinstance(t, And):
        return "(and " + " ".join(emit_term(a) for a in t.args) + ")"
    if isinstance(t, Or):
        return "(or " + " ".join(emit_term(a) for a in t.args) + ")"
    if isinstance(t, Not):
        return f"(not {emit_term(t.arg)})"
    if isinstance(t, Implies):
        return f"(=> {emit_term(t.left)} {emit_term(t.right)})"
    if isinstance(t, Forall):
        binds = " ".join(f"({n} {s})" for n, s in t.bindings)
        return f"(forall ({binds}) {emit_term(t.body)})"
    if isinstance(t, Let):
        binds = " ".join(f"({n} {emit_term(v)})" for n, v in t.bindings)
        return f"(let ({binds}) {emit_term(t.body)})"
    if isinstance(t, AtLeastK):
        summands = " ".join(f"(ite {emit_term(b)} 1.0 0.0)" for b in t.args)
        if len(t.args) == 1:
            total = summands
        else:
            total = f"(+ {summands})"
        return f"(>= {total} {t.k}.0)"
    raise TypeError(f"not a term: {t!r}")


def _free_vars(t: Term, bound: frozenset, acc: set) -> None:
    if isinstance(t, Var):
        if t.name not in bound:
            acc.add(t.name)
    elif isinstance(t, (RealConst, BoolConst)):
        pass
    elif isinstance(t, Add) or isinstance(t, And) or isinstance(t, Or):
        for a in t.args:
            _free_vars(a, bound, acc)
    elif isinstance(t, (Sub, Mul, Implies)):
        _free_vars(t.left, bound, acc)
        _free_vars(t.right, bound, acc)
    elif isinstance(t, Cmp):
        _free_vars(t.left, bound, acc)
        _free_vars(t.right, bound, acc)
    elif isinstance(t, (Neg, Not)):
        _free_vars(t.arg, bound, acc)
    elif isinstance(t, Ite):
        _free_vars(t.cond, bound, acc)
        _free_vars(t.then, bound, acc)
        _free_vars(t.els, bound, acc)
    elif isinstance(t, Forall):
        inner = bound | {n for n, _ in t.bindings}
        _free_vars(t.body, inner, acc)
    elif isinstance(t, Let):
        for _, v in t.bindings:
            _free_vars(v, bound, acc)
        inner = bound | {n for n, _ in t.bindings}
        _free_vars(t.body, inner, acc)
    elif isinstance(t, AtLeastK):
        for a in t.args:
            _free_vars(a, bound, acc)
    else:
        raise TypeError(f"not a term: {t!r}")


@dataclass
class Script:
    """One solver invocation: declarations, assertions, check-sat, get-value."""

    logic: str | None = None
    options: dict = field(default_factory=dict)
    declarations: list = field(default_factory=list)  # of (name, sort)
    assertions: list = field(default_factory=list)
    get_values: list = field(default_factory=list)  # of names

    def declare(self, name: str, sort: str = "Real") -> Var:
        self.declarations.append((name, sort))
        return Var(name, sort)

    def assert_(self, term: Term) -> None:
        self.assertions.append(term)


def emit(script: Script) -> str:
    """Render the script as SMT-LIB2 text. Deterministic: identical scripts
    emit byte-identical text."""
    declared = [n for n, _ in script.declarations]
    if len(set(declared)) != len(declared):
        dupes = sorted({n for n in declared if declared.count(n) > 1})
        raise EmissionError(f"duplicate declarations: {dupes}")
    declared_set = frozenset(declared)
    for term in script.assertions:
        used: set = set()
        _free_vars(term, frozenset(), used)
        missing = used - declared_set
        if missing:
            raise EmissionError(f"undeclared variables: {sorted(missing)}")

    lines = []
    if script.logic:
        lines.append(f"(set-logic {script.logic})")
    for key, value in script.options.items():
        lines.append(f"(set-option :{key} {value})")
    for name, sort in script.declarations:
        lines.append(f"(declare-fun {name} () {sort})")
    for term in script.assertions:
        lines.append(f"(assert {emit_term(term)})")
    lines.append("(check-sat)")
    if script.get_values:
        names = " ".join(script.get_values)
        lines.append(f"(get-value ({names}))")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# solver driver


class Status(str, Enum):
    SAT = "SAT"
    UNSAT = "UNSAT"
    TIMEOUT = "TIMEOUT"
    UNKNOWN = "UNKNOWN"
    ERROR = "ERROR"


@dataclass
class SolverVerdict:
    status: Status
    model: dict | None
    wall_time_s: float
    raw_output: str


@dataclass
class SolverConfig:
    """How to reach the external solver.

    ``cmd`` is the argv prefix of an SMT-LIB2 solver reading stdin; with
    ``via_file`` the script is written to a temp file appended as the last
    argument instead. ``archive_dir`` keeps a copy of every emitted script.
    """

    cmd: tuple[str, ...] = ("z3", "-in")
    timeout_s: float = 600.0
    via_file: bool = False
    archive_dir: str | None = None

    _counter: int = field(default=0, repr=False)

    def archive(self, text: str, tag: str) -> None:
        if not self.archive_dir:
            return
        os.makedirs(self.archive_dir, exist_ok=True)
        self._counter += 1
        path = os.path.join(self.archive_dir, f"{self._counter:05d}_{tag}.smt2")
        with open(path, "w") as fh:
            fh.write(text)


def run_solver(
    script: Script,
    config: SolverConfig | None = None,
    timeout_s: float | None = None,
    tag: str = "query",
) -> SolverVerdict:
    """Emit the script, feed it to the solver subprocess, parse the verdict.

    The wall-clock timeout is enforced by killing the process; a killed run
    is reported as TIMEOUT, never raised.
    """
    config = config or SolverConfig()
    budget = config.timeout_s if timeout_s is None else timeout_s
    text = emit(script)
    config.archive(text, tag)

    cmd = list(config.cmd)
    tmp_path = None
    stdin_text = text
    if config.via_file:
        import tempfile

        fd, tmp_path = tempfile.mkstemp(suffix=".smt2")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        cmd.append(tmp_path)
        stdin_text = ""

    start = time.monotonic()
    try:
        proc = subprocess.run(
            cmd,
            input=stdin_text,
            capture_output=True,
            text=True,
            timeout=budget,
        )
    except subprocess.TimeoutExpired as exc:
        wall = time.monotonic() - start
        out = exc.stdout if isinstance(exc.stdout, str) else (exc.stdout or b"").decode()
        return SolverVerdict(Status.TIMEOUT, None, wall, out or "")
    except OSError as exc:
        raise SolverError(f"could not spawn solver {cmd[0]!r}: {exc}") from exc
    finally:
        if tmp_path:
            try:
                os.unlink(tmp_path)
            except OSError:
                pass
    wall = time.monotonic() - start

    output = proc.stdout
    status = None
    for line in output.splitlines():
        word = line.strip()
        if word == "sat":
            status = Status.SAT
            break
        if word == "unsat":
            status = Status.UNSAT
            break
        if word in ("unknown", "timeout"):
            status = Status.UNKNOWN if word == "unknown" else Status.TIMEOUT
            break
    if status is None:
        return SolverVerdict(Status.ERROR, None, wall, output + proc.stderr)

    model = None
    if status is Status.SAT and script.get_values:
        try:
            model = parse_model(output, script.get_values)
        except UnsupportedValueError:
            raise
        except ValueError as exc:
            return SolverVerdict(Status.ERROR, None, wall, output + f"\n[parse: {exc}]")
    return SolverVerdict(status, model, wall, output)


# ---------------------------------------------------------------------------
# model parsing


def _tokenize(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _read_sexpr(tokens: list[str], pos: int):
    if pos >= len(tokens):
        raise ValueError("unexpected end of solver output")
    tok = tokens[pos]
    if tok == "(":
        items = []
        pos += 1
        while pos < len(tokens) and tokens[pos] != ")":
            item, pos = _read_sexpr(tokens, pos)
            items.append(item)
        if pos >= len(tokens):
            raise ValueError("unbalanced parenthesis in solver output")
        return items, pos + 1
    if tok == ")":
        raise ValueError("unexpected ')' in solver output")
    return tok, pos + 1


def _value_from_sexpr(sx) -> Fraction | bool:
    if isinstance(sx, str):
        if sx == "true":
            return True
        if sx == "false":
            return False
        if sx.endswith("?"):
            raise UnsupportedValueError(f"inexact decimal {sx!r}")
        try:
            return Fraction(sx)
        except ValueError as exc:
            raise UnsupportedValueError(f"unrecognized value {sx!r}") from exc
    if not sx:
        raise UnsupportedValueError("empty value expression")
    head = sx[0]
    if head == "-" and len(sx) == 2:
        inner = _value_from_sexpr(sx[1])
        if isinstance(inner, bool):
            raise UnsupportedValueError("negated boolean value")
        return -inner
    if head == "/" and len(sx) == 3:
        num = _value_from_sexpr(sx[1])
        den = _value_from_sexpr(sx[2])
        return Fraction(num) / Fraction(den)
    if head == "root-obj":
        raise UnsupportedValueError("algebraic root-obj value; cannot be exact")
    raise UnsupportedValueError(f"unrecognized value expression {sx!r}")


def parse_model(output: str, names: Sequence[str]) -> dict:
    """Extract exact values for the requested names from get-value output.

    Decimal and ``(/ p q)`` forms become Fractions, Boolean atoms become
    bools. Algebraic root objects raise UnsupportedValueError.
    """
    wanted = set(names)
    tokens = _tokenize(output)
    # skip the leading verdict word(s)
    idx = 0
    while idx < len(tokens) and tokens[idx] != "(":
        idx += 1
    values: dict = {}
    while idx < len(tokens):
        try:
            sx, idx = _read_sexpr(tokens, idx)
        except ValueError:
            break
        if not isinstance(sx, list):
            continue
        for entry in sx:
            if isinstance(entry, list) and len(entry) == 2 and isinstance(entry[0], str):
                name = entry[0]
                if name in wanted:
                    values[name] = _value_from_sexpr(entry[1])
    missing = wanted - set(values)
    if missing:
        raise ValueError(f"model lacks values for {sorted(missing)}")
    return values
