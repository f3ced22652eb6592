"""Lexer and recursive-descent parser for .ray source.

The grammar is published in docs/grammar.md.  Design points:

- `e1 ; e2` is sugar for `let _ = e1 in e2` (binder literally `_`).
- Assignment `x.f = y` is an expression whose value is the assigned value.
- Built-in operators (+ - < == !) and the option eliminators isSome/get are
  an extension; `strict_syntax=True` rejects them at parse time.
- Identifiers may start with `$`; the toolchain reserves that prefix for
  generated names but the parser stays permissive so normalized programs
  reparse (round-trip law).
- Duplicate class/field/method/param names are parse-time errors.
"""
from __future__ import annotations

from dataclasses import dataclass

from .ast import (
    BOOL, INT, Assign, Await, BoolLit, BoolType, ClassDecl, ClassType, Expr,
    FieldDecl, If, IntLit, IntType, Invoke, Let, MethodDecl, New, NullLit,
    ObsType, Param, PrimOp, Program, RAsync, Select, Type, Var, While, Yield,
)
from .errors import DuplicateNameError, RaySyntaxError

KEYWORDS = frozenset((
    "class", "var", "def", "let", "in", "if", "else", "while",
    "new", "rasync", "await", "yield", "null", "true", "false",
))

RESERVED_TYPE_NAMES = frozenset(("Boolean", "Int", "Observable", "Option"))

BUILTIN_FUNCS = frozenset(("isSome", "get"))

_PUNCT = ("==", "{", "}", "(", ")", "[", "]", ":", ";", "=", ".", ",", "<", "+", "-", "!")


@dataclass(frozen=True)
class Token:
    kind: str  # 'ident' | 'int' | 'kw' | punctuation literal | 'eof'
    text: str
    pos: tuple[int, int]


def tokenize(src: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(src)
    while i < n:
        ch = src[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if src.startswith("//", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        pos = (line, col)
        if ch.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            toks.append(Token("int", src[i:j], pos))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch in "_$":
            j = i
            while j < n and (src[j].isalnum() or src[j] in "_$"):
                j += 1
            text = src[i:j]
            toks.append(Token("kw" if text in KEYWORDS else "ident", text, pos))
            col += j - i
            i = j
            continue
        for p in _PUNCT:
            if src.startswith(p, i):
                toks.append(Token(p, p, pos))
                i += len(p)
                col += len(p)
                break
        else:
            raise RaySyntaxError(f"unexpected character {ch!r}", pos)
    toks.append(Token("eof", "", (line, col)))
    return toks


class _Parser:
    def __init__(self, toks: list[Token], strict_syntax: bool):
        self.toks = toks
        self.i = 0
        self.strict = strict_syntax

    # -- token plumbing ----------------------------------------------------

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def take(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, kind: str, what: str | None = None) -> Token:
        t = self.peek()
        if t.kind != kind:
            want = what or f"'{kind}'"
            got = t.text if t.kind != "eof" else "end of input"
            raise RaySyntaxError(f"expected {want}, found {got!r}", t.pos)
        return self.take()

    def expect_kw(self, word: str) -> Token:
        t = self.peek()
        if not (t.kind == "kw" and t.text == word):
            got = t.text if t.kind != "eof" else "end of input"
            raise RaySyntaxError(f"expected '{word}', found {got!r}", t.pos)
        return self.take()

    # -- program / declarations --------------------------------------------

    def program(self) -> Program:
        classes: list[ClassDecl] = []
        seen: set[str] = set()
        while self.at("kw", "class"):
            c = self.classdecl()
            if c.name in seen:
                raise DuplicateNameError(f"class {c.name} declared twice", c.pos)
            seen.add(c.name)
            classes.append(c)
        main = self.expr()
        self.expect("eof", "end of input")
        return Program(tuple(classes), main)

    def classdecl(self) -> ClassDecl:
        kw = self.expect_kw("class")
        name_tok = self.expect("ident", "class name")
        if name_tok.text in RESERVED_TYPE_NAMES:
            raise DuplicateNameError(f"class name {name_tok.text} shadows a builtin type", name_tok.pos)
        self.expect("{")
        fields: list[FieldDecl] = []
        fnames: set[str] = set()
        while self.at("kw", "var"):
            self.take()
            fname = self.expect("ident", "field name")
            if fname.text in fnames:
                raise DuplicateNameError(f"field {fname.text} declared twice", fname.pos)
            fnames.add(fname.text)
            self.expect(":")
            ftype = self.type_()
            if self.at(";"):
                self.take()
            fields.append(FieldDecl(fname.text, ftype, fname.pos))
        methods: list[MethodDecl] = []
        mnames: set[str] = set()
        while self.at("kw", "def"):
            m = self.methoddecl()
            if m.name in mnames:
                raise DuplicateNameError(f"method {m.name} declared twice", m.pos)
            mnames.add(m.name)
            methods.append(m)
        self.expect("}")
        return ClassDecl(name_tok.text, tuple(fields), tuple(methods), kw.pos)

    def methoddecl(self) -> MethodDecl:
        kw = self.expect_kw("def")
        name = self.expect("ident", "method name")
        self.expect("(")
        params: list[Param] = []
        pnames: set[str] = set()
        if not self.at(")"):
            while True:
                pn = self.expect("ident", "parameter name")
                if pn.text in pnames:
                    raise DuplicateNameError(f"parameter {pn.text} declared twice", pn.pos)
                pnames.add(pn.text)
                self.expect(":")
                pt = self.type_()
                params.append(Param(pn.text, pt, pn.pos))
                if self.at(","):
                    self.take()
                    continue
                break
        self.expect(")")
        self.expect(":")
        ret = self.type_()
        self.expect("=")
        body = self.expr()
        return MethodDecl(name.text, tuple(params), ret, body, kw.pos)

    def type_(self) -> Type:
        t = self.peek()
        if t.kind != "ident":
            raise RaySyntaxError(f"expected a type, found {t.text!r}", t.pos)
        self.take()
        if t.text == "Boolean":
            return BOOL
        if t.text == "Int":
            return INT
        if t.text == "Observable":
            self.expect("[")
            elem = self.type_()
            self.expect("]")
            return ObsType(elem)
        if t.text == "Option":
            raise RaySyntaxError("Option has no concrete syntax; it only arises from await", t.pos)
        return ClassType(t.text)

    # -- expressions ---------------------------------------------------------

    def expr(self) -> Expr:
        if self.at("kw", "let"):
            kw = self.take()
            name = self.expect("ident", "binder name")
            self.expect("=")
            rhs = self.inner_expr()
            self.expect_kw("in")
            body = self.expr()
            return Let(name.text, rhs, body, kw.pos)
        head = self.inner_expr()
        if self.at(";"):
            semi = self.take()
            rest = self.expr()
            return Let("_", head, rest, semi.pos)
        return head

    def inner_expr(self) -> Expr:
        """An expression that stops before a top-level ';' or 'in'."""
        t = self.peek()
        if t.kind == "kw":
            match t.text:
                case "let":
                    # nested let as rhs: allowed; ANF splices it later
                    return self.expr_no_seq()
                case "if":
                    return self.if_expr()
                case "while":
                    return self.while_expr()
                case "rasync":
                    return self.rasync_expr()
                case "await":
                    self.take()
                    self.expect("(")
                    src = self.expr()
                    self.expect(")")
                    return Await(src, t.pos)
                case "yield":
                    self.take()
                    self.expect("(")
                    val = self.expr()
                    self.expect(")")
                    return Yield(val, t.pos)
                case "new":
                    self.take()
                    cls = self.expect("ident", "class name")
                    self.expect("(")
                    args = self.exprlist(")")
                    self.expect(")")
                    return New(cls.text, tuple(args), t.pos)
        return self.assign_or_cmp()

    def expr_no_seq(self) -> Expr:
        kw = self.expect_kw("let")
        name = self.expect("ident", "binder name")
        self.expect("=")
        rhs = self.inner_expr()
        self.expect_kw("in")
        body = self.inner_expr()
        return Let(name.text, rhs, body, kw.pos)

    def if_expr(self) -> Expr:
        kw = self.expect_kw("if")
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        self.expect("{")
        then = self.expr()
        self.expect("}")
        self.expect_kw("else")
        self.expect("{")
        els = self.expr()
        self.expect("}")
        return If(cond, then, els, kw.pos)

    def while_expr(self) -> Expr:
        kw = self.expect_kw("while")
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        self.expect("{")
        body = self.expr()
        self.expect("}")
        return While(cond, body, kw.pos)

    def rasync_expr(self) -> Expr:
        kw = self.expect_kw("rasync")
        self.expect("[")
        elem = self.type_()
        self.expect("]")
        self.expect("(")
        sources = self.exprlist(")")
        self.expect(")")
        self.expect("{")
        body = self.expr()
        self.expect("}")
        return RAsync(elem, tuple(sources), body, kw.pos)

    def exprlist(self, closer: str) -> list[Expr]:
        args: list[Expr] = []
        if self.at(closer):
            return args
        while True:
            args.append(self.expr())
            if self.at(","):
                self.take()
                continue
            return args

    def assign_or_cmp(self) -> Expr:
        left = self.cmp()
        if self.at("="):
            eq = self.take()
            if not isinstance(left, Select):
                raise RaySyntaxError("left side of assignment must be a field selection", eq.pos)
            value = self.inner_expr()
            return Assign(left.recv, left.field, value, left.pos or eq.pos)
        return left

    def cmp(self) -> Expr:
        left = self.addsub()
        if self.at("<") or self.at("=="):
            op = self.take()
            self.check_ext(op)
            right = self.addsub()
            return PrimOp(op.text, (left, right), op.pos)
        return left

    def addsub(self) -> Expr:
        left = self.unary()
        while self.at("+") or self.at("-"):
            op = self.take()
            self.check_ext(op)
            right = self.unary()
            left = PrimOp(op.text, (left, right), op.pos)
        return left

    def unary(self) -> Expr:
        if self.at("!"):
            op = self.take()
            self.check_ext(op)
            return PrimOp("!", (self.unary(),), op.pos)
        return self.postfix()

    def postfix(self) -> Expr:
        e = self.primary()
        while self.at("."):
            dot = self.take()
            member = self.expect("ident", "member name")
            if self.at("("):
                self.take()
                args = self.exprlist(")")
                self.expect(")")
                e = Invoke(e, member.text, tuple(args), dot.pos)
            else:
                e = Select(e, member.text, dot.pos)
        return e

    def primary(self) -> Expr:
        t = self.peek()
        if t.kind == "int":
            self.take()
            return IntLit(int(t.text), t.pos)
        if t.kind == "kw":
            match t.text:
                case "true":
                    self.take()
                    return BoolLit(True, t.pos)
                case "false":
                    self.take()
                    return BoolLit(False, t.pos)
                case "null":
                    self.take()
                    return NullLit(t.pos)
        if t.kind == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.take()
            if self.at("(") and t.text in BUILTIN_FUNCS:
                self.check_ext(t)
                self.take()
                args = self.exprlist(")")
                self.expect(")")
                if len(args) != 1:
                    raise RaySyntaxError(f"{t.text} takes exactly one argument", t.pos)
                return PrimOp(t.text, tuple(args), t.pos)
            if self.at("("):
                raise RaySyntaxError(
                    f"unknown function {t.text!r}; only method calls and isSome/get are callable",
                    t.pos,
                )
            return Var(t.text, t.pos)
        got = t.text if t.kind != "eof" else "end of input"
        raise RaySyntaxError(f"expected an expression, found {got!r}", t.pos)

    def check_ext(self, tok: Token):
        if self.strict:
            raise RaySyntaxError(
                f"operator {tok.text!r} is an extension rejected under strict syntax", tok.pos
            )


def parse_program(src: str, strict_syntax: bool = False) -> Program:
    """Parse a whole compilation unit: class declarations then the main expression."""
    return _Parser(tokenize(src), strict_syntax).program()


def parse_expr(src: str, strict_syntax: bool = False) -> Expr:
    p = _Parser(tokenize(src), strict_syntax)
    e = p.expr()
    p.expect("eof", "end of input")
    return e
