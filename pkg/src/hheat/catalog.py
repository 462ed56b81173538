"""Domain catalog and the small arithmetic-expression evaluator for custom domains.

Catalog entries ship exact gradients and Hessians. Custom domains are built
from expression strings in x1, x2, x3 and validated against finite differences.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .surface import ImplicitDomain

__all__ = ["cylinder", "vertical_slab", "koranyi_ball", "custom_domain", "make_domain"]


def cylinder(R: float = 1.0, z_period: float = 1.0) -> ImplicitDomain:
    """x3-periodic cylinder x1^2 + x2^2 < R^2; all quantities are per period."""

    def F(p):
        return p[..., 0] ** 2 + p[..., 1] ** 2 - R**2

    def gradF(p):
        g = np.zeros(p.shape)
        g[..., 0] = 2.0 * p[..., 0]
        g[..., 1] = 2.0 * p[..., 1]
        return g

    def hessF(p):
        h = np.zeros(p.shape[:-1] + (3, 3))
        h[..., 0, 0] = 2.0
        h[..., 1, 1] = 2.0
        return h

    bbox = np.array([[-R, R], [-R, R], [0.0, z_period]])
    return ImplicitDomain(F, gradF, hessF, bbox, name=f"cylinder(R={R})", z_period=z_period)


def vertical_slab(c: float = 1.0, width: float = 4.0, z_period: float = 1.0) -> ImplicitDomain:
    """Half-space-like test domain x1 < c (bbox-truncated; test use only)."""

    def F(p):
        return p[..., 0] - c

    def gradF(p):
        g = np.zeros(p.shape)
        g[..., 0] = 1.0
        return g

    def hessF(p):
        return np.zeros(p.shape[:-1] + (3, 3))

    bbox = np.array([[c - width, c], [-width / 2, width / 2], [0.0, z_period]])
    return ImplicitDomain(F, gradF, hessF, bbox, name=f"vertical_slab(c={c})", z_period=z_period)


def koranyi_ball(r: float = 1.0) -> ImplicitDomain:
    """Koranyi ball (x1^2+x2^2)^2 + 4 x3^2 < r^4; characteristic at the poles."""

    def F(p):
        rho2 = p[..., 0] ** 2 + p[..., 1] ** 2
        return rho2**2 + 4.0 * p[..., 2] ** 2 - r**4

    def gradF(p):
        rho2 = p[..., 0] ** 2 + p[..., 1] ** 2
        g = np.zeros(p.shape)
        g[..., 0] = 4.0 * p[..., 0] * rho2
        g[..., 1] = 4.0 * p[..., 1] * rho2
        g[..., 2] = 8.0 * p[..., 2]
        return g

    def hessF(p):
        x1, x2 = p[..., 0], p[..., 1]
        rho2 = x1**2 + x2**2
        h = np.zeros(p.shape[:-1] + (3, 3))
        h[..., 0, 0] = 4.0 * rho2 + 8.0 * x1**2
        h[..., 1, 1] = 4.0 * rho2 + 8.0 * x2**2
        h[..., 0, 1] = h[..., 1, 0] = 8.0 * x1 * x2
        h[..., 2, 2] = 8.0
        return h

    b = 1.1 * r
    bz = 0.55 * r * r
    bbox = np.array([[-b, b], [-b, b], [-bz, bz]])
    return ImplicitDomain(F, gradF, hessF, bbox, name=f"koranyi_ball(r={r})")


# ---------------------------------------------------------------------------
# Expression parser: +, -, *, /, ^, parentheses, x1 x2 x3, sin cos exp sqrt.


_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}


def _tokenize(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "+-*/^()," :
            tokens.append(ch)
            i += 1
        elif ch.isdigit() or ch == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] in ".eE" or
                             (text[j] in "+-" and text[j - 1] in "eE")):
                j += 1
            tokens.append(float(text[i:j]))
            i = j
        elif ch.isalpha():
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(text[i:j])
            i = j
        else:
            raise ConfigError(f"unexpected character {ch!r} in expression")
    return tokens


class _Parser:
    """Recursive-descent parser producing a vectorized function of (x1,x2,x3)."""

    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, tok):
        if self.next() != tok:
            raise ConfigError(f"expected {tok!r} in expression")

    def parse(self):
        node = self.expr()
        if self.peek() is not None:
            raise ConfigError(f"trailing token {self.peek()!r} in expression")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.next()
            rhs = self.term()
            node = (lambda a, b: (lambda e: a(e) + b(e)))(node, rhs) if op == "+" else \
                   (lambda a, b: (lambda e: a(e) - b(e)))(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() in ("*", "/"):
            op = self.next()
            rhs = self.unary()
            node = (lambda a, b: (lambda e: a(e) * b(e)))(node, rhs) if op == "*" else \
                   (lambda a, b: (lambda e: a(e) / b(e)))(node, rhs)
        return node

    def unary(self):
        if self.peek() == "-":
            self.next()
            inner = self.unary()
            return lambda e: -inner(e)
        if self.peek() == "+":
            self.next()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == "^":
            self.next()
            exponent = self.unary()  # right-associative
            return lambda e: base(e) ** exponent(e)
        return base

    def atom(self):
        tok = self.next()
        if isinstance(tok, float):
            return lambda e, v=tok: v
        if tok == "(":
            node = self.expr()
            self.expect(")")
            return node
        if tok in _FUNCS:
            fn = _FUNCS[tok]
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return lambda e: fn(arg(e))
        if tok in ("x1", "x2", "x3"):
            idx = int(tok[1]) - 1
            return lambda e, i=idx: e[i]
        raise ConfigError(f"unknown token {tok!r} in expression")


def compile_expression(text: str):
    """Compile an expression string to f(points) with points of shape (..., 3)."""
    node = _Parser(_tokenize(text)).parse()

    def fn(points):
        p = np.asarray(points, dtype=float)
        env = (p[..., 0], p[..., 1], p[..., 2])
        out = node(env)
        return np.broadcast_to(np.asarray(out, dtype=float), p.shape[:-1]).copy()

    return fn


def custom_domain(
    F_expr: str,
    grad_exprs,
    hess_exprs,
    bbox,
    name: str = "custom",
    z_period: float | None = None,
    validate: bool = True,
    rng_seed: int = 0,
) -> ImplicitDomain:
    """Build a domain from expression strings.

    grad_exprs: 3 strings (dF/dx1, dF/dx2, dF/dx3). hess_exprs: 6 strings for
    the upper triangle (11, 12, 13, 22, 23, 33). The supplied derivatives are
    checked against finite differences of F at 100 random bbox points.
    """
    if len(grad_exprs) != 3 or len(hess_exprs) != 6:
        raise ConfigError("custom domain needs 3 gradient and 6 Hessian expressions")
    F = compile_expression(F_expr)
    grads = [compile_expression(s) for s in grad_exprs]
    hesses = [compile_expression(s) for s in hess_exprs]

    def gradF(p):
        p = np.asarray(p, dtype=float)
        return np.stack([g(p) for g in grads], axis=-1)

    iu = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]

    def hessF(p):
        p = np.asarray(p, dtype=float)
        h = np.zeros(p.shape[:-1] + (3, 3))
        for (i, j), fn in zip(iu, hesses):
            v = fn(p)
            h[..., i, j] = v
            if i != j:
                h[..., j, i] = v
        return h

    dom = ImplicitDomain(F, gradF, hessF, np.asarray(bbox, dtype=float),
                         name=name, z_period=z_period)
    if validate:
        _validate_derivatives(dom, rng_seed)
    return dom


def _validate_derivatives(dom: ImplicitDomain, seed: int, n: int = 100, tol: float = 1e-5):
    rng = np.random.default_rng(seed)
    lo, hi = dom.bbox[:, 0], dom.bbox[:, 1]
    pts = lo + (hi - lo) * rng.random((n, 3))
    h = 1e-5 * max(1.0, dom.diameter())
    scale = max(1.0, float(np.max(np.abs(dom.gradF(pts)))))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (dom.F(pts + e) - dom.F(pts - e)) / (2 * h)
        err = np.max(np.abs(fd - dom.gradF(pts)[:, k])) / scale
        if err > tol:
            i = int(np.argmax(np.abs(fd - dom.gradF(pts)[:, k])))
            raise ConfigError(
                f"gradient expression {k + 1} disagrees with finite differences "
                f"at point {pts[i]} (relative error {err:.2e})"
            )
    hscale = max(1.0, float(np.max(np.abs(dom.hessF(pts)))))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (dom.gradF(pts + e) - dom.gradF(pts - e)) / (2 * h)
        err = np.max(np.abs(fd - dom.hessF(pts)[:, k, :])) / hscale
        if err > tol:
            raise ConfigError(
                f"Hessian row {k + 1} disagrees with finite differences "
                f"(relative error {err:.2e})"
            )


def make_domain(spec: dict) -> ImplicitDomain:
    """Instantiate a catalog entry from a {kind: ..., params...} mapping."""
    kind = spec.get("kind")
    if kind == "cylinder":
        return cylinder(R=float(spec.get("R", 1.0)),
                        z_period=float(spec.get("z_period", 1.0)))
    if kind == "vertical_slab":
        return vertical_slab(c=float(spec.get("c", 1.0)))
    if kind == "koranyi_ball":
        return koranyi_ball(r=float(spec.get("r", 1.0)))
    if kind == "custom":
        return custom_domain(
            spec["F"],
            [spec["gradF1"], spec["gradF2"], spec["gradF3"]],
            [spec["hessF11"], spec["hessF12"], spec["hessF13"],
             spec["hessF22"], spec["hessF23"], spec["hessF33"]],
            bbox=np.array(spec["bbox"], dtype=float).reshape(3, 2),
            name=spec.get("name", "custom"),
            z_period=spec.get("z_period"),
        )
    raise ConfigError(f"unknown domain kind {kind!r}")
