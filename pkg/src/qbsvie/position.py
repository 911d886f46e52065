"""Position processes psi(t): F_T-measurable payoffs indexed by the outer time t.

A position is evaluated on the terminal nodes of a driver from two path
features: the terminal value W(T) and the running maximum max_k W(t_k).
Only positions that ignore the running maximum can live on the recombining
lattice.
"""

from __future__ import annotations

import ast
import operator
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

PayoffFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


class PositionError(ValueError):
    pass


@dataclass(frozen=True)
class Position:
    fn: PayoffFn
    path_dependent: bool = False
    label: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, t, w_terminal, w_max=None):
        w_terminal = np.asarray(w_terminal, dtype=float)
        if w_max is None:
            if self.path_dependent:
                raise PositionError(f"{self.label} needs the running maximum of W")
            w_max = np.full_like(w_terminal, np.nan)
        out = self.fn(t, w_terminal, np.asarray(w_max, dtype=float))
        return np.broadcast_to(np.asarray(out, dtype=float), w_terminal.shape).copy()

    # Arithmetic keeps the risk-axiom code readable: psi + c, lam * psi, psi1 + psi2.
    def __add__(self, other):
        if isinstance(other, Position):
            f, g = self.fn, other.fn
            return Position(lambda t, w, m: f(t, w, m) + g(t, w, m),
                            self.path_dependent or other.path_dependent,
                            f"({self.label} + {other.label})")
        c = float(other)
        f = self.fn
        return Position(lambda t, w, m: f(t, w, m) + c, self.path_dependent, f"({self.label} + {c:g})")

    __radd__ = __add__

    def __mul__(self, lam):
        lam = float(lam)
        f = self.fn
        return Position(lambda t, w, m: lam * f(t, w, m), self.path_dependent, f"{lam:g}*{self.label}")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)


def constant(c: float) -> Position:
    c = float(c)
    return Position(lambda t, w, m: np.full_like(w, c), False, f"constant({c:g})", {"c": c})


def linear_terminal(a: float = 1.0) -> Position:
    """psi(t) = a * t * W(T)."""
    a = float(a)
    return Position(lambda t, w, m: a * t * w, False, f"linear_terminal({a:g})", {"a": a})


def terminal(a: float = 1.0) -> Position:
    """psi(t) = a * W(T), the same terminal payoff for every t."""
    a = float(a)
    return Position(lambda t, w, m: a * w, False, f"terminal({a:g})", {"a": a})


def call_terminal(strike: float) -> Position:
    """psi(t) = max(W(T) - K, 0)."""
    k = float(strike)
    return Position(lambda t, w, m: np.maximum(w - k, 0.0), False, f"call_terminal({k:g})", {"K": k})


def running_max() -> Position:
    return Position(lambda t, w, m: m, True, "running_max", {})


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {
    "abs": np.abs,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "floor": np.floor,
    "ceil": np.ceil,
    "max": np.maximum,
    "min": np.minimum,
}
_NAMES = ("t", "W_T", "max_W")


def custom_expression(expr: str) -> Position:
    """Arithmetic over ``t``, ``W_T`` and ``max_W``, e.g. ``"t*W_T + max(W_T-1, 0)"``."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise PositionError(f"cannot parse {expr!r}: {exc.msg}") from None
    used = set()

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return
        if isinstance(node, ast.Name):
            if node.id not in _NAMES:
                raise PositionError(f"unknown name {node.id!r} in {expr!r}")
            used.add(node.id)
            return
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
            return
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return check(node.operand)
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and not node.keywords):
            for a in node.args:
                check(a)
            return
        raise PositionError(f"unsupported syntax {ast.dump(node)[:40]}... in {expr!r}")

    check(tree)

    def ev(node, env):
        if isinstance(node, ast.Expression):
            return ev(node.body, env)
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left, env), ev(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](ev(node.operand, env))
        args = [ev(a, env) for a in node.args]
        if node.func.id in ("max", "min"):
            out = args[0]
            for a in args[1:]:
                out = _FUNCS[node.func.id](out, a)
            return out
        return _FUNCS[node.func.id](*args)

    def fn(t, w, m):
        return ev(tree, {"t": t, "W_T": w, "max_W": m})

    return Position(fn, "max_W" in used, f"custom_expression({expr})", {"expr": expr})


PAYOFFS = {
    "constant": constant,
    "linear_terminal": linear_terminal,
    "terminal": terminal,
    "call_terminal": call_terminal,
    "running_max": running_max,
    "custom_expression": custom_expression,
}


def from_spec(spec: dict) -> Position:
    """Build a position from ``{"payoff": name, **params}``."""
    spec = dict(spec)
    name = spec.pop("payoff", None)
    if name not in PAYOFFS:
        raise PositionError(f"unknown payoff class {name!r}; expected one of {sorted(PAYOFFS)}")
    if name == "call_terminal" and "K" in spec:
        spec["strike"] = spec.pop("K")
    try:
        return PAYOFFS[name](**spec)
    except TypeError as exc:
        raise PositionError(f"bad parameters for {name}: {exc}") from None
