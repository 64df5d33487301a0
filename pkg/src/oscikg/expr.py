"""Tiny arithmetic expression language for forcing amplitudes and initial data.

Expressions are ordinary Python arithmetic over the names ``x``, ``y``, ``t``
and the constants ``pi`` and ``e``, with the functions ``exp``, ``sin``,
``cos``, ``tan``, ``sqrt``, ``log``, ``sinh``, ``cosh`` and ``abs``.  They are
parsed once, checked against a whitelist of syntax nodes, and evaluated with
numpy so that whole grids are processed in a single call.
"""

import ast

import numpy as np

FUNCTIONS = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "sqrt": np.sqrt,
    "log": np.log,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "abs": np.abs,
}
CONSTANTS = {"pi": np.pi, "e": np.e}
VARIABLES = ("x", "y", "t")

_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Call,
    ast.Name,
    ast.Load,
    ast.Constant,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)


class ExpressionError(ValueError):
    """Raised for expressions that do not parse or use forbidden syntax."""


class Expression:
    """A compiled scalar expression in ``x``, ``y`` and ``t``.

    Calling the object broadcasts over numpy arrays::

        >>> f = Expression("-(1 + 0.1*cos(100*t))*x**2")
        >>> float(f(x=2.0, t=0.0))
        -4.4
    """

    def __init__(self, source):
        if isinstance(source, (int, float)) and not isinstance(source, bool):
            source = repr(float(source))
        if not isinstance(source, str):
            raise ExpressionError(f"expression must be a string, got {type(source).__name__}")
        self.source = source.strip()
        if not self.source:
            raise ExpressionError("empty expression")
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        self.names = self._check(tree)
        self._code = compile(tree, "<expression>", "eval")

    def _check(self, tree):
        names = set()
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED_NODES):
                raise ExpressionError(
                    f"{type(node).__name__} is not allowed in expression {self.source!r}"
                )
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ExpressionError(f"only numeric literals are allowed in {self.source!r}")
            if isinstance(node, ast.Call):
                if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                    raise ExpressionError(f"unknown function in {self.source!r}")
                if len(node.args) != 1 or node.keywords:
                    raise ExpressionError(f"functions take exactly one argument: {self.source!r}")
            if isinstance(node, ast.Name):
                if node.id in FUNCTIONS:
                    continue
                if node.id not in VARIABLES and node.id not in CONSTANTS:
                    raise ExpressionError(f"unknown name {node.id!r} in {self.source!r}")
                if node.id in VARIABLES:
                    names.add(node.id)
        return frozenset(names)

    @property
    def depends_on_time(self):
        return "t" in self.names

    @property
    def is_zero(self):
        """True when the expression is a literal zero."""
        if self.names:
            return False
        return float(self(t=0.0)) == 0.0

    def __call__(self, x=0.0, y=0.0, t=0.0):
        scope = {"__builtins__": {}, **FUNCTIONS, **CONSTANTS, "x": x, "y": y, "t": t}
        value = eval(self._code, scope)
        # constant expressions must still broadcast to the grid
        return np.asarray(value, dtype=float) + np.zeros(np.broadcast(x, y, t).shape)

    def __eq__(self, other):
        return isinstance(other, Expression) and other.source == self.source

    def __hash__(self):
        return hash(self.source)

    def __repr__(self):
        return f"Expression({self.source!r})"
