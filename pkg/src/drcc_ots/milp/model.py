"""Sparse MILP model IR shared by every formulation builder."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

SENSES = ("<=", "==", ">=")


class Affine:
    """Affine expression ``sum(coef * x[var]) + const`` over model variables."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const: float = 0.0):
        self.terms: dict[int, float] = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def var(cls, index: int, coef: float = 1.0) -> Affine:
        return cls({int(index): float(coef)})

    @classmethod
    def constant(cls, value: float) -> Affine:
        return cls(None, value)

    def copy(self) -> Affine:
        return Affine(self.terms, self.const)

    def add_term(self, index: int, coef: float) -> Affine:
        index = int(index)
        value = self.terms.get(index, 0.0) + float(coef)
        if value == 0.0:
            self.terms.pop(index, None)
        else:
            self.terms[index] = value
        return self

    def __add__(self, other):
        out = self.copy()
        if isinstance(other, Affine):
            for k, v in other.terms.items():
                out.add_term(k, v)
            out.const += other.const
        else:
            out.const += float(other)
        return out

    __radd__ = __add__

    def __neg__(self):
        return Affine({k: -v for k, v in self.terms.items()}, -self.const)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Affine) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        scalar = float(scalar)
        if scalar == 0.0:
            return Affine()
        return Affine({k: v * scalar for k, v in self.terms.items()}, self.const * scalar)

    __rmul__ = __mul__

    def value(self, x) -> float:
        return self.const + sum(v * x[k] for k, v in self.terms.items())

    def arrays(self):
        idx = np.fromiter(self.terms.keys(), dtype=int, count=len(self.terms))
        coef = np.fromiter(self.terms.values(), dtype=float, count=len(self.terms))
        return idx, coef

    def range(self, lb, ub) -> tuple[float, float]:
        """Minimum and maximum of the expression over the box ``[lb, ub]``."""
        lo = hi = self.const
        for k, v in self.terms.items():
            a, b = v * lb[k], v * ub[k]
            lo += min(a, b)
            hi += max(a, b)
        return lo, hi

    def is_zero(self, lb=None, ub=None) -> bool:
        """True when every term is pinned to zero by its variable bounds."""
        if self.const != 0.0:
            return False
        if lb is None:
            return not self.terms
        return all(lb[k] == 0.0 and ub[k] == 0.0 for k in self.terms)

    def __repr__(self):
        body = " + ".join(f"{v:g}*x{k}" for k, v in sorted(self.terms.items()))
        return f"Affine({body or '0'} + {self.const:g})"


@dataclass
class MilpModel:
    """Variables with bounds, sparse rows ``coef . x (sense) rhs`` and a linear objective."""

    name: str = "model"
    var_names: list = field(default_factory=list)
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    binary: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    objective_constant: float = 0.0
    row_names: list = field(default_factory=list)
    row_start: list = field(default_factory=lambda: [0])
    col_index: list = field(default_factory=list)
    coef: list = field(default_factory=list)
    senses: list = field(default_factory=list)
    rhs: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.senses)

    def add_var(self, name: str, lb: float, ub: float, binary: bool = False, obj: float = 0.0) -> int:
        if binary:
            lb, ub = max(0.0, lb), min(1.0, ub)
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(bool(binary))
        self.objective.append(float(obj))
        return len(self.var_names) - 1

    def add_vars(self, name: str, shape, lb=-math.inf, ub=math.inf, binary: bool = False) -> np.ndarray:
        """Add an array of variables; ``lb``/``ub`` broadcast to ``shape``."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        lbs = np.broadcast_to(np.asarray(lb, dtype=float), shape)
        ubs = np.broadcast_to(np.asarray(ub, dtype=float), shape)
        out = np.empty(shape, dtype=int)
        for pos in np.ndindex(*shape):
            label = name if not shape else f"{name}[{','.join(map(str, pos))}]"
            out[pos] = self.add_var(label, lbs[pos], ubs[pos], binary)
        return out

    def set_objective(self, index: int, coef: float) -> None:
        self.objective[int(index)] = float(coef)

    def add_row(self, idx, coef, sense: str, rhs: float, name: str = "") -> int:
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        idx = np.asarray(idx, dtype=int).ravel()
        coef = np.asarray(coef, dtype=float).ravel()
        merged: dict[int, float] = {}
        for k, v in zip(idx.tolist(), coef.tolist()):
            merged[k] = merged.get(k, 0.0) + v
        for k, v in merged.items():
            if v != 0.0:
                self.col_index.append(k)
                self.coef.append(v)
        self.row_start.append(len(self.col_index))
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(name or f"r{len(self.senses) - 1}")
        return len(self.senses) - 1

    def add_constraint(self, expr: Affine, sense: str, rhs: float = 0.0, name: str = "") -> int:
        """Add ``expr (sense) rhs``; the expression constant moves to the right."""
        idx, coef = expr.arrays()
        return self.add_row(idx, coef, sense, rhs - expr.const, name)

    def row(self, r: int):
        lo, hi = self.row_start[r], self.row_start[r + 1]
        return np.array(self.col_index[lo:hi], dtype=int), np.array(self.coef[lo:hi], dtype=float)

    def matrix(self) -> csr_matrix:
        return csr_matrix(
            (np.array(self.coef, dtype=float), np.array(self.col_index, dtype=int), np.array(self.row_start, dtype=int)),
            shape=(self.n_rows, self.n_vars),
        )

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.array(self.rhs, dtype=float)
        senses = np.array(self.senses)
        lo = np.where(senses == "<=", -np.inf, rhs)
        hi = np.where(senses == ">=", np.inf, rhs)
        return lo, hi

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.lb, dtype=float), np.array(self.ub, dtype=float)

    def binary_indices(self) -> np.ndarray:
        return np.flatnonzero(np.array(self.binary, dtype=bool))

    def objective_vector(self) -> np.ndarray:
        return np.array(self.objective, dtype=float)

    def objective_value(self, x) -> float:
        return float(self.objective_vector() @ np.asarray(x, dtype=float) + self.objective_constant)

    def copy(self) -> MilpModel:
        return copy.deepcopy(self)

    def check(self) -> None:
        """Raise ``ValueError`` when the IR invariants are broken."""
        n = self.n_vars
        if self.col_index and (min(self.col_index) < 0 or max(self.col_index) >= n):
            raise ValueError("row references an undeclared variable")
        for k in range(n):
            if self.lb[k] > self.ub[k]:
                raise ValueError(f"variable {self.var_names[k]} has lb > ub")
            if self.binary[k] and not (self.lb[k] in (0.0, 1.0) and self.ub[k] in (0.0, 1.0)):
                raise ValueError(f"binary {self.var_names[k]} has non 0/1 bounds")
            if not self.binary[k] and not (math.isfinite(self.lb[k]) and math.isfinite(self.ub[k])):
                raise ValueError(f"continuous {self.var_names[k]} lacks finite bounds")

    def violation(self, x) -> float:
        """Largest absolute row or bound violation of ``x``."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if self.n_rows:
            act = self.matrix() @ x
            lo, hi = self.row_bounds()
            worst = max(worst, float(np.max(np.maximum(lo - act, act - hi), initial=0.0)))
        lb, ub = self.bounds()
        worst = max(worst, float(np.max(np.maximum(lb - x, x - ub), initial=0.0)))
        return worst

    def to_lp_text(self) -> str:
        """Render in the LP-style debugging format.

        Grammar: ``minimize`` line, ``subject to`` block with lines
        ``name: coef var + ... sense rhs``, ``bounds`` block
        ``lb <= var <= ub`` and a ``binary`` block listing binaries.
        """

        def term_list(idx, coef):
            parts = [f"{c:+.17g} {self.var_names[k]}" for k, c in zip(idx, coef)]
            return " ".join(parts) if parts else "0"

        obj = self.objective_vector()
        nz = np.flatnonzero(obj)
        lines = [f"\\ model {self.name}", "minimize"]
        lines.append(f" obj: {term_list(nz, obj[nz])} {self.objective_constant:+.17g}")
        lines.append("subject to")
        for r in range(self.n_rows):
            idx, coef = self.row(r)
            sense = {"==": "="}.get(self.senses[r], self.senses[r])
            lines.append(f" {self.row_names[r]}: {term_list(idx, coef)} {sense} {self.rhs[r]:.17g}")
        lines.append("bounds")
        for k in range(self.n_vars):
            if not self.binary[k]:
                lines.append(f" {self.lb[k]:.17g} <= {self.var_names[k]} <= {self.ub[k]:.17g}")
        lines.append("binary")
        for k in self.binary_indices():
            lines.append(f" {self.var_names[k]}")
        lines.append("end")
        return "\n".join(lines) + "\n"


def parse_lp_text(text: str) -> MilpModel:
    """Read back the format written by :meth:`MilpModel.to_lp_text`."""
    model = MilpModel()
    section = None
    pending_rows = []
    objective_terms = []
    bounds = {}
    binaries = set()
    order: list[str] = []
    index: dict[str, int] = {}

    def terms(tokens):
        out = []
        for k in range(0, len(tokens), 2):
            out.append((float(tokens[k]), tokens[k + 1]))
        return out

    def touch(name):
        if name not in index:
            index[name] = len(order)
            order.append(name)

    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            if line.startswith("\\ model "):
                model.name = line[len("\\ model ") :]
            continue
        if line in ("minimize", "subject to", "bounds", "binary", "end"):
            section = line
            continue
        if section == "minimize":
            body = line.split(":", 1)[1].split()
            model.objective_constant = float(body[-1])
            toks = body[:-1]
            if toks != ["0"]:
                for c, v in terms(toks):
                    touch(v)
                    objective_terms.append((c, v))
        elif section == "subject to":
            name, body = line.split(":", 1)
            toks = body.split()
            rhs, sense = float(toks[-1]), toks[-2]
            sense = "==" if sense == "=" else sense
            pairs = [] if toks[:-2] == ["0"] else terms(toks[:-2])
            for _, v in pairs:
                touch(v)
            pending_rows.append((name.strip(), pairs, sense, rhs))
        elif section == "bounds":
            lo, _, name, _, hi = line.split()
            touch(name)
            bounds[name] = (float(lo), float(hi))
        elif section == "binary":
            touch(line)
            binaries.add(line)
    for name in order:
        lo, hi = bounds.get(name, (0.0, 1.0))
        model.add_var(name, lo, hi, binary=name in binaries)
    for c, v in objective_terms:
        model.objective[index[v]] += c
    for name, pairs, sense, rhs in pending_rows:
        model.add_row([index[v] for _, v in pairs], [c for c, _ in pairs], sense, rhs, name)
    return model
