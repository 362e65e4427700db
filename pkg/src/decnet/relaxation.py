"""Linear outer approximation of the nonlinear rows over a variable box.

Each distinct product ``x*y`` (or square ``f*f``) in the formulation gets one
auxiliary column ``w``. Bilinear products are replaced by their four McCormick
inequalities, squares by tangent underestimators and a secant overestimator.
The envelope rows depend on the box and are rebuilt for every box; the rest
of the linear system is assembled once per formulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .formulation import Formulation, arc_label
from .lp import EQ, GE, LE, LpProblem

DEFAULT_TANGENTS = 3
IMPLIED_LOSS_TAG = "implied:ohmic_loss"


@dataclass(frozen=True)
class EnvelopeRow:
    """``coef_w*w + coef_x*x + coef_y*y  <sense>  rhs``."""

    coef_w: float
    coef_x: float
    coef_y: float
    sense: str
    rhs: float

    def holds(self, w: float, x: float, y: float = 0.0, tol: float = 0.0) -> bool:
        act = self.coef_w * w + self.coef_x * x + self.coef_y * y
        if self.sense == ">=":
            return act >= self.rhs - tol
        if self.sense == "<=":
            return act <= self.rhs + tol
        return abs(act - self.rhs) <= tol


def _check_interval(lo: float, hi: float, what: str) -> None:
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError(f"{what} needs finite bounds, got [{lo}, {hi}]")
    if lo > hi:
        raise ValueError(f"{what} has an empty interval [{lo}, {hi}]")


def mccormick_envelope(x_bounds, y_bounds) -> list[EnvelopeRow]:
    """The four McCormick inequalities of ``w = x*y`` over a box."""
    xl, xu = map(float, x_bounds)
    yl, yu = map(float, y_bounds)
    _check_interval(xl, xu, "x")
    _check_interval(yl, yu, "y")
    return [
        EnvelopeRow(1.0, -yl, -xl, ">=", -xl * yl),
        EnvelopeRow(1.0, -yu, -xu, ">=", -xu * yu),
        EnvelopeRow(1.0, -yl, -xu, "<=", -xu * yl),
        EnvelopeRow(1.0, -yu, -xl, "<=", -xl * yu),
    ]


def tangent_points(fl: float, fu: float, n_tangents: int = DEFAULT_TANGENTS) -> list[float]:
    if n_tangents < 1:
        raise ValueError("n_tangents must be at least 1")
    if n_tangents == 1:
        return [0.5 * (fl + fu)]
    pts = list(np.linspace(fl, fu, n_tangents))
    if n_tangents >= 3 and fl < 0.0 < fu:
        k = int(np.argmin([abs(p) for p in pts[1:-1]])) + 1
        pts[k] = 0.0
    return [float(p) for p in pts]


def relax_quadratic(f_bounds, n_tangents: int = DEFAULT_TANGENTS, extra_points=()) -> list[EnvelopeRow]:
    """Tangent underestimators and the secant overestimator of ``w = f^2``."""
    fl, fu = map(float, f_bounds)
    _check_interval(fl, fu, "f")
    pts = tangent_points(fl, fu, n_tangents) + [float(p) for p in extra_points if fl <= p <= fu]
    rows = [EnvelopeRow(1.0, -2.0 * t, 0.0, ">=", -t * t) for t in dict.fromkeys(pts)]
    rows.append(EnvelopeRow(1.0, -(fl + fu), 0.0, "<=", -fl * fu))
    return rows


@dataclass
class LinearRelaxation:
    n_orig: int
    names: list[str]
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray
    row_ids: list[str]
    envelopes: dict[str, list[str]]
    products: np.ndarray  # (k, 2) factor indices per auxiliary
    constant: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def to_lp(self) -> LpProblem:
        return LpProblem(self.A, self.sense, self.rhs, self.c, self.lb, self.ub, self.names)

    def residuals(self, z: np.ndarray) -> np.ndarray:
        """Signed violation per row (positive = violated)."""
        act = self.A @ z - self.rhs
        return np.where(self.sense == EQ, np.abs(act), np.where(self.sense == LE, act, -act))

    def lift(self, x: np.ndarray) -> np.ndarray:
        """Extend an assignment of the original columns with exact products."""
        a, b = self.products[:, 0], self.products[:, 1]
        return np.concatenate([x, x[a] * x[b]])

    def export_text(self) -> str:
        lines = []
        csr = self.A.tocsr()
        sym = {LE: "<=", EQ: "==", GE: ">="}
        for r, rid in enumerate(self.row_ids):
            lo, hi = csr.indptr[r], csr.indptr[r + 1]
            terms = " ".join(f"{v!r}*{self.names[j]}" for j, v in zip(csr.indices[lo:hi], csr.data[lo:hi]))
            lines.append(f"ROW {rid} | linear | {terms} | {sym[int(self.sense[r])]} {self.rhs[r]!r}")
        return "\n".join(lines) + "\n"


class RelaxationBuilder:
    """Precomputes the box-independent part of the relaxation of a formulation."""

    def __init__(self, f: Formulation, implied_loss: bool = True):
        self.f = f
        n = f.n_vars
        keys: dict[tuple[int, int], int] = {}
        prods = []

        def aux(a, b):
            key = (min(a, b), max(a, b))
            if key not in keys:
                keys[key] = len(prods)
                prods.append(key)
            return n + keys[key]

        rows_i, rows_j, rows_v = [], [], []
        sense, rhs, ids = [], [], []
        sense_map = {"<=": LE, "==": EQ, ">=": GE}
        sources: dict[int, list[str]] = {}
        for r, row in enumerate(f.rows):
            for j, v in row.lin:
                rows_i.append(r)
                rows_j.append(j)
                rows_v.append(v)
            for c, a, b in row.products:
                k = aux(a, b)
                rows_i.append(r)
                rows_j.append(k)
                rows_v.append(c)
                sources.setdefault(k - n, []).append(row.id)
            sense.append(sense_map[row.sense])
            rhs.append(row.rhs)
            ids.append(row.id)
        # R (f_out - f_in) = a ubar^2 holds on every point satisfying both Ohmic rows
        if implied_loss and f.layout["n_cable"] <= 1:
            inst = f.instance
            present = set(ids)
            for k, v in enumerate(f.layout["arcs"]):
                lab = arc_label(inst, k)
                if not {f"ohmic_in[{lab}]", f"ohmic_out[{lab}]", f"voltdrop[{lab}]"} <= present:
                    continue  # only valid where the rows implying it are part of the model
                R = inst.resistance_e(k, 0 if f.layout["n_cable"] == 1 else None)
                w = aux(v["u_bar"], v["u_bar"])
                r = len(ids)
                for j, val in ((v["f_e_out"], R), (v["f_e_in"], -R), (w, -inst.physical.a_e)):
                    rows_i.append(r)
                    rows_j.append(j)
                    rows_v.append(val)
                sense.append(EQ)
                rhs.append(0.0)
                ids.append(f"ohmic_loss[{lab}]")
                sources.setdefault(w - n, []).append(ids[-1])
        elif implied_loss:
            # per cable option: R_c (f_out - f_in) >= a ubar^2 - M_c (1 - y_c); exact on the selected option,
            # slack otherwise.  Only the lower side is needed to keep losses from vanishing in the LP.
            inst = f.instance
            present = set(ids)
            lo, hi = f.catalog.lower(), f.catalog.upper()
            a_e = inst.physical.a_e
            for k, v in enumerate(f.layout["arcs"]):
                lab = arc_label(inst, k)
                ub_ = v["u_bar"]
                qmax = max(lo[ub_] ** 2, hi[ub_] ** 2)
                for c, y in enumerate(v["y_e"]):
                    need = {f"ohmic_{s}_{side}[{lab};{c}]" for s in ("in", "out") for side in ("le", "ge")}
                    if not need | {f"voltdrop[{lab}]"} <= present:
                        continue
                    R = inst.resistance_e(k, c)
                    M = R * (hi[v["f_e_in"]] - lo[v["f_e_out"]]) + a_e * qmax
                    w = aux(ub_, ub_)
                    r = len(ids)
                    for j, val in ((v["f_e_out"], R), (v["f_e_in"], -R), (w, -a_e), (y, -M)):
                        rows_i.append(r)
                        rows_j.append(j)
                        rows_v.append(val)
                    sense.append(GE)
                    rhs.append(-M)
                    ids.append(f"ohmic_loss[{lab};{c}]")
                    sources.setdefault(w - n, []).append(ids[-1])
        self.n = n
        self.products = np.array(prods, dtype=np.int64).reshape(-1, 2)
        self.n_aux = len(prods)
        self.square = self.products[:, 0] == self.products[:, 1]
        names = list(f.catalog.names)
        for a, b in self.products:
            names.append(f"w[{names[a]}^2]" if a == b else f"w[{names[a]}*{names[b]}]")
        self.names = names
        self.static = sp.csr_matrix((rows_v, (rows_i, rows_j)), shape=(len(ids), n + self.n_aux))
        self.static_sense = np.array(sense, dtype=np.int64)
        self.static_rhs = np.array(rhs, dtype=float)
        self.static_ids = ids
        self.sources = sources
        self.c = np.concatenate([f.objective, np.zeros(self.n_aux)])
        self.constant = f.objective_constant

    def aux_bounds(self, lb: np.ndarray, ub: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.products[:, 0], self.products[:, 1]
        cands = np.stack([lb[a] * lb[b], lb[a] * ub[b], ub[a] * lb[b], ub[a] * ub[b]])
        lo, hi = cands.min(axis=0), cands.max(axis=0)
        sq = self.square
        straddle = (lb[a] < 0.0) & (ub[a] > 0.0)
        lo = np.where(sq & straddle, 0.0, lo)
        lo = np.where(sq & ~straddle, np.minimum(lb[a] ** 2, ub[a] ** 2), lo)
        return lo, hi

    def envelope_block(self, lb, ub, n_tangents=DEFAULT_TANGENTS, extra_points=None):
        """COO triplets, senses, rhs and ids of every envelope row for the box."""
        n = self.n
        ri, cj, vals, sense, rhs, ids, owner = [], [], [], [], [], [], []
        r = 0
        bil = np.flatnonzero(~self.square)
        if bil.size:
            a, b = self.products[bil, 0], self.products[bil, 1]
            xl, xu, yl, yu = lb[a], ub[a], lb[b], ub[b]
            w = n + bil
            # four rows per product, columns (w, x, y)
            cx = np.stack([-yl, -yu, -yl, -yu], axis=1)
            cy = np.stack([-xl, -xu, -xu, -xl], axis=1)
            rr = np.stack([-xl * yl, -xu * yu, -xu * yl, -xl * yu], axis=1)
            ss = np.tile(np.array([GE, GE, LE, LE]), (bil.size, 1))
            m4 = 4 * bil.size
            rows = np.arange(m4).reshape(bil.size, 4)
            ri += [rows.ravel(), rows.ravel(), rows.ravel()]
            cj += [np.repeat(w, 4), np.repeat(a, 4), np.repeat(b, 4)]
            vals += [np.ones(m4), cx.ravel(), cy.ravel()]
            sense.append(ss.ravel())
            rhs.append(rr.ravel())
            owner.append(np.repeat(bil, 4))
            r = m4
        for k in np.flatnonzero(self.square):
            j = self.products[k, 0]
            fl, fu = float(lb[j]), float(ub[j])
            extra = extra_points.get(int(k), ()) if extra_points else ()
            env = relax_quadratic((fl, fu), n_tangents, extra)
            cnt = len(env)
            rows = np.arange(r, r + cnt)
            ri += [rows, rows]
            cj += [np.full(cnt, n + k), np.full(cnt, j)]
            vals += [np.ones(cnt), np.array([e.coef_x for e in env])]
            sense.append(np.array([GE if e.sense == ">=" else LE for e in env]))
            rhs.append(np.array([e.rhs for e in env]))
            owner.append(np.full(cnt, k))
            r += cnt
        if r == 0:
            empty = np.zeros(0)
            return (empty, empty.astype(np.int64), empty.astype(np.int64)), empty.astype(np.int64), empty, np.zeros(0, dtype=np.int64)
        return ((np.concatenate(vals), np.concatenate(ri), np.concatenate(cj)), np.concatenate(sense),
                np.concatenate(rhs), np.concatenate(owner))

    def build(self, lb=None, ub=None, n_tangents=DEFAULT_TANGENTS, extra_points=None,
              with_ids: bool = True) -> LinearRelaxation:
        f = self.f
        lb = f.catalog.lower() if lb is None else np.asarray(lb, dtype=float)
        ub = f.catalog.upper() if ub is None else np.asarray(ub, dtype=float)
        if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
            raise ValueError("relaxation needs a finite box on every variable")
        alo, ahi = self.aux_bounds(lb, ub)
        (vals, ri, cj), esense, erhs, owner = self.envelope_block(lb, ub, n_tangents, extra_points)
        env = sp.csr_matrix((vals, (ri, cj)), shape=(erhs.size, self.n + self.n_aux))
        A = sp.vstack([self.static, env], format="csr")
        ids = list(self.static_ids)
        envelopes: dict[str, list[str]] = {}
        if with_ids:
            counter: dict[int, int] = {}
            for k in owner.tolist():
                idx = counter.get(k, 0)
                counter[k] = idx + 1
                rid = f"env[{self.names[self.n + k]}#{idx}]"
                ids.append(rid)
                for src in self.sources.get(k, []):
                    envelopes.setdefault(src, []).append(rid)
        return LinearRelaxation(
            n_orig=self.n, names=self.names, A=A,
            sense=np.concatenate([self.static_sense, esense]),
            rhs=np.concatenate([self.static_rhs, erhs]),
            lb=np.concatenate([lb, alo]), ub=np.concatenate([ub, ahi]), c=self.c,
            row_ids=ids, envelopes=envelopes, products=self.products, constant=self.constant,
        )

    def violations(self, z: np.ndarray) -> np.ndarray:
        """``|w - x*y|`` per auxiliary at an LP point ``z``."""
        a, b = self.products[:, 0], self.products[:, 1]
        return np.abs(z[self.n:] - z[a] * z[b])


def relax(f: Formulation, box=None, n_tangents: int = DEFAULT_TANGENTS, extra_points=None) -> LinearRelaxation:
    """Linear relaxation of ``f`` over ``box = (lb, ub)`` (catalog bounds by default)."""
    lb, ub = (None, None) if box is None else box
    return RelaxationBuilder(f).build(lb, ub, n_tangents, extra_points)
