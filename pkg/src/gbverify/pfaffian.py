"""Pfaffians of skew-symmetric matrices, over the reals and over even forms.

Even-degree forms commute under the wedge product, so the usual cofactor
expansion works unchanged with ``wedge`` as multiplication.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .forms import ChartForm, FormError, add, evaluate_form, grid_points, scale, wedge

__all__ = ["SkewFormMatrix", "pfaffian", "conjugation_check", "block_diag"]


class SkewFormMatrix:
    """Square matrix of forms of one common even degree on one chart.

    Skewness is verified on a midpoint sample grid at construction, since the
    matrices usually come out of ``d(omega) - omega ^ omega`` as full tables.
    """

    def __init__(self, entries: Sequence[Sequence[ChartForm]], check: bool = True, samples: int = 4, tol: float = 1e-10):
        rows = [list(r) for r in entries]
        p = len(rows)
        if any(len(r) != p for r in rows):
            raise FormError("matrix must be square")
        self.entries = rows
        self.size = p
        if p:
            chart = rows[0][0].chart
            degree = rows[0][0].degree
            for r in rows:
                for e in r:
                    if e.chart != chart:
                        raise FormError("entries live on different charts")
                    if e.degree != degree:
                        raise FormError(f"mixed entry degrees {degree} and {e.degree}")
            if degree % 2:
                raise FormError("Pfaffian entries must have even degree")
            self.chart, self.degree = chart, degree
        else:
            self.chart, self.degree = None, 0
        if check and p:
            self.check_skew(samples, tol)

    def __getitem__(self, ij) -> ChartForm:
        i, j = ij
        return self.entries[i][j]

    def check_skew(self, samples: int = 4, tol: float = 1e-10) -> float:
        pts = grid_points(self.chart, samples)
        worst = 0.0
        for i in range(self.size):
            for j in range(i, self.size):
                if i == j:
                    r = np.max(np.abs(evaluate_form(self.entries[i][i], pts, check=False)), initial=0.0)
                else:
                    s = add(self.entries[i][j], self.entries[j][i])
                    r = np.max(np.abs(evaluate_form(s, pts, check=False)), initial=0.0)
                if r > tol:
                    raise FormError(f"matrix is not skew-symmetric at ({i + 1},{j + 1}): residual {r:.3g}")
                worst = max(worst, float(r))
        return worst

    def minor(self, drop: Sequence[int]) -> "SkewFormMatrix":
        keep = [k for k in range(self.size) if k not in drop]
        return SkewFormMatrix([[self.entries[a][b] for b in keep] for a in keep], check=False)


def _minor(a, drop):
    keep = [k for k in range(len(a)) if k not in drop]
    return [[a[r][c] for c in keep] for r in keep]


def pfaffian(a, row: int = 0):
    """Pfaffian by cofactor expansion along ``row`` (negative counts from the end).

    ``a`` is a real skew matrix (anything numpy can read) or a
    :class:`SkewFormMatrix`; the result is a float or a :class:`ChartForm`
    of degree ``size/2 * entry degree``.
    """
    if isinstance(a, SkewFormMatrix):
        if a.size % 2:
            raise FormError(f"Pfaffian of odd size {a.size}")
        if a.size == 0:
            raise FormError("empty form matrix has no chart; use 1.0")
        return _pf_forms(a.entries, row, ChartForm.function(a.chart, 1.0))
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("Pfaffian needs a square matrix")
    if m.shape[0] % 2:
        raise ValueError(f"Pfaffian of odd size {m.shape[0]}")
    if not np.allclose(m, -m.T, rtol=0.0, atol=1e-10 * max(1.0, float(np.max(np.abs(m), initial=0.0)))):
        raise ValueError("matrix is not skew-symmetric")
    return _pf_real(m.tolist(), row)


def _pf_real(a, row):
    n = len(a)
    if n == 0:
        return 1.0
    if n == 2:
        return a[0][1]
    i = min(row, n - 1) if row >= 0 else n + row
    total = 0.0
    for j in range(n):
        if j == i or a[i][j] == 0.0:
            continue
        sign = -1.0 if (i + j + 1 + (i > j)) % 2 else 1.0
        total += sign * a[i][j] * _pf_real(_minor(a, (i, j)), row)
    return total


def _pf_forms(a, row, one: ChartForm) -> ChartForm:
    n = len(a)
    if n == 0:
        return one
    if n == 2:
        return a[0][1]
    i = min(row, n - 1) if row >= 0 else n + row
    total = None
    for j in range(n):
        if j == i or a[i][j].is_zero():
            continue
        sign = -1.0 if (i + j + 1 + (i > j)) % 2 else 1.0
        term = scale(wedge(a[i][j], _pf_forms(_minor(a, (i, j)), row, one)), sign)
        total = term if total is None else add(total, term)
    if total is None:
        e = a[0][1]
        return ChartForm.zero(e.chart, e.degree * n // 2)
    return total


def conjugation_check(a, r) -> float:
    """``|Pf(R A R^-1) - Pf(A)|`` for a special orthogonal ``R``."""
    a = np.asarray(a, dtype=float)
    r = np.asarray(r, dtype=float)
    n = r.shape[0]
    if r.shape != (n, n) or a.shape != (n, n):
        raise ValueError("shape mismatch")
    if np.max(np.abs(r @ r.T - np.eye(n)), initial=0.0) > 1e-10 or abs(np.linalg.det(r) - 1.0) > 1e-10:
        raise ValueError("R is not special orthogonal")
    b = r @ a @ r.T
    b = 0.5 * (b - b.T)
    return abs(pfaffian(b) - pfaffian(a))


def block_diag(*blocks):
    """Block-diagonal matrix of real blocks or of form matrices on one chart."""
    if blocks and all(isinstance(b, SkewFormMatrix) for b in blocks):
        chart = blocks[0].chart
        deg = blocks[0].degree
        n = sum(b.size for b in blocks)
        rows = [[ChartForm.zero(chart, deg) for _ in range(n)] for _ in range(n)]
        off = 0
        for b in blocks:
            for i in range(b.size):
                for j in range(b.size):
                    rows[off + i][off + j] = b.entries[i][j]
            off += b.size
        return SkewFormMatrix(rows, check=False)
    from scipy.linalg import block_diag as _bd

    return _bd(*[np.asarray(b, dtype=float) for b in blocks])
