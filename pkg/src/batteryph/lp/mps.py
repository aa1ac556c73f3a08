"""Fixed-format MPS export and import.

Name fields sit at the fixed column positions (2-3, 5-12, 15-22, 40-47).
Numbers use the shortest text that round-trips exactly, so a value can run
past its 12-character field; the writer therefore emits one matrix entry per
line and the reader splits fields on whitespace, which accepts both layouts
as long as names contain no spaces.

Names longer than 8 characters (or containing spaces, or duplicated) force
mangling of every row and column to R0000001 / C0000001 style names.  The
original names are kept in ``* NAMEMAP`` comment lines that ``read_mps``
uses to restore them.  The objective constant is written as the negated
right-hand side of the objective row.
"""

from __future__ import annotations

import math

import numpy as np

from .model import StandardFormLP

OBJ = "COST"
SENSE_CODE = {"L": "L", "G": "G", "E": "E"}


class MPSFormatError(ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _num(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _fits(names) -> bool:
    return all(0 < len(n) <= 8 and " " not in n for n in names) and len(set(names)) == len(names)


def _line(f1="", f2="", f3="", f4="", f5="", f6=""):
    # fixed positions: field 1 at col 2, field 2 at col 5, 3 at col 15, 4 at col 25, 5 at 40, 6 at 50
    s = " " + f1.ljust(2) + " " + f2.ljust(8)
    if f3 or f4:
        s += "  " + f3.ljust(8)
    if f4:
        s += "  " + f4
    if f5:
        s = s.ljust(39) + f5.ljust(8) + "  " + f6
    return s.rstrip()


def write_mps(lp: StandardFormLP, name=None) -> str:
    """Serialize ``lp`` as fixed-format MPS text."""
    lp.validate()
    n, m = lp.num_cols, lp.num_rows
    cnames = list(lp.col_names)
    rnames = list(lp.row_names)
    mangle = not (_fits(cnames) and _fits(rnames) and OBJ not in rnames)
    out = []
    if mangle:
        cout = [f"C{j + 1:07d}" for j in range(n)]
        rout = [f"R{i + 1:07d}" for i in range(m)]
        out.append("* names mangled to 8 characters; NAMEMAP lines restore them")
        for a, b in zip(cout, cnames):
            out.append(f"* NAMEMAP C {a} {b}")
        for a, b in zip(rout, rnames):
            out.append(f"* NAMEMAP R {a} {b}")
    else:
        cout, rout = cnames, rnames
    title = (name or lp.name or "LP").replace(" ", "_")
    out.append(f"NAME          {title}")
    out.append("ROWS")
    out.append(_line("N", OBJ))
    for i in range(m):
        out.append(_line(SENSE_CODE[lp.senses[i]], rout[i]))
    out.append("COLUMNS")
    A = lp.matrix().tocsc()
    for j in range(n):
        lo, hi = A.indptr[j], A.indptr[j + 1]
        wrote = False
        if lp.c[j] != 0.0:
            out.append(_line("", cout[j], OBJ, _num(lp.c[j])))
            wrote = True
        for k in range(lo, hi):
            if A.data[k] != 0.0:
                out.append(_line("", cout[j], rout[A.indices[k]], _num(A.data[k])))
                wrote = True
        if not wrote:
            out.append(_line("", cout[j], OBJ, "0"))
    out.append("RHS")
    if lp.obj_offset != 0.0:
        out.append(_line("", "RHS", OBJ, _num(-lp.obj_offset)))
    for i in range(m):
        if lp.rhs[i] != 0.0:
            out.append(_line("", "RHS", rout[i], _num(lp.rhs[i])))
    rng = [(i, lp.ranges[i]) for i in range(m) if not math.isnan(lp.ranges[i])]
    if rng:
        out.append("RANGES")
        for i, r in rng:
            out.append(_line("", "RNG", rout[i], _num(r)))
    bnd = []
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        c = cout[j]
        if lo == hi:
            bnd.append(_line("FX", "BND", c, _num(lo)))
        elif lo == -np.inf and hi == np.inf:
            bnd.append(_line("FR", "BND", c))
        else:
            if lo == -np.inf:
                bnd.append(_line("MI", "BND", c))
            elif lo != 0.0:
                bnd.append(_line("LO", "BND", c, _num(lo)))
            if hi != np.inf:
                bnd.append(_line("UP", "BND", c, _num(hi)))
    if bnd:
        out.append("BOUNDS")
        out.extend(bnd)
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def _float(tok, lineno):
    try:
        v = float(tok)
    except ValueError:
        raise MPSFormatError(lineno, f"expected a number, got {tok!r}") from None
    if math.isnan(v):
        raise MPSFormatError(lineno, "NaN is not allowed")
    return v


def read_mps(text: str) -> StandardFormLP:
    """Parse MPS text (as written by ``write_mps`` or any fixed/free layout without spaces in names)."""
    cmap, rmap = {}, {}
    section = None
    name = "LP"
    obj_row = None
    row_index, senses, rnames = {}, [], []
    col_index, cnames = {}, []
    cost = {}
    trip = []
    rhs_vals, ranges = {}, {}
    obj_rhs = 0.0
    bounds = {}
    seen_end = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n\r")
        if not line.strip():
            continue
        if line.startswith("*"):
            parts = line.split()
            if len(parts) == 5 and parts[1] == "NAMEMAP":
                (cmap if parts[2] == "C" else rmap)[parts[3]] = parts[4]
            elif len(parts) > 5 and parts[1] == "NAMEMAP":
                # original name contained spaces
                orig = line.split(None, 4)[4]
                (cmap if parts[2] == "C" else rmap)[parts[3]] = orig
            continue
        if seen_end:
            raise MPSFormatError(lineno, "content after ENDATA")
        if not line[0].isspace():
            parts = line.split()
            head = parts[0].upper()
            if head == "NAME":
                name = parts[1] if len(parts) > 1 else "LP"
                section = "NAME"
            elif head in ("ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS"):
                section = head
            elif head == "ENDATA":
                seen_end = True
            elif head == "OBJSENSE":
                raise MPSFormatError(lineno, "OBJSENSE is not supported (minimization only)")
            else:
                raise MPSFormatError(lineno, f"unknown section {parts[0]!r}")
            continue
        f = line.split()
        if section == "ROWS":
            if len(f) != 2:
                raise MPSFormatError(lineno, "ROWS entry needs a type and a name")
            kind, rn = f[0].upper(), f[1]
            if kind == "N":
                if obj_row is None:
                    obj_row = rn
                continue
            if kind not in ("L", "G", "E"):
                raise MPSFormatError(lineno, f"unknown row type {f[0]!r}")
            if rn in row_index:
                raise MPSFormatError(lineno, f"duplicate row {rn!r}")
            row_index[rn] = len(senses)
            senses.append(kind)
            rnames.append(rn)
        elif section == "COLUMNS":
            if "'MARKER'" in f:
                raise MPSFormatError(lineno, "integer markers are not supported")
            if len(f) not in (3, 5):
                raise MPSFormatError(lineno, "COLUMNS entry needs a column and one or two (row, value) pairs")
            cn = f[0]
            if cn not in col_index:
                col_index[cn] = len(cnames)
                cnames.append(cn)
            j = col_index[cn]
            for rn, val in zip(f[1::2], f[2::2]):
                v = _float(val, lineno)
                if rn == obj_row:
                    cost[j] = cost.get(j, 0.0) + v
                elif rn in row_index:
                    trip.append((row_index[rn], j, v))
                else:
                    raise MPSFormatError(lineno, f"unknown row {rn!r}")
        elif section in ("RHS", "RANGES"):
            if len(f) not in (2, 3, 4, 5):
                raise MPSFormatError(lineno, f"malformed {section} entry")
            pairs = f[1:] if len(f) in (3, 5) else f
            for rn, val in zip(pairs[0::2], pairs[1::2]):
                v = _float(val, lineno)
                if rn == obj_row and section == "RHS":
                    obj_rhs = v
                elif rn in row_index:
                    (rhs_vals if section == "RHS" else ranges)[row_index[rn]] = v
                else:
                    raise MPSFormatError(lineno, f"unknown row {rn!r}")
        elif section == "BOUNDS":
            if len(f) < 3:
                raise MPSFormatError(lineno, "BOUNDS entry needs a type, a set name and a column")
            kind, cn = f[0].upper(), f[2]
            if cn not in col_index:
                raise MPSFormatError(lineno, f"unknown column {cn!r}")
            j = col_index[cn]
            lo, hi = bounds.get(j, (0.0, np.inf))
            if kind in ("UP", "LO", "FX"):
                if len(f) != 4:
                    raise MPSFormatError(lineno, f"{kind} bound needs a value")
                v = _float(f[3], lineno)
                if kind == "UP":
                    hi = v
                    if v < 0 and lo == 0.0 and j not in bounds:
                        lo = -np.inf
                elif kind == "LO":
                    lo = v
                else:
                    lo = hi = v
            elif kind == "FR":
                lo, hi = -np.inf, np.inf
            elif kind == "MI":
                lo = -np.inf
            elif kind == "PL":
                hi = np.inf
            else:
                raise MPSFormatError(lineno, f"unsupported bound type {f[0]!r}")
            bounds[j] = (lo, hi)
        elif section == "NAME":
            raise MPSFormatError(lineno, "data before the ROWS section")
        else:
            raise MPSFormatError(lineno, "data outside any section")
    if not seen_end:
        raise MPSFormatError(len(text.splitlines()), "missing ENDATA")
    if obj_row is None:
        raise MPSFormatError(1, "no objective (N) row")
    n, m = len(cnames), len(senses)
    c = np.zeros(n)
    for j, v in cost.items():
        c[j] = v
    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    for j, (lo, hi) in bounds.items():
        lb[j], ub[j] = lo, hi
    rhs = np.zeros(m)
    for i, v in rhs_vals.items():
        rhs[i] = v
    rng = np.full(m, np.nan)
    for i, v in ranges.items():
        rng[i] = v
    rows = np.array([t[0] for t in trip], dtype=np.int64)
    cols = np.array([t[1] for t in trip], dtype=np.int64)
    vals = np.array([t[2] for t in trip], dtype=float)
    lp = StandardFormLP(c=c, rows=rows, cols=cols, vals=vals, senses=senses, rhs=rhs, lb=lb, ub=ub,
                        col_names=[cmap.get(x, x) for x in cnames],
                        row_names=[rmap.get(x, x) for x in rnames],
                        ranges=rng, obj_offset=-obj_rhs, name=name)
    lp.validate()
    return lp
