"""Parser for the atomic-property summary (`.sumviz`-style) subset.

Only two sections are consumed, each introduced by a sentinel line and
holding a whitespace-separated column table terminated by a blank line
or the next sentinel:

  Some Atomic Properties:
    columns Atom, X, Y, Z, N, LI   (coordinates in Bohr, populations e)
  Atomic Multipole Moments:
    columns Atom, Mu_X, Mu_Y, Mu_Z plus the quadrupole in either
    Cartesian form (Q_XX Q_XY Q_XZ Q_YY Q_YZ Q_ZZ, converted to the
    traceless 5-vector) or already-reduced form (Q_XY Q_XZ Q_YZ Q_AN
    Q_ZZ, stored directly).

Atom labels are element symbols with a 1-based index (C1, H2, ...).
All numeric fields are atomic units. Anything between or around the
sections is ignored, so real AIMAll output with extra sections parses
as long as the two tables exist.
"""

from __future__ import annotations

import re

import numpy as np

from .dataset import AtomTargets, MoleculeRecord
from .errors import ParseError
from .geometry import to_traceless5

__all__ = ["parse_sumviz", "PROPERTIES_SENTINEL", "MULTIPOLES_SENTINEL"]

PROPERTIES_SENTINEL = "Some Atomic Properties"
MULTIPOLES_SENTINEL = "Atomic Multipole Moments"

_PROP_COLUMNS = ("atom", "x", "y", "z", "n", "li")
_MU_COLUMNS = ("atom", "mu_x", "mu_y", "mu_z")
_Q_CARTESIAN = ("q_xx", "q_xy", "q_xz", "q_yy", "q_yz", "q_zz")
_Q_REDUCED = ("q_xy", "q_xz", "q_yz", "q_an", "q_zz")

_ATOM_LABEL = re.compile(r"^([A-Z][a-z]?)(\d+)$")


def _find_section(lines, sentinel):
    """Return (header_index, rows) where rows is a list of (lineno, fields)."""
    start = None
    for i, line in enumerate(lines):
        if line.strip().startswith(sentinel):
            start = i
            break
    if start is None:
        raise ParseError(f"missing section {sentinel!r}", line=len(lines) or 1)
    i = start + 1
    n = len(lines)
    # Skip blank and decorative separator lines before the column header.
    while i < n and (not lines[i].strip() or set(lines[i].strip()) <= {"-", "="}):
        i += 1
    if i >= n:
        raise ParseError(f"section {sentinel!r} has no column header", line=n)
    header = [c.lower() for c in lines[i].split()]
    rows = []
    i += 1
    while i < n:
        stripped = lines[i].strip()
        if not stripped or stripped.startswith((PROPERTIES_SENTINEL, MULTIPOLES_SENTINEL)):
            break
        if set(stripped) <= {"-", "="}:
            i += 1
            continue
        rows.append((i + 1, lines[i].split()))
        i += 1
    if not rows:
        raise ParseError(f"section {sentinel!r} has no data rows", line=i)
    return header, rows


def _column_map(header, required, sentinel, lineno_hint):
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(
            f"section {sentinel!r} is missing columns: {', '.join(sorted(missing))}",
            line=lineno_hint,
        )
    return {c: header.index(c) for c in header}


def _parse_label(label, lineno):
    m = _ATOM_LABEL.match(label)
    if not m:
        raise ParseError(f"malformed atom label {label!r}", line=lineno)
    return m.group(1), int(m.group(2))


def _float(token, lineno):
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"malformed number {token!r}", line=lineno) from None


def parse_sumviz(text: str, mol_id: str = "mol") -> tuple[MoleculeRecord, list[AtomTargets]]:
    """Parse the two-section subset into geometry plus per-atom targets."""
    if not text.strip():
        raise ParseError("empty input", line=1)
    lines = text.splitlines()

    header_p, rows_p = _find_section(lines, PROPERTIES_SENTINEL)
    cols_p = _column_map(header_p, _PROP_COLUMNS, PROPERTIES_SENTINEL, rows_p[0][0] - 1)

    elements, positions, pops = [], [], []
    for lineno, fields in rows_p:
        if len(fields) != len(header_p):
            raise ParseError(
                f"expected {len(header_p)} fields, got {len(fields)}", line=lineno
            )
        element, _ = _parse_label(fields[cols_p["atom"]], lineno)
        elements.append(element)
        positions.append([_float(fields[cols_p[a]], lineno) for a in ("x", "y", "z")])
        pops.append(
            (_float(fields[cols_p["n"]], lineno), _float(fields[cols_p["li"]], lineno))
        )

    header_m, rows_m = _find_section(lines, MULTIPOLES_SENTINEL)
    cols_m = _column_map(header_m, _MU_COLUMNS, MULTIPOLES_SENTINEL, rows_m[0][0] - 1)
    if all(c in header_m for c in _Q_CARTESIAN):
        q_layout = _Q_CARTESIAN
    elif all(c in header_m for c in _Q_REDUCED):
        q_layout = _Q_REDUCED
    else:
        raise ParseError(
            f"section {MULTIPOLES_SENTINEL!r} is missing quadrupole columns "
            f"(need {' '.join(_Q_CARTESIAN)} or {' '.join(_Q_REDUCED)})",
            line=rows_m[0][0] - 1,
        )

    if len(rows_m) != len(rows_p):
        raise ParseError(
            f"atom count mismatch: {len(rows_p)} property rows vs "
            f"{len(rows_m)} multipole rows",
            line=rows_m[-1][0],
        )

    targets = []
    for k, (lineno, fields) in enumerate(rows_m):
        if len(fields) != len(header_m):
            raise ParseError(
                f"expected {len(header_m)} fields, got {len(fields)}", line=lineno
            )
        element, _ = _parse_label(fields[cols_m["atom"]], lineno)
        if element != elements[k]:
            raise ParseError(
                f"atom order mismatch: {element} vs {elements[k]} at row {k + 1}",
                line=lineno,
            )
        mu = np.array([_float(fields[cols_m[c]], lineno) for c in _MU_COLUMNS[1:]])
        q_vals = [_float(fields[cols_m[c]], lineno) for c in q_layout]
        if q_layout is _Q_CARTESIAN:
            qxx, qxy, qxz, qyy, qyz, qzz = q_vals
            quad = to_traceless5(
                np.array([[qxx, qxy, qxz], [qxy, qyy, qyz], [qxz, qyz, qzz]])
            )
        else:
            quad = np.array(q_vals)
        n_e, li = pops[k]
        targets.append(AtomTargets(n_e=n_e, li=li, mu=mu, quad=quad))

    record = MoleculeRecord(
        id=mol_id, elements=elements, positions=np.array(positions)
    )
    return record, targets
