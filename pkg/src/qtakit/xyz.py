"""Extended-XYZ parser for QM9-style molecule files.

Layout: an atom-count line, one metadata line, then one atom line per
atom (element, x, y, z, extra columns ignored). Coordinates default to
Angstrom and are converted to Bohr unless the metadata line carries a
``units=bohr`` token.

Two metadata dialects are recognized:
  * the QM9 property line ``gdb <index> A B C mu alpha homo lumo gap
    r2 zpve u0 u h g cv`` (tab or space separated), and
  * generic ``key=value`` tokens (id=..., units=..., alpha=..., ...).
"""

from __future__ import annotations

import numpy as np

from .constants import ANGSTROM_TO_BOHR, SPECIES
from .dataset import MoleculeRecord
from .errors import ParseError

__all__ = ["parse_xyz_extended"]

# QM9 property line: tag index followed by 15 floats in this order.
_QM9_FIELDS = (
    "rot_a",
    "rot_b",
    "rot_c",
    "mu",
    "alpha",
    "homo",
    "lumo",
    "gap",
    "r2",
    "zpve",
    "u0",
    "u",
    "h",
    "g",
    "cv",
)


def _float(token: str, lineno: int) -> float:
    # QM9 files occasionally use Fortran-style '*^' exponents.
    try:
        return float(token.replace("*^", "e"))
    except ValueError:
        raise ParseError(f"non-numeric field {token!r}", line=lineno) from None


def parse_xyz_extended(text: str, mol_id: str | None = None) -> MoleculeRecord:
    """Parse one extended-XYZ block into a MoleculeRecord (Bohr)."""
    lines = text.splitlines()
    if len(lines) < 2:
        raise ParseError("truncated XYZ: need a count line and a metadata line", line=1)
    try:
        n_atoms = int(lines[0].strip())
    except ValueError:
        raise ParseError(f"atom count line is not an integer: {lines[0]!r}", line=1) from None
    if n_atoms < 1:
        raise ParseError("atom count must be >= 1", line=1)
    if len(lines) < 2 + n_atoms:
        raise ParseError(
            f"expected {n_atoms} atom lines, file has {len(lines) - 2}", line=len(lines)
        )

    props: dict[str, float] = {}
    units = "angstrom"
    rec_id = mol_id
    meta = lines[1].split()
    if meta and meta[0] == "gdb":
        if len(meta) < 2 + len(_QM9_FIELDS):
            raise ParseError(
                f"QM9 property line has {len(meta)} fields, expected {2 + len(_QM9_FIELDS)}",
                line=2,
            )
        if rec_id is None:
            rec_id = f"gdb_{meta[1]}"
        for name, token in zip(_QM9_FIELDS, meta[2:]):
            props[name] = _float(token, 2)
    else:
        for token in meta:
            if "=" not in token:
                continue
            key, _, value = token.partition("=")
            key = key.lower()
            if key == "units":
                units = value.lower()
            elif key == "id":
                rec_id = value
            else:
                props[key] = _float(value, 2)
    if units not in ("angstrom", "bohr"):
        raise ParseError(f"unknown units {units!r} (use angstrom or bohr)", line=2)

    elements = []
    positions = np.empty((n_atoms, 3))
    for k in range(n_atoms):
        lineno = 3 + k
        fields = lines[2 + k].split()
        if len(fields) < 4:
            raise ParseError(f"atom line needs element + 3 coordinates", line=lineno)
        el = fields[0]
        if el == "F":
            raise ParseError(
                "fluorine-containing molecules are excluded from this dataset", line=lineno
            )
        if el not in SPECIES:
            raise ParseError(f"unknown element {el!r}", line=lineno)
        elements.append(el)
        positions[k] = [_float(fields[i], lineno) for i in (1, 2, 3)]

    if units == "angstrom":
        positions *= ANGSTROM_TO_BOHR
    return MoleculeRecord(
        id=rec_id if rec_id is not None else "mol",
        elements=elements,
        positions=positions,
        qm9_props=props,
    )
