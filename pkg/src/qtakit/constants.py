"""Physical constants and the supported chemical species."""

# CODATA: 1 Angstrom in Bohr radii.
ANGSTROM_TO_BOHR = 1.8897261254578281

# 1 atomic unit of dipole moment (e*Bohr) in Debye.
AU_DIPOLE_TO_DEBYE = 2.5417464519

# Species covered by the dataset, in canonical order.
SPECIES = ("H", "C", "N", "O")

SPECIES_INDEX = {s: i for i, s in enumerate(SPECIES)}
