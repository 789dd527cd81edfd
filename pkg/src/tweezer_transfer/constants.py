"""Physical constants and species masses (SI)."""

from scipy import constants as _c

H = _c.h
KB = _c.k
AMU = _c.physical_constants["atomic mass constant"][0]

SPECIES_MASS_AMU = {
    "Rb87": 86.909180531,
    "Rb85": 84.911789737,
    "Cs133": 132.905451961,
}

RB87_MASS = SPECIES_MASS_AMU["Rb87"] * AMU
