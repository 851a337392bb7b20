"""Molecular graphs, SMILES subset IO, canonical forms and attachment."""

from geam.chem.graph import (
    AROMATIC_ELEMENTS,
    AROMATIC_PI_DONORS,
    Atom,
    Bond,
    BondOrder,
    ELEMENTS,
    Fragment,
    MolGraph,
    VALENCE_CAPS,
    attach,
    cut_bonds,
)
from geam.chem.smiles import (
    parse_smiles,
    read_smiles_file,
    write_smiles,
    write_smiles_file,
)
from geam.chem.canon import canonical_smiles, core_canonical_smiles, relabeled

__all__ = [
    "AROMATIC_ELEMENTS",
    "AROMATIC_PI_DONORS",
    "Atom",
    "Bond",
    "BondOrder",
    "ELEMENTS",
    "Fragment",
    "MolGraph",
    "VALENCE_CAPS",
    "attach",
    "canonical_smiles",
    "core_canonical_smiles",
    "cut_bonds",
    "parse_smiles",
    "read_smiles_file",
    "relabeled",
    "write_smiles",
    "write_smiles_file",
]
