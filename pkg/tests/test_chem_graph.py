import numpy as np
import pytest

from geam.chem import (
    AROMATIC_ELEMENTS,
    Atom,
    Bond,
    BondOrder,
    MolGraph,
    attach,
    cut_bonds,
    parse_smiles,
)
from geam.errors import AromaticityError, ChemError, InvalidSite, ValenceError

from helpers import assert_valid, isomorphic, random_molecule


def test_methane_implicit_h():
    mol = MolGraph.from_parts([Atom("C")], [])
    assert mol.atoms[0].implicit_h == 4


def test_implicit_h_subtracts_bond_orders():
    mol = parse_smiles("C=O")
    assert mol.atoms[0].implicit_h == 2
    assert mol.atoms[1].implicit_h == 0


def test_markers_reserve_valence():
    mol = parse_smiles("C(*)(*)")
    assert mol.attachment_points == (0, 0)
    assert mol.atoms[0].implicit_h == 2


def test_valence_cap_exceeded():
    with pytest.raises(ValenceError):
        MolGraph.from_parts(
            [Atom("C"), Atom("O")], [Bond(0, 1, BondOrder.TRIPLE)]
        )


def test_sulfur_picks_smallest_fitting_cap():
    low = parse_smiles("CSC")
    assert low.atoms[1].implicit_h == 0
    high = parse_smiles("CS(=O)(=O)C")
    assert high.atoms[1].implicit_h == 0  # cap 6: 1+2+2+1 = 6 units


def test_disconnected_rejected():
    with pytest.raises(ChemError):
        MolGraph.from_parts([Atom("C"), Atom("C")], [])


def test_duplicate_bond_rejected():
    with pytest.raises(ChemError):
        MolGraph.from_parts(
            [Atom("C"), Atom("C")],
            [Bond(0, 1), Bond(1, 0)],
        )


def test_aromatic_flag_restricted():
    assert "F" not in AROMATIC_ELEMENTS
    with pytest.raises(AromaticityError):
        MolGraph.from_parts(
            [Atom("F", aromatic=True), Atom("C")], [Bond(0, 1)]
        )


def test_aromatic_atom_needs_aromatic_ring():
    # An aromatic bond outside any ring is invalid.
    with pytest.raises(AromaticityError):
        MolGraph.from_parts(
            [Atom("C", aromatic=True), Atom("C", aromatic=True)],
            [Bond(0, 1, BondOrder.AROMATIC)],
        )


def test_ring_basis_benzene():
    mol = parse_smiles("c1ccccc1")
    assert len(mol.rings) == 1
    assert len(mol.rings[0]) == 6


def test_ring_basis_chain_empty():
    assert parse_smiles("CCCC").rings == ()


def test_ring_basis_fused_bicyclic():
    mol = parse_smiles("C1CC2CCC1CC2")
    assert len(mol.rings) == len(mol.bonds) - mol.n_atoms + 1 == 2


def test_ring_flags():
    mol = parse_smiles("CC1CC1")
    assert mol.ring_atom_flags == (False, True, True, True)
    ring_bonds = sum(mol.ring_bond_flags)
    assert ring_bonds == 3


def test_attach_atom_count_and_markers():
    base = parse_smiles("c1(*)c(*)ccc(*)c1")
    frag = parse_smiles("C(*)")
    out = attach(base, base.attachment_points[0], frag, 0)
    assert out.n_atoms == base.n_atoms + frag.n_atoms
    assert len(out.attachment_points) == 2
    assert_valid(out)


def test_attach_invalid_site():
    base = parse_smiles("C(*)C")
    frag = parse_smiles("C(*)")
    with pytest.raises(InvalidSite):
        attach(base, 1, frag, 0)
    with pytest.raises(InvalidSite):
        attach(base, 0, frag, 1)


def test_attach_disjoint_sites_commute():
    rng = np.random.default_rng(4)
    for _ in range(20):
        base = random_molecule(rng, n_atoms=5, n_markers=2)
        s1, s2 = base.attachment_points[0], base.attachment_points[1]
        f1 = random_molecule(rng, n_atoms=3, n_markers=1)
        f2 = random_molecule(rng, n_atoms=2, n_markers=1)
        ab = attach(attach(base, s1, f1, f1.attachment_points[0]), s2, f2,
                    f2.attachment_points[0])
        ba = attach(attach(base, s2, f2, f2.attachment_points[0]), s1, f1,
                    f1.attachment_points[0])
        assert isomorphic(ab, ba)


def test_cut_bonds_partition_and_markers():
    mol = parse_smiles("CCOCC")
    # Cut both C-O bonds: three pieces, markers at every cut end.
    targets = [
        i
        for i, b in enumerate(mol.bonds)
        if "O" in (mol.atoms[b.a].element, mol.atoms[b.b].element)
    ]
    pieces = cut_bonds(mol, targets)
    assert len(pieces) == 3
    assert sum(frag.n_atoms for frag, _ in pieces) == mol.n_atoms
    marker_total = sum(len(frag.attachment_points) for frag, _ in pieces)
    assert marker_total == 2 * len(targets)
    seen = sorted(i for _, idx in pieces for i in idx)
    assert seen == list(range(mol.n_atoms))


def test_cut_bonds_bad_index():
    with pytest.raises(ChemError):
        cut_bonds(parse_smiles("CC"), [5])


def test_cut_then_attach_round_trip():
    rng = np.random.default_rng(11)
    for _ in range(25):
        mol = random_molecule(rng, n_atoms=7, ring_chance=0.0)
        bi = int(rng.integers(len(mol.bonds)))
        pieces = cut_bonds(mol, [bi])
        if len(pieces) != 2:
            continue
        (fa, idx_a), (fb, _) = pieces
        cut = mol.bonds[bi]
        end_a = cut.a if cut.a in idx_a else cut.b
        site_a = idx_a.index(end_a)
        rejoined = attach(fa, site_a, fb, fb.attachment_points[0])
        assert isomorphic(rejoined, mol)


def test_without_attachment_points():
    frag = parse_smiles("C(*)C")
    plain = frag.without_attachment_points()
    assert plain.attachment_points == ()
    assert plain.atoms[0].implicit_h == frag.atoms[0].implicit_h + 1
