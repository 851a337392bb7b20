import numpy as np
import pytest

from geam.chem import canonical_smiles, parse_smiles
from geam.errors import PropertyRangeError
from geam.fragment import (
    DEFAULT_RULES,
    decompose,
    extract_candidates,
    matching_bonds,
    reassemble,
    rules_from_json,
    rules_to_json,
)

from helpers import isomorphic, random_molecule


def test_benzene_is_one_fragment():
    decomp = decompose(parse_smiles("c1ccccc1"))
    assert decomp.n_fragments == 1
    assert decomp.fragments[0].attachment_points == ()


def test_ethylbenzene_splits_at_aryl_bond():
    decomp = decompose(parse_smiles("CCc1ccccc1"))
    assert decomp.n_fragments == 2
    texts = sorted(canonical_smiles(f) for f in decomp.fragments)
    ring = [f for f in decomp.fragments if f.n_atoms == 6][0]
    chain = [f for f in decomp.fragments if f.n_atoms == 2][0]
    assert len(ring.attachment_points) == 1
    assert len(chain.attachment_points) == 1
    assert len(set(texts)) == 2


def test_amide_splits_on_cn_bond():
    decomp = decompose(parse_smiles("CC(=O)NC"))
    sizes = sorted(f.n_atoms for f in decomp.fragments)
    # The acetyl piece keeps its C=O; the split is on the C-N bond.
    assert 3 in sizes and decomp.n_fragments >= 2


def test_ether_splits():
    decomp = decompose(parse_smiles("CCOC"))
    assert decomp.n_fragments >= 2


def test_ring_bonds_never_cut():
    mol = parse_smiles("C1CCOCC1")  # ether inside a ring
    decomp = decompose(mol)
    assert decomp.n_fragments == 1


def test_aromatic_aromatic_join_not_cut():
    # A direct ring-ring bond matches no rule, so the biphenyl-like pair
    # stays intact.
    decomp = decompose(parse_smiles("c1ccccc1c1ccncc1"))
    assert decomp.n_fragments == 1


def test_partition_covers_all_atoms():
    rng = np.random.default_rng(5)
    for _ in range(50):
        mol = random_molecule(rng)
        decomp = decompose(mol)
        flat = sorted(i for ids in decomp.atom_indices for i in ids)
        assert flat == list(range(mol.n_atoms))
        assert sum(f.n_atoms for f in decomp.fragments) == mol.n_atoms


def test_cut_bond_count_matches_marker_count():
    mol = parse_smiles("CCc1ccc(OC)cc1")
    decomp = decompose(mol)
    markers = sum(len(f.attachment_points) for f in decomp.fragments)
    assert markers == 2 * len(decomp.cuts)


def test_reassembly_round_trip_random():
    rng = np.random.default_rng(6)
    checked = 0
    for _ in range(100):
        mol = random_molecule(rng)
        decomp = decompose(mol)
        rebuilt = reassemble(decomp)
        if mol.n_atoms <= 12:
            assert isomorphic(rebuilt, mol)
            checked += 1
        else:
            assert canonical_smiles(rebuilt) == canonical_smiles(mol)
    assert checked >= 50


def test_reassembly_round_trip_realistic():
    for text in ("CCc1ccccc1", "CC(=O)NCCc1ccncc1", "COc1ccc(CC(C)C)cc1"):
        mol = parse_smiles(text)
        rebuilt = reassemble(decompose(mol))
        assert canonical_smiles(rebuilt) == canonical_smiles(mol)


def test_matching_bonds_are_acyclic_single():
    mol = parse_smiles("CCc1ccc(OC)cc1")
    hits = matching_bonds(mol, DEFAULT_RULES)
    assert hits
    for bi, rule_id in hits:
        assert not mol.ring_bond_flags[bi]
        assert isinstance(rule_id, str)


def test_extract_candidates_dedup_and_multiplicity():
    mol = parse_smiles("CCc1ccccc1")
    single = extract_candidates([(mol, 0.5)])
    double = extract_candidates([(mol, 0.5), (mol, 0.7)])
    assert {c.canonical for c in single} == {c.canonical for c in double}
    assert all(c.support_size == 1 for c in single)
    assert all(c.support_size == 2 for c in double)


def test_extract_candidates_empty():
    assert extract_candidates([]) == []


def test_extract_candidates_matches_brute_force():
    rng = np.random.default_rng(7)
    dataset = [(random_molecule(rng), 0.5) for _ in range(50)]
    expected = set()
    for mol, _ in dataset:
        for frag in decompose(mol).fragments:
            expected.add(canonical_smiles(frag))
    got = {c.canonical for c in extract_candidates(dataset)}
    assert got == expected


def test_extract_candidates_validates_y():
    mol = parse_smiles("CC")
    with pytest.raises(PropertyRangeError):
        extract_candidates([(mol, 1.5)])
    with pytest.raises(PropertyRangeError):
        extract_candidates([(mol, -0.1)])


def test_rule_table_json_round_trip():
    text = rules_to_json(DEFAULT_RULES)
    assert rules_from_json(text) == DEFAULT_RULES


def test_decomposition_deterministic():
    mol = parse_smiles("CC(=O)NCCc1ccc(OC)cc1")
    a = decompose(mol)
    b = decompose(mol)
    assert [canonical_smiles(f) for f in a.fragments] == [
        canonical_smiles(f) for f in b.fragments
    ]
    assert a.cuts == b.cuts
