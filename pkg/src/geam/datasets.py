"""Synthetic block datasets for end-to-end verification.

Molecules are built from a ring block plus one or two aliphatic side chains
joined at ring-carbon to chain-carbon single bonds, exactly the junctions the
cleavage rules cut. Decomposing a generated molecule therefore recovers its
building blocks, which makes motif-based oracles exact: a molecule contains
the motif ring if and only if it was built from it.
"""

from __future__ import annotations

import numpy as np

from geam.chem import (
    MolGraph,
    attach,
    canonical_smiles,
    parse_smiles,
    read_smiles_file,
    write_smiles,
)
from geam.errors import EmptyDataset
from geam.oracles import PropertyOracle

MOTIF_RING = "c1ccncc1"
DECOY_RINGS = (
    "c1ccccc1",
    "c1ccoc1",
    "c1ccsc1",
    "C1CCCCC1",
    "C1CCCC1",
)
CHAINS = (
    "C*",
    "C(*)C",
    "C(*)CC",
    "C(*)CCC",
    "C(*)CO",
    "C(*)CN",
    "C(*)COC",
    "C(*)C(C)C",
)

# Benzene with three open positions, the default assembly starting point.
SEED_SMILES = "c1(*)c(*)ccc(*)c1"


def _ring_with_markers(ring: MolGraph, positions: list[int]) -> MolGraph:
    return MolGraph.from_parts(ring.atoms, ring.bonds, positions)


def generate_block_dataset(
    n: int,
    rng: np.random.Generator,
    motif: str = MOTIF_RING,
    motif_rate: float = 0.5,
    max_substituents: int = 2,
    max_tries: int | None = None,
) -> list[MolGraph]:
    """Sample ``n`` distinct block molecules; about ``motif_rate`` carry the motif."""
    motif_ring = parse_smiles(motif)
    decoys = [parse_smiles(s) for s in DECOY_RINGS]
    chains = [parse_smiles(s) for s in CHAINS]
    seen: set[str] = set()
    out: list[MolGraph] = []
    tries = 0
    limit = max_tries if max_tries is not None else 200 * n
    while len(out) < n:
        tries += 1
        if tries > limit:
            raise EmptyDataset(
                f"could not sample {n} distinct molecules in {limit} tries"
            )
        ring = motif_ring if rng.random() < motif_rate else decoys[
            rng.integers(len(decoys))
        ]
        open_atoms = [
            i for i, a in enumerate(ring.atoms) if a.implicit_h >= 1
        ]
        k = int(rng.integers(1, max_substituents + 1))
        k = min(k, len(open_atoms))
        positions = [int(i) for i in rng.choice(len(open_atoms), size=k, replace=False)]
        mol = _ring_with_markers(ring, [open_atoms[i] for i in positions])
        # Base atoms keep their indices across attach calls, so the original
        # marker positions stay valid while sites remain open.
        for site in list(mol.attachment_points):
            chain = chains[rng.integers(len(chains))]
            mol = attach(mol, site, chain, chain.attachment_points[0])
        canon = canonical_smiles(mol)
        if canon in seen:
            continue
        seen.add(canon)
        out.append(mol)
    return out


def label_dataset(
    mols: list[MolGraph], oracle: PropertyOracle
) -> list[tuple[MolGraph, float]]:
    return [(mol, oracle.evaluate(mol).y) for mol in mols]


def write_dataset(path: str, labeled: list[tuple[MolGraph, float]]) -> None:
    """Tab-separated ``SMILES<TAB>Y`` lines."""
    with open(path, "w") as fh:
        for mol, y in labeled:
            fh.write(f"{write_smiles(mol)}\t{y!r}\n")


def read_dataset(path: str) -> list[tuple[MolGraph, float]]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise EmptyDataset(
                    f"{path}:{lineno}: expected SMILES<TAB>Y, got {line!r}"
                )
            out.append((parse_smiles(parts[0]), float(parts[1])))
    if not out:
        raise EmptyDataset(f"{path} holds no molecules")
    return out


def reference_fingerprint_set(mols: list[MolGraph]):
    from geam.fingerprints import ecfp

    return [ecfp(mol) for mol in mols]


def read_reference_smiles(path: str) -> list[MolGraph]:
    return [parse_smiles(s) for s in read_smiles_file(path)]
