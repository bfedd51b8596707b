import random

import pytest

from powtrail import crypto, detection, hashcash, protocol

# The seven-trajectory layout whose exclusion tests yield exactly one
# triangle {T2,T3,T6} plus the maximal pairs {T1,T4}, {T3,T4}, {T3,T7} and
# the isolated T5.  Suspicious (edge) pairs simply never share a time slot;
# every other pair is separated by two distinct tags inside one slot.
FIXTURE_EDGES = {("T1", "T4"), ("T2", "T3"), ("T2", "T6"),
                 ("T3", "T4"), ("T3", "T6"), ("T3", "T7")}


def build_clique_fixture() -> list[detection.TrajectoryView]:
    names = [f"T{k}" for k in range(1, 8)]
    all_pairs = {(a, b) for i, a in enumerate(names) for b in names[i + 1:]}
    separated = sorted(all_pairs - FIXTURE_EDGES)
    entries: dict[str, list[tuple[float, bytes]]] = {n: [] for n in names}
    for slot, (a, b) in enumerate(separated):
        t = 100.0 * slot
        entries[a].append((t, f"tag-{slot}-a".encode()))
        entries[b].append((t, f"tag-{slot}-b".encode()))
    views = []
    for name in names:
        entries[name].sort()
        views.append(detection.TrajectoryView(
            name,
            tuple(t for t, _ in entries[name]),
            tuple(g for _, g in entries[name])))
    return views


FIXTURE_PARAMS = detection.DetectionParams(check_window=10.0, length_limit=100)


@pytest.fixture
def fig_fixture():
    return build_clique_fixture(), FIXTURE_PARAMS


def build_protocol_env(threshold: int, n_rsus: int, seed: int = 7,
                       space_bits: int = 24, hash_rate: float = 400.0,
                       table_rate: float = 0.9999):
    """Line of units with shared clock and a real-hashing policy.

    The near-one table rate keeps honest multi-hop runs deterministic
    (per-hop failure odds 1e-4) while still solving real puzzles.
    """
    material = crypto.generate_key_material(threshold, n_rsus,
                                            rng=random.Random(seed))
    table = hashcash.build_target_table(
        [table_rate], [10.0 * k for k in range(1, 14)], hash_rate,
        space=1 << space_bits)
    clock = protocol.SimClock()
    share_pks = {a: material.share_pk(a) for a, _ in material.shares.share_points}
    rsus = []
    for rsu_id in range(n_rsus):
        alpha, share = material.shares.share_points[rsu_id]
        rsus.append(protocol.RsuState(
            rsu_id=rsu_id, alpha=alpha, share=share, threshold=threshold,
            params=material.params, ta_pk=material.ta_pk,
            neighbor_share_pks=dict(share_pks), target_table=table,
            clock=clock, tag_rng=random.Random(seed * 1000 + rsu_id)))
    vehicle = protocol.VehicleState.with_keys(
        n_rsus + 2, material.ta_secret, material.params, clock,
        random.Random(seed + 1))
    return material, table, clock, rsus, vehicle
