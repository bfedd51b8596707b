"""Vehicle / roadside-unit message exchange that grows anonymous trajectories.

One hop works like this: the vehicle shows up with a puzzle solution seeded
by its last authorized message, a fresh temporary key, and a signature of
ownership under the previous key.  The unit checks ownership, checks that
every pending partial signature came from a unit in its neighborhood,
checks the puzzle against the travel-time target, then appends its own
time-stamped tag and partial signatures.  Whenever an entry prefix has
collected partial signatures from ``t`` distinct units, they are combined
into one standard signature -- the proof of location for that prefix.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from powtrail import crypto, hashcash
from powtrail.crypto import GroupElement, GroupParams, SignatureShare, StandardSignature
from powtrail.hashcash import PowSolution, Target, TargetTable

TAG_BYTES = 20
ENTRY_WIRE_BYTES = 24      # 4-byte timestamp + 20-byte tag
SHARE_WIRE_BYTES = 20      # truncated group-element encoding


class ProtocolError(Exception):
    """Local precondition failure (e.g. a vehicle out of key pairs)."""


class VerificationFailure(Exception):
    """A hop rejected at a named verification stage."""

    def __init__(self, stage: str, detail: str = ""):
        super().__init__(f"{stage} verification failed" + (f": {detail}" if detail else ""))
        self.stage = stage


@dataclass(slots=True)
class SimClock:
    """Injected simulated time; tests may add per-agent skew."""

    time: float = 0.0

    def now(self, skew: float = 0.0) -> float:
        return self.time + skew


@dataclass(frozen=True, slots=True)
class LocationTag:
    """Per-epoch random identity of one unit; rotates when the epoch advances."""

    rsu_id: int
    value: bytes
    epoch: int

    def __post_init__(self):
        if len(self.value) != TAG_BYTES:
            raise ProtocolError(f"location tag must be {TAG_BYTES} bytes")


@dataclass(frozen=True, slots=True)
class TimestampedEntry:
    timestamp: int
    tag: LocationTag
    wire: bytes = field(default=b"", compare=False, repr=False)

    def __post_init__(self):
        if not self.wire:
            object.__setattr__(self, "wire",
                               self.timestamp.to_bytes(4, "big") + self.tag.value)


@dataclass(slots=True)
class PendingProof:
    """Entry prefix still collecting partial signatures.

    ``m_exp`` caches the message-hash exponent of ``m_bytes`` so the many
    units that touch this prefix do not re-hash it.
    """

    prefix_len: int
    pk: GroupElement
    m_bytes: bytes
    shares: list[SignatureShare]
    m_exp: int = -1

    def __post_init__(self):
        if self.m_exp < 0:
            self.m_exp = crypto.message_exponent(self.m_bytes, _params_of(self.pk))

    def signer_indices(self) -> set[int]:
        return {s.signer_index for s in self.shares}


def _params_of(element: GroupElement) -> GroupParams:
    return GroupParams(order=element.order)


@dataclass(frozen=True, slots=True)
class LocationProof:
    """Finalized proof of location: prefix length, its key, the combined signature."""

    prefix_len: int
    pk: GroupElement
    signature: StandardSignature


@dataclass(slots=True)
class AuthorizedMessage:
    """The vehicle's accumulated authorized state after a hop.

    ``encoded`` is the canonical byte encoding of the whole message; it is
    the puzzle seed for the next hop and the body covered by the ownership
    signature, so both sides must derive it identically.
    """

    current_pk: GroupElement
    entries: list[TimestampedEntry]
    pending: list[PendingProof]
    proofs: list[LocationProof]
    encoded: bytes = b""

    def __post_init__(self):
        if not self.entries:
            raise ProtocolError("authorized message needs at least one entry")
        if not self.encoded:
            self.encoded = encode_authorized(self)


@dataclass(frozen=True, slots=True)
class TrajectoryRequest:
    pk: GroupElement
    certificate: crypto.Certificate


@dataclass(frozen=True, slots=True)
class CheckinMessage:
    prior: AuthorizedMessage
    pow: PowSolution
    next_pk: GroupElement
    owner_signature: StandardSignature


@dataclass(slots=True)
class Trajectory:
    """Chronological (timestamp, tag) chain plus its proofs of location."""

    entries: list[TimestampedEntry]
    proofs: list[LocationProof]
    traj_id: str = ""

    @property
    def length(self) -> int:
        return len(self.entries)

    @property
    def proven_length(self) -> int:
        return max((p.prefix_len for p in self.proofs), default=0)

    def pending_entries(self) -> list[TimestampedEntry]:
        """Tail entries too young to have a finalized proof."""
        return self.entries[self.proven_length:]


# ---------------------------------------------------------------------------
# Canonical encodings and wire sizes
# ---------------------------------------------------------------------------

def encode_entry(entry: TimestampedEntry) -> bytes:
    return entry.wire


def encode_m(pk: GroupElement, entries: list[TimestampedEntry]) -> bytes:
    """Proof-of-location body m_k: the hop key and every entry so far."""
    parts = [pk.encode(), len(entries).to_bytes(2, "big")]
    parts += [e.wire for e in entries]
    return b"".join(parts)


def encode_authorized(msg: AuthorizedMessage) -> bytes:
    width = (msg.current_pk.order.bit_length() + 7) // 8
    parts = [encode_m(msg.current_pk, msg.entries),
             len(msg.pending).to_bytes(2, "big")]
    for p in msg.pending:
        parts.append(p.prefix_len.to_bytes(2, "big"))
        parts.append(len(p.shares).to_bytes(1, "big"))
        for s in p.shares:
            parts.append(s.signer_index.to_bytes(2, "big"))
            parts.append(s.value.exponent.to_bytes(width, "big"))
    parts.append(len(msg.proofs).to_bytes(2, "big"))
    for proof in msg.proofs:
        parts.append(proof.prefix_len.to_bytes(2, "big"))
        parts.append(proof.pk.encode())
        parts.append(proof.signature.value.encode())
    return b"".join(parts)


def ownership_payload(prior_encoded: bytes, solution: PowSolution,
                      next_pk: GroupElement) -> bytes:
    value = solution.achieved_value.to_bytes(32, "big")
    return b"".join([prior_encoded, solution.nonce.to_bytes(8, "big"),
                     value, next_pk.encode()])


def message_size(l: int, t: int) -> int:
    """Entry-and-share wire bytes of one hop message: 24*l + 20*t."""
    return ENTRY_WIRE_BYTES * l + SHARE_WIRE_BYTES * t


def encode_hop_payload(entries: list[TimestampedEntry],
                       share_elements: list[GroupElement]) -> bytes:
    """Fixed-width payload a unit radios per hop.

    Contains the l entries (24 bytes each) and the group elements of the
    hop's fresh signature material (20 bytes each, low-order truncation of
    the 32-byte encoding).  Keys, share indices and the ownership signature
    ride in a separate header, so ``len()`` of this payload is exactly
    ``message_size(l, t)``.
    """
    parts = [encode_entry(e) for e in entries]
    parts += [el.encode()[-SHARE_WIRE_BYTES:] for el in share_elements]
    return b"".join(parts)


def describe_message(msg: AuthorizedMessage) -> dict:
    """Annotated JSON-friendly view of a message, for transcripts."""
    return {
        "pk": msg.current_pk.encode().hex(),
        "entries": [{"timestamp": e.timestamp, "rsu": e.tag.rsu_id,
                     "tag": e.tag.value.hex(), "epoch": e.tag.epoch}
                    for e in msg.entries],
        "pending": [{"prefix_len": p.prefix_len,
                     "signers": sorted(p.signer_indices())}
                    for p in msg.pending],
        "proofs": [{"prefix_len": p.prefix_len,
                    "signature": p.signature.value.encode().hex()}
                   for p in msg.proofs],
        "hex": msg.encoded.hex(),
    }


# ---------------------------------------------------------------------------
# Puzzle policies
# ---------------------------------------------------------------------------

class HashcashPolicy:
    """Real double-SHA256 puzzles; the unit recomputes the submitted nonce."""

    def solve(self, seed: bytes, target: Target, hash_budget: int) -> PowSolution:
        return hashcash.solve_puzzle(seed, target, hash_budget)

    def verify(self, seed: bytes, solution: PowSolution, target: Target) -> bool:
        return hashcash.verify_puzzle(seed, solution.nonce, target)


class SampledPolicy:
    """Analytic mode: the solution carries a pre-sampled outcome.

    Scenario runs sample per-hop solution counts from the Poisson model
    instead of hashing; the unit accepts the sampled verdict.  Only
    solutions flagged ``simulated`` are honored.
    """

    def verify(self, seed: bytes, solution: PowSolution, target: Target) -> bool:
        return solution.simulated and solution.valid


class DisabledPolicy:
    """Baseline without a puzzle gate: every check-in passes."""

    def verify(self, seed: bytes, solution: PowSolution, target: Target) -> bool:
        return True


SIMULATED_SUCCESS = PowSolution(0, 0, True, simulated=True)
SIMULATED_FAILURE = PowSolution(0, 0, False, simulated=True)


# ---------------------------------------------------------------------------
# Agent state
# ---------------------------------------------------------------------------

@dataclass(slots=True)
class RsuState:
    """One roadside unit: its share of the group key plus verification data."""

    rsu_id: int
    alpha: int
    share: int
    threshold: int
    params: GroupParams
    ta_pk: GroupElement
    neighbor_share_pks: dict[int, GroupElement]
    target_table: TargetTable
    clock: SimClock
    policy: object = field(default_factory=HashcashPolicy)
    epoch_length: float = 3600.0
    clock_skew: float = 0.0
    tag_rng: random.Random = field(default_factory=random.Random)
    _tag: LocationTag | None = None
    banned: set[int] = field(default_factory=set)

    def now(self) -> float:
        return self.clock.now(self.clock_skew)

    def current_tag(self) -> LocationTag:
        epoch = int(self.now() // self.epoch_length)
        if self._tag is None or self._tag.epoch != epoch:
            self._tag = LocationTag(self.rsu_id, self.tag_rng.randbytes(TAG_BYTES), epoch)
        return self._tag


@dataclass(slots=True)
class VehicleState:
    """A vehicle's certified temporary keys and its message in progress.

    Keys come from a pregenerated list; a ``key_factory`` callable may be
    supplied instead to mint certified keys on demand (simulation scale).
    """

    keys: list[tuple[int, GroupElement, crypto.Certificate]]
    params: GroupParams
    clock: SimClock
    next_key: int = 0
    current_sk: int = 0
    current: AuthorizedMessage | None = None
    key_factory: object = None

    @classmethod
    def with_keys(cls, count: int, ta_secret: int, params: GroupParams,
                  clock: SimClock, rng) -> "VehicleState":
        keys = []
        for _ in range(count):
            sk = rng.randrange(params.order)
            pk = params.generator ** sk
            keys.append((sk, pk, crypto.issue_certificate(ta_secret, pk, params)))
        return cls(keys=keys, params=params, clock=clock)

    def _peek_pk(self) -> GroupElement:
        self._ensure_key()
        return self.keys[self.next_key][1]

    def _take_key(self) -> tuple[int, GroupElement, crypto.Certificate]:
        self._ensure_key()
        key = self.keys[self.next_key]
        self.next_key += 1
        return key

    def _ensure_key(self) -> None:
        if self.next_key >= len(self.keys):
            if self.key_factory is None:
                raise ProtocolError("vehicle has no unused key pairs")
            self.keys.append(self.key_factory())


# ---------------------------------------------------------------------------
# Protocol operations
# ---------------------------------------------------------------------------

def vehicle_begin_trajectory(vehicle: VehicleState) -> TrajectoryRequest:
    """Open a new chain by presenting a fresh certified temporary key."""
    sk, pk, cert = vehicle._take_key()
    vehicle.current_sk = sk
    vehicle.current = None
    return TrajectoryRequest(pk, cert)


def rsu_handle_initial_request(rsu: RsuState,
                               request: TrajectoryRequest) -> AuthorizedMessage:
    """First hop: certificate check, then a single-entry authorized message."""
    if request.pk.exponent in rsu.banned:
        raise VerificationFailure("certificate", "session previously rejected")
    if request.certificate.subject_pk != request.pk or \
            not crypto.verify_certificate(rsu.ta_pk, request.certificate, rsu.params):
        rsu.banned.add(request.pk.exponent)
        raise VerificationFailure("certificate")
    entry = TimestampedEntry(int(rsu.now()), rsu.current_tag())
    m_bytes = encode_m(request.pk, [entry])
    first = PendingProof(1, request.pk, m_bytes, [])
    first.shares.append(crypto.sign_share_exp(first.m_exp, rsu.share,
                                              rsu.params, rsu.alpha))
    return _finalize_ready(rsu, request.pk, [entry], [first], [])


def vehicle_prepare_checkin(vehicle: VehicleState, target: Target,
                            hash_budget: int | None = None,
                            solution: PowSolution | None = None) -> CheckinMessage:
    """Solve the puzzle over the current message and sign the hand-over.

    Callers pass either a hash budget (real solving) or a pre-sampled
    solution (analytic mode).  An unsolved puzzle still produces a
    check-in; the next unit will reject it.
    """
    if vehicle.current is None:
        raise ProtocolError("vehicle holds no authorized message")
    seed = vehicle.current.encoded
    if solution is None:
        if hash_budget is None:
            raise ProtocolError("need a hash budget or a pre-sampled solution")
        solution = hashcash.solve_puzzle(seed, target, hash_budget)
    next_pk = vehicle._peek_pk()
    payload = ownership_payload(seed, solution, next_pk)
    owner_sig = crypto.sign(vehicle.current_sk, payload, vehicle.params)
    return CheckinMessage(vehicle.current, solution, next_pk, owner_sig)


def rsu_verify_ownership(rsu: RsuState, checkin: CheckinMessage) -> bool:
    """Step 4(a): the sender owns the chain and its shares came from neighbors."""
    prior = checkin.prior
    if prior.current_pk.exponent in rsu.banned:
        return False
    payload = ownership_payload(prior.encoded, checkin.pow, checkin.next_pk)
    if not crypto.verify_signature(prior.current_pk, payload,
                                   checkin.owner_signature, rsu.params):
        return False
    for pending in prior.pending:
        for share in pending.shares:
            neighbor_pk = rsu.neighbor_share_pks.get(share.signer_index)
            if neighbor_pk is None:
                return False
            if not crypto.verify_share_exp(neighbor_pk, pending.m_exp, share,
                                           rsu.params):
                return False
    return True


def rsu_verify_pow(rsu: RsuState, checkin: CheckinMessage,
                   arrival_time: float | None = None) -> bool:
    """Step 4(b): targets come from the travel time since the last entry."""
    t2 = rsu.now() if arrival_time is None else arrival_time
    traverse = t2 - checkin.prior.entries[-1].timestamp
    if traverse <= 0:
        return False
    target = hashcash.lookup_target(rsu.target_table, traverse)
    return rsu.policy.verify(checkin.prior.encoded, checkin.pow, target)


def rsu_issue_next(rsu: RsuState, checkin: CheckinMessage,
                   arrival_time: float | None = None) -> AuthorizedMessage:
    """Steps 4-5: append this unit's entry and signature material."""
    t2 = rsu.now() if arrival_time is None else arrival_time
    entries = checkin.prior.entries + [TimestampedEntry(int(t2), rsu.current_tag())]
    m_bytes = encode_m(checkin.next_pk, entries)
    pending = [PendingProof(p.prefix_len, p.pk, p.m_bytes, list(p.shares), p.m_exp)
               for p in checkin.prior.pending]
    pending.append(PendingProof(len(entries), checkin.next_pk, m_bytes, []))
    for p in pending:
        if rsu.alpha not in p.signer_indices():
            p.shares.append(crypto.sign_share_exp(p.m_exp, rsu.share,
                                                  rsu.params, rsu.alpha))
    return _finalize_ready(rsu, checkin.next_pk, entries, pending,
                           list(checkin.prior.proofs))


def _finalize_ready(rsu: RsuState, pk: GroupElement,
                    entries: list[TimestampedEntry],
                    pending: list[PendingProof],
                    proofs: list[LocationProof]) -> AuthorizedMessage:
    still_open = []
    for p in pending:
        if len(p.signer_indices()) >= rsu.threshold:
            sig = crypto.combine_shares(p.shares, rsu.threshold, rsu.params)
            proofs.append(LocationProof(p.prefix_len, p.pk, sig))
        else:
            still_open.append(p)
    proofs.sort(key=lambda pr: pr.prefix_len)
    return AuthorizedMessage(pk, entries, still_open, proofs)


def rsu_process_checkin(rsu: RsuState, checkin: CheckinMessage,
                        arrival_time: float | None = None) -> AuthorizedMessage:
    """Full hop: ownership, puzzle, then issuance.

    On any failure the session key is banned and this unit issues nothing;
    later messages reusing the key are rejected outright.
    """
    if not rsu_verify_ownership(rsu, checkin):
        rsu.banned.add(checkin.prior.current_pk.exponent)
        raise VerificationFailure("ownership")
    if not rsu_verify_pow(rsu, checkin, arrival_time):
        rsu.banned.add(checkin.prior.current_pk.exponent)
        raise VerificationFailure("PoW")
    return rsu_issue_next(rsu, checkin, arrival_time)


def vehicle_adopt(vehicle: VehicleState, msg: AuthorizedMessage) -> None:
    """Accept the unit's response; the reserved next key becomes current."""
    sk, pk, _ = vehicle._take_key()
    if pk != msg.current_pk:
        raise ProtocolError("unit response bound to an unexpected key")
    vehicle.current_sk = sk
    vehicle.current = msg


def extract_trajectory(msg: AuthorizedMessage, traj_id: str = "") -> Trajectory:
    """The anonymous identity: entries plus every finalized proof."""
    return Trajectory(entries=list(msg.entries), proofs=list(msg.proofs),
                      traj_id=traj_id)


def verify_trajectory(group_pk: GroupElement, trajectory: Trajectory,
                      params: GroupParams) -> bool:
    """Event-manager check: chronology plus every proof of location."""
    ts = [e.timestamp for e in trajectory.entries]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        return False
    for proof in trajectory.proofs:
        if not 1 <= proof.prefix_len <= len(trajectory.entries):
            return False
        m_bytes = encode_m(proof.pk, trajectory.entries[:proof.prefix_len])
        if not crypto.verify_signature(group_pk, m_bytes, proof.signature, params):
            return False
    return True
