"""Shamir secret sharing and threshold signatures over a test pairing group.

The trusted authority deals additive shares of a group signing key to the
roadside units; any ``t`` of them can jointly produce one standard signature
that verifies under the single group public key.  Certificates on vehicle
temporary keys are plain signatures by the authority's own key.

The default group backend is *exponent transparent*: every element is stored
as its discrete log with respect to the generator.  All elements in this
system arise from hashing into the group and exponentiation, so the
representation is closed, and the two pairings of signature verification
reduce to exact integer arithmetic.  This is algebraically faithful but
intentionally NOT cryptographically hard; swap in a real pairing library
behind the same operations for production use.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

# 256-bit prime field (secp256k1 group order, widely used in cryptography).
DEFAULT_ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141

EXPONENT_TRANSPARENT = "exponent_transparent"
EXTERNAL_PAIRING = "external_pairing"


class CryptoError(ValueError):
    """Invalid parameters for a sharing or signing operation."""


@dataclass(frozen=True, slots=True)
class GroupParams:
    """Cyclic group of prime order ``q`` with generator ``g``."""

    order: int = DEFAULT_ORDER
    generator_exp: int = 1
    backend: str = EXPONENT_TRANSPARENT

    def __post_init__(self):
        if self.backend != EXPONENT_TRANSPARENT:
            raise NotImplementedError(
                f"group backend {self.backend!r} is not built in; "
                "provide an implementation with the same element operations"
            )

    @property
    def generator(self) -> "GroupElement":
        key = (self.generator_exp, self.order)
        cached = _GENERATORS.get(key)
        if cached is None:
            cached = _GENERATORS[key] = GroupElement(self.generator_exp % self.order,
                                                     self.order)
        return cached

    def identity(self) -> "GroupElement":
        return GroupElement(0, self.order)


_GENERATORS: dict[tuple[int, int], "GroupElement"] = {}


@dataclass(frozen=True, slots=True)
class GroupElement:
    """Element g^x, materialized as the exponent x mod q."""

    exponent: int
    order: int

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        if self.order != other.order:
            raise CryptoError("elements from different groups")
        return GroupElement((self.exponent + other.exponent) % self.order, self.order)

    def __pow__(self, k: int) -> "GroupElement":
        return GroupElement((self.exponent * k) % self.order, self.order)

    def inverse(self) -> "GroupElement":
        return GroupElement((-self.exponent) % self.order, self.order)

    def encode(self) -> bytes:
        """Fixed-width big-endian exponent (32 bytes for a 256-bit order)."""
        width = (self.order.bit_length() + 7) // 8
        return self.exponent.to_bytes(width, "big")


def pairing(a: GroupElement, b: GroupElement) -> int:
    """Symmetric test pairing e(g^x, g^y) -> exponent x*y in the target group."""
    if a.order != b.order:
        raise CryptoError("elements from different groups")
    return (a.exponent * b.exponent) % a.order


@dataclass(frozen=True, slots=True)
class SignatureShare:
    """One unit's partial signature H(m)^{d_i}, tagged with its share index."""

    signer_index: int
    value: GroupElement


@dataclass(frozen=True, slots=True)
class StandardSignature:
    """Combined signature H(m)^{d}, verifiable under the group public key."""

    value: GroupElement


@dataclass(frozen=True, slots=True)
class Certificate:
    """Authority signature over the canonical encoding of a subject key."""

    subject_pk: GroupElement
    ta_signature: StandardSignature


@dataclass(slots=True)
class SecretShares:
    """A (t, n) Shamir sharing of ``master_secret`` over GF(q).

    ``share_points`` holds (alpha_i, d_i) pairs with d_i = q(alpha_i) for a
    random polynomial of degree at most t-1 whose constant term is the
    secret.  The master secret is retained for dealer/test use only; share
    holders receive individual points.
    """

    threshold: int
    total: int
    order: int
    share_points: list[tuple[int, int]]
    master_secret: int = field(repr=False, default=0)


def _eval_polynomial(coefficients: Sequence[int], x: int, q: int) -> int:
    acc = 0
    for c in reversed(coefficients):  # Horner
        acc = (acc * x + c) % q
    return acc


def split_secret(secret: int, t: int, n: int, params: GroupParams,
                 rng=None) -> SecretShares:
    """Deal a (t, n) sharing of ``secret``.

    Args:
        secret: field element in [0, q).
        t: reconstruction threshold, 1 <= t <= n.
        n: number of shares; evaluation points are alpha_i = 1..n.
        params: supplies the field order q.
        rng: optional ``random.Random``-like source with ``randrange``;
            defaults to the secrets module.

    Raises:
        CryptoError: on an invalid threshold or a field too small for n
            distinct nonzero points.
    """
    q = params.order
    if t < 1 or t > n:
        raise CryptoError(f"invalid threshold: t={t}, n={n}")
    if n >= q:
        raise CryptoError(f"field of order {q} cannot host {n} distinct share points")
    if not 0 <= secret < q:
        raise CryptoError("secret outside the field")
    draw = rng.randrange if rng is not None else (lambda upper: secrets.randbelow(upper))
    coefficients = [secret] + [draw(q) for _ in range(t - 1)]
    points = [(i, _eval_polynomial(coefficients, i, q)) for i in range(1, n + 1)]
    return SecretShares(threshold=t, total=n, order=q,
                        share_points=points, master_secret=secret)


@lru_cache(maxsize=4096)
def _lagrange_at_zero(indices: tuple[int, ...], q: int) -> tuple[int, ...]:
    coeffs = []
    for i in indices:
        num, den = 1, 1
        for j in indices:
            if j == i:
                continue
            num = (num * -j) % q
            den = (den * (i - j)) % q
        coeffs.append((num * pow(den, q - 2, q)) % q)
    return tuple(coeffs)


def lagrange_coefficient(subset: Iterable[int], target_index: int, q: int) -> int:
    """Interpolation weight for ``target_index`` when recovering q(0)."""
    items = list(subset)
    indices = tuple(sorted(set(items)))
    if len(indices) != len(items):
        raise CryptoError("repeated share indices")
    if any(i == 0 for i in indices):
        raise CryptoError("share index 0 is reserved for the secret")
    if target_index not in indices:
        raise CryptoError("target index not in subset")
    return _lagrange_at_zero(indices, q)[indices.index(target_index)]


def reconstruct_secret(shares: Sequence[tuple[int, int]], t: int, q: int) -> int:
    """Recover q(0) from at least t distinct share points."""
    if len(shares) < t:
        raise CryptoError(f"need at least {t} shares, got {len(shares)}")
    chosen = shares[:t]
    indices = tuple(sorted(alpha for alpha, _ in chosen))
    if len(set(indices)) != t:
        raise CryptoError("repeated share indices")
    coeffs = _lagrange_at_zero(indices, q)
    weight = dict(zip(indices, coeffs))
    return sum(d * weight[alpha] for alpha, d in chosen) % q


def message_exponent(message: bytes, params: GroupParams) -> int:
    """Discrete log of H(m) under the transparent backend: SHA-256(m) mod q."""
    return int.from_bytes(hashlib.sha256(message).digest(), "big") % params.order


def hash_to_group(message: bytes, params: GroupParams) -> GroupElement:
    """Map arbitrary bytes onto the group as g^{SHA-256(m) mod q}."""
    return params.generator ** message_exponent(message, params)


def sign_share(share_value: int, message: bytes, params: GroupParams,
               signer_index: int) -> SignatureShare:
    """Partial signature H(m)^{d_i} from one share of the signing key."""
    return SignatureShare(signer_index, hash_to_group(message, params) ** share_value)


def sign_share_exp(message_exp: int, share_value: int, params: GroupParams,
                   signer_index: int) -> SignatureShare:
    """sign_share with a precomputed message exponent (hot-path variant)."""
    q = params.order
    exp = (params.generator_exp * message_exp % q) * share_value % q
    return SignatureShare(signer_index, GroupElement(exp, q))


def verify_share_exp(share_pk: GroupElement, message_exp: int,
                     share: SignatureShare, params: GroupParams) -> bool:
    """verify_share with a precomputed message exponent (hot-path variant).

    Evaluates the same two pairings as verify_share, reduced to integer
    products of the stored exponents.
    """
    q = params.order
    g = params.generator_exp
    return share.value.exponent * g % q == \
        (g * message_exp % q) * share_pk.exponent % q


def combine_shares(shares: Sequence[SignatureShare], t: int,
                   params: GroupParams) -> StandardSignature:
    """Multiply t share signatures on one message into the standard signature.

    The result equals H(m)^{d} for the shared key d and is independent of
    which t-subset contributed, by Lagrange interpolation in the exponent.
    """
    if len(shares) < t:
        raise CryptoError(f"need at least {t} signature shares, got {len(shares)}")
    chosen = shares[:t]
    indices = tuple(sorted(s.signer_index for s in chosen))
    if len(set(indices)) != t:
        raise CryptoError("duplicate signer indices")
    q = params.order
    coeffs = dict(zip(indices, _lagrange_at_zero(indices, q)))
    acc = params.identity()
    for s in chosen:
        acc = acc * (s.value ** coeffs[s.signer_index])
    return StandardSignature(acc)


def sign(secret: int, message: bytes, params: GroupParams) -> StandardSignature:
    """Plain signature H(m)^{secret} by a holder of the full key."""
    return StandardSignature(hash_to_group(message, params) ** secret)


def verify_signature(public_key: GroupElement, message: bytes,
                     sig: StandardSignature, params: GroupParams) -> bool:
    """Check e(sig, g) == e(H(m), PK); False on any mismatch."""
    q = params.order
    g = params.generator_exp
    h = message_exponent(message, params)
    return sig.value.exponent * g % q == (g * h % q) * public_key.exponent % q


def verify_share(share_pk: GroupElement, message: bytes, share: SignatureShare,
                 params: GroupParams) -> bool:
    """Check a partial signature against the per-share public key g^{d_i}."""
    return pairing(share.value, params.generator) == \
        pairing(hash_to_group(message, params), share_pk)


def _encode_pk(pk: GroupElement) -> bytes:
    body = pk.encode()
    return len(body).to_bytes(2, "big") + body


def issue_certificate(ta_secret: int, vehicle_pk: GroupElement,
                      params: GroupParams) -> Certificate:
    """Authority signature over the length-prefixed encoding of a key."""
    return Certificate(vehicle_pk, sign(ta_secret, _encode_pk(vehicle_pk), params))


def verify_certificate(ta_pk: GroupElement, cert: Certificate,
                       params: GroupParams) -> bool:
    return verify_signature(ta_pk, _encode_pk(cert.subject_pk),
                            cert.ta_signature, params)


# ---------------------------------------------------------------------------
# Dealer output and key file serialization
# ---------------------------------------------------------------------------

KEYFILE_MAGIC = b"PWTK\x01"


@dataclass(slots=True)
class KeyMaterial:
    """Everything the dealer hands out for one roadside-unit group.

    The binary key file layout is: magic+version bytes, then big-endian
    length-prefixed integers in fixed order -- q, g exponent, t, n,
    authority secret, group secret -- followed by n (alpha_i, d_i) pairs.
    Each integer is a 2-byte length then that many bytes.
    """

    params: GroupParams
    shares: SecretShares
    ta_secret: int = field(repr=False, default=0)

    @property
    def group_pk(self) -> GroupElement:
        return self.params.generator ** self.shares.master_secret

    @property
    def ta_pk(self) -> GroupElement:
        return self.params.generator ** self.ta_secret

    def share_pk(self, alpha: int) -> GroupElement:
        for a, d in self.shares.share_points:
            if a == alpha:
                return self.params.generator ** d
        raise CryptoError(f"no share with index {alpha}")


def generate_key_material(t: int, n: int, params: GroupParams | None = None,
                          rng=None) -> KeyMaterial:
    """Deal a fresh group key into (t, n) shares plus an authority key."""
    params = params or GroupParams()
    draw = rng.randrange if rng is not None else (lambda upper: secrets.randbelow(upper))
    group_secret = draw(params.order)
    ta_secret = draw(params.order)
    return KeyMaterial(params=params,
                       shares=split_secret(group_secret, t, n, params, rng=rng),
                       ta_secret=ta_secret)


def _pack_int(value: int) -> bytes:
    body = value.to_bytes((value.bit_length() + 7) // 8 or 1, "big")
    return len(body).to_bytes(2, "big") + body


def _unpack_int(buf: bytes, offset: int) -> tuple[int, int]:
    n = int.from_bytes(buf[offset:offset + 2], "big")
    end = offset + 2 + n
    if end > len(buf):
        raise CryptoError("truncated key file")
    return int.from_bytes(buf[offset + 2:end], "big"), end


def dump_key_material(material: KeyMaterial) -> bytes:
    parts = [KEYFILE_MAGIC,
             _pack_int(material.params.order),
             _pack_int(material.params.generator_exp),
             _pack_int(material.shares.threshold),
             _pack_int(material.shares.total),
             _pack_int(material.ta_secret),
             _pack_int(material.shares.master_secret)]
    for alpha, d in material.shares.share_points:
        parts.append(_pack_int(alpha))
        parts.append(_pack_int(d))
    return b"".join(parts)


def load_key_material(blob: bytes) -> KeyMaterial:
    if not blob.startswith(KEYFILE_MAGIC):
        raise CryptoError("not a key file (bad magic)")
    offset = len(KEYFILE_MAGIC)
    q, offset = _unpack_int(blob, offset)
    g_exp, offset = _unpack_int(blob, offset)
    t, offset = _unpack_int(blob, offset)
    n, offset = _unpack_int(blob, offset)
    ta_secret, offset = _unpack_int(blob, offset)
    master, offset = _unpack_int(blob, offset)
    points = []
    for _ in range(n):
        alpha, offset = _unpack_int(blob, offset)
        d, offset = _unpack_int(blob, offset)
        points.append((alpha, d))
    params = GroupParams(order=q, generator_exp=g_exp)
    shares = SecretShares(threshold=t, total=n, order=q,
                          share_points=points, master_secret=master)
    return KeyMaterial(params=params, shares=shares, ta_secret=ta_secret)
