"""Anonymous client authentication and key agreement.

A client proves membership in a group of registered users without
revealing which member it is.  Every user U_t owns a discrete-log key
pair over its own Schnorr group (p_t, q_t, g_t) and the associated
trapdoor one-way function

    f_t(alpha, beta) = alpha * y_t^(alpha mod q_t) * g_t^beta  (mod p_t)

which anyone can evaluate but only the key owner can invert.  The
client builds a ring equation over all members, solves it at its own
position with the trapdoor, and sends the result together with a
blinded Diffie-Hellman share.  The server recovers the blinding from
the signature, checks the ring equation, and finishes an authenticated
key agreement in two more messages.

Symbols follow the exchange transcript:
    x_1      client nonce binding the signature to this run
    R        g^x_1, lets the server recover the binding
    Q        (y_server^x_1 mod p) mod q, shared blinding exponent
    X        g^x_a, the client's key-agreement share
    V        X * g^-Q, the blinded share actually transmitted
    l        hash key for the ring combining cipher
    nu       random glue value the ring equation must close on
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from random import Random

FEISTEL_ROUNDS = 4
DOMAIN_MARGIN_BITS = 160
MAX_RING = 64

_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67)


class AuthError(Exception):
    """Base class for protocol failures."""


class SignatureRejected(AuthError):
    """The verifier refused the signature or the confirmation."""


class MalformedSignature(SignatureRejected):
    """The byte encoding could not be parsed canonically."""


# ---------------------------------------------------------------------------
# groups and keys


@dataclass(frozen=True, slots=True)
class GroupParams:
    """Schnorr group: prime p, prime q dividing p-1, g of order q mod p."""

    p: int
    q: int
    g: int

    def validate(self) -> None:
        if self.q <= 2 or (self.p - 1) % self.q != 0:
            raise ValueError("q must divide p - 1")
        if not 1 < self.g < self.p:
            raise ValueError("generator out of range")
        if pow(self.g, self.q, self.p) != 1:
            raise ValueError("generator does not have order q")


@dataclass(frozen=True, slots=True)
class UserPublic:
    user_id: int
    group: GroupParams
    y: int


@dataclass(frozen=True, slots=True)
class UserKeyMaterial:
    user_id: int
    group: GroupParams
    x: int
    y: int

    @property
    def public(self) -> UserPublic:
        return UserPublic(self.user_id, self.group, self.y)


@dataclass(frozen=True, slots=True)
class AuthProfile:
    """Parameter sizes for key generation.

    A fixed group pins every key to the same small published group, which
    keeps exhaustive tests over the whole subgroup feasible; otherwise each
    keygen call builds a fresh group of the requested size.  `b_bits` is
    the common bit width of the ring combining domain and must exceed the
    largest member modulus by a comfortable margin.
    """

    name: str
    p_bits: int
    q_bits: int
    b_bits: int
    fixed_group: GroupParams | None = None


TEST_GROUP = GroupParams(p=23, q=11, g=4)
TEST_PROFILE = AuthProfile(name="test", p_bits=5, q_bits=4, b_bits=192, fixed_group=TEST_GROUP)
DESK_PROFILE = AuthProfile(name="desk", p_bits=512, q_bits=160, b_bits=1024)

PROFILES = {p.name: p for p in (TEST_PROFILE, DESK_PROFILE)}


def _is_probable_prime(n: int, rng: Random, rounds: int = 40) -> bool:
    if n < 2:
        return False
    for sp in _SMALL_PRIMES:
        if n % sp == 0:
            return n == sp
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _random_prime(bits: int, rng: Random) -> int:
    while True:
        candidate = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if _is_probable_prime(candidate, rng):
            return candidate


def generate_group(p_bits: int, q_bits: int, rng: Random) -> GroupParams:
    """Build a Schnorr group with p_bits-long p and q_bits-long q | p-1."""
    if q_bits >= p_bits:
        raise ValueError("q must be smaller than p")
    while True:
        q = _random_prime(q_bits, rng)
        m_bits = p_bits - q_bits
        for _ in range(200 * p_bits):
            m = rng.getrandbits(m_bits) | (1 << (m_bits - 1))
            m &= ~1  # even cofactor keeps p odd
            p = q * m + 1
            if p.bit_length() != p_bits:
                continue
            if not _is_probable_prime(p, rng):
                continue
            while True:
                h = rng.randrange(2, p - 1)
                g = pow(h, m, p)
                if g != 1:
                    group = GroupParams(p, q, g)
                    group.validate()
                    return group


def keygen_user(profile: AuthProfile, rng: Random, user_id: int = 0) -> UserKeyMaterial:
    """Key pair for one ring member: x secret, y = g^x mod p."""
    group = profile.fixed_group or generate_group(profile.p_bits, profile.q_bits, rng)
    x = rng.randrange(1, group.q)
    y = pow(group.g, x, group.p)
    return UserKeyMaterial(user_id, group, x, y)


def keygen_server(profile: AuthProfile, rng: Random) -> UserKeyMaterial:
    """The authentication server holds an ordinary key pair of its own."""
    return keygen_user(profile, rng, user_id=-1)


# ---------------------------------------------------------------------------
# trapdoor one-way function


def trapdoor_forward(member: UserPublic, alpha: int, beta: int) -> int:
    """f(alpha, beta) = alpha * y^(alpha mod q) * g^beta mod p."""
    p, q, g = member.group.p, member.group.q, member.group.g
    if not 1 <= alpha <= p - 1:
        raise ValueError(f"alpha out of range [1, p-1]: {alpha}")
    if not 0 <= beta < q:
        raise ValueError(f"beta out of range [0, q): {beta}")
    return alpha * pow(member.y, alpha % q, p) % p * pow(g, beta, p) % p


def _invert_unchecked(keys: UserKeyMaterial, y: int, k: int) -> tuple[int, int]:
    # alpha = y * g^(-K c) with c = g^K; the correction cancels in f for any
    # unit y, subgroup member or not, which the extended domain relies on.
    p, q, g = keys.group.p, keys.group.q, keys.group.g
    while True:
        c = pow(g, k, p)
        kc = k * c
        alpha = y * pow(g, (-kc) % q, p) % p
        if alpha != 0:
            break
        k = (k + 1) % q  # unreachable for unit y, kept as a guard
    beta = (kc - keys.x * (alpha % q)) % q
    return alpha, beta


def trapdoor_invert(
    keys: UserKeyMaterial, y: int, rng: Random | None = None, k: int | None = None
) -> tuple[int, int]:
    """Find (alpha, beta) with f(alpha, beta) = y, using the secret x.

    y must be a subgroup element.  The randomizer K may be passed directly
    for reproducibility; otherwise it is drawn from `rng`.
    """
    p, q = keys.group.p, keys.group.q
    if not 1 <= y <= p - 1 or pow(y, q, p) != 1:
        raise ValueError(f"y is not in the order-q subgroup: {y}")
    if k is None:
        if rng is None:
            raise ValueError("either rng or k must be given")
        k = rng.randrange(q)
    if not 0 <= k < q:
        raise ValueError(f"k out of range [0, q): {k}")
    return _invert_unchecked(keys, y, k)


def ring_forward(member: UserPublic, alpha: int, beta: int, b_bits: int) -> int:
    """f extended to the common b-bit domain.

    The quotient of alpha by p rides along unchanged and only the residue
    goes through f; inputs in the thin top slice that cannot carry a full
    residue, and inputs with residue zero, map to themselves.
    """
    if not 0 <= alpha < (1 << b_bits):
        raise ValueError("alpha outside the b-bit domain")
    p = member.group.p
    quot, a = divmod(alpha, p)
    if a == 0 or (quot + 1) * p > (1 << b_bits):
        return alpha
    return quot * p + trapdoor_forward(member, a, beta)


def ring_invert(keys: UserKeyMaterial, y: int, k: int, b_bits: int) -> tuple[int, int]:
    """Preimage of y under the extended mapping, mirroring ring_forward's branches."""
    if not 0 <= y < (1 << b_bits):
        raise ValueError("y outside the b-bit domain")
    p = keys.group.p
    quot, r = divmod(y, p)
    if r == 0 or (quot + 1) * p > (1 << b_bits):
        return y, 0
    alpha, beta = _invert_unchecked(keys, r, k)
    return quot * p + alpha, beta


# ---------------------------------------------------------------------------
# combining cipher


def _prf(key: bytes, round_index: int, data: bytes, out_len: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < out_len:
        out += hashlib.sha512(key + bytes([round_index, counter]) + data).digest()
        counter += 1
    return bytes(out[:out_len])


def _feistel(key: bytes, value: int, b_bits: int, decrypt: bool) -> int:
    if b_bits % 2 != 0:
        raise ValueError("block width must be even")
    if not 0 <= value < (1 << b_bits):
        raise ValueError("value outside the block domain")
    half = b_bits // 2
    half_bytes = (half + 7) // 8
    mask = (1 << half) - 1
    left, right = value >> half, value & mask
    rounds = range(FEISTEL_ROUNDS - 1, -1, -1) if decrypt else range(FEISTEL_ROUNDS)
    for rnd in rounds:
        if decrypt:
            left, right = right ^ (int.from_bytes(_prf(key, rnd, left.to_bytes(half_bytes, "big"), half_bytes), "big") & mask), left
        else:
            left, right = right, left ^ (int.from_bytes(_prf(key, rnd, right.to_bytes(half_bytes, "big"), half_bytes), "big") & mask)
    return (left << half) | right


def feistel_encrypt(key: bytes, value: int, b_bits: int) -> int:
    return _feistel(key, value, b_bits, decrypt=False)


def feistel_decrypt(key: bytes, value: int, b_bits: int) -> int:
    return _feistel(key, value, b_bits, decrypt=True)


def combine(key: bytes, nu: int, ys: list[int], b_bits: int) -> int:
    """C_{k,nu}(y_1..y_n) = E_k(y_n ^ E_k(y_{n-1} ^ ... E_k(y_1 ^ nu) ...)).

    A signature is valid exactly when this closes back on nu.
    """
    v = nu
    for y in ys:
        if not 0 <= y < (1 << b_bits):
            raise ValueError("ring value outside the block domain")
        v = feistel_encrypt(key, y ^ v, b_bits)
    return v


def solve_ring_gap(key: bytes, nu: int, before: list[int], after: list[int], b_bits: int) -> int:
    """The unique y_i closing the chain to nu given every other member's value."""
    v = nu
    for y in before:
        v = feistel_encrypt(key, y ^ v, b_bits)
    t = nu
    for y in reversed(after):
        t = feistel_decrypt(key, t, b_bits) ^ y
    return feistel_decrypt(key, t, b_bits) ^ v


# ---------------------------------------------------------------------------
# the three-round exchange


def _hash_parts(*parts: int | bytes) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        data = part if isinstance(part, bytes) else _int_to_bytes(part)
        h.update(len(data).to_bytes(4, "big"))
        h.update(data)
    return h.digest()


def _ring_digest(ring: tuple[UserPublic, ...]) -> bytes:
    """Fingerprint of the full ring description.

    Folding this into the combining key pins the signature to the exact
    member list: swapping in a different registered user, even one whose
    slot happens not to depend on its public key, changes the key and
    breaks the ring equation.
    """
    parts: list[int | bytes] = []
    for member in ring:
        parts.extend((member.user_id, member.group.p, member.group.q, member.group.g, member.y))
    return _hash_parts(*parts)


@dataclass(frozen=True, slots=True)
class RingSignature:
    ring: tuple[UserPublic, ...]
    nu: int
    v_value: int
    r_value: int
    pairs: tuple[tuple[int, int], ...]
    identity_tag: bytes
    b_bits: int


@dataclass(frozen=True, slots=True)
class ClientSession:
    x_a: int
    big_x: int
    identity_tag: bytes
    group: GroupParams


@dataclass(frozen=True, slots=True)
class ServerAccept:
    h_confirm: bytes
    y_value: int
    next_tag: bytes
    session_key: int


def sign_round1(
    ring: list[UserPublic],
    signer_index: int,
    signer_keys: UserKeyMaterial,
    server_pub: UserPublic,
    identity_tag: bytes,
    rng: Random,
    b_bits: int,
) -> tuple[RingSignature, ClientSession]:
    """Round 1: produce the ring signature and the blinded key share."""
    n = len(ring)
    if not 1 <= n <= MAX_RING:
        raise ValueError(f"ring size out of range: {n}")
    if not 0 <= signer_index < n:
        raise ValueError("signer index outside the ring")
    if ring[signer_index].y != signer_keys.y or ring[signer_index].group != signer_keys.group:
        raise ValueError("signer keys do not match the ring slot")
    widest = max(member.group.p.bit_length() for member in ring)
    if b_bits < widest + DOMAIN_MARGIN_BITS:
        raise ValueError("combining domain too narrow for the ring moduli")

    p, q, g = server_pub.group.p, server_pub.group.q, server_pub.group.g
    x_1 = rng.randrange(1, q)
    x_a = rng.randrange(1, q)
    r_value = pow(g, x_1, p)
    q_blind = pow(server_pub.y, x_1, p) % q
    big_x = pow(g, x_a, p)
    v_value = big_x * pow(g, (-q_blind) % q, p) % p
    l_key = _hash_parts(
        big_x, q_blind, v_value, server_pub.y, identity_tag, _ring_digest(tuple(ring))
    )

    pairs: list[tuple[int, int] | None] = [None] * n
    ys: list[int | None] = [None] * n
    for t, member in enumerate(ring):
        if t == signer_index:
            continue
        # decoy pair; resample the rare inputs the extension maps to itself
        # so that every serialized byte of the pair stays significant
        while True:
            alpha = rng.getrandbits(b_bits)
            quot, a = divmod(alpha, member.group.p)
            if a != 0 and (quot + 1) * member.group.p <= (1 << b_bits):
                break
        beta = rng.randrange(member.group.q)
        pairs[t] = (alpha, beta)
        ys[t] = ring_forward(member, alpha, beta, b_bits)

    decoys_before = [y for y in ys[:signer_index] if y is not None]
    decoys_after = [y for y in ys[signer_index + 1 :] if y is not None]
    p_own = signer_keys.group.p
    while True:
        # redraw the glue value until the signer's slot misses the
        # self-mapping branch of the extension, so its response pair is
        # always live under tampering
        nu = rng.getrandbits(b_bits)
        y_gap = solve_ring_gap(l_key, nu, decoys_before, decoys_after, b_bits)
        quot, residue = divmod(y_gap, p_own)
        if residue != 0 and (quot + 1) * p_own <= (1 << b_bits):
            break
    k_rand = rng.randrange(signer_keys.group.q)
    pairs[signer_index] = ring_invert(signer_keys, y_gap, k_rand, b_bits)

    sigma = RingSignature(
        ring=tuple(ring),
        nu=nu,
        v_value=v_value,
        r_value=r_value,
        pairs=tuple(pair for pair in pairs if pair is not None),
        identity_tag=bytes(identity_tag),
        b_bits=b_bits,
    )
    session = ClientSession(x_a=x_a, big_x=big_x, identity_tag=bytes(identity_tag), group=server_pub.group)
    return sigma, session


def server_verify_round2(
    server_keys: UserKeyMaterial, sigma: RingSignature, rng: Random
) -> ServerAccept:
    """Round 2: check the ring equation, then answer with the server share.

    Raises SignatureRejected when any recomputation disagrees with the
    signature.  On acceptance the server cannot tell which ring member
    signed; it only learns that one of them did.
    """
    p, q, g = server_keys.group.p, server_keys.group.q, server_keys.group.g
    if len(sigma.pairs) != len(sigma.ring) or not sigma.ring:
        raise SignatureRejected("ring and responses disagree in length")
    if not 1 <= sigma.r_value <= p - 1 or not 1 <= sigma.v_value <= p - 1:
        raise SignatureRejected("group element out of range")
    if not 0 <= sigma.nu < (1 << sigma.b_bits):
        raise SignatureRejected("glue value out of range")

    q_blind = pow(sigma.r_value, server_keys.x, p) % q
    big_x = sigma.v_value * pow(g, q_blind, p) % p
    l_key = _hash_parts(
        big_x, q_blind, sigma.v_value, server_keys.y, sigma.identity_tag, _ring_digest(sigma.ring)
    )

    ys = []
    try:
        for member, (alpha, beta) in zip(sigma.ring, sigma.pairs):
            if not 0 <= beta < member.group.q:
                raise SignatureRejected("response exponent out of range")
            ys.append(ring_forward(member, alpha, beta, sigma.b_bits))
    except ValueError as exc:
        raise SignatureRejected(str(exc)) from exc
    if combine(l_key, sigma.nu, ys, sigma.b_bits) != sigma.nu:
        raise SignatureRejected("ring equation does not close")

    x_b = rng.randrange(1, q)
    y_value = pow(g, x_b, p)
    session_key = pow(big_x, x_b, p)
    h_confirm = _hash_parts(session_key, big_x, y_value, sigma.identity_tag)
    next_tag = _hash_parts(session_key, y_value, sigma.identity_tag, b"next-session-tag")
    return ServerAccept(h_confirm, y_value, next_tag, session_key)


def client_confirm_round3(session: ClientSession, accept: ServerAccept) -> int:
    """Round 3: the client checks the server's confirmation hash.

    Returns the agreed session key; a mismatch means the responder does
    not hold the server secret (or the exchange was tampered with).
    """
    p = session.group.p
    if not 1 <= accept.y_value <= p - 1:
        raise SignatureRejected("server share out of range")
    session_key = pow(accept.y_value, session.x_a, p)
    expected = _hash_parts(session_key, session.big_x, accept.y_value, session.identity_tag)
    if expected != accept.h_confirm:
        raise SignatureRejected("server confirmation mismatch")
    return session_key


# ---------------------------------------------------------------------------
# wire encoding: length-prefixed big-endian integers, fixed field order
# (ring ids, nu, V, R, response pairs, identity tag)


def _int_to_bytes(value: int) -> bytes:
    if value < 0:
        raise ValueError("negative integer")
    if value == 0:
        return b""
    return value.to_bytes((value.bit_length() + 7) // 8, "big")


def _put_int(buf: bytearray, value: int) -> None:
    data = _int_to_bytes(value)
    buf += len(data).to_bytes(4, "big")
    buf += data


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MalformedSignature("truncated signature")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def integer(self, max_bytes: int) -> int:
        length = self.u32()
        if length > max_bytes:
            raise MalformedSignature("integer field too long")
        data = self.take(length)
        if length > 0 and data[0] == 0:
            raise MalformedSignature("non-canonical integer encoding")
        return int.from_bytes(data, "big") if length else 0

    def done(self) -> None:
        if self.pos != len(self.data):
            raise MalformedSignature("trailing bytes after signature")


def serialize_signature(sigma: RingSignature) -> bytes:
    buf = bytearray()
    buf += len(sigma.ring).to_bytes(4, "big")
    for member in sigma.ring:
        buf += member.user_id.to_bytes(4, "big")
    _put_int(buf, sigma.nu)
    _put_int(buf, sigma.v_value)
    _put_int(buf, sigma.r_value)
    for alpha, beta in sigma.pairs:
        _put_int(buf, alpha)
        _put_int(buf, beta)
    buf += len(sigma.identity_tag).to_bytes(4, "big")
    buf += sigma.identity_tag
    return bytes(buf)


def deserialize_signature(
    data: bytes, registry: dict[int, UserPublic], b_bits: int
) -> RingSignature:
    """Parse and resolve a signature against the registered user directory.

    Parsing is strict: canonical integer encodings only, every length
    bounded, no trailing bytes.  Unknown ring members are rejected here
    rather than during verification.
    """
    reader = _Reader(data)
    n = reader.u32()
    if not 1 <= n <= MAX_RING:
        raise MalformedSignature(f"implausible ring size {n}")
    members = []
    for _ in range(n):
        user_id = reader.u32()
        member = registry.get(user_id)
        if member is None:
            raise MalformedSignature(f"unknown ring member {user_id}")
        members.append(member)
    max_field = b_bits // 8 + 8
    nu = reader.integer(max_field)
    v_value = reader.integer(max_field)
    r_value = reader.integer(max_field)
    pairs = []
    for _ in range(n):
        alpha = reader.integer(max_field)
        beta = reader.integer(max_field)
        pairs.append((alpha, beta))
    tag_len = reader.u32()
    if tag_len > 4096:
        raise MalformedSignature("identity tag too long")
    identity_tag = reader.take(tag_len)
    reader.done()
    if not 0 <= nu < (1 << b_bits):
        raise MalformedSignature("glue value outside the block domain")
    for alpha, _beta in pairs:
        if not 0 <= alpha < (1 << b_bits):
            raise MalformedSignature("response outside the block domain")
    return RingSignature(
        ring=tuple(members),
        nu=nu,
        v_value=v_value,
        r_value=r_value,
        pairs=tuple(pairs),
        identity_tag=identity_tag,
        b_bits=b_bits,
    )
