"""Anonymous authentication tests.

Reference values for the published toy group (p=23, q=11, g=4) were
worked by hand: x = 3 gives y = 4^3 mod 23 = 18, and
f(1, 0) = 1 * 18^1 * 4^0 mod 23 = 18.  The order-11 subgroup is
{1, 2, 3, 4, 6, 8, 9, 12, 13, 16, 18}.
"""

from random import Random

import pytest
from hypothesis import given, settings, strategies as st

from meshsim import anonauth as aa

SUBGROUP = sorted(pow(4, i, 23) for i in range(11))


def _test_user(user_id=0, x=3):
    return aa.UserKeyMaterial(user_id, aa.TEST_GROUP, x, pow(4, x, 23))


def _ring_setup(n, seed=101, profile=aa.TEST_PROFILE):
    rng = Random(seed)
    members = [aa.keygen_user(profile, rng, user_id=i) for i in range(n)]
    server = aa.keygen_server(profile, rng)
    return members, server, rng


def test_published_group_oracle():
    assert SUBGROUP == [1, 2, 3, 4, 6, 8, 9, 12, 13, 16, 18]
    user = _test_user()
    assert user.y == 18
    assert aa.trapdoor_forward(user.public, 1, 0) == 18


def test_inversion_round_trips_exhaustively():
    # all 11 subgroup targets x all 11 randomizer values
    user = _test_user()
    for y in SUBGROUP:
        for k in range(11):
            alpha, beta = aa.trapdoor_invert(user, y, k=k)
            assert 1 <= alpha <= 22
            assert 0 <= beta < 11
            assert aa.trapdoor_forward(user.public, alpha, beta) == y


def test_inversion_rejects_outside_subgroup():
    user = _test_user()
    for bad in (0, 5, 7, 22, 23, -1):
        with pytest.raises(ValueError):
            aa.trapdoor_invert(user, bad, k=1)


def test_forward_validates_ranges():
    user = _test_user()
    with pytest.raises(ValueError):
        aa.trapdoor_forward(user.public, 0, 0)
    with pytest.raises(ValueError):
        aa.trapdoor_forward(user.public, 23, 0)
    with pytest.raises(ValueError):
        aa.trapdoor_forward(user.public, 1, 11)


def test_extended_domain_round_trip():
    user = _test_user()
    b = 192
    rng = Random(5)
    for _ in range(200):
        y = rng.getrandbits(b)
        alpha, beta = aa.ring_invert(user, y, k=rng.randrange(11), b_bits=b)
        assert aa.ring_forward(user.public, alpha, beta, b) == y


def test_extended_domain_identity_slice():
    # multiples of p and the thin top slice map to themselves
    user = _test_user()
    b = 8  # 2^8 = 256, p = 23: quotients 0..11, top slice starts at 11*23 = 253
    for alpha in (0, 23, 46, 253, 254, 255):
        assert aa.ring_forward(user.public, alpha, 0, b) == alpha
    # a regular point still maps through f
    assert aa.ring_forward(user.public, 23 + 1, 0, b) == 23 + 18


@settings(max_examples=80)
@given(value=st.integers(min_value=0, max_value=(1 << 192) - 1), key=st.binary(min_size=1, max_size=32))
def test_feistel_is_a_permutation(value, key):
    enc = aa.feistel_encrypt(key, value, 192)
    assert 0 <= enc < (1 << 192)
    assert aa.feistel_decrypt(key, enc, 192) == value


@settings(max_examples=40)
@given(st.data())
def test_ring_gap_solver_closes_the_chain(data):
    rng_vals = data.draw(
        st.lists(st.integers(min_value=0, max_value=(1 << 192) - 1), min_size=1, max_size=6)
    )
    gap = data.draw(st.integers(min_value=0, max_value=len(rng_vals)))
    nu = data.draw(st.integers(min_value=0, max_value=(1 << 192) - 1))
    key = b"chain-key"
    y_gap = aa.solve_ring_gap(key, nu, rng_vals[:gap], rng_vals[gap:], 192)
    full = rng_vals[:gap] + [y_gap] + rng_vals[gap:]
    assert aa.combine(key, nu, full, 192) == nu


@pytest.mark.parametrize("ring_size", [1, 2, 5, 10])
def test_exchange_round_trip(ring_size):
    members, server, rng = _ring_setup(ring_size, seed=300 + ring_size)
    ring = [m.public for m in members]
    signer = ring_size // 2
    sigma, session = aa.sign_round1(
        ring, signer, members[signer], server.public, b"run-1", rng, aa.TEST_PROFILE.b_bits
    )
    accept = aa.server_verify_round2(server, sigma, rng)
    key = aa.client_confirm_round3(session, accept)
    assert key == accept.session_key


def test_every_ring_position_can_sign():
    members, server, rng = _ring_setup(5, seed=77)
    ring = [m.public for m in members]
    for idx in range(5):
        sigma, session = aa.sign_round1(
            ring, idx, members[idx], server.public, b"t", rng, aa.TEST_PROFILE.b_bits
        )
        accept = aa.server_verify_round2(server, sigma, rng)
        assert aa.client_confirm_round3(session, accept) == accept.session_key


def test_desk_size_parameters_round_trip():
    members, server, rng = _ring_setup(3, seed=9, profile=aa.DESK_PROFILE)
    assert all(m.group.p.bit_length() == 512 for m in members)
    assert all(m.group.q.bit_length() == 160 for m in members)
    ring = [m.public for m in members]
    sigma, session = aa.sign_round1(
        ring, 1, members[1], server.public, b"desk", rng, aa.DESK_PROFILE.b_bits
    )
    accept = aa.server_verify_round2(server, sigma, rng)
    assert aa.client_confirm_round3(session, accept) == accept.session_key


def test_keygen_produces_consistent_pairs():
    rng = Random(42)
    user = aa.keygen_user(aa.DESK_PROFILE, rng, user_id=4)
    user.group.validate()
    assert pow(user.group.g, user.x, user.group.p) == user.y
    assert pow(user.y, user.group.q, user.group.p) == 1


def test_serialization_round_trip():
    members, server, rng = _ring_setup(4, seed=88)
    ring = [m.public for m in members]
    sigma, _ = aa.sign_round1(ring, 0, members[0], server.public, b"wire", rng, 192)
    registry = {m.user_id: m.public for m in members}
    wire = aa.serialize_signature(sigma)
    assert aa.deserialize_signature(wire, registry, 192) == sigma


def test_parser_rejects_trailing_bytes():
    members, server, rng = _ring_setup(2, seed=12)
    sigma, _ = aa.sign_round1(
        [m.public for m in members], 0, members[0], server.public, b"x", rng, 192
    )
    registry = {m.user_id: m.public for m in members}
    wire = aa.serialize_signature(sigma) + b"\x00"
    with pytest.raises(aa.MalformedSignature):
        aa.deserialize_signature(wire, registry, 192)


def test_parser_rejects_noncanonical_integers():
    members, server, rng = _ring_setup(2, seed=13)
    sigma, _ = aa.sign_round1(
        [m.public for m in members], 0, members[0], server.public, b"x", rng, 192
    )
    registry = {m.user_id: m.public for m in members}
    wire = bytearray(aa.serialize_signature(sigma))
    # re-encode nu (first variable integer, right after the id list) with a
    # leading zero byte
    offset = 4 + 2 * 4
    length = int.from_bytes(wire[offset : offset + 4], "big")
    body = bytes(wire[offset + 4 : offset + 4 + length])
    padded = (length + 1).to_bytes(4, "big") + b"\x00" + body
    tampered = bytes(wire[:offset]) + padded + bytes(wire[offset + 4 + length :])
    with pytest.raises(aa.MalformedSignature):
        aa.deserialize_signature(tampered, registry, 192)


def test_parser_rejects_unknown_member():
    members, server, rng = _ring_setup(2, seed=14)
    sigma, _ = aa.sign_round1(
        [m.public for m in members], 0, members[0], server.public, b"x", rng, 192
    )
    registry = {members[0].user_id: members[0].public}  # second user not registered
    with pytest.raises(aa.MalformedSignature):
        aa.deserialize_signature(aa.serialize_signature(sigma), registry, 192)


def test_parser_rejects_truncation_everywhere():
    members, server, rng = _ring_setup(3, seed=15)
    sigma, _ = aa.sign_round1(
        [m.public for m in members], 1, members[1], server.public, b"x", rng, 192
    )
    registry = {m.user_id: m.public for m in members}
    wire = aa.serialize_signature(sigma)
    for cut in range(len(wire)):
        with pytest.raises(aa.MalformedSignature):
            aa.deserialize_signature(wire[:cut], registry, 192)


def test_every_response_slot_is_live():
    # bumping any alpha or beta in place must break the ring equation
    members, server, rng = _ring_setup(4, seed=21)
    ring = [m.public for m in members]
    sigma, _ = aa.sign_round1(ring, 2, members[2], server.public, b"live", rng, 192)
    aa.server_verify_round2(server, sigma, Random(0))  # sanity: honest one passes
    for slot in range(4):
        for field in (0, 1):
            pairs = [list(p) for p in sigma.pairs]
            if field == 0:
                pairs[slot][0] ^= 1 << 64
            else:
                pairs[slot][1] = (pairs[slot][1] + 1) % ring[slot].group.q
            forged = aa.RingSignature(
                sigma.ring, sigma.nu, sigma.v_value, sigma.r_value,
                tuple(tuple(p) for p in pairs), sigma.identity_tag, sigma.b_bits,
            )
            with pytest.raises(aa.SignatureRejected):
                aa.server_verify_round2(server, forged, Random(0))


def test_wire_bitflip_fuzz_never_verifies():
    members, server, rng = _ring_setup(4, seed=31)
    ring = [m.public for m in members]
    sigma, _ = aa.sign_round1(ring, 1, members[1], server.public, b"fuzz", rng, 192)
    registry = {m.user_id: m.public for m in members}
    wire = aa.serialize_signature(sigma)
    fuzz = Random(999)
    verify_rng = Random(0)
    for trial in range(400):
        blob = bytearray(wire)
        for _ in range(fuzz.choice((1, 1, 1, 2, 3))):
            pos = fuzz.randrange(len(blob))
            blob[pos] ^= 1 << fuzz.randrange(8)
        if bytes(blob) == wire:
            continue
        with pytest.raises(aa.SignatureRejected):
            parsed = aa.deserialize_signature(bytes(blob), registry, 192)
            aa.server_verify_round2(server, parsed, verify_rng)


def test_signature_bound_to_server():
    members, server, rng = _ring_setup(3, seed=51)
    other_server = aa.keygen_server(aa.TEST_PROFILE, Random(987))
    ring = [m.public for m in members]
    sigma, _ = aa.sign_round1(ring, 0, members[0], server.public, b"s", rng, 192)
    with pytest.raises(aa.SignatureRejected):
        aa.server_verify_round2(other_server, sigma, Random(0))


def test_client_rejects_forged_confirmation():
    members, server, rng = _ring_setup(2, seed=61)
    ring = [m.public for m in members]
    sigma, session = aa.sign_round1(ring, 0, members[0], server.public, b"c", rng, 192)
    accept = aa.server_verify_round2(server, sigma, rng)
    bad_hash = aa.ServerAccept(
        bytes(b ^ 1 for b in accept.h_confirm), accept.y_value, accept.next_tag, accept.session_key
    )
    with pytest.raises(aa.SignatureRejected):
        aa.client_confirm_round3(session, bad_hash)
    bad_share = aa.ServerAccept(
        accept.h_confirm, accept.y_value * 2 % server.group.p or 1, accept.next_tag, accept.session_key
    )
    with pytest.raises(aa.SignatureRejected):
        aa.client_confirm_round3(session, bad_share)


def test_fresh_session_keys_per_exchange():
    members, server, _ = _ring_setup(2, seed=71)
    ring = [m.public for m in members]
    keys = set()
    for run in range(5):
        rng = Random(1000 + run)
        sigma, session = aa.sign_round1(
            ring, 0, members[0], server.public, f"run-{run}".encode(), rng, 192
        )
        accept = aa.server_verify_round2(server, sigma, rng)
        keys.add(aa.client_confirm_round3(session, accept))
    assert len(keys) == 5


def test_domain_width_guard():
    members, server, rng = _ring_setup(2, seed=81)
    ring = [m.public for m in members]
    with pytest.raises(ValueError):
        aa.sign_round1(ring, 0, members[0], server.public, b"x", rng, b_bits=64)
