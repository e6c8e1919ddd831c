import random
import secrets

import pytest

from dsse import index, multiuser, wire
from dsse.errors import CapacityError, ParameterError
from dsse.harness import ProtocolDriver

from helpers import FIXED_MK, random_db


class TestGroupWrap:
    def test_member_recovers_payload(self):
        keys = multiuser.group_init(8)
        members = {1, 3, 5}
        payload = secrets.token_bytes(32)
        header = multiuser.group_encrypt(members, keys.pk, payload,
                                         keys.user_secrets)
        assert multiuser.group_decrypt(members, 3, keys.pk,
                                       keys.user_secrets[2], header) == payload

    def test_non_member_gets_nothing(self):
        keys = multiuser.group_init(8)
        members = {1, 3}
        header = multiuser.group_encrypt(members, keys.pk, b"\x00" * 32,
                                         keys.user_secrets)
        assert multiuser.group_decrypt(members, 2, keys.pk,
                                       keys.user_secrets[1], header) is None

    def test_membership_exact_for_all_subsets(self):
        # every user against random member sets, exhaustively for n=8
        keys = multiuser.group_init(8)
        rng = random.Random(5)
        for _ in range(10):
            members = {i for i in range(1, 9) if rng.random() < 0.5}
            payload = secrets.token_bytes(32)
            header = multiuser.group_encrypt(members, keys.pk, payload,
                                             keys.user_secrets)
            for i in range(1, 9):
                got = multiuser.group_decrypt(members, i, keys.pk,
                                              keys.user_secrets[i - 1], header)
                assert (got == payload) == (i in members)

    def test_wrong_secret_rejected(self):
        keys = multiuser.group_init(4)
        header = multiuser.group_encrypt({1}, keys.pk, b"\x01" * 32,
                                         keys.user_secrets)
        assert multiuser.group_decrypt({1}, 1, keys.pk, b"\x00" * 32,
                                       header) is None

    def test_header_size_tracks_membership(self):
        keys = multiuser.group_init(8)
        h1 = multiuser.group_encrypt({1}, keys.pk, b"\x00" * 32,
                                     keys.user_secrets)
        h3 = multiuser.group_encrypt({1, 2, 3}, keys.pk, b"\x00" * 32,
                                     keys.user_secrets)
        assert len(h1) == 1 and len(h3) == 3


def gated_driver(members=(1, 2, 3), n=8, db=None):
    driver = ProtocolDriver(mode="private", mk=FIXED_MK, peers=2)
    driver.setup(db or index.PlainDatabase({1: {"w", "v"}, 2: {"w"}, 3: {"x"}}))
    driver.mu_setup(n, list(members))
    return driver


class TestGateLifecycle:
    def test_setup_stores_gate_in_one_tx(self):
        driver = gated_driver()
        stores = [r for r in driver.ledger.receipts if r.opcode == "MU_STORE"]
        assert len(stores) == 1
        contract = driver.ledger.view
        assert contract.mu_secret == driver.group.group_secret
        assert contract.mu_members == (1, 2, 3)

    def test_authorized_search_matches_owner(self):
        driver = gated_driver()
        owner_result = driver.search("w")
        user_result = driver.user_search(1, "w")
        assert user_result == owner_result
        # the unmasked token lands in the very same query slot
        qk = driver.owner.search_request("w").query_key
        records = driver.ledger.view.read_results(qk)
        assert all(not r.invalid for r in records)

    def test_two_users_unmask_to_identical_tokens(self):
        driver = gated_driver()
        token = driver.owner.issue_search_token("w")
        p1, ok1 = multiuser.user_trapdoor(token, driver.credentials[1],
                                          driver.ledger.view)
        p2, ok2 = multiuser.user_trapdoor(token, driver.credentials[2],
                                          driver.ledger.view)
        assert ok1 and ok2
        secret = driver.ledger.view.mu_secret
        assert wire.mask_token(p1[1:], secret) == wire.mask_token(p2[1:], secret)

    def test_revoked_user_bottoms_out(self):
        driver = gated_driver()
        assert driver.user_search(2, "w") is not None
        driver.revoke_user(2)
        assert driver.user_search(2, "w") is None
        assert driver.user_search(1, "w") == {1, 2}  # survivor re-keyed

    def test_old_secret_never_validates_after_revoke(self):
        driver = gated_driver()
        old_secret = driver.group.group_secret
        driver.revoke_user(3)
        token = driver.owner.issue_search_token("w")
        masked = wire.encode_mu_search_payload(wire.mask_token(token, old_secret))
        tx = driver.ledger.submit_tx(masked, sender="user3")
        driver.ledger.mine_all()
        assert driver.ledger.receipt(tx).info["invalid"]

    def test_revoke_non_member_warns_and_noops(self, caplog):
        driver = gated_driver()
        blocks = len(driver.ledger.blocks)
        with caplog.at_level("WARNING"):
            driver.revoke_user(7)
        assert "not a member" in caplog.text
        assert len(driver.ledger.blocks) == blocks

    def test_add_user_existing_member_needs_no_tx(self):
        driver = gated_driver()
        blocks = len(driver.ledger.blocks)
        driver.add_user(2)
        assert len(driver.ledger.blocks) == blocks

    def test_add_user_new_member_rewraps(self):
        driver = gated_driver()
        driver.add_user(6)
        assert driver.user_search(6, "w") == {1, 2}

    def test_revoke_then_fresh_id_searches_again(self):
        driver = gated_driver()
        driver.revoke_user(1)
        assert driver.user_search(1, "w") is None
        driver.add_user(4)  # fresh identity for the returning user
        assert driver.user_search(4, "w") == driver.oracle.search("w")

    def test_revoked_id_cannot_be_reissued(self):
        driver = gated_driver()
        driver.revoke_user(1)
        with pytest.raises(ParameterError, match="fresh id"):
            driver.group.add_user(1)

    def test_id_space_exhaustion(self):
        driver = gated_driver(n=3)
        with pytest.raises(CapacityError):
            driver.add_user(4)

    def test_credential_serialization(self):
        driver = gated_driver()
        cred = driver.credentials[1]
        assert multiuser.UserCredential.from_bytes(cred.to_bytes()) == cred


class TestAccessExactness:
    def test_randomized_epochs(self):
        rng = random.Random(41)
        db = random_db(rng, max_keywords=6, max_pairs=40)
        driver = gated_driver(members=(1, 2, 3, 4), db=db)
        pool = sorted(db.keywords())
        next_id = 5
        for _ in range(40):
            roll = rng.random()
            if roll < 0.25 and next_id <= 8:
                driver.add_user(next_id)
                next_id += 1
            elif roll < 0.5 and driver.group.members:
                driver.revoke_user(rng.choice(sorted(driver.group.members)))
            else:
                user = rng.randint(1, next_id - 1)
                result = driver.user_search(user, rng.choice(pool))
                if user in driver.group.members:
                    assert result is not None
                else:
                    assert result is None


class TestProxiedFlowPublicMode:
    def test_owner_proxies_user_queries(self):
        driver = ProtocolDriver(mode="public", peers=1)
        driver.setup(index.PlainDatabase({1: {"w"}, 2: {"w"}}))
        assert driver.user_search(0, "w") == {1, 2}

    def test_gate_setup_refused_in_public_mode(self):
        driver = ProtocolDriver(mode="public", peers=1)
        driver.setup(index.PlainDatabase({1: {"w"}}))
        with pytest.raises(ParameterError, match="private mode"):
            driver.mu_setup(8, [1])


class TestGateSizing:
    def test_eight_member_gate_fits_one_tx(self):
        driver = ProtocolDriver(mode="private", peers=1)
        driver.setup(index.PlainDatabase({1: {"w"}}))
        driver.mu_setup(8, list(range(1, 9)))
        stores = [r for r in driver.ledger.receipts if r.opcode == "MU_STORE"]
        assert len(stores) == 1 and stores[0].status == "ok"
        assert driver.ledger.view.mu_members == tuple(range(1, 9))
        assert len(driver.ledger.view.mu_header) == 8
