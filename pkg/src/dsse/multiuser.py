"""Shared-access management for the permissioned deployment.

The owner samples a 32-byte group secret, wraps it for the current member set
(one sealed copy per member, so the header grows linearly with membership)
and stores (secret, header, members) in contract state. An authorized user
recovers the secret, XOR-masks a search token with it and submits the masked
token; the contract unmasks with its own copy and runs the regular search.
Revocation samples a fresh secret and rewraps, so stale masks stop unmasking
to anything the index knows.

The public-chain deployment keeps the simpler proxied flow: the user hands
the keyword to the owner, who searches on their behalf.
"""

from __future__ import annotations

import logging
import secrets
from dataclasses import dataclass, field

from . import crypto, wire
from .errors import CapacityError, ParameterError

log = logging.getLogger(__name__)

_WRAP_CONTEXT = b"member-wrap-v1"

CREDENTIAL_MAGIC = b"dsse-cred-v1"


@dataclass(frozen=True)
class GroupPublic:
    n_users: int
    group_id: bytes  # 16-byte domain separator for wrap-key derivation

    def to_bytes(self) -> bytes:
        return self.n_users.to_bytes(4, "big") + self.group_id

    @classmethod
    def from_bytes(cls, raw: bytes) -> "GroupPublic":
        if len(raw) != 20:
            raise ParameterError("malformed group public parameters")
        return cls(int.from_bytes(raw[:4], "big"), raw[4:])


@dataclass(frozen=True)
class GroupKeys:
    pk: GroupPublic
    user_secrets: tuple[bytes, ...]


def group_init(n_users: int, lambda_bits: int = 256) -> GroupKeys:
    """Issue the public parameters and one secret per user slot."""
    if n_users < 1:
        raise ParameterError("need at least one user slot")
    size = lambda_bits // 8
    return GroupKeys(GroupPublic(n_users, secrets.token_bytes(16)),
                     tuple(secrets.token_bytes(size) for _ in range(n_users)))


def _wrap_key(pk: GroupPublic, user_secret: bytes) -> bytes:
    return crypto.prf(user_secret, _WRAP_CONTEXT + pk.group_id)


def group_encrypt(members, pk: GroupPublic, payload: bytes,
                  user_secrets) -> list[tuple[int, bytes]]:
    """Wrap `payload` for every member; exactly the members can unwrap."""
    header = []
    for i in sorted(members):
        if not 1 <= i <= pk.n_users:
            raise ParameterError(f"user id {i} outside 1..{pk.n_users}")
        header.append((i, crypto.seal(_wrap_key(pk, user_secrets[i - 1]), payload)))
    return header


def group_decrypt(members, user_id: int, pk: GroupPublic, user_secret: bytes,
                  header) -> bytes | None:
    """Recover the wrapped payload, or None when the user is not a member."""
    if not 1 <= user_id <= pk.n_users:
        raise ParameterError(f"user id {user_id} outside 1..{pk.n_users}")
    if user_id not in set(members):
        return None
    for i, wrapped in header:
        if i == user_id:
            try:
                return crypto.unseal(_wrap_key(pk, user_secret), wrapped)
            except Exception:
                return None
    return None


@dataclass(frozen=True)
class UserCredential:
    user_id: int
    pk: GroupPublic
    secret: bytes

    def to_bytes(self) -> bytes:
        return (CREDENTIAL_MAGIC + self.user_id.to_bytes(4, "big")
                + self.pk.to_bytes() + self.secret)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "UserCredential":
        if not raw.startswith(CREDENTIAL_MAGIC):
            raise ParameterError("not a credential file")
        body = raw[len(CREDENTIAL_MAGIC):]
        user_id = int.from_bytes(body[:4], "big")
        return cls(user_id, GroupPublic.from_bytes(body[4:24]), body[24:])


@dataclass
class GroupManager:
    """Owner-side membership state; issuance and revocation are serialized
    through the owner like every other state-mutating operation."""

    keys: GroupKeys
    members: set[int] = field(default_factory=set)
    revoked: set[int] = field(default_factory=set)
    issued: set[int] = field(default_factory=set)
    group_secret: bytes = b""

    @classmethod
    def create(cls, n_users: int, members, lambda_bits: int = 256) -> "GroupManager":
        return cls(keys=group_init(n_users, lambda_bits), members=set(members))

    def _store_payload(self, registered_queries=()) -> bytes:
        header = group_encrypt(self.members, self.keys.pk, self.group_secret,
                               self.keys.user_secrets)
        return wire.encode_mu_store_payload(self.group_secret,
                                            sorted(self.members), header,
                                            list(registered_queries))

    def setup_payload(self, registered_queries=()) -> bytes:
        """Initial gate: fresh secret wrapped for the configured member set."""
        if self.members & self.revoked:
            raise ParameterError("member and revoked sets must be disjoint")
        self.group_secret = secrets.token_bytes(32)
        return self._store_payload(registered_queries)

    def credential(self, user_id: int) -> UserCredential:
        if not 1 <= user_id <= self.keys.pk.n_users:
            raise CapacityError(
                f"user id {user_id} outside the issued space "
                f"1..{self.keys.pk.n_users}")
        self.issued.add(user_id)
        return UserCredential(user_id, self.keys.pk,
                              self.keys.user_secrets[user_id - 1])

    def add_user(self, user_id: int) -> tuple[UserCredential, bytes | None]:
        """Issue credentials; rewraps the gate only if membership grows."""
        cred = self.credential(user_id)
        if user_id in self.members:
            return cred, None
        if user_id in self.revoked:
            raise ParameterError(
                f"user id {user_id} was revoked; allocate a fresh id")
        self.members.add(user_id)
        return cred, self._store_payload()

    def revoke_user(self, user_id: int) -> bytes | None:
        """Fresh secret for everyone but `user_id`; returns the gate payload."""
        if user_id not in self.members:
            log.warning("revoke of user %d ignored: not a member", user_id)
            return None
        self.revoked.add(user_id)
        self.members = self.members - self.revoked - {user_id}
        self.group_secret = secrets.token_bytes(32)
        return self._store_payload()


def user_trapdoor(token_bytes: bytes, credential: UserCredential,
                  view) -> tuple[bytes, bool]:
    """Mask an owner-issued token with the current group secret.

    Reads (members, header) from contract state. A non-member cannot recover
    the secret; the trapdoor is still emitted under a random mask (it will be
    recorded as invalid by the contract) and flagged locally via the returned
    boolean.
    """
    members, header = view.read_group_gate()
    recovered = group_decrypt(members, credential.user_id, credential.pk,
                              credential.secret, header)
    authorized = recovered is not None
    mask = recovered if authorized else secrets.token_bytes(32)
    return wire.encode_mu_search_payload(wire.mask_token(token_bytes, mask)), authorized


def proxied_search(owner, ledger, keyword: str) -> set[int]:
    """Public-chain sharing flow: the owner searches on the user's behalf."""
    request = owner.search_request(keyword)
    for payload in request.payloads:
        ledger.submit_tx(payload)
    ledger.mine_all()
    return owner.decode_results(ledger.view, keyword)
