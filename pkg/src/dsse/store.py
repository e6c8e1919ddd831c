"""Content-addressed blob store standing in for a decentralized file system.

Addresses are the SHA-256 of the stored bytes, so puts are idempotent and a
fetched blob can always be checked against its address. Two backends: an
in-memory map for tests and an objects/<hex> directory on disk.
"""

from __future__ import annotations

import hashlib
import os


class NotFound(KeyError):
    pass


def address_of(blob: bytes) -> bytes:
    return hashlib.sha256(blob).digest()


class MemoryStore:
    def __init__(self):
        self._objects: dict[bytes, bytes] = {}

    def put(self, blob: bytes) -> bytes:
        address = address_of(blob)
        self._objects[address] = blob
        return address

    def get(self, address: bytes) -> bytes:
        try:
            return self._objects[address]
        except KeyError:
            raise NotFound(address.hex()) from None

    def __len__(self):
        return len(self._objects)


class DirectoryStore:
    """objects/<hex-address> files under a root directory; no index file."""

    def __init__(self, root: str):
        self.root = root
        os.makedirs(os.path.join(root, "objects"), exist_ok=True)

    def _path(self, address: bytes) -> str:
        return os.path.join(self.root, "objects", address.hex())

    def put(self, blob: bytes) -> bytes:
        address = address_of(blob)
        path = self._path(address)
        if not os.path.exists(path):
            tmp = path + ".tmp"
            with open(tmp, "wb") as fh:
                fh.write(blob)
            os.replace(tmp, path)
        return address

    def get(self, address: bytes) -> bytes:
        try:
            with open(self._path(address), "rb") as fh:
                return fh.read()
        except FileNotFoundError:
            raise NotFound(address.hex()) from None
