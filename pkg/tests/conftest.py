import pytest

from dsse import crypto


@pytest.fixture(scope="session")
def fp_keypair() -> crypto.TdpKeyPair:
    """One 1024-bit permutation key pair shared by every forward-privacy test."""
    return crypto.tdp_keygen(1024)
