"""Shared test plumbing: deterministic keys, nonce sources and random models."""

from __future__ import annotations

import random

from dsse.crypto import MasterKeys
from dsse.index import PlainDatabase, seeded_nonces

FIXED_MK = MasterKeys(b"\x01" * 32, b"\x02" * 32, b"\x03" * 32)

DET_NONCES = seeded_nonces(b"\x42" * 32)


def random_db(rng: random.Random, max_keywords: int = 50,
              max_pairs: int = 200, id_space: int = 5000) -> PlainDatabase:
    """Random keyword/document incidence bounded by distinct-keyword and
    total-pair budgets."""
    n_keywords = rng.randint(1, max_keywords)
    pool = [f"kw{j}" for j in range(n_keywords)]
    db = PlainDatabase()
    pairs = 0
    budget = rng.randint(1, max_pairs)
    doc_ids = rng.sample(range(id_space), k=min(id_space, budget))
    for doc_id in doc_ids:
        if pairs >= budget:
            break
        take = rng.randint(1, min(6, len(pool), budget - pairs))
        db.add_doc(doc_id, rng.sample(pool, k=take))
        pairs += take
    return db


def random_ops(rng: random.Random, driver, keyword_pool, id_space=5000,
               n_ops: int = 50, verify_every_search: bool = True):
    """Drive a random add/delete/search workload through a ProtocolDriver.

    The driver itself raises OracleMismatch if any search disagrees with the
    plaintext model.
    """
    known_ids = [doc_id for _, doc_id in driver.oracle.setup_pairs]
    searches = 0
    for _ in range(n_ops):
        roll = rng.random()
        if roll < 0.4:
            driver.search(rng.choice(keyword_pool), verify=verify_every_search)
            searches += 1
        elif roll < 0.75:
            doc_id = rng.randrange(id_space)
            words = rng.sample(keyword_pool, k=rng.randint(1, min(4, len(keyword_pool))))
            driver.add(doc_id, words)
            known_ids.append(doc_id)
        else:
            doc_id = (rng.choice(known_ids)
                      if known_ids and rng.random() < 0.7
                      else rng.randrange(id_space))
            words = rng.sample(keyword_pool, k=rng.randint(1, min(4, len(keyword_pool))))
            driver.delete(doc_id, words)
    return searches
