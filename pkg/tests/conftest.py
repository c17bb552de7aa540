import numpy as np
import pytest

from grapher.corpus import Corpus, DataObject, Query


@pytest.fixture
def toy_corpus() -> Corpus:
    """Six objects exercising all three link sources at once."""
    return Corpus(
        [
            DataObject(
                id="t1",
                content="orders table with customer ids",
                structural_links={"t2"},
                entities=["Acme", "Q3"],
            ),
            DataObject(
                id="t2",
                content="customers table",
                structural_links={"t1"},
                entities=["Acme"],
            ),
            DataObject(
                id="p1",
                content="first passage about Acme earnings",
                entities=["Acme", "Q3", "earnings"],
            ),
            DataObject(id="d#0", content="chunk zero", doc_id="d", chunk_id=0),
            DataObject(id="d#1", content="chunk one", doc_id="d", chunk_id=1),
            DataObject(id="d#3", content="chunk three", doc_id="d", chunk_id=3),
        ]
    )


@pytest.fixture
def query() -> Query:
    return Query(id="q1", text="acme earnings")


def make_corpus(n: int, links=(), prefix: str = "o") -> Corpus:
    corpus = Corpus(
        DataObject(id=f"{prefix}{i}", content=f"object number {i}") for i in range(n)
    )
    for a, b in links:
        corpus[f"{prefix}{a}"].structural_links.add(f"{prefix}{b}")
        corpus[f"{prefix}{b}"].structural_links.add(f"{prefix}{a}")
    return corpus


def random_adjacency(rng: np.random.Generator, n: int, density: float = 0.2) -> np.ndarray:
    A = (rng.random((n, n)) < density).astype(float)
    np.fill_diagonal(A, 0.0)
    return A
