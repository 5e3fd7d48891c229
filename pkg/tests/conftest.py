import pytest
from hypothesis import HealthCheck, settings

from helpers import DEBUNKS, QRELS, QUERIES, write_jsonl

settings.register_profile(
    "ci", derandomize=True, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture
def corpus_files(tmp_path):
    """(debunks_path, queries_path, qrels_path) for the six-debunk fixture."""
    return (
        write_jsonl(tmp_path / "debunks.jsonl", DEBUNKS),
        write_jsonl(tmp_path / "queries.jsonl", QUERIES),
        write_jsonl(tmp_path / "qrels.jsonl", QRELS),
    )


@pytest.fixture
def loaded_corpus(corpus_files):
    from xdnr.corpus import load_corpus

    return load_corpus(*corpus_files)
