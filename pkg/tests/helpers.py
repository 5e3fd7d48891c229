"""Shared fixtures data and builders used across test modules."""

import json

DEBUNKS = [
    {"id": "d1", "lang": "en", "claim": "Lions released in Russia streets", "title": "No lions on the streets", "published_at": "2020-03-20"},
    {"id": "d2", "lang": "es", "claim": "Leones en las calles de Rusia", "title": "La foto del leon fue tomada en 2016", "published_at": "2020-03-25"},
    {"id": "d3", "lang": "en", "claim": "Crocodile in Hyderabad flood streets", "title": "Old video from Mexico", "published_at": "2020-10-01"},
    {"id": "d4", "lang": "hi", "claim": "Vaccine contains tracking chips", "title": "Chip claim is false", "published_at": "2020-06-02"},
    {"id": "d5", "lang": "pt", "claim": "Vacina altera o DNA humano", "title": "Vacinas nao alteram DNA", "published_at": "2021-01-15"},
    {"id": "d6", "lang": "en", "claim": "5G towers spread the virus", "title": "", "published_at": "2020-04-11"},
]

QUERIES = [
    {"id": "q1", "lang": "en", "text": "Putin released 800 lions to keep people home", "created_at": "2020-04-01"},
    {"id": "q2", "lang": "hi", "text": "वैक्सीन में ट्रैकिंग चिप है", "text_en": "vaccine has tracking chip", "created_at": "2020-07-01"},
    {"id": "q3", "lang": "en", "text": "crocodile spotted in hyderabad streets", "created_at": "2020-11-05"},
    {"id": "q4", "lang": "es", "text": "las vacunas cambian tu ADN", "created_at": "2021-02-20"},
]

QRELS = [
    {"query_id": "q1", "debunk_id": "d1", "level": "exact"},
    {"query_id": "q1", "debunk_id": "d2", "level": "partial"},
    {"query_id": "q2", "debunk_id": "d4", "level": "exact"},
    {"query_id": "q2", "debunk_id": "d6", "level": "irrelevant"},
    {"query_id": "q3", "debunk_id": "d3", "level": "exact"},
    {"query_id": "q4", "debunk_id": "d5", "level": "partial"},
]


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path


def separable_training_fixture(dim=256, seed=1, n_queries=20, n_distractors=100):
    """Frozen synthetic set: each query shares a topic phrase with exactly one
    positive doc; distractors are unrelated word soup. Returns
    (query_matrix, doc_matrix, train_pairs, validation_pairs)."""
    import random

    from xdnr.corpus import TrainPair
    from xdnr.dense import embed_texts

    words = [
        "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
        "india", "juliet", "kilo", "lima", "mike", "november", "oscar", "papa",
        "quebec", "romeo", "sierra", "tango",
    ]

    def topic_phrase(i):
        r = random.Random(1000 + i)
        return " ".join(r.choice(words) for _ in range(6)) + f" topic{i}"

    queries = [(f"q{i}", f"{topic_phrase(i)} tweet claim") for i in range(n_queries)]
    docs = [(f"pos{i}", f"{topic_phrase(i)} debunk article") for i in range(n_queries)]
    noise = random.Random(777)
    for j in range(n_distractors):
        docs.append(
            (f"neg{j}", " ".join(noise.choice(words) for _ in range(8)) + f" noise{j}")
        )

    pairs = [TrainPair(f"q{i}", f"pos{i}", 1.0) for i in range(n_queries)]
    neg_rng = random.Random(5)
    for i in range(n_queries):
        for d in neg_rng.sample([f"neg{j}" for j in range(n_distractors)], 10):
            pairs.append(TrainPair(f"q{i}", d, 0.0))
    validation = [p for p in pairs if p.label > 0]
    return (
        embed_texts(queries, dim=dim, seed=seed),
        embed_texts(docs, dim=dim, seed=seed),
        pairs,
        validation,
    )
