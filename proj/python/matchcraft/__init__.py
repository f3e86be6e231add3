from ._matchcraft import (  # noqa: F401
    CorpusEntry,
    Model,
    PreparedToy,
    RelationRecord,
    Vocabulary,
    average_precision,
    build_model,
    build_vocabulary,
    encode_corpus,
    load_model,
    make_prepared_toy,
    mrr,
    ndcg_at_k,
    precision_at_k,
    save_model,
    score_pairs,
    tokenize,
    train,
)
