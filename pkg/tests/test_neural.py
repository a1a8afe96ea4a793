import json
import struct

import numpy as np
import pytest

from sqa_bench.errors import (CheckpointFormatError, EmptyDocument, InvalidSpan,
                              NoForwardState, UnknownPhonemeId)
from sqa_bench.neural import tensor as T
from sqa_bench.neural.checkpoint import load_checkpoint, save_checkpoint
from sqa_bench.neural.model import (Example, Featurizer, ModelConfig, SpanModel,
                                    build_word_representation, predict_span, span_scores)
from sqa_bench.neural.subword_cnn import (SubwordCNN, SubwordConfig, conv_scores,
                                          phoneme_cnn_forward, subword_backward)
from sqa_bench.neural.train import TrainConfig, train

from oracles import best_span_exhaustive, finite_difference, relative_error

TOY = [
    Example("t0", ("the", "bridge", "was", "built", "by", "emma", "baxter"),
            ("who", "built", "the", "bridge"), (5, 6)),
    Example("t1", ("lucy", "walsh", "wrote", "a", "book", "in", "1890"),
            ("when", "was", "the", "book", "written"), (6, 6)),
    Example("t2", ("the", "walls", "are", "made", "of", "steel"),
            ("what", "are", "the", "walls", "made", "of"), (5, 5)),
    Example("t3", ("it", "stands", "on", "the", "hudson", "river"),
            ("which", "river"), (4, 4)),
    Example("t4", ("about", "forty", "thousand", "visitors", "come"),
            ("how", "many", "visitors"), (1, 2)),
    Example("t5", ("john", "smith", "designed", "the", "tower"),
            ("who", "designed", "the", "tower"), (0, 1)),
    Example("t6", ("the", "tower", "was", "restored", "in", "1901"),
            ("when", "was", "it", "restored"), (5, 5)),
    Example("t7", ("steel", "came", "from", "reading"),
            ("where", "did", "the", "steel", "come", "from"), (3, 3)),
    Example("t8", ("harry", "fed", "the", "cat"), ("who", "fed", "the", "cat"), (0, 0)),
    Example("t9", ("the", "census", "bureau", "counted", "it"),
            ("who", "counted", "it"), (1, 2)),
]


def small_model(lexicon, patterns, units=("phoneme", "syllable"), seed=0, word_dim=4,
                hidden=3, examples=TOY):
    fz = Featurizer.build([e.doc_words + e.question_words for e in examples], lexicon,
                          patterns)
    sub = {"phoneme": SubwordConfig("phoneme", 3, 3, 4),
           "syllable": SubwordConfig("syllable", 3, 2, 4),
           "char": SubwordConfig("char", 3, 3, 4)}
    cfg = ModelConfig(word_dim, hidden, units, {u: sub[u] for u in units})
    return SpanModel(cfg, fz, seed=seed)


# -- subword CNN --------------------------------------------------------------

def test_conv_output_length():
    rng = np.random.default_rng(0)
    Z, _, _ = conv_scores(list(range(1, 7)), rng.normal(size=(10, 7)),
                          rng.normal(size=(5, 3, 7)))
    assert Z.shape == (5, 4)


def test_shape_law_random():
    rng = np.random.default_rng(1)
    for _ in range(100):
        l, k, d, nf = (int(rng.integers(1, 9)), int(rng.integers(1, 5)),
                       int(rng.integers(1, 8)), int(rng.integers(1, 6)))
        ids = list(rng.integers(1, 12, size=l))
        H, F = rng.normal(size=(12, d)), rng.normal(size=(nf, k, d))
        Z, padded, _ = conv_scores(ids, H, F)
        assert Z.shape == (nf, max(l, k) - k + 1)
        out, _ = phoneme_cnn_forward(ids, H, F)
        assert out.shape == (nf,)


def test_zero_parameters_give_zero():
    out, _ = phoneme_cnn_forward([1, 2, 3, 4], np.zeros((6, 4)), np.zeros((3, 3, 4)))
    assert (out == 0).all()


def test_trigram_detector():
    C = 6
    H = np.eye(C)                               # one-hot phoneme embeddings, d = C
    trigram = [2, 3, 4]
    F = np.eye(C)[trigram][None]                # filter = stacked one-hot rows
    hit, _ = phoneme_cnn_forward([1, 2, 3, 4], H, F)
    miss, _ = phoneme_cnn_forward([2, 3, 5, 4], H, F)
    assert hit[0] == 3.0
    assert miss[0] < 3.0


def test_unknown_id():
    with pytest.raises(UnknownPhonemeId):
        phoneme_cnn_forward([1, 99], np.zeros((5, 2)), np.zeros((1, 2, 2)))
    cnn = SubwordCNN(5, SubwordConfig("phoneme", 2, 2, 3), np.random.default_rng(0))
    with pytest.raises(UnknownPhonemeId):
        cnn.embed([[1, 2], [7]])


def test_backward_without_forward():
    with pytest.raises(NoForwardState):
        subword_backward(None, np.ones(3), np.zeros((3, 2, 2)))
    cnn = SubwordCNN(5, SubwordConfig("phoneme", 2, 2, 3), np.random.default_rng(0))
    with pytest.raises(NoForwardState):
        cnn.backward(np.ones(3))


@pytest.mark.parametrize("seed", range(10))
def test_subword_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    C, d, k, nf = 9, int(rng.integers(2, 7)), int(rng.integers(2, 4)), int(rng.integers(2, 6))
    ids = list(rng.integers(1, C, size=int(rng.integers(1, 8))))
    H, F = rng.normal(size=(C, d)), rng.normal(size=(nf, k, d))
    up = rng.normal(size=nf)
    _, state = phoneme_cnn_forward(ids, H, F)
    grads = subword_backward(state, up, F)

    def loss():
        return float(phoneme_cnn_forward(ids, H, F)[0] @ up)

    assert relative_error(grads["H"], finite_difference(loss, H)) < 1e-4
    assert relative_error(grads["filters"], finite_difference(loss, F)) < 1e-4
    unused = sorted(set(range(C)) - set(ids) - {0})
    assert (grads["H"][unused] == 0).all()


def test_zero_upstream():
    rng = np.random.default_rng(0)
    F = rng.normal(size=(3, 2, 4))
    _, state = phoneme_cnn_forward([1, 2, 3], rng.normal(size=(5, 4)), F)
    g = subword_backward(state, np.zeros(3), F)
    assert not g["H"].any() and not g["filters"].any()


def test_class_forward_backward_and_batched_embed():
    rng = np.random.default_rng(3)
    cnn = SubwordCNN(8, SubwordConfig("phoneme", 3, 3, 5), rng)
    words = [[1, 2], [3, 4, 5, 6, 7], [2, 2, 2]]
    batch = cnn.embed(words).data
    for w, row in zip(words, batch):
        assert np.allclose(cnn.forward(w), row)
    # batched autograd agrees with the hand-written backward
    up = rng.normal(size=5)
    cnn.forward(words[1])
    hand = cnn.backward(up)
    T.total(T.mul(cnn.embed([words[1]]), up[None])).backward()
    assert np.allclose(cnn.H.grad, hand["H"])
    assert np.allclose(cnn.filters.grad, hand["filters"])


def test_max_pool_subgradient():
    rng = np.random.default_rng(5)
    H, F = rng.normal(size=(8, 4)), rng.normal(size=(1, 2, 4))
    ids = [1, 2, 3, 4, 5, 6]
    Z, _, _ = conv_scores(ids, H, F)
    order = np.sort(Z[0])
    margin = order[-1] - order[-2]
    win = int(Z[0].argmax())
    out, _ = phoneme_cnn_forward(ids, H, F)
    # nudge a phoneme that no winning window touches, by less than the margin
    outside = [p for p in ids if p not in ids[win:win + 2]]
    H2 = H.copy()
    step = 0.4 * margin / (np.abs(F).sum() + 1e-12)
    H2[outside[0]] += step
    out2, _ = phoneme_cnn_forward(ids, H2, F)
    assert out2[0] == out[0]


# -- word representation and span scoring -------------------------------------

def test_representation_dims(lexicon, patterns):
    fz = Featurizer.build([("cat", "sat")], lexicon, patterns)
    dims = {(): 100, ("phoneme",): 180, ("phoneme", "syllable", "char"): 100 + 80 + 100 + 50}
    for units, dim in dims.items():
        model = SpanModel(ModelConfig(100, 8, units), fz)
        assert model.config.input_dim == dim
        assert build_word_representation("cat", model).shape == (dim,)
        assert build_word_representation("never-seen", model).shape == (dim,)


def test_representation_order(lexicon, patterns):
    model = small_model(lexicon, patterns, ("phoneme",))
    v = build_word_representation("bridge", model)
    w = model.word_emb.data[model.featurizer.word_id("bridge")]
    assert np.array_equal(v[:4], w)


def test_span_scores_contract(lexicon, patterns):
    model = small_model(lexicon, patterns)
    rng = np.random.default_rng(0)
    D = model.config.input_dim
    doc, q = rng.normal(size=(7, D)), rng.normal(size=(3, D))
    ps, pe = span_scores(doc, q, model)
    assert abs(ps.sum() - 1) < 1e-9 and abs(pe.sum() - 1) < 1e-9
    for rate in (0.0, 0.3, 0.9):
        a, b = span_scores(doc, q, model, "eval", rate, np.random.default_rng(1))
        assert np.array_equal(a, ps) and np.array_equal(b, pe)
    tr = span_scores(doc, q, model, "train", 0.5, np.random.default_rng(1))
    assert not np.array_equal(tr[0], ps)
    one = span_scores(doc[:1], q, model)
    assert one[0].tolist() == [1.0] and one[1].tolist() == [1.0]
    with pytest.raises(EmptyDocument):
        span_scores(doc[:0], q, model)


def test_batched_matches_single(lexicon, patterns):
    model = small_model(lexicon, patterns)
    batch = model.distributions(TOY[:4])
    for ex, (ps, pe) in zip(TOY[:4], batch):
        R = model.represent(list(ex.doc_words)).data
        Q = model.represent(list(ex.question_words)).data
        s, e = span_scores(R, Q, model)
        assert np.allclose(s, ps, atol=1e-12) and np.allclose(e, pe, atol=1e-12)


def test_eval_is_bitwise_deterministic(lexicon, patterns):
    model = small_model(lexicon, patterns)
    a = model.distributions(TOY)
    b = model.distributions(TOY)
    for (s1, e1), (s2, e2) in zip(a, b):
        assert np.array_equal(s1, s2) and np.array_equal(e1, e2)


def test_predict_span():
    start = np.full(8, 0.01)
    end = np.full(8, 0.01)
    start[2], end[5] = 0.9, 0.9
    assert predict_span(start, end) == (2, 5)
    assert predict_span(np.ones(5) / 5, np.ones(5) / 5) == (0, 0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 13))
        s, e = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        assert predict_span(s, e) == best_span_exhaustive(s, e)


def test_model_gradients(lexicon, patterns):
    model = small_model(lexicon, patterns, ("phoneme", "syllable", "char"))
    params = model.parameters()
    model.loss(TOY[:3], train=False).backward()
    grads = {k: p.grad.copy() for k, p in params.items()}

    def loss():
        return float(model.loss(TOY[:3], train=False).data)

    for name, p in params.items():
        err = relative_error(grads[name], finite_difference(loss, p.data))
        assert err < 1e-4, (name, err)


# -- training and checkpoints -------------------------------------------------

def test_overfit_toy_set(lexicon, patterns):
    model = small_model(lexicon, patterns, (), word_dim=16, hidden=16)
    losses = train(model, TOY, TrainConfig(lr=0.2, epochs=200, batch_size=5, dropout=0.0))
    spans = model.predict(TOY)
    assert spans == [ex.span for ex in TOY]
    assert losses[-1] < losses[0]


def test_training_is_deterministic(lexicon, patterns):
    runs = []
    for _ in range(2):
        model = small_model(lexicon, patterns, ("phoneme",), seed=4)
        runs.append(train(model, TOY, TrainConfig(epochs=5, batch_size=3, dropout=0.2,
                                                  seed=7)))
    assert runs[0] == runs[1]


def test_invalid_span(lexicon, patterns):
    model = small_model(lexicon, patterns)
    bad = [Example("x", ("a", "b"), ("q",), (1, 2))]
    with pytest.raises(InvalidSpan):
        train(model, bad, TrainConfig(epochs=1))
    with pytest.raises(InvalidSpan):
        train(model, [Example("y", ("a",), ("q",), None)], TrainConfig(epochs=1))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(dropout=1.0)


def test_checkpoint_round_trip(tmp_path, lexicon, patterns):
    model = small_model(lexicon, patterns, ("phoneme", "char"))
    train(model, TOY, TrainConfig(epochs=2, batch_size=5))
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, {"note": 1})
    back, header = load_checkpoint(path, lexicon, patterns)
    assert header["extra"] == {"note": 1}
    for (a, b), (c, d) in zip(model.distributions(TOY), back.distributions(TOY)):
        assert np.array_equal(a, c) and np.array_equal(b, d)
    raw = path.read_bytes()
    # magic, version and header length, then the little-endian float64 payload
    assert raw[:8] == b"SQACKPT\0"
    version, hlen = struct.unpack_from("<II", raw, 8)
    header = json.loads(raw[16:16 + hlen])
    payload = np.frombuffer(raw[16 + hlen:], dtype="<f8")
    assert version == 1
    assert payload.size == sum(b["count"] for b in header["params"])
    assert payload[0] == model.parameters()["word_emb"].data.ravel()[0]
    (tmp_path / "bad").write_bytes(b"nope")
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(tmp_path / "bad", lexicon, patterns)
    (tmp_path / "short").write_bytes(raw[:-8])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(tmp_path / "short", lexicon, patterns)
