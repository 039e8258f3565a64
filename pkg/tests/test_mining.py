import math

import numpy as np
import pytest

from docforge.mining import (
    ContrastiveTuple,
    MiningConfig,
    augment_crop,
    contrastive_loss,
    contrastive_loss_scores,
    cross_negative_candidates,
    decode_payload,
    intra_negative_candidates,
    mine_contrastive_tuples,
    mine_positive,
    positive_candidates,
    tuple_record,
)
from docforge.ocr import CharStats
from docforge.photometric import sample_op_count
from docforge.segments import LineSegment
from docforge.similarity import CropEmbedding

from conftest import make_doc, page_with_text


def seg(x, y, w, h, line, text="AB", blank=False):
    return LineSegment(x=x, y=y, w=w, h=h, line_index=line, text=text, is_blank=blank)


STATS = CharStats(mean_w=10.0, mean_h=12.0)


# ---------------------------------------------------------------------------
# positives
# ---------------------------------------------------------------------------

def test_positive_duplicate_same_line():
    segs = [seg(0, 0, 20, 12, 0), seg(30, 0, 20, 12, 0)]
    assert positive_candidates(0, segs, STATS, tau0=10.0) == [1]


def test_positive_rejects_other_line():
    segs = [seg(0, 0, 20, 12, 0), seg(0, 40, 20, 12, 1)]
    assert positive_candidates(0, segs, STATS, tau0=10.0) == []


def test_positive_rejects_far_center():
    segs = [seg(0, 0, 20, 12, 0), seg(200, 0, 20, 12, 0)]
    # distance 200 >= tau0 * mean_w = 100
    assert positive_candidates(0, segs, STATS, tau0=10.0) == []


def test_positive_seeded_pick_is_stable():
    segs = [seg(0, 0, 20, 12, 0)] + [seg(22 * i, 0, 20, 12, 0) for i in range(1, 4)]
    picks = {mine_positive(0, segs, STATS, 10.0, np.random.default_rng(99))
             for _ in range(5)}
    assert len(picks) == 1


# ---------------------------------------------------------------------------
# intra / cross negatives
# ---------------------------------------------------------------------------

def test_intra_rejects_same_line():
    segs = [seg(0, 0, 20, 12, 0), seg(40, 0, 20, 12, 0)]
    assert intra_negative_candidates(0, segs, STATS, tau1=10.0, epsilon=0.1) == []


def test_intra_aspect_tolerance():
    a = seg(0, 0, 20, 12, 0)
    near = seg(0, 200, 21, 12, 5)  # ratio 1.05
    far = seg(0, 200, 24, 12, 5)   # ratio 1.2
    assert intra_negative_candidates(0, [a, near], STATS, 10.0, 0.1) == [1]
    assert intra_negative_candidates(0, [a, far], STATS, 10.0, 0.1) == []


def test_intra_requires_char_count():
    a = seg(0, 0, 20, 12, 0, text="AB")
    other = seg(0, 200, 20, 12, 5, text="ABC")
    assert intra_negative_candidates(0, [a, other], STATS, 10.0, 0.1) == []


def test_cross_zero_needed_touches_nothing():
    assert cross_negative_candidates(seg(0, 0, 20, 12, 0), "a", [], 0, 0.1) == []


def test_cross_scan_order_wraps():
    a = seg(0, 0, 20, 12, 0)
    corpus = [
        ("a", [seg(0, 0, 20, 12, 0)]),
        ("b", [seg(5, 5, 20, 12, 0)]),
        ("c", [seg(9, 9, 20, 12, 0)]),
    ]
    refs = cross_negative_candidates(a, "b", corpus, 2, 0.1)
    assert [r.doc_id for r in refs] == ["c", "a"]


def test_cross_only_matching_doc():
    a = seg(0, 0, 20, 12, 0, text="AB")
    corpus = [
        ("a", [a]),
        ("b", [seg(5, 5, 20, 12, 0, text="XYZ")]),  # wrong char count
        ("c", [seg(9, 9, 20, 12, 0, text="QQ"), seg(9, 40, 20, 12, 1, text="ZZ")]),
    ]
    refs = cross_negative_candidates(a, "a", corpus, 4, 0.1)
    assert {r.doc_id for r in refs} == {"c"}
    assert len(refs) == 2


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

def test_augment_blank_never_geometric():
    """Blank crops take the photometric branch; a rigged rng that would pick
    the geometric branch must still produce a photometric result."""
    img, _ = page_with_text(["AAAA"])
    box = (200, 200, 40, 20)  # blank area
    rng = np.random.default_rng(1)
    out = augment_crop(img, box, is_blank=True, rng=rng)
    assert out is not None
    assert out.shape == (20, 40, 3)


def test_augment_validity_thresholds():
    img, chars = page_with_text(["HELLO"])
    c0 = chars[0]
    box = (c0.x, c0.y, c0.w * 5, c0.h)
    crop = img[box[1]:box[1] + box[3], box[0]:box[0] + box[2]]
    rng = np.random.default_rng(3)
    for _ in range(50):
        out = augment_crop(img, box, is_blank=False, rng=rng)
        assert out is not None
        diff = (out != crop).any(axis=2).mean()
        l2 = np.linalg.norm(out.astype(float) - crop.astype(float))
        assert diff >= 0.05
        assert l2 >= 12.0


def test_op_count_follows_inverse_law():
    rng = np.random.default_rng(5)
    n = 100_000
    draws = np.array([sample_op_count(rng) for _ in range(n)])
    counts = np.bincount(draws, minlength=8)[1:8]
    weights = 1.0 / np.arange(1, 8)
    expected = weights / weights.sum()
    np.testing.assert_allclose(counts / n, expected, atol=0.01)


# ---------------------------------------------------------------------------
# full mining
# ---------------------------------------------------------------------------

def _corpus_docs(texts_per_doc, tmp_path):
    from docforge.util import save_image

    docs = []
    images = {}
    for i, texts in enumerate(texts_per_doc):
        img, chars = page_with_text(texts)
        doc_id = f"d{i}"
        path = tmp_path / f"{doc_id}.png"
        save_image(path, img)
        docs.append(make_doc(chars, doc_id=doc_id, image_path=str(path)))
        images[doc_id] = img
    return docs, images


def test_mining_no_positives_yields_nothing(tmp_path):
    # one lone character and a page too narrow for blank injection:
    # the only segment has no same-geometry partner anywhere
    docs, _ = _corpus_docs([["A"]], tmp_path)
    config = MiningConfig(n_negatives=4, m_alt=1)
    doc = docs[0]
    narrow = make_doc(doc.chars, width=doc.chars[0].x + doc.chars[0].w + 2,
                      height=60, doc_id="n0", image_path=doc.image_path)
    tuples = list(mine_contrastive_tuples([narrow], config, seed=5))
    assert tuples == []


def test_mining_duplicate_line_produces_tuple(tmp_path):
    docs, _ = _corpus_docs([["ABAB"], ["QQQQ"], ["ZZZZ"]], tmp_path)
    config = MiningConfig(n_negatives=3, m_alt=1)
    tuples = list(mine_contrastive_tuples(docs, config, seed=5))
    assert tuples
    for t in tuples:
        assert t.anchor.doc_id == t.positive.doc_id
        assert len(t.negatives) <= 3


def test_mining_strict_drops_short(tmp_path):
    docs, _ = _corpus_docs([["ABAB"]], tmp_path)
    config = MiningConfig(n_negatives=64, m_alt=1, strict=True)
    assert list(mine_contrastive_tuples(docs, config, seed=5)) == []
    config = MiningConfig(n_negatives=64, m_alt=1, strict=False)
    loose = list(mine_contrastive_tuples(docs, config, seed=5))
    assert loose and all(t.short for t in loose)


def test_mining_deterministic(tmp_path):
    docs, _ = _corpus_docs([["ABAB", "CDCD"], ["EFEF"], ["GHGH"]], tmp_path)
    config = MiningConfig(n_negatives=6, m_alt=2)

    def run():
        out = []
        for t in mine_contrastive_tuples(docs, config, seed=11):
            rec = tuple_record(t)
            out.append(rec)
        return out

    assert run() == run()


def test_mined_predicates_hold(tmp_path):
    docs, _ = _corpus_docs([["ABAB", "CDCD", "ABAB"], ["EFEF", "EFEF"]], tmp_path)
    config = MiningConfig(n_negatives=8, m_alt=2)
    by_doc = {}
    for d in docs:
        from docforge.segments import extract_line_segments

        by_doc[d.doc_id] = extract_line_segments(d, contrastive_mode=True)
    stats = {d.doc_id: CharStats(
        mean_w=sum(c.w for c in d.chars) / len(d.chars),
        mean_h=sum(c.h for c in d.chars) / len(d.chars)) for d in docs}

    count = 0
    for t in mine_contrastive_tuples(docs, config, seed=2):
        count += 1
        segs = by_doc[t.anchor.doc_id]
        a = next(s for s in segs if s.box == t.anchor.box)
        p = next(s for s in segs if s.box == t.positive.box)
        st = stats[t.anchor.doc_id]
        assert p.line_index == a.line_index
        assert (p.w, p.h) == (a.w, a.h)
        assert p.char_count == a.char_count
        assert math.dist(p.center, a.center) < config.tau0 * st.mean_w
        for n in t.negatives:
            if n.kind == "hard_augmented":
                assert n.payload is not None
                continue
            nsegs = by_doc[n.ref.doc_id]
            ns = next(s for s in nsegs if s.box == n.ref.box)
            assert ns.char_count == a.char_count
            ratio = ns.aspect / a.aspect
            assert 1 - config.epsilon <= ratio <= 1 + config.epsilon
            if n.kind == "intra_image":
                assert n.ref.doc_id == t.anchor.doc_id
                assert abs(ns.y - a.y) > config.tau1 * st.mean_h
            else:
                assert n.ref.doc_id != t.anchor.doc_id
    assert count > 0


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def test_loss_equal_scores_ln2():
    assert contrastive_loss_scores(0.5, [0.5], tau=0.1) == pytest.approx(
        math.log(2), abs=1e-9)


def test_loss_uniform_negatives_lnN1():
    for n in (1, 4, 256):
        loss = contrastive_loss_scores(0.3, [0.3] * n, tau=0.07)
        assert loss == pytest.approx(math.log(n + 1), abs=1e-9)


def test_loss_separated_value():
    loss = contrastive_loss_scores(1.0, [-1.0], tau=0.1)
    want = -math.log(math.exp(10) / (math.exp(10) + math.exp(-10)))
    assert loss == pytest.approx(want, rel=1e-6)
    assert loss == pytest.approx(2.061e-9, rel=1e-3)


def test_loss_monotone_in_positive_score():
    rng = np.random.default_rng(0)
    negs = list(rng.uniform(-1, 1, size=16))
    eps = 1e-6
    for s in np.linspace(-0.9, 0.9, 13):
        lo = contrastive_loss_scores(s + eps, negs, tau=0.1)
        hi = contrastive_loss_scores(s - eps, negs, tau=0.1)
        assert lo < hi


def test_loss_embedding_routing():
    bg = np.array([1.0, 0.0])
    a = CropEmbedding(bg=bg, fg=np.array([0.0, 1.0]))
    p = CropEmbedding(bg=bg, fg=np.array([0.0, 1.0]))
    n = CropEmbedding(bg=bg, fg=np.array([1.0, 0.0]))
    # text-text: fg differs, S(a,n) = 0.5; blank routing ignores fg: S = 1.0
    text_loss = contrastive_loss(a, p, [n], tau=1.0)
    blank_loss = contrastive_loss(a, p, [n], tau=1.0, anchor_blank=True)
    assert blank_loss == pytest.approx(math.log(2), abs=1e-12)
    assert text_loss < blank_loss


def test_payload_roundtrip():
    rng = np.random.default_rng(4)
    arr = rng.integers(0, 256, size=(9, 13, 3)).astype(np.uint8)
    from docforge.mining import _encode_payload

    np.testing.assert_array_equal(decode_payload(_encode_payload(arr)), arr)
