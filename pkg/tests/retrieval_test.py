import json

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from hadamard_hashing.codebook import build_codebook
from hadamard_hashing.exceptions import BadMagicError, FileFormatError, ValidationError
from hadamard_hashing.retrieval import (
    BinaryCodeSet,
    average_precision,
    binarize,
    evaluate,
    evaluate_rankings,
    hamming_distance,
    hamming_distances,
    load_codes,
    pack_bits,
    relevance,
    save_codes,
    search,
    unpack_bits,
)
from hadamard_hashing.retrieval.evaluation import interpolated_precision


def _random_codes(n, code_length, seed):
    rng = np.random.default_rng(seed)
    return BinaryCodeSet.from_signs(rng.choice([-1, 1], size=(n, code_length)))


def _naive_ranking(query_signs, db_signs):
    distances = (query_signs[None, :] != db_signs).sum(axis=1)
    order = np.lexsort((np.arange(distances.size), distances))
    return order, distances[order]


def _naive_ap(flags, num_relevant, cutoff):
    hits, total = 0, 0.0
    for rank, flag in enumerate(flags, start=1):
        if flag:
            hits += 1
            total += hits / rank
    return total / min(cutoff, num_relevant)


class TestPacking:
    def test_bit_layout(self):
        assert pack_bits(np.array([[1, -1, 1]]))[0, 0] == 5
        signs = -np.ones((1, 70), dtype=np.int8)
        signs[0, 64] = 1
        words = pack_bits(signs)
        assert words.shape == (1, 2)
        assert_array_equal(words[0], [0, 1])

    def test_unpack_inverts_pack(self):
        signs = np.random.default_rng(0).choice([-1, 1], size=(7, 100)).astype(np.int8)
        assert_array_equal(unpack_bits(pack_bits(signs), 100), signs)

    def test_padding_must_be_zero(self):
        with pytest.raises(ValidationError):
            BinaryCodeSet(np.array([[1 << 10]], dtype=np.uint64), 8)
        with pytest.raises(ValidationError):
            BinaryCodeSet(np.zeros((2, 1), dtype=np.uint64), 65)

    def test_binarize(self):
        codes = binarize(np.array([[0.0, -0.3, 0.2]]))
        assert_array_equal(codes.signs(), [[1, -1, 1]])
        centered = binarize(np.array([[0.0, -0.3]]), 'mean_centered_sign', np.array([0.1, -0.5]))
        assert_array_equal(centered.signs(), [[-1, 1]])
        assert centered.mode == 'mean_centered_sign'
        with pytest.raises(ValidationError):
            binarize(np.zeros((1, 2)), 'mean_centered_sign')

    def test_file_round_trip(self, tmp_path):
        codes = _random_codes(9, 70, seed=1)
        save_codes(codes, tmp_path / 'c.hcbc')
        loaded = load_codes(tmp_path / 'c.hcbc')
        assert_array_equal(loaded.words, codes.words)
        assert loaded.code_length == 70
        (tmp_path / 'bad.hcbc').write_bytes(b'HCCB' + (tmp_path / 'c.hcbc').read_bytes()[4:])
        with pytest.raises(BadMagicError):
            load_codes(tmp_path / 'bad.hcbc')
        data = bytearray((tmp_path / 'c.hcbc').read_bytes())
        data[16] = 9
        (tmp_path / 'tag.hcbc').write_bytes(bytes(data))
        with pytest.raises(FileFormatError):
            load_codes(tmp_path / 'tag.hcbc')


@pytest.mark.parametrize('code_length', [8, 64, 100, 130])
def test_hamming_distance_matches_bit_count(code_length):
    codes = _random_codes(12, code_length, seed=code_length)
    signs = codes.signs()
    for a in range(12):
        for b in range(12):
            assert hamming_distance(codes.code(a), codes.code(b)) == int((signs[a] != signs[b]).sum())


@pytest.mark.parametrize('code_length', [16, 48, 64, 128])
def test_packed_distance_matches_naive_on_random_pairs(code_length):
    rng = np.random.default_rng(code_length)
    left = rng.choice([-1, 1], size=(10_000, code_length))
    right = rng.choice([-1, 1], size=(10_000, code_length))
    a, b = BinaryCodeSet.from_signs(left), BinaryCodeSet.from_signs(right)
    naive = (left != right).sum(axis=1)
    # row-wise XOR of two equally long word matrices gives one distance per pair
    assert_array_equal(hamming_distances(a.words, b.words), naive)
    for i in range(0, 10_000, 97):
        assert hamming_distance(a.code(i), b.code(i)) == naive[i]


def test_hamming_distance_is_a_metric():
    codes = _random_codes(30, 48, seed=9)
    signs = codes.signs()
    signs[7] = signs[3]
    codes = BinaryCodeSet.from_signs(signs)
    dist = np.array([[hamming_distance(codes.code(i), codes.code(j)) for j in range(30)] for i in range(30)])
    assert_array_equal(dist, dist.T)
    equal = (signs[:, None, :] == signs[None, :, :]).all(axis=2)
    assert_array_equal(dist == 0, equal)
    assert dist[3, 7] == 0
    assert (dist[:, None, :] <= dist[:, :, None] + dist[None, :, :]).all()


def test_hamming_distance_rejects_mixed_lengths():
    with pytest.raises(ValidationError):
        hamming_distance(_random_codes(1, 8, 0), _random_codes(1, 16, 0))


class TestSearch:
    @pytest.mark.parametrize('code_length', [16, 96])
    def test_full_ranking_matches_oracle(self, code_length):
        queries = _random_codes(20, code_length, seed=1)
        database = _random_codes(300, code_length, seed=2)
        db_signs = database.signs()
        for q, ranked in zip(queries.signs(), search(queries, database)):
            order, distances = _naive_ranking(q, db_signs)
            assert_array_equal(ranked.indices, order)
            assert_array_equal(ranked.distances, distances)

    def test_cutoff_is_a_prefix(self):
        queries = _random_codes(15, 16, seed=3)
        database = _random_codes(200, 16, seed=4)
        full = search(queries, database)
        for cutoff in (1, 7, 50, 200, 1000):
            for a, b in zip(search(queries, database, cutoff), full):
                keep = min(cutoff, 200)
                assert_array_equal(a.indices, b.indices[:keep])
                assert_array_equal(a.distances, b.distances[:keep])

    def test_threads_do_not_change_results(self):
        queries = _random_codes(23, 32, seed=5)
        database = _random_codes(150, 32, seed=6)
        single = search(queries, database, 20, threads=1)
        threaded = search(queries, database, 20, threads=4)
        for a, b in zip(single, threaded):
            assert_array_equal(a.indices, b.indices)

    def test_ties_break_by_item_id(self):
        ids = np.array([5, 3, 9, 0, 8, 1, 7, 2, 6, 4])
        database = BinaryCodeSet.from_signs(np.ones((10, 8), dtype=np.int8), ids=ids)
        query = database.code(0)
        for cutoff in (3, None):
            (ranked,) = search(query, database, cutoff)
            keep = 3 if cutoff else 10
            assert_array_equal(ranked.ids, np.arange(keep))
            assert_array_equal(ids[ranked.indices], ranked.ids)

    def test_subset_keeps_ids(self):
        codes = _random_codes(6, 8, seed=0)
        assert_array_equal(codes.ids, np.arange(6))
        assert_array_equal(codes.subset([4, 1]).ids, [4, 1])
        assert_array_equal(codes.subset([4, 1]).subset([1]).ids, [1])
        with pytest.raises(ValidationError):
            BinaryCodeSet(codes.words, 8, ids=np.arange(5))

    def test_invalid_requests(self):
        with pytest.raises(ValidationError):
            search(_random_codes(2, 8, 0), _random_codes(5, 16, 0))
        with pytest.raises(ValidationError):
            search(_random_codes(2, 8, 0), _random_codes(5, 8, 0), cutoff=0)


class TestAveragePrecision:
    def test_example(self):
        assert average_precision(np.array([1, 0, 1, 0, 0]), 2) == pytest.approx(5 / 6)

    def test_denominators(self):
        flags = np.array([1, 0])
        assert average_precision(flags, 4, 'min') == pytest.approx(0.5)
        assert average_precision(flags, 4, 'relevant') == pytest.approx(0.25)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            cutoff = int(rng.integers(1, 40))
            flags = rng.random(cutoff) < rng.random()
            num_relevant = int(flags.sum() + rng.integers(0, 10))
            if num_relevant == 0:
                continue
            assert abs(average_precision(flags, num_relevant) - _naive_ap(flags, num_relevant, cutoff)) < 1e-12

    def test_interpolated_precision(self):
        curve = interpolated_precision(np.array([1, 0, 1, 0, 0]), 2)
        assert curve.shape == (101,)
        assert curve[0] == pytest.approx(1.0)
        assert curve[50] == pytest.approx(1.0)
        assert curve[51] == pytest.approx(2 / 3)
        assert curve[100] == pytest.approx(2 / 3)
        assert (np.diff(curve) <= 1e-15).all()

    def test_relevance(self):
        assert relevance([1, 0, 1], [0, 0, 1])
        assert not relevance([1, 0, 0], [0, 1, 1])


class TestEvaluate:
    def test_perfect_codes(self):
        cb = build_codebook(16, 4, seed=0)
        classes = np.repeat(np.arange(4), 10)
        codes = BinaryCodeSet.from_signs(cb.codewords[classes])
        labels = np.eye(4, dtype=np.uint8)[classes]
        report = evaluate(codes.subset(np.arange(0, 40, 5)), codes, labels[::5], labels, cutoff=10)
        assert report.mean_average_precision == pytest.approx(1.0)
        assert report.precision_at_k[10] == pytest.approx(1.0)
        assert_allclose(report.pr_precision, 1.0)

    def test_query_order_is_irrelevant(self):
        queries, database = _random_codes(12, 32, seed=1), _random_codes(80, 32, seed=2)
        rng = np.random.default_rng(3)
        q_labels = np.eye(3, dtype=np.uint8)[rng.integers(0, 3, 12)]
        db_labels = np.eye(3, dtype=np.uint8)[rng.integers(0, 3, 80)]
        perm = rng.permutation(12)
        a = evaluate(queries, database, q_labels, db_labels, cutoff=30)
        b = evaluate(queries.subset(perm), database, q_labels[perm], db_labels, cutoff=30)
        assert_allclose(b.average_precisions, a.average_precisions[perm])
        assert b.mean_average_precision == pytest.approx(a.mean_average_precision)

    def test_database_order_is_irrelevant(self):
        rng = np.random.default_rng(12)
        for trial in range(20):
            queries, database = _random_codes(10, 8, seed=trial), _random_codes(100, 8, seed=100 + trial)
            q_labels = np.eye(4, dtype=np.uint8)[rng.integers(0, 4, 10)]
            db_labels = np.eye(4, dtype=np.uint8)[rng.integers(0, 4, 100)]
            perm = rng.permutation(100)
            a = evaluate(queries, database, q_labels, db_labels, cutoff=20)
            b = evaluate(queries, database.subset(perm), q_labels, db_labels[perm], cutoff=20)
            assert_array_equal(b.average_precisions, a.average_precisions)
            assert b.mean_average_precision == a.mean_average_precision
            relabeled = BinaryCodeSet.from_signs(database.signs()[perm], ids=perm)
            c = evaluate(queries, relabeled, q_labels, db_labels[perm], cutoff=20)
            assert c.mean_average_precision == a.mean_average_precision
            for x, y in zip(search(queries, database, 20), search(queries, relabeled, 20)):
                assert_array_equal(x.ids, y.ids)

    def test_matches_brute_force_pipeline(self):
        rng = np.random.default_rng(21)
        for _ in range(50):
            n_db, n_q = int(rng.integers(20, 201)), int(rng.integers(1, 12))
            code_length, num_classes = int(rng.integers(4, 41)), int(rng.integers(2, 6))
            q_signs = rng.choice([-1, 1], size=(n_q, code_length))
            db_signs = rng.choice([-1, 1], size=(n_db, code_length))
            ids = rng.permutation(n_db) + 1000
            q_labels = (rng.random((n_q, num_classes)) < 0.3).astype(np.uint8)
            q_labels[np.arange(n_q), rng.integers(0, num_classes, n_q)] = 1
            db_labels = (rng.random((n_db, num_classes)) < 0.3).astype(np.uint8)
            db_labels[0] = 1
            cutoff = None if rng.random() < 0.3 else int(rng.integers(1, n_db + 10))
            denominator = 'min' if rng.random() < 0.5 else 'relevant'

            report = evaluate(BinaryCodeSet.from_signs(q_signs), BinaryCodeSet.from_signs(db_signs, ids=ids),
                              q_labels, db_labels, cutoff=cutoff, denominator=denominator)

            depth = n_db if cutoff is None else min(cutoff, n_db)
            expected = []
            for q in range(n_q):
                dist = [sum(int(x != y) for x, y in zip(q_signs[q], db_signs[i])) for i in range(n_db)]
                order = sorted(range(n_db), key=lambda i: (dist[i], ids[i]))[:depth]
                relevant = [bool((q_labels[q] & db_labels[i]).any()) for i in range(n_db)]
                num_relevant = sum(relevant)
                if num_relevant == 0:
                    expected.append(np.nan)
                    continue
                hits, total = 0, 0.0
                for rank, i in enumerate(order, start=1):
                    if relevant[i]:
                        hits += 1
                        total += hits / rank
                expected.append(total / (min(depth, num_relevant) if denominator == 'min' else num_relevant))
            expected = np.array(expected)
            assert_array_equal(np.isnan(report.average_precisions), np.isnan(expected))
            assert np.nanmax(np.abs(report.average_precisions - expected)) < 1e-12
            assert abs(report.mean_average_precision - np.nanmean(expected)) < 1e-12

    def test_stricter_relevance_lowers_precision(self):
        queries, database = _random_codes(10, 32, seed=4), _random_codes(100, 32, seed=5)
        rng = np.random.default_rng(6)
        q_labels = (rng.random((10, 4)) < 0.5).astype(np.uint8)
        q_labels[:, 0] = 1
        db_labels = (rng.random((100, 4)) < 0.5).astype(np.uint8)
        strict = db_labels.copy()
        strict[:, 1:] = 0
        rankings = search(queries, database)
        loose = evaluate_rankings(rankings, q_labels, db_labels)
        tight = evaluate_rankings(rankings, q_labels, strict)
        for k, value in tight.precision_at_k.items():
            assert value <= loose.precision_at_k[k] + 1e-12

    def test_queries_without_relevant_items(self):
        codes = _random_codes(6, 8, seed=0)
        db_labels = np.array([[1, 0]] * 6, dtype=np.uint8)
        q_labels = np.array([[1, 0], [0, 1]], dtype=np.uint8)
        report = evaluate(codes.subset([0, 1]), codes, q_labels, db_labels)
        assert report.num_skipped == 1
        assert np.isnan(report.average_precisions[1])
        assert report.mean_average_precision == pytest.approx(1.0)
        with pytest.raises(ValidationError):
            evaluate(codes.subset([1]), codes, q_labels[1:], db_labels)

    def test_report_files(self, tmp_path):
        codes = _random_codes(30, 16, seed=2)
        labels = np.eye(3, dtype=np.uint8)[np.arange(30) % 3]
        report = evaluate(codes.subset([0, 1, 2]), codes, labels[:3], labels, cutoff=10, denominator='relevant')
        report.save(tmp_path / 'run')
        summary = json.loads((tmp_path / 'run.json').read_text())
        assert summary['mAP'] == pytest.approx(report.mean_average_precision)
        assert summary['denominator'] == 'relevant'
        assert summary['cutoff'] == 10
        pr = pd.read_csv(tmp_path / 'run_pr.csv')
        assert len(pr) == 101
        at_k = pd.read_csv(tmp_path / 'run_precision_at_k.csv')
        assert list(at_k.k) == [1, 5, 10]
