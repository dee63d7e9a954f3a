"""
Tests for LETOR parsing, fold loading, normalization and synthetic folds
"""

import shutil
import time

import numpy as np
import pytest

from marlrank.db.letor import (
    dataset_stats,
    load_dataset,
    load_dataset_file,
    load_folds,
    normalize_features,
    parse_line,
    render_line,
)
from marlrank.db.synthetic import fold_partitions, generate_dataset, write_folds
from marlrank.errors import EmptyDatasetError, FoldLayoutError, ParseError
from marlrank.models.models import Dataset
from marlrank.schemas.schemas import DocumentRecord, NormalizationScheme
from marlrank.tests.conftest import make_group


class TestParseLine:
    """Тесты разбора строки LETOR"""

    @pytest.mark.unit
    def test_sparse_line_with_comment(self):
        """Тест пропущенного признака и комментария"""
        record = parse_line("2 qid:10 1:0.5 3:0.25 #docGX01")

        assert record.label == 2
        assert record.query_id == "10"
        assert record.features == (0.5, 0.0, 0.25)
        assert record.comment == "docGX01"

    @pytest.mark.unit
    def test_all_zero_features(self):
        """Тест нулевых признаков без комментария"""
        record = parse_line("0 qid:7 1:0 2:0")

        assert record.features == (0.0, 0.0)
        assert record.comment is None

    @pytest.mark.unit
    @pytest.mark.parametrize(
        "line",
        [
            "1 qid:10 2:abc",
            "1 1:0.5 2:0.1",
            "x qid:1 1:0.5",
            "3 qid:1 1:0.5",
            "1 qid:1 0:0.5",
            "1 qid:1 1:0.5 1:0.6",
            "1 qid:1 1:nan",
            "1 qid:1 1:inf",
            "1 qid: 1:0.5",
            "1 qid:1 15",
        ],
    )
    def test_malformed(self, line):
        """Тест отклонения некорректных строк"""
        with pytest.raises(ParseError):
            parse_line(line)

    @pytest.mark.unit
    def test_clamped_label(self):
        """Тест приведения метки 4 к 2"""
        assert parse_line("4 qid:1 1:0.5", clamp_labels=True).label == 2

    @pytest.mark.unit
    def test_line_number_in_message(self):
        """Тест номера строки в сообщении об ошибке"""
        with pytest.raises(ParseError) as exc:
            parse_line("1 qid:1 1:abc", line_number=17)

        assert exc.value.line_number == 17
        assert "line 17" in exc.value.detail
        assert exc.value.exit_code == 3

    @pytest.mark.unit
    def test_render_round_trip(self):
        """Тест разбора канонической записи случайных документов"""
        rng = np.random.default_rng(0)
        for i in range(500):
            record = DocumentRecord(
                label=int(rng.integers(3)),
                query_id=str(rng.integers(1, 10_000)),
                features=tuple(float(v) for v in rng.normal(size=int(rng.integers(1, 8)))),
                comment=f"doc{i}" if i % 2 else None,
            )
            assert parse_line(render_line(record)) == record

    @pytest.mark.unit
    def test_generated_lines_round_trip(self):
        """Тест 10 000 разреженных строк с комментариями"""
        rng = np.random.default_rng(7)
        lines = []
        for i in range(10_000):
            fids = np.sort(rng.choice(np.arange(1, 47), size=int(rng.integers(1, 12)), replace=False))
            tokens = [str(rng.integers(3)), f"qid:{rng.integers(1, 500)}"]
            tokens.extend(f"{fid}:{rng.uniform(-2, 2):.{rng.integers(1, 9)}g}" for fid in fids)
            if i % 3 == 0:
                tokens.append(f"#docid = GX{i:05d} inc = {rng.uniform():.4f}")
            elif i % 3 == 1:
                tokens.append(f"#doc{i}#tail")
            lines.append(" ".join(tokens))

        started = time.perf_counter()
        for line in lines:
            record = parse_line(line)
            assert parse_line(render_line(record)) == record
        assert time.perf_counter() - started < 5.0


class TestLoadDataset:
    """Тесты группировки документов по запросам"""

    @pytest.mark.unit
    def test_grouping(self):
        """Тест шести строк с двумя запросами"""
        lines = [
            "2 qid:1 1:0.1 2:0.2",
            "0 qid:1 1:0.3 2:0.4",
            "1 qid:2 1:0.5 2:0.6",
            "0 qid:1 1:0.7 2:0.8",
            "0 qid:2 1:0.9 2:1.0",
            "1 qid:2 1:0.2 2:0.1",
        ]
        ds = load_dataset("\n".join(lines))

        assert ds.query_ids == ["1", "2"]
        assert [len(group) for group in ds] == [3, 3]
        assert ds.groups[0].labels.tolist() == [2, 0, 0]

    @pytest.mark.unit
    def test_feature_dim_from_largest_id(self):
        """Тест F=46 и дополнения коротких строк нулями"""
        full = " ".join(f"{i}:0.5" for i in range(1, 47))
        ds = load_dataset(f"1 qid:5 {full}\n0 qid:5 1:0.1\n".encode())

        assert ds.feature_dim == 46
        assert ds.groups[0].features.shape == (2, 46)
        assert ds.groups[0].features[1, 1:].sum() == 0.0

    @pytest.mark.unit
    def test_duplicates_kept(self):
        """Тест сохранения повторяющихся строк"""
        ds = load_dataset(["1 qid:3 1:0.5", "1 qid:3 1:0.5"])

        assert ds.num_docs == 2

    @pytest.mark.unit
    def test_blank_lines_skipped(self):
        """Тест пропуска пустых строк"""
        ds = load_dataset("\n1 qid:3 1:0.5\n   \n0 qid:4 1:0.1\n")

        assert len(ds) == 2

    @pytest.mark.unit
    def test_empty_source(self):
        """Тест пустого источника"""
        with pytest.raises(EmptyDatasetError):
            load_dataset("\n\n")

    @pytest.mark.unit
    def test_error_reports_line(self):
        """Тест номера ошибочной строки в файле"""
        with pytest.raises(ParseError) as exc:
            load_dataset("1 qid:3 1:0.5\n\n1 qid:3 1:zz\n")

        assert exc.value.line_number == 3

    @pytest.mark.unit
    def test_file(self, tmp_path):
        """Тест чтения из файла"""
        path = tmp_path / "train.txt"
        path.write_text("1 qid:3 1:0.5 #a\n0 qid:3 1:0.1 #b\n", encoding="utf-8")

        ds = load_dataset_file(path)
        assert [doc.comment for doc in ds.groups[0].docs] == ["a", "b"]


class TestLoadFolds:
    """Тесты загрузки пяти фолдов"""

    @pytest.mark.integration
    def test_standard_layout(self, letor_root):
        """Тест пяти фолдов с непересекающимися частями"""
        splits = load_folds(letor_root)

        assert [split.fold_index for split in splits] == [1, 2, 3, 4, 5]
        for split in splits:
            assert split.train.feature_dim == split.test.feature_dim == 4
            assert len(split.train) + len(split.validation) + len(split.test) == 10

    @pytest.mark.integration
    def test_rotation(self, letor_root):
        """Тест чередования частей в Fold1"""
        split = load_folds(letor_root, folds=[1])[0]

        assert split.train.query_ids == ["1", "2", "3", "4", "5", "6"]
        assert split.validation.query_ids == ["7", "8"]
        assert split.test.query_ids == ["9", "10"]

    @pytest.mark.integration
    def test_missing_fold(self, letor_root):
        """Тест отсутствующего Fold5"""
        shutil.rmtree(letor_root / "Fold5")

        with pytest.raises(FoldLayoutError, match="Fold5"):
            load_folds(letor_root)

    @pytest.mark.integration
    def test_empty_validation(self, letor_root):
        """Тест пустого файла vali"""
        (letor_root / "Fold2" / "vali.txt").write_text("", encoding="utf-8")

        with pytest.raises(FoldLayoutError, match="vali"):
            load_folds(letor_root)

    @pytest.mark.integration
    def test_missing_root(self, tmp_path):
        """Тест несуществующего каталога"""
        with pytest.raises(FoldLayoutError):
            load_folds(tmp_path / "absent")

    @pytest.mark.integration
    def test_no_folds_selected(self, letor_root):
        """Тест пустого списка фолдов"""
        with pytest.raises(FoldLayoutError):
            load_folds(letor_root, folds=[])

    @pytest.mark.integration
    def test_feature_dim_unified(self, letor_root):
        """Тест общей размерности признаков при коротком тестовом файле"""
        (letor_root / "Fold1" / "test.txt").write_text("1 qid:99 1:0.5\n", encoding="utf-8")
        split = load_folds(letor_root, folds=[1])[0]

        assert split.test.feature_dim == 4
        assert split.test.groups[0].features.tolist() == [[0.5, 0.0, 0.0, 0.0]]


class TestNormalization:
    """Тесты min-max нормализации по запросу"""

    @pytest.mark.unit
    def test_minmax(self):
        """Тест [2, 4, 6] -> [0, 0.5, 1] и постоянного признака -> 0"""
        group = make_group("q", [0, 1, 2], [[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]])
        ds = normalize_features(Dataset(groups=(group,), feature_dim=2))

        assert ds.groups[0].features.tolist() == [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]]
        assert ds.groups[0].labels.tolist() == [0, 1, 2]

    @pytest.mark.unit
    def test_none_is_identity(self, small_dataset):
        """Тест схемы none"""
        assert normalize_features(small_dataset, NormalizationScheme.NONE) is small_dataset

    @pytest.mark.unit
    def test_range(self, synthetic_dataset):
        """Тест диапазона [0, 1] после нормализации"""
        ds = normalize_features(synthetic_dataset)

        for group in ds:
            assert group.features.min() >= 0.0
            assert group.features.max() <= 1.0


class TestSynthetic:
    """Тесты синтетического датасета"""

    @pytest.mark.unit
    def test_shape_and_labels(self, synthetic_dataset):
        """Тест размеров и всех трёх уровней релевантности"""
        stats = dataset_stats(synthetic_dataset)

        assert stats["queries"] == 50
        assert stats["documents"] == 1000
        assert stats["feature_dim"] == 10
        assert stats["min_docs_per_query"] == stats["max_docs_per_query"] == 20
        assert min(stats["label_0"], stats["label_1"], stats["label_2"]) > 0

    @pytest.mark.unit
    def test_corner_rule(self, corner_dataset):
        """Тест правила corner: около 84% нерелевантных, релевантные только при больших x0 и x1"""
        labels = np.concatenate([group.labels for group in corner_dataset])
        features = np.concatenate([group.features for group in corner_dataset])

        assert 0.75 < np.mean(labels == 0) < 0.92
        assert set(labels.tolist()) == {0, 1, 2}
        assert features[labels > 0, :2].min() > 0.35
        assert features[labels == 2, :2].min() > 0.55

    @pytest.mark.unit
    def test_seeded(self):
        """Тест воспроизводимости генератора"""
        first = generate_dataset(n_queries=3, docs_per_query=4, feature_dim=3, seed=7)
        second = generate_dataset(n_queries=3, docs_per_query=4, feature_dim=3, seed=7)

        assert all(np.array_equal(a.features, b.features) for a, b in zip(first, second))

    @pytest.mark.unit
    @pytest.mark.parametrize("fold,expected", [(1, ([0, 1, 2], 3, 4)), (3, ([2, 3, 4], 0, 1)), (5, ([4, 0, 1], 2, 3))])
    def test_fold_partitions(self, fold, expected):
        """Тест схемы чередования частей"""
        assert fold_partitions(fold) == expected

    @pytest.mark.unit
    def test_too_few_queries(self, tmp_path):
        """Тест ошибки при числе запросов меньше пяти"""
        with pytest.raises(ValueError):
            write_folds(generate_dataset(n_queries=4, docs_per_query=2, feature_dim=2), tmp_path)

    @pytest.mark.integration
    def test_written_files_round_trip(self, tmp_path):
        """Тест чтения записанных фолдов обратно"""
        dataset = generate_dataset(n_queries=5, docs_per_query=3, feature_dim=2, seed=4)
        split = load_folds(write_folds(dataset, tmp_path), folds=[1])[0]

        assert split.test.groups[0].features.tolist() == dataset.groups[4].features.tolist()
        assert split.test.groups[0].labels.tolist() == dataset.groups[4].labels.tolist()
