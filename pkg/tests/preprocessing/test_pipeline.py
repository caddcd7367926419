"""Tests for preprocessing/pipeline.py."""
import re
from contextlib import nullcontext as does_not_raise

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from school_performance.preprocessing.dataset import Dataset
from school_performance.preprocessing.pipeline import (
    PipelineSpec,
    _stratified_test_counts,
    binarize_target,
    decode_one_hot,
    drop_missing_target,
    impute_mode,
    normalise_missing,
    one_hot_encode,
    partition_by_school,
    preprocess,
    stratified_split,
)
from school_performance.utils.constants import DEFAULT_FEATURE_COLUMNS
from tests.preprocessing.preprocessing_fixtures import make_dataset

# import preprocessing fixtures via pytest_plugins
pytest_plugins = ["tests.preprocessing.preprocessing_fixtures"]


class TestPipelineSpec:
    """Tests for the `PipelineSpec` dataclass."""

    def test_defaults(self):
        """The default spec selects the 11 questionnaire columns."""
        spec = PipelineSpec()
        assert spec.feature_columns == DEFAULT_FEATURE_COLUMNS
        assert len(spec.feature_columns) == 11
        assert spec.missing_markers == frozenset({".", "*"})
        assert spec.required_columns[:2] == ["ID_ESCOLA", "PROFICIENCIA_MT"]

    def test_coerces_lists(self):
        """Lists from config files become tuples and frozensets."""
        spec = PipelineSpec(feature_columns=["A", "B"], missing_markers=["."])
        assert spec.feature_columns == ("A", "B")
        assert spec.missing_markers == frozenset({"."})

    @pytest.mark.parametrize(
        "features, expected",
        [
            (("Q1",), does_not_raise()),
            ((), pytest.raises(ValueError, match="must not be empty")),
            (
                ("Q1", "Q1"),
                pytest.raises(ValueError, match="contains duplicates"),
            ),
            (
                ("Q1", "ID_ESCOLA"),
                pytest.raises(ValueError, match="must not include"),
            ),
            (
                ("Q1", 2),
                pytest.raises(TypeError, match="`feature_columns` must"),
            ),
        ],
    )
    def test_defence(self, features, expected):
        """Feature columns must be unique and disjoint from id/target."""
        with expected:
            PipelineSpec(feature_columns=features)


class TestBinarizeTarget:
    """Tests for `binarize_target()`."""

    @pytest.mark.parametrize(
        "scores, labels, threshold",
        [
            ([1.0, 2.0, 3.0, 4.0], [0, 0, 1, 1], 2.5),
            ([5.0, 5.0, 5.0], [0, 0, 0], 5.0),
            ([10, 20, 30, 40, 50, 60], [0, 0, 0, 1, 1, 1], 35.0),
        ],
    )
    def test_binarize_target(self, scores, labels, threshold):
        """Median split with ties at the median in class 0."""
        out, thr = binarize_target(scores)
        assert out.tolist() == labels
        assert thr == threshold
        assert out.dtype == np.int64

    def test_binarize_target_raises(self):
        """Empty or NaN-holding inputs are rejected."""
        with pytest.raises(ValueError, match="no scores"):
            binarize_target([])
        with pytest.raises(ValueError, match="contains NaN"):
            binarize_target([1.0, np.nan])

    @given(
        st.lists(
            st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=60
        )
    )
    @settings(max_examples=100, deadline=None)
    def test_class_zero_never_smaller(self, scores):
        """With or without ties, class 0 is never the smaller class."""
        labels, _ = binarize_target(scores)
        assert (labels == 0).sum() >= (labels == 1).sum()

    @given(
        st.lists(
            st.integers(-10_000, 10_000), min_size=2, max_size=60, unique=True
        ).filter(lambda xs: len(xs) % 2 == 0)
    )
    @settings(max_examples=100, deadline=None)
    def test_even_distinct_is_balanced(self, scores):
        """Distinct scores of even length split exactly in half."""
        labels, _ = binarize_target(scores)
        assert labels.sum() * 2 == len(scores)


class TestDropMissingTarget:
    """Tests for `drop_missing_target()`."""

    def test_drops_missing_and_markers(self, raw_table, mock_spec):
        """NaN and "*" targets are dropped, the rest re-indexed."""
        out = drop_missing_target(raw_table, mock_spec)
        assert len(out) == 3
        assert out["PROFICIENCIA_MT"].tolist() == ["210.0", "260.5", "199.9"]
        assert out.index.tolist() == [0, 1, 2]

    def test_identity_without_missing(self, raw_table, mock_spec):
        """A table without missing targets comes back unchanged."""
        complete = raw_table.iloc[[0, 3, 4]].reset_index(drop=True)
        pd.testing.assert_frame_equal(
            drop_missing_target(complete, mock_spec), complete
        )

    def test_dot_marker_and_blank(self, mock_spec):
        """"." and whitespace-only targets count as missing."""
        table = pd.DataFrame(
            {
                "PROFICIENCIA_MT": [".", " ", "1.0"],
                "TX_RESP_Q01": ["A", "A", "A"],
            }
        )
        assert len(drop_missing_target(table, mock_spec)) == 1

    def test_missing_column_raises(self, raw_table, mock_spec):
        """An absent target column raises an IndexError naming it."""
        with pytest.raises(
            IndexError,
            match="'PROFICIENCIA_MT' is not a column in the dataframe.",
        ):
            drop_missing_target(
                raw_table.drop(columns="PROFICIENCIA_MT"), mock_spec
            )

    def test_duplicate_columns_raise(self, mock_spec):
        """Raw tables must have unique column names."""
        table = pd.DataFrame([["1", "2"]], columns=["A", "A"])
        with pytest.raises(ValueError, match="duplicated columns"):
            drop_missing_target(table, mock_spec)


class TestImputeMode:
    """Tests for `impute_mode()` and `normalise_missing()`."""

    @pytest.mark.parametrize(
        "column, expected",
        [
            (["A", "A", "B", None], ["A", "A", "B", "A"]),
            (["A", "B", None], ["A", "B", "A"]),
            (["C", "C", "C"], ["C", "C", "C"]),
            (["B", "A", np.nan, "B", "A"], ["B", "A", "A", "B", "A"]),
        ],
    )
    def test_impute_mode(self, column, expected):
        """Missing cells take the mode, ties the smallest category."""
        assert impute_mode(column).tolist() == expected

    def test_impute_mode_raises(self):
        """A column without any present cell cannot be imputed."""
        with pytest.raises(ValueError, match="cannot impute"):
            impute_mode([None, np.nan])

    @given(
        st.lists(
            st.one_of(st.none(), st.sampled_from(["A", "B", "C", "D"])),
            min_size=1,
            max_size=40,
        ).filter(lambda xs: any(x is not None for x in xs))
    )
    @settings(max_examples=100, deadline=None)
    def test_never_changes_present_cells(self, column):
        """Imputation only ever fills missing cells."""
        out = impute_mode(column).tolist()
        assert all(o == c for o, c in zip(out, column) if c is not None)
        assert all(o is not None for o in out)

    def test_normalise_missing(self, raw_table, mock_spec):
        """Markers become NaN and present cells are stripped."""
        table = raw_table.copy()
        table.loc[0, "TX_RESP_Q02"] = " C "
        out = normalise_missing(table, mock_spec)
        assert out["TX_RESP_Q01"].isna().tolist() == [
            False,
            False,
            False,
            True,
            False,
        ]
        assert out.loc[0, "TX_RESP_Q02"] == "C"
        # input untouched
        assert table.loc[3, "TX_RESP_Q01"] == "."


class TestOneHotEncode:
    """Tests for `one_hot_encode()` and `decode_one_hot()`."""

    @pytest.fixture
    def imputed(self) -> pd.DataFrame:
        """An imputed table with three categories in Q1, one in Q2."""
        return pd.DataFrame(
            {
                "ID_ESCOLA": ["7", "7", "8"],
                "ALVO_CLASSIFICACAO": [0, 1, 1],
                "Q1": ["B", "C", "A"],
                "Q2": ["X", "X", "X"],
            }
        )

    def test_one_hot_encode(self, imputed):
        """Blocks are exactly-one-hot with lexicographic category order."""
        spec = PipelineSpec(feature_columns=("Q1", "Q2"))
        data = one_hot_encode(imputed, spec)
        assert data.feature_names == ["Q1_A", "Q1_B", "Q1_C", "Q2_X"]
        assert data.features.tolist() == [
            [0, 1, 0, 1],
            [0, 0, 1, 1],
            [1, 0, 0, 1],
        ]
        assert data.features.dtype == np.uint8
        assert data.labels.tolist() == [0, 1, 1]
        assert data.school_ids.tolist() == [7, 7, 8]
        assert data.categories == {"Q1": ("A", "B", "C"), "Q2": ("X",)}

    def test_default_width_is_54(self):
        """The 11 default columns with their category counts give 54."""
        from school_performance.preprocessing.synthetic import (
            default_feature_spec,
        )

        counts = default_feature_spec()
        table = pd.DataFrame(
            {
                col: [chr(ord("A") + k % n) for k in range(10)]
                for col, n in counts.items()
            }
        )
        table["ID_ESCOLA"] = "1"
        table["ALVO_CLASSIFICACAO"] = 0
        data = one_hot_encode(table, PipelineSpec())
        assert data.width == 54
        assert (data.features.sum(axis=1) == 11).all()

    def test_unseen_category_warns(self, imputed):
        """Categories outside a supplied vocabulary give all-zero blocks."""
        spec = PipelineSpec(feature_columns=("Q1", "Q2"))
        with pytest.warns(UserWarning, match=re.escape("['C']")):
            data = one_hot_encode(
                imputed, spec, categories={"Q1": ("A", "B"), "Q2": ("X",)}
            )
        assert data.features.tolist() == [[0, 1, 1], [0, 0, 1], [1, 0, 1]]
        decoded = decode_one_hot(data)
        assert decoded["Q1"].tolist()[0] == "B"
        assert pd.isna(decoded["Q1"].tolist()[1])

    def test_missing_cell_raises(self, imputed):
        """Encoding requires imputation first."""
        imputed.loc[1, "Q1"] = np.nan
        spec = PipelineSpec(feature_columns=("Q1",))
        with pytest.raises(ValueError, match="first at row 1"):
            one_hot_encode(imputed, spec)

    def test_decode_without_vocabulary_raises(self):
        """Datasets without a vocabulary cannot be decoded."""
        data = Dataset(
            features=np.ones((1, 1), dtype=np.uint8),
            labels=np.zeros(1, dtype=np.int64),
            school_ids=np.zeros(1, dtype=np.int64),
            feature_names=["Q_A"],
        )
        with pytest.raises(ValueError, match="no category vocabulary"):
            decode_one_hot(data)

    @given(
        st.lists(
            st.tuples(
                st.sampled_from(["A", "B", "C", "D", "E"]),
                st.sampled_from(["1", "2", "10"]),
            ),
            min_size=1,
            max_size=30,
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_decode_recovers_table(self, rows):
        """Decoding the encoding gives back every cell."""
        table = pd.DataFrame(rows, columns=["Q1", "Q2"])
        table["ID_ESCOLA"] = "1"
        table["ALVO_CLASSIFICACAO"] = 0
        spec = PipelineSpec(feature_columns=("Q1", "Q2"))
        data = one_hot_encode(table, spec)
        for block in np.split(data.features, [len(data.categories["Q1"])], 1):
            assert (block.sum(axis=1) == 1).all()
        decoded = decode_one_hot(data)
        assert decoded["Q1"].tolist() == table["Q1"].tolist()
        assert decoded["Q2"].tolist() == table["Q2"].tolist()


class TestPreprocess:
    """Tests for the end-to-end `preprocess()`."""

    def test_preprocess_small_table(self, raw_table, mock_spec):
        """Drop, binarise, impute and encode a hand-checked table."""
        data, threshold = preprocess(raw_table, mock_spec)
        assert threshold == 210.0
        assert data.labels.tolist() == [0, 1, 0]
        assert data.feature_names == [
            "TX_RESP_Q01_A",
            "TX_RESP_Q02_B",
            "TX_RESP_Q02_C",
        ]
        assert data.features.tolist() == [[1, 0, 1], [1, 1, 0], [1, 1, 0]]
        assert data.school_ids.tolist() == [1, 2, 3]

    def test_preprocess_mock_file(
        self, mock_raw_table, mock_spec, expected_mock_features
    ):
        """The mock microdata file processes to the expected dataset."""
        data, threshold = preprocess(mock_raw_table, mock_spec)
        assert threshold == pytest.approx(263.125)
        np.testing.assert_array_equal(data.features, expected_mock_features)
        assert data.labels.tolist() == [0, 1, 0, 1, 0, 1]
        assert data.school_ids.tolist() == [
            1001,
            1001,
            1002,
            1002,
            1003,
            1003,
        ]
        assert data.class_counts() == (3, 3)

    def test_preprocess_missing_feature_column(self, raw_table):
        """A configured feature absent from the table raises IndexError."""
        spec = PipelineSpec(feature_columns=("TX_RESP_Q01", "TX_RESP_Q99"))
        with pytest.raises(IndexError, match="'TX_RESP_Q99'"):
            preprocess(raw_table, spec)


class TestStratifiedSplit:
    """Tests for `stratified_split()`."""

    def test_balanced_counts(self, balanced_dataset):
        """100 rows at 50/50 and fraction 0.2 give 10 test rows per class."""
        split = stratified_split(balanced_dataset, 0.2, seed=42)
        assert split.test.class_counts() == (10, 10)
        assert split.train.class_counts() == (40, 40)
        assert split.split_seed == 42

    def test_national_scale_counts(self):
        """2,087,904 rows split at 0.2 hold out 417,581 rows."""
        counts = _stratified_test_counts((1043955, 1043949), 0.2)
        assert sum(counts) == 417_581

    def test_deterministic(self, balanced_dataset):
        """The same seed always gives the same split."""
        a = stratified_split(balanced_dataset, 0.3, seed=7)
        b = stratified_split(balanced_dataset, 0.3, seed=7)
        np.testing.assert_array_equal(a.test.features, b.test.features)
        np.testing.assert_array_equal(a.test.labels, b.test.labels)

    @pytest.mark.parametrize(
        "labels, fraction, expected",
        [
            ([0, 0, 1, 1], 0.5, does_not_raise()),
            (
                [0, 0, 0, 1],
                0.5,
                pytest.raises(ValueError, match="Class 1 has 1 rows"),
            ),
            (
                [0, 0, 1, 1],
                1.0,
                pytest.raises(ValueError, match="must be in"),
            ),
            (
                [0, 0, 1, 1],
                0,
                pytest.raises(ValueError, match="must be in"),
            ),
        ],
    )
    def test_defence(self, labels, fraction, expected):
        """Fractions outside (0, 1) and near-empty classes are rejected."""
        with expected:
            stratified_split(make_dataset(labels), fraction, seed=1)

    @given(
        n0=st.integers(2, 60),
        n1=st.integers(2, 60),
        fraction=st.floats(0.05, 0.95),
        seed=st.integers(0, 2**16),
    )
    @settings(max_examples=50, deadline=None)
    def test_partition_invariants(self, n0, n1, fraction, seed):
        """Train and test are disjoint, cover the input, keep proportions."""
        data = make_dataset([0] * n0 + [1] * n1)
        # tag each row by its position through the school ids
        data = Dataset(
            features=data.features,
            labels=data.labels,
            school_ids=np.arange(n0 + n1),
            feature_names=data.feature_names,
        )
        split = stratified_split(data, fraction, seed)
        train_ids = set(split.train.school_ids.tolist())
        test_ids = set(split.test.school_ids.tolist())
        assert not train_ids & test_ids
        assert train_ids | test_ids == set(range(n0 + n1))
        for c, n in enumerate((n0, n1)):
            n_test = int((split.test.labels == c).sum())
            assert abs(n_test - n * fraction) <= 1


class TestPartitionBySchool:
    """Tests for `partition_by_school()`."""

    def test_filters_small_schools(self):
        """Schools below min_rows are excluded before sampling."""
        ids = [10] * 25 + [20] * 19 + [30] * 30
        data = make_dataset([0, 1] * 37, school_ids=ids)
        parts = partition_by_school(data, min_rows=20, sample_size=2, seed=0)
        assert [p.client_id for p in parts] == [10, 30]
        assert [p.n_k for p in parts] == [25, 30]
        assert all((p.data.school_ids == p.client_id).all() for p in parts)

    def test_samples_deterministically(self):
        """Sampling is reproducible, disjoint and meets the minimum."""
        ids = np.repeat(np.arange(100, 160), 22)
        data = make_dataset(np.tile([0, 1], 660), school_ids=ids)
        first = partition_by_school(data, 20, 50, seed=3)
        second = partition_by_school(data, 20, 50, seed=3)
        assert len(first) == 50
        assert [p.client_id for p in first] == [p.client_id for p in second]
        assert len({p.client_id for p in first}) == 50
        assert all(p.n_k >= 20 for p in first)
        assert sum(p.n_k for p in first) <= data.n_rows

    def test_too_few_schools_raises(self):
        """The error names both the eligible and requested counts."""
        data = make_dataset([0, 1] * 20, school_ids=[1] * 20 + [2] * 20)
        with pytest.raises(
            ValueError,
            match=re.escape(
                "Fewer eligible schools than sample_size: 2 schools have >= "
                "20 rows, 3 requested."
            ),
        ):
            partition_by_school(data, min_rows=20, sample_size=3)

    @pytest.mark.parametrize("nm", ["min_rows", "sample_size"])
    def test_non_positive_raises(self, balanced_dataset, nm):
        """min_rows and sample_size must be >= 1."""
        with pytest.raises(ValueError, match=f"`{nm}` must be >= 1"):
            partition_by_school(balanced_dataset, **{nm: 0})
