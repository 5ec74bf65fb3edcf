import numpy as np
import pytest
from hypothesis import given, strategies as st

from sasoftmax.core import (
    Dataset,
    IdentityPrototypeMatrix,
    Modality,
    ModalityPrototypeMatrix,
    Sample,
    load_dataset_csv,
    rewrite_labels,
    rewrite_labels_batch,
    save_dataset_csv,
)
from sasoftmax.errors import ContractViolation


class TestRewriteLabels:
    def test_vis_branch(self):
        assert rewrite_labels(2, Modality.VIS, 4) == (2, 6)

    def test_nir_branch(self):
        assert rewrite_labels(2, Modality.NIR, 4) == (6, 2)

    def test_smallest_instance(self):
        assert rewrite_labels(0, Modality.VIS, 1) == (0, 1)

    def test_out_of_range_identity(self):
        with pytest.raises(ContractViolation):
            rewrite_labels(4, Modality.VIS, 4)

    @given(st.integers(1, 50), st.data())
    def test_properties(self, n, data):
        ident = data.draw(st.integers(0, n - 1))
        for mod in (Modality.VIS, Modality.NIR):
            y_w, y_f = rewrite_labels(ident, mod, n)
            assert y_w != y_f
            assert abs(y_w - y_f) == n
            assert {y_w % n, y_f % n} == {ident}
            # exactly one of the pair lies in the visible half
            assert (y_w < n) != (y_f < n)

    @given(st.integers(1, 50), st.data())
    def test_modality_swap_is_involution(self, n, data):
        ident = data.draw(st.integers(0, n - 1))
        y_w, y_f = rewrite_labels(ident, Modality.VIS, n)
        assert rewrite_labels(ident, Modality.NIR, n) == (y_f, y_w)

    def test_batch_matches_scalar(self):
        n = 5
        ids = np.array([0, 2, 4, 1])
        mods = np.array([0, 1, 0, 1])
        y_w, y_f = rewrite_labels_batch(ids, mods, n)
        for i in range(len(ids)):
            sw, sf = rewrite_labels(int(ids[i]), Modality(int(mods[i])), n)
            assert (y_w[i], y_f[i]) == (sw, sf)

    def test_batch_rejects_out_of_range(self):
        with pytest.raises(ContractViolation):
            rewrite_labels_batch(np.array([3]), np.array([0]), 3)


class TestPrototypeMatrices:
    def test_modality_layout(self):
        w = np.arange(12, dtype=float).reshape(2, 6)
        m = ModalityPrototypeMatrix(w)
        assert m.num_identities == 3
        assert m.dim == 2
        np.testing.assert_array_equal(m.visible(), w[:, :3])
        np.testing.assert_array_equal(m.infrared(), w[:, 3:])

    def test_odd_column_count_rejected(self):
        with pytest.raises(ContractViolation):
            ModalityPrototypeMatrix(np.zeros((2, 5)))

    def test_nonfinite_rejected(self):
        bad = np.zeros((2, 4))
        bad[0, 0] = np.nan
        with pytest.raises(ContractViolation):
            ModalityPrototypeMatrix(bad)
        with pytest.raises(ContractViolation):
            IdentityPrototypeMatrix(np.full((2, 3), np.inf))

    def test_identity_matrix_shape(self):
        m = IdentityPrototypeMatrix(np.zeros((3, 7)))
        assert m.num_identities == 7
        assert m.dim == 3


class TestSampleAndDataset:
    def test_sample_validation(self):
        with pytest.raises(ContractViolation):
            Sample(np.array([np.inf]), 0, Modality.VIS)
        with pytest.raises(ContractViolation):
            Sample(np.array([1.0]), -1, Modality.VIS)

    def test_from_samples_requires_dense_labels(self):
        samples = [
            Sample(np.array([0.0]), 0, Modality.VIS),
            Sample(np.array([1.0]), 2, Modality.NIR),
        ]
        with pytest.raises(ContractViolation):
            Dataset.from_samples(samples)

    def test_from_samples_roundtrip(self):
        samples = [
            Sample(np.array([0.0, 1.0]), 0, Modality.VIS),
            Sample(np.array([2.0, 3.0]), 1, Modality.NIR),
            Sample(np.array([4.0, 5.0]), 0, Modality.NIR),
        ]
        ds = Dataset.from_samples(samples)
        assert len(ds) == 3
        assert ds.num_identities == 2
        assert ds.input_dim == 2
        np.testing.assert_array_equal(ds.indices_of(0, Modality.NIR), [2])
        np.testing.assert_array_equal(ds.indices_of(0, Modality.VIS), [0])

    def test_csv_roundtrip_exact(self, tmp_path, rng):
        feats = rng.normal(size=(8, 3))
        ids = np.array([0, 0, 1, 1, 2, 2, 3, 3])
        mods = np.array([0, 1, 0, 1, 0, 1, 0, 1])
        ds = Dataset(feats, ids, mods, 4, 3)
        path = tmp_path / "data.csv"
        save_dataset_csv(ds, path)
        back = load_dataset_csv(path)
        # repr-based float serialization is lossless
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.identities, ds.identities)
        np.testing.assert_array_equal(back.modalities, ds.modalities)

    def test_csv_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("foo,bar,f0\n0,V,1.0\n")
        with pytest.raises(ContractViolation):
            load_dataset_csv(path)

    def test_csv_rejects_unknown_modality_code(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,modality,f0\n0,X,1.0\n")
        with pytest.raises(ContractViolation):
            load_dataset_csv(path)
