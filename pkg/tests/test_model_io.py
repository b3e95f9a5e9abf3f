import json

import numpy as np
import pytest

from fdsic.cancelers import (
    CancelerSpec,
    TrainHyper,
    load_stack,
    predict_total,
    save_stack,
    train_stack,
)
from fdsic.errors import ModelFormatError


class TestRoundTrip:
    @pytest.mark.parametrize(
        "spec",
        [
            CancelerSpec(kind="linear", M=13),
            CancelerSpec(kind="poly", P=3, M=13),
            CancelerSpec(kind="lwgs", N=4, M=13),
            CancelerSpec(kind="mwgs", N=5, W=3, M=13),
            CancelerSpec(kind="ffnn", N=3, M=13),
        ],
        ids=lambda s: s.kind,
    )
    def test_predictions_preserved_exactly(self, spec, small_split, tmp_path):
        train, test = small_split
        stack, _ = train_stack(train, spec, TrainHyper(epochs=2, seed=7))
        path = tmp_path / "model.json"
        save_stack(stack, path)
        loaded = load_stack(path)
        # repr-round-tripped floats reproduce the prediction bit for bit
        np.testing.assert_array_equal(
            predict_total(stack, test.x), predict_total(loaded, test.x)
        )

    def test_save_load_save_is_stable(self, small_split, tmp_path):
        train, _ = small_split
        stack, _ = train_stack(
            train, CancelerSpec(kind="lwgs", N=3, M=13), TrainHyper(epochs=1, seed=2)
        )
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        save_stack(stack, p1)
        save_stack(load_stack(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestErrors:
    def test_not_json(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text("not a model {{{")
        with pytest.raises(ModelFormatError):
            load_stack(p)

    def test_wrong_format_tag(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps({"format": "other", "version": 1}))
        with pytest.raises(ModelFormatError):
            load_stack(p)

    def test_missing_fields(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text(json.dumps({"format": "fdsic-model", "version": 1}))
        with pytest.raises(ModelFormatError):
            load_stack(p)

    def test_truncated_file(self, small_split, tmp_path):
        train, _ = small_split
        stack, _ = train_stack(train, CancelerSpec(kind="linear", M=13))
        p = tmp_path / "m.json"
        save_stack(stack, p)
        p.write_text(p.read_text()[:40])
        with pytest.raises(ModelFormatError):
            load_stack(p)
