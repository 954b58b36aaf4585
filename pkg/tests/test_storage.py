"""Tests for the data layer: strict CSV parsing, partitions and the JSON
documents."""

import json

import numpy as np
import pytest

from blockfactor.distribution import BinaryDataset, Model, Partition, VariableParams
from blockfactor.errors import DataFormatError, PartitionMismatchError
from blockfactor.estimation import FitConfig, fit
from blockfactor.models import ModelDocument
from blockfactor.storage import (
    dataset_to_csv,
    document_to_model,
    dump_json,
    matrix_to_csv,
    model_to_document,
    parse_partition,
    read_dataset,
    read_model,
    read_model_document,
)


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestReadDataset:
    def test_reads_header_and_cells(self, toy_csv):
        data = read_dataset(toy_csv)
        assert data.names == ("A", "B", "C", "D")
        assert data.n == 6
        assert data.values[0].tolist() == [1, 1, 0, 1]
        assert data.values.dtype == np.uint8

    def test_round_trip(self, tmp_path, two_block_data):
        path = _write(tmp_path, dataset_to_csv(two_block_data))
        assert read_dataset(path) == two_block_data

    @pytest.mark.parametrize(
        "text, fragment",
        [
            ("A,B\n1,0\n1,2\n", "row 3, column 'B'"),
            ("A,B\n1,0\nx,1\n", "row 3, column 'A'"),
            ("A,B\n1,0\n1, 1\n", "row 3"),
            ("A,B\n1,0\n1\n", "row 3"),
            ("A,B\n1,0\n1,0,1\n", "ragged"),
            ("A,A\n1,0\n", "duplicate"),
            ("A,,C\n1,0,1\n", "empty column name"),
            ("A,B\n", "no data rows"),
            ("", "empty"),
        ],
    )
    def test_rejects_malformed_files(self, tmp_path, text, fragment):
        path = _write(tmp_path, text)
        with pytest.raises(DataFormatError) as excinfo:
            read_dataset(path)
        assert fragment in str(excinfo.value)
        assert excinfo.value.exit_code == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError):
            read_dataset(tmp_path / "absent.csv")


class TestParsePartition:
    names = ("A", "B", "C", "D")

    @pytest.mark.parametrize(
        "spec",
        ['[["A","B"],["C"],["D"]]', "[[A,B],[C],[D]]", "[0,0,1,2]", "0,0,1,2", "3, 3, 0, 1"],
    )
    def test_accepted_forms(self, spec):
        assert parse_partition(spec, self.names) == Partition((0, 0, 1, 2))

    def test_group_order_is_irrelevant(self):
        assert parse_partition('[["D"],["B","A"],["C"]]', self.names) == Partition((0, 0, 1, 2))

    @pytest.mark.parametrize(
        "spec",
        ['[["A","Z"],["B","C","D"]]', '[["A","B"],["C"]]', '[["A","B"],["B","C","D"]]', "[0,0,1]", "blocks"],
    )
    def test_rejects_mismatches(self, spec):
        with pytest.raises(PartitionMismatchError) as excinfo:
            parse_partition(spec, self.names)
        assert excinfo.value.exit_code == 3


class TestModelDocuments:
    def test_round_trip(self, two_block_model, tmp_path):
        path = _write(tmp_path, dump_json(model_to_document(two_block_model)), "model.json")
        assert read_model(path) == two_block_model

    def test_reorders_to_data_columns(self, two_block_model):
        doc = model_to_document(two_block_model)
        reordered = document_to_model(doc, ("E", "D", "C", "B", "A"))
        assert reordered.names == ("E", "D", "C", "B", "A")
        assert reordered.params == two_block_model.params[::-1]
        assert reordered.partition == Partition((0, 0, 1, 1, 1))

    def test_model_must_cover_data(self, two_block_model):
        doc = model_to_document(two_block_model)
        with pytest.raises(PartitionMismatchError):
            document_to_model(doc, ("A", "B", "C", "D", "E", "F"))
        with pytest.raises(PartitionMismatchError):
            document_to_model(doc, ("A", "B", "C", "D", "Z"))

    def test_fit_diagnostics_are_recorded(self, two_block_data):
        fitted = fit(two_block_data, Partition((0, 0, 0, 1, 1)), FitConfig(restarts=3, seed=4))
        doc = model_to_document(fitted.model, fitted, seed=4)
        assert doc.loglik == fitted.loglik
        assert doc.n_params == 9
        assert doc.seed == 4
        assert [t.variables for t in doc.em_trace] == [["A", "B", "C"]]
        assert len(doc.em_trace[0].restart_logliks) == 3

    def test_rejects_invalid_documents(self, tmp_path):
        bad_delta = {"blocks": [{"variables": ["A"], "params": [{"alpha": 0.5, "epsilon": 0.0, "delta": 2}]}]}
        for payload in ("{not json", json.dumps({"variables": []}), json.dumps(bad_delta)):
            with pytest.raises(DataFormatError):
                read_model_document(_write(tmp_path, payload, "bad.json"))

    def test_out_of_range_parameters(self):
        doc = ModelDocument.model_validate(
            {"blocks": [{"variables": ["A"], "params": [{"alpha": 1.5, "epsilon": 0.0, "delta": 1}]}]}
        )
        with pytest.raises(DataFormatError):
            document_to_model(doc)


class TestOutputHelpers:
    def test_json_is_sorted_and_stable(self, two_block_model):
        text = dump_json(model_to_document(two_block_model))
        assert text.endswith("\n")
        assert text == dump_json(json.loads(text))
        keys = list(json.loads(text))
        assert keys == sorted(keys)

    def test_matrix_csv_has_comment_header(self):
        text = matrix_to_csv(np.eye(2), ("A", "B"), comment="cramer_v: model")
        lines = text.splitlines()
        assert lines[0] == "# cramer_v: model"
        assert lines[1] == "variable,A,B"
        assert lines[2] == "A,1,0"

    def test_dataset_csv(self):
        data = BinaryDataset.from_array([[1, 0], [0, 1]], ["P", "Q"])
        assert dataset_to_csv(data) == "P,Q\n1,0\n0,1\n"

    def test_model_without_names_gets_defaults(self):
        model = Model(Partition((0, 0)), (VariableParams(0.5, 0.3, 1), VariableParams(0.4, 0.3, 1)))
        doc = model_to_document(model)
        assert doc.variables == ["X1", "X2"]
        assert doc.blocks[0].variables == ["X1", "X2"]
