"""Round-trip and error-path tests for cloud file formats."""

import numpy as np
import pytest

from tog.cloud_io import (
    cloud_from_dict,
    cloud_to_dict,
    load_cloud,
    load_json,
    load_ply,
    save_cloud,
    save_json,
    save_ply,
)
from tog.errors import CloudParseError
from tog.geometry import PointCloud


@pytest.fixture
def labeled_cloud():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.1, 0.1, size=(40, 3))
    labels = ["body.outside"] * 25 + ["handle"] * 15
    return PointCloud(pts, labels)


class TestPly:
    def test_round_trip_labeled(self, tmp_path, labeled_cloud):
        path = tmp_path / "c.ply"
        save_ply(labeled_cloud, path)
        back = load_ply(path)
        assert np.allclose(back.points, labeled_cloud.points, atol=1e-7)
        assert back.labels.tolist() == labeled_cloud.labels.tolist()

    def test_round_trip_unlabeled(self, tmp_path):
        cloud = PointCloud([[0.001, -0.5, 2.25], [1e-6, 0, 3]])
        path = tmp_path / "c.ply"
        save_ply(cloud, path)
        back = load_ply(path)
        assert back.labels is None
        assert np.allclose(back.points, cloud.points, atol=1e-9)

    def test_header_declares_label_names(self, tmp_path, labeled_cloud):
        path = tmp_path / "c.ply"
        save_ply(labeled_cloud, path)
        text = path.read_text()
        assert "comment label 0 body.outside" in text
        assert "comment label 1 handle" in text
        assert "property int label" in text

    def test_rejects_non_ply(self, tmp_path):
        path = tmp_path / "c.ply"
        path.write_text("not a ply\n1 2 3\n")
        with pytest.raises(CloudParseError):
            load_ply(path)

    def test_rejects_truncated_body(self, tmp_path):
        path = tmp_path / "c.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 3\n"
            "property float x\nproperty float y\nproperty float z\n"
            "end_header\n0 0 0\n1 1 1\n"
        )
        with pytest.raises(CloudParseError, match="vertex rows"):
            load_ply(path)

    def test_rejects_undeclared_label_id(self, tmp_path):
        path = tmp_path / "c.ply"
        path.write_text(
            "ply\nformat ascii 1.0\ncomment label 0 body\nelement vertex 1\n"
            "property float x\nproperty float y\nproperty float z\n"
            "property int label\nend_header\n0 0 0 7\n"
        )
        with pytest.raises(CloudParseError, match="label ids"):
            load_ply(path)

    def test_rejects_binary_format(self, tmp_path):
        path = tmp_path / "c.ply"
        path.write_text(
            "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n"
        )
        with pytest.raises(CloudParseError, match="ascii"):
            load_ply(path)


class TestJson:
    def test_round_trip(self, tmp_path, labeled_cloud):
        path = tmp_path / "c.json"
        save_json(labeled_cloud, path)
        back = load_json(path)
        assert np.allclose(back.points, labeled_cloud.points, atol=1e-15)
        assert back.labels.tolist() == labeled_cloud.labels.tolist()

    def test_dict_round_trip_unlabeled(self):
        cloud = PointCloud([[1, 2, 3]])
        d = cloud_to_dict(cloud)
        assert "labels" not in d
        back = cloud_from_dict(d)
        assert np.allclose(back.points, cloud.points)

    def test_rejects_missing_points(self):
        with pytest.raises(CloudParseError):
            cloud_from_dict({"labels": ["a"]})

    def test_rejects_invalid_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        with pytest.raises(CloudParseError):
            load_json(path)

    def test_rejects_mismatched_labels(self):
        with pytest.raises(CloudParseError):
            cloud_from_dict({"points": [[0, 0, 0]], "labels": ["a", "b"]})


class TestDispatch:
    def test_by_suffix(self, tmp_path, labeled_cloud):
        for name in ("c.ply", "c.json"):
            path = tmp_path / name
            save_cloud(labeled_cloud, path)
            back = load_cloud(path)
            assert len(back) == len(labeled_cloud)

    def test_unknown_suffix(self, tmp_path):
        with pytest.raises(CloudParseError):
            load_cloud(tmp_path / "c.xyz")
        with pytest.raises(CloudParseError):
            save_cloud(PointCloud([[0, 0, 0]]), tmp_path / "c.xyz")
