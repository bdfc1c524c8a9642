import numpy as np
import torch

from distill.export import export_student, read_graph_file, rebuild_torch
from distill.student import StudentSpec, build_student

from fds.graph import load_graph, run_graph


def test_exported_graph_matches_torch_model(tmp_path):
    torch.manual_seed(0)
    model = build_student(StudentSpec(base_width=8, out_channels=12)).eval()
    path = tmp_path / "student.graph"
    export_student(model, path, {"note": "test"})

    graph = load_graph(path)
    assert graph.meta == {"note": "test"}
    rng = np.random.default_rng(0)
    for _ in range(5):
        x = rng.random((3, 32, 32), dtype=np.float32)
        got = run_graph(graph, x)
        with torch.no_grad():
            want = model(torch.from_numpy(x)[None])[0].numpy()
        assert got.shape == want.shape
        assert np.abs(got - want).max() <= 1e-4


def test_export_bytes_are_deterministic(tmp_path):
    torch.manual_seed(1)
    model = build_student(StudentSpec(base_width=8, out_channels=12)).eval()
    export_student(model, tmp_path / "a.graph")
    export_student(model, tmp_path / "b.graph")
    assert (tmp_path / "a.graph").read_bytes() == (tmp_path / "b.graph").read_bytes()


def test_rebuild_matches_serialized_form(tmp_path):
    torch.manual_seed(2)
    model = build_student(StudentSpec(base_width=8, out_channels=12)).eval()
    export_student(model, tmp_path / "m.graph")
    graph, blob = read_graph_file(tmp_path / "m.graph")
    rebuilt = rebuild_torch(graph, blob)
    x = torch.rand(1, 3, 48, 48)
    with torch.no_grad():
        assert (model(x) - rebuilt(x)).abs().max().item() <= 1e-5
