"""End-to-end command line checks: artifacts, exit codes, config
precedence, stage isolation, and byte-level determinism."""

import json

import numpy as np
import pytest

from torusforge import cli
from torusforge.errors import ConfigError

FAST = {"sampler": {"kind": "torus_revolution", "N": 800}}

ARTIFACTS = ("cloud.csv", "cycles.json", "residuals.json", "mesh.json",
             "projected.json", "mesh.obj", "validation.json")


@pytest.fixture(scope="module")
def fast_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "fast.json"
    path.write_text(json.dumps(FAST))
    return path


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory, fast_cfg):
    out = tmp_path_factory.mktemp("run")
    code = cli.main(["run", "--config", str(fast_cfg),
                     "--output-dir", str(out)])
    assert code == 0
    return out


def test_run_writes_all_artifacts(finished_run):
    for name in ARTIFACTS:
        assert (finished_run / name).is_file(), name


def test_validation_report_contents(finished_run):
    report = json.loads((finished_run / "validation.json").read_text())
    assert report["euler_characteristic"] == 0
    assert report["boundary_edges"] == 0
    assert report["nonmanifold_edges"] == 0
    assert report["orientation_conflicts"] == 0
    assert report["problems"] == []
    assert report["patch_agreement_max"] < 1e-6


def test_default_config_is_json_ready():
    cfg = cli.default_config()
    clone = json.loads(json.dumps(cfg))
    assert clone == cfg
    assert clone["k"] == 8
    assert clone["sampler"]["kind"] == "torus_revolution"


def test_flag_beats_config_file(fast_cfg):
    args = cli.make_parser().parse_args(
        ["run", "--config", str(fast_cfg), "--k", "9"])
    cfg = cli.resolve_config(args)
    assert cfg["k"] == 9
    assert cfg["sampler"]["N"] == 800
    args = cli.make_parser().parse_args(["run", "--config", str(fast_cfg)])
    assert cli.resolve_config(args)["k"] == 8


def test_dim_flag_selects_sampler():
    for dim, kind in ((3, "torus_revolution"), (4, "standard_map"),
                      (6, "center_manifold")):
        args = cli.make_parser().parse_args(["run", "--dim", str(dim)])
        assert cli.resolve_config(args)["sampler"]["kind"] == kind
    with pytest.raises(ConfigError):
        cli.resolve_config(cli.make_parser().parse_args(["run", "--dim", "5"]))


def test_config_errors_exit_2(tmp_path, fast_cfg):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"sampler": {"kind": "torus_revolution"},
                               "bogus": 1}))
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["run", "--config", str(fast_cfg), "--k", "1"]) == 2
    assert cli.main(["run", "--config", str(fast_cfg),
                     "--projection", "sphere"]) == 2


def test_disconnected_graph_exits_3(tmp_path, fast_cfg, capsys):
    code = cli.main(["run", "--config", str(fast_cfg), "--k", "2",
                     "--output-dir", str(tmp_path)])
    assert code == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["stage"] == "run"
    assert err["error"] == "DisconnectedGraphError"
    assert "components" in err["message"]


def test_stage_isolation(tmp_path, fast_cfg):
    """Each stage run as its own process-style invocation picks up the
    previous stage's artifacts from disk."""
    common = ["--config", str(fast_cfg), "--output-dir", str(tmp_path)]
    for stage in ("sample", "mesh", "project", "export", "validate"):
        assert cli.main([stage] + common) == 0, stage
    for name in ARTIFACTS:
        assert (tmp_path / name).is_file(), name


def test_byte_determinism_across_runs_and_threads(tmp_path_factory, fast_cfg):
    dirs = [tmp_path_factory.mktemp(f"det{i}") for i in range(3)]
    for extra, out in zip(([], [], ["--threads", "4"]), dirs):
        assert cli.main(["run", "--config", str(fast_cfg),
                         "--output-dir", str(out)] + extra) == 0
    for name in ("mesh.json", "validation.json", "cloud.csv",
                 "projected.json", "mesh.obj"):
        blobs = [(d / name).read_bytes() for d in dirs]
        assert blobs[0] == blobs[1] == blobs[2], name


def test_validate_flags_torn_mesh(tmp_path, finished_run):
    payload = json.loads((finished_run / "mesh.json").read_text())
    payload["triangles"] = payload["triangles"][1:]
    torn = tmp_path / "torn.json"
    torn.write_text(json.dumps(payload))
    code = cli.main(["validate", str(torn), "--output-dir", str(tmp_path)])
    assert code == 4
    report = json.loads((tmp_path / "validation.json").read_text())
    assert report["euler_characteristic"] == -1
    assert report["boundary_edges"] == 3
    assert report["problems"]


def test_validate_flags_nonorientable_mesh(tmp_path):
    ang = np.linspace(0, 2 * np.pi, 5, endpoint=False)
    pts = np.column_stack([np.cos(ang), np.sin(ang), 0.1 * np.arange(5)])
    payload = {"dim": 3, "provenance": "external",
               "points": pts.tolist(),
               "triangles": [[0, 1, 2], [1, 2, 3], [2, 3, 4],
                             [3, 4, 0], [4, 0, 1]],
               "report": {}}
    path = tmp_path / "strip.json"
    path.write_text(json.dumps(payload))
    code = cli.main(["validate", str(path), "--output-dir", str(tmp_path)])
    assert code == 4
    report = json.loads((tmp_path / "validation.json").read_text())
    assert report["orientation_conflicts"] == 1


def test_projection_matrix_flag(tmp_path, finished_run, fast_cfg):
    mat = [[1.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.0, -0.5, 0.5]]
    matpath = tmp_path / "proj.json"
    matpath.write_text(json.dumps(mat))
    code = cli.main(["project", "--config", str(fast_cfg),
                     "--output-dir", str(finished_run),
                     "--projection", f"matrix:{matpath}"])
    assert code == 0
    mesh = json.loads((finished_run / "mesh.json").read_text())
    proj = json.loads((finished_run / "projected.json").read_text())
    expected = np.asarray(mesh["points"]) @ np.asarray(mat).T
    assert np.allclose(np.asarray(proj["points"]), expected, atol=0)
    # restore the default projection artifact for later tests
    assert cli.main(["project", "--config", str(fast_cfg),
                     "--output-dir", str(finished_run)]) == 0


def test_pca_projection_flag(tmp_path, fast_cfg):
    code = cli.main(["run", "--config", str(fast_cfg), "--projection", "pca",
                     "--output-dir", str(tmp_path)])
    assert code == 0
    proj = json.loads((tmp_path / "projected.json").read_text())
    assert 0 < proj["captured_variance"] <= 1


def test_ply_export_flag(tmp_path, fast_cfg):
    code = cli.main(["run", "--config", str(fast_cfg), "--format", "ply",
                     "--output-dir", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "mesh.ply").is_file()
    assert not (tmp_path / "mesh.obj").exists()
