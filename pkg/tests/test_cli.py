import json
from pathlib import Path

import pytest

from realwave import scenario as scn
from realwave.cli import EXIT_CONFIG, EXIT_IO, EXIT_MODULE, EXIT_OK, main
from realwave.errors import ConfigError, NormDrift
from realwave.scenario import load_scenario, parse_scenario, run_scenario

SMALL = {
    "evolve": {
        "grid": {"n_points": 512, "spacing": 0.05},
        "packet": {"sigma": 1.0, "momentum": 0.5},
        "potential": {"kind": "harmonic", "omega": 0.5},
        "dt": 0.01,
        "n_steps": 50,
        "trace_stride": 10,
    },
    "emulsion": {
        "grid": {"n_points": 512, "spacing": 0.05},
        "packet": {"sigma": 1.0},
        "evolve_time": 0.5,
        "dt": 0.01,
        "n_particles": 2000,
        "medium": {"delta_t": 1.0, "reduction_width": 0.25},
    },
    "stern_gerlach": {"spin": {"theta_deg": 63, "phi_deg": 117}, "shots_per_axis": 5000},
    "epr_chsh": {"model": {"kind": "P1"}, "n_per_setting": 5000},
    "epr_sweep": {"mu": 0.5, "distances": [0, 1, 2], "zeta_deg": 0, "n": 5000},
    "statistics": {
        "kind": "fermi",
        "levels": [0, 1, 2, 3],
        "degeneracy": 2,
        "beta": 0.5,
        "total_quanta": 3,
        "n_steps": 200_000,
        "burn_in": 20_000,
        "n_batches": 20,
    },
}


def write(tmp_path, experiment, params=None, seed=7, **extra):
    data = {"experiment": experiment, "master_seed": seed, "parameters": params or SMALL[experiment], **extra}
    path = tmp_path / f"{experiment}.json"
    path.write_text(json.dumps(data))
    return path


def result_files(run_dir: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(run_dir.iterdir()) if p.name != "manifest.json"}


@pytest.mark.parametrize("experiment", list(SMALL))
def test_every_experiment_runs_and_writes_manifest(tmp_path, capsys, experiment):
    path = write(tmp_path, experiment)
    assert main(["run", str(path), "--out", str(tmp_path / "runs")]) == EXIT_OK
    run_dir = Path(capsys.readouterr().out.strip())
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["experiment"] == experiment
    assert manifest["master_seed"] == 7
    assert manifest["scenario_digest"] == load_scenario(path).digest()
    assert sorted(manifest["result_files"]) == sorted(result_files(run_dir))
    for key in ("tool_version", "started_at", "finished_at", "design"):
        assert key in manifest
    assert not list(run_dir.parent.glob("*.partial"))


@pytest.mark.parametrize("experiment", list(SMALL))
def test_byte_identical_reruns_across_threads(tmp_path, experiment):
    sc = load_scenario(write(tmp_path, experiment))
    a = run_scenario(sc, str(tmp_path / "a"), threads=1)
    b = run_scenario(sc, str(tmp_path / "b"), threads=4)
    c = run_scenario(sc, str(tmp_path / "c"), threads=1)
    assert result_files(a) == result_files(b) == result_files(c)


def test_seed_override_changes_results(tmp_path):
    path = write(tmp_path, "epr_chsh")
    a = run_scenario(load_scenario(path), str(tmp_path / "a"))
    b = run_scenario(load_scenario(path, seed_override=8), str(tmp_path / "b"))
    assert result_files(a) != result_files(b)
    assert json.loads((b / "manifest.json").read_text())["master_seed"] == 8


def test_p1_verdict(tmp_path):
    params = dict(SMALL["epr_chsh"], n_per_setting=200_000)
    run_dir = run_scenario(load_scenario(write(tmp_path, "epr_chsh", params)), str(tmp_path / "r"))
    report = json.loads((run_dir / "chsh.json").read_text())
    assert report["verdict"] == "violates_bell"
    assert len(report["records"]) == 4


def test_dissimilar_species_use_separated_law(tmp_path):
    params = {"species": ["neutron", "proton"], "n_per_setting": 5000}
    run_dir = run_scenario(load_scenario(write(tmp_path, "epr_chsh", params)), str(tmp_path / "r"))
    report = json.loads((run_dir / "chsh.json").read_text())
    assert report["model"] == {"kind": "P2"}
    assert report["verdict"] == "consistent_with_local"


@pytest.mark.parametrize(
    "experiment, params, field",
    [
        ("statistics", dict(SMALL["statistics"], total_quanta=9), "parameters.total_quanta"),
        ("statistics", dict(SMALL["statistics"], burn_in=300_000), "parameters.burn_in"),
        ("evolve", dict(SMALL["evolve"], grid={"n_points": 500, "spacing": 0.05}), "parameters.grid"),
        ("evolve", dict(SMALL["evolve"], packet={"sigma": 0.1}), "parameters.packet"),
        ("evolve", dict(SMALL["evolve"], dt=-1), "parameters.dt"),
        ("evolve", dict(SMALL["evolve"], potential={"kind": "harmonic"}), "parameters.potential.omega"),
        ("emulsion", dict(SMALL["emulsion"], n_particles=50), "parameters.n_particles"),
        ("emulsion", dict(SMALL["emulsion"], medium={"reduction_width": 0.05}), "parameters.medium.reduction_width"),
        ("stern_gerlach", dict(SMALL["stern_gerlach"], axes=[{"theta_deg": 90}, {"theta_deg": 0}]), "parameters.axes"),
        ("epr_chsh", {"model": {"kind": "P3"}, "n_per_setting": 1000}, "parameters.model.kind"),
        ("epr_chsh", {"model": {"kind": "P1"}, "n_per_setting": 10}, "parameters.n_per_setting"),
        ("epr_sweep", dict(SMALL["epr_sweep"], distances=[2, 1]), "parameters.distances"),
        ("epr_sweep", {"mu": 0.5, "distances": [0]}, "parameters.n"),
    ],
)
def test_config_errors_name_the_field(tmp_path, experiment, params, field):
    path = write(tmp_path, experiment, params)
    with pytest.raises(ConfigError) as info:
        run_scenario(load_scenario(path), str(tmp_path / "runs"))
    assert info.value.field == field
    assert main(["run", str(path), "--out", str(tmp_path / "runs")]) == EXIT_CONFIG
    assert not (tmp_path / "runs").exists()


@pytest.mark.parametrize(
    "data, field",
    [
        ({"experiment": "epr_chsh", "master_seed": 1, "parameters": dict(SMALL["epr_chsh"], n_per_setings=5)},
         "parameters.n_per_setings"),
        ({"experiment": "epr_chsh", "master_seed": 1, "parameters": SMALL["epr_chsh"], "seed": 3}, "seed"),
        ({"experiment": "nope", "master_seed": 1, "parameters": {}}, "experiment"),
        ({"experiment": "epr_chsh", "master_seed": -1, "parameters": SMALL["epr_chsh"]}, "master_seed"),
        ({"experiment": "epr_chsh", "master_seed": 2**64, "parameters": SMALL["epr_chsh"]}, "master_seed"),
        ({"experiment": "epr_chsh", "parameters": SMALL["epr_chsh"]}, "master_seed"),
        ({"experiment": "evolve", "master_seed": 1,
          "parameters": dict(SMALL["evolve"], grid={"n_points": 512, "spacing": 0.05, "orign": 0})},
         "parameters.grid.orign"),
    ],
)
def test_unknown_and_invalid_keys_rejected(data, field):
    with pytest.raises(ConfigError) as info:
        parse_scenario(data)
    assert info.value.field == field
    assert str(info.value).startswith(field)


def test_bad_json_is_config_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["run", str(path)]) == EXIT_CONFIG


def test_module_error_exit_code(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise NormDrift("norm changed", 3)

    monkeypatch.setattr(scn, "evolve", broken)
    path = write(tmp_path, "evolve")
    assert main(["run", str(path), "--out", str(tmp_path / "runs")]) == EXIT_MODULE
    assert not (tmp_path / "runs").exists()


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    path = write(tmp_path, "epr_chsh")
    assert main(["run", str(path), "--out", str(blocker)]) == EXIT_IO
    assert main(["run", str(tmp_path / "missing.json")]) == EXIT_IO


def test_no_overwrite_without_force(tmp_path):
    sc = load_scenario(write(tmp_path, "epr_sweep"))
    first = run_scenario(sc, str(tmp_path / "runs"))
    second = run_scenario(sc, str(tmp_path / "runs"))
    assert first != second and first.exists() and second.exists()
    forced = run_scenario(sc, str(tmp_path / "fixed"), force=True)
    keep = forced / "notes.txt"
    keep.write_text("mine")
    assert run_scenario(sc, str(tmp_path / "fixed"), force=True) == forced
    assert keep.read_text() == "mine"


def test_digest_ignores_output_path_only():
    base = {"experiment": "epr_chsh", "master_seed": 1, "parameters": SMALL["epr_chsh"]}
    a = parse_scenario(dict(base, output_path="x"))
    b = parse_scenario(dict(base, output_path="y"))
    c = parse_scenario(dict(base, master_seed=2))
    assert a.digest() == b.digest() != c.digest()


def manifest_for(tmp_path, experiment, params, name):
    run_dir = run_scenario(load_scenario(write(tmp_path, experiment, params)), str(tmp_path / name))
    return json.loads((run_dir / "manifest.json").read_text())["design"]


@pytest.mark.parametrize(
    "experiment, change, key",
    [
        ("emulsion", {"medium": {"delta_t": 1.0, "reduction_width": 0.5}}, "reduction_width"),
        ("emulsion", {"medium": {"delta_t": 2.0, "reduction_width": 0.25}}, "delta_t"),
        ("epr_sweep", {"mu": 0.9}, "mu"),
        ("epr_chsh", {"model": {"kind": "mixture", "p_split": 0.4}}, "model"),
        ("statistics", {"kind": "bose"}, "rate_form"),
        ("statistics", {"degeneracy": 3}, "degeneracy"),
        ("evolve", {"potential": {"kind": "free"}}, "potential"),
    ],
)
def test_manifest_records_scenario_knobs(tmp_path, experiment, change, key):
    before = manifest_for(tmp_path, experiment, SMALL[experiment], "a")
    after = manifest_for(tmp_path, experiment, dict(SMALL[experiment], **change), "b")
    assert before[key] != after[key]


@pytest.mark.parametrize(
    "constant, value, key",
    [
        ("DEFAULT_OVERLAP_THRESHOLD", 1e-6, "overlap_threshold"),
        ("COALESCED_PROFILE", "other", "coalesced_profile"),
        ("SPLIT_PROFILE", "other", "split_profile"),
        ("POST_REDUCTION_PROFILE", "other", "post_reduction_profile"),
        ("SPLIT_MODEL", "other", "split_model"),
        ("POST_SPLIT_LAW", "P0", "post_split_law"),
        ("RATE_FORMS", {"bose": "x", "fermi": "y"}, "rate_forms"),
    ],
)
def test_manifest_records_module_conventions(monkeypatch, constant, value, key):
    before = scn.design_flags({})
    monkeypatch.setattr(scn, constant, value)
    after = scn.design_flags({})
    assert before[key] != after[key] and after[key] == value


def test_threads_must_be_positive(tmp_path):
    assert main(["run", str(write(tmp_path, "epr_chsh")), "--threads", "0"]) == EXIT_CONFIG
