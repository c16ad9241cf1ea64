import numpy as np
import pytest

from ffsynth import cli, pipeline, sphere
from ffsynth.errors import ConfigError, PerturbationError, SolverError
from ffsynth.potential import PerturbationRecord, parse_potential
from ffsynth.sphere import HarmonicSpectrum

PATTERN = HarmonicSpectrum.from_dict({(0, 0): 0.01, (1, 0): 0.01})


def write_case(tmp_path, spectrum=PATTERN, **overrides):
    (tmp_path / "f.csv").write_text(sphere.format_spectrum(spectrum))
    keys = {"k": 1.0, "epsilon": 1e-3, "b": 0.8, "a": 1.0, "radial_order": 8, "polar_order": 6}
    keys.update(overrides)
    keys.setdefault("f_coeffs_path", "f.csv")
    text = "# test case\n" + "".join(f"{k} = {v}\n" for k, v in keys.items() if v is not None)
    cfg = tmp_path / "case.cfg"
    cfg.write_text(text)
    return cfg


def read_kv(path):
    out = {}
    for line in path.read_text().splitlines():
        k, _, v = line.partition(" = ")
        out[k] = v
    return out


def test_zero_pattern_run(tmp_path, capsys):
    cfg = write_case(tmp_path, HarmonicSpectrum.zeros(0))
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "out")]) == 0
    kv = read_kv(tmp_path / "out" / "report.kv")
    assert float(kv["final_residual"]) == 0.0
    _, _, q = parse_potential((tmp_path / "out" / "q.csv").read_text())
    assert not np.any(q)


def test_certified_run_writes_artifacts(tmp_path, capsys):
    cfg = write_case(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--out", str(out), "--plots"]) == 0
    for name in (
        "q.csv", "farfield.csv", "farfield_spectrum.csv", "f_spectrum.csv", "h_spectrum.csv",
        "report.txt", "report.kv", "solver.log", "effective_config.kv",
        "residual_vs_L.csv", "q_radial_profile.csv",
    ):
        assert (out / name).exists(), name
    kv = read_kv(out / "report.kv")
    assert kv["certified"] == "true" and kv["perturbed"] == "false"
    assert "perturbation_delta" not in kv
    assert float(kv["final_residual"]) <= 1e-3
    assert float(kv["born_residual"]) <= 1e-3
    assert "PASS" in (out / "report.txt").read_text()
    table = (out / "residual_vs_L.csv").read_text().splitlines()
    assert table[0] == "L,born_residual,tail_norm,amplification" and len(table) == 3


def test_default_out_dir(tmp_path, capsys):
    cfg = write_case(tmp_path)
    assert cli.main(["run", str(cfg)]) == 0
    assert (tmp_path / "case_run" / "report.kv").exists()


def test_minimal_config_echoes_defaults(tmp_path, capsys):
    (tmp_path / "f.csv").write_text(sphere.format_spectrum(PATTERN))
    cfg = tmp_path / "min.cfg"
    cfg.write_text("k = 1\nepsilon = 1e-3\nf_coeffs_path = f.csv\n")
    run = pipeline.load_config(cfg)
    assert run.radial_order == 24 and run.polar_order == 12
    assert run.tau == 1e-6 and run.delta == 1e-2
    assert run.wave.alpha.theta == 0.0 and run.wave.b == 1.0
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
    text = capsys.readouterr().out
    for key in ("radial_order = 24", "polar_order = 12", "tau = 1e-06", "delta = 0.01", "L = auto"):
        assert key in text


def test_each_violation_is_named(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("k = -1\nepsilon = 0\nb = 0.9\na = 0.5\n")
    assert cli.main(["run", str(cfg)]) == pipeline.EXIT_CONFIG
    err = capsys.readouterr().err
    for needle in ("k: must be > 0", "epsilon: must be > 0", "b: must not exceed a", "f: one of"):
        assert needle in err
    with pytest.raises(ConfigError) as exc:
        pipeline.load_config(cfg)
    assert len(exc.value.problems) == 4


def test_samples_with_insufficient_order(tmp_path):
    quad = sphere.build_sphere_quadrature(3)
    (tmp_path / "s.csv").write_text(sphere.format_samples(quad, np.ones(quad.size)))
    cfg = tmp_path / "c.cfg"
    cfg.write_text("k = 1\nepsilon = 1e-3\nL = 4\nf_samples_path = s.csv\n")
    with pytest.raises(ConfigError, match="polar order >= L \\+ 1 = 5"):
        pipeline.load_config(cfg)


def test_samples_input_is_analysed(tmp_path, capsys):
    quad = sphere.build_sphere_quadrature(4)
    (tmp_path / "s.csv").write_text(sphere.format_samples(quad, sphere.synthesize_on_sphere(PATTERN, quad)))
    cfg = write_case(tmp_path, f_coeffs_path=None, f_samples_path="s.csv")
    run = pipeline.load_config(cfg)
    assert run.f.lmax == 3
    assert np.abs(run.f.coeffs - PATTERN.resized(3).coeffs).max() <= 1e-14


def test_unknown_key_and_both_sources(tmp_path):
    cfg = write_case(tmp_path, colour="blue", f_samples_path="s.csv")
    with pytest.raises(ConfigError) as exc:
        pipeline.load_config(cfg)
    text = str(exc.value)
    assert "unknown keys: colour" in text and "only one of" in text


def test_polar_order_must_resolve_pattern(tmp_path):
    cfg = write_case(tmp_path, HarmonicSpectrum.from_dict({(6, 0): 0.01}), polar_order=4)
    with pytest.raises(ConfigError, match="polar_order"):
        pipeline.load_config(cfg)


def test_runs_are_deterministic(tmp_path, capsys):
    cfg = write_case(tmp_path)
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "b")]) == 0
    for name in ("q.csv", "farfield.csv", "farfield_spectrum.csv", "h_spectrum.csv", "solver.log"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    ka, kb = read_kv(tmp_path / "a" / "report.kv"), read_kv(tmp_path / "b" / "report.kv")
    strip = lambda d: {k: v for k, v in d.items() if not k.startswith("time_")}
    assert strip(ka) == strip(kb)


def test_exit_status_follows_residual(tmp_path, capsys):
    cfg = write_case(tmp_path, epsilon=1e-20)
    out = tmp_path / "out"
    code = cli.main(["run", str(cfg), "--out", str(out)])
    kv = read_kv(out / "report.kv")
    assert (code == 0) == (float(kv["final_residual"]) < 1e-20)
    assert code == pipeline.EXIT_RESIDUAL


def test_strong_pattern_takes_perturbation_path(tmp_path, capsys):
    cfg = write_case(tmp_path, PATTERN * 50)
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
    kv = read_kv(out / "report.kv")
    assert kv["certified"] == "false" and kv["perturbed"] == "true"
    assert float(kv["smallness_bound"]) >= 1
    assert "perturbation_delta" in kv and "perturbation_zeroed_nodes" in kv
    assert float(kv["final_residual"]) < 1e-3


def test_perturbation_failure_exit_code(tmp_path, monkeypatch, capsys):
    def fail(*a, **kw):
        raise PerturbationError("stuck", record=PerturbationRecord(0.01, 1, 0.0, 0.0, 0.0, 0.0, 5))

    monkeypatch.setattr(pipeline, "perturb_source", fail)
    cfg = write_case(tmp_path, PATTERN * 50)
    assert cli.main(["run", str(cfg)]) == pipeline.EXIT_PERTURBATION
    assert "stage perturbation" in capsys.readouterr().err


def test_solver_failure_exit_code(tmp_path, monkeypatch, capsys):
    def fail(*a, **kw):
        raise SolverError("no convergence", history=[1.0])

    monkeypatch.setattr(pipeline, "solve_scattering", fail)
    cfg = write_case(tmp_path)
    assert cli.main(["run", str(cfg)]) == pipeline.EXIT_SOLVER
    assert "stage solve" in capsys.readouterr().err


def test_ill_conditioned_truncation_exit_code(tmp_path, capsys):
    cfg = write_case(tmp_path, HarmonicSpectrum.from_dict({(30, 0): 1.0}), polar_order=31, radial_order=4)
    assert cli.main(["run", str(cfg)]) == pipeline.EXIT_STAGE
    assert "stage source" in capsys.readouterr().err


def test_verify_round_trip(tmp_path, capsys):
    cfg = write_case(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 0
    capsys.readouterr()
    assert cli.main(["verify", str(out / "q.csv"), str(tmp_path / "f.csv"), str(cfg)]) == 0
    text = capsys.readouterr().out
    assert "PASS" in text
    # far-field samples work as the target too
    assert cli.main(["verify", str(out / "q.csv"), str(out / "farfield.csv"), str(cfg)]) == 0


def test_verify_detects_wrong_pattern(tmp_path, capsys):
    cfg = write_case(tmp_path)
    out = tmp_path / "out"
    cli.main(["run", str(cfg), "--out", str(out)])
    (tmp_path / "g.csv").write_text(sphere.format_spectrum(PATTERN * 2))
    assert cli.main(["verify", str(out / "q.csv"), str(tmp_path / "g.csv"), str(cfg)]) == pipeline.EXIT_RESIDUAL


def test_verify_rejects_mismatched_wavenumber(tmp_path, capsys):
    cfg = write_case(tmp_path)
    out = tmp_path / "out"
    cli.main(["run", str(cfg), "--out", str(out)])
    other = write_case(tmp_path / ".." / tmp_path.name, k=2.0)
    assert cli.main(["verify", str(out / "q.csv"), str(tmp_path / "f.csv"), str(other)]) == pipeline.EXIT_CONFIG
    assert "k: q file was built for" in capsys.readouterr().err


def test_spectrum_command(tmp_path, capsys):
    quad = sphere.build_sphere_quadrature(5)
    (tmp_path / "s.csv").write_text(sphere.format_samples(quad, sphere.synthesize_on_sphere(PATTERN, quad)))
    assert cli.main(["spectrum", str(tmp_path / "s.csv"), "-L", "2"]) == 0
    spec = sphere.parse_spectrum(capsys.readouterr().out)
    assert np.abs(spec.coeffs - PATTERN.resized(2).coeffs).max() <= 1e-14
    assert cli.main(["spectrum", str(tmp_path / "s.csv"), "-L", "7"]) == pipeline.EXIT_CONFIG
    assert cli.main(["spectrum", str(tmp_path / "s.csv"), "-L", "1", "-o", str(tmp_path / "o.csv")]) == 0
    assert sphere.parse_spectrum((tmp_path / "o.csv").read_text()).lmax == 1
