import csv
import math

import pytest

from ompsupport.errors import InputDomainError
from ompsupport.harness import (
    CELL_COLUMNS,
    TRIAL_COLUMNS,
    ExperimentConfig,
    parse_noise,
    parse_profile,
    run_experiment,
    run_trial,
)
from ompsupport.synth import EqualMagnitude, FixedBasisVector, UniformMagnitude


def config(tmp_path, text):
    return ExperimentConfig.from_text(text + f"\nout_dir={tmp_path / 'out'}\n")


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_config(tmp_path):
    cfg = config(tmp_path, """
        # comment line
        seed = 4
        trials=3
        m=8, 10
        n=12
        k=1,2     # trailing comment
        snr=10,noise-free,thm1x1.5
        profile=equal:2,uniform:1:2
        signs=random
        noise=isotropic,basis:2
        matrix=gaussian,lowrip
        diagnostics=on
        exact_delta=on
        frame_steps=10
    """)
    assert cfg.seed == 4 and cfg.trials == 3 and cfg.m == (8, 10) and cfg.k == (1, 2)
    assert cfg.diagnostics and cfg.frame_steps == 10
    assert len(cfg.cells()) == 2 * 1 * 2 * 3 * 2 * 2 * 2
    assert parse_profile("equal:2") == EqualMagnitude(2.0)
    assert parse_profile("uniform:1:2", True) == UniformMagnitude(1.0, 2.0, True)
    assert parse_noise("basis:2") == FixedBasisVector(2)


@pytest.mark.parametrize("text", [
    "bogus=1",
    "m=4\nn=8\nk=5",
    "m=8\nn=40\nk=5\ncap=1000",
    "snr=-1",
    "profile=uniform:0:1",
    "matrix=fourier",
    "m=8\nn=12\nk=2\nmatrix=identity",
    "m=8\nn=8\nk=8\nmatrix=counterexample:0",
    "diagnostics=maybe",
    "trials=0",
    "noline",
    "m=4\nn=8\nk=2\nnoise=basis:5",
    "m=4\nn=8\nk=1\nsnr=thm1x2\nexact_delta=off",
])
def test_config_rejects(tmp_path, text):
    with pytest.raises(InputDomainError):
        config(tmp_path, text)


def test_empty_grid(tmp_path):
    cfg = config(tmp_path, "k=")
    res = run_experiment(cfg)
    assert res.records == [] and res.cells == []
    assert rows(res.paths["trials"]) == [] and rows(res.paths["cells"]) == []
    assert res.paths["trials"].read_text().strip().split(",") == TRIAL_COLUMNS
    assert res.paths["cells"].read_text().strip().split(",") == CELL_COLUMNS


def test_identity_noise_free_cell(tmp_path):
    res = run_experiment(config(tmp_path, "m=8\nn=8\nk=3\ntrials=10\nmatrix=identity"))
    (cell,) = res.cells
    assert cell.exact_recovery_rate == 1.0 and cell.violations == 0
    assert all(r.rho_error == 0 for r in res.records)


def test_orthonormal_noise_free_cell(tmp_path):
    res = run_experiment(config(tmp_path, "m=10\nn=10\nk=4\ntrials=10\nmatrix=orthogonal\n"
                                          "profile=gaussian:1\nsigns=random\ndiagnostics=on"))
    assert res.cells[0].exact_recovery_rate == 1.0 and res.violations == 0


def test_appendix_cell(tmp_path):
    res = run_experiment(config(tmp_path, "m=8\nn=8\nk=1,3\ntrials=4\nmatrix=counterexample:0.1"))
    for r in res.records:
        assert r.rho_error == pytest.approx(1 / r.k) and r.region == "below_necessary"
    assert [c.max_rho_error for c in res.cells] == [1.0, pytest.approx(1 / 3)]


def test_run_trial_replay(tmp_path):
    cfg = config(tmp_path, "m=12\nn=16\nk=2\nsnr=20\nprofile=uniform:1:2\nmatrix=normalized\n"
                           "diagnostics=on")
    cell = cfg.cells()[0]
    a, b = run_trial(cell, 7, cfg, 7), run_trial(cell, 7, cfg, 7)
    assert a == b and a.row() == b.row()
    assert run_trial(cell, 8, cfg, 8).seed != a.seed
    assert a.delta_k1 is not None and a.delta_2k is not None and a.violations == 0


def test_errors_are_recorded(tmp_path):
    # C(8, 3) = 56 fits under the cap but delta_4 needs C(8, 4) = 70
    cfg = config(tmp_path, "m=6\nn=8\nk=2\nsnr=thm3x1\ncap=60\ntrials=2")
    res = run_experiment(cfg)
    assert res.errors == 2 and all("CapacityError" in r.error for r in res.records)
    assert res.cells[0].exact_recovery_rate is None


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = ExperimentConfig.from_text(f"m=4\nn=4\nk=1\nout_dir={blocker / 'sub'}")
    with pytest.raises(OSError):
        run_experiment(cfg)


def test_thm1_cell_recovers(tmp_path):
    cfg = config(tmp_path, "m=8\nn=10\nk=1\ntrials=20\nsnr=thm1x1\nprofile=uniform:1:2\n"
                           "matrix=lowrip\nnoise=isotropic,adversarial\nframe_steps=300\ndiagnostics=on")
    res = run_experiment(cfg)
    for r in res.records:
        assert r.verdict("THM1_SUFFICIENT") == "pass" and r.exact_recovery
        margin = math.sqrt(r.snr_actual) - math.sqrt(r.snr_target)
        assert abs(margin) < 1e-9
    assert res.violations == 0 and all(c.thm1_exceptions == 0 for c in res.cells)


def test_rate_monotone_in_snr(tmp_path):
    snrs = ["1", "4", "16", "64", "256", "noise-free"]
    cfg = config(tmp_path, f"m=12\nn=24\nk=3\ntrials=500\nsnr={','.join(snrs)}\n"
                           "profile=uniform:1:2\nsigns=random\nexact_delta=off\nworkers=4")
    rates = [c.exact_recovery_rate for c in run_experiment(cfg).cells]
    assert rates == sorted(rates), rates
    assert rates[0] < rates[-1]


def test_serial_parallel_identical(tmp_path):
    text = ("m=8\nn=12\nk=1,2\ntrials=6\nsnr=5,noise-free\nprofile=uniform:1:3\n"
            "matrix=gaussian,lowrip\nframe_steps=50\ndiagnostics=on\n")
    a = run_experiment(ExperimentConfig.from_text(text + f"out_dir={tmp_path / 'a'}"))
    b = run_experiment(ExperimentConfig.from_text(text + f"out_dir={tmp_path / 'b'}\nworkers=3"))
    for name in ("trials", "cells"):
        assert a.paths[name].read_bytes() == b.paths[name].read_bytes()
