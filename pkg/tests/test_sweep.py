import numpy as np
import pytest

from lpvred import sweep as sweep_mod
from lpvred.errors import ConfigurationError, NumericalError
from lpvred.generators import generate_random_model
from lpvred.hankel import OptimizerConfig
from lpvred.io import dumps
from lpvred.norms import EvaluationSet
from lpvred.sensitivity import TscmConfig
from lpvred.simulate import SimulationSpec
from lpvred.sweep import SweepConfig, run_reduction_sweep


def small_config(**kw):
    base = dict(eval_set=EvaluationSet("vertices+samples", 6, 0), optimizer=OptimizerConfig(n_starts=4),
                tscm=TscmConfig(EvaluationSet("vertices"), n_freq=60),
                simulation=SimulationSpec((((1.0, 1.0), 2.0),), t_final=4.0))
    base.update(kw)
    return SweepConfig(**base)


@pytest.fixture(scope="module")
def model():
    return generate_random_model(5, n=5, l=2)


@pytest.fixture(scope="module")
def report(model):
    return run_reduction_sweep(model, small_config(methods=("hankel", "tscm", "subsys")))


def test_lossless_rows_and_monotone_chains(report):
    assert all(c.status == "ok" for c in report.cells)
    for m in ("hankel", "tscm", "subsys"):
        errs = report.errors(m)
        assert sorted(errs) == [0, 1, 2]
        assert errs[2] <= 1e-8
        assert errs[0] >= errs[1] - 1e-12
    assert report.nonincreasing("hankel")
    hk = [report.cell("hankel", k).objective for k in (0, 1, 2)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hk, hk[1:]))


def test_rerun_is_identical(model, report):
    again = run_reduction_sweep(model, small_config(methods=("hankel", "tscm", "subsys")))
    assert dumps(again.to_dict(timings=False)) == dumps(report.to_dict(timings=False))


def test_outputs_written(report, tmp_path):
    report.write(tmp_path)
    rows = (tmp_path / "pinf_error.csv").read_text().splitlines()
    assert rows[0].split(",")[0] == "n_r" and len(rows) == 4
    sims = sorted(p.name for p in tmp_path.glob("sim_*.csv"))
    assert "sim_hankel_nr1.csv" in sims and len(sims) == 9


def test_failed_cells_recorded(model, monkeypatch):
    def boom(*args, **kwargs):
        raise NumericalError("forced")

    monkeypatch.setattr(sweep_mod, "subsystem_hankel_baseline", boom)
    rep = run_reduction_sweep(model, small_config(methods=("subsys",), n_r=(0, 1), simulate=False))
    assert [c.status for c in rep.cells] == ["failed", "failed"]
    assert "forced" in rep.cells[0].error
    assert rep.errors("subsys") == {0: None, 1: None}


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SweepConfig(methods=("nope",))
    with pytest.raises((ConfigurationError, ValueError)):
        small_config(n_r=(7,)).counts(2)
    assert SweepConfig().counts(3) == (0, 1, 2, 3)
    assert np.isfinite(SweepConfig().rel_tol)
