from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import pandas as pd
import pytest

from nhqa.config import Settings
from nhqa.errors import ParameterError
from nhqa.lz import InitialState
from nhqa.model import ChainParams
from nhqa.runner import RunSpec, SweepAxis, parse_sweep, run


def _settings(tmp_path: Path, *, parquet: bool = False) -> Settings:
    return Settings(
        output_dir=tmp_path / "output",
        log_level="WARNING",
        threads=1,
        executor="thread",
        rel_tol=1e-10,
        abs_tol=1e-10,
        max_step_fraction=1e-3,
        weber_rel_tol=1e-10,
        write_parquet=parquet,
    )


def test_parse_sweep_defaults_to_linear() -> None:
    axis = parse_sweep("delta:0:1:5")
    assert axis == SweepAxis("delta", 0.0, 1.0, 5, "lin")
    assert axis.values().tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_parse_sweep_log_scale() -> None:
    axis = parse_sweep("tau:10:1000:3:log")
    assert axis.values() == pytest.approx([10.0, 100.0, 1000.0])
    assert parse_sweep(axis.as_text()) == axis


@pytest.mark.parametrize(
    "text",
    ["delta:0:1", "speed:0:1:3", "delta:0:1:1", "tau:0:10:3:log", "delta:a:1:3", "delta:0:1:3:cubic"],
)
def test_parse_sweep_rejects_invalid_text(text: str) -> None:
    with pytest.raises(ParameterError):
        parse_sweep(text)


def test_run_spec_validation() -> None:
    with pytest.raises(ParameterError):
        RunSpec(command="plot-everything")
    with pytest.raises(ParameterError):
        RunSpec(command="mode-prob", engine="magic")
    with pytest.raises(ParameterError):
        RunSpec(command="mode-prob", modes=(0,))
    with pytest.raises(ParameterError):
        RunSpec(command="gap-surface", sweeps=(parse_sweep("g:0:1:3"), parse_sweep("g:1:2:3")))


def test_run_spec_defaults_per_command() -> None:
    mode_prob = RunSpec(command="mode-prob")
    assert mode_prob.resolved_engine == "tdse"
    assert mode_prob.resolved_initial_state is InitialState.DIABATIC
    assert mode_prob.resolved_modes == (1, 16, 64, 256)

    kinks = RunSpec(command="kinks-vs-delta")
    assert kinks.resolved_engine == "lz-exact"
    assert kinks.resolved_initial_state is InitialState.DRESSED

    small = RunSpec(command="mode-prob", params=ChainParams(J=0.5, g=10.0, delta=0.0, tau=100.0, N=64))
    assert small.resolved_modes == (1, 16)


def test_gap_surface_writes_csv_and_sidecar(tmp_path: Path) -> None:
    spec = RunSpec(
        command="gap-surface",
        params=ChainParams(J=0.5, g=10.0, delta=0.6, tau=1e3, N=1024),
        sweeps=(parse_sweep("g:0:2:5"), parse_sweep("theta:0:3:4")),
        output_path=tmp_path / "gap.csv",
    )
    result = run(spec, _settings(tmp_path))

    frame = pd.read_csv(result.output_csv)
    assert len(frame) == 20
    assert list(frame.columns) == ["g", "delta", "theta", "gap"]
    assert (frame["gap"] >= 0).all()
    assert result.output_parquet is None

    metadata = json.loads(result.run_metadata.read_text(encoding="utf-8"))
    assert result.run_metadata == tmp_path / "gap.json"
    assert metadata["command"] == "gap-surface"
    assert metadata["rows"] == 20
    assert metadata["sweeps"] == ["g:0.0:2.0:5:lin", "theta:0.0:3.0:4:lin"]
    assert "numpy" in metadata["versions"]
    assert metadata["wall_time_seconds"] >= 0


def test_runs_are_deterministic(tmp_path: Path) -> None:
    settings = _settings(tmp_path)
    base = RunSpec(
        command="pgs-surface",
        sweeps=(parse_sweep("delta_star:0.1:10:3:log"), parse_sweep("tau_star:0.001:0.1:3:log")),
    )
    first = run(replace(base, output_path=tmp_path / "a.csv"), settings)
    second = run(replace(base, output_path=tmp_path / "b.csv"), settings)
    assert first.output_csv.read_text() == second.output_csv.read_text()


def test_parquet_copy_is_written(tmp_path: Path) -> None:
    spec = RunSpec(
        command="pgs-surface",
        sweeps=(parse_sweep("delta_star:0.1:1:2"), parse_sweep("tau_star:0.01:0.1:2")),
    )
    result = run(spec, _settings(tmp_path, parquet=True))
    assert result.output_csv.parent == tmp_path / "output"
    assert result.output_parquet is not None and result.output_parquet.exists()
    assert len(pd.read_parquet(result.output_parquet)) == 4


def test_mode_prob_with_asymptotic_engine(tmp_path: Path) -> None:
    spec = RunSpec(command="mode-prob", engine="asympt", modes=(1, 2, 3), output_path=tmp_path / "modes.csv")
    frame = run(spec, _settings(tmp_path)).frame
    assert frame["p"].tolist() == [1, 2, 3]
    assert frame["prob_flip"].is_monotonic_increasing


def test_pgs_trajectory_rows(tmp_path: Path) -> None:
    spec = RunSpec(
        command="pgs-trajectory",
        params=ChainParams(J=0.5, g=10.0, delta=0.2, tau=20.0, N=16),
        modes=(1, 2),
        samples=5,
        output_path=tmp_path / "pgs.csv",
    )
    frame = run(spec, _settings(tmp_path)).frame
    assert len(frame) == 10
    assert {"p", "t", "prob_flip", "pgs"} <= set(frame.columns)
    assert frame["pgs"].between(0.0, 1.0).all()


def test_kinks_vs_delta_asymptotic(tmp_path: Path) -> None:
    spec = RunSpec(
        command="kinks-vs-delta",
        engine="asympt",
        sweeps=(parse_sweep("delta:0:1:3"),),
        output_path=tmp_path / "kinks.csv",
    )
    frame = run(spec, _settings(tmp_path)).frame
    assert frame["delta"].tolist() == [0.0, 0.5, 1.0]
    assert frame["kink_density"].is_monotonic_decreasing
    assert frame["kink_density"].iloc[1] == pytest.approx(3.069e-3, rel=1e-3)


def test_kinks_vs_delta_exact_small_chain(tmp_path: Path) -> None:
    spec = RunSpec(
        command="kinks-vs-delta",
        params=ChainParams(J=0.5, g=10.0, delta=0.0, tau=100.0, N=16),
        sweeps=(parse_sweep("delta:0:0.5:2"),),
        output_path=tmp_path / "kinks.csv",
    )
    frame = run(spec, _settings(tmp_path)).frame
    assert {"kink_count", "kink_density_first_1", "kink_density_first_8", "pgs_total"} <= set(frame.columns)
    assert "kink_density_first_16" not in frame.columns


def test_anneal_time_sweep(tmp_path: Path) -> None:
    spec = RunSpec(
        command="anneal-time",
        sweeps=(parse_sweep("N:256:512:2:log"), parse_sweep("delta:0.5:1:2")),
        output_path=tmp_path / "times.csv",
    )
    frame = run(spec, _settings(tmp_path)).frame
    assert frame["N"].tolist() == [256, 256, 512, 512]
    assert (frame["speedup"] > 1.0).all()
    assert (frame["tau_exact"] >= frame["tau_asymptotic"]).all()


def test_pgs_vs_delta_reports_full_and_truncated_products(tmp_path: Path) -> None:
    spec = RunSpec(
        command="pgs-vs-delta",
        params=ChainParams(J=0.5, g=10.0, delta=0.0, tau=1e3, N=64),
        sweeps=(parse_sweep("N:16:32:2:log"), parse_sweep("delta:0.75:1:2")),
        output_path=tmp_path / "pgs.csv",
    )
    frame = run(spec, _settings(tmp_path)).frame
    assert {"pgs_total", "truncated_modes", "pgs_truncated", "truncation_error"} <= set(frame.columns)
    assert (frame["truncated_modes"] == 1).all()
    assert (frame["pgs_total"] <= frame["pgs_truncated"] + 1e-12).all()
    gap = (frame["pgs_truncated"] - frame["pgs_total"]).abs()
    assert frame["truncation_error"].to_numpy() == pytest.approx(gap.to_numpy(), abs=1e-15)
    assert (frame["truncation_error"] < 1e-3).all()
    for _, group in frame.groupby("delta"):
        assert group.sort_values("N")["pgs_total"].is_monotonic_decreasing


@pytest.mark.skipif(sys.version_info < (3, 11), reason="frozen slotted dataclasses unpickle from 3.11")
def test_process_executor_matches_threads(tmp_path: Path) -> None:
    spec = RunSpec(
        command="kinks-vs-delta",
        params=ChainParams(J=0.5, g=10.0, delta=0.0, tau=20.0, N=8),
        sweeps=(parse_sweep("delta:0:0.5:2"),),
        threads=2,
    )
    threaded = run(replace(spec, output_path=tmp_path / "t.csv"), _settings(tmp_path)).frame
    settings = replace(_settings(tmp_path), executor="process")
    pooled = run(replace(spec, output_path=tmp_path / "p.csv"), settings).frame
    assert pooled["kink_density"].to_numpy() == pytest.approx(threaded["kink_density"].to_numpy(), abs=1e-12)
