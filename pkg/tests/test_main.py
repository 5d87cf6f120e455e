"""Tests for command-line parsing and the simulate command."""

import argparse
import asyncio
import tempfile
from pathlib import Path
from unittest.mock import patch

import pytest

from connectors.data.observations import load_observations
from main import _comb, _grid_size, _parser, main


class TestParsing:
    """Test argument types and per-command parsers."""

    def test_comb(self):
        assert _comb("100,500") == (100, 500)
        with pytest.raises(argparse.ArgumentTypeError):
            _comb("100")

    def test_grid_size(self):
        assert _grid_size("30x20") == (30, 20)
        assert _grid_size("8X8") == (8, 8)
        with pytest.raises(argparse.ArgumentTypeError):
            _grid_size("30")

    def test_replicate_flags(self):
        args = _parser("replicate").parse_args(
            ["--scenario", "2", "--comb", "50,80", "--out", "runs/s2", "--workers", "3"]
        )
        assert args.comb == (50, 80)
        assert args.variants == "joint,fid,fdd"
        assert args.workers == 3
        assert not args.full_scale

    def test_paper_scale_flag(self):
        args = _parser("replicate").parse_args(["--scenario", "1", "--out", "x", "--paper-scale"])
        assert args.full_scale
        alias = _parser("simulate").parse_args(["--scenario", "1", "--out", "x", "--full-scale"])
        assert alias.full_scale

    def test_scenario_choices(self):
        with pytest.raises(SystemExit):
            _parser("simulate").parse_args(["--scenario", "4", "--out", "x"])

    def test_status_flags(self):
        args = _parser("status").parse_args(["runs/s1", "--watch"])
        assert args.dir == Path("runs/s1") and args.watch


class TestSimulateCommand:
    """Test the simulate command end to end on a tiny grid."""

    def test_writes_truth_and_observations(self):
        with tempfile.TemporaryDirectory() as tmp:
            argv = [
                "prefsim", "simulate", "--scenario", "1", "--grid", "6x6", "--T", "1",
                "--comb", "5,5", "--replicates", "2", "--seed", "9", "--out", tmp,
            ]
            with patch("sys.argv", argv):
                asyncio.run(main())
            replicates = Path(tmp) / "replicates"
            assert (Path(tmp) / "manifest.json").exists()
            assert sorted(p.name for p in replicates.glob("*_truth.csv")) == [
                "s1_n5-5_r0000_truth.csv", "s1_n5-5_r0001_truth.csv",
            ]
            obs = load_observations(replicates / "s1_n5-5_r0001_obs.csv")
        assert len(obs) == 10

    def test_unknown_command_exits(self):
        with patch("sys.argv", ["prefsim", "launch"]), pytest.raises(SystemExit):
            asyncio.run(main())
