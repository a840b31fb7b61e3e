import importlib.util
from pathlib import Path

import pytest

import carvegraph as cg

SCRIPT = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


@pytest.mark.skipif(len(cg.available_backends()) < 2, reason="needs both backends")
def test_bench_backends_agree(capsys):
    spec = importlib.util.spec_from_file_location("bench_kernels", SCRIPT)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main(["--n", "600", "--queries", "20", "--repeat", "1", "--clusters", "5"])
    rows = capsys.readouterr().out.strip().splitlines()[2:]
    assert [r.split("\t")[0] for r in rows] == ["pick", "stream", "prune", "search"]
    assert all(r.split("\t")[-1] == "yes" for r in rows)
