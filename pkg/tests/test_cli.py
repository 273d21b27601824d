"""cli: exit codes, determinism, JSON output, error paths."""

import json
from pathlib import Path

import numpy as np
import pytest

from hiremlp.cli import main
from hiremlp.network import save_config
from hiremlp.variants import micro_config
from hiremlp.weights import save_tensors

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def micro_cfg_path(tmp_path):
    path = tmp_path / "micro.json"
    save_config(micro_config(), path)
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# ---------------------------------------------------------------------------
# summary
# ---------------------------------------------------------------------------


def test_summary_base_prints_depths(capsys):
    code, out, _ = run(capsys, "summary", "--config", str(CONFIGS / "base.json"))
    assert code == 0
    depths = [line.split()[1] for line in out.splitlines() if line.strip().startswith(("1 ", "2 ", "3 ", "4 "))]
    assert depths == ["4", "6", "24", "3"]


def test_summary_small_budget_pass(capsys):
    code, out, _ = run(capsys, "summary", "--config", str(CONFIGS / "small.json"))
    assert code == 0
    assert out.count("PASS") == 2 and "FAIL" not in out


def test_summary_empty_file_exits_2(capsys, tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    code, _, err = run(capsys, "summary", "--config", str(empty))
    assert code == 2
    assert "error" in err


def test_summary_missing_file_exits_2(capsys):
    code, _, _ = run(capsys, "summary", "--config", "/nonexistent.json")
    assert code == 2


def test_summary_json(capsys, micro_cfg_path):
    code, out, _ = run(capsys, "summary", "--config", micro_cfg_path, "--json")
    assert code == 0
    data = json.loads(out)
    assert data["depths"] == [1, 1, 1, 1]
    assert data["params"] > 0


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------


def test_forward_deterministic(capsys, micro_cfg_path):
    args = ("forward", "--config", micro_cfg_path, "--random", "64x64x3", "--seed", "7")
    code1, out1, _ = run(capsys, *args)
    code2, out2, _ = run(capsys, *args)
    assert code1 == code2 == 0
    assert out1 == out2


def test_forward_flexible_resolution(capsys, micro_cfg_path):
    code, out, _ = run(capsys, "forward", "--config", micro_cfg_path, "--random", "250x198x3")
    assert code == 0
    assert "top-2" in out


def test_forward_undersized_exits_2(capsys, micro_cfg_path):
    code, _, err = run(capsys, "forward", "--config", micro_cfg_path, "--random", "16x16x3")
    assert code == 2
    assert "smaller" in err


def test_forward_missing_weights_exits_2(capsys, micro_cfg_path):
    code, _, _ = run(
        capsys,
        "forward", "--config", micro_cfg_path, "--random", "64x64x3",
        "--weights", "/nonexistent.hire",
    )
    assert code == 2


def test_forward_tensor_file_input(capsys, micro_cfg_path, tmp_path):
    x = np.random.default_rng(0).standard_normal((40, 40, 3)).astype(np.float32)
    path = tmp_path / "input.hire"
    save_tensors(path, {"": x})
    code, out, _ = run(capsys, "forward", "--config", micro_cfg_path, "--input", str(path), "--json")
    assert code == 0
    data = json.loads(out)
    assert len(data["topk"][0]) == 2


def test_forward_without_input_exits_2(capsys, micro_cfg_path):
    code, _, _ = run(capsys, "forward", "--config", micro_cfg_path)
    assert code == 2


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------


def test_invariants_rearrange_scope(capsys):
    code, out, _ = run(capsys, "invariants", "--scope", "rearrange", "--seeds", "5")
    assert code == 0
    assert "roundtrip" in out and "FAIL" not in out


def test_invariants_unknown_scope_exits_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["invariants", "--scope", "bogus"])
    assert e.value.code == 2


def test_invariants_json(capsys):
    code, out, _ = run(capsys, "invariants", "--scope", "accounting", "--seeds", "5", "--json")
    assert code == 0
    data = json.loads(out)
    assert data["passed"] is True
    assert all(r["passed"] for r in data["results"])


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------


def test_gradcheck_passes(capsys):
    code, out, _ = run(capsys, "gradcheck", "--coords", "20")
    assert code == 0
    assert "OK" in out


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["padding", "manner"])
def test_ablate_kinds_pass(capsys, kind):
    code, out, _ = run(capsys, "ablate", kind)
    assert code == 0
    assert "PASS" in out


def test_ablate_fc_table(capsys):
    code, out, _ = run(capsys, "ablate", "fc", "--json")
    assert code == 0
    data = json.loads(out)
    assert data["ordering_ok"] and data["within_tolerance"]
    assert [r["fc_layers"] for r in data["rows"]] == [1, 2, 3, 4]


def test_ablate_shift_flags_no_communication(capsys):
    code, out, _ = run(capsys, "ablate", "shift")
    assert code == 0
    assert "no cross-region communication" in out


def test_ablate_unknown_kind_exits_2():
    with pytest.raises(SystemExit) as e:
        main(["ablate", "bogus"])
    assert e.value.code == 2


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def test_bench_smoke(capsys, micro_cfg_path):
    code, out, _ = run(
        capsys, "bench", "--config", micro_cfg_path, "--hw", "64x64",
        "--batch", "1", "--iters", "6",
    )
    assert code == 0
    assert "images/s" in out


def test_bench_zero_iters_exits_2(capsys, micro_cfg_path):
    code, _, err = run(capsys, "bench", "--config", micro_cfg_path, "--iters", "0")
    assert code == 2
    assert "iters" in err


def test_bench_thread_checksum_equality(capsys, micro_cfg_path):
    def checksum(threads):
        code, out, _ = run(
            capsys, "bench", "--config", micro_cfg_path, "--hw", "48x48",
            "--batch", "2", "--iters", "6", "--threads", str(threads), "--json",
        )
        assert code == 0
        return json.loads(out)["checksum"]

    assert checksum(1) == checksum(4)
