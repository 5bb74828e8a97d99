import numpy as np
import pytest

from tntz import full, load, random_tt
from tntz.cli import main
from tntz.serialization import read_dense, write_dense


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def dense_file(tmp_path):
    x = full(random_tt((6, 6, 6, 6), 3, seed=0))
    path = tmp_path / "input.raw"
    write_dense(x, path)
    return path, x


class TestDecompose:
    def test_tt_reports_metrics(self, tmp_path, dense_file, capsys):
        path, x = dense_file
        out_path = tmp_path / "t.tntz"
        code, out, _ = run(capsys, "decompose", "--input", str(path),
                           "--shape", "6,6,6,6", "--format", "tt",
                           "--eps", "1e-8", "--output", str(out_path))
        assert code == 0
        assert "ranks: [1, 3, 3, 3, 1]" in out
        assert "compression_ratio" in out
        err_line = [l for l in out.splitlines() if l.startswith("relative_error")][0]
        assert float(err_line.split(":")[1]) <= 1e-8

    def test_zero_tensor_rank_one(self, tmp_path, capsys):
        path = tmp_path / "z.raw"
        write_dense(np.zeros((3, 3, 3)), path)
        code, out, _ = run(capsys, "decompose", "--input", str(path),
                           "--shape", "3,3,3", "--format", "tt", "--eps", "0",
                           "--output", str(tmp_path / "z.tntz"))
        assert code == 0
        assert "ranks: [1, 1, 1, 1]" in out

    def test_batched_decompose(self, tmp_path, capsys):
        xb = np.stack([full(random_tt((5, 5, 5), 2, seed=s)) for s in range(3)])
        path = tmp_path / "b.raw"
        write_dense(xb, path)
        out_path = tmp_path / "b.tntz"
        code, out, _ = run(capsys, "decompose", "--input", str(path),
                           "--shape", "5,5,5", "--format", "tt", "--eps", "1e-8",
                           "--batch", "3", "--output", str(out_path))
        assert code == 0
        t = load(out_path)
        assert t.batch_size == 3
        fb = full(t)
        for b in range(3):
            assert np.linalg.norm(fb[b] - xb[b]) <= 1e-8 * np.linalg.norm(xb[b])

    def test_cp_and_tucker_formats(self, tmp_path, capsys):
        x = full(random_tt((4, 4, 4), 2, seed=1))
        path = tmp_path / "x.raw"
        write_dense(x, path)
        code, out, _ = run(capsys, "decompose", "--input", str(path),
                           "--shape", "4,4,4", "--format", "cp", "--rank", "4",
                           "--output", str(tmp_path / "c.tntz"))
        assert code == 0
        code, out, _ = run(capsys, "decompose", "--input", str(path),
                           "--shape", "4,4,4", "--format", "tucker",
                           "--eps", "1e-10", "--output", str(tmp_path / "u.tntz"))
        assert code == 0

    def test_shape_file_mismatch_is_data_error(self, tmp_path, dense_file, capsys):
        path, _ = dense_file
        code, _, err = run(capsys, "decompose", "--input", str(path),
                           "--shape", "6,6,6", "--format", "tt", "--eps", "1e-8",
                           "--output", str(tmp_path / "t.tntz"))
        assert code == 3

    def test_missing_eps_and_rank_is_usage_error(self, tmp_path, dense_file, capsys):
        path, _ = dense_file
        code, _, err = run(capsys, "decompose", "--input", str(path),
                           "--shape", "6,6,6,6", "--format", "tt",
                           "--output", str(tmp_path / "t.tntz"))
        assert code == 2


class TestInfoReconstructRound:
    def test_info_prints_rank_chain(self, tmp_path, capsys):
        t = random_tt((15,) * 4, 20, seed=0)
        path = tmp_path / "t.tntz"
        from tntz import save

        save(t, path)
        code, out, _ = run(capsys, "info", str(path))
        assert code == 0
        assert "rank_chain: [1, 20, 20, 20, 1]" in out

    def test_reconstruct_round_trip(self, tmp_path, dense_file, capsys):
        path, x = dense_file
        container = tmp_path / "t.tntz"
        run(capsys, "decompose", "--input", str(path), "--shape", "6,6,6,6",
            "--format", "tt", "--eps", "0", "--output", str(container))
        out_path = tmp_path / "out.raw"
        code, _, _ = run(capsys, "reconstruct", str(container),
                         "--output", str(out_path))
        assert code == 0
        back = read_dense(out_path, (6, 6, 6, 6))
        assert np.linalg.norm(back - x) <= 1e-12 * np.linalg.norm(x)

    def test_round_reports_rank_change(self, tmp_path, capsys):
        from tntz import add, save

        t = random_tt((4, 4, 4), 2, seed=3)
        doubled = add(t, t)
        path = tmp_path / "d.tntz"
        save(doubled, path)
        out_path = tmp_path / "r.tntz"
        code, out, _ = run(capsys, "round", str(path), "--eps", "1e-12",
                           "--output", str(out_path))
        assert code == 0
        assert "ranks_before: [1, 4, 4, 1]" in out
        assert "ranks_after: [1, 2, 2, 1]" in out
        rounded = load(out_path)
        assert np.linalg.norm(full(rounded) - full(doubled)) <= \
            1e-10 * np.linalg.norm(full(doubled))

    def test_reconstruct_guard(self, tmp_path, capsys):
        from tntz import save

        t = random_tt((120,) * 5, 1, seed=4)  # 120^5 entries > 1e8 guard
        path = tmp_path / "big.tntz"
        save(t, path)
        code, _, err = run(capsys, "reconstruct", str(path),
                           "--output", str(tmp_path / "big.raw"))
        assert code == 4
        assert "guard" in err

    def test_info_on_garbage_is_data_error(self, tmp_path, capsys):
        path = tmp_path / "junk.tntz"
        path.write_bytes(b"not a container at all")
        code, _, _ = run(capsys, "info", str(path))
        assert code == 3


class TestCross:
    def test_index_sum(self, tmp_path, capsys):
        out_path = tmp_path / "c.tntz"
        code, out, _ = run(capsys, "cross", "--function", "index_sum",
                           "--shape", "8,8,8,8", "--eps", "1e-10",
                           "--seed", "0", "--output", str(out_path))
        assert code == 0
        err = float([l for l in out.splitlines()
                     if l.startswith("validation_error")][0].split(":")[1])
        assert err <= 1e-10
        t = load(out_path)
        assert max(t.ranks) <= 3

    def test_const1_rank_one(self, tmp_path, capsys):
        out_path = tmp_path / "c.tntz"
        code, out, _ = run(capsys, "cross", "--function", "const1",
                           "--shape", "5,5,5", "--eps", "1e-10",
                           "--output", str(out_path))
        assert code == 0
        assert load(out_path).ranks == [1, 1, 1, 1]

    def test_gaussian_bump_argmax_is_center(self, tmp_path, capsys):
        code, out, _ = run(capsys, "cross", "--function", "gaussian_bump",
                           "--shape", "7,7", "--eps", "1e-8", "--seed", "1",
                           "--output", str(tmp_path / "g.tntz"))
        assert code == 0
        line = [l for l in out.splitlines() if l.startswith("incumbent_index")][0]
        assert line.split(":")[1].strip() == "(3, 3)"

    def test_unknown_function_is_usage_error(self, tmp_path, capsys):
        code, _, err = run(capsys, "cross", "--function", "nope",
                           "--shape", "4,4", "--output", str(tmp_path / "x.tntz"))
        assert code == 2
        assert "unknown function" in err


class TestBenchmark:
    def test_tiny_grid_smoke(self, tmp_path, capsys):
        out_path = tmp_path / "bench.csv"
        code, _, err = run(capsys, "benchmark", "--sizes", "4,5", "--rank", "2",
                           "--dims", "3", "--batch", "2", "--repeats", "1",
                           "--output", str(out_path))
        assert code == 0
        lines = out_path.read_text().strip().splitlines()
        assert lines[0] == "op,I,N,R,B,mode,mean_seconds_per_item,std_seconds"
        assert len(lines) == 1 + 4 * 2 * 2  # ops x sizes x modes
        assert all("# " not in l for l in lines)

    def test_single_op_single_mode(self, tmp_path, capsys):
        code, out, _ = run(capsys, "benchmark", "--op", "sum", "--mode", "batch",
                           "--sizes", "4", "--rank", "2", "--dims", "3",
                           "--batch", "2", "--repeats", "1")
        assert code == 0
        lines = [l for l in out.splitlines() if l and not l.startswith("#")]
        assert lines[0].startswith("op,")
        assert len(lines) == 2

    def test_memory_guard_refusal_exits_4(self, tmp_path, capsys):
        code, _, err = run(capsys, "benchmark", "--op", "product", "--sizes", "5",
                           "--rank", "2", "--dims", "3", "--batch", "2",
                           "--repeats", "1", "--memory-budget-gb", "0.000001",
                           "--output", str(tmp_path / "b.csv"))
        assert code == 4
        assert "refused" in err
