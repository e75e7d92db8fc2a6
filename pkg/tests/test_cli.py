import json
import subprocess
import sys

import numpy as np
import pytest

from mcpsd import __version__, cli, experiments, io
from mcpsd.config import parse_config
from mcpsd.experiments import EstimatorSettings, Method
from mcpsd.multicoset import MulticosetPattern

SMALL = {
    "signal": {"fs_hz": 400e6, "bands": [{"center_hz": 100e6, "bandwidth_hz": 20e6}]},
    "pattern": {"N": 8, "delays": [0, 2, 3, 4]},
    "durations_s": [1e-6],
    "snr_db": 0,
    "truncation": 200,
    "seeds": [1],
}


@pytest.fixture
def config(tmp_path):
    def write(**changes):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({**SMALL, "output_dir": str(tmp_path / "out"), **changes}))
        return str(path)

    return write


def run(*argv):
    return cli.main(list(argv))


class TestPattern:
    def test_valid_example(self, capsys):
        assert run("pattern", "--N", "8", "--delays", "0,2,3,4") == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "VALID circular" in out and out.splitlines()[0].split() == ["n", "m1", "m2", "c"]

    def test_needs_wrap(self, capsys):
        assert run("pattern", "--N", "8", "--delays", "0,3,5,7") == cli.EXIT_OK
        assert run("pattern", "--N", "8", "--delays", "0,3,5,7", "--linear") == cli.EXIT_PRECONDITION
        assert "INVALID linear" in capsys.readouterr().out

    def test_invalid(self, capsys):
        assert run("pattern", "--N", "4", "--delays", "0,1") == cli.EXIT_PRECONDITION
        assert "missing residues [2]" in capsys.readouterr().out

    def test_search_and_write(self, tmp_path):
        assert run("pattern", "--N", "8", "--M", "4", "--out", str(tmp_path)) == cli.EXIT_OK
        assert io.read_pattern(tmp_path / "pattern.json").delays == (0, 1, 2, 4)

    def test_search_none(self):
        assert run("pattern", "--N", "2", "--M", "1") == cli.EXIT_PRECONDITION

    def test_delays_in_seconds(self, capsys):
        code = run("pattern", "--N", "25", "--delays-s",
                   "0,0.5e-9,1e-9,1.5e-9,2e-9,2.5e-9,3e-9,6.5e-9", "--fs", "2e9")
        assert code == cli.EXIT_OK

    def test_missing_n(self):
        assert run("pattern", "--delays", "0") == cli.EXIT_CONFIG


class TestGenAndPsd:
    def test_gen_is_deterministic(self, config, tmp_path):
        cfg = config()
        assert run("gen", "--config", cfg, "--out", str(tmp_path / "a")) == cli.EXIT_OK
        assert run("gen", "--config", cfg, "--out", str(tmp_path / "b")) == cli.EXIT_OK
        (a,) = sorted((tmp_path / "a").glob("*.f64"))
        b = tmp_path / "b" / a.name
        assert a.read_bytes() == b.read_bytes()
        assert a.name == "signal_snr0_dur1em06_seed1.f64"
        assert io.read_signal(a).samples.size == 400

    def test_seed_override_changes_output(self, config, tmp_path):
        cfg = config()
        run("gen", "--config", cfg, "--out", str(tmp_path / "a"))
        run("gen", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2")
        (a,) = (tmp_path / "a").glob("*.f64")
        (b,) = (tmp_path / "b").glob("*.f64")
        assert not np.array_equal(io.read_signal(a).samples, io.read_signal(b).samples)

    def test_zero_duration_is_a_config_error(self, config, capsys):
        assert run("gen", "--config", config(durations_s=[0])) == cli.EXIT_CONFIG
        assert "zero-length" in capsys.readouterr().err

    def test_bad_window_is_a_config_error(self, config):
        assert run("psd", "--config", config(window="blackman")) == cli.EXIT_CONFIG

    def test_missing_config(self):
        assert run("gen") == cli.EXIT_CONFIG
        assert run("gen", "--config", "/nonexistent.json") == cli.EXIT_CONFIG

    def test_truncation_over_bound_is_a_precondition_error(self, config, capsys):
        # 50 Nyquist samples, N=8 -> L=6, bound (L-2)N = 32
        cfg = config(durations_s=[1.25e-7], truncation=33, psd_len=67)
        assert run("psd", "--config", cfg) == cli.EXIT_PRECONDITION
        assert "(L-2)N = 32" in capsys.readouterr().err

    def test_psd_from_file_matches_generated(self, config, tmp_path):
        cfg = config()
        run("gen", "--config", cfg, "--out", str(tmp_path / "sig"))
        (sig,) = (tmp_path / "sig").glob("*.f64")
        assert run("psd", "--config", cfg, "--out", str(tmp_path / "gen")) == cli.EXIT_OK
        code = run("psd", "--config", cfg, "--signal", str(sig), "--out", str(tmp_path / "file"),
                   "--autocorr")
        assert code == cli.EXIT_OK
        (g,) = (tmp_path / "gen").glob("psd_*.csv")
        (f,) = (tmp_path / "file").glob("psd_*.csv")
        assert io.read_csv(g)[2] == io.read_csv(f)[2]
        (r,) = (tmp_path / "file").glob("autocorr_*.csv")
        assert len(io.read_csv(r)[2]) == 2 * 200 + 1

    def test_fft_len_override_agrees(self, config, tmp_path):
        cfg = config()
        run("psd", "--config", cfg, "--out", str(tmp_path / "a"))
        run("psd", "--config", cfg, "--out", str(tmp_path / "b"), "--fft-len", "exact")
        (a,) = (tmp_path / "a").glob("psd_*.csv")
        (b,) = (tmp_path / "b").glob("psd_*.csv")
        va = np.array([float(r[1]) for r in io.read_csv(a)[2]])
        vb = np.array([float(r[1]) for r in io.read_csv(b)[2]])
        assert np.allclose(va, vb, atol=1e-9 * np.abs(va).max())

    def test_short_fft_len_refused(self, config):
        assert run("psd", "--config", config(), "--fft-len", "10") == cli.EXIT_PRECONDITION

    def test_sample_command(self, config, tmp_path):
        cfg = config()
        run("gen", "--config", cfg, "--out", str(tmp_path / "sig"))
        (sig,) = (tmp_path / "sig").glob("*.f64")
        assert run("sample", "--signal", str(sig), "--config", cfg, "--out", str(tmp_path)) == 0
        y = np.fromfile(tmp_path / "coset_samples.f64", "<f8").reshape(4, 50)
        x = io.read_signal(sig).samples
        assert np.array_equal(y[1], x[2::8])


class TestSweeps:
    def test_compare_cell_matches_direct_run(self, config, tmp_path):
        cfg_path = config(methods=["proposed", "nyquist_ref"])
        assert run("compare", "--config", cfg_path) == cli.EXIT_OK
        out = tmp_path / "out"
        header, cols, rows = io.read_csv(out / "compare.csv")
        assert "config_hash" in header and header["code_version"] == __version__
        cfg = parse_config(json.loads(open(cfg_path).read()))
        direct = experiments.run_cell(
            cfg.scenario, Method.PROPOSED, cfg.pattern, cfg.settings,
            snr_db=0, duration_s=1e-6, seed=1,
        )
        row = dict(zip(cols, rows[0]))
        assert row["method"] == "proposed" and row["status"] == "ok"
        assert float(row["nmse"]) == direct.nmse and float(row["auc"]) == direct.auc
        assert (out / "truth_noiseless.csv").exists()

    def test_roc_sweep_parallel_equals_serial(self, config, tmp_path):
        cfg = config(snr_list=[-5, 5])
        run("roc", "--config", cfg, "--out", str(tmp_path / "s"))
        run("roc", "--config", cfg, "--out", str(tmp_path / "p"), "--threads", "2")
        s = io.read_csv(tmp_path / "s" / "roc_summary.csv")[2]
        p = io.read_csv(tmp_path / "p" / "roc_summary.csv")[2]
        assert [r[:8] for r in s] == [r[:8] for r in p]
        assert len(list((tmp_path / "s").glob("roc_proposed_*.csv"))) == 2

    def test_failing_cell_is_recorded_and_sweep_continues(self, config, tmp_path):
        cfg = config(methods=["proposed", "nyquist_ref"], durations_s=[1.25e-7],
                     truncation=33, psd_len=67)
        assert run("compare", "--config", cfg) == cli.EXIT_PRECONDITION
        _, cols, rows = io.read_csv(tmp_path / "out" / "compare.csv")
        status = {r[0]: r[cols.index("status")] for r in rows}
        assert status["proposed"].startswith("error 3")
        assert status["nyquist_ref"] == "ok"


def test_bench_command(config, tmp_path):
    bench = [{"method": "proposed", "repeats": 1, "grid": [{"N": 8, "L": 16}]},
             {"method": "time_domain", "repeats": 1, "grid": [{"N": 8, "L": 41}]}]
    assert run("bench", "--config", config(bench=bench)) == cli.EXIT_OK
    _, cols, rows = io.read_csv(tmp_path / "out" / "bench.csv")
    assert rows[0][cols.index("status")] == "ok"
    assert rows[1][cols.index("status")].startswith("skipped")


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "mcpsd", "--version"],
                          capture_output=True, text=True, check=True)
    assert done.stdout.strip() == __version__


class TestExperimentsHelpers:
    def test_derive_seed_is_stable_and_distinct(self):
        assert experiments.derive_seed(0, 1, 2) == experiments.derive_seed(0, 1, 2)
        assert experiments.derive_seed(0, 1, 2) != experiments.derive_seed(0, 1, 3)
        assert 0 <= experiments.derive_seed(5) < 2**63

    def test_shorter_durations_are_prefixes(self):
        sc = parse_config(SMALL).scenario
        short, _ = experiments.cell_signal(sc, None, 5e-7, 3, signal_duration_s=1e-6)
        long, _ = experiments.cell_signal(sc, None, 1e-6, 3, signal_duration_s=1e-6)
        assert np.array_equal(short.samples, long.samples[:200])

    def test_noise_shared_across_methods(self):
        sc = parse_config(SMALL).scenario
        _, a = experiments.cell_signal(sc, 0.0, 1e-6, 3, noise_index=4)
        _, b = experiments.cell_signal(sc, 0.0, 1e-6, 3, noise_index=4)
        _, c = experiments.cell_signal(sc, 0.0, 1e-6, 3, noise_index=5)
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)

    def test_realized_snr(self):
        sc = parse_config(SMALL).scenario
        clean, noisy = experiments.cell_signal(sc, -3.0, 1e-5, 0)
        assert experiments.realized_snr_db(clean, noisy) == pytest.approx(-3.0, abs=0.3)

    def test_settings_validation(self):
        with pytest.raises(ValueError):
            EstimatorSettings(truncation=10, psd_len=20)

    def test_truth_matches_nyquist_reference_on_long_record(self):
        sc = parse_config(SMALL).scenario
        s = EstimatorSettings(truncation=64, psd_len=129)
        res = experiments.run_cell(sc, Method.NYQUIST_REF, MulticosetPattern(1, (0,)), s,
                                   snr_db=None, duration_s=2e-3, seed=0)
        assert res.nmse < 0.01 and res.auc > 0.99
