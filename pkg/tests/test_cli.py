import json
import subprocess
import sys

import numpy as np
import pytest

from dmtsim import cli

FAST = ["--set", "fft_len=128", "--set", "frame_symbols=32", "--set", "cp_samples=16",
        "--set", "frames_per_point=2", "--set", "fiber.L=0", "--set", "net_rate=28e9"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestFormatting:
    @pytest.mark.parametrize("v, s", [(1, "1"), (0.1 + 0.2, "0.3"), (1 / 3, "0.333333333"), (2.5e-7, "2.5e-07"),
                                      (float("inf"), "inf"), (np.int64(7), "7"), (True, "true"), ("DSB", "DSB")])
    def test_fmt(self, v, s):
        assert cli.fmt(v) == s

    def test_parse_list(self):
        assert cli.parse_list("14:17:1") == [14, 15, 16, 17]
        assert cli.parse_list("1,2.5") == [1, 2.5]
        with pytest.raises(cli.ConfigError):
            cli.parse_list("1:2:0")


class TestExitCodes:
    def test_unknown_key(self, capsys):
        code, _, err = run(capsys, "run", "--set", "bogus=1")
        assert code == cli.EXIT_CONFIG and "bogus" in err

    def test_unknown_key_in_file(self, capsys, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"fiber": {"length": 3}}')
        assert run(capsys, "calibrate", "--config", str(p))[0] == 2

    def test_missing_file(self, capsys, tmp_path):
        assert run(capsys, "calibrate", "--config", str(tmp_path / "nope.json"))[0] == 2

    def test_bad_set_syntax(self, capsys):
        assert run(capsys, "run", "--set", "fft_len")[0] == 2

    def test_infeasible(self, capsys):
        assert run(capsys, "calibrate", *FAST, "--set", "net_rate=400e9")[0] == cli.EXIT_INFEASIBLE

    def test_unreachable(self, capsys):
        code, out, _ = run(capsys, "required-osnr", *FAST, "--grid", "10,12", "--target", "1e-12")
        assert code == cli.EXIT_UNREACHABLE
        assert json.loads(out)["reachable"] is False

    def test_module_entry_point(self):
        p = subprocess.run([sys.executable, "-m", "dmtsim.cli", "run", "--set", "bogus=1"], capture_output=True)
        assert p.returncode == 2


class TestOutputs:
    def test_osnr_curve_header_and_rows(self, capsys):
        code, out, _ = run(capsys, "osnr-curve", *FAST, "--grid", "20,30")
        lines = out.splitlines()
        assert code == 0
        assert lines[0] == "osnr_db,ber,bit_errors,bits_counted,fft_len,cp_samples,n_ts,sideband,distance_km,seed"
        assert [l.split(",")[0] for l in lines[1:]] == ["20", "30"]
        assert lines[1].split(",")[4:9] == ["128", "16", "5", "DSB", "0"]

    @pytest.mark.parametrize("cmd, param, values", [("sweep-cp", "cp_samples", "4,8"), ("sweep-ts", "n_ts", "1,2"),
                                                    ("sweep-detune", "detune_ghz", "0,10"),
                                                    ("sweep-power", "launch_power_dbm", "0,5")])
    def test_sweep_headers(self, capsys, cmd, param, values):
        code, out, _ = run(capsys, cmd, *FAST, "--values", values)
        assert code == 0
        assert out.splitlines()[0] == f"{param},ber,bit_errors,bits_counted,seed"
        assert len(out.splitlines()) == 3

    def test_snr_spectrum(self, capsys):
        code, out, _ = run(capsys, "snr-spectrum", *FAST)
        lines = out.splitlines()
        assert code == 0 and lines[0] == "subcarrier,freq_ghz,snr_db" and len(lines) == 61

    def test_calibrate_json(self, capsys):
        code, out, _ = run(capsys, "calibrate", *FAST)
        doc = json.loads(out)
        assert code == 0 and sum(doc["bits"]) == doc["target_bits"] == doc["bits_per_symbol"]

    def test_required_osnr_json(self, capsys):
        code, out, _ = run(capsys, "required-osnr", *FAST, "--grid", "14,40")
        doc = json.loads(out)
        assert code == 0 and doc["reachable"] and 14 <= doc["required_osnr_db"] <= 40

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (a, b):
            assert cli.main(["osnr-curve", *FAST, "--grid", "18,24", "--seed", "5", "--out", str(p)]) == 0
        assert a.read_bytes() == b.read_bytes()
        meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
        assert meta["seed"] == 5 and meta["config"]["fft_len"] == 128

    def test_seed_flag_changes_results(self, capsys):
        _, a, _ = run(capsys, "run", *FAST, "--set", "noise.target_osnr_db=20", "--seed", "1")
        _, b, _ = run(capsys, "run", *FAST, "--set", "noise.target_osnr_db=20", "--seed", "2")
        ra, rb = a.splitlines()[1].split(","), b.splitlines()[1].split(",")
        assert ra[3] == rb[3]
        assert ra[2] != rb[2]

    def test_waveform_export(self, tmp_path, capsys):
        w = tmp_path / "w.bin"
        assert run(capsys, "run", *FAST, "--waveform", str(w))[0] == 0
        x = np.fromfile(w, "<f8")
        meta = json.loads((tmp_path / "w.bin.json").read_text())
        assert x.size == 32 * (128 + 16)
        assert meta["layout"]["fft_len"] == 128
