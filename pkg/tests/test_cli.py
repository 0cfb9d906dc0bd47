import orjson
import pytest

from app.main import main


def run_json(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, orjson.loads(out)


def generate(tmp_path, kind, *extra):
    out = tmp_path / kind
    assert main(["generate", kind, "--out", str(out), "--seed", "5", *extra]) == 0
    return out


class TestGenerate:
    def test_same_seed_same_bytes(self, tmp_path, capsys):
        first = generate(tmp_path / "a", "random-point-cloud", "--n", "20")
        second = generate(tmp_path / "b", "random-point-cloud", "--n", "20")
        capsys.readouterr()
        name = "random-point-cloud.space.json"
        assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_digests_reported(self, tmp_path, capsys):
        code, report = run_json(capsys, ["generate", "integer-path", "--N", "8", "--out", str(tmp_path)])
        assert code == 0
        assert list(report["results"]["generated"]["files"]) == ["integer-path.space.json"]


class TestCommands:
    def test_profile_of_remark46_map(self, tmp_path, capsys):
        out = generate(tmp_path, "remark46", "--N", "64")
        capsys.readouterr()
        code, report = run_json(capsys, ["profile", str(out / "remark46.map.json")])
        assert code == 0
        assert report["results"]["profile"]["trend"] == "unbounded-trend"
        assert report["warnings"]
        assert report["status"]["holds"]

    def test_results_are_deterministic(self, tmp_path, capsys):
        out = generate(tmp_path, "remark46", "--N", "32")
        capsys.readouterr()
        argv = ["lip", str(out / "remark46.map.json")]
        _, first = run_json(capsys, argv)
        _, second = run_json(capsys, argv)
        assert first["results"] == second["results"]
        assert first["inputs"] == second["inputs"]

    def test_shrink(self, tmp_path, capsys):
        out = generate(tmp_path, "colored-interval-cover")
        capsys.readouterr()
        code, report = run_json(capsys, ["shrink", str(out / "colored-interval-cover.cover.json")])
        assert code == 0
        assert report["results"]["validation"]["ok"]
        assert report["results"]["shrink"]["multiplicity"] <= 2

    def test_extend(self, tmp_path, capsys):
        out = generate(tmp_path, "restricted-cone-map", "--n", "30")
        capsys.readouterr()
        code, report = run_json(capsys, ["extend", str(out / "restricted-cone-map.map.json")])
        extension = report["results"]["extension"]
        assert extension["restriction_ok"]
        assert extension["norm_preserving_ok"]
        assert code == report["status"]["exit_code"]

    def test_output_and_csv_files(self, tmp_path, capsys):
        out = generate(tmp_path, "remark46", "--N", "32")
        capsys.readouterr()
        report_path, csv_path = tmp_path / "report.json", tmp_path / "profile.csv"
        argv = ["profile", str(out / "remark46.map.json"), "--output", str(report_path), "--csv", str(csv_path)]
        code, _ = run_json(capsys, argv)
        assert code == 0
        assert orjson.loads(report_path.read_bytes())["command"]["command"] == "profile"
        assert csv_path.read_text().splitlines()[0].startswith("k,")


class TestExitCodes:
    def test_broken_metric(self, tmp_path, capsys):
        path = tmp_path / "broken.space.json"
        path.write_bytes(
            orjson.dumps({"points": ["a", "b", "c"], "matrix": [[0, 1, 5], [1, 0, 1], [5, 1, 0]]})
        )
        code, report = run_json(capsys, ["validate", str(path)])
        assert code == 2
        assert not report["results"]["validation"]["metric_ok"]

    def test_missing_file(self, tmp_path, capsys):
        code, report = run_json(capsys, ["validate", str(tmp_path / "nowhere.json")])
        assert code == 1
        assert report["status"]["exit_code"] == 1

    def test_precondition_failure(self, tmp_path, capsys):
        out = generate(tmp_path, "integer-path", "--N", "4")
        capsys.readouterr()
        code, report = run_json(capsys, ["net", str(out / "integer-path.space.json"), "--eps", "0"])
        assert code == 2
        assert report["error"]["type"]


@pytest.mark.parametrize("tol", ["1e-6", "1e-12"])
def test_tolerance_is_echoed(tmp_path, capsys, tol):
    out = generate(tmp_path, "integer-path", "--N", "4")
    capsys.readouterr()
    _, report = run_json(capsys, ["annulus", str(out / "integer-path.space.json"), "--r", "1", "--tol", tol])
    assert report["command"]["tolerance"] == float(tol)


@pytest.fixture
def instances(tmp_path, capsys):
    path = generate(tmp_path, "integer-path", "--N", "8") / "integer-path.space.json"
    spiked = generate(tmp_path, "remark46", "--N", "32")
    cover = generate(tmp_path, "colored-interval-cover") / "colored-interval-cover.cover.json"
    cone = generate(tmp_path, "restricted-cone-map", "--n", "30") / "restricted-cone-map.map.json"
    capsys.readouterr()
    sqrt = tmp_path / "sqrt.json"
    sqrt.write_bytes(orjson.dumps({"breakpoints": [[0, 0], [1, 1], [4, 2], [16, 4], [64, 8]]}))
    samples = tmp_path / "samples.json"
    samples.write_bytes(orjson.dumps([[1, 1.0], [4, 0.5], [16, 0.25]]))
    improper = tmp_path / "improper.cover.json"
    improper.write_bytes(orjson.dumps({"space": str(path), "sets": {"all": [str(x) for x in range(9)], "U": ["0"]}}))
    one_color = tmp_path / "one-color.cover.json"
    one_color.write_bytes(
        orjson.dumps({"space": str(path), "sets": {"A": [str(x) for x in range(9)]}, "colors": {"A": 1}, "r": 1.0, "C": 20.0})
    )
    bad_samples = tmp_path / "bad-samples.json"
    bad_samples.write_bytes(orjson.dumps([[4, 1.0], [1, 1.0]]))
    return {
        "path": str(path),
        "spiked": str(spiked / "remark46.map.json"),
        "family": str(spiked),
        "cover": str(cover),
        "cone": str(cone),
        "sqrt": str(sqrt),
        "samples": str(samples),
        "improper": str(improper),
        "one_color": str(one_color),
        "bad_samples": str(bad_samples),
        "out": str(tmp_path / "generated"),
    }


SUCCEEDS = {
    "validate": lambda p: ["validate", p["path"], "--eps", "1", "--scale", "1"],
    "net": lambda p: ["net", p["path"], "--eps", "2"],
    "annulus": lambda p: ["annulus", p["path"], "--r", "1", "--s", "4"],
    "lip": lambda p: ["lip", p["spiked"]],
    "fit": lambda p: ["fit", p["spiked"], "--induced"],
    "profile": lambda p: ["profile", p["spiked"]],
    "defect": lambda p: ["defect", p["spiked"], "--sublinear", p["sqrt"], "--R", "4", "16"],
    "partition": lambda p: ["partition", p["cover"]],
    "gap": lambda p: ["gap", p["cover"]],
    "modulus": lambda p: ["modulus", p["family"]],
    "shrink": lambda p: ["shrink", p["cover"]],
    "sublinear-fit": lambda p: ["sublinear-fit", p["samples"]],
    "generate": lambda p: ["generate", "grid-2d", "--side", "3", "--out", p["out"]],
}

MISSING_INPUT = {
    "validate": lambda m: ["validate", m],
    "net": lambda m: ["net", m, "--eps", "1"],
    "annulus": lambda m: ["annulus", m, "--r", "1"],
    "lip": lambda m: ["lip", m],
    "fit": lambda m: ["fit", m],
    "profile": lambda m: ["profile", m],
    "defect": lambda m: ["defect", m, "--sublinear", m, "--R", "1"],
    "partition": lambda m: ["partition", m],
    "gap": lambda m: ["gap", m],
    "extend": lambda m: ["extend", m],
    "modulus": lambda m: ["modulus", m],
    "shrink": lambda m: ["shrink", m],
    "sublinear-fit": lambda m: ["sublinear-fit", m],
}

PRECONDITION_FAILS = {
    "net": lambda p: ["net", p["path"], "--eps", "0"],
    "annulus": lambda p: ["annulus", p["path"], "--r", "-1"],
    "profile": lambda p: ["profile", p["spiked"], "--r", "0"],
    "defect": lambda p: ["defect", p["spiked"], "--sublinear", p["sqrt"], "--R", "-1"],
    "partition": lambda p: ["partition", p["improper"]],
    "extend": lambda p: ["extend", p["cone"], "--r", "0"],
    "shrink": lambda p: ["shrink", p["one_color"]],
    "sublinear-fit": lambda p: ["sublinear-fit", p["bad_samples"]],
    "generate": lambda p: ["generate", "colored-interval-cover", "--N", "10", "--r", "8", "--out", p["out"]],
}


class TestExitCodeContract:
    @pytest.mark.parametrize("command", sorted(SUCCEEDS))
    def test_success_exits_zero(self, instances, capsys, command):
        code, report = run_json(capsys, SUCCEEDS[command](instances))
        assert code == 0
        assert report["status"] == {"holds": True, "exit_code": 0}

    @pytest.mark.parametrize("command", sorted(MISSING_INPUT))
    def test_unreadable_input_exits_one(self, tmp_path, capsys, command):
        code, report = run_json(capsys, MISSING_INPUT[command](str(tmp_path / "nowhere.json")))
        assert code == 1
        assert report["status"]["exit_code"] == 1

    @pytest.mark.parametrize("command", sorted(PRECONDITION_FAILS))
    def test_failed_precondition_exits_two(self, instances, capsys, command):
        code, report = run_json(capsys, PRECONDITION_FAILS[command](instances))
        assert code == 2
        assert report["status"]["exit_code"] == 2

    def test_violated_certificate_exits_three(self, instances, capsys):
        # a negative tolerance demands slack, so the tight covering bound of a net fails
        code, report = run_json(capsys, ["net", instances["path"], "--eps", "0.5", "--tol", "-1"])
        assert code == 3
        assert not report["status"]["holds"]
        assert any(c["name"] == "net-covering" and c["violations"] for c in report["certificates"])

    def test_unknown_generator_kind_is_a_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["generate", "moebius", "--out", str(tmp_path)])
        assert exc.value.code == 2


def test_program_name(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    assert capsys.readouterr().out.startswith("usage: coarse-kit")
