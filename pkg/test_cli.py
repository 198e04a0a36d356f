import csv
import json
import math
import subprocess
import sys
import textwrap
from fractions import Fraction
from pathlib import Path

import pytest

from cli import (
    EXIT_BUDGET,
    EXIT_INVALID,
    EXIT_OK,
    RunSettings,
    load_config,
    main,
    run,
    to_cell,
    validate,
)
from errors import ConfigError, InvalidAutomorphismError

CONFIG_DIR = Path(__file__).parent / "config"

PHI = """automorphisms:
  phi:
    images: [b, c, ab]
    inverse: {inverse}
"""


def write_config(tmp_path, text, name="experiment.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text).lstrip(), encoding="utf-8")
    return path


def read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def trivial_width(tmp_path, powers="[1, 2]"):
    return write_config(tmp_path, f"""
        name: trivial
        rank: 3
        experiment: width
        parameters:
          classes: [a]
          powers: {powers}
        """)


def test_width_with_trivial_gamma_is_zero(tmp_path):
    summary = run(load_config(trivial_width(tmp_path)), tmp_path / "out")
    assert not summary.exceeded
    rows = read_rows(tmp_path / "out" / "trivial.csv")
    assert [(r["power"], r["geodesic_length"], r["diameter"]) for r in rows] == [("1", "2", "0"), ("2", "4", "0")]
    document = json.loads((tmp_path / "out" / "trivial.json").read_text(encoding="utf-8"))
    assert document["rows"] == rows
    assert document["summary"]["max_diameter"] == 0


def test_fold_between_equal_graphs_is_empty(tmp_path):
    path = write_config(tmp_path, """
        name: still
        rank: 3
        graphs:
          unit:
            rose: ["1/3", "1/3", "1/3"]
        experiment: fold
        parameters:
          source: unit
          target: unit
        """)
    summary = run(load_config(path), tmp_path)
    assert summary.summary["steps"] == 0
    assert summary.summary["length"] == 0
    assert summary.summary["distance"] == 0
    assert len(read_rows(tmp_path / "still.csv")) == 1


def test_lift_distances_agree(tmp_path):
    path = write_config(tmp_path, """
        name: lift
        rank: 3
        automorphisms:
          sigma:
            images: [b, c, a]
            inverse: [c, a, b]
        gamma: [sigma]
        experiment: lift
        parameters:
          index_two: 6
          samples: 3
        """)
    summary = run(load_config(path), tmp_path, seed=5)
    rows = read_rows(tmp_path / "lift.csv")
    assert len(rows) == 3
    for row in rows:
        assert abs(float(row["distance"]) - float(row["lifted_distance"])) <= 1e-9
    assert summary.summary["subgroup_index"] == 2
    assert summary.summary["subgroup_rank"] == 5
    assert summary.summary["lifted_generators"][0]["power"] == 1


def test_wrong_inverse_names_the_generator(tmp_path):
    path = write_config(tmp_path, "name: bad\nrank: 3\nexperiment: width\ngamma: [phi]\n"
                        + PHI.format(inverse="[a, a, b]"))
    config = load_config(path)
    errors = [d for d in validate(config) if d.level == "error"]
    assert len(errors) == 1
    assert errors[0].generator == "a"
    assert "phi" in errors[0].message
    assert errors[0].line == 7
    with pytest.raises(InvalidAutomorphismError):
        run(config, tmp_path)
    assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == EXIT_INVALID


def test_validate_well_formed_and_periodic():
    assert validate(load_config(CONFIG_DIR / "phi_width.yaml")) == []
    assert validate(load_config(CONFIG_DIR / "trivial_width.yaml")) == []
    warnings = validate(load_config(CONFIG_DIR / "sigma_lift.yaml"))
    assert warnings and all(d.level == "warning" for d in warnings)
    assert "periodic class found" in warnings[0].message
    contrast = validate(load_config(CONFIG_DIR / "contrast_width.yaml"))
    assert [d.level for d in contrast] == ["warning"]


def test_shipped_configs_load():
    for path in sorted(CONFIG_DIR.glob("*.yaml")):
        config = load_config(path)
        assert not [d for d in validate(config) if d.level == "error"], path


def test_schema_errors_carry_position(tmp_path):
    path = write_config(tmp_path, "name: t\nrank: three\nexperiment: width\n")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert (info.value.line, info.value.column) == (2, 7)

    path = write_config(tmp_path, "name: t\nrank: 3\nexperiment: width\nparameters:\n  radius: 2\n  radiuss: 3\n")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.line == 6

    path = write_config(tmp_path, "name: t\nrank: [3\n")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.line is not None


def test_bad_words_and_references(tmp_path):
    path = write_config(tmp_path, """
        name: t
        rank: 2
        experiment: width
        gamma: [missing]
        parameters:
          classes: [a, ac]
        """)
    diagnostics = validate(load_config(path))
    assert [(d.level, d.line) for d in diagnostics] == [("error", 4), ("error", 6)]


def test_exit_codes(tmp_path):
    assert main(["run", "--config", str(trivial_width(tmp_path)), "--out", str(tmp_path / "ok")]) == EXIT_OK
    capped = trivial_width(tmp_path, powers="[6]")
    assert main(["run", "--config", str(capped), "--out", str(tmp_path / "cap"), "--cap", "50"]) == EXIT_BUDGET
    assert (tmp_path / "cap" / "trivial.csv").exists()
    broken = write_config(tmp_path, "name: [oops\n", "broken.yaml")
    assert main(["validate", "--config", str(broken)]) == EXIT_INVALID
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == EXIT_INVALID
    no_subgroup = write_config(tmp_path, "name: q\nrank: 3\nexperiment: quasiconvexity\n", "q.yaml")
    assert main(["run", "--config", str(no_subgroup), "--out", str(tmp_path)]) == EXIT_INVALID
    assert main(["validate", "--config", str(CONFIG_DIR / "phi_width.yaml")]) == EXIT_OK


def test_reports_are_byte_identical(tmp_path):
    path = write_config(tmp_path, """
        name: pairs
        rank: 3
        experiment: distance
        parameters:
          samples: 3
        """)
    config = load_config(path)
    run(config, tmp_path / "first", seed=17)
    run(config, tmp_path / "second", seed=17)
    for suffix in ("csv", "json"):
        first = (tmp_path / "first" / f"pairs.{suffix}").read_bytes()
        assert first == (tmp_path / "second" / f"pairs.{suffix}").read_bytes()
    rows = read_rows(tmp_path / "first" / "pairs.csv")
    assert len(rows) == 6
    document = json.loads((tmp_path / "first" / "pairs.json").read_text(encoding="utf-8"))
    assert document["seed"] == 17
    assert document["summary"]["triangle_violations"] == 0


def test_pl_ball_report(tmp_path):
    path = write_config(tmp_path, "name: pl\nrank: 3\nexperiment: pl-ball\nparameters:\n  length_bound: 1\n")
    summary = run(load_config(path), tmp_path)
    assert summary.summary["vertices"] == 3
    assert summary.summary["edges"] == 3
    assert summary.summary["connected"] is True
    rows = read_rows(tmp_path / "pl.csv")
    assert [(r["class"], r["degree"], r["distance"]) for r in rows] == [("a", "2", "0"), ("b", "2", "1"), ("c", "2", "1")]
    assert (tmp_path / "pl_adjacency.txt").read_text(encoding="utf-8").startswith("#")


def test_hyperbolicity_of_tree_ball(tmp_path):
    path = write_config(tmp_path, "name: tree\nrank: 3\nexperiment: hyperbolicity\nparameters:\n  radius: 2\n")
    summary = run(load_config(path), tmp_path)
    assert summary.summary["vertices"] == 37
    assert summary.summary["delta"] == 0
    assert summary.summary["exhaustive"] is True
    assert summary.summary["properness"] == [[0, 0, 0, 1], [1, 1, 1, 6], [2, 2, 2, 30]]


def test_hyperbolicity_of_edge_list(tmp_path):
    (tmp_path / "ring.txt").write_text("".join(f"v{i} v{(i + 1) % 8}\n" for i in range(8)), encoding="utf-8")
    path = write_config(tmp_path, """
        name: ring
        rank: 3
        experiment: hyperbolicity
        parameters:
          space: edge-list
          edge_list: ring.txt
        """)
    summary = run(load_config(path), tmp_path)
    assert summary.summary["vertices"] == 8
    assert summary.summary["delta"] > 0


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("FREEGEO_SEED", "11")
    monkeypatch.setenv("FREEGEO_BFS_CAP", "1000")
    settings = RunSettings.from_env()
    assert (settings.seed, settings.cap, settings.threads) == (11, 1000, 1)
    monkeypatch.setenv("FREEGEO_THREADS", "many")
    with pytest.raises(ConfigError):
        RunSettings.from_env()
    with pytest.raises(ConfigError):
        RunSettings(threads=0).check()


def test_cell_formatting():
    assert to_cell(1 / 3) == "0.333333333333"
    assert to_cell(Fraction(2, 3)) == "0.666666666667"
    assert to_cell(math.log(2)) == "0.69314718056"
    assert to_cell(math.inf) == "inf"
    assert to_cell(None) == ""
    assert to_cell(True) == "true"
    assert to_cell(7) == "7"


def test_fold_random_pairs(tmp_path):
    path = write_config(tmp_path, """
        name: pairs
        rank: 3
        experiment: fold
        parameters:
          samples: 3
          dt: 0.0625
          classes: [a, ab]
        """)
    summary = run(load_config(path), tmp_path, seed=3)
    rows = read_rows(tmp_path / "pairs.csv")
    assert [row["pair"] for row in rows] == ["0", "1", "2"]
    for row in rows:
        assert float(row["telescoping_gap"]) <= 2 * 0.0625
    assert summary.summary["pairs"] == 3
    assert summary.summary["legal_flare_violations"] == 0

    lonely = write_config(tmp_path, "name: q\nrank: 3\nexperiment: fold\nparameters:\n  samples: 0\n", "q.yaml")
    with pytest.raises(ConfigError):
        run(load_config(lonely), tmp_path)


def test_importing_cli_leaves_logging_alone():
    script = "import logging, cli; print(len(logging.getLogger().handlers))"
    result = subprocess.run([sys.executable, "-c", script], cwd=Path(__file__).parent,
                            capture_output=True, text=True, check=True)
    assert result.stdout.strip() == "0"
