import subprocess
import sys

from conftest import pre_novelty_task
from rapidlearn.cli import main
from rapidlearn.harness import RESULTS_FILE, RESULTS_HEADER
from rapidlearn.symbolic import serialize_problem


def test_plan_builtin(capsys):
    assert main(["plan", "--seed", "3"]) == 0
    ops = capsys.readouterr().out.split()
    assert ops[-1] == "craftpogo_stick" and "extractrubber" in ops


def test_plan_from_problem_file(tmp_path, capsys):
    path = tmp_path / "p.pddl"
    path.write_text(serialize_problem(pre_novelty_task()))
    assert main(["plan", "--problem", str(path)]) == 0
    assert capsys.readouterr().out.split()[-1] == "craftpogo_stick"


def test_plan_exit_codes(tmp_path, capsys):
    path = tmp_path / "p.pddl"
    path.write_text(serialize_problem(pre_novelty_task(trees=0)))
    assert main(["plan", "--problem", str(path)]) == 1
    assert main(["plan", "--budget", "2"]) == 2
    out = capsys.readouterr().out
    assert "no plan" in out and "planner timeout" in out


def test_novelties_list(capsys):
    assert main(["novelties", "list"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 8 and lines[0].startswith("ATB-easy")


def test_run_stats_curve_eval(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--scenario", "SP", "--strategy", "kge-uab,eg", "--seeds", "2",
                 "--eval-episodes", "3", "--max-episodes", "30", "--out", str(out)])
    assert code == 0
    assert (out / RESULTS_FILE).read_text().startswith(RESULTS_HEADER)
    assert "KGE-UAB" in capsys.readouterr().out

    assert main(["stats", "--in", str(out)]) == 0
    text = capsys.readouterr().out
    assert "EG vs KGE-UAB" in text

    assert main(["curve", "--in", str(out), "--out", str(tmp_path / "c.csv")]) == 0
    header = (tmp_path / "c.csv").read_text().splitlines()[0]
    assert header.startswith("timestep,") and "EG" in header

    files = sorted(str(p) for p in (out / "executors" / "SP_EG_0").iterdir())
    assert main(["eval", "--executor", *files, "--scenario", "SP", "--episodes", "2"]) == 0
    assert "1 executor(s) for SP" in capsys.readouterr().out


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "rapidlearn.cli", "novelties", "list"],
                         capture_output=True, text=True, check=True)
    assert "RT-hard" in res.stdout
