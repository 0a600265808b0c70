import csv
import io
import json
import subprocess
import sys

import pytest

from sampdisc.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, main
from sampdisc.entropy import entropy_formula
from sampdisc.pointsets import PointSet


def run(tmp_path, *args, name="out.txt"):
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out)])
    return code, (out.read_text() if out.exists() else None)


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


# certify -------------------------------------------------------------------

def test_certify_equispaced_exact(tmp_path):
    code, text = run(tmp_path, "certify", "--set", "n=8", "--set", "m=17")
    assert code == EXIT_PASS
    rep = json.loads(text)
    assert rep["pass"] is True
    assert abs(rep["lower"] - 1) <= 1e-10 and abs(rep["upper"] - 1) <= 1e-10
    assert rep["paper_ref"]


def test_certify_too_few_points_fails(tmp_path):
    code, text = run(tmp_path, "certify", "--set", "n=8", "--set", "m=16")
    assert code == EXIT_FAIL
    assert json.loads(text)["pass"] is False


def test_certify_deterministic(tmp_path):
    args = ["certify", "--set", "n=3", "--set", "points=uniform", "--set", "m=40", "--seed", "7"]
    _, a = run(tmp_path, *args, name="a")
    _, b = run(tmp_path, *args, name="b")
    assert a == b


def test_certify_general_q_deterministic(tmp_path):
    args = ["certify", "--set", "n=2", "--set", "q=1", "--set", "m=12", "--seed", "3", "--set", "trials=32",
            "--set", "starts=4", "--set", "optimizer_steps=20"]
    ca, a = run(tmp_path, *args, name="a")
    cb, b = run(tmp_path, *args, name="b")
    assert a == b and ca == cb
    rep = json.loads(a)
    assert rep["lower"] <= rep["upper"]


def test_certify_from_file(tmp_path):
    p = tmp_path / "pts.txt"
    p.write_text("1 5\n" + "\n".join(str(2 * 3.141592653589793 * k / 5) for k in range(5)) + "\n")
    code, text = run(tmp_path, "certify", "--set", "n=2", "--set", f"points={p}")
    assert code == EXIT_PASS


# search --------------------------------------------------------------------

def search_args(m, pts):
    return ["search", "--set", "n=3", "--set", f"m={m}", "--seed", "11", "--set", "restarts=5",
            "--set", f"pointset_out={pts}"]


def test_search_pass_and_pointset_file(tmp_path):
    pts = tmp_path / "found.txt"
    code, text = run(tmp_path, *search_args(60, pts))
    assert code == EXIT_PASS
    assert json.loads(text)["pass"] is True
    header = pts.read_text().splitlines()[0].split()
    assert header == ["1", "60"]
    xi = PointSet.load(pts)
    assert xi.m == 60 and xi.dim == 1
    # the written set certifies on its own
    code2, _ = run(tmp_path, "certify", "--set", "n=3", "--set", f"points={pts}", name="c")
    assert code2 == EXIT_PASS


def test_search_deterministic(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    _, ra = run(tmp_path, *search_args(30, a), name="ra")
    _, rb = run(tmp_path, *search_args(30, b), name="rb")
    assert a.read_text() == b.read_text()
    ja, jb = json.loads(ra), json.loads(rb)
    ja.pop("pointset_out"), jb.pop("pointset_out")
    assert ja == jb


def test_search_fails_below_dimension(tmp_path):
    code, text = run(tmp_path, *search_args(6, tmp_path / "p.txt"))
    assert code == EXIT_FAIL
    assert json.loads(text)["pass"] is False


# entropy -------------------------------------------------------------------

@pytest.fixture(scope="module")
def entropy_table(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("ent")
    code, text = run(tmp, "entropy", "--set", "space=file", "--set", f"freqs={_const_file(tmp)}",
                     "--set", "q=1", "--set", "field=real", "--set", "surrogate_size=4097", "--seed", "0",
                     "--set", "kmax=8", "--grid-m", "1")
    assert code == EXIT_PASS
    return rows(text)


def _const_file(tmp):
    p = tmp / "freqs.txt"
    p.write_text("0\n")
    return p


def test_entropy_matches_interval_oracle(entropy_table):
    for r in entropy_table:
        k = int(r["k"])
        lo, up = float(r["lower"]), float(r["upper"])
        assert lo <= 2.0 ** -k <= up
        assert up <= 4 * lo


def test_entropy_columns_monotone(entropy_table):
    ks = [int(r["k"]) for r in entropy_table]
    ups = [float(r["upper"]) for r in entropy_table]
    assert all(a < b for a, b in zip(ks, ks[1:]))
    assert all(a >= b for a, b in zip(ups, ups[1:]))


def test_entropy_definition_column(entropy_table):
    assert {r["definition"] for r in entropy_table} == {"centers_in_ball;free_centers_within_factor_2"}


def test_entropy_evaluator_columns(entropy_table):
    for r in entropy_table:
        B = max(1.0, float(r["fitted_B"]))
        expect = entropy_formula(float(r["upper"]), 1, B, 1.0)
        assert float(r["log_cover_bound_at_upper"]) == pytest.approx(expect, rel=1e-12)


# sandwich ------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.parametrize("refine", [0, 1])
def test_sandwich_tiny_space(tmp_path, refine):
    code, text = run(tmp_path, "sandwich", "--set", "n=1", "--set", "q=1", "--seed", "0",
                     "--grid-m", "32", "--grid-refine", str(refine))
    rep = json.loads(text)
    assert rep["violations"] == 0
    assert rep["partition_ok"] is True
    for key in ("a", "j0", "J", "m_star"):
        assert key in rep
    assert rep["conclusion_holds"] == rep["premise_holds"]
    assert code == EXIT_PASS


# concentration -------------------------------------------------------------

def test_concentration_sweep(tmp_path):
    code, text = run(tmp_path, "concentration", "--seed", "0", "--set", "trials=20000")
    assert code == EXIT_PASS
    table = rows(text)
    assert list(table[0]) == ["m", "eta", "M", "family", "empirical", "bound", "pass"]
    assert all(r["pass"] == "true" for r in table)
    union = [r for r in table if r["family"].startswith("union_bound")]
    assert union and union[0]["m"] == "355"
    _, again = run(tmp_path, "concentration", "--seed", "0", "--set", "trials=20000", name="again")
    assert again == text


# configuration -------------------------------------------------------------

def test_unknown_key_is_config_error(tmp_path):
    code, _ = run(tmp_path, "certify", "--set", "n=8", "--set", "bogus=1")
    assert code == EXIT_CONFIG


def test_missing_seed_is_config_error(tmp_path):
    code, _ = run(tmp_path, "search", "--set", "n=2", "--set", "m=20")
    assert code == EXIT_CONFIG


@pytest.mark.parametrize("bad", ["q=0.5", "target=2,1", "n=abc", "m=0"])
def test_bad_values_are_config_errors(tmp_path, bad):
    code, _ = run(tmp_path, "certify", "--set", "n=3", "--set", bad)
    assert code == EXIT_CONFIG


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# exact rule\nn = 8\nm = 16\n")
    code, _ = run(tmp_path, "certify", "--config", str(cfg))
    assert code == EXIT_FAIL
    code, _ = run(tmp_path, "certify", "--config", str(cfg), "--set", "m=17")
    assert code == EXIT_PASS


def test_unknown_subcommand_exit_code():
    assert main(["nope"]) == EXIT_CONFIG


def test_console_entry_help():
    res = subprocess.run([sys.executable, "-m", "sampdisc.cli", "entropy", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "fitted_B" in res.stdout and "--grid-refine" in res.stdout
