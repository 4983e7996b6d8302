"""Smoke test for the Python bindings.

Builds the extension with cargo unless CUTCHOOSE_PY_LIB points at a built
library, then exercises each binding once.
"""

import os
import shutil
import subprocess
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load():
    try:
        import cutchoose_py

        return cutchoose_py
    except ImportError:
        pass
    lib = os.environ.get("CUTCHOOSE_PY_LIB")
    if lib is None:
        subprocess.run(["cargo", "build", "--release", "-p", "cutchoose-py"], cwd=ROOT, check=True)
        lib = ROOT / "target" / "release" / "libcutchoose_py.so"
    where = tempfile.mkdtemp()
    shutil.copy(lib, Path(where) / "cutchoose_py.so")
    sys.path.insert(0, where)
    import cutchoose_py

    return cutchoose_py


def main():
    cc = load()
    print("cutchoose", cc.version())

    uniform = cc.Profile.uniform(2)
    assert uniform.eval(1, "0", "1/4") == Fraction(1, 4)
    assert uniform.mark(2, Fraction(1, 4), Fraction(1, 2)) == Fraction(3, 4)

    profile = cc.Profile.random(3, seed=5)
    assert cc.Profile.from_json(profile.to_json()).to_json() == profile.to_json()

    assert cc.validate(cc.ALGORITHM_1) == []
    bad = cc.validate("agents 1;\ncut 1 in {[0,1]} as x;\nif x < 1/2 {\n  choose 1 from {[0,x]} as c;\n}\n")
    assert len(bad) == 1 and "1/2" in bad[0], bad

    cut_choose = cc.Protocol("cc")
    report = cut_choose.run_honest(uniform)
    assert report["outcome"]["utilities"] == ["1/2", "1/2"], report
    assert report["fairness"]["flags"]["proportional"]

    orr = cc.Protocol("orr", 3, "1/4")
    assert orr.program().is_oblivious()
    assert orr.run_honest(profile)["fairness"]["flags"]["eps_envy_free"]

    sc = cc.Protocol("sc", 3)
    assert sc.run_honest(profile)["fairness"]["flags"]["envy_free"]

    thieves = cc.Protocol("thieves", 2)
    assert thieves.audit_honest(uniform, grid=64)["max_gain"] == "0"

    # A cutter that ignores its valuation against a chooser taking the left piece.
    def cutter(node):
        if node["kind"] == "choose":
            return 0
        assert node["feasible"] == [(0, 1)]
        return Fraction(2, 3)

    def chooser(node):
        return 0

    program = cut_choose.program()
    played = program.run(uniform, [cutter, chooser])
    assert played["outcome"]["utilities"] == ["1/3", "2/3"], played
    assert played["trace"][0]["action"] == "2/3"

    alg1 = cc.Program(cc.ALGORITHM_1)
    assert alg1.count_operations() == (4, 3)
    sol = alg1.solve(cc.Profile.uniform(1), "1/4")
    u = Fraction(sol["certificate"]["utilities"][0])
    assert Fraction(3, 4) <= u < 1, u

    sol = program.solve(uniform, "1/4", audit=True)
    assert Fraction(sol["regret"]["max_gain"]) <= Fraction(1, 4)

    fair = cc.check_fairness([[("0", "1/2")], [("1/2", "1")]], uniform)
    assert fair["flags"]["envy_free"]
    found = cc.ef_search(uniform, 4)
    assert found["envy_free"] and found["cuts"] == ["1/2"]

    try:
        cc.Program("agents 1;\ncut 2 in {[0,1]} as x;\n")
    except ValueError as e:
        assert "out of range" in str(e)
    else:
        raise AssertionError("agent 2 accepted in a one-agent program")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
