import csv
import io

import numpy as np
import pytest

from cora.core.coalition import random_table, three_agent_table
from cora.core.game_file import CoreSolveC, read_game_file, write_game_file
from cora.errors import ArgumentError


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_write_then_read(tmp_path):
    table = random_table(4, np.random.default_rng(2))
    path = write_game_file(tmp_path / "g.txt", table)
    back = read_game_file(path)
    assert back.n == 4
    assert back.grand_advantage == table.grand_advantage
    assert back.as_dict() == table.as_dict()


def test_comments_and_blank_lines(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("# three agents\n3\n\n-2\n3 1\n# skip\n5 0\n6 5\n")
    table = read_game_file(path)
    assert table.as_dict() == three_agent_table().as_dict()


@pytest.mark.parametrize("body", [
    "3\n",
    "3\n-2\n3\n",
    "3\n-2\n3 x\n",
    "3\n-2\n3 1\n3 2\n",
    "3\n-2\n7 1\n",
    "3\n-2\n0 1\n",
])
def test_malformed_files(tmp_path, body):
    path = tmp_path / "bad.txt"
    path.write_text(body)
    with pytest.raises(ArgumentError):
        read_game_file(path)


def test_missing_file(tmp_path):
    with pytest.raises(ArgumentError):
        read_game_file(tmp_path / "nope.txt")


def test_core_solve_csv(tmp_path):
    path = write_game_file(tmp_path / "g.txt", three_agent_table())
    (out,) = CoreSolveC().execute(str(path))
    rows = _rows(out)
    assert rows[0] == ["field", "index", "value"]
    alloc = [float(r[2]) for r in rows if r[0] == "allocation"]
    np.testing.assert_allclose(alloc, [-11 / 3, 4 / 3, 1 / 3], atol=1e-9)
    eps = next(float(r[2]) for r in rows if r[0] == "epsilon")
    assert eps == pytest.approx(10 / 3)
    status = next(r[2] for r in rows if r[0] == "status")
    assert status == "optimal"
    tight = {int(r[2]) for r in rows if r[0] == "active_constraint"}
    assert tight == {3, 5, 6}


def test_core_solve_least_core(tmp_path):
    path = write_game_file(tmp_path / "g.txt", three_agent_table())
    (out,) = CoreSolveC().execute(str(path), lambda_reg=0.0)
    eps = next(float(r[2]) for r in _rows(out) if r[0] == "epsilon")
    assert eps == pytest.approx(10 / 3, abs=1e-7)
