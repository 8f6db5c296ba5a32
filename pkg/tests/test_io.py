import json

import pandas as pd
import pytest

from dynamics import EpidemicParams, integrate, uniform_state
from graphs import Graph, named_graph
from utils.csv_io import trajectory_frame, write_metadata, write_rows_csv, write_trajectory_csv
from utils.edgelist import format_edgelist, parse_edgelist, read_edgelist, write_edgelist


def test_parse_edgelist_with_comments():
    g = parse_edgelist("# triangle plus a leaf\nN 4\n0 1\n1 2  # inner\n\n2 0\n2 3\n")
    assert g.n == 4
    assert g.link_count == 4
    assert g.degrees.tolist() == [2, 2, 3, 1]


def test_parse_edgelist_isolated_nodes():
    g = parse_edgelist("N 3\n")
    assert g == Graph.empty(3)


@pytest.mark.parametrize(
    "text, message",
    [
        ("", "no 'N <n>' header"),
        ("0 1\n", "line 1: expected header"),
        ("N four\n", "line 1: node count"),
        ("N 3\n0 1\n1\n", "line 3: expected 'i j'"),
        ("N 3\n0 x\n", "line 2: node indices"),
        ("N 3\n# c\n0 3\n", "line 3: link \\(0, 3\\) outside"),
        ("N 3\n1 1\n", "line 2: self-loop"),
    ],
)
def test_parse_edgelist_errors(text, message):
    with pytest.raises(ValueError, match=message):
        parse_edgelist(text)


def test_edgelist_file_format(tmp_path):
    g = named_graph("star", 4)
    assert format_edgelist(g) == "N 4\n0 1\n0 2\n0 3\n"
    path = write_edgelist(g, tmp_path / "star.txt")
    assert read_edgelist(path) == g


def test_trajectory_csv(tmp_path):
    g = named_graph("path", 3)
    traj = integrate(g, EpidemicParams(beta=0.5), uniform_state(3), 0.05)
    df = trajectory_frame(traj)
    assert list(df.columns) == ["t", "y", "v_0", "v_1", "v_2"]
    assert len(df) == 6
    path = write_trajectory_csv(traj, tmp_path / "sub" / "trajectory.csv")
    back = pd.read_csv(path)
    # 17 significant digits read back exactly
    assert (back["y"].to_numpy() == traj.prevalence).all()

    lean = integrate(g, EpidemicParams(beta=0.5), uniform_state(3), 0.05, keep_states=False)
    with pytest.raises(ValueError):
        trajectory_frame(lean)


def test_rows_and_metadata(tmp_path):
    path = write_rows_csv([{"b": 2, "a": 1}], ("a", "b"), tmp_path / "rows.csv")
    assert path.read_text().splitlines() == ["a,b", "1,2"]
    meta = write_metadata({"z": 1, "a": tmp_path}, tmp_path / "metadata.json")
    text = meta.read_text()
    assert text.index('"a"') < text.index('"z"')
    assert json.loads(text)["a"] == str(tmp_path)
