import json

import numpy as np

from mml.report import BoundReport, csv_body, render_reports_csv, render_reports_json


def test_from_check_derives_margin_and_holds():
    rep = BoundReport.from_check("x", 1.0, 0.4, ci=0.1)
    assert rep.margin == 0.6
    assert rep.holds
    rep2 = BoundReport.from_check("x", 0.4, 0.6)
    assert not rep2.holds


def test_csv_layout_and_formatting():
    rep = BoundReport.from_check(
        "check", np.float64(0.5), 0.25, ci=0.01,
        metadata={"chain_id": "two-state", "J": (0, 2), "n": 3, "flag": True})
    text = render_reports_csv([rep], header_meta={"seed": 7})
    lines = text.splitlines()
    assert lines[0] == "# seed=7"
    assert lines[1] == "name,chain_id,params,bound,value,ci,margin,holds,vacuous"
    assert lines[2] == "check,two-state,J=0|2;flag=true;n=3,0.5,0.25,0.01,0.25,true,false"


def test_numpy_scalars_render_as_plain_floats():
    rep = BoundReport.from_check("n", np.float64(1.5), np.float64(0.5),
                                 metadata={"v": np.float64(2.0)})
    row = rep.csv_row()
    assert "np.float64" not in row
    assert "v=2.0" in row


def test_csv_body_strips_comments():
    text = "# a=1\nh1,h2\n1,2\n"
    assert csv_body(text) == "h1,h2\n1,2\n"


def test_json_rendering_round_trips():
    rep = BoundReport.from_check("x", 1.0, 0.5, metadata={"J": (1, 2)})
    payload = json.loads(render_reports_json([rep], {"seed": 3}))
    assert payload["meta"]["seed"] == 3
    assert payload["reports"][0]["metadata"]["J"] == [1, 2]
    assert payload["reports"][0]["holds"] is True
