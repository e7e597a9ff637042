import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from sgan.cli import dispatch, parse_range
from sgan.config import ConfigError, RunConfig, load_config
from sgan.plot import PALETTE, emit_scatter_svg, scatter_svg
from sgan.synthdata import make_ring_mixture, write_idx

SMALL = {
    "task": "mixture", "I": 2, "steps": 12, "log_every": 4, "batch_real": 8, "batch_gen": 8,
    "eval_samples": 400,
    "generator": [{"in_dim": 2, "out_dim": 4, "batchnorm": True}, {"in_dim": 4, "out_dim": 2, "activation": "tanh"}],
    "discriminator": [{"in_dim": 2, "out_dim": 8, "activation": "leaky_relu"},
                      {"in_dim": 8, "out_dim": 1, "activation": "sigmoid"}],
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({**SMALL, "out_dir": str(tmp_path / "run")}))
    return p


# -- plot ----------------------------------------------------------------------------------------


def fills(svg):
    root = ET.fromstring(svg)
    return {el.get("fill") for el in root.iter() if el.tag.endswith("g") and el.get("fill")}


def test_svg_with_no_samples_is_valid():
    svg = scatter_svg(np.zeros((0, 2)), np.zeros(0, int), make_ring_mixture())
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    assert fills(svg) == set()
    assert svg.count("<line") == 2 + 16  # axes plus two strokes per center cross


def test_svg_one_color_per_generator():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(400, 2))
    lab = np.arange(400) % 8
    assert fills(scatter_svg(pts, lab, None)) == set(PALETTE[:8])


def test_svg_is_byte_identical(tmp_path):
    pts = np.linspace(-1, 1, 20).reshape(10, 2)
    a = emit_scatter_svg(pts, np.arange(10) % 3, make_ring_mixture(), tmp_path / "a.svg")
    b = emit_scatter_svg(pts, np.arange(10) % 3, make_ring_mixture(), tmp_path / "b.svg")
    assert a.read_bytes() == b.read_bytes()
    assert b"\r\n" not in a.read_bytes()


def test_svg_rejects_non_2d():
    with pytest.raises(ValueError, match="2"):
        scatter_svg(np.zeros((5, 3)), np.zeros(5, int))
    with pytest.raises(ValueError):
        scatter_svg(np.zeros((5, 2)), np.zeros(4, int))


# -- config --------------------------------------------------------------------------------------


def test_config_defaults_mirror_mixture_table():
    cfg = RunConfig()
    t = cfg.train
    assert (t.n_generators, t.batch_real, t.lr_d, t.lr_g) == (8, 64, 2e-4, 2e-4)
    assert [s.out_dim for s in t.g_specs] == [16, 2]


def test_config_rejects_broken_chain_before_compute():
    bad = dict(SMALL)
    bad["generator"] = [{"in_dim": 2, "out_dim": 4}, {"in_dim": 5, "out_dim": 2}]
    with pytest.raises(ConfigError, match="layer 0 outputs 4"):
        RunConfig.from_dict(bad)


def test_config_rejects_unknown_keys_and_bad_values():
    with pytest.raises(ConfigError, match="unknown config keys: colour"):
        RunConfig.from_dict({"colour": 1})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"I": 0})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"task": "cifar"})
    with pytest.raises(ConfigError, match="images"):
        RunConfig.from_dict({"task": "mnist"})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"generator": "no_such_arch"})


def test_config_roundtrip(cfg_path):
    cfg = load_config(cfg_path)
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.train == cfg.train


def test_seed_precedence(cfg_path, monkeypatch):
    assert load_config(cfg_path).seed == 0
    monkeypatch.setenv("SGAN_SEED", "17")
    assert load_config(cfg_path).seed == 17
    assert load_config(cfg_path, seed=3).seed == 3
    monkeypatch.setenv("SGAN_SEED", "x")
    with pytest.raises(ConfigError):
        load_config(cfg_path)


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(ConfigError, match="malformed"):
        load_config(p)


# -- dispatch ------------------------------------------------------------------------------------


def test_parse_range():
    assert parse_range("4") == [4]
    assert parse_range("2:5") == [2, 3, 4, 5]
    for bad in ("0:3", "5:2", "a"):
        with pytest.raises(ValueError):
            parse_range(bad)


def test_duality_pm1_closed_form(tmp_path):
    assert dispatch(["duality", "--family", "pm1", "--I", "1:64", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "duality.csv").read_text().splitlines()
    assert lines[0] == "I,w_star,q_star,gap,delta_worst,bound,holds"
    rows = [l.split(",") for l in lines[1:]]
    assert len(rows) == 64
    for r in rows:
        I, gap = int(r[0]), float(r[3])
        expect = 1 / (2 * I * I) if I % 2 else 0.0
        assert abs(gap - expect) < 1e-12 and r[6] == "true"


def test_duality_random_family_is_seeded(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert dispatch(["duality", "--family", "random", "--I", "1:5", "--seed", "3", "--out", str(a)]) == 0
    assert dispatch(["duality", "--family", "random", "--I", "1:5", "--seed", "3", "--out", str(b)]) == 0
    assert (a / "duality.csv").read_bytes() == (b / "duality.csv").read_bytes()


def test_missing_config_names_path(tmp_path, capsys):
    assert dispatch(["train", "--config", str(tmp_path / "missing.json")]) == 1
    err = capsys.readouterr().err
    assert "missing.json" in err and err.count("\n") == 1


def test_unknown_flag_and_subcommand(capsys):
    assert dispatch(["duality", "--bogus"]) == 1
    assert dispatch(["frobnicate"]) == 1
    assert dispatch([]) == 1


def test_bad_suite(tmp_path):
    assert dispatch(["verify", "--suite", "nope", "--out", str(tmp_path)]) == 1


def test_train_eval_gap_plot(cfg_path, tmp_path):
    run = tmp_path / "run"
    assert dispatch(["train", "--config", str(cfg_path)]) == 0
    for name in ("config.json", "metrics.csv", "checkpoint.json"):
        assert (run / name).is_file()
    assert (run / "metrics.csv").read_text().splitlines()[0] == "step,objective,d_loss,g_loss_mean"
    assert dispatch(["eval", "--config", str(cfg_path)]) == 0
    assert (run / "eval.csv").read_text().startswith("modes_covered,hq_fraction,entropy")
    assert dispatch(["gap", "--config", str(cfg_path), "--K", "3"]) == 0
    assert (run / "gap.csv").is_file()
    assert dispatch(["plot", "--config", str(cfg_path), "--n", "50"]) == 0
    ET.parse(run / "samples.svg")


def test_train_reproduces_metrics(cfg_path, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert dispatch(["train", "--config", str(cfg_path), "--out", str(a), "--seed", "5"]) == 0
    assert dispatch(["train", "--config", str(cfg_path), "--out", str(b), "--seed", "5"]) == 0
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    assert json.loads((a / "config.json").read_text())["seed"] == 5


def test_eval_without_checkpoint(cfg_path, capsys):
    assert dispatch(["eval", "--config", str(cfg_path)]) == 1
    assert "checkpoint" in capsys.readouterr().err


def test_numeric_failure_exit_code(tmp_path):
    cfg = dict(SMALL, lr_d=1e308, lr_g=1e308, out_dir=str(tmp_path / "r"))
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    assert dispatch(["train", "--config", str(p)]) == 2


def test_mnist_task_from_idx(tmp_path):
    rng = np.random.default_rng(0)
    write_idx(rng.integers(0, 256, (20, 28, 28)).astype(np.uint8), tmp_path / "img.idx")
    cfg = {"task": "mnist", "I": 2, "steps": 2, "log_every": 1, "batch_real": 4, "batch_gen": 4,
           "images": str(tmp_path / "img.idx"), "subset": 10, "out_dir": str(tmp_path / "run")}
    p = tmp_path / "m.json"
    p.write_text(json.dumps(cfg))
    assert dispatch(["train", "--config", str(p)]) == 0
    assert dispatch(["eval", "--config", str(p)]) == 1


def test_verify_single_suite(tmp_path):
    assert dispatch(["verify", "--suite", "caratheodory", "--seed", "7", "--out", str(tmp_path)]) == 0
    summary = (tmp_path / "verify_summary.csv").read_text().splitlines()
    assert summary[1].startswith("caratheodory,200,0,")
