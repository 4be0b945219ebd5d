import json

import pytest

from copfl.config import ConfigError, apply_overrides, from_dict, load_config, load_raw, parse_override


def test_minimal_config_defaults():
    cfg = from_dict({"algorithm": "co_pfl", "seed": 3})
    assert (cfg.local_iters, cfg.batch_size, cfg.beta1, cfg.beta2, cfg.epsilon) == (1, 32, 0.9, 0.999, 1e-8)
    assert cfg.cowa.enabled and cfg.cowa.use_grad and cfg.cowa.use_data
    assert not cfg.mamo.literal_decay and not cfg.renorm_per_coord


def test_gamma_out_of_range():
    with pytest.raises(ConfigError, match=r"gamma ∈ \[0,1\]") as info:
        from_dict({"algorithm": "co_pfl", "seed": 0, "gamma": 1.5})
    assert info.value.field == "gamma"


def test_unknown_key_suggests_fix():
    with pytest.raises(ConfigError, match="did you mean 'gamma'"):
        from_dict({"algorithm": "co_pfl", "seed": 0, "gama": 0.5})
    with pytest.raises(ConfigError, match="did you mean 'cowa.use_grad'"):
        from_dict({"algorithm": "co_pfl", "seed": 0, "cowa": {"use_gard": True}})


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"lr": 0}, "lr"), ({"beta1": 1.0}, "beta1"), ({"rounds": 0}, "rounds"),
        ({"clients": 0}, "clients"), ({"local_iters": 0}, "local_iters"), ({"p": -0.1}, "p"),
        ({"algorithm": "fedprox"}, "algorithm"), ({"seed": "zero"}, "seed"),
        ({"cowa": {"enabled": "yes"}}, "cowa.enabled"), ({"data": {"mean_rank": 50}}, "data.mean_rank"),
    ],
)
def test_validation_names_field(patch, field):
    raw = {"algorithm": "co_pfl", "seed": 0, **patch}
    with pytest.raises(ConfigError) as info:
        from_dict(raw)
    assert info.value.field == field


def test_missing_required():
    with pytest.raises(ConfigError, match="seed"):
        from_dict({"algorithm": "co_pfl"})


def test_parse_error_has_line_info(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "algorithm": "co_pfl",\n  "seed": ,\n}\n', encoding="utf-8")
    with pytest.raises(ConfigError, match=r"bad.json:3:\d+"):
        load_config(path)


def test_overrides_and_roundtrip(tmp_path):
    raw = apply_overrides({"algorithm": "co_pfl", "seed": 0},
                          ["seed=7", "cowa.use_grad=false", "model.kind=softmax_regression", ("p", 0.1)])
    cfg = from_dict(raw)
    assert cfg.seed == 7 and cfg.cowa.use_grad is False and cfg.model.kind == "softmax_regression"
    assert cfg.p == 0.1
    path = tmp_path / "resolved.json"
    path.write_text(cfg.to_json(), encoding="utf-8")
    again = load_config(path)
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_parse_override():
    assert parse_override("lr=0.5") == ("lr", 0.5)
    assert parse_override("model.kind=mlp2") == ("model.kind", "mlp2")
    with pytest.raises(ConfigError):
        parse_override("lr")


def test_hash_changes_with_content():
    a = from_dict({"algorithm": "co_pfl", "seed": 0})
    assert a.config_hash() != a.replace(seed=1).config_hash()


def test_reference_config_loads():
    raw = load_raw("configs/reference.json")
    cfg = from_dict(raw)
    assert json.loads(cfg.to_json())["data"]["train_bound"] == 50
