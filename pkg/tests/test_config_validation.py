from pathlib import Path

import pytest
from pydantic import ValidationError

from utils.config_validation import (RunConfig, load_config_file, merge, parse_overrides,
                                     validate_config)


def test_defaults():
    cfg = RunConfig()
    assert cfg.q == 128 and cfg.samples_per_class == 10
    assert cfg.phase_sizes == [3, 2, 3] and cfg.shuffle_seeds == [0, 1, 2]
    assert cfg.protocols == ["P1", "P2", "P3"]
    assert cfg.mlp.use_class_weights and cfg.mlp.use_imbalanced_sampler


def test_comma_lists_and_protocol_aliases():
    cfg = validate_config({"methods": "lr1, mlp", "protocols": "P-I,piii", "phase_sizes": "4,4"})
    assert cfg.methods == ["lr1", "mlp"]
    assert cfg.protocols == ["P1", "P3"]
    assert cfg.phase_sizes == [4, 4]


def test_unknown_method_lists_selectors():
    with pytest.raises(ValidationError, match="lr1, lr2, lr3, mlp"):
        validate_config({"methods": "svm"})


@pytest.mark.parametrize("bad", [{"q": 0}, {"phase_sizes": [3, 0]}, {"protocols": "P7"},
                                 {"log_level": "LOUD"}, {"workers": 0}])
def test_invalid_values_rejected(bad):
    with pytest.raises(ValidationError):
        validate_config(bad)


def test_unusual_bit_count_only_warns(caplog):
    cfg = validate_config({"q": 24})
    assert cfg.q == 24
    assert "q=24" in caplog.text


def test_missing_manifest_rejected(tmp_path):
    with pytest.raises(ValidationError, match="does not exist"):
        validate_config({"dataset": {"manifest": str(tmp_path / "missing.txt")}})


def test_test_manifest_needs_training_manifest(tmp_path):
    manifest = tmp_path / "test.txt"
    manifest.write_text("")
    with pytest.raises(ValidationError, match="without a training manifest"):
        validate_config({"dataset": {"test_manifest": str(manifest)}})


def test_overrides_nest_dotted_keys():
    overrides = parse_overrides(["q=64", "codegen.max_iters=20", "linear.lambda_grid=[0.1, 1]", "out=res"])
    assert overrides == {"q": 64, "codegen": {"max_iters": 20}, "linear": {"lambda_grid": [0.1, 1]}, "out": "res"}
    with pytest.raises(ValueError, match="key=value"):
        parse_overrides(["q"])


def test_merge_is_deep():
    merged = merge({"codegen": {"max_iters": 5, "rel_tol": 0.1}, "q": 16}, {"codegen": {"max_iters": 9}})
    assert merged == {"codegen": {"max_iters": 9, "rel_tol": 0.1}, "q": 16}


def test_load_yaml_and_key_value_files(tmp_path):
    yaml_file = tmp_path / "run.yaml"
    yaml_file.write_text("q: 16\ncodegen:\n  max_iters: 7\n")
    assert load_config_file(yaml_file) == {"q": 16, "codegen": {"max_iters": 7}}

    kv_file = tmp_path / "run.conf"
    kv_file.write_text("# comment\nq=16\nmethods=lr1,lr2\nmlp.epochs=3\n")
    cfg = validate_config(load_config_file(kv_file))
    assert cfg.q == 16 and cfg.methods == ["lr1", "lr2"] and cfg.mlp.epochs == 3

    with pytest.raises(FileNotFoundError):
        load_config_file(tmp_path / "nope.yaml")


def test_derived_configs_carry_shared_values():
    cfg = validate_config({"q": 32, "lambda_h": 0.5, "seed": 4, "codegen": {"max_iters": 9},
                           "mlp": {"epochs": 2, "use_class_weights": False}})
    learner = cfg.code_learner()
    assert (learner.q, learner.lambda_h, learner.seed, learner.max_iters) == (32, 0.5, 4, 9)
    net = cfg.train_config()
    assert net.epochs == 2 and not net.use_class_weights and net.use_imbalanced_sampler


def test_shipped_config_is_valid():
    cfg = validate_config(load_config_file(Path(__file__).parent.parent / "config" / "config.yaml"))
    assert sum(cfg.phase_sizes) == cfg.dataset.synthetic.class_count
