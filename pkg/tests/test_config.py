import json
from fractions import Fraction

import pytest

from alignpipe.config import load_config
from alignpipe.errors import ConfigInvalid


def _write(tmp_path, doc):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def test_minimal_config_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, {"store_dir": str(tmp_path / "s")}))
    assert cfg.aligner.theta == Fraction(3, 10)
    assert cfg.aligner.coarse_gate == Fraction(3, 10)
    assert cfg.aligner.k == 3
    assert cfg.aligner.margin_words == 15
    assert cfg.segmenter.min_len_s == 3.0
    assert cfg.segmenter.max_len_s == 20.0
    assert cfg.tier_thresholds == (Fraction(3, 10), Fraction(2, 10), Fraction(1, 10))
    assert cfg.split_ratios == (Fraction(49, 50), Fraction(1, 100), Fraction(1, 100))
    assert cfg.selection.kind == "lowest_median"
    assert cfg.workers == 1 and cfg.max_retries == 3


def test_threshold_values_are_exact_rationals(tmp_path):
    cfg = load_config(
        _write(tmp_path, {"store_dir": "s", "aligner": {"theta": 0.2, "coarse_gate": "1/4"}})
    )
    assert cfg.aligner.theta == Fraction(1, 5)
    assert cfg.aligner.coarse_gate == Fraction(1, 4)


def test_missing_store_dir_rejected(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(_write(tmp_path, {}))


def test_bad_tier_threshold_rejected(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(_write(tmp_path, {"store_dir": "s", "tier_thresholds": [0.3, 1.5]}))


def test_bad_split_ratios_rejected(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(_write(tmp_path, {"store_dir": "s", "split": {"ratios": [0.5, 0.2, 0.2]}}))


def test_all_below_requires_threshold(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(_write(tmp_path, {"store_dir": "s", "selection": {"criteria": "all_below"}}))


def test_unresolvable_adapter_rejected(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(
            _write(tmp_path, {"store_dir": "s", "adapters": {"asr": "/definitely/missing"}})
        )


def test_handler_entries_validated(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(_write(tmp_path, {"store_dir": "s", "handlers": [{"pattern": "^x"}]}))


def test_theta_range_validated(tmp_path):
    with pytest.raises(ConfigInvalid):
        load_config(_write(tmp_path, {"store_dir": "s", "aligner": {"theta": 0}}))
