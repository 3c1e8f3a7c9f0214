import math

import numpy as np
import pytest

import cfin


def test_param_budget():
    model = cfin.Model.build(cfin.ModelConfig.standard(4), seed=0)
    assert abs(model.count_params() - 699e3) <= 0.1 * 699e3


def test_infer_shape_and_determinism():
    model = cfin.Model.build(cfin.ModelConfig.toy(2), seed=1)
    lr = np.random.default_rng(0).uniform(size=(1, 3, 9, 11))
    sr = model.infer(lr)
    assert sr.shape == (1, 3, 18, 22)
    assert np.all(np.isfinite(sr))
    np.testing.assert_array_equal(sr, model.infer(lr))


def test_archive_round_trip(tmp_path):
    model = cfin.Model.build(cfin.ModelConfig.toy(3), seed=2)
    blob = model.to_bytes()
    assert cfin.Model.from_bytes(blob).to_bytes() == blob
    path = str(tmp_path / "toy.cfin")
    model.save(path)
    assert cfin.Model.load(path).to_bytes() == blob
    with pytest.raises(cfin.ArchiveError, match="bad magic"):
        cfin.Model.from_bytes(b"XXXX" + blob[4:])


def test_config_json():
    cfg = cfin.ModelConfig.toy(2)
    cfg.mask_mode = "maxpool"
    assert cfin.ModelConfig.from_json(cfg.to_json()) == cfg
    cfg.heads = 5
    with pytest.raises(ValueError):
        cfg.validate()


def test_metrics_anchors():
    a = np.full((1, 3, 16, 16), 0.5)
    assert math.isinf(cfin.psnr(a, a))
    assert cfin.ssim(a, a) == 1.0
    assert cfin.psnr(a, a + 1 / 255) == pytest.approx(20 * math.log10(255), abs=1e-9)
    with pytest.raises(cfin.ShapeError):
        cfin.psnr(a, a[:, :, :15])


def test_luma_and_resize():
    white = np.ones((1, 3, 2, 2))
    np.testing.assert_allclose(cfin.rgb_to_y(white), 235 / 255)
    assert cfin.bicubic_resize(np.zeros((1, 3, 13, 17)), 4.0).shape == (1, 3, 52, 68)


def test_gradcheck_suite():
    assert "cgm" in cfin.gradcheck_suites()
    result = cfin.gradcheck("cgm")
    assert result["passed"]
    assert result["worst"] < 1e-4
