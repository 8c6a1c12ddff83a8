import struct

import numpy as np
import pytest

from pseudo_occ.checkpoint import (FORMAT_VERSION, Checkpoint, CheckpointError, dumps, load, loads,
                                   save)
from pseudo_occ.datapipe import synth_generate
from pseudo_occ.models import DataRange, generic_config
from pseudo_occ.nn import MlpSpec, init_params, leaky_relu, make_rng
from pseudo_occ.trainer import PseudoMode, TrainConfig, TrainedModel, train


@pytest.fixture(scope="module")
def learned_ckpt():
    x = synth_generate("ring", 64, 1, 3, 0).features[:64]
    cfg = TrainConfig(batch_size=16, epochs=2, seed=1, lr_f=1e-2)
    return Checkpoint.from_model(train(x, generic_config(3, [4, 2], [3], DataRange.unbounded()),
                                       cfg))


def test_round_trip_is_byte_identical(learned_ckpt):
    blob = dumps(learned_ckpt)
    assert blob[:4] == b"PAOC"
    back = loads(blob)
    assert dumps(back) == blob
    assert back.f_params.tobytes() == learned_ckpt.f_params.tobytes()
    assert back.train_config == learned_ckpt.train_config
    assert back.ae_config == learned_ckpt.ae_config


def test_file_round_trip(learned_ckpt, tmp_path):
    save(learned_ckpt, tmp_path / "m.ckpt")
    save(load(tmp_path / "m.ckpt"), tmp_path / "m2.ckpt")
    assert (tmp_path / "m.ckpt").read_bytes() == (tmp_path / "m2.ckpt").read_bytes()


def test_round_trip_without_generator_and_bounded_range():
    rng = make_rng(0)
    ae = generic_config(2, [3], [3], DataRange(0, 1))
    f_spec = MlpSpec((2, 3, 2), (leaky_relu(0.25), ae.f_spec.final_activation))
    ae = type(ae)(f_spec, ae.g_spec, ae.data_range)
    model = TrainedModel(init_params(f_spec, rng), None, ae,
                         TrainConfig(p=0.0, pseudo_mode=PseudoMode.parse("gaussian:0.3")))
    blob = dumps(Checkpoint.from_model(model))
    back = loads(blob)
    assert back.g_params is None and back.ae_config == ae
    assert back.train_config.pseudo_mode.sigma == 0.3
    assert dumps(back) == blob


def test_version_mismatch_rejected(learned_ckpt):
    blob = bytearray(dumps(learned_ckpt))
    blob[4:8] = struct.pack("<I", FORMAT_VERSION + 1)
    with pytest.raises(CheckpointError, match="version"):
        loads(bytes(blob))


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:-3],
    lambda b: b + b"\0",
    lambda b: b[:40],
])
def test_corrupt_blobs_rejected(learned_ckpt, mutate):
    with pytest.raises(CheckpointError):
        loads(mutate(dumps(learned_ckpt)))


def test_summary_records_final_losses(learned_ckpt):
    s = learned_ckpt.summary
    assert s.iterations == 8 and np.isfinite(s.loss_f)
