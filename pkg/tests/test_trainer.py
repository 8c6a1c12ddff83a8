import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pseudo_occ import trainer
from pseudo_occ.datapipe import synth_generate
from pseudo_occ.models import DataRange, generic_config
from pseudo_occ.nn import (AdamState, IDENTITY, MlpParams, MlpSpec, check_gradients, init_params,
                           make_rng, predict)
from pseudo_occ.pseudo import PseudoBatch
from pseudo_occ.trainer import (BASELINE, Net, PseudoMode, TelemetryRow, TelemetryWriter,
                                TrainConfig, TrainingError, epoch_means, f_step_normal,
                                f_step_pseudo, g_loss_and_grads, g_step, read_telemetry_csv,
                                train)

FREE = DataRange.unbounded()


def small_cfg(dim=3, data_range=FREE):
    return generic_config(dim, [4, 2], [4, 2], data_range)


def nets(rng, ae, lr=1e-2):
    return (Net.create(ae.f_spec, rng, lr), Net.create(ae.g_spec, rng, lr))


def identity_net(dim):
    spec = MlpSpec((dim, dim), (IDENTITY,))
    params = MlpParams([np.eye(dim)], [np.zeros(dim)])
    return Net(spec, params, AdamState.for_params(params, 1e-3))


# -- config ----------------------------------------------------------------

@pytest.mark.parametrize("text,kind,sigma", [
    ("learned", "learned", None), ("baseline", "none", None), ("none", "none", None),
    ("gaussian:0.25", "gaussian", 0.25)])
def test_pseudo_mode_parse(text, kind, sigma):
    m = PseudoMode.parse(text)
    assert (m.kind, m.sigma) == (kind, sigma)
    assert PseudoMode.parse(str(m)) == m


@pytest.mark.parametrize("text", ["gaussian", "gaussian:-1", "gan", "learned:2"])
def test_pseudo_mode_parse_errors(text):
    with pytest.raises(ValueError):
        PseudoMode.parse(text)


def test_default_config_is_network_setting():
    c = TrainConfig()
    assert (c.p, c.lambda_, c.batch_size, c.lr_f, c.lr_g) == (0.5, 1.0, 1024, 1e-4, 1e-4)
    assert (c.beta1, c.beta2, c.eps) == (0.9, 0.999, 1e-8)


@pytest.mark.parametrize("kw", [dict(p=1.5), dict(p=-0.1), dict(lambda_=-1), dict(batch_size=0),
                                dict(epochs=0), dict(lr_f=-1.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_baseline_has_zero_pseudo_probability():
    assert TrainConfig(p=0.7, pseudo_mode=BASELINE).pseudo_probability == 0.0
    assert TrainConfig(p=0.7).pseudo_probability == 0.7


# -- single steps ----------------------------------------------------------

def test_identity_f_step_has_zero_loss_and_no_change():
    f = identity_net(3)
    before = f.params.tobytes()
    x = make_rng(0).normal(size=(4, 3))
    assert f_step_normal(f, x) == 0.0
    assert f.params.tobytes() == before


def test_f_step_normal_descends():
    rng = make_rng(1)
    ae = small_cfg()
    f, _ = nets(rng, ae)
    x = rng.normal(size=(16, 3))
    first = f_step_normal(f, x)
    for _ in range(199):
        last = f_step_normal(f, x)
    assert last < first


def test_f_step_normal_deterministic():
    def run():
        rng = make_rng(2)
        f, _ = nets(rng, small_cfg())
        x = rng.normal(size=(8, 3))
        return [f_step_normal(f, x) for _ in range(20)]
    assert run() == run()


def test_zero_noise_pseudo_step_equals_normal_step(rng):
    ae = small_cfg()
    f1, _ = nets(make_rng(3), ae)
    f2, _ = nets(make_rng(3), ae)
    x = rng.normal(size=(6, 3))
    l1 = f_step_normal(f1, x)
    l2 = f_step_pseudo(f2, PseudoBatch(x, x.copy(), np.zeros_like(x)))
    assert l1 == l2 and f1.params.tobytes() == f2.params.tobytes()


def test_pseudo_step_loss_matches_direct_recomputation(rng):
    ae = small_cfg()
    f, _ = nets(rng, ae)
    x = rng.normal(size=(5, 3))
    delta = rng.normal(size=x.shape)
    before = f.params.copy()
    loss = f_step_pseudo(f, PseudoBatch(x, x + delta, delta))
    recon = predict(before, ae.f_spec, x + delta)
    direct = np.mean(np.sum((recon - x) ** 2, axis=1) / x.shape[1])
    assert loss == pytest.approx(direct, rel=1e-13)


def test_g_loss_hand_value():
    # F is the identity, so the reconstruction term vanishes
    f = identity_net(2)
    g_spec = MlpSpec((2, 2), (IDENTITY,))
    g_params = MlpParams([np.zeros((2, 2))], [np.array([0.3, 0.4])])
    loss, _, norm, _ = g_loss_and_grads(g_params, g_spec, f.params, f.spec,
                                        np.array([[0.1, -0.2]]), 1.0, FREE)
    assert loss == pytest.approx(-0.125, abs=1e-15)
    assert norm == pytest.approx(0.5, abs=1e-15)


def test_g_loss_zero_noise_lambda_zero_is_stationary():
    f = identity_net(3)
    g_spec = MlpSpec((3, 3), (IDENTITY,))
    g_params = MlpParams([np.zeros((3, 3))], [np.zeros(3)])
    loss, grads, _, _ = g_loss_and_grads(g_params, g_spec, f.params, f.spec,
                                         make_rng(0).normal(size=(4, 3)), 0.0, FREE)
    assert loss == 0.0 and not any(a.any() for a in grads.arrays())


@pytest.mark.parametrize("lam", [0.0, 0.1, 1.0])
@pytest.mark.parametrize("data_range", [FREE, DataRange(0, 1), DataRange(-1, 1)])
def test_g_gradient_matches_finite_differences(lam, data_range, rng):
    ae = generic_config(3, [3, 2], [3, 2], data_range)
    f_params = init_params(ae.f_spec, rng)
    g_params = init_params(ae.g_spec, rng)
    lo = 0.1 if data_range.bounded else -1.0
    x = rng.uniform(lo, 0.9, size=(5, 3))

    def build(gp):
        loss, grads, _, _ = g_loss_and_grads(gp, ae.g_spec, f_params, ae.f_spec, x, lam,
                                             data_range)
        return loss, grads
    assert check_gradients(g_params, build) < 1e-6


def test_saturated_entries_pass_no_gradient():
    f = identity_net(1)
    g_spec = MlpSpec((1, 1), (IDENTITY,))
    g_params = MlpParams([np.zeros((1, 1))], [np.array([0.5])])
    _, grads, _, batch = g_loss_and_grads(g_params, g_spec, f.params, f.spec,
                                          np.array([[0.9]]), 1.0, DataRange(0, 1))
    assert batch.x_pseudo[0, 0] == 1.0
    assert not any(a.any() for a in grads.arrays())


def test_freezing_contracts(rng):
    ae = small_cfg()
    f, g = nets(rng, ae)
    x = rng.normal(size=(8, 3))
    f_bytes = f.params.tobytes()
    g_step(g, f, x, 1.0, FREE)
    assert f.params.tobytes() == f_bytes
    g_bytes = g.params.tobytes()
    batch = trainer.generate_noise(g.params, g.spec, x, FREE)[0]
    f_step_pseudo(f, batch)
    assert g.params.tobytes() == g_bytes


# -- full loop -------------------------------------------------------------

def ring(n=200, dim=3, seed=0):
    return synth_generate("ring", n, 1, dim, seed).features[:n]


def test_train_deterministic():
    x = ring()
    cfg = TrainConfig(batch_size=32, epochs=3, lr_f=1e-2, lr_g=1e-3, seed=4)
    a, b = train(x, small_cfg(), cfg), train(x, small_cfg(), cfg)
    assert a.f_params.tobytes() == b.f_params.tobytes()
    assert a.g_params.tobytes() == b.g_params.tobytes()
    assert a.telemetry == b.telemetry


def test_seed_changes_result():
    x = ring()
    a = train(x, small_cfg(), TrainConfig(batch_size=32, epochs=1, seed=0))
    b = train(x, small_cfg(), TrainConfig(batch_size=32, epochs=1, seed=1))
    assert a.f_params.tobytes() != b.f_params.tobytes()


def test_baseline_equals_p_zero_and_has_no_generator():
    x = ring()
    base = train(x, small_cfg(), TrainConfig(batch_size=32, epochs=2, pseudo_mode=BASELINE))
    p0 = train(x, small_cfg(), TrainConfig(p=0.0, batch_size=32, epochs=2))
    assert base.g_params is None
    assert base.f_params.tobytes() == p0.f_params.tobytes()
    assert all(r.batch_kind == "normal" for r in base.telemetry)


def test_p_one_gaussian_is_all_pseudo():
    model = train(ring(), small_cfg(), TrainConfig(p=1.0, batch_size=32, epochs=2,
                                                   pseudo_mode=PseudoMode.parse("gaussian:0.2")))
    assert model.g_params is None
    assert all(r.batch_kind == "pseudo" and r.loss_g is None for r in model.telemetry)


def test_telemetry_shape_and_presence_rules():
    model = train(ring(n=100), small_cfg(), TrainConfig(batch_size=30, epochs=2, seed=3))
    assert [r.iteration for r in model.telemetry] == list(range(1, 9))  # 4 batches per epoch
    for r in model.telemetry:
        learned_pseudo = r.batch_kind == "pseudo"
        assert (r.loss_g is not None) == learned_pseudo
        assert (r.noise_norm is not None) == learned_pseudo
        if learned_pseudo:
            assert r.noise_norm >= 0


def test_training_reduces_normal_loss_on_ring():
    x = ring(n=512, dim=4, seed=2)
    ae = generic_config(4, [8, 4], [8, 4], FREE)
    cfg = TrainConfig(batch_size=32, epochs=15, lr_f=3e-3, lr_g=1e-4, seed=0)
    model = train(x, ae, cfg)
    means = epoch_means(model.telemetry, 16)
    assert means[-1] < means[0]


def test_train_input_errors():
    ae = small_cfg()
    with pytest.raises(ValueError):
        train(np.zeros((0, 3)), ae, TrainConfig())
    with pytest.raises(ValueError):
        train(np.zeros((5, 4)), ae, TrainConfig())


def test_non_finite_loss_aborts_with_partial_telemetry():
    x = ring(n=64)
    # Adam moves each weight by about lr, so the second loss overflows
    cfg = TrainConfig(p=0.0, batch_size=8, epochs=2, lr_f=1e160, seed=0)
    ae = generic_config(3, [4], [4], FREE)
    with pytest.raises(TrainingError) as info:
        train(x, ae, cfg)
    assert len(info.value.telemetry) >= 1


# -- telemetry CSV ---------------------------------------------------------

def test_telemetry_csv_round_trip(tmp_path):
    rows = [TelemetryRow(1, "normal", 0.5), TelemetryRow(2, "pseudo", 0.1 + 0.2, -0.3, 1 / 3)]
    buf = io.StringIO()
    w = TelemetryWriter(buf)
    for r in rows:
        w(r)
    text = buf.getvalue()
    assert text.splitlines()[0] == "iteration,batch_kind,loss_f,loss_g,noise_norm"
    assert text.splitlines()[1] == "1,normal,0.5,,"
    path = tmp_path / "t.csv"
    path.write_text(text)
    assert read_telemetry_csv(path) == rows


@given(st.integers(0, 2**16))
def test_noise_norm_matches_recomputation(seed):
    rng = make_rng(seed)
    ae = small_cfg(data_range=DataRange(-1, 1))
    f, g = nets(rng, ae)
    x = rng.uniform(-1, 1, size=(6, 3))
    g_before = g.params.copy()
    _, norm = g_step(g, f, x, 0.5, ae.data_range)
    raw = predict(g_before, ae.g_spec, x)
    delta = np.clip(x + raw, -1, 1) - x
    assert abs(norm - np.linalg.norm(delta, axis=1).mean()) <= 1e-12
