import math

import pytest
import torch
from hypothesis import given, settings, strategies as st

from aclair import losses as L
from aclair.losses import (ProbabilityTable, RegularizerConfig, ViewBatch,
                           cosine_similarity, diag_softmax, kl_batch, nt_xent)
from conftest import random_view_batch


@pytest.fixture(autouse=True)
def _no_grad():
    """These tests only check loss values, never gradients."""
    with torch.no_grad():
        yield


# --- cosine similarity ---------------------------------------------------

def test_cosine_self_is_one():
    u = torch.tensor([1.0, 2.0, 3.0])
    assert float(cosine_similarity(u, u)) == pytest.approx(1.0)


def test_cosine_antiparallel():
    u = torch.tensor([1.0, -2.0])
    assert float(cosine_similarity(u, -u)) == pytest.approx(-1.0)


def test_cosine_orthogonal():
    assert float(cosine_similarity(torch.tensor([1.0, 0.0]),
                                   torch.tensor([0.0, 1.0]))) == pytest.approx(0.0)


def test_cosine_zero_vector_rejected():
    with pytest.raises(ValueError):
        cosine_similarity(torch.zeros(3), torch.ones(3))


# --- contrastive loss ----------------------------------------------------

def test_cl_loss_single_sample_is_zero():
    z = torch.tensor([[1.0, 0.0]])
    w = torch.tensor([[0.0, 1.0]])
    assert float(L.cl_loss_from_embeddings(z, w, 0.5)) == pytest.approx(0.0)


def test_cl_loss_two_sample_hand_oracle():
    # embeddings (e1, e2) for both views with e1 orthogonal to e2, t=0.5:
    # every anchor sees logits (2, 0, 0) -> per-direction loss
    # log(1 + 2 e^-2); four directions total.
    e1 = torch.tensor([1.0, 0.0])
    e2 = torch.tensor([0.0, 1.0])
    z_i = torch.stack([e1, e2])
    z_j = torch.stack([e1, e2])
    expected = 4.0 * math.log(1.0 + 2.0 * math.exp(-2.0))
    assert float(L.cl_loss_from_embeddings(z_i, z_j, 0.5)) == pytest.approx(expected, rel=1e-6)


def test_cl_loss_explicit_softmax_oracle():
    # independent per-sample enumeration oracle on a random batch
    g = torch.Generator().manual_seed(3)
    beta, t = 3, 0.5
    z_i = torch.randn(beta, 4, generator=g, dtype=torch.float64)
    z_j = torch.randn(beta, 4, generator=g, dtype=torch.float64)
    z = torch.cat([z_i, z_j])
    z = z / z.norm(dim=1, keepdim=True)
    total = 0.0
    for k in range(beta):
        for anchor, peer in ((k, k + beta), (k + beta, k)):
            num = math.exp(float(z[anchor] @ z[peer]) / t)
            den = sum(math.exp(float(z[anchor] @ z[c]) / t)
                      for c in range(2 * beta) if c != anchor)
            total += -math.log(num / den)
    assert float(L.cl_loss_from_embeddings(z_i, z_j, t)) == pytest.approx(total, rel=1e-10)


def test_cl_loss_duplicated_rows_double_the_sum():
    g = torch.Generator().manual_seed(4)
    z_i = torch.randn(2, 4, generator=g, dtype=torch.float64)
    z_j = torch.randn(2, 4, generator=g, dtype=torch.float64)
    once = nt_xent(z_i, z_j, 0.5).sum()
    per_sample = nt_xent(torch.cat([z_i, z_i]), torch.cat([z_j, z_j]), 0.5)
    # additivity over k: each duplicated sample contributes the same term twice
    assert torch.allclose(per_sample[:2], per_sample[2:], atol=1e-10)
    assert float(per_sample.sum()) != pytest.approx(float(once))  # denominators grow


def test_cl_loss_empty_batch_rejected():
    with pytest.raises(ValueError):
        L.cl_loss_from_embeddings(torch.zeros(0, 2), torch.zeros(0, 2), 0.5)


def test_acl_loss_weighting(tiny_model):
    batch = random_view_batch(0)
    adv = float(L.cl_loss(batch, tiny_model, 0.5, use_adv=True))
    nat = float(L.cl_loss(batch, tiny_model, 0.5, use_adv=False))
    assert float(L.acl_loss(batch, tiny_model, 0.5, 0.0)) == pytest.approx(adv + nat)
    assert float(L.acl_loss(batch, tiny_model, 0.5, 1.0)) == pytest.approx(2 * adv)


def test_acl_loss_degenerate_adversary(tiny_model):
    batch = random_view_batch(1)
    batch.adv_i = batch.view_i.clone()
    batch.adv_j = batch.view_j.clone()
    nat = float(L.cl_loss(batch, tiny_model, 0.5, use_adv=False))
    # TinyEncoder has no branch-dependent layers, so adv views = nat views
    assert float(L.acl_loss(batch, tiny_model, 0.5, 0.0)) == pytest.approx(2 * nat)


def test_acl_loss_requires_adversarial_views(tiny_model):
    batch = random_view_batch(2)
    batch.adv_i = batch.adv_j = None
    with pytest.raises(ValueError):
        L.acl_loss(batch, tiny_model, 0.5, 0.0)


# --- probability tables --------------------------------------------------

def test_diag_softmax_identical_embeddings_uniform():
    z = torch.ones(5, 3)
    probs = diag_softmax(z, z, 0.5)
    assert torch.allclose(probs, torch.full((5,), 0.2))


def test_diag_softmax_known_values():
    # diagonal sims (1, 0, -1) at t=1 -> softmax(1, 0, -1)
    a = torch.tensor([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    b = torch.tensor([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    probs = diag_softmax(a, b, 1.0)
    exps = [math.exp(1), math.exp(0), math.exp(-1)]
    expected = torch.tensor([e / sum(exps) for e in exps])
    assert torch.allclose(probs, expected, atol=1e-6)
    assert probs[0] == pytest.approx(0.6652, abs=1e-4)
    assert probs[1] == pytest.approx(0.2447, abs=1e-4)
    assert probs[2] == pytest.approx(0.0900, abs=1e-4)


def test_diag_softmax_two_sample_temperature():
    # diagonal sims (0.8, 0.2) at t=0.5 -> softmax(1.6, 0.4)
    theta1, theta2 = math.acos(0.8), math.acos(0.2)
    a = torch.tensor([[1.0, 0.0], [1.0, 0.0]], dtype=torch.float64)
    b = torch.tensor([[math.cos(theta1), math.sin(theta1)],
                      [math.cos(theta2), math.sin(theta2)]], dtype=torch.float64)
    probs = diag_softmax(a, b, 0.5)
    denom = math.exp(1.6) + math.exp(0.4)
    assert probs[0] == pytest.approx(math.exp(1.6) / denom, rel=1e-9)
    assert probs[1] == pytest.approx(0.2315, abs=1e-4)


def test_prob_tables_single_sample(tiny_model):
    batch = random_view_batch(5, beta=1)
    for fn in (L.prob_y_given_adv, L.prob_adv_given_x, L.prob_y_given_x):
        table = fn(batch, tiny_model, 0.5, "i")
        assert float(table.values[0]) == pytest.approx(1.0)


def test_prob_adv_given_x_degenerate_adversary_uniform(tiny_model):
    batch = random_view_batch(6, beta=4)
    batch.adv_i = batch.view_i.clone()
    table = L.prob_adv_given_x(batch, tiny_model, 0.5, "i")
    assert torch.allclose(table.values, torch.full((4,), 0.25, dtype=torch.float64))


def test_prob_tables_normalized(tiny_model):
    batch = random_view_batch(7, beta=8)
    for fn in (L.prob_y_given_adv, L.prob_adv_given_x, L.prob_y_given_x):
        for branch in ("i", "j"):
            table = fn(batch, tiny_model, 0.5, branch)
            assert (table.values >= 0).all()
            assert float(table.values.sum()) == pytest.approx(1.0, abs=1e-6)


def test_probability_table_invariant_enforced():
    with pytest.raises(ValueError):
        ProbabilityTable("y_given_x", "i", torch.tensor([0.7, 0.7]))


def test_invalid_branch_rejected(tiny_model):
    with pytest.raises(ValueError):
        L.prob_y_given_x(random_view_batch(8), tiny_model, 0.5, "k")


# --- KL divergence -------------------------------------------------------

def test_kl_equal_distributions_zero():
    p = torch.tensor([0.3, 0.7])
    assert float(kl_batch(p, p)) == pytest.approx(0.0)


def test_kl_hand_value_log2():
    p = torch.tensor([1.0, 0.0])
    q = torch.tensor([0.5, 0.5])
    assert float(kl_batch(p, q)) == pytest.approx(math.log(2), rel=1e-6)


def test_kl_asymmetric_reverse_capped():
    p = torch.tensor([1.0, 0.0])
    q = torch.tensor([0.5, 0.5])
    forward = float(kl_batch(p, q))
    reverse = float(kl_batch(q, p))
    assert math.isfinite(reverse)
    assert reverse != pytest.approx(forward)


def test_kl_length_mismatch_rejected():
    with pytest.raises(ValueError):
        kl_batch(torch.ones(2) / 2, torch.ones(3) / 3)


@given(st.integers(2, 8), st.integers(0, 10 ** 6))
@settings(max_examples=30, deadline=None)
def test_kl_nonnegative_property(n, seed):
    g = torch.Generator().manual_seed(seed)
    p = torch.softmax(torch.randn(n, generator=g, dtype=torch.float64), 0)
    q = torch.softmax(torch.randn(n, generator=g, dtype=torch.float64), 0)
    assert float(kl_batch(p, q)) >= -1e-12


# --- regularizers --------------------------------------------------------

def _identical_branch_batch(seed, beta=4):
    b = random_view_batch(seed, beta=beta)
    return ViewBatch(b.x, b.view_i, b.view_i.clone(), b.adv_i, b.adv_i.clone())


def test_air_zero_for_identical_branches(tiny_model):
    batch = _identical_branch_batch(9)
    assert float(L.air_loss(batch, tiny_model, 0.5)) == pytest.approx(0.0, abs=1e-12)
    t1, t2 = L.air_decomposition(batch, tiny_model, 0.5)
    assert float(t1) == pytest.approx(0.0, abs=1e-12)
    assert float(t2) == pytest.approx(0.0, abs=1e-12)
    assert float(L.uncalibrated_air(batch, tiny_model, 0.5)) == pytest.approx(0.0, abs=1e-12)


def test_air_single_sample_zero(tiny_model):
    batch = random_view_batch(10, beta=1)
    assert float(L.air_loss(batch, tiny_model, 0.5)) == pytest.approx(0.0, abs=1e-12)
    t1, t2 = L.air_decomposition(batch, tiny_model, 0.5)
    assert float(t1) == pytest.approx(0.0, abs=1e-12) and float(t2) == pytest.approx(0.0, abs=1e-12)


def test_air_decomposition_matches_air(tiny_model):
    for seed in range(10):
        batch = random_view_batch(20 + seed)
        air = float(L.air_loss(batch, tiny_model, 0.5))
        t1, t2 = L.air_decomposition(batch, tiny_model, 0.5)
        assert abs(air - float(t1 + t2)) <= 1e-6 * (1 + abs(air))


def test_uncalibrated_differs_from_calibrated(tiny_model):
    batch = random_view_batch(11)
    a = float(L.air_loss(batch, tiny_model, 0.5))
    u = float(L.uncalibrated_air(batch, tiny_model, 0.5))
    assert a != pytest.approx(u)


def test_sir_definitional_equality(tiny_model):
    batch = random_view_batch(12)
    sir = float(L.sir_loss(batch, tiny_model, 0.5))
    expected = float(kl_batch(L.prob_y_given_x(batch, tiny_model, 0.5, "i"),
                              L.prob_y_given_x(batch, tiny_model, 0.5, "j")))
    assert sir == expected


def test_sir_zero_for_identical_views(tiny_model):
    batch = _identical_branch_batch(13)
    assert float(L.sir_loss(batch, tiny_model, 0.5)) == pytest.approx(0.0, abs=1e-12)


# --- combined objective --------------------------------------------------

def test_total_objective_reduces_to_acl(tiny_model):
    batch = random_view_batch(14)
    cfg = RegularizerConfig(lambda1=0.0, lambda2=0.0)
    assert float(L.total_objective(batch, tiny_model, cfg)) == pytest.approx(
        float(L.acl_loss(batch, tiny_model, cfg.temperature, cfg.omega)))


def test_total_objective_operating_point(tiny_model):
    batch = random_view_batch(15)
    cfg = RegularizerConfig(lambda1=0.5, lambda2=0.5)
    expected = (float(L.acl_loss(batch, tiny_model, 0.5, 0.0))
                + 0.5 * float(L.sir_loss(batch, tiny_model, 0.5))
                + 0.5 * float(L.air_loss(batch, tiny_model, 0.5)))
    assert float(L.total_objective(batch, tiny_model, cfg)) == pytest.approx(expected)


def test_total_objective_identical_branches_is_acl(tiny_model):
    batch = _identical_branch_batch(16)
    cfg = RegularizerConfig(lambda1=0.5, lambda2=0.5)
    assert float(L.total_objective(batch, tiny_model, cfg)) == pytest.approx(
        float(L.acl_loss(batch, tiny_model, 0.5, 0.0)), rel=1e-9)


def test_regularizer_config_validation():
    with pytest.raises(ValueError):
        RegularizerConfig(lambda1=-1.0)
    with pytest.raises(ValueError):
        RegularizerConfig(temperature=0.0)
    with pytest.raises(ValueError):
        RegularizerConfig(omega=1.5)


# --- identities and properties -------------------------------------------

def test_proxy_label_identity_gap_natural_and_adversarial(tiny_model):
    for seed in range(5):
        batch = random_view_batch(30 + seed, beta=4)
        assert L.proxy_label_identity_gap(batch, tiny_model, 0.5, use_adv=False) <= 1e-6
        assert L.proxy_label_identity_gap(batch, tiny_model, 0.5, use_adv=True) <= 1e-6


def test_proxy_label_single_sample_both_sides_zero():
    z = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
    w = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
    assert float(L.cl_loss_from_embeddings(z, w, 0.5)) == pytest.approx(0.0)
    assert float(L.proxy_label_nll(z, w, 0.5).sum()) == pytest.approx(0.0)


@given(st.floats(0.1, 100.0), st.integers(0, 10 ** 6))
@settings(max_examples=25, deadline=None)
def test_scale_invariance_property(scale, seed):
    g = torch.Generator().manual_seed(seed)
    z_i = torch.randn(4, 8, generator=g, dtype=torch.float64)
    z_j = torch.randn(4, 8, generator=g, dtype=torch.float64)
    base = float(L.cl_loss_from_embeddings(z_i, z_j, 0.5))
    scaled = float(L.cl_loss_from_embeddings(scale * z_i, scale * z_j, 0.5))
    assert scaled == pytest.approx(base, rel=1e-9)
    p = diag_softmax(z_i, z_j, 0.5)
    q = diag_softmax(scale * z_i, scale * z_j, 0.5)
    assert torch.allclose(p, q, atol=1e-10)
