"""Executable verification of the mathematical identities behind the losses:
decomposition of the adversarial regularizer, the contrastive-loss /
proxy-label equivalence, probability normalization, gradient correctness,
PGD feasibility, schedule values, and the calibration ablation.

Each check returns a JSONL-ready record {check, max_error, tolerance, pass}.
Checks run in float64 on small random models and batches.
"""

import math

import torch

from . import losses as L
from .attacks import PGDConfig, pgd_pair, project_linf
from .losses import RegularizerConfig, ViewBatch
from .models import BranchTag, TinyEncoder
from .schedules import dynacl_schedule

IMAGE_SHAPE = (3, 4, 4)


def _record(check, max_error, tolerance, ok, **extra):
    rec = {"check": check, "max_error": float(max_error),
           "tolerance": tolerance, "pass": bool(ok)}
    rec.update(extra)
    return rec


def _draw_model(gen, dim):
    torch.manual_seed(int(torch.randint(0, 2 ** 31, (1,), generator=gen)))
    n = IMAGE_SHAPE[0] * IMAGE_SHAPE[1] * IMAGE_SHAPE[2]
    return TinyEncoder(n, hidden=8, representation_dim=dim,
                       projector_dim=dim).double()


def _draw_batch(gen, beta, eps=8.0 / 255.0):
    # independent random views keep the two branches genuinely different, so
    # the regularizers take non-degenerate values on these draws
    x = torch.rand((beta, *IMAGE_SHAPE), generator=gen, dtype=torch.float64)
    view_i = torch.rand(x.shape, generator=gen, dtype=torch.float64)
    view_j = torch.rand(x.shape, generator=gen, dtype=torch.float64)
    adv_i = project_linf(view_i + eps * (2 * torch.rand(x.shape, generator=gen,
                                                        dtype=torch.float64) - 1),
                         view_i, eps)
    adv_j = project_linf(view_j + eps * (2 * torch.rand(x.shape, generator=gen,
                                                        dtype=torch.float64) - 1),
                         view_j, eps)
    return ViewBatch(x, view_i, view_j, adv_i, adv_j)


def check_decomposition(seed=0, draws=100, t=0.5, break_decomposition=False):
    """term1 + term2 of the decomposition must reproduce the adversarial
    regularizer on random (model, batch) draws."""
    gen = torch.Generator().manual_seed(seed)
    worst = 0.0
    configs = [(b, d) for b in (2, 4, 8) for d in (4, 16)]
    with torch.no_grad():
        for n in range(draws):
            beta, dim = configs[n % len(configs)]
            model = _draw_model(gen, dim)
            batch = _draw_batch(gen, beta, eps=0.25)
            air = float(L.air_loss(batch, model, t))
            t1, t2 = L.air_decomposition(batch, model, t)
            if break_decomposition:
                t2 = t2 * 1.01
            err = abs(air - float(t1 + t2)) / (1.0 + abs(air))
            worst = max(worst, err)
    return _record("decomposition_identity", worst, 1e-6, worst <= 1e-6, draws=draws)


def check_proxy_label_identity(seed=1, draws=100, t=0.5):
    """Contrastive loss must equal the summed negative log proxy-label
    probabilities, per sample, on natural and adversarial views."""
    gen = torch.Generator().manual_seed(seed)
    worst = 0.0
    with torch.no_grad():
        for n in range(draws):
            beta, dim = (2, 4, 8)[n % 3], (4, 16)[n % 2]
            model = _draw_model(gen, dim)
            batch = _draw_batch(gen, beta)
            worst = max(worst, L.proxy_label_identity_gap(batch, model, t, use_adv=False))
            worst = max(worst, L.proxy_label_identity_gap(batch, model, t, use_adv=True))
    return _record("proxy_label_identity", worst, 1e-6, worst <= 1e-6, draws=draws)


def check_sir_definition(seed=2, draws=20, t=0.5):
    """Standard regularizer equals the KL of the two natural-view tables,
    vanishes on identical views, and every table is a probability vector."""
    gen = torch.Generator().manual_seed(seed)
    worst = 0.0
    worst_sum = 0.0
    with torch.no_grad():
        for _ in range(draws):
            model = _draw_model(gen, 8)
            batch = _draw_batch(gen, 4)
            sir = float(L.sir_loss(batch, model, t))
            p_i = L.prob_y_given_x(batch, model, t, "i")
            p_j = L.prob_y_given_x(batch, model, t, "j")
            worst = max(worst, abs(sir - float(L.kl_batch(p_i, p_j))))
            for table in (p_i, p_j,
                          L.prob_y_given_adv(batch, model, t, "i"),
                          L.prob_adv_given_x(batch, model, t, "j")):
                worst_sum = max(worst_sum, abs(float(table.values.sum()) - 1.0))
            same = ViewBatch(batch.x, batch.view_i, batch.view_i.clone())
            worst = max(worst, abs(float(L.sir_loss(same, model, t))))
    ok = worst <= 1e-9 and worst_sum <= 1e-6
    return _record("sir_definition", max(worst, worst_sum), 1e-6, ok)


def sir_vs_zero_budget_limit(seed=3, t=0.5):
    """Informational: the zero-budget limit of the adversarial regularizer
    (uniform p(adv|x)) equals the standard regularizer scaled by 1/beta; both
    values are reported without asserting equality."""
    gen = torch.Generator().manual_seed(seed)
    model = _draw_model(gen, 8)
    batch = _draw_batch(gen, 4)
    limit_batch = ViewBatch(batch.x, batch.view_i, batch.view_j,
                            batch.view_i.clone(), batch.view_j.clone())
    with torch.no_grad():
        sir = float(L.sir_loss(batch, model, t))
        limit = float(L.air_loss(limit_batch, model, t))
    return _record("sir_vs_zero_budget_limit", 0.0, None, True,
                   sir_value=sir, zero_budget_air_value=limit,
                   ratio_times_beta=limit * batch.beta / sir if sir else None)


def check_gradient(seed=4, t=0.5, h=1e-4):
    """Analytic gradient of the combined objective vs central finite
    differences on a sub-1e3-parameter model; adversarial views fixed."""
    gen = torch.Generator().manual_seed(seed)
    model = _draw_model(gen, 4)
    n_params = sum(p.numel() for p in model.parameters())
    assert n_params <= 1000, n_params
    cfg = RegularizerConfig(lambda1=0.5, lambda2=0.5, epsilon=8.0 / 255.0,
                            temperature=t)
    batch = _draw_batch(gen, 4, eps=cfg.epsilon)

    def objective():
        return L.total_objective(batch, model, cfg)

    model.zero_grad()
    objective().backward()
    analytic = torch.cat([p.grad.flatten() for p in model.parameters()])

    fd = torch.empty_like(analytic)
    params = [p for p in model.parameters()]
    flat_index = 0
    with torch.no_grad():
        for p in params:
            flat = p.view(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + h
                plus = float(objective())
                flat[i] = orig - h
                minus = float(objective())
                flat[i] = orig
                fd[flat_index] = (plus - minus) / (2 * h)
                flat_index += 1
    scale = max(float(fd.abs().max()), 1e-12)
    err = float((analytic - fd).abs().max()) / scale
    return _record("gradient_check", err, 1e-4, err <= 1e-4, params=n_params)


def check_pgd_feasibility(seed=5, total_samples=1000, t=0.5):
    """Every attacked sample stays inside the eps-ball and [0,1]; zero steps
    without random start is the identity; one step without random start
    matches an independently computed sign-gradient update exactly."""
    gen = torch.Generator().manual_seed(seed)
    model = _draw_model(gen, 8).float()
    eps = 8.0 / 255.0
    cfg = PGDConfig(eps=eps, steps=5, alpha=2.0 / 255.0, random_start=True)
    attack_gen = torch.Generator().manual_seed(seed + 1)
    worst_ball, worst_range = 0.0, 0.0
    done = 0
    while done < total_samples:
        beta = min(100, total_samples - done)
        b = _draw_batch(gen, beta)
        x_i, x_j = b.view_i.float(), b.view_j.float()
        adv_i, adv_j = pgd_pair(x_i, x_j, model, t, cfg, attack_gen)
        for adv, ref in ((adv_i, x_i), (adv_j, x_j)):
            worst_ball = max(worst_ball, float((adv - ref).abs().max()))
            worst_range = max(worst_range, float((-adv).max()), float((adv - 1).max()))
        done += beta
    feasible = worst_ball <= eps + 1e-6 and worst_range <= 0.0

    b = _draw_batch(gen, 8)
    x_i, x_j = b.view_i.float(), b.view_j.float()
    idle = PGDConfig(eps=eps, steps=0, alpha=2.0 / 255.0, random_start=False)
    a_i, a_j = pgd_pair(x_i, x_j, model, t, idle)
    identity_ok = torch.equal(a_i, x_i) and torch.equal(a_j, x_j)

    one = PGDConfig(eps=eps, steps=1, alpha=2.0 / 255.0, random_start=False)
    a_i, a_j = pgd_pair(x_i, x_j, model, t, one)
    ri = x_i.clone().requires_grad_(True)
    rj = x_j.clone().requires_grad_(True)
    model.eval()
    loss = L.cl_loss_from_embeddings(model(ri, BranchTag.ADVERSARIAL),
                                     model(rj, BranchTag.ADVERSARIAL), t)
    gi, gj = torch.autograd.grad(loss, [ri, rj])
    o_i = project_linf(x_i + one.alpha * gi.sign(), x_i, eps)
    o_j = project_linf(x_j + one.alpha * gj.sign(), x_j, eps)
    oracle_ok = torch.equal(a_i, o_i) and torch.equal(a_j, o_j)

    ok = feasible and identity_ok and oracle_ok
    return _record("pgd_feasibility", worst_ball - eps, 1e-6, ok,
                   samples=total_samples, identity_ok=identity_ok,
                   sign_oracle_ok=oracle_ok)


def check_scheduler():
    """Exact decay-schedule values and monotonicity for K=50, E=1000, nu=2/3."""
    K, E, nu = 50, 1000, 2.0 / 3.0
    expected = {0: (1.0, 0.0), 500: (0.5, 1.0 / 3.0), 999: (0.05, nu * 0.95)}
    worst = 0.0
    for e, (mu_e, om_e) in expected.items():
        mu, om = dynacl_schedule(e, K, E, nu)
        worst = max(worst, abs(mu - mu_e), abs(om - om_e))
    mus, oms = zip(*(dynacl_schedule(e, K, E, nu) for e in range(E)))
    monotone = all(a >= b for a, b in zip(mus, mus[1:])) and \
        all(a <= b for a, b in zip(oms, oms[1:]))
    return _record("dynacl_schedule", worst, 1e-12,
                   worst <= 1e-12 and monotone, monotone=monotone)


def check_calibration_ablation(seed=6, draws=100, t=0.5):
    """The calibrated and uncalibrated adversarial regularizers must both be
    finite and actually differ on nearly every random batch."""
    gen = torch.Generator().manual_seed(seed)
    differ = 0
    finite = True
    with torch.no_grad():
        for n in range(draws):
            model = _draw_model(gen, (4, 16)[n % 2])
            batch = _draw_batch(gen, (2, 4, 8)[n % 3], eps=0.25)
            a = float(L.air_loss(batch, model, t))
            u = float(L.uncalibrated_air(batch, model, t))
            finite = finite and math.isfinite(a) and math.isfinite(u)
            if abs(a - u) > 1e-8 * (1.0 + abs(a)):
                differ += 1
    ok = finite and differ >= 95
    return _record("calibration_ablation", draws - differ, draws - 95, ok,
                   differing=differ, draws=draws, finite=finite)


def check_kl_properties():
    """Hand-checked KL values: zero at equality, log 2 for (1,0) vs uniform,
    finite (floor-capped) in the reverse direction."""
    p = torch.tensor([1.0, 0.0], dtype=torch.float64)
    q = torch.tensor([0.5, 0.5], dtype=torch.float64)
    worst = abs(float(L.kl_batch(p, p)))
    worst = max(worst, abs(float(L.kl_batch(p, q)) - math.log(2)))
    reverse = float(L.kl_batch(q, p))
    ok = worst <= 1e-12 and math.isfinite(reverse) and reverse > 1.0
    return _record("kl_properties", worst, 1e-12, ok, reverse_value=reverse)


def run_all(seed=0, break_decomposition=False):
    records = [
        check_decomposition(seed, break_decomposition=break_decomposition),
        check_proxy_label_identity(seed + 1),
        check_sir_definition(seed + 2),
        sir_vs_zero_budget_limit(seed + 3),
        check_gradient(seed + 4),
        check_pgd_feasibility(seed + 5),
        check_scheduler(),
        check_calibration_ablation(seed + 6),
        check_kl_properties(),
    ]
    return records, all(r["pass"] for r in records)
