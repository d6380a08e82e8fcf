import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from criteria import (
    ConsistencyError,
    CriterionId,
    ObservableMoments,
    OtildeSource,
    boundary_envelope,
    collect_moments,
    evaluate_criterion,
    heisenberg_bound,
    linear_family_check,
    otilde_from_ensemble,
    otilde_measurable,
    otilde_strong_from_ensemble,
    partition_curves,
    prl02_product_check,
    product_criterion_check,
    stokes_check,
    sum_criterion_check,
)
from operators import (
    DimensionMismatchError,
    ObservablePair,
    build_uv,
    commutator_obs,
    op_norm,
    preset_pairs,
    random_hermitian,
    tensor,
)
from states import (
    BellState,
    CriterionConfig,
    bell_state,
    computational_state,
    ensemble_to_density,
    expectation,
    pure_state,
    random_density_matrix,
    random_product_ensemble,
    variance,
    werner_state,
)

ONES = CriterionConfig(1.0, 1.0, 1.0, 1.0)
PAULI_XY = preset_pairs(2)['xy']
PAULI_PAIRS = (PAULI_XY, PAULI_XY)
SUITE_DIMS = [(2, 2), (2, 3), (3, 3)]


def random_pairs(dims, rng):
    return tuple(ObservablePair(random_hermitian(d, rng), random_hermitian(d, rng)) for d in dims)


def random_config(rng):
    a1, a2, b1, b2 = rng.uniform(-2.0, 2.0, size=4)
    return CriterionConfig(a1, a2, b1, b2)


def test_singlet_violates_prl02_with_margin_four():
    verdict = prl02_product_check(bell_state(BellState.PSI_MINUS), PAULI_PAIRS, ONES)
    assert verdict.criterion_id == CriterionId.PRL02_PRODUCT
    assert verdict.violated
    assert verdict.lhs == pytest.approx(0.0, abs=1e-12)
    assert verdict.bound == pytest.approx(4.0, abs=1e-12)
    assert verdict.margin == pytest.approx(4.0, abs=1e-9)


def test_singlet_is_invisible_to_measurable_bounds():
    # its marginals are maximally mixed, so every <C_j> vanishes
    singlet = bell_state(BellState.PSI_MINUS)
    moments = collect_moments(singlet, PAULI_PAIRS)
    for criterion_id in (CriterionId.GENERAL_MEASURABLE, CriterionId.SUM):
        verdict = evaluate_criterion(criterion_id, moments, ONES)
        assert not verdict.violated
        assert verdict.bound == pytest.approx(0.0, abs=1e-12)


def test_product_state_saturates_product_and_sum_bounds():
    rho = computational_state(0, 0)
    product = evaluate_criterion(CriterionId.GENERAL_MEASURABLE, collect_moments(rho, PAULI_PAIRS), ONES)
    assert product.lhs == pytest.approx(4.0)
    assert product.bound == pytest.approx(4.0)
    assert not product.violated
    total = sum_criterion_check(rho, PAULI_PAIRS, ONES)
    assert total.lhs == pytest.approx(4.0)
    assert total.bound == pytest.approx(4.0)
    assert not total.violated


def test_verdict_serialization_keys():
    verdict = prl02_product_check(bell_state(BellState.PSI_MINUS), PAULI_PAIRS, ONES)
    data = verdict.to_dict()
    assert set(data) == {'criterion', 'lhs', 'bound', 'violated', 'margin', 'config'}
    assert data['criterion'] == 'prl02_product'
    assert data['config'] == {'a1': 1.0, 'a2': 1.0, 'b1': 1.0, 'b2': 1.0}


def test_moments_match_direct_expectations():
    rho = random_density_matrix((2, 3), seed=21)
    rng = np.random.default_rng(21)
    pairs = random_pairs((2, 3), rng)
    moments = collect_moments(rho, pairs)
    c1, c2 = commutator_obs(pairs[0]), commutator_obs(pairs[1])
    assert moments.c12 == pytest.approx(expectation(rho, tensor(c1, c2)), abs=1e-12)
    assert moments.norm1 == pytest.approx(op_norm(c1))
    with pytest.raises(DimensionMismatchError):
        collect_moments(rho, PAULI_PAIRS)


@pytest.mark.parametrize("dims", SUITE_DIMS)
def test_moments_match_collective_observables(dims):
    rng = np.random.default_rng(40 + dims[0] * 10 + dims[1])
    for seed in range(50):
        rho = random_density_matrix(dims, seed, rank=1 + seed % 3)
        pairs = random_pairs(dims, rng)
        cfg = random_config(rng)
        moments = collect_moments(rho, pairs)
        uv = build_uv(pairs[0], pairs[1], cfg)
        assert moments.variance_u(cfg.a1, cfg.a2) == pytest.approx(variance(rho, uv.u), abs=1e-10)
        assert moments.variance_v(cfg.b1, cfg.b2) == pytest.approx(variance(rho, uv.v), abs=1e-10)


@pytest.mark.parametrize("dims", SUITE_DIMS)
def test_ensemble_variance_dominates_weighted_local_variances(dims):
    rng = np.random.default_rng(60 + dims[0] * 10 + dims[1])
    for seed in range(200):
        ensemble = random_product_ensemble(dims, 1 + seed % 5, seed)
        pairs = random_pairs(dims, rng)
        cfg = random_config(rng)
        u = build_uv(pairs[0], pairs[1], cfg).u
        local = sum(term.w * (cfg.a1 ** 2 * variance(term.rho1, pairs[0].r)
                              + cfg.a2 ** 2 * variance(term.rho2, pairs[1].r))
                    for term in ensemble.terms)
        assert variance(ensemble_to_density(ensemble), u) >= local - 1e-10


def test_heisenberg_relation_holds_on_random_states():
    rng = np.random.default_rng(3)
    for seed in range(50):
        dims = SUITE_DIMS[seed % 3]
        rho = random_density_matrix(dims, seed, rank=1 + seed % 2)
        verdict = heisenberg_bound(rho, random_pairs(dims, rng), random_config(rng))
        assert verdict.lhs >= verdict.bound - 1e-9 * max(1.0, verdict.bound)


def test_corrupted_moments_raise_consistency_error():
    moments = ObservableMoments(dims=(2, 2), r11=0.1, r12=0.0, r22=0.1, s11=0.1, s12=0.0, s22=0.1,
                                c1=2.0, c2=2.0, c12=0.0, norm1=2.0, norm2=2.0)
    with pytest.raises(ConsistencyError):
        evaluate_criterion(CriterionId.HEISENBERG, moments, ONES)


@pytest.mark.parametrize("dims", SUITE_DIMS)
def test_separable_ensembles_never_violate_the_ensemble_product_bound(dims):
    rng = np.random.default_rng(1000 + dims[0] * 10 + dims[1])
    for seed in range(1000):
        ensemble = random_product_ensemble(dims, 1 + seed % 6, seed)
        rho = ensemble_to_density(ensemble)
        pairs = random_pairs(dims, rng)
        cfg = random_config(rng)
        for otilde in (otilde_from_ensemble(ensemble, pairs, cfg), otilde_strong_from_ensemble(ensemble, pairs, cfg)):
            verdict = product_criterion_check(rho, otilde, pairs, cfg)
            assert not verdict.violated, (seed, otilde.source)
            assert verdict.margin <= 1e-9


@pytest.mark.parametrize("dims", SUITE_DIMS)
def test_otilde_chain_on_separable_ensembles(dims):
    rng = np.random.default_rng(2000 + dims[0] * 10 + dims[1])
    for seed in range(300):
        ensemble = random_product_ensemble(dims, 1 + seed % 5, seed)
        rho = ensemble_to_density(ensemble)
        pairs = random_pairs(dims, rng)
        cfg = random_config(rng)
        strong = otilde_strong_from_ensemble(ensemble, pairs, cfg)
        from_ensemble = otilde_from_ensemble(ensemble, pairs, cfg)
        measurable = otilde_measurable(rho, pairs, cfg)
        moments = collect_moments(rho, pairs)
        mixed = abs(cfg.a1 * cfg.b1 * moments.c1 + cfg.a2 * cfg.b2 * moments.c2) / 2

        assert strong.otilde >= from_ensemble.otilde - 1e-10
        assert from_ensemble.otilde >= measurable.otilde - 1e-10
        assert measurable.otilde >= mixed - 1e-10
        assert (from_ensemble.otilde1 * from_ensemble.otilde2
                >= moments.c12 ** 2 / (moments.norm1 * moments.norm2) - 1e-10)
        # prl02 can never fire where the ensemble bound holds
        assert from_ensemble.otilde ** 2 >= moments.prl02_bound(cfg.a1, cfg.a2, cfg.b1, cfg.b2) - 1e-10


@pytest.mark.slow
def test_sum_violation_implies_product_violation():
    theta = 0.3
    partially_entangled = pure_state([math.cos(theta), 0, 0, math.sin(theta)], (2, 2))
    epr_like = CriterionConfig(1.0, -1.0, 1.0, 1.0)
    moments = collect_moments(partially_entangled, PAULI_PAIRS)
    assert evaluate_criterion(CriterionId.SUM, moments, epr_like).violated
    assert evaluate_criterion(CriterionId.GENERAL_MEASURABLE, moments, epr_like).violated

    rng = np.random.default_rng(77)
    for seed in range(1000):
        dims = SUITE_DIMS[seed % 3]
        if seed % 2:
            rho = random_density_matrix(dims, seed, rank=1 + seed % 3)
        else:
            rho = ensemble_to_density(random_product_ensemble(dims, 2, seed))
        pairs = random_pairs(dims, rng)
        moments = collect_moments(rho, pairs)
        for _ in range(100):
            cfg = random_config(rng)
            total = evaluate_criterion(CriterionId.SUM, moments, cfg)
            product = evaluate_criterion(CriterionId.GENERAL_MEASURABLE, moments, cfg)
            if total.violated:
                assert product.lhs < product.bound
                assert product.margin > 0
            if seed % 2 == 0:
                # the comparison product bound sits below the ensemble bound on separable states
                assert not evaluate_criterion(CriterionId.PRL02_PRODUCT, moments, cfg).violated


def test_singlet_is_a_counterexample_to_the_measurable_reading_of_the_prl02_chain():
    moments = collect_moments(bell_state(BellState.PSI_MINUS), PAULI_PAIRS)
    assert evaluate_criterion(CriterionId.PRL02_PRODUCT, moments, ONES).violated
    assert not evaluate_criterion(CriterionId.GENERAL_MEASURABLE, moments, ONES).violated


@settings(deadline=None, max_examples=40)
@given(seed=st.integers(0, 2 ** 32 - 1), lam=st.floats(0.25, 4.0), mu=st.floats(0.25, 4.0))
def test_product_margins_scale_quadratically(seed, lam, mu):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix((2, 2), seed % 1000, rank=1)
    pairs = random_pairs((2, 2), rng)
    moments = collect_moments(rho, pairs)
    cfg = random_config(rng)
    for criterion_id in (CriterionId.GENERAL_MEASURABLE, CriterionId.PRL02_PRODUCT):
        base = evaluate_criterion(criterion_id, moments, cfg)
        scaled = evaluate_criterion(criterion_id, moments, cfg.scaled(lam, mu))
        factor = (lam * mu) ** 2
        assert scaled.margin == pytest.approx(factor * base.margin, rel=1e-9, abs=1e-9)
    base = evaluate_criterion(CriterionId.SUM, moments, cfg)
    scaled = evaluate_criterion(CriterionId.SUM, moments, cfg.scaled(lam, lam))
    assert scaled.margin == pytest.approx(lam * lam * base.margin, rel=1e-9, abs=1e-9)


def test_linear_family_at_unit_weights_matches_sum_criterion():
    rho = random_density_matrix((2, 2), seed=9, rank=1)
    cfg = CriterionConfig(1.0, -0.5, 0.7, 1.0)
    otilde = otilde_measurable(rho, PAULI_PAIRS, cfg)
    linear = linear_family_check(rho, PAULI_PAIRS, cfg, 1.0, 1.0, otilde)
    total = sum_criterion_check(rho, PAULI_PAIRS, cfg)
    assert linear.lhs == pytest.approx(total.lhs, abs=1e-12)
    assert linear.bound == pytest.approx(total.bound, abs=1e-12)
    assert linear.config['otilde_source'] == OtildeSource.MEASURABLE.value
    with pytest.raises(ValueError):
        linear_family_check(rho, PAULI_PAIRS, cfg, -1.0, 1.0, otilde)


@settings(deadline=None, max_examples=60)
@given(seed=st.integers(0, 2 ** 32 - 1), lam=st.floats(0.25, 4.0), mu=st.floats(0.25, 4.0),
       c=st.floats(0.25, 4.0), flip=st.booleans())
def test_linear_family_verdict_survives_rescaling(seed, lam, mu, c, flip):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix((2, 2), seed % 1000, rank=1)
    moments = collect_moments(rho, random_pairs((2, 2), rng))
    cfg = random_config(rng)
    alpha, beta = rng.uniform(0.1, 3.0, size=2)
    lam = -lam if flip else lam
    base = evaluate_criterion(CriterionId.LINEAR_FAMILY, moments, cfg, alpha=alpha, beta=beta)
    scaled = evaluate_criterion(CriterionId.LINEAR_FAMILY, moments, cfg.scaled(lam, mu),
                                alpha=alpha * c / lam ** 2, beta=beta * c / mu ** 2)
    assert scaled.margin == pytest.approx(c * base.margin, rel=1e-9, abs=1e-9)
    if abs(base.margin) > 1e-6:
        assert scaled.violated == base.violated


def test_linear_family_never_fires_on_separable_ensembles():
    rng = np.random.default_rng(5)
    for seed in range(200):
        ensemble = random_product_ensemble((2, 2), 3, seed)
        rho = ensemble_to_density(ensemble)
        pairs = random_pairs((2, 2), rng)
        cfg = random_config(rng)
        alpha, beta = rng.uniform(0.0, 3.0, size=2)
        verdict = linear_family_check(rho, pairs, cfg, alpha, beta, otilde_from_ensemble(ensemble, pairs, cfg))
        assert not verdict.violated


def test_stokes_check_is_the_unit_weight_sum_form():
    rho = computational_state(0, 0)
    verdict = stokes_check(rho, PAULI_PAIRS, 1, 1)
    assert verdict.criterion_id == CriterionId.LINEAR_FAMILY
    assert verdict.lhs == pytest.approx(4.0)
    assert verdict.bound == pytest.approx(4.0)
    assert not verdict.violated
    for p in (0.2, 0.5, 0.9):
        for signs in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            assert stokes_check(werner_state(p), PAULI_PAIRS, *signs).lhs >= 0
    with pytest.raises(ValueError):
        stokes_check(rho, PAULI_PAIRS, 2, 1)


def test_boundary_envelope_geometry():
    points = boundary_envelope(1.0, 64, 0.25, 4.0)
    assert len(points) == 64
    assert points[0].variance_u == pytest.approx(0.25)
    assert points[-1].variance_u == pytest.approx(4.0)
    for point in points:
        assert point.variance_u * point.variance_v == pytest.approx(1.0, abs=1e-12)
        # the tangent line alpha x + beta y = 2 sqrt(alpha beta) touches the hyperbola here
        alpha, beta = point.tangent_alpha_over_beta, 1.0
        touch = alpha * point.variance_u + beta * point.variance_v
        assert touch == pytest.approx(2 * math.sqrt(alpha * beta), rel=1e-12)


def test_boundary_envelope_satisfies_every_linear_bound():
    points = boundary_envelope(1.0, 64, 0.25, 4.0)
    alpha, beta = np.meshgrid(np.linspace(0.2, 10.0, 50), np.linspace(0.2, 10.0, 50))
    for point in points:
        slack = alpha * point.variance_u + beta * point.variance_v - 2 * np.sqrt(alpha * beta)
        assert slack.min() >= -1e-9
        ratio = point.tangent_alpha_over_beta
        assert ratio * point.variance_u + point.variance_v - 2 * math.sqrt(ratio) == pytest.approx(0.0, abs=1e-9)


def test_degenerate_envelope():
    points = boundary_envelope(0.0, 5, 1.0, 2.0)
    assert all(p.variance_v == 0.0 for p in points)
    with pytest.raises(ValueError):
        boundary_envelope(1.0, 5, 0.0, 2.0)
    with pytest.raises(ValueError):
        boundary_envelope(1.0, 5, 3.0, 2.0)
    with pytest.raises(ValueError):
        boundary_envelope(-1.0, 5, 1.0, 2.0)
    with pytest.raises(ValueError):
        boundary_envelope(1.0, 0, 1.0, 2.0)


def test_partition_curves_order():
    cfg = CriterionConfig(1.0, 0.5, 1.0, 1.0)
    partition = partition_curves(collect_moments(computational_state(0, 0), PAULI_PAIRS), cfg, 16, 0.5, 3.0)
    assert partition.general_bound == pytest.approx(2.25)
    assert partition.prl02_bound == pytest.approx(2.0)
    assert partition.sum_bound == pytest.approx(3.0)
    assert partition.state_point == pytest.approx((1.25, 2.0))
    for row in partition.rows:
        assert row.prl02 <= row.general
        assert row.sum_line == pytest.approx(3.0 - row.variance_u)
