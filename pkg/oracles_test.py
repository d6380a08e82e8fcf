import numpy as np
import pytest

from criteria import CriterionId, make_verdict
from operators import preset_pairs
from oracles import (
    ConsistencyAudit,
    PPTVerdict,
    SoundnessError,
    StateAudit,
    campaign_states,
    consistency_audit,
    matched_preset_pairs,
    ppt_check,
    run_campaign,
    werner_threshold,
)
from search import SearchConfig
from states import (
    BellState,
    CriterionConfig,
    bell_state,
    computational_state,
    ensemble_to_density,
    maximally_mixed,
    random_density_matrix,
    random_product_ensemble,
    werner_state,
)

PAULI_XY = preset_pairs(2)['xy']
PAULI_PAIRS = (PAULI_XY, PAULI_XY)
ONES = CriterionConfig(1.0, 1.0, 1.0, 1.0)


def test_werner_oracle_values():
    npt = ppt_check(werner_state(0.5))
    assert npt.verdict == PPTVerdict.NPT
    assert npt.min_eigenvalue == pytest.approx(-0.125, abs=1e-12)
    assert npt.exact
    ppt = ppt_check(werner_state(0.25))
    assert ppt.verdict == PPTVerdict.PPT
    assert ppt.min_eigenvalue == pytest.approx(0.0625, abs=1e-12)


def test_singlet_partial_transpose_minimum():
    assert ppt_check(bell_state(BellState.PSI_MINUS)).min_eigenvalue == pytest.approx(-0.5, abs=1e-12)


def test_werner_threshold_is_one_third():
    assert werner_threshold() == pytest.approx(1 / 3, abs=1e-9)


@pytest.mark.parametrize("dims", [(2, 2), (2, 3), (3, 3)])
def test_oracle_does_not_depend_on_transposed_slot(dims):
    for seed in range(20):
        rho = random_density_matrix(dims, seed, rank=1 + seed % 3)
        assert ppt_check(rho, 1).min_eigenvalue == pytest.approx(ppt_check(rho, 2).min_eigenvalue, abs=1e-10)


def test_exactness_flag():
    assert not ppt_check(maximally_mixed((3, 3))).exact
    assert ppt_check(maximally_mixed((3, 2))).exact


def test_separable_ensembles_are_ppt():
    for seed in range(100):
        dims = [(2, 2), (2, 3), (3, 3)][seed % 3]
        rho = ensemble_to_density(random_product_ensemble(dims, 1 + seed % 5, seed))
        assert ppt_check(rho).verdict == PPTVerdict.PPT


def test_empty_audit():
    report = consistency_audit([], [ONES], [PAULI_PAIRS]).report()
    assert report['passed']
    assert report['states'] == 0
    assert report['criteria'] == {}
    assert report['failures'] == []


def test_singlet_audit_is_consistent():
    audit = consistency_audit([bell_state(BellState.PSI_MINUS)], [ONES], [PAULI_PAIRS])
    report = audit.report()
    assert report['passed']
    assert report['npt_states'] == 1
    prl02 = report['criteria']['prl02_product']
    assert prl02 == {'checked': 1, 'violated': 1, 'sound': 1, 'hit_rate': 1.0}
    assert report['criteria']['general_measurable']['violated'] == 0
    assert "PASSED" in audit.text_report()


def test_separable_ensembles_raise_no_flags():
    states = [ensemble_to_density(random_product_ensemble((2, 2), 1 + seed % 4, seed)) for seed in range(100)]
    configs = [ONES, CriterionConfig(1.0, -1.0, 1.0, 1.0), CriterionConfig(0.3, -0.8, 1.0, 0.2)]
    report = consistency_audit(states, configs, matched_preset_pairs((2, 2))).report()
    assert report['passed']
    assert report['npt_states'] == 0
    assert all(counts['violated'] == 0 for counts in report['criteria'].values())


def test_audit_with_search_counts_every_verdict():
    states = [random_density_matrix((2, 2), seed, rank=1 + seed % 4) for seed in range(10)]
    report = consistency_audit(states, [ONES], matched_preset_pairs((2, 2)), SearchConfig(8, 1, 0)).report()
    assert report["passed"]
    assert report["criteria"]["prl02_product"]["checked"] == 10 * 3 * 2


@pytest.mark.slow
@pytest.mark.parametrize("dims", [(2, 2), (2, 3)])
def test_audit_with_search_is_sound_on_random_states(dims):
    rank_cycle = dims[0] * dims[1]
    states = [random_density_matrix(dims, seed, rank=1 + seed % rank_cycle) for seed in range(1000)]
    configs = [ONES, CriterionConfig(1.0, -1.0, 1.0, 1.0)]
    report = consistency_audit(states, configs, matched_preset_pairs(dims), SearchConfig(8, 1, 0), workers=4).report()
    assert report["passed"]
    assert report["failures"] == []
    assert report["states"] == 1000
    assert report["npt_states"] > 0


def _fake_violation():
    return make_verdict(CriterionId.SUM, 0.0, 1.0, {'a1': 1.0})


def test_violation_on_ppt_state_is_a_soundness_failure():
    rho = computational_state(0, 0)
    state_audit = StateAudit(0, ppt_check(rho), [(_fake_violation(), 0)])
    with pytest.raises(SoundnessError) as excinfo:
        ConsistencyAudit(strict=True).record(state_audit, rho, [PAULI_PAIRS])
    assert set(excinfo.value.dump) == {'state_index', 'state', 'observables', 'verdict', 'oracle'}

    lenient = ConsistencyAudit(strict=False)
    lenient.record(state_audit, rho, [PAULI_PAIRS])
    assert not lenient.passed
    assert len(lenient.report()['failures']) == 1
    assert "FAILED" in lenient.text_report()


def test_violation_on_ppt_state_outside_exact_dims_is_inconclusive():
    rho = maximally_mixed((3, 3))
    pairs = matched_preset_pairs((3, 3))
    audit = ConsistencyAudit(strict=True)
    audit.record(StateAudit(0, ppt_check(rho), [(_fake_violation(), 0)]), rho, pairs)
    assert audit.passed
    assert audit.report()['inconclusive'] == 1


def test_campaign_is_deterministic_and_sound():
    first = run_campaign((2, 2), 24, seed=42, grid=4, refine=0).report()
    second = run_campaign((2, 2), 24, seed=42, grid=4, refine=0).report()
    assert first == second
    assert first['passed']
    assert first['states'] == 24
    assert first['npt_states'] > 0


def test_campaign_in_two_by_three():
    report = run_campaign((2, 3), 20, seed=7, grid=4, refine=1).report()
    assert report['passed']


def test_parallel_audit_matches_serial():
    states = campaign_states((2, 2), 12, seed=3)
    pairs = matched_preset_pairs((2, 2))
    serial = consistency_audit(states, [ONES], pairs, workers=1).report()
    parallel = consistency_audit(states, [ONES], pairs, workers=4).report()
    assert serial == parallel


def test_campaign_states_alternate_separable_and_random():
    states = campaign_states((2, 2), 8, seed=1)
    assert len(states) == 8
    for rho in states[::2]:
        assert ppt_check(rho).verdict == PPTVerdict.PPT
    assert np.trace(states[1].entries @ states[1].entries).real == pytest.approx(1.0, abs=1e-12)
