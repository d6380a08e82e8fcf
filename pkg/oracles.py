"""Exact entanglement deciders and the soundness audit that cross-checks every criterion against them."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from criteria import (
    MEASURABLE_CRITERIA,
    CriterionId,
    CriterionVerdict,
    VIOLATION_TOLERANCE,
    collect_moments,
    evaluate_criterion,
)
from gaussian import CV_CHECKS, CVConfig, GaussianState, simon_ppt_oracle
from operators import ObservablePair, pairs_to_json, preset_pairs
from search import SearchConfig, optimize_violation
from states import (
    CriterionConfig,
    DensityMatrix,
    ensemble_to_density,
    partial_transpose,
    random_density_matrix,
    random_product_ensemble,
    werner_state,
)

logger = logging.getLogger(__name__)

NPT_TOLERANCE = 1e-9
# dims where a positive partial transpose implies separability
EXACT_DIMS = {(2, 2), (2, 3), (3, 2)}

Pairs = Tuple[ObservablePair, ObservablePair]


class SoundnessError(RuntimeError):
    """A criterion flagged a state the exact oracle calls separable."""

    def __init__(self, message: str, dump: Dict[str, Any]):
        super().__init__(message)
        self.dump = dump


class PPTVerdict(str, Enum):
    PPT = 'PPT'
    NPT = 'NPT'


@dataclass(frozen=True)
class OracleVerdict:
    verdict: PPTVerdict
    min_eigenvalue: float
    exact: bool

    @property
    def entangled(self) -> bool:
        return self.verdict == PPTVerdict.NPT

    def to_dict(self) -> Dict[str, Any]:
        return {'verdict': self.verdict.value, 'min_eigenvalue': self.min_eigenvalue, 'exact': self.exact}


def ppt_check(rho: DensityMatrix, slot: int = 2, tol: float = NPT_TOLERANCE) -> OracleVerdict:
    """NPT certifies entanglement in any dims; PPT certifies separability only where `exact` is set."""
    smallest = float(linalg.eigvalsh(partial_transpose(rho, slot))[0])
    verdict = PPTVerdict.NPT if smallest < -tol else PPTVerdict.PPT
    return OracleVerdict(verdict, smallest, rho.dims in EXACT_DIMS)


def werner_threshold(tol: float = 1e-12) -> float:
    """Bisect the Werner mixing parameter at which the partial transpose first loses positivity."""
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if ppt_check(werner_state(mid), tol=0.0).entangled:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2


@dataclass
class CriterionTally:
    checked: int = 0
    violated: int = 0
    sound: int = 0
    hits: int = 0

    def to_dict(self, npt_states: int) -> Dict[str, Any]:
        return {
            'checked': self.checked,
            'violated': self.violated,
            'sound': self.sound,
            'hit_rate': self.hits / npt_states if npt_states else 0.0,
        }


@dataclass
class StateAudit:
    """Everything one state contributes to the report; built independently per state."""

    index: int
    oracle: OracleVerdict
    verdicts: List[Tuple[CriterionVerdict, int]] = field(default_factory=list)


def _audit_state(index: int, rho: DensityMatrix, configs: Sequence[CriterionConfig], pairs_list: Sequence[Pairs],
                 search: Optional[SearchConfig], tol: float) -> StateAudit:
    audit = StateAudit(index, ppt_check(rho))
    for pairs_index, pairs in enumerate(pairs_list):
        moments = collect_moments(rho, pairs)
        for cfg in configs:
            # raises ConsistencyError if the moments are corrupted
            evaluate_criterion(CriterionId.HEISENBERG, moments, cfg, tol)
            for criterion_id in MEASURABLE_CRITERIA:
                audit.verdicts.append((evaluate_criterion(criterion_id, moments, cfg, tol), pairs_index))
        if search is not None:
            for criterion_id in MEASURABLE_CRITERIA:
                sc = SearchConfig(search.grid_resolution, search.refine_iters, search.seed, criterion_id)
                audit.verdicts.append((optimize_violation(rho, pairs, sc, tol).verdict, pairs_index))
    return audit


class ConsistencyAudit:
    """Collects criterion verdicts against the PPT oracle and reports hit rates and failures."""

    def __init__(self, strict: bool = True):
        self.strict = strict
        self.failures: List[Dict[str, Any]] = []
        self.inconclusive: List[Dict[str, Any]] = []
        self.tallies: Dict[CriterionId, CriterionTally] = {}
        self.n_states = 0
        self.npt_states = 0
        self.cv_states = 0

    def _tally(self, criterion_id: CriterionId) -> CriterionTally:
        return self.tallies.setdefault(criterion_id, CriterionTally())

    def _fail(self, message: str, dump: Dict[str, Any]):
        logger.warning(message)
        self.failures.append(dump)
        if self.strict:
            raise SoundnessError(message, dump)

    def record(self, state_audit: StateAudit, rho: DensityMatrix, pairs_list: Sequence[Pairs]):
        self.n_states += 1
        oracle = state_audit.oracle
        if oracle.entangled:
            self.npt_states += 1
        hit = set()
        for verdict, pairs_index in state_audit.verdicts:
            tally = self._tally(verdict.criterion_id)
            tally.checked += 1
            if not verdict.violated:
                continue
            tally.violated += 1
            if oracle.entangled:
                tally.sound += 1
                hit.add(verdict.criterion_id)
                continue
            dump = {
                'state_index': state_audit.index,
                'state': rho.to_dict(),
                'observables': pairs_to_json(pairs_list[pairs_index]),
                'verdict': verdict.to_dict(),
                'oracle': oracle.to_dict(),
            }
            if oracle.exact:
                self._fail(f"Criterion '{verdict.criterion_id.value}' flagged PPT state {state_audit.index} "
                           f"(margin {verdict.margin:.3e})", dump)
            else:
                # PPT is not conclusive outside the exact dims
                self.inconclusive.append(dump)
        for criterion_id in hit:
            self._tally(criterion_id).hits += 1
        logger.debug(f"State {state_audit.index}: {oracle.verdict.value}, flagged by {sorted(c.value for c in hit)}")

    def audit_gaussian(self, gs: GaussianState, configs: Sequence[CVConfig], tol: float = VIOLATION_TOLERANCE):
        """CV criteria may only fire on states the symplectic oracle calls entangled."""
        self.cv_states += 1
        oracle = simon_ppt_oracle(gs)
        for cfg in configs:
            for criterion_id, check in CV_CHECKS.items():
                verdict = check(gs, cfg, tol)
                tally = self._tally(criterion_id)
                tally.checked += 1
                if not verdict.violated:
                    continue
                tally.violated += 1
                if oracle.entangled:
                    tally.sound += 1
                else:
                    self._fail(f"Criterion '{criterion_id.value}' flagged a Gaussian state with "
                               f"symplectic eigenvalue {oracle.nu:.6g}",
                               {'state': gs.to_dict(), 'verdict': verdict.to_dict(), 'oracle': oracle.to_dict()})

    @property
    def passed(self) -> bool:
        return not self.failures

    def report(self) -> Dict[str, Any]:
        return {
            'passed': self.passed,
            'states': self.n_states,
            'npt_states': self.npt_states,
            'gaussian_states': self.cv_states,
            'criteria': {cid.value: tally.to_dict(self.npt_states)
                         for cid, tally in sorted(self.tallies.items(), key=lambda item: item[0].value)},
            'failures': self.failures,
            'inconclusive': len(self.inconclusive),
        }

    def text_report(self) -> str:
        result = self.report()
        lines = ["CONSISTENCY AUDIT", "=" * 50, ""]
        lines.append("PASSED" if result['passed'] else f"FAILED ({len(result['failures'])} soundness failures)")
        lines.append(f"States: {result['states']} ({result['npt_states']} NPT), "
                     f"Gaussian states: {result['gaussian_states']}")
        lines.append("")
        for name, counts in result['criteria'].items():
            lines.append(f"  {name:<20} checked={counts['checked']:<8} violated={counts['violated']:<8} "
                         f"hit_rate={counts['hit_rate']:.3f}")
        if result['inconclusive']:
            lines.append("")
            lines.append(f"Inconclusive (violation on PPT state outside exact dims): {result['inconclusive']}")
        return "\n".join(lines) + "\n"


def consistency_audit(states: Sequence[DensityMatrix], configs: Sequence[CriterionConfig],
                      pairs_list: Sequence[Pairs], search: Optional[SearchConfig] = None,
                      strict: bool = True, workers: int = 1,
                      tol: float = VIOLATION_TOLERANCE) -> ConsistencyAudit:
    """Evaluate every criterion on every state and check each violation against the PPT oracle.

    States are evaluated concurrently when `workers > 1`; results are merged in
    input order, so the report and the first failure raised are deterministic.
    """
    audit = ConsistencyAudit(strict=strict)
    if workers > 1 and len(states) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda item: _audit_state(item[0], item[1], configs, pairs_list, search, tol), enumerate(states)))
    else:
        results = [_audit_state(i, rho, configs, pairs_list, search, tol) for i, rho in enumerate(states)]
    for state_audit, rho in zip(results, states):
        audit.record(state_audit, rho, pairs_list)
    return audit


def matched_preset_pairs(dims: Tuple[int, int]) -> List[Pairs]:
    first, second = preset_pairs(dims[0]), preset_pairs(dims[1])
    return [(first[key], second[key]) for key in sorted(first)]


def campaign_states(dims: Tuple[int, int], n_states: int, seed: int) -> List[DensityMatrix]:
    """Alternate separable ensembles with random density matrices (pure and full rank in turn)."""
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2 ** 32, size=n_states)
    states = []
    for i, state_seed in enumerate(seeds):
        state_seed = int(state_seed)
        if i % 2 == 0:
            k = 1 + state_seed % 4
            states.append(ensemble_to_density(random_product_ensemble(dims, k, state_seed)))
        else:
            rank = 1 if i % 4 == 1 else None
            states.append(random_density_matrix(dims, state_seed, rank))
    return states


def campaign_configs(n_random: int, seed: int) -> List[CriterionConfig]:
    configs = [CriterionConfig(1.0, 1.0, 1.0, 1.0), CriterionConfig(1.0, -1.0, 1.0, 1.0)]
    rng = np.random.default_rng(seed)
    for a1, a2, b1, b2 in rng.uniform(-1.0, 1.0, size=(n_random, 4)):
        configs.append(CriterionConfig(a1, a2, b1, b2))
    return configs


def run_campaign(dims: Tuple[int, int], n_states: int, seed: int, grid: int = 8, refine: int = 1,
                 search: bool = True, workers: int = 1, n_configs: int = 4, strict: bool = True,
                 tol: float = VIOLATION_TOLERANCE) -> ConsistencyAudit:
    logger.info(f"Validation campaign: dims={dims} n={n_states} seed={seed} search={search}")
    states = campaign_states(dims, n_states, seed)
    configs = campaign_configs(n_configs, seed + 1)
    search_config = SearchConfig(grid, refine, seed) if search else None
    return consistency_audit(states, configs, matched_preset_pairs(dims), search_config,
                             strict=strict, workers=workers, tol=tol)
