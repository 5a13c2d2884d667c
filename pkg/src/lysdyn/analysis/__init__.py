"""Finite-horizon analyzers: pair verdicts, characteristic chains, hitting times."""
from .chains import (
    ChainRecord,
    Claim2Report,
    Claim3Result,
    JoinNotFound,
    JoinResult,
    chain_join,
    characteristic_chain,
    claim2_test,
    claim3_test,
    recheck_indices,
)
from .hitting import HittingRecord, hitting_times, longest_run, replay
from .pairs import (
    Bucket,
    DensityReport,
    PairVerdict,
    ScrambledResult,
    TransitiveCandidate,
    WitnessSearch,
    classify_pair,
    distal_density,
    lys_witness_search,
    net_coverage,
    scrambled_search,
    transitive_pair_candidate,
    verdict_from_distances,
)
