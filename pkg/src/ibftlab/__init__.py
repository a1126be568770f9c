"""ibftlab: deterministic adversarial simulator for two PoA finalisation
protocol variants, with executable counterexamples and property monitors."""

from .chain import (
    Block,
    CANONICAL_SEAL_LENGTH,
    CommitSeal,
    FinalisedBlock,
    LedgerPosition,
    Transaction,
    hash_block,
    is_valid_block,
    is_valid_finalisation_proof,
    is_valid_finalised_block,
    make_genesis,
    recover,
    sign,
    validator_set,
)
from .quorum import check_lemma, max_byzantine, min_honest_overlap, quorum, quorum_opt
from .validator import IBFT, IBFT_M1, VARIANTS, NodeState, ProtocolVariant
from .network import World, stop_when_heights
from .schedule import Schedule, SimConfig, schedule_from_text, schedule_to_text

__version__ = "0.1.0"
