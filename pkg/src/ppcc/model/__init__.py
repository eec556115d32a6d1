"""Process models: Petri nets, unfolding, runs and the runs text."""

from dataclasses import dataclass

from ..errors import CapExceededError

from .petri import ActivityLabel, PetriNet, load_model, parse_model, replay
from .runs import DEFAULT_CAP, RunPO, complete_runs, linear_extensions
from .text import SENTINEL, SEPARATOR, Alphabet, RunsText, concatenate, relabel
from .unfolding import DEFAULT_MAX_EVENTS, BranchingPrefix, unfold

__all__ = [
    "ActivityLabel", "Alphabet", "BranchingPrefix", "ModelStats", "PetriNet", "RunPO",
    "RunsText", "SENTINEL", "SEPARATOR", "complete_runs", "concatenate", "linear_extensions",
    "load_model", "model_sequences", "parse_model", "relabel", "replay", "runs_text_from_net",
    "unfold",
]


@dataclass(frozen=True)
class ModelStats:
    events: int
    cutoffs: int
    runs: int
    linearizations: int


def model_sequences(net: PetriNet, cap: int = DEFAULT_CAP,
                    max_events: int = DEFAULT_MAX_EVENTS):
    """Distinct label sequences of all complete runs of ``net``.

    Runs come in prefix order (smaller first), each run's linearizations
    in lexicographic order; repeats are dropped. ``cap`` bounds the total.
    """
    prefix = unfold(net, max_events)
    runs = complete_runs(prefix)
    seqs: dict[tuple[str, ...], None] = {}
    for run in runs:
        seqs.update(dict.fromkeys(linear_extensions(run, cap)))
        if len(seqs) > cap:
            raise CapExceededError(f"model has more than {cap} linearizations")
    stats = ModelStats(len(prefix.events), len(prefix.cutoff_events), len(runs), len(seqs))
    return list(seqs), stats


def runs_text_from_net(net: PetriNet, cap: int = DEFAULT_CAP,
                       max_events: int = DEFAULT_MAX_EVENTS):
    """Unfold, linearize and concatenate: returns (RunsText, ModelStats)."""
    seqs, stats = model_sequences(net, cap, max_events)
    alphabet = Alphabet.from_labels(net.visible_labels())
    return concatenate(seqs, alphabet), stats
