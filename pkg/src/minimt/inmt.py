"""Interactive-predictive translation: sessions, character feedback,
prefix-constrained decoding, the simulated user and effort accounting.

The protocol is character-level: at each turn the user substitutes (or
appends) one character, the typed-so-far prefix becomes validated, and the
system re-decodes constrained to that prefix. A feedback with
``finish=True`` marks the prefix as the complete desired text and forces
the search to stop right after it; the end-of-text action (empty character
with ``finish=True``) truncates a too-long hypothesis. Both count as one
keystroke.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field

from . import decoding
from .corpus import EOS, tokenize
from .decoding import BeamConfig, CharPrefixConstraint, Hypothesis
from .errors import EmptyInputError, MinimtError, SessionError


@dataclass
class Feedback:
    """One user action: put `character` at `position` of the hypothesis."""

    position: int
    character: str
    finish: bool = False


@dataclass
class SessionState:
    """One live interactive session."""

    session_id: str
    source: str
    hypothesis: str
    validated_prefix: str = ""
    iteration: int = 0
    keystrokes: int = 0
    mouse_actions: int = 0
    closed: bool = False
    src_ids: list[int] = field(default_factory=list, repr=False)
    src_tokens: list[str] = field(default_factory=list, repr=False)
    last_position: int | None = field(default=None, repr=False)
    hyp: Hypothesis | None = field(default=None, repr=False)

    def effort(self) -> dict:
        return {
            "keystrokes": self.keystrokes,
            "mouse_actions": self.mouse_actions,
            "iterations": self.iteration,
        }


def render_hypothesis(hyp: Hypothesis, mt, src_tokens: list[str]) -> str:
    """Detokenized display text: BPE pieces joined, forced segments verbatim,
    unknown tokens resolved through the attention alignment."""
    marker = mt.trg_bpe_.marker if mt.trg_bpe_ is not None else None
    lexicon = getattr(mt, "lexicon_", None)
    resolved = decoding.replace_unknowns(hyp, src_tokens, mt.trg_vocab_, lexicon)
    parts: list[str] = []
    glue = True
    k = 0
    for t, tid in enumerate(hyp.ids):
        if tid == EOS:
            continue
        tok = resolved[k]
        k += 1
        if t in hyp.forced:
            parts.append(tok)  # verbatim, carries its own spacing
            glue = False
            continue
        cont = marker is not None and tok.endswith(marker)
        surface = tok[: -len(marker)] if cont else tok
        parts.append(surface if glue else " " + surface)
        glue = cont
    return "".join(parts)


def prefix_constrained_search(
    mt, src_ids, char_prefix: str, config: BeamConfig | None = None, finish_after_prefix: bool = False
) -> Hypothesis:
    """Best hypothesis whose detokenized text starts exactly with the prefix."""
    config = config or mt.beam_config()
    constraint = CharPrefixConstraint(
        char_prefix,
        mt.trg_vocab_,
        mt.trg_bpe_.marker if mt.trg_bpe_ is not None else None,
    )
    hyps = decoding.beam_search(
        mt.params_, src_ids, config, mt.attention,
        constraint=constraint, finish_after_prefix=finish_after_prefix,
    )
    return hyps[0]


def start_session(mt, source: str, config: BeamConfig | None = None, session_id: str | None = None) -> SessionState:
    """Open a session: translate unconstrained, all counters at zero."""
    if not source.strip():
        raise EmptyInputError("empty source sentence")
    mt.check_fitted()
    config = config or mt.beam_config()
    src_ids = mt.encode_source_text(source)
    hyp = decoding.beam_search(mt.params_, src_ids, config, mt.attention)[0]
    src_tokens = tokenize(source)
    return SessionState(
        session_id=session_id or secrets.token_hex(16),
        source=source,
        hypothesis=render_hypothesis(hyp, mt, src_tokens),
        src_ids=src_ids,
        src_tokens=src_tokens,
        hyp=hyp,
    )


def apply_feedback(state: SessionState, feedback: Feedback, mt, config: BeamConfig | None = None) -> SessionState:
    """Validate the corrected prefix and re-decode under it.

    Counting convention: one keystroke per feedback; one mouse action unless
    the corrected position directly follows the previous correction; the
    final acceptance is a separate mouse action.
    """
    if state.closed:
        raise SessionError("session %s is closed" % state.session_id)
    if not 0 <= feedback.position <= len(state.hypothesis):
        raise SessionError(
            "position %d out of range (hypothesis has %d characters)"
            % (feedback.position, len(state.hypothesis))
        )
    if len(feedback.character) > 1:
        raise SessionError("feedback carries a single character")
    if feedback.character == "" and not feedback.finish:
        raise SessionError("empty character is only valid as an end-of-text action")
    prefix = state.hypothesis[: feedback.position] + feedback.character
    config = config or mt.beam_config()
    hyp = prefix_constrained_search(mt, state.src_ids, prefix, config, finish_after_prefix=feedback.finish)
    text = render_hypothesis(hyp, mt, state.src_tokens)
    if not text.startswith(prefix):
        raise MinimtError(
            "constrained search violated the prefix: %r does not start with %r" % (text, prefix)
        )
    state.keystrokes += 1
    if state.last_position is None or feedback.position != state.last_position + 1:
        state.mouse_actions += 1
    state.last_position = feedback.position
    state.iteration += 1
    state.validated_prefix = prefix
    state.hypothesis = text
    state.hyp = hyp
    return state


def accept_session(state: SessionState, mt, learn: bool = False, ol_steps: int | None = None) -> str:
    """Close the session (one mouse action); optionally learn from the sample."""
    if state.closed:
        raise SessionError("session %s is already closed" % state.session_id)
    state.mouse_actions += 1
    state.closed = True
    if learn:
        mt.adapt(state.source, state.hypothesis, steps=ol_steps)
    return state.hypothesis


def first_difference(hypothesis: str, reference: str) -> int:
    """Index of the first differing character; len() when one is a prefix."""
    for i, (a, b) in enumerate(zip(hypothesis, reference)):
        if a != b:
            return i
    return min(len(hypothesis), len(reference))


def simulate_user(
    mt,
    source: str,
    reference: str,
    config: BeamConfig | None = None,
    learn: bool = False,
    ol_steps: int | None = None,
) -> tuple[dict, str]:
    """Interactive session with a simulated user typing toward `reference`.

    Each turn corrects the first wrong character (or appends the next one,
    or issues end-of-text when the hypothesis overshoots). Terminates in at
    most len(reference) iterations with the hypothesis equal to the
    reference, then accepts.
    """
    if not reference:
        raise EmptyInputError("empty reference")
    state = start_session(mt, source, config)
    while state.hypothesis != reference:
        i = first_difference(state.hypothesis, reference)
        if i >= len(reference):
            fb = Feedback(position=len(reference), character="", finish=True)
        else:
            fb = Feedback(position=i, character=reference[i], finish=(i + 1 == len(reference)))
        apply_feedback(state, fb, mt, config)
        if state.iteration > len(reference):
            raise MinimtError("simulation exceeded the iteration bound")
    final = accept_session(state, mt, learn=learn, ol_steps=ol_steps)
    report = {
        "keystrokes": state.keystrokes,
        "mouse_actions": state.mouse_actions,
        "ref_chars": len(reference),
        "iterations": state.iteration,
    }
    return report, final


def simulate_corpus(
    mt,
    sources: list[str],
    references: list[str],
    config: BeamConfig | None = None,
    learn: bool = False,
) -> dict:
    """Per-sentence effort reports plus the corpus KSMR aggregate."""
    from .metrics import ksmr

    if len(sources) != len(references):
        raise EmptyInputError("sources/references counts differ")
    sentences = []
    finals = []
    for src, ref in zip(sources, references):
        report, final = simulate_user(mt, src, ref, config, learn=learn)
        sentences.append(report)
        finals.append(final)
    return {"sentences": sentences, "ksmr": ksmr(sentences), "finals": finals}


def type_everything_baseline(references: list[str]) -> dict:
    """Reject-and-retype effort: |ref| keystrokes plus two mouse actions."""
    sentences = [
        {"keystrokes": len(r), "mouse_actions": 2, "ref_chars": len(r), "iterations": 1}
        for r in references
    ]
    from .metrics import ksmr

    return {"sentences": sentences, "ksmr": ksmr(sentences)}
