"""Pattern tables shared by the deterministic policy and the violation checkers.

The planner's reply templates and the checker's extractors are two sides of one
contract: proposals read "SR2l {robot} go {task} for you?" (the confirm prompt's
own odd template wording) or "None of the robots can {task}. Can you do that
...", recipe suggestions read "How about {A} or {B}?", and commitment claims
read "{R1|R2|you} will {phrase}". Keeping both sides in one module means a
template change cannot silently break detection.
"""
from __future__ import annotations

import re

from .observation import R1, R2, USER

PROPOSAL_RE = re.compile(r"SR2l (R1|R2) go (.+?) for you\?")
USER_PROPOSAL_RE = re.compile(r"None of the robots can (.+?)\. Can you do that")
SUGGESTION_RE = re.compile(r"How about (.+?)\?")
CLAIM_RE = re.compile(r"\b(R1|R2|you)\s+will\s+(.+?)(?=[.!?,;]|$)", re.IGNORECASE)

# claim phrases that retract or decline work are not commitments
_NON_COMMITMENT_PREFIXES = ("stop", "no longer", "not ", "wait", "be ")

_ARTICLES = {"the", "a", "an", "some", "please", "my", "that", "this"}


def normalize_label(text: str) -> str:
    words = re.sub(r"[^\w\s]", " ", text.lower()).split()
    kept = [w for w in words if w not in _ARTICLES]
    return " ".join(kept)


def labels_match(a: str, b: str) -> bool:
    """Tolerant equality for subtask labels (case, articles, containment)."""
    na, nb = normalize_label(a), normalize_label(b)
    if not na or not nb:
        return False
    return na == nb or na in nb or nb in na


def extract_proposals(text: str) -> list[tuple[str, str]]:
    """(agent, task) pairs the planner offered and is waiting on."""
    proposals = [(agent, task) for agent, task in PROPOSAL_RE.findall(text)]
    proposals.extend((USER, task) for task in USER_PROPOSAL_RE.findall(text))
    return proposals


def extract_suggestions(text: str) -> list[str]:
    names: list[str] = []
    for body in SUGGESTION_RE.findall(text):
        names.extend(part.strip() for part in body.split(" or ") if part.strip())
    return names


def extract_claims(text: str) -> list[tuple[str, str]]:
    """(agent, phrase) commitments stated in a planner reply."""
    claims = []
    for who, phrase in CLAIM_RE.findall(text):
        phrase = phrase.strip()
        if phrase.lower().startswith(_NON_COMMITMENT_PREFIXES):
            continue
        agent = {"r1": R1, "r2": R2, "you": USER}[who.lower()]
        claims.append((agent, phrase))
    return claims
