"""Locating the object mention inside a question.

When a dump does not carry explicit object token indices, the pipeline
falls back to a stop-word heuristic over the question tokens: take the
longest contiguous run of content tokens after the first wh-word (the
"name of this female butterfly" -> "female butterfly" pattern). Two stop
tiers are used: a wide run-breaking set, and a reduced set for the
fallback so that bare deictic questions ("Who is this?") still resolve to
their demonstrative instead of failing.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

from .errors import InvariantError

WH_WORDS = frozenset({
    "what", "which", "who", "whom", "whose", "where", "when", "why", "how",
})

_ARTICLES = {"a", "an", "the"}
_DEMONSTRATIVES = {"this", "that", "these", "those", "there", "here"}
_PRONOUNS = {
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us",
    "them", "its", "his", "hers", "their", "theirs", "my", "your", "our",
    "mine", "yours",
}
_AUX = {
    "is", "are", "was", "were", "am", "be", "been", "being", "do", "does",
    "did", "can", "could", "will", "would", "shall", "should", "may",
    "might", "must", "has", "have", "had",
}
_PREPOSITIONS = {
    "of", "in", "on", "at", "by", "for", "with", "from", "to", "into",
    "onto", "over", "under", "about", "between", "during", "through",
    "across", "near", "within", "without",
}
_CONJUNCTIONS = {
    "and", "or", "but", "nor", "so", "yet", "if", "as", "than", "because",
    "while",
}
# Boilerplate that heads "X of <object>" phrases or names the picture itself,
# plus verbs of depiction; none of these are ever the object we want.
_DESCRIPTOR_NOUNS = {"name", "kind", "type", "sort", "species", "breed"}
_PICTURE_WORDS = {
    "picture", "image", "photo", "photograph", "shown", "pictured",
    "depicted", "displayed", "seen", "visible",
}
_MISC = {"not", "no", "'s", "s"}

# Wide set: breaks content runs.
STOP_RUN = frozenset(
    WH_WORDS | _ARTICLES | _DEMONSTRATIVES | _PRONOUNS | _AUX
    | _PREPOSITIONS | _CONJUNCTIONS | _DESCRIPTOR_NOUNS | _PICTURE_WORDS
    | _MISC
)

# Reduced set for the fallback tier: demonstratives/pronouns and descriptor
# nouns become acceptable when nothing better exists.
STOP_CORE = frozenset(
    WH_WORDS | _ARTICLES | _AUX | _PREPOSITIONS | _CONJUNCTIONS | _MISC
    | _PICTURE_WORDS
)


@dataclass(frozen=True)
class FocusSpan:
    """Indices (into the question token list) of the focused mention."""

    token_indices: Tuple[int, ...]
    text: str
    tier: str  # "run" | "content" | "alpha"


def _norm(token):
    """Lowercase and trim BPE prefixes / surrounding punctuation."""
    t = token.strip().lstrip("Ġ▁").lower()  # 'Ġ' / '▁' markers
    start, end = 0, len(t)
    while start < end and not (t[start].isalnum() or t[start] == "'"):
        start += 1
    while end > start and not (t[end - 1].isalnum() or t[end - 1] == "'"):
        end -= 1
    return t[start:end] if start < end else t


def _is_word(norm):
    return any(c.isalpha() for c in norm)


def extract_focus(tokens: Sequence[str]) -> FocusSpan:
    """Pick the object mention from question tokens.

    Returns local token indices (offset by the question range start to get
    sequence positions). Raises InvariantError when the question is empty
    or has no alphabetic tokens at all.
    """
    tokens = list(tokens)
    if not tokens:
        raise InvariantError("question has no tokens")
    norms = [_norm(t) for t in tokens]

    start = 0
    for i, nt in enumerate(norms):
        if nt in WH_WORDS:
            start = i + 1
            break

    # Tier 1: longest contiguous run of content words after the wh-word.
    runs = []
    cur = []
    for i in range(start, len(tokens)):
        nt = norms[i]
        if _is_word(nt) and nt not in STOP_RUN:
            cur.append(i)
        else:
            if cur:
                runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    if runs:
        best = max(runs, key=len)  # max() keeps the earliest on ties
        return FocusSpan(tuple(best), " ".join(tokens[i].strip() for i in best),
                         "run")

    # Tier 2: any non-core-stop words anywhere in the question.
    content = [i for i, nt in enumerate(norms)
               if _is_word(nt) and nt not in STOP_CORE]
    if content:
        return FocusSpan(tuple(content),
                         " ".join(tokens[i].strip() for i in content), "content")

    # Tier 3: every alphabetic token.
    alpha = [i for i, nt in enumerate(norms) if _is_word(nt)]
    if alpha:
        return FocusSpan(tuple(alpha),
                         " ".join(tokens[i].strip() for i in alpha), "alpha")

    raise InvariantError("question has no alphabetic tokens")


def question_tokens(question):
    """Token strings of a QuestionInfo via its character offsets."""
    return [question.text[a:b] for a, b in question.token_offsets]


def focus_from_question(question) -> FocusSpan:
    """Run the heuristic on a dump's question block."""
    return extract_focus(question_tokens(question))
