"""The five-option outcome of a single pairwise comparison."""

from __future__ import annotations

import enum


class JudgmentScale(str, enum.Enum):
    """Outcome of comparing the first answer of a pair against the second."""

    FIRST_MUCH_BETTER = "first-much-better"
    FIRST_SLIGHTLY_BETTER = "first-slightly-better"
    TIE = "tie"
    SECOND_SLIGHTLY_BETTER = "second-slightly-better"
    SECOND_MUCH_BETTER = "second-much-better"

    def mirror(self) -> JudgmentScale:
        """The same judgment seen with the two answers swapped."""
        return _MIRROR[self]

    @property
    def label(self) -> str:
        """Option letter used in prompts (A..E)."""
        return _LABELS[self]

    @classmethod
    def from_label(cls, letter: str) -> JudgmentScale:
        return _BY_LABEL[letter.strip().upper()]


_MIRROR = {
    JudgmentScale.FIRST_MUCH_BETTER: JudgmentScale.SECOND_MUCH_BETTER,
    JudgmentScale.FIRST_SLIGHTLY_BETTER: JudgmentScale.SECOND_SLIGHTLY_BETTER,
    JudgmentScale.TIE: JudgmentScale.TIE,
    JudgmentScale.SECOND_SLIGHTLY_BETTER: JudgmentScale.FIRST_SLIGHTLY_BETTER,
    JudgmentScale.SECOND_MUCH_BETTER: JudgmentScale.FIRST_MUCH_BETTER,
}
_LABELS = dict(zip(JudgmentScale, "ABCDE"))
_BY_LABEL = {v: k for k, v in _LABELS.items()}
