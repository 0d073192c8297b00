"""The closed eight-emotion label set with frozen indices."""

from __future__ import annotations

from enum import IntEnum


class EmotionLabel(IntEnum):
    NEUTRAL = 0
    HAPPY = 1
    SAD = 2
    SURPRISE = 3
    FEAR = 4
    DISGUST = 5
    ANGER = 6
    CONTEMPT = 7

    @property
    def label_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "EmotionLabel":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown emotion label {name!r}") from None


EMOTION_NAMES = [label.label_name for label in EmotionLabel]
NUM_CLASSES = len(EMOTION_NAMES)
