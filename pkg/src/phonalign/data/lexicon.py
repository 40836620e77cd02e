"""
Lexicon
=======

The 39-phoneme ARPAbet inventory (stress marks removed) and a fixed word table
standing in for dictionary lookup.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Tuple

from ..errors import ConfigError, UnknownWordError

PHONEMES: Tuple[str, ...] = (
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY",
    "F", "G", "HH", "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P",
    "R", "S", "SH", "T", "TH", "UH", "UW", "V", "W", "Y", "Z", "ZH",
)
PHONEME_INDEX: Dict[str, int] = {p: i for i, p in enumerate(PHONEMES)}

# Scripted prompts: single words chosen to cover the inventory.
DEFAULT_WORDS: Dict[str, str] = {
    "thrower": "TH R OW ER",
    "brower": "B R AW ER",
    "cat": "K AE T",
    "dog": "D AO G",
    "fish": "F IH SH",
    "bird": "B ER D",
    "house": "HH AW S",
    "chair": "CH EH R",
    "juice": "JH UW S",
    "shoe": "SH UW",
    "vase": "V EY S",
    "zoo": "Z UW",
    "measure": "M EH ZH ER",
    "thumb": "TH AH M",
    "these": "DH IY Z",
    "yellow": "Y EH L OW",
    "water": "W AO T ER",
    "ring": "R IH NG",
    "boy": "B OY",
    "kite": "K AY T",
    "book": "B UH K",
    "pencil": "P EH N S AH L",
    "garden": "G AA R D AH N",
    "rabbit": "R AE B AH T",
    "sun": "S AH N",
    "nose": "N OW Z",
    "leaf": "L IY F",
    "moon": "M UW N",
    "toy": "T OY",
    "apple": "AE P AH L",
    "window": "W IH N D OW",
    "jumping": "JH AH M P IH NG",
}


def to_ids(arpabet: str) -> Tuple[int, ...]:
    """'TH R OW ER' -> phoneme ids."""
    try:
        return tuple(PHONEME_INDEX[p] for p in arpabet.split())
    except KeyError as e:
        raise ConfigError(f"unknown phoneme {e.args[0]!r} in {arpabet!r}") from e


def to_symbols(ids: Iterable[int]) -> str:
    return " ".join(PHONEMES[i] for i in ids)


@dataclass(frozen=True)
class Lexicon:
    """Word -> phoneme ids over the 39-phoneme inventory."""
    words: Mapping[str, Tuple[int, ...]]

    def __post_init__(self):
        for word, ids in self.words.items():
            if not ids:
                raise ConfigError(f"lexicon word {word!r} has no phonemes")
            if any(not 0 <= i < len(PHONEMES) for i in ids):
                raise ConfigError(f"lexicon word {word!r} uses a phoneme id outside the inventory")

    @classmethod
    def from_arpabet(cls, table: Optional[Mapping[str, str]] = None) -> 'Lexicon':
        table = DEFAULT_WORDS if table is None else table
        return cls(words={word: to_ids(pron) for word, pron in table.items()})

    @property
    def vocab_size(self) -> int:
        return len(PHONEMES)

    def sorted_words(self) -> Tuple[str, ...]:
        return tuple(sorted(self.words))

    def __getitem__(self, word: str) -> Tuple[int, ...]:
        try:
            return self.words[word]
        except KeyError:
            raise UnknownWordError(f"word {word!r} is not in the lexicon") from None

    def __contains__(self, word: str) -> bool:
        return word in self.words
