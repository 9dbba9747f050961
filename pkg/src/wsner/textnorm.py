"""Unicode helpers for tone-marked text.

Online Yorùbá frequently drops diacritics, so keyword and gazetteer matching
can be done on a diacritic-free, lowercased canonical form.
"""

import unicodedata


def strip_diacritics(text: str) -> str:
    """Remove combining marks (tone and under-dots) from *text*."""
    decomposed = unicodedata.normalize("NFD", text)
    return "".join(ch for ch in decomposed if not unicodedata.combining(ch))


def canonical(text: str) -> str:
    """Lowercased, diacritic-free comparison form."""
    return strip_diacritics(text).lower()


def visible_length(text: str) -> int:
    """Character count as a reader would see it (combining marks excluded)."""
    return len(unicodedata.normalize("NFC", strip_diacritics(text)))
