"""qeloop: closed-loop validation and refinement of QE artefacts.

Parse requirements, test cases, and BDD scenarios; reverse-generate
requirements from the derived artefacts; measure semantic alignment against
the originals; classify matches, recommend corrective actions, score a
five-dimension quality rubric; and iterate human-reviewable refinement
cycles until convergence, emitting auditable reports and an energy ledger.
"""

__version__ = "0.1.0"

from qeloop.artefacts import Artefact, ArtefactKind, Corpus, Origin
from qeloop.similarity import MatchCategory, Thresholds

__all__ = [
    "Artefact",
    "ArtefactKind",
    "Corpus",
    "MatchCategory",
    "Origin",
    "Thresholds",
    "__version__",
]
