class MatrixFormatError(ValueError):
    """A matrix, label or key=value file does not follow the text format."""


class ShapeMismatchError(ValueError):
    """Operands disagree on rows, columns or code width."""


class SingularSystemError(ArithmeticError):
    """A normal-equation system could not be factorised."""


class TrainingDivergedError(ArithmeticError):
    """The network loss became non-finite."""


class GalleryLookupError(KeyError):
    """A gallery sample has no stored code in non-regenerated mode."""


class PhaseError(RuntimeError):
    """A protocol phase failed; carries where it happened."""

    def __init__(self, message: str, shuffle: int, phase: int, protocol: str):
        super().__init__(f"shuffle {shuffle}, phase {phase + 1}, {protocol}: {message}")
        self.shuffle = shuffle
        self.phase = phase
        self.protocol = protocol
