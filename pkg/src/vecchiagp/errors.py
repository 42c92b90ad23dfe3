"""Exception types shared across the package."""


class VecchiaGPError(Exception):
    """Base class for all package-specific errors."""


class NonPositiveDefiniteError(VecchiaGPError):
    """A (batched) Cholesky factorization hit a non-positive pivot.

    ``batch_index`` identifies the offending matrix within its batch
    (0 for single-matrix operations).
    """

    def __init__(self, batch_index: int, detail: str = ""):
        self.batch_index = batch_index
        msg = f"matrix {batch_index} is not positive definite"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class SingularTriangularError(VecchiaGPError):
    """A triangular solve met a zero diagonal element."""

    def __init__(self, batch_index: int):
        self.batch_index = batch_index
        super().__init__(f"triangular matrix {batch_index} has a zero diagonal element")


class LikelihoodEvaluationError(VecchiaGPError):
    """A likelihood evaluation failed at one conditioning block.

    Raised when a conditioning matrix is not positive definite or a
    conditional variance comes out non-positive.  ``block_index`` is the
    index of the failing batch entry; callers typically treat the
    parameter point as infeasible.
    """

    def __init__(self, block_index: int, detail: str = ""):
        self.block_index = block_index
        msg = f"likelihood evaluation failed at block {block_index}"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class EstimationError(VecchiaGPError):
    """Parameter estimation could not proceed (e.g. no feasible start)."""
