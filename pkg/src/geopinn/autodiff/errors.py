class DomainError(ArithmeticError):
    """An elementary operation was evaluated outside its domain."""


class ContextError(ValueError):
    """Nodes from different graphs were mixed, or a stale handle was used."""
