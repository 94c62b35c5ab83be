"""Exception hierarchy shared across keyforge modules."""


class KeyforgeError(Exception):
    """Base class for every error raised by this package."""


class NetlistError(KeyforgeError):
    """Malformed or invalid netlist."""

    def __init__(self, message: str, net: str | None = None, line: int | None = None):
        self.net = net
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class BenchSyntaxError(NetlistError):
    pass


class UnknownGateKind(NetlistError):
    pass


class UndrivenNet(NetlistError):
    pass


class MultipleDrivers(NetlistError):
    pass


class CombinationalLoop(NetlistError):
    pass


class ArityMismatch(NetlistError):
    pass


class MissingInput(KeyforgeError):
    pass


class TooFewLocations(KeyforgeError):
    pass


class ForeignVariable(KeyforgeError):
    pass


class MalformedOutput(KeyforgeError):
    pass


class SpawnFailure(KeyforgeError):
    pass


class SolverError(KeyforgeError):
    pass


class SessionClosed(KeyforgeError):
    pass


class AttackTimeout(KeyforgeError):
    pass


class InvalidObfuscation(KeyforgeError):
    """No key satisfies every recorded DI: the locking is not functionally sound."""


class TooLarge(KeyforgeError):
    pass


class CorpusEmpty(KeyforgeError):
    pass


class NoBackend(KeyforgeError):
    pass


class EmptyInput(KeyforgeError):
    pass
