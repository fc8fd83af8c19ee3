class HandshakeError(Exception):
    pass


class MalformedMessage(HandshakeError, ValueError):
    pass


class NoProposalChosen(HandshakeError):
    pass


class UnexpectedExchange(HandshakeError):
    pass


class StaleMessageId(HandshakeError):
    pass


class KemFailure(HandshakeError):
    pass


class AuthFailure(HandshakeError):
    pass
