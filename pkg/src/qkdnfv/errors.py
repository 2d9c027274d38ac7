"""Exception hierarchy.

Every error carries a short ``reason`` slug. The slug is what travels on the
wire inside a nack and what appears in scenario reports.
"""


class QkdNfvError(Exception):
    reason = "error"


class ConfigError(QkdNfvError):
    reason = "config-error"


# optical network

class NetworkError(QkdNfvError):
    reason = "network-error"


class UnknownPort(NetworkError):
    reason = "unknown-port"


class PortBusy(NetworkError):
    reason = "port-busy"


class CrossConnectNotFound(NetworkError):
    reason = "not-found"


class NoPath(NetworkError):
    reason = "no-path"


# QKD sessions and key stores

class SessionError(QkdNfvError):
    reason = "session-error"


class AliceBusy(SessionError):
    reason = "alice-busy"


class PathNotEstablished(SessionError):
    reason = "path-not-established"


class InvalidTransition(SessionError):
    reason = "invalid-transition"


class KeyStoreError(QkdNfvError):
    reason = "key-store-error"


class InsufficientKeyMaterial(KeyStoreError):
    reason = "insufficient-material"


class UnknownKeyId(KeyStoreError):
    reason = "unknown-key-id"


class KeyAlreadyConsumed(KeyStoreError):
    reason = "already-consumed"


# ciphers

class CryptoError(QkdNfvError):
    reason = "crypto-error"


class OtpKeyTooShort(CryptoError):
    reason = "otp-key-too-short"


class OtpLengthMismatch(CryptoError):
    reason = "otp-length-mismatch"


class IntegrityFailure(CryptoError):
    reason = "integrity-failure"


class MalformedPayload(CryptoError):
    reason = "malformed-payload"


# transfer workflow

class TransferError(QkdNfvError):
    reason = "transfer-error"


class TruncatedStream(TransferError):
    reason = "truncated-stream"


class ProtocolError(TransferError):
    reason = "protocol-error"


class CorruptImage(TransferError):
    reason = "corrupt-image"
